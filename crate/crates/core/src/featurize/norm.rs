use serde::{Deserialize, Serialize};

use crate::datapipe::Split;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NormKind {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "min-max")]
    MinMax,
    #[serde(rename = "z-score")]
    ZScore,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NormError {
    #[error("label `{0}` has zero variance on the training split")]
    ZeroVariance(String),
    #[error("label `{0}` has min = max on the training split")]
    EmptyRange(String),
    #[error("expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
}

/// Normalization of one label: `(min, max)` for min-max, `(mean, std)` for
/// z-score, empty for none. Parameters are in label units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelNorm {
    pub name: String,
    pub kind: NormKind,
    pub params: Vec<f64>,
}

impl LabelNorm {
    pub fn identity(name: impl Into<String>) -> Self {
        LabelNorm {
            name: name.into(),
            kind: NormKind::None,
            params: Vec::new(),
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self.kind {
            NormKind::None => x,
            NormKind::MinMax => (x - self.params[0]) / (self.params[1] - self.params[0]),
            NormKind::ZScore => (x - self.params[0]) / self.params[1],
        }
    }

    pub fn invert(&self, y: f64) -> f64 {
        match self.kind {
            NormKind::None => y,
            NormKind::MinMax => y * (self.params[1] - self.params[0]) + self.params[0],
            NormKind::ZScore => y * self.params[1] + self.params[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormStats {
    pub labels: Vec<LabelNorm>,
}

/// Fits per-label statistics from the training rows of a row-major
/// `[rows × labels]` table with NaN for missing entries. Non-training rows
/// are never read. Labels without any training value fall back to `none`.
///
/// The z-score uses the population standard deviation.
pub fn fit_norm(
    names: &[String],
    kinds: &[NormKind],
    values: &[f64],
    splits: &[Split],
) -> Result<NormStats, NormError> {
    let width = names.len();
    if kinds.len() != width {
        return Err(NormError::Shape {
            expected: width,
            got: kinds.len(),
        });
    }
    if values.len() != splits.len() * width {
        return Err(NormError::Shape {
            expected: splits.len() * width,
            got: values.len(),
        });
    }
    let mut labels = Vec::with_capacity(width);
    for (j, (name, &kind)) in names.iter().zip(kinds).enumerate() {
        let column: Vec<f64> = splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == Split::Train)
            .map(|(r, _)| values[r * width + j])
            .filter(|v| !v.is_nan())
            .collect();
        if kind != NormKind::None && column.is_empty() {
            log::warn!("label `{name}` has no training values; normalization disabled");
            labels.push(LabelNorm::identity(name.clone()));
            continue;
        }
        let params = match kind {
            NormKind::None => Vec::new(),
            NormKind::MinMax => {
                let min = column.iter().copied().fold(f64::INFINITY, f64::min);
                let max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if max <= min {
                    return Err(NormError::EmptyRange(name.clone()));
                }
                vec![min, max]
            }
            NormKind::ZScore => {
                let n = column.len() as f64;
                let mean = column.iter().sum::<f64>() / n;
                let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let std = var.sqrt();
                if std <= 0.0 {
                    return Err(NormError::ZeroVariance(name.clone()));
                }
                vec![mean, std]
            }
        };
        labels.push(LabelNorm {
            name: name.clone(),
            kind,
            params,
        });
    }
    Ok(NormStats { labels })
}

fn map_table(values: &mut [f64], stats: &NormStats, f: impl Fn(&LabelNorm, f64) -> f64) {
    let width = stats.labels.len();
    if width == 0 {
        return;
    }
    for row in values.chunks_mut(width) {
        for (v, norm) in row.iter_mut().zip(&stats.labels) {
            if !v.is_nan() {
                *v = f(norm, *v);
            }
        }
    }
}

/// Normalizes a row-major `[rows × labels]` table in place; NaN passes through.
pub fn apply_norm(values: &mut [f64], stats: &NormStats) {
    map_table(values, stats, LabelNorm::apply);
}

pub fn invert_norm(values: &mut [f64], stats: &NormStats) {
    map_table(values, stats, LabelNorm::invert);
}
