use serde::{Deserialize, Serialize};

use super::DataError;

/// Thresholds for keeping a bioassay: strictly more than `min_labeled`
/// molecules labeled active or inactive, and at least `min_per_class` of each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssayFilter {
    pub min_labeled: usize,
    pub min_per_class: usize,
}

impl Default for AssayFilter {
    fn default() -> Self {
        AssayFilter {
            min_labeled: 6000,
            min_per_class: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssayDecision {
    pub keep: bool,
    pub actives: usize,
    pub inactives: usize,
    /// 1 for "Active", 0 for "Inactive", NaN for anything else.
    pub values: Vec<f64>,
}

pub fn pcba_assay_filter(raw: &[&str], filter: AssayFilter) -> AssayDecision {
    let values: Vec<f64> = raw
        .iter()
        .map(|s| match s.trim() {
            "Active" => 1.0,
            "Inactive" => 0.0,
            _ => f64::NAN,
        })
        .collect();
    let actives = values.iter().filter(|&&v| v == 1.0).count();
    let inactives = values.iter().filter(|&&v| v == 0.0).count();
    AssayDecision {
        keep: actives + inactives > filter.min_labeled
            && actives >= filter.min_per_class
            && inactives >= filter.min_per_class,
        actives,
        inactives,
        values,
    }
}

/// Index of the replicate signature with the largest variance over its
/// entries; ties go to the first.
pub fn l1000_select_signature(replicates: &[Vec<f64>]) -> Result<usize, DataError> {
    let width = replicates
        .first()
        .map(Vec::len)
        .ok_or_else(|| DataError::Schema("no replicate signatures".into()))?;
    if width == 0 || replicates.iter().any(|r| r.len() != width) {
        return Err(DataError::Schema("replicate signatures differ in length".into()));
    }
    let variance = |r: &[f64]| {
        let mean = r.iter().sum::<f64>() / width as f64;
        r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64
    };
    let mut best = 0;
    let mut best_var = variance(&replicates[0]);
    for (i, r) in replicates.iter().enumerate().skip(1) {
        let v = variance(r);
        if v > best_var {
            best = i;
            best_var = v;
        }
    }
    Ok(best)
}
