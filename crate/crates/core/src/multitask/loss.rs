use serde::{Deserialize, Serialize};

use crate::tensorcore::{Tape, Tensor, TensorError, Var};

/// Clamp applied to probabilities inside log terms of BCE and CE.
pub const BCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("prediction has {pred} entries but targets have {targets}")]
    Shape { pred: usize, targets: usize },
    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: f64, classes: usize },
    #[error("hybrid loss needs C ≥ 2 and 0 ≤ α ≤ 1 (got C = {classes}, α = {alpha})")]
    InvalidHybrid { classes: usize, alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mae,
    Bce,
}

/// Targets in row-major order with NaN marking missing entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedTargets {
    pub values: Vec<f64>,
}

impl MaskedTargets {
    pub fn new(values: Vec<f64>) -> Self {
        MaskedTargets { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    fn filled(&self) -> Vec<f64> {
        self.values.iter().map(|&v| if v.is_nan() { 0.0 } else { v }).collect()
    }

    fn weights(&self) -> Vec<f64> {
        self.values.iter().map(|v| if v.is_nan() { 0.0 } else { 1.0 }).collect()
    }
}

/// Zero-weights missing entries, mean-reduces over all `n` entries and
/// rescales by `n / (n − N_nan)`; `None` when every entry is missing.
fn masked_mean(tape: &mut Tape<f64>, per_element: Var, targets: &MaskedTargets) -> Result<Option<Var>, LossError> {
    let n = targets.len();
    let missing = targets.num_missing();
    if missing == n {
        return Ok(None);
    }
    let w = tape.constant(Tensor::vector(targets.weights()));
    let weighted = tape.mul(per_element, w)?;
    let mean = tape.reduce_mean(weighted, None)?;
    Ok(Some(tape.affine(mean, n as f64 / (n - missing) as f64, 0.0)))
}

fn flat(tape: &mut Tape<f64>, pred: Var, targets: &MaskedTargets) -> Result<Var, LossError> {
    let numel = tape.value(pred).numel();
    if numel != targets.len() {
        return Err(LossError::Shape {
            pred: numel,
            targets: targets.len(),
        });
    }
    Ok(tape.reshape(pred, vec![numel])?)
}

/// Masked mean loss. For [`LossKind::Bce`], `pred` holds probabilities that
/// are clamped into `[ε, 1 − ε]` before the logarithm.
pub fn masked_loss(
    tape: &mut Tape<f64>,
    pred: Var,
    targets: &MaskedTargets,
    kind: LossKind,
) -> Result<Option<Var>, LossError> {
    let p = flat(tape, pred, targets)?;
    let y = tape.constant(Tensor::vector(targets.filled()));
    let per = match kind {
        LossKind::Mae => {
            let d = tape.sub(p, y)?;
            tape.abs(d)
        }
        LossKind::Bce => {
            // −[y·log p + (1 − y)·log(1 − p)]
            let one_minus_y = tape.affine(y, -1.0, 1.0);
            let pc = tape.clamp_straight_through(p, BCE_EPS, 1.0 - BCE_EPS);
            let log_p = tape.log(pc);
            let q = tape.affine(p, -1.0, 1.0);
            let qc = tape.clamp_straight_through(q, BCE_EPS, 1.0 - BCE_EPS);
            let log_q = tape.log(qc);
            let a = tape.mul(log_p, y)?;
            let b = tape.mul(log_q, one_minus_y)?;
            let s = tape.add(a, b)?;
            tape.neg(s)
        }
    };
    masked_mean(tape, per, targets)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridConfig {
    pub classes: usize,
    pub alpha: f64,
}

impl HybridConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if self.classes < 2 || !(0.0..=1.0).contains(&self.alpha) {
            return Err(LossError::InvalidHybrid {
                classes: self.classes,
                alpha: self.alpha,
            });
        }
        Ok(())
    }
}

fn check_class(y: f64, classes: usize) -> Result<(), LossError> {
    if y.is_nan() || (y >= 0.0 && y.fract() == 0.0 && (y as usize) < classes) {
        Ok(())
    } else {
        Err(LossError::ClassOutOfRange { index: y, classes })
    }
}

/// Hybrid ranked-classification loss over rows of class probabilities
/// `probs: [N × C]` with class-index targets (NaN = missing):
/// `α·(−log x_y) + (1 − α)·(Σ_{i=0}^{C−1} i·x_i − y)²`, masked-mean reduced.
pub fn hybrid_loss(
    tape: &mut Tape<f64>,
    probs: Var,
    targets: &MaskedTargets,
    cfg: HybridConfig,
) -> Result<Option<Var>, LossError> {
    cfg.validate()?;
    let c = cfg.classes;
    let rows = targets.len();
    let numel = tape.value(probs).numel();
    if numel != rows * c {
        return Err(LossError::Shape {
            pred: numel,
            targets: rows * c,
        });
    }
    let mut onehot = vec![0.0; rows * c];
    for (r, &y) in targets.values.iter().enumerate() {
        check_class(y, c)?;
        if !y.is_nan() {
            onehot[r * c + y as usize] = 1.0;
        }
    }
    let x = tape.reshape(probs, vec![rows, c])?;
    let xc = tape.clamp_straight_through(x, BCE_EPS, 1.0);
    let log_x = tape.log(xc);
    let oh = tape.constant(Tensor::new(vec![rows, c], onehot)?);
    let picked = tape.mul(log_x, oh)?;
    let log_xy = tape.reduce_sum(picked, Some(1))?;
    let ce = tape.neg(log_xy);

    let idx = tape.constant(Tensor::new(vec![c, 1], (0..c).map(|i| i as f64).collect())?);
    let expected = tape.matmul(x, idx)?;
    let expected = tape.reshape(expected, vec![rows])?;
    let y = tape.constant(Tensor::vector(targets.filled()));
    let diff = tape.sub(expected, y)?;
    let sq = tape.square(diff);

    let a = tape.affine(ce, cfg.alpha, 0.0);
    let b = tape.affine(sq, 1.0 - cfg.alpha, 0.0);
    let per = tape.add(a, b)?;
    masked_mean(tape, per, targets)
}

/// Hybrid loss of a single probability vector, evaluated directly.
pub fn hybrid_loss_value(x: &[f64], y: usize, cfg: HybridConfig) -> Result<f64, LossError> {
    cfg.validate()?;
    if x.len() != cfg.classes {
        return Err(LossError::Shape {
            pred: x.len(),
            targets: cfg.classes,
        });
    }
    check_class(y as f64, cfg.classes)?;
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::new(vec![1, x.len()], x.to_vec())?);
    let loss = hybrid_loss(&mut tape, p, &MaskedTargets::new(vec![y as f64]), cfg)?.expect("target present");
    Ok(tape.value(loss).data()[0])
}

/// Weighted sum of per-task losses; skipped tasks (`None`) contribute 0.
pub fn total_loss(tape: &mut Tape<f64>, losses: &[(Option<Var>, f64)]) -> Result<Option<Var>, LossError> {
    let mut total: Option<Var> = None;
    for &(loss, weight) in losses {
        let Some(l) = loss else { continue };
        let term = if weight == 1.0 { l } else { tape.affine(l, weight, 0.0) };
        total = Some(match total {
            None => term,
            Some(t) => tape.add(t, term)?,
        });
    }
    Ok(total)
}
