use super::{Tape, Tensor, TensorError, Var};

/// Outcome of comparing tape gradients against central finite differences.
#[derive(Clone, Debug)]
pub struct GradcheckReport {
    /// Per input, per element: (analytic, numeric, error).
    pub entries: Vec<Vec<(f64, f64, f64)>>,
    pub max_error: f64,
    pub tol: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_error < self.tol
    }
}

/// Relative error, falling back to absolute error when both values are
/// below 1e-6 in magnitude.
fn error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if scale < 1e-6 {
        diff
    } else {
        diff / scale
    }
}

/// Checks the gradient of the scalar `f` at `inputs` in 64-bit precision.
///
/// `f` receives a fresh tape and one leaf per input and returns the loss.
pub fn gradcheck<F, E>(f: F, inputs: &[Tensor<f64>], h: f64, tol: f64) -> Result<GradcheckReport, E>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, E>,
    E: From<TensorError>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64, E> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out);
        if v.numel() != 1 {
            return Err(TensorError::NonScalarLoss(v.shape().to_vec()).into());
        }
        Ok(v.data()[0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;

    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut entries = Vec::with_capacity(inputs.len());
    let mut max_error: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = tape
            .grad(*v)
            .map(Tensor::into_data)
            .unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        let mut row = Vec::with_capacity(analytic.len());
        for (j, &a) in analytic.iter().enumerate() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let e = error(a, numeric);
            max_error = max_error.max(if e.is_nan() { f64::INFINITY } else { e });
            row.push((a, numeric, e));
        }
        entries.push(row);
    }
    Ok(GradcheckReport {
        entries,
        max_error,
        tol,
    })
}
