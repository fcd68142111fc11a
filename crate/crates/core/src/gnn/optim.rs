use serde::{Deserialize, Serialize};

use super::Params;
use crate::tensorcore::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with bias correction and optional L2 weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &Params) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        Adam {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update; `grads[i]` is `None` for parameters that did not
    /// take part in the loss.
    pub fn step(&mut self, params: &mut Params, grads: &[Option<Tensor<f64>>]) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (i, t) in params.tensors_mut().iter_mut().enumerate() {
            let Some(g) = &grads[i] else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (p, &gj)) in t.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gj = gj + c.weight_decay * *p;
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                *p -= c.lr * mh / (vh.sqrt() + c.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorcore::Tape;

    #[test]
    fn minimizes_quadratic() {
        let mut p = Params::new();
        p.push("x", Tensor::vector(vec![3.0, -2.0]));
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..Default::default() }, &p);
        for _ in 0..500 {
            let mut tape = Tape::new();
            let vars = p.bind(&mut tape);
            let sq = tape.square(vars[0]);
            let l = tape.sum_all(sq);
            tape.backward(l).unwrap();
            let grads: Vec<_> = vars.iter().map(|v| tape.grad(*v)).collect();
            opt.step(&mut p, &grads);
        }
        assert!(p.tensors()[0].data().iter().all(|v| v.abs() < 1e-2));
    }
}
