//! Node positional encodings: Laplacian eigenpairs and random-walk return
//! probabilities.
//!
//! Molecule-level entry points compute on the canonically ordered graph and
//! permute rows back, so recomputation for any atom order (and cache hits)
//! are bitwise identical, degenerate eigenspaces included.

mod cache;
mod eigen;

pub use cache::{CacheLookup, PeCache};
pub use eigen::symmetric_eigen;

use serde::{Deserialize, Serialize};

use crate::binfile::{BinFileError, Reader, Writer};
use crate::molparse::{canonical_form, MolGraph};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PeError {
    #[error("number of eigenpairs must be at least 1")]
    InvalidK,
    #[error("random-walk steps must be non-empty")]
    EmptySteps,
    #[error("random-walk step {0} is invalid (must be ≥ 1)")]
    InvalidStep(usize),
    #[error("random-walk step {step} exceeds cached maximum {max}")]
    StepNotCached { step: usize, max: usize },
}

/// Positional-encoding settings. `version` participates in cache keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeConfig {
    pub lap_k: usize,
    pub rwse_steps: Vec<usize>,
    pub version: u32,
}

impl Default for PeConfig {
    fn default() -> Self {
        PeConfig {
            lap_k: 8,
            rwse_steps: (1..=16).collect(),
            version: 1,
        }
    }
}

impl PeConfig {
    pub fn validate(&self) -> Result<(), PeError> {
        if self.lap_k == 0 {
            return Err(PeError::InvalidK);
        }
        validate_steps(&self.rwse_steps)
    }

    pub fn max_step(&self) -> usize {
        self.rwse_steps.iter().copied().max().unwrap_or(0)
    }
}

fn validate_steps(steps: &[usize]) -> Result<(), PeError> {
    if steps.is_empty() {
        return Err(PeError::EmptySteps);
    }
    match steps.iter().find(|&&s| s == 0) {
        Some(_) => Err(PeError::InvalidStep(0)),
        None => Ok(()),
    }
}

/// The `k` smallest Laplacian eigenpairs, zero-padded past `num_atoms`.
#[derive(Debug, Clone, PartialEq)]
pub struct LapPe {
    pub k: usize,
    pub num_atoms: usize,
    pub eigvals: Vec<f64>,
    /// Row-major `[num_atoms × k]`.
    pub eigvecs: Vec<f64>,
}

/// Return probabilities, row-major `[num_atoms × steps.len()]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rwse {
    pub steps: Vec<usize>,
    pub num_atoms: usize,
    pub probs: Vec<f64>,
}

/// `I − D^(−1/2) A D^(−1/2)`, row-major. Isolated vertices get an all-zero
/// row so that the multiplicity of eigenvalue 0 equals the component count.
pub fn normalized_laplacian(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let mut deg = vec![0usize; n];
    for &(u, v) in edges {
        deg[u] += 1;
        deg[v] += 1;
    }
    let mut l = vec![0.0; n * n];
    for (i, &d) in deg.iter().enumerate() {
        if d > 0 {
            l[i * n + i] = 1.0;
        }
    }
    for &(u, v) in edges {
        let w = -1.0 / ((deg[u] * deg[v]) as f64).sqrt();
        l[u * n + v] = w;
        l[v * n + u] = w;
    }
    l
}

/// Full spectrum: eigenvalues ascending, eigenvectors as columns of a
/// row-major `n × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub n: usize,
    pub eigvals: Vec<f64>,
    pub eigvecs: Vec<f64>,
}

/// Flips each column so its largest-magnitude entry is positive; entries
/// within 1e-9 of the maximum magnitude tie and the lowest row wins.
pub fn sign_fix(vecs: &mut [f64], n: usize) {
    for c in 0..n {
        let max = (0..n).map(|r| vecs[r * n + c].abs()).fold(0.0, f64::max);
        let Some(pivot) = (0..n).find(|&r| vecs[r * n + c].abs() >= max - 1e-9) else {
            continue;
        };
        if vecs[pivot * n + c] < 0.0 {
            for r in 0..n {
                vecs[r * n + c] = -vecs[r * n + c];
            }
        }
    }
}

/// Sign-fixed normalized-Laplacian spectrum of an edge list. Eigenvalues are
/// clamped into `[0, 2]`, the exact spectral range, removing rounding noise.
pub fn laplacian_spectrum(n: usize, edges: &[(usize, usize)]) -> Spectrum {
    let l = normalized_laplacian(n, edges);
    let (mut eigvals, mut eigvecs) = symmetric_eigen(&l, n);
    for v in &mut eigvals {
        *v = v.clamp(0.0, 2.0);
    }
    sign_fix(&mut eigvecs, n);
    Spectrum { n, eigvals, eigvecs }
}

/// Diagonals of `T^k` for `k = 1..=max_step` where `T = D⁻¹A`, indexed
/// `[k − 1][vertex]`. Isolated vertices have an all-zero row in `T`, hence
/// return probability 0.
pub fn return_probabilities(n: usize, edges: &[(usize, usize)], max_step: usize) -> Vec<Vec<f64>> {
    let mut deg = vec![0usize; n];
    for &(u, v) in edges {
        deg[u] += 1;
        deg[v] += 1;
    }
    let mut t = vec![0.0; n * n];
    for &(u, v) in edges {
        t[u * n + v] = 1.0 / deg[u] as f64;
        t[v * n + u] = 1.0 / deg[v] as f64;
    }
    let mut out = Vec::with_capacity(max_step);
    let mut power = t.clone();
    for step in 1..=max_step {
        if step > 1 {
            let mut next = vec![0.0; n * n];
            f64_matmul(n, &power, &t, &mut next);
            power = next;
        }
        out.push((0..n).map(|i| power[i * n + i]).collect());
    }
    out
}

fn f64_matmul(n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    use crate::tensorcore::Real;
    f64::gemm(n, n, n, a, (n as isize, 1), b, (n as isize, 1), c);
}

/// Everything needed to produce PEs for a molecule, in canonical atom order.
/// This is the PE cache payload.
#[derive(Debug, Clone, PartialEq)]
pub struct PeIntermediates {
    pub canonical_key: String,
    pub spectrum: Spectrum,
    /// `[k − 1][canonical atom]` for `k = 1..=max_step`.
    pub returns: Vec<Vec<f64>>,
}

impl PeIntermediates {
    pub fn compute(g: &MolGraph, max_step: usize) -> Self {
        let form = canonical_form(g);
        let canon = g.permuted(&form.order);
        let edges = canon.edges();
        PeIntermediates {
            canonical_key: g.canonical_key.clone(),
            spectrum: laplacian_spectrum(canon.num_atoms(), &edges),
            returns: return_probabilities(canon.num_atoms(), &edges, max_step),
        }
    }

    pub fn max_step(&self) -> usize {
        self.returns.len()
    }

    /// Laplacian PE with rows in the atom order of the graph whose canonical
    /// permutation is `order`.
    pub fn lap_pe(&self, k: usize, order: &[usize]) -> Result<LapPe, PeError> {
        if k == 0 {
            return Err(PeError::InvalidK);
        }
        let n = self.spectrum.n;
        let kept = k.min(n);
        let mut eigvals = self.spectrum.eigvals[..kept].to_vec();
        eigvals.resize(k, 0.0);
        let mut eigvecs = vec![0.0; n * k];
        for (canon_row, &atom) in order.iter().enumerate() {
            for c in 0..kept {
                eigvecs[atom * k + c] = self.spectrum.eigvecs[canon_row * n + c];
            }
        }
        Ok(LapPe {
            k,
            num_atoms: n,
            eigvals,
            eigvecs,
        })
    }

    pub fn rwse(&self, steps: &[usize], order: &[usize]) -> Result<Rwse, PeError> {
        validate_steps(steps)?;
        let n = self.spectrum.n;
        let width = steps.len();
        let mut probs = vec![0.0; n * width];
        for (j, &s) in steps.iter().enumerate() {
            let diag = self.returns.get(s - 1).ok_or(PeError::StepNotCached {
                step: s,
                max: self.max_step(),
            })?;
            for (canon_row, &atom) in order.iter().enumerate() {
                probs[atom * width + j] = diag[canon_row];
            }
        }
        Ok(Rwse {
            steps: steps.to_vec(),
            num_atoms: n,
            probs,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str(&self.canonical_key);
        w.u64(self.spectrum.n as u64);
        w.f64s(&self.spectrum.eigvals);
        w.f64s(&self.spectrum.eigvecs);
        w.u64(self.returns.len() as u64);
        for r in &self.returns {
            w.f64s(r);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BinFileError> {
        let mut r = Reader::new(bytes);
        let canonical_key = r.str()?;
        let n = r.u64()? as usize;
        let eigvals = r.f64s()?;
        let eigvecs = r.f64s()?;
        if eigvals.len() != n || eigvecs.len() != n * n {
            return Err(BinFileError::Payload("spectrum size mismatch".into()));
        }
        let steps = r.u64()? as usize;
        let mut returns = Vec::new();
        for _ in 0..steps {
            let d = r.f64s()?;
            if d.len() != n {
                return Err(BinFileError::Payload("return-probability size mismatch".into()));
            }
            returns.push(d);
        }
        r.finish()?;
        Ok(PeIntermediates {
            canonical_key,
            spectrum: Spectrum { n, eigvals, eigvecs },
            returns,
        })
    }
}

/// `k` smallest eigenpairs of the normalized Laplacian of `g`.
pub fn laplacian_pe(g: &MolGraph, k: usize) -> Result<LapPe, PeError> {
    if k == 0 {
        return Err(PeError::InvalidK);
    }
    let order = canonical_form(g).order;
    PeIntermediates::compute(g, 0).lap_pe(k, &order)
}

/// Random-walk return probabilities of `g` at the requested step counts.
pub fn rwse(g: &MolGraph, steps: &[usize]) -> Result<Rwse, PeError> {
    validate_steps(steps)?;
    let order = canonical_form(g).order;
    let max = steps.iter().copied().max().unwrap_or(0);
    PeIntermediates::compute(g, max).rwse(steps, &order)
}
