//! Acceptance harness: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=3,9` restricts the run to the listed criteria.

mod common;

use std::collections::{BTreeSet, HashSet};
use std::time::Instant;

use faer::{Mat, Side};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use graphmix::cli::{build_model, cmd_train, prepare, RunManifest};
use graphmix::datapipe::{node_padding, pack_ffd, pack_in_order, Capacity, GraphSize, Split};
use graphmix::gnn::{gcn_layer, gin_layer, gine_layer, mlp, pool, GraphIndex, PoolKind};
use graphmix::molparse::{canonical_key, parse_smiles, write_smiles};
use graphmix::multitask::{
    auroc, average_precision, hybrid_loss, hybrid_loss_value, masked_loss, pearson, r2, total_loss, HybridConfig,
    LossKind, MaskedTargets,
};
use graphmix::posenc::{laplacian_pe, laplacian_spectrum, return_probabilities, rwse};
use graphmix::synth::molecule_corpus;
use graphmix::tensorcore::{gradcheck, Tape, Tensor, TensorError, Var};
use graphmix::train::{evaluate, fit, TrainOptions};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// 1. gradients
// ---------------------------------------------------------------------------

const INSTANCES: usize = 100;
const GC_TOL: f64 = 1e-4;
const GC_STEP: f64 = 1e-6;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Fixed, non-uniform weights so every output entry reaches the scalar.
fn readout(tape: &mut Tape<f64>, v: Var) -> Result<Var, TensorError> {
    let shape = tape.shape(v).to_vec();
    let n: usize = shape.iter().product();
    let w = tape.constant(Tensor::new(shape, (0..n).map(|i| (1.3 * i as f64 + 0.7).sin()).collect())?);
    let p = tape.mul(v, w)?;
    Ok(tape.sum_all(p))
}

struct GcStats {
    worst: f64,
    cases: usize,
}

impl GcStats {
    fn run<F, E>(&mut self, name: &str, f: F, inputs: &[Tensor<f64>]) -> Result<(), String>
    where
        F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, E>,
        E: From<TensorError> + std::fmt::Display,
    {
        let report = gradcheck(f, inputs, GC_STEP, GC_TOL).map_err(|e| format!("{name}: {e}"))?;
        self.worst = self.worst.max(report.max_error);
        self.cases += 1;
        check(report.passed(), format!("{name}: relative error {:.3e}", report.max_error))
    }
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let (mut src, mut dst, mut mask) = (Vec::new(), Vec::new(), Vec::new());
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < 0.4 {
                let m = if rng.random::<f64>() < 0.85 { 1.0 } else { 0.0 };
                src.extend([u, v]);
                dst.extend([v, u]);
                mask.extend([m, m]);
            }
        }
    }
    if src.is_empty() {
        src.push(0);
        dst.push(0);
        mask.push(0.0);
    }
    (src, dst, mask)
}

fn primitives(rng: &mut ChaCha8Rng, st: &mut GcStats) -> Result<(), String> {
    let (m, k, n) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
    let a = uniform(rng, &[m, n], -1.0, 1.0);
    let b = uniform(rng, &[m, n], -1.0, 1.0);
    let bias = uniform(rng, &[n], -1.0, 1.0);
    let left = uniform(rng, &[m, k], -1.0, 1.0);
    let right = uniform(rng, &[k, n], -1.0, 1.0);
    let rows = uniform(rng, &[m], -1.0, 1.0);
    let positive = uniform(rng, &[m, n], 0.5, 2.0);
    let idx: Vec<usize> = (0..rng.random_range(1..7)).map(|_| rng.random_range(0..m)).collect();
    let segs = rng.random_range(1..5);
    let ids: Vec<usize> = (0..m).map(|_| rng.random_range(0..segs)).collect();

    st.run("matmul", |t, v| { let y = t.matmul(v[0], v[1])?; readout(t, y) }, &[left.clone(), right])?;
    st.run("add", |t, v| { let y = t.add(v[0], v[1])?; readout(t, y) }, &[a.clone(), b.clone()])?;
    st.run("add broadcast", |t, v| { let y = t.add(v[0], v[1])?; readout(t, y) }, &[a.clone(), bias.clone()])?;
    st.run("sub", |t, v| { let y = t.sub(v[0], v[1])?; readout(t, y) }, &[a.clone(), b.clone()])?;
    st.run("mul", |t, v| { let y = t.mul(v[0], v[1])?; readout(t, y) }, &[a.clone(), b.clone()])?;
    st.run("mul broadcast", |t, v| { let y = t.mul(v[0], v[1])?; readout(t, y) }, &[a.clone(), bias])?;
    st.run("scale_rows", |t, v| { let y = t.scale_rows(v[0], v[1])?; readout(t, y) }, &[a.clone(), rows])?;
    st.run("affine", |t, v| { let y = t.affine(v[0], -1.7, 0.3); readout(t, y) }, &[a.clone()])?;
    st.run("neg", |t, v| { let y = t.neg(v[0]); readout(t, y) }, &[a.clone()])?;
    st.run("relu", |t, v| { let y = t.relu(v[0]); readout(t, y) }, &[a.clone()])?;
    st.run("sigmoid", |t, v| { let y = t.sigmoid(v[0]); readout(t, y) }, &[a.clone()])?;
    st.run("log", |t, v| { let y = t.log(v[0]); readout(t, y) }, &[positive])?;
    st.run("exp", |t, v| { let y = t.exp(v[0]); readout(t, y) }, &[a.clone()])?;
    st.run("square", |t, v| { let y = t.square(v[0]); readout(t, y) }, &[a.clone()])?;
    st.run("abs", |t, v| { let y = t.abs(v[0]); readout(t, y) }, &[a.clone()])?;
    st.run("clamp (interior)", |t, v| { let y = t.clamp_straight_through(v[0], -2.0, 2.0); readout(t, y) }, &[a.clone()])?;
    st.run("concat rows", |t, v| { let y = t.concat(&[v[0], v[1]], 0)?; readout(t, y) }, &[a.clone(), b.clone()])?;
    st.run("concat cols", |t, v| { let y = t.concat(&[v[0], v[1]], 1)?; readout(t, y) }, &[a.clone(), left])?;
    st.run("row_softmax", |t, v| { let y = t.row_softmax(v[0])?; readout(t, y) }, &[a.clone()])?;
    st.run("gather_rows", |t, v| { let y = t.gather_rows(v[0], &idx)?; readout(t, y) }, &[a.clone()])?;
    st.run("segment_sum", |t, v| { let y = t.segment_sum(v[0], &ids, segs)?; readout(t, y) }, &[a.clone()])?;
    st.run("segment_mean", |t, v| { let y = t.segment_mean(v[0], &ids, segs)?; readout(t, y) }, &[a.clone()])?;
    st.run("reduce_sum all", |t, v| t.reduce_sum(v[0], None), &[a.clone()])?;
    st.run("reduce_sum axis 0", |t, v| { let y = t.reduce_sum(v[0], Some(0))?; readout(t, y) }, &[a.clone()])?;
    st.run("reduce_sum axis 1", |t, v| { let y = t.reduce_sum(v[0], Some(1))?; readout(t, y) }, &[a.clone()])?;
    st.run("reduce_mean axis 1", |t, v| { let y = t.reduce_mean(v[0], Some(1))?; readout(t, y) }, &[a.clone()])?;
    st.run("reduce_mean all", |t, v| t.reduce_mean(v[0], None), &[a.clone()])?;
    st.run("sum_all", |t, v| Ok::<_, TensorError>(t.sum_all(v[0])), &[a.clone()])?;
    st.run("reshape", |t, v| { let y = t.reshape(v[0], vec![m * n])?; readout(t, y) }, &[a])?;
    Ok(())
}

fn layers(rng: &mut ChaCha8Rng, st: &mut GcStats, pe_graphs: &[(Tensor<f64>, Tensor<f64>)]) -> Result<(), String> {
    let n = rng.random_range(2..7);
    let (d, h, de) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..3));
    let (src, dst, emask) = random_graph(rng, n);
    let g = GraphIndex {
        num_nodes: n,
        src: &src,
        dst: &dst,
        edge_mask: &emask,
    };
    let x = uniform(rng, &[n, d], -1.0, 1.0);
    let e = uniform(rng, &[src.len(), de], -1.0, 1.0);
    let w = uniform(rng, &[d, h], -1.0, 1.0);
    let (w1, b1) = (uniform(rng, &[d, h], -1.0, 1.0), uniform(rng, &[h], -0.5, 0.5));
    let (w2, b2) = (uniform(rng, &[h, d], -1.0, 1.0), uniform(rng, &[d], -0.5, 0.5));
    let (we, be) = (uniform(rng, &[de, d], -1.0, 1.0), uniform(rng, &[d], -0.5, 0.5));
    let eps = Tensor::scalar(rng.random_range(-0.5..0.5));

    st.run("gcn layer", |t, v| { let y = gcn_layer(t, v[0], v[1], &g)?; readout(t, y) }, &[x.clone(), w])?;
    st.run(
        "mlp",
        |t, v| { let y = mlp(t, v[0], &[(v[1], v[2]), (v[3], v[4])], true)?; readout(t, y) },
        &[x.clone(), w1.clone(), b1.clone(), w2.clone(), b2.clone()],
    )?;
    st.run(
        "gin layer",
        |t, v| { let y = gin_layer(t, v[0], v[1], &[(v[2], v[3]), (v[4], v[5])], &g)?; readout(t, y) },
        &[x.clone(), eps.clone(), w1.clone(), b1.clone(), w2.clone(), b2.clone()],
    )?;
    st.run(
        "gine layer",
        |t, v| {
            let y = gine_layer(t, v[0], v[1], (v[2], v[3]), v[4], &[(v[5], v[6]), (v[7], v[8])], &g)?;
            readout(t, y)
        },
        &[x.clone(), e, we, be, eps, w1, b1, w2, b2],
    )?;

    let graphs = rng.random_range(1..4);
    let node_graph: Vec<usize> = (0..n).map(|_| rng.random_range(0..graphs)).collect();
    let node_mask: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.8 { 1.0 } else { 0.0 }).collect();
    for kind in [PoolKind::Sum, PoolKind::Mean] {
        st.run(
            &format!("{kind:?} pool"),
            |t, v| { let y = pool(t, v[0], &node_graph, &node_mask, graphs, kind)?; readout(t, y) },
            &[x.clone()],
        )?;
    }

    // PE encoders on real positional encodings of a corpus molecule.
    let (lap_in, rw_in) = &pe_graphs[rng.random_range(0..pe_graphs.len())];
    let (lw, rw) = (lap_in.shape()[1], rw_in.shape()[1]);
    let hidden = rng.random_range(2..6);
    let lap_params = [
        uniform(rng, &[lw, hidden], -1.0, 1.0),
        uniform(rng, &[hidden], -0.5, 0.5),
        uniform(rng, &[hidden, 3], -1.0, 1.0),
        uniform(rng, &[3], -0.5, 0.5),
    ];
    st.run(
        "laplacian PE encoder",
        |t, v| {
            let x = t.constant(lap_in.clone());
            let y = mlp(t, x, &[(v[0], v[1]), (v[2], v[3])], false)?;
            readout(t, y)
        },
        &lap_params,
    )?;
    let rw_params = [
        uniform(rng, &[rw, hidden], -1.0, 1.0),
        uniform(rng, &[hidden], -0.5, 0.5),
        uniform(rng, &[hidden, 3], -1.0, 1.0),
        uniform(rng, &[3], -0.5, 0.5),
    ];
    st.run(
        "random-walk PE encoder",
        |t, v| {
            let x = t.constant(rw_in.clone());
            let y = mlp(t, x, &[(v[0], v[1]), (v[2], v[3])], false)?;
            readout(t, y)
        },
        &rw_params,
    )?;
    Ok(())
}

fn with_missing(rng: &mut ChaCha8Rng, values: Vec<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.into_iter().map(|x| if rng.random::<f64>() < 0.4 { f64::NAN } else { x }).collect();
    if v.iter().all(|x| x.is_nan()) {
        v[0] = 0.0;
    }
    v
}

fn losses(rng: &mut ChaCha8Rng, st: &mut GcStats) -> Result<(), String> {
    let n = rng.random_range(2..9);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let reg = MaskedTargets::new(with_missing(rng, raw));
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0..2) as f64).collect();
    let bin = MaskedTargets::new(with_missing(rng, raw));
    let pred = uniform(rng, &[n], -1.0, 1.0);
    let prob = uniform(rng, &[n], 0.05, 0.95);
    st.run("masked mae", |t, v| masked_loss(t, v[0], &reg, LossKind::Mae).map(Option::unwrap), &[pred.clone()])?;
    st.run("masked bce", |t, v| masked_loss(t, v[0], &bin, LossKind::Bce).map(Option::unwrap), &[prob.clone()])?;

    let c = rng.random_range(2..6);
    let cfg = HybridConfig {
        classes: c,
        alpha: rng.random_range(0.0..1.0),
    };
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0..c) as f64).collect();
    let cls = MaskedTargets::new(with_missing(rng, raw));
    let probs = uniform(rng, &[n, c], 0.05, 1.0);
    st.run("hybrid", |t, v| hybrid_loss(t, v[0], &cls, cfg).map(Option::unwrap), &[probs])?;
    let (wa, wb) = (rng.random_range(0.1..2.0), rng.random_range(0.1..2.0));
    st.run(
        "total",
        |t, v| {
            let a = masked_loss(t, v[0], &reg, LossKind::Mae)?;
            let b = masked_loss(t, v[1], &bin, LossKind::Bce)?;
            total_loss(t, &[(a, wa), (b, wb)]).map(Option::unwrap)
        },
        &[pred, prob],
    )
    ?;
    Ok(())
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pe_graphs: Vec<(Tensor<f64>, Tensor<f64>)> = molecule_corpus(20, 4, 1)
        .iter()
        .map(|s| {
            let g = parse_smiles(s).unwrap();
            let k = 4;
            let lap = laplacian_pe(&g, k).unwrap();
            let rw = rwse(&g, &[1, 2, 3, 4]).unwrap();
            let n = g.num_atoms();
            let mut rows = Vec::with_capacity(n * 2 * k);
            for i in 0..n {
                rows.extend_from_slice(&lap.eigvecs[i * k..(i + 1) * k]);
                rows.extend_from_slice(&lap.eigvals);
            }
            (
                Tensor::new(vec![n, 2 * k], rows).unwrap(),
                Tensor::new(vec![n, 4], rw.probs).unwrap(),
            )
        })
        .collect();
    let mut st = GcStats { worst: 0.0, cases: 0 };
    for _ in 0..INSTANCES {
        primitives(&mut rng, &mut st)?;
        layers(&mut rng, &mut st, &pe_graphs)?;
        losses(&mut rng, &mut st)?;
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, format!("suite took {secs:.1} s"))?;
    Ok(format!("{} gradchecks, worst relative error {:.2e}, {secs:.1} s", st.cases, st.worst))
}

// ---------------------------------------------------------------------------
// 2. masked loss
// ---------------------------------------------------------------------------

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut patterns = 0;
    for kind in [LossKind::Mae, LossKind::Bce] {
        for _ in 0..1000 {
            let n = rng.random_range(1..40);
            let p_missing = rng.random::<f64>();
            let mut y: Vec<f64> = (0..n)
                .map(|_| match kind {
                    LossKind::Mae => rng.random_range(-3.0..3.0),
                    LossKind::Bce => rng.random_range(0..2) as f64,
                })
                .collect();
            for v in y.iter_mut() {
                if rng.random::<f64>() < p_missing {
                    *v = f64::NAN;
                }
            }
            let pred: Vec<f64> = (0..n)
                .map(|_| match kind {
                    LossKind::Mae => rng.random_range(-3.0..3.0),
                    LossKind::Bce => rng.random_range(0.01..0.99),
                })
                .collect();
            // Oracle: the plain mean over present entries.
            let present: Vec<(f64, f64)> = pred.iter().zip(&y).filter(|(_, t)| !t.is_nan()).map(|(&p, &t)| (p, t)).collect();
            let oracle = if present.is_empty() {
                None
            } else {
                let per = |p: f64, t: f64| match kind {
                    LossKind::Mae => (p - t).abs(),
                    LossKind::Bce => -(t * p.ln() + (1.0 - t) * (1.0 - p).ln()),
                };
                Some(present.iter().map(|&(p, t)| per(p, t)).sum::<f64>() / present.len() as f64)
            };
            let mut tape = Tape::new();
            let pv = tape.param(Tensor::vector(pred.clone()));
            let loss = masked_loss(&mut tape, pv, &MaskedTargets::new(y.clone()), kind).map_err(err)?;
            patterns += 1;
            match (loss, oracle) {
                (None, None) => {}
                (Some(l), Some(o)) => {
                    let v = tape.value(l).data()[0];
                    let diff = (v - o).abs() / o.abs().max(1.0);
                    worst = worst.max(diff);
                    check(diff <= 1e-12, format!("{kind:?}: masked {v} vs filtered {o}"))?;
                    tape.backward(l).map_err(err)?;
                    let g = tape.grad(pv).ok_or("no gradient")?;
                    for (gi, t) in g.data().iter().zip(&y) {
                        check(!t.is_nan() || *gi == 0.0, format!("{kind:?}: gradient {gi} at a masked position"))?;
                    }
                }
                (l, o) => return Err(format!("{kind:?}: loss presence {} vs oracle {}", l.is_some(), o.is_some())),
            }
        }
    }
    Ok(format!("{patterns} patterns, worst relative difference {worst:.2e}; masked gradients exactly 0"))
}

// ---------------------------------------------------------------------------
// 3. hybrid loss
// ---------------------------------------------------------------------------

fn criterion_3() -> Outcome {
    let worked = hybrid_loss_value(&[0.0, 0.0, 0.5, 0.5, 0.0], 2, HybridConfig { classes: 5, alpha: 0.5 }).map_err(err)?;
    check((worked - 0.471574).abs() <= 1e-6, format!("worked example gave {worked}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let c = rng.random_range(2..8);
        let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let x: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let y = rng.random_range(0..c);
        let ce = hybrid_loss_value(&x, y, HybridConfig { classes: c, alpha: 1.0 }).map_err(err)?;
        check(ce == -x[y].ln(), format!("alpha 1: {ce} vs cross-entropy {}", -x[y].ln()))?;
        let mse = hybrid_loss_value(&x, y, HybridConfig { classes: c, alpha: 0.0 }).map_err(err)?;
        let expected: f64 = x.iter().enumerate().map(|(i, p)| i as f64 * p).sum();
        let oracle = (expected - y as f64).powi(2);
        check(
            (mse - oracle).abs() <= 4.0 * f64::EPSILON * oracle.max(1.0),
            format!("alpha 0: {mse} vs expected-index error {oracle}"),
        )?;
    }
    Ok(format!("worked example {worked:.6}; alpha 1 and alpha 0 match on 500 instances"))
}

// ---------------------------------------------------------------------------
// 4. positional encodings
// ---------------------------------------------------------------------------

fn components(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for &(u, v) in edges {
        let (a, b) = (find(&mut parent, u), find(&mut parent, v));
        parent[a] = b;
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

/// Dense normalized Laplacian built from scratch for the oracle.
fn oracle_laplacian(n: usize, edges: &[(usize, usize)]) -> Mat<f64> {
    let mut adj = vec![vec![0.0; n]; n];
    for &(u, v) in edges {
        adj[u][v] = 1.0;
        adj[v][u] = 1.0;
    }
    let deg: Vec<f64> = adj.iter().map(|r| r.iter().sum()).collect();
    Mat::from_fn(n, n, |i, j| {
        let diag = if i == j && deg[i] > 0.0 { 1.0 } else { 0.0 };
        if deg[i] > 0.0 && deg[j] > 0.0 {
            diag - adj[i][j] / (deg[i] * deg[j]).sqrt()
        } else {
            diag
        }
    })
}

/// Largest deviation between the eigenspace projectors of two spectra,
/// grouping eigenvalues closer than 1e-6 (degenerate eigenvectors are only
/// defined up to rotation within their space). Vectors are the columns of
/// row-major `n × n` matrices.
fn projector_gap(n: usize, vals: &[f64], vecs: &[f64], oracle_vals: &[f64], oracle_vecs: &[f64]) -> f64 {
    let proj = |vs: &[f64], cols: &[usize], r: usize, c: usize| cols.iter().map(|&k| vs[r * n + k] * vs[c * n + k]).sum::<f64>();
    let mut worst: f64 = 0.0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && vals[end] - vals[end - 1] < 1e-6 {
            end += 1;
        }
        let ours: Vec<usize> = (start..end).collect();
        let (lo, hi) = (vals[start] - 5e-7, vals[end - 1] + 5e-7);
        let theirs: Vec<usize> = (0..n).filter(|&i| oracle_vals[i] >= lo && oracle_vals[i] <= hi).collect();
        if theirs.len() != ours.len() {
            return f64::INFINITY;
        }
        for r in 0..n {
            for c in 0..n {
                worst = worst.max((proj(vecs, &ours, r, c) - proj(oracle_vecs, &theirs, r, c)).abs());
            }
        }
        start = end;
    }
    worst
}

fn walk_return_probability(adj: &[Vec<usize>], start: usize, k: usize) -> f64 {
    fn go(adj: &[Vec<usize>], v: usize, target: usize, left: usize, p: f64) -> f64 {
        if left == 0 {
            return if v == target { p } else { 0.0 };
        }
        let d = adj[v].len();
        if d == 0 {
            return 0.0;
        }
        adj[v].iter().map(|&u| go(adj, u, target, left - 1, p / d as f64)).sum()
    }
    go(adj, start, start, k, 1.0)
}

fn criterion_4() -> Outcome {
    let corpus = molecule_corpus(700, 6, 4);
    let mut molecules: Vec<String> = Vec::new();
    for (i, s) in corpus.iter().enumerate() {
        let smiles = if i % 5 == 0 { format!("{s}.{}", corpus[(i * 7 + 1) % corpus.len()]) } else { s.clone() };
        if parse_smiles(&smiles).unwrap().num_atoms() <= 30 {
            molecules.push(smiles);
        }
        if molecules.len() == 500 {
            break;
        }
    }
    check(molecules.len() == 500, format!("only {} molecules of ≤ 30 atoms", molecules.len()))?;
    let (mut worst_val, mut worst_vec, mut worst_l0, mut max_eig): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for s in &molecules {
        let g = parse_smiles(s).unwrap();
        let n = g.num_atoms();
        let edges = g.edges();
        let spec = laplacian_spectrum(n, &edges);
        let evd = oracle_laplacian(n, &edges).self_adjoint_eigen(Side::Lower).map_err(|e| format!("{e:?}"))?;
        let ovals: Vec<f64> = evd.S().column_vector().iter().copied().collect();
        let u = evd.U();
        let ovecs: Vec<f64> = (0..n * n).map(|i| u[(i / n, i % n)]).collect();
        for (a, b) in spec.eigvals.iter().zip(&ovals) {
            worst_val = worst_val.max((a - b).abs());
        }
        worst_vec = worst_vec.max(projector_gap(n, &spec.eigvals, &spec.eigvecs, &ovals, &ovecs));
        worst_l0 = worst_l0.max(spec.eigvals[0].abs());
        max_eig = max_eig.max(spec.eigvals[n - 1]);
        check(spec.eigvals.iter().all(|&v| v >= 0.0), format!("{s}: negative eigenvalue"))?;
        let zeros = spec.eigvals.iter().filter(|&&v| v.abs() < 1e-8).count();
        let comps = components(n, &edges);
        check(zeros == comps, format!("{s}: {zeros} zero eigenvalues for {comps} components"))?;
    }
    check(worst_val <= 1e-8, format!("eigenvalue deviation {worst_val:.2e}"))?;
    check(worst_vec <= 1e-8, format!("eigenvector deviation {worst_vec:.2e}"))?;
    check(worst_l0 <= 1e-10, format!("smallest eigenvalue {worst_l0:.2e}"))?;
    check(max_eig <= 2.0 + 1e-9, format!("largest eigenvalue {max_eig}"))?;

    // Every labelled simple graph on up to 6 vertices.
    let mut graphs = 0;
    let mut worst_rw: f64 = 0.0;
    for n in 1..=6usize {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        for mask in 0u32..(1 << pairs.len()) {
            let edges: Vec<(usize, usize)> =
                pairs.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &e)| e).collect();
            let mut adj = vec![Vec::new(); n];
            for &(u, v) in &edges {
                adj[u].push(v);
                adj[v].push(u);
            }
            let probs = return_probabilities(n, &edges, 4);
            for k in 1..=4 {
                for v in 0..n {
                    worst_rw = worst_rw.max((probs[k - 1][v] - walk_return_probability(&adj, v, k)).abs());
                }
            }
            graphs += 1;
        }
    }
    check(worst_rw <= 1e-12, format!("random-walk deviation {worst_rw:.2e}"))?;
    let tri = rwse(&parse_smiles("C1CC1").unwrap(), &[2]).map_err(err)?;
    check(tri.probs.iter().all(|&p| (p - 0.5).abs() <= 1e-12), format!("triangle k=2 gave {:?}", tri.probs))?;
    Ok(format!(
        "500 molecules: eigenvalues {worst_val:.1e}, eigenspaces {worst_vec:.1e}, λ₀ {worst_l0:.1e}, max λ {max_eig:.6}; \
         {graphs} graphs: walks {worst_rw:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// 5. metrics
// ---------------------------------------------------------------------------

fn brute_auroc(s: &[f64], y: &[f64]) -> Option<f64> {
    let (mut num, mut pairs) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] > 0.5 && y[j] < 0.5 {
                pairs += 1.0;
                num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
            }
        }
    }
    (pairs > 0.0).then(|| num / pairs)
}

/// Precision at each positive's rank, ranking by descending score with
/// earlier indices first among ties.
fn brute_ap(s: &[f64], y: &[f64]) -> Option<f64> {
    let pos = y.iter().filter(|&&v| v > 0.5).count();
    if pos == 0 || pos == y.len() {
        return None;
    }
    let ahead = |i: usize, j: usize| s[j] > s[i] || (s[j] == s[i] && j <= i);
    let mut sum = 0.0;
    for i in 0..s.len() {
        if y[i] > 0.5 {
            let rank = (0..s.len()).filter(|&j| ahead(i, j)).count();
            let hits = (0..s.len()).filter(|&j| ahead(i, j) && y[j] > 0.5).count();
            sum += hits as f64 / rank as f64;
        }
    }
    Some(sum / pos as f64)
}

fn criterion_5() -> Outcome {
    let worked = auroc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]);
    check(worked == Some(0.75), format!("worked AUROC {worked:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..60);
        let coarse = rng.random::<bool>();
        let s: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = rng.random();
                if coarse { (v * 5.0).round() / 5.0 } else { v }
            })
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..2) as f64).collect();
        for (name, got, want) in [("auroc", auroc(&s, &y), brute_auroc(&s, &y)), ("ap", average_precision(&s, &y), brute_ap(&s, &y))] {
            match (got, want) {
                (Some(a), Some(b)) => {
                    worst = worst.max((a - b).abs());
                    check((a - b).abs() <= 1e-12, format!("{name}: {a} vs brute force {b}"))?;
                }
                (None, None) => {}
                _ => return Err(format!("{name}: defined {:?} vs brute force {:?}", got, want)),
            }
        }
    }
    // Dyadic data on 16 points keep every intermediate exactly representable,
    // so the affine invariance holds bit for bit.
    for _ in 0..50 {
        let p: Vec<f64> = (0..16).map(|_| rng.random_range(-16..16) as f64 / 8.0).collect();
        let y: Vec<f64> = (0..16).map(|_| rng.random_range(-16..16) as f64 / 8.0).collect();
        let r = pearson(&p, &y);
        let scaled: Vec<f64> = p.iter().map(|v| 4.0 * v + 3.0).collect();
        check(pearson(&scaled, &y) == r, "pearson changed under a positive affine map")?;
        let flipped: Vec<f64> = p.iter().map(|v| -4.0 * v + 3.0).collect();
        check(pearson(&flipped, &y) == r.map(|v| -v), "pearson did not flip sign")?;
        let ys: Vec<f64> = y.iter().map(|v| 4.0 * v + 3.0).collect();
        check(r2(&scaled, &ys) == r2(&p, &y), "r2 changed under a joint affine map")?;
    }
    Ok(format!("worked AUROC 0.75; 200 instances within {worst:.1e}; affine checks exact"))
}

// ---------------------------------------------------------------------------
// 6. parser
// ---------------------------------------------------------------------------

/// SMILES, heavy atoms, bonds, independent rings.
const GOLDEN: [(&str, usize, usize, usize); 20] = [
    ("C", 1, 0, 0),
    ("CCO", 3, 2, 0),
    ("CC(=O)O", 4, 3, 0),
    ("c1ccccc1", 6, 6, 1),
    ("C1CCCCC1", 6, 6, 1),
    ("CC(C)(C)C", 5, 4, 0),
    ("c1ccc2ccccc2c1", 10, 11, 2),
    ("CC(=O)Oc1ccccc1C(=O)O", 13, 13, 1),
    ("CN1C=NC2=C1C(=O)N(C(=O)N2C)C", 14, 15, 2),
    ("C1CC1", 3, 3, 1),
    ("O=C=O", 3, 2, 0),
    ("C#N", 2, 1, 0),
    ("c1ccncc1", 6, 6, 1),
    ("C1CCC2(CC1)CCCC2", 10, 11, 2),
    ("C12C3C4C1C5C2C3C45", 8, 12, 5),
    ("[Na+].[Cl-]", 2, 0, 0),
    ("OCC(O)CO", 6, 5, 0),
    ("c1ccc2c(c1)[nH]c1ccccc12", 13, 15, 3),
    ("CC(C)Cc1ccc(cc1)C(C)C(=O)O", 15, 15, 1),
    ("N[C@@H](C)C(=O)O", 6, 5, 0),
];

fn criterion_6() -> Outcome {
    let start = Instant::now();
    for (s, atoms, bonds, rings) in GOLDEN {
        let g = parse_smiles(s).map_err(|e| format!("{s}: {e}"))?;
        let got = (g.num_atoms(), g.num_bonds(), g.cycle_rank());
        check(got == (atoms, bonds, rings), format!("{s}: got {got:?}, expected {:?}", (atoms, bonds, rings)))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let picks = ["CC(=O)Oc1ccccc1C(=O)O", "CN1C=NC2=C1C(=O)N(C(=O)N2C)C", "c1ccc2c(c1)[nH]c1ccccc12",
        "CC(C)Cc1ccc(cc1)C(C)C(=O)O", "C12C3C4C1C5C2C3C45", "C1CCC2(CC1)CCCC2", "OCC(O)CO", "c1ccc2ccccc2c1",
        "[Na+].[Cl-]", "N[C@@H](C)C(=O)O"];
    let mut keys = BTreeSet::new();
    let mut rewritings = 0;
    for s in picks {
        let g = parse_smiles(s).unwrap();
        let mut texts = HashSet::new();
        for _ in 0..100 {
            let mut order: Vec<usize> = (0..g.num_atoms()).collect();
            order.shuffle(&mut rng);
            let text = write_smiles(&g, &order);
            let re = parse_smiles(&text).map_err(|e| format!("{text}: {e}"))?;
            keys.insert(canonical_key(&re));
            texts.insert(text);
            rewritings += 1;
        }
    }
    check(keys.len() == 10, format!("{} distinct keys", keys.len()))?;
    let secs = start.elapsed().as_secs_f64();
    check(secs < 5.0, format!("took {secs:.1} s"))?;
    Ok(format!("20 golden molecules; {rewritings} rewritings → 10 keys; {secs:.2} s"))
}

// ---------------------------------------------------------------------------
// 7. packing
// ---------------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let cap = Capacity { max_nodes: 10, max_edges: 100, max_graphs: 8 };
    let worked: Vec<GraphSize> = [9, 7, 5, 3, 1].iter().map(|&n| GraphSize { nodes: n, edges: 0 }).collect();
    let packs = pack_ffd(&worked, cap).map_err(err)?;
    let pad = node_padding(&worked, &packs, cap);
    check(pad == 5, format!("worked example padding {pad}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut ffd_total, mut naive_total) = (0, 0);
    for _ in 0..1000 {
        let cap = Capacity {
            max_nodes: rng.random_range(8..64),
            max_edges: rng.random_range(16..128),
            max_graphs: rng.random_range(1..12),
        };
        let sizes: Vec<GraphSize> = (0..rng.random_range(0..80))
            .map(|_| {
                let nodes = rng.random_range(1..=cap.max_nodes);
                GraphSize { nodes, edges: rng.random_range(0..=cap.max_edges.min(2 * nodes)) }
            })
            .collect();
        let ffd = pack_ffd(&sizes, cap).map_err(err)?;
        let naive = pack_in_order(&sizes, cap).map_err(err)?;
        for packs in [&ffd, &naive] {
            let mut seen: Vec<usize> = packs.iter().flatten().copied().collect();
            seen.sort_unstable();
            check(seen == (0..sizes.len()).collect::<Vec<_>>(), "graphs lost or duplicated")?;
            for p in packs.iter() {
                let nodes: usize = p.iter().map(|&i| sizes[i].nodes).sum();
                let edges: usize = p.iter().map(|&i| sizes[i].edges).sum();
                check(nodes <= cap.max_nodes && edges <= cap.max_edges && p.len() <= cap.max_graphs, "capacity exceeded")?;
                check(!p.is_empty(), "empty pack")?;
            }
        }
        let (a, b) = (node_padding(&sizes, &ffd, cap), node_padding(&sizes, &naive, cap));
        check(a <= b, format!("FFD padding {a} exceeds in-order padding {b}"))?;
        ffd_total += a;
        naive_total += b;
    }
    Ok(format!("worked padding 5; 1000 instances, padding FFD {ffd_total} vs in-order {naive_total}"))
}

// ---------------------------------------------------------------------------
// 8. determinism
// ---------------------------------------------------------------------------

fn epoch_debug(cfg: &graphmix::cli::RunConfig) -> Result<Vec<String>, String> {
    let prepared = prepare(cfg).map_err(err)?;
    let ecfg = cfg.epoch_config();
    let plan = prepared.data.epoch_plan(Split::Train, &ecfg, cfg.seed, 0).map_err(err)?;
    let mut out = vec![format!("{:?}", prepared.data.features)];
    prepared
        .data
        .for_each_batch::<graphmix::datapipe::DataError>(&plan, Split::Train, &ecfg, |lb| {
            out.push(format!("{lb:?}"));
            Ok(())
        })
        .map_err(err)?;
    Ok(out)
}

fn manifest_without_runtime(m: &RunManifest) -> String {
    let mut m = m.clone();
    m.runtime = Default::default();
    serde_json::to_string(&m).unwrap()
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let paths = common::write_mix(dir.path(), 8);
    let cache = dir.path().join("cache");
    let with = |extra: &str| common::load_config(dir.path(), &common::mix_config(&paths, 2, extra));

    let plain = epoch_debug(&with("\nworkers: 1\n"))?;
    let cold = epoch_debug(&with(&format!("\nworkers: 1\ncache_dir: {}\n", cache.display())))?;
    let warm_cfg = with(&format!("\nworkers: 1\ncache_dir: {}\n", cache.display()));
    let warm_prep = prepare(&warm_cfg).map_err(err)?;
    check(warm_prep.featurize.computed == 0 && warm_prep.featurize.hits > 0, format!("warm run stats {:?}", warm_prep.featurize))?;
    let warm = epoch_debug(&warm_cfg)?;
    let four = epoch_debug(&with("\nworkers: 4\nfeaturize_batch_size: 7\n"))?;
    check(plain == cold, "cold-cache epoch differs from uncached")?;
    check(cold == warm, "warm-cache epoch differs from cold")?;
    check(plain == four, "4-worker epoch differs from 1-worker")?;

    let cfg = with("\nworkers: 1\n");
    let a = cmd_train(&cfg, &dir.path().join("run_a")).map_err(err)?;
    let b = cmd_train(&cfg, &dir.path().join("run_b")).map_err(err)?;
    check(a.hash == b.hash, format!("manifest hashes {} vs {}", a.hash, b.hash))?;
    check(manifest_without_runtime(&a) == manifest_without_runtime(&b), "manifests differ")?;
    let ckpt = |d: &str| std::fs::read(dir.path().join(d).join("model.ckpt")).map_err(err);
    check(ckpt("run_a")? == ckpt("run_b")?, "checkpoints differ")?;
    Ok(format!("{} batches identical across cache and worker settings; manifest hash {}", plain.len() - 1, &a.hash[..12]))
}

// ---------------------------------------------------------------------------
// 9. overfit
// ---------------------------------------------------------------------------

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = dir.path().join("overfit.csv");
    common::overfit_csv(&csv, 128, 0.5, 9);
    let cfg = common::load_config(dir.path(), &common::overfit_config(&csv, 500));
    let prepared = prepare(&cfg).map_err(|e| e.to_string())?;
    let mut model = build_model(&cfg, &prepared).map_err(|e| e.to_string())?;
    let params = model.num_params();
    check((120_000..=180_000).contains(&params), format!("{params} parameters, expected ~150k"))?;
    check(model.config.num_layers == 4, "preset must have 4 layers")?;

    let opts = TrainOptions {
        epochs: cfg.epochs(),
        adam: cfg.optim.adam,
        batches: cfg.epoch_config(),
        seed: cfg.seed,
        eval_every: 0,
    };
    let mut best = (f64::INFINITY, 0.0);
    let mut reached = None;
    let mut failure = None;
    fit(&mut model, &prepared.data, &opts, |rec, m| {
        if (rec.epoch + 1) % 5 != 0 {
            return true;
        }
        let report = match evaluate(m, &prepared.data, &[Split::Train], &opts.batches) {
            Ok(r) => r,
            Err(e) => {
                failure = Some(e.to_string());
                return false;
            }
        };
        let mae = report.get("y", Split::Train).and_then(|r| r.metrics["mae"].average).unwrap_or(f64::INFINITY);
        let acc = report.get("site", Split::Train).and_then(|r| r.metrics["accuracy"].average).unwrap_or(0.0);
        eprintln!("  epoch {:>3}: loss {:.4} normalized MAE {mae:.4} node accuracy {acc:.4}", rec.epoch + 1, rec.train_loss);
        if mae < best.0 {
            best = (mae, acc);
        }
        if mae < 0.05 && acc > 0.95 {
            reached = Some((rec.epoch + 1, mae, acc));
            return false;
        }
        true
    })
    .map_err(|e| e.to_string())?;
    if let Some(f) = failure {
        return Err(f);
    }
    let secs = start.elapsed().as_secs_f64();
    let (epoch, mae, acc) =
        reached.ok_or_else(|| format!("not reached in 500 epochs; best MAE {:.4} (accuracy {:.4})", best.0, best.1))?;
    check(secs < 300.0, format!("took {secs:.0} s"))?;
    Ok(format!(
        "{params} params; epoch {epoch}: normalized MAE {mae:.4}, node accuracy {acc:.4}, {secs:.0} s"
    ))
}

// ---------------------------------------------------------------------------
// 10. multi-dataset mix through the command line
// ---------------------------------------------------------------------------

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let paths = common::write_mix(dir.path(), 10);
    let config = dir.path().join("config.yaml");
    std::fs::write(&config, common::mix_config(&paths, 15, "\n")).map_err(err)?;
    let out = dir.path().join("run");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_graphmix"))
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .env("RUST_LOG", "warn")
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(err)?;
    check(status.success(), format!("train exited with {status}"))?;

    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).map_err(err)?).map_err(err)?;
    let entries = metrics["final"]["entries"].as_array().ok_or("no final metrics")?;
    let expected: [(&str, usize, &str, bool); 3] =
        [("props", 3, "mae", false), ("assays", 4, "accuracy", true), ("ranks", 2, "accuracy", true)];
    let mut lines = 0;
    for (task, labels, key_metric, aux) in expected {
        let mut splits = vec!["train", "val", "test"];
        if aux {
            splits.push("test-seen");
        }
        for split in &splits {
            let e = entries
                .iter()
                .find(|e| e["task"] == task && e["split"] == *split)
                .ok_or(format!("no {task} entry on {split}"))?;
            let metrics = e["metrics"].as_object().ok_or("metrics missing")?;
            for (name, m) in metrics {
                let per = m["per_label"].as_array().ok_or("per-label values missing")?;
                check(per.len() == labels, format!("{task}/{name} on {split}: {} per-label values", per.len()))?;
                check(m.get("average").is_some(), format!("{task}/{name} on {split}: no average"))?;
                lines += 1;
            }
            check(metrics[key_metric]["average"].is_f64(), format!("{task}/{key_metric} on {split} undefined"))?;
        }
        if !aux {
            check(
                !entries.iter().any(|e| e["task"] == task && e["split"] == "test-seen"),
                "primary dataset reported on test-seen",
            )?;
        }
    }
    let csv = std::fs::read_to_string(out.join("metrics.csv")).map_err(err)?;
    check(csv.lines().any(|l| l.starts_with("test-seen,assays,") && l.contains(",average,")), "csv lacks test-seen averages")?;

    // Split-partition invariants on the same config.
    let cfg = graphmix::cli::RunConfig::load(&config).map_err(err)?;
    let prepared = prepare(&cfg).map_err(err)?;
    let primary = cfg.primary_index();
    let train_keys: HashSet<&str> = prepared.splits[primary]
        .indices(Split::Train)
        .into_iter()
        .map(|i| prepared.tables[primary].rows[i].key.as_str())
        .collect();
    for (d, (split, table)) in prepared.splits.iter().zip(&prepared.tables).enumerate() {
        check(split.tags.len() == table.len(), "split does not cover the dataset")?;
        let total: usize = Split::ALL.iter().map(|&s| split.count(s)).sum();
        check(total == table.len(), "split tags do not partition the dataset")?;
        for (row, &tag) in table.rows.iter().zip(&split.tags) {
            let seen = train_keys.contains(row.key.as_str());
            if d == primary {
                check(tag != Split::TestSeen, "primary dataset has test-seen rows")?;
            } else {
                check((tag == Split::TestSeen) == seen, format!("{}: test-seen tag mismatch", table.name()))?;
            }
        }
    }
    let aux_seen: usize = (0..prepared.splits.len()).filter(|&d| d != primary).map(|d| prepared.splits[d].count(Split::TestSeen)).sum();
    check(aux_seen > 0, "no test-seen molecules in the mix")?;
    Ok(format!("{lines} metric rows across 3 datasets; {aux_seen} test-seen molecules; partitions hold"))
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: Vec<(usize, &str, fn() -> Outcome)> = vec![
        (1, "gradient correctness", criterion_1),
        (2, "masked loss", criterion_2),
        (3, "hybrid loss", criterion_3),
        (4, "positional-encoding oracles", criterion_4),
        (5, "metric oracles", criterion_5),
        (6, "parser and canonical keys", criterion_6),
        (7, "packing", criterion_7),
        (8, "pipeline determinism", criterion_8),
        (9, "end-to-end overfit", criterion_9),
        (10, "multi-dataset mix", criterion_10),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {id:>2} PASS ({name}, {secs:.1} s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {id:>2} FAIL ({name}, {secs:.1} s): {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
