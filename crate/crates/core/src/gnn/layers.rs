use serde::{Deserialize, Serialize};

use crate::tensorcore::{Tape, Tensor, TensorError, Var};

/// Directed edge list of a (packed) graph. Edges with mask 0 are padding
/// and carry no message.
#[derive(Debug, Clone, Copy)]
pub struct GraphIndex<'a> {
    pub num_nodes: usize,
    pub src: &'a [usize],
    pub dst: &'a [usize],
    pub edge_mask: &'a [f64],
}

impl GraphIndex<'_> {
    /// `1 + in-degree` counting only real edges.
    fn self_loop_degrees(&self) -> Vec<f64> {
        let mut deg = vec![1.0; self.num_nodes];
        for (&t, &m) in self.dst.iter().zip(self.edge_mask) {
            deg[t] += m;
        }
        deg
    }
}

/// `x · w (+ b)`.
pub fn linear(tape: &mut Tape<f64>, x: Var, w: Var, b: Option<Var>) -> Result<Var, TensorError> {
    let y = tape.matmul(x, w)?;
    match b {
        Some(b) => tape.add(y, b),
        None => Ok(y),
    }
}

/// Stack of linear layers with relu between them, and after the last one
/// when `final_relu` is set.
pub fn mlp(tape: &mut Tape<f64>, x: Var, layers: &[(Var, Var)], final_relu: bool) -> Result<Var, TensorError> {
    let mut h = x;
    for (i, &(w, b)) in layers.iter().enumerate() {
        h = linear(tape, h, w, Some(b))?;
        if i + 1 < layers.len() || final_relu {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

/// `relu(D̂^(−1/2) (A + I) D̂^(−1/2) H W)`.
pub fn gcn_layer(tape: &mut Tape<f64>, h: Var, w: Var, g: &GraphIndex) -> Result<Var, TensorError> {
    let deg = g.self_loop_degrees();
    let hw = tape.matmul(h, w)?;
    let coef: Vec<f64> = g
        .src
        .iter()
        .zip(g.dst)
        .zip(g.edge_mask)
        .map(|((&s, &t), &m)| m / (deg[s] * deg[t]).sqrt())
        .collect();
    let self_coef: Vec<f64> = deg.iter().map(|d| 1.0 / d).collect();
    let msgs = tape.gather_rows(hw, g.src)?;
    let coef = tape.constant(Tensor::vector(coef));
    let msgs = tape.scale_rows(msgs, coef)?;
    let agg = tape.segment_sum(msgs, g.dst, g.num_nodes)?;
    let self_coef = tape.constant(Tensor::vector(self_coef));
    let own = tape.scale_rows(hw, self_coef)?;
    let z = tape.add(own, agg)?;
    Ok(tape.relu(z))
}

fn combine(tape: &mut Tape<f64>, h: Var, eps: Var, agg: Var) -> Result<Var, TensorError> {
    // (1 + ε)·h + agg
    let eh = tape.mul(h, eps)?;
    let s = tape.add(h, eh)?;
    tape.add(s, agg)
}

/// `MLP((1 + ε)·h_v + Σ_{u→v} h_u)`.
pub fn gin_layer(
    tape: &mut Tape<f64>,
    h: Var,
    eps: Var,
    layers: &[(Var, Var)],
    g: &GraphIndex,
) -> Result<Var, TensorError> {
    let msgs = tape.gather_rows(h, g.src)?;
    let mask = tape.constant(Tensor::vector(g.edge_mask.to_vec()));
    let msgs = tape.scale_rows(msgs, mask)?;
    let agg = tape.segment_sum(msgs, g.dst, g.num_nodes)?;
    let z = combine(tape, h, eps, agg)?;
    mlp(tape, z, layers, false)
}

/// `MLP((1 + ε)·h_v + Σ_{u→v} relu(h_u + e_uv W_e + b_e))`; edge features
/// are projected to the width of `h`.
pub fn gine_layer(
    tape: &mut Tape<f64>,
    h: Var,
    e: Var,
    edge_proj: (Var, Var),
    eps: Var,
    layers: &[(Var, Var)],
    g: &GraphIndex,
) -> Result<Var, TensorError> {
    let ep = linear(tape, e, edge_proj.0, Some(edge_proj.1))?;
    let hs = tape.gather_rows(h, g.src)?;
    let m = tape.add(hs, ep)?;
    let m = tape.relu(m);
    let mask = tape.constant(Tensor::vector(g.edge_mask.to_vec()));
    let m = tape.scale_rows(m, mask)?;
    let agg = tape.segment_sum(m, g.dst, g.num_nodes)?;
    let z = combine(tape, h, eps, agg)?;
    mlp(tape, z, layers, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    #[default]
    Mean,
    Sum,
}

/// Per-graph sum or mean of node rows, ignoring rows with mask 0. Graphs
/// without real nodes pool to zero.
pub fn pool(
    tape: &mut Tape<f64>,
    h: Var,
    node_graph: &[usize],
    node_mask: &[f64],
    num_graphs: usize,
    kind: PoolKind,
) -> Result<Var, TensorError> {
    let weights = match kind {
        PoolKind::Sum => node_mask.to_vec(),
        PoolKind::Mean => {
            let mut counts = vec![0.0; num_graphs];
            for (&gi, &m) in node_graph.iter().zip(node_mask) {
                counts[gi] += m;
            }
            node_graph
                .iter()
                .zip(node_mask)
                .map(|(&gi, &m)| if counts[gi] > 0.0 { m / counts[gi] } else { 0.0 })
                .collect()
        }
    };
    let w = tape.constant(Tensor::vector(weights));
    let hw = tape.scale_rows(h, w)?;
    tape.segment_sum(hw, node_graph, num_graphs)
}
