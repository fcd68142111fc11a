//! Message-passing networks: GNN layers, PE encoders, pooling, level MLPs
//! and per-task heads.

mod layers;
mod optim;
mod params;

pub use layers::{gcn_layer, gin_layer, gine_layer, linear, mlp, pool, GraphIndex, PoolKind};
pub use optim::{Adam, AdamConfig};
pub use params::{glorot, load_checkpoint, save_checkpoint, Params};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use crate::datapipe::Level;
use crate::datapipe::PackedBatch;
use crate::tensorcore::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnType {
    Gcn,
    Gin,
    Gine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum HeadLoss {
    Mae,
    Bce,
    Hybrid { classes: usize, alpha: f64 },
}

impl HeadLoss {
    /// Output units per label.
    pub fn units(&self) -> usize {
        match self {
            HeadLoss::Hybrid { classes, .. } => *classes,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskHeadSpec {
    pub task: String,
    pub level: Level,
    /// Number of labels predicted by the head.
    pub output_dim: usize,
    pub loss: HeadLoss,
    /// Hidden widths of the head MLP (may be empty: a single linear layer).
    #[serde(default)]
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeEncoderConfig {
    pub hidden: usize,
    pub out: usize,
}

fn default_layers() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub gnn_type: GnnType,
    #[serde(default = "default_layers")]
    pub num_layers: usize,
    pub hidden: usize,
    #[serde(default)]
    pub pe_lap: Option<PeEncoderConfig>,
    #[serde(default)]
    pub pe_rwse: Option<PeEncoderConfig>,
    /// Width of the shared two-layer MLP applied per level before the heads.
    pub level_hidden: usize,
    #[serde(default)]
    pub pool: PoolKind,
    #[serde(default)]
    pub heads: Vec<TaskHeadSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub residual: bool,
}

impl ModelConfig {
    /// Named presets (heads left empty). Hidden sizes target the parameter
    /// budgets: ~150k for `toymix`, 4M–6M for the larger presets.
    pub fn preset(name: &str) -> Option<ModelConfig> {
        let (hidden, pe) = match name {
            "toymix" => (112, 16),
            "largemix" | "ultralarge" => (672, 32),
            _ => return None,
        };
        Some(ModelConfig {
            gnn_type: GnnType::Gin,
            num_layers: 4,
            hidden,
            pe_lap: Some(PeEncoderConfig { hidden: pe, out: pe }),
            pe_rwse: Some(PeEncoderConfig { hidden: pe, out: pe }),
            level_hidden: hidden,
            pool: PoolKind::Mean,
            heads: Vec::new(),
            seed: 0,
            residual: false,
        })
    }
}

/// Input widths the model is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub d_node: usize,
    pub d_edge: usize,
    pub lap_k: usize,
    pub rwse_dim: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("batch does not match model inputs: {0}")]
    Dims(String),
    #[error("parameter `{0}` missing or misshapen")]
    Param(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

type Dense = (usize, usize);

#[derive(Debug, Clone, Default)]
struct GnnLayout {
    w: Option<usize>,
    eps: Option<usize>,
    mlp: Vec<Dense>,
    edge: Option<Dense>,
}

#[derive(Debug, Clone, Default)]
struct Layout {
    pe_lap: Vec<Dense>,
    pe_rwse: Vec<Dense>,
    gnn: Vec<GnnLayout>,
    level_node: Vec<Dense>,
    level_graph: Vec<Dense>,
    heads: Vec<Vec<Dense>>,
}

/// Model definition plus its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub dims: InputDims,
    pub params: Params,
    layout: Layout,
}

struct Builder<'a> {
    params: Params,
    rng: ChaCha8Rng,
    shapes_only: bool,
    existing: Option<&'a Params>,
}

impl Builder<'_> {
    fn tensor(&mut self, name: String, t: impl FnOnce(&mut ChaCha8Rng) -> Tensor<f64>) -> Result<usize, ModelError> {
        let t = match self.existing {
            Some(p) => p.get(&name).cloned().ok_or_else(|| ModelError::Param(name.clone()))?,
            None if self.shapes_only => Tensor::zeros(vec![0]),
            None => t(&mut self.rng),
        };
        Ok(self.params.push(name, t))
    }

    fn dense(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> Result<Dense, ModelError> {
        let w = self.tensor(format!("{prefix}.w"), |r| glorot(r, fan_in, fan_out))?;
        let b = self.tensor(format!("{prefix}.b"), |_| Tensor::zeros(vec![fan_out]))?;
        if let Some(p) = self.existing {
            if p.get(&format!("{prefix}.w")).map(|t| t.shape().to_vec()) != Some(vec![fan_in, fan_out]) {
                return Err(ModelError::Param(format!("{prefix}.w")));
            }
        }
        Ok((w, b))
    }

    fn stack(&mut self, prefix: &str, widths: &[usize]) -> Result<Vec<Dense>, ModelError> {
        widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| self.dense(&format!("{prefix}.{i}"), w[0], w[1]))
            .collect()
    }
}

impl Model {
    /// Builds the model and initializes parameters from `config.seed`.
    pub fn new(config: ModelConfig, dims: InputDims) -> Result<Model, ModelError> {
        Self::build(config, dims, None)
    }

    /// Rebuilds a model around previously trained parameters.
    pub fn with_params(config: ModelConfig, dims: InputDims, params: &Params) -> Result<Model, ModelError> {
        Self::build(config, dims, Some(params))
    }

    fn validate(config: &ModelConfig, dims: &InputDims) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if config.num_layers == 0 {
            return bad("num_layers must be at least 1");
        }
        if config.hidden == 0 || config.level_hidden == 0 {
            return bad("hidden widths must be positive");
        }
        if config.heads.is_empty() {
            return bad("at least one task head is required");
        }
        if config.gnn_type == GnnType::Gine && dims.d_edge == 0 {
            return bad("GINE requires edge features");
        }
        if config.pe_lap.is_some() && dims.lap_k == 0 {
            return bad("Laplacian PE encoder enabled but no eigenvectors provided");
        }
        if config.pe_rwse.is_some() && dims.rwse_dim == 0 {
            return bad("RWSE encoder enabled but no random-walk steps provided");
        }
        let mut names: Vec<&str> = config.heads.iter().map(|h| h.task.as_str()).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate task head");
        }
        for h in &config.heads {
            if h.output_dim == 0 || h.hidden.contains(&0) {
                return bad(&format!("head `{}` has a zero width", h.task));
            }
            if let HeadLoss::Hybrid { classes, alpha } = h.loss {
                if classes < 2 || !(0.0..=1.0).contains(&alpha) {
                    return bad(&format!("head `{}` needs classes ≥ 2 and 0 ≤ α ≤ 1", h.task));
                }
            }
        }
        Ok(())
    }

    fn build(config: ModelConfig, dims: InputDims, existing: Option<&Params>) -> Result<Model, ModelError> {
        Self::validate(&config, &dims)?;
        let mut b = Builder {
            params: Params::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            shapes_only: false,
            existing,
        };
        let mut layout = Layout::default();
        let mut d_in = dims.d_node;
        if let Some(pe) = config.pe_lap {
            layout.pe_lap = b.stack("pe.lap", &[2 * dims.lap_k, pe.hidden, pe.out])?;
            d_in += pe.out;
        }
        if let Some(pe) = config.pe_rwse {
            layout.pe_rwse = b.stack("pe.rwse", &[dims.rwse_dim, pe.hidden, pe.out])?;
            d_in += pe.out;
        }
        let h = config.hidden;
        for l in 0..config.num_layers {
            let fan_in = if l == 0 { d_in } else { h };
            let p = format!("gnn.{l}");
            let mut g = GnnLayout::default();
            match config.gnn_type {
                GnnType::Gcn => g.w = Some(b.tensor(format!("{p}.w"), |r| glorot(r, fan_in, h))?),
                GnnType::Gin | GnnType::Gine => {
                    g.eps = Some(b.tensor(format!("{p}.eps"), |_| Tensor::scalar(0.0))?);
                    if config.gnn_type == GnnType::Gine {
                        g.edge = Some(b.dense(&format!("{p}.edge"), dims.d_edge, fan_in)?);
                    }
                    g.mlp = b.stack(&format!("{p}.mlp"), &[fan_in, h, h])?;
                }
            }
            layout.gnn.push(g);
        }
        let lh = config.level_hidden;
        if config.heads.iter().any(|t| t.level == Level::Node) {
            layout.level_node = b.stack("level.node", &[h, lh, lh])?;
        }
        if config.heads.iter().any(|t| t.level == Level::Graph) {
            layout.level_graph = b.stack("level.graph", &[h, lh, lh])?;
        }
        for head in &config.heads {
            let mut widths = vec![lh];
            widths.extend(&head.hidden);
            widths.push(head.output_dim * head.loss.units());
            layout.heads.push(b.stack(&format!("head.{}", head.task), &widths)?);
        }
        let _ = b.shapes_only;
        if let Some(p) = existing {
            if p.len() != b.params.len() {
                return Err(ModelError::Param("unexpected extra parameters in checkpoint".into()));
            }
        }
        Ok(Model {
            config,
            dims,
            params: b.params,
            layout,
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// Runs the network on `batch`, returning one prediction per head in
    /// config order. Node heads emit `[max_nodes × units]`, graph heads
    /// `[max_graphs × units]`. BCE heads emit probabilities, hybrid heads
    /// per-label class probabilities, MAE heads raw values.
    pub fn forward(
        &self,
        tape: &mut Tape<f64>,
        vars: &[Var],
        batch: &PackedBatch,
    ) -> Result<Vec<(String, Var)>, ModelError> {
        let d = self.dims;
        if batch.d_node != d.d_node
            || (self.config.gnn_type == GnnType::Gine && batch.d_edge != d.d_edge)
            || (self.config.pe_lap.is_some() && batch.lap_k != d.lap_k)
            || (self.config.pe_rwse.is_some() && batch.rwse_dim != d.rwse_dim)
        {
            return Err(ModelError::Dims(format!(
                "batch widths node {} edge {} lap {} rwse {}, model expects {:?}",
                batch.d_node, batch.d_edge, batch.lap_k, batch.rwse_dim, d
            )));
        }
        let pairs = |ls: &[Dense]| -> Vec<(Var, Var)> { ls.iter().map(|&(w, b)| (vars[w], vars[b])).collect() };
        let cap = batch.capacity;
        let mn = cap.max_nodes;

        let x = tape.constant(Tensor::new(vec![mn, d.d_node], batch.node_features.clone())?);
        let mut parts = vec![x];
        if self.config.pe_lap.is_some() {
            let v = tape.constant(Tensor::new(vec![mn, d.lap_k], batch.lap_vecs.clone())?);
            let l = tape.constant(Tensor::new(vec![mn, d.lap_k], batch.lap_vals.clone())?);
            let input = tape.concat(&[v, l], 1)?;
            parts.push(mlp(tape, input, &pairs(&self.layout.pe_lap), false)?);
        }
        if self.config.pe_rwse.is_some() {
            let r = tape.constant(Tensor::new(vec![mn, d.rwse_dim], batch.rwse.clone())?);
            parts.push(mlp(tape, r, &pairs(&self.layout.pe_rwse), false)?);
        }
        let mut h = if parts.len() == 1 { x } else { tape.concat(&parts, 1)? };

        let g = GraphIndex {
            num_nodes: mn,
            src: &batch.edge_src,
            dst: &batch.edge_dst,
            edge_mask: &batch.edge_mask,
        };
        let e = if self.config.gnn_type == GnnType::Gine {
            Some(tape.constant(Tensor::new(vec![cap.max_edges, d.d_edge], batch.edge_features.clone())?))
        } else {
            None
        };
        for layer in &self.layout.gnn {
            let next = match self.config.gnn_type {
                GnnType::Gcn => gcn_layer(tape, h, vars[layer.w.expect("gcn weight")], &g)?,
                GnnType::Gin => {
                    let z = gin_layer(tape, h, vars[layer.eps.expect("eps")], &pairs(&layer.mlp), &g)?;
                    tape.relu(z)
                }
                GnnType::Gine => {
                    let (ew, eb) = layer.edge.expect("edge projection");
                    let z = gine_layer(
                        tape,
                        h,
                        e.expect("edge features"),
                        (vars[ew], vars[eb]),
                        vars[layer.eps.expect("eps")],
                        &pairs(&layer.mlp),
                        &g,
                    )?;
                    tape.relu(z)
                }
            };
            h = if self.config.residual && tape.shape(h) == tape.shape(next) {
                tape.add(h, next)?
            } else {
                next
            };
        }

        let node_repr = if self.layout.level_node.is_empty() {
            None
        } else {
            Some(mlp(tape, h, &pairs(&self.layout.level_node), true)?)
        };
        let graph_repr = if self.layout.level_graph.is_empty() {
            None
        } else {
            let pooled = pool(tape, h, &batch.node_graph, &batch.node_mask, cap.max_graphs, self.config.pool)?;
            Some(mlp(tape, pooled, &pairs(&self.layout.level_graph), true)?)
        };

        let mut out = Vec::with_capacity(self.config.heads.len());
        for (spec, layers) in self.config.heads.iter().zip(&self.layout.heads) {
            let input = match spec.level {
                Level::Node => node_repr.expect("node level MLP exists"),
                Level::Graph => graph_repr.expect("graph level MLP exists"),
            };
            let raw = mlp(tape, input, &pairs(layers), false)?;
            let y = match spec.loss {
                HeadLoss::Mae => raw,
                HeadLoss::Bce => tape.sigmoid(raw),
                HeadLoss::Hybrid { classes, .. } => {
                    let rows = tape.shape(raw)[0];
                    let r = tape.reshape(raw, vec![rows * spec.output_dim, classes])?;
                    let s = tape.row_softmax(r)?;
                    tape.reshape(s, vec![rows, spec.output_dim * classes])?
                }
            };
            out.push((spec.task.clone(), y));
        }
        Ok(out)
    }

    /// Forward pass without gradient tracking; returns plain values.
    pub fn predict(&self, batch: &PackedBatch) -> Result<Vec<(String, Tensor<f64>)>, ModelError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.tensors().iter().map(|t| tape.constant(t.clone())).collect();
        let outs = self.forward(&mut tape, &vars, batch)?;
        Ok(outs.into_iter().map(|(n, v)| (n, tape.value(v).clone())).collect())
    }
}
