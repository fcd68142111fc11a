//! Config-driven commands: ingest, split, train and eval.

mod config;

pub use config::{preset_epochs, DatasetEntry, ModelSection, OptimSection, RunConfig, SplitSection};

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datapipe::{
    featurize_all, ingest, make_splits, DataError, FeaturizeStats, IngestReport, JointTable, LabelTable, MolCache,
    MultiTaskData, SparsityReport, Split, SplitAssignment,
};
use crate::featurize::NormStats;
use crate::gnn::{load_checkpoint, save_checkpoint, InputDims, Model, ModelConfig, ModelError};
use crate::molparse::MolGraph;
use crate::train::{evaluate, fit, heads_for, EpochRecord, MetricReport, TrainError, TrainOptions};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// Process exit code per error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Model(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Data(d) => CliError::Data(d),
            TrainError::Model(m) => CliError::Model(m),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    #[serde(flatten)]
    pub sparsity: SparsityReport,
    pub rows_read: usize,
    pub rows_skipped: usize,
    pub duplicates_merged: usize,
    pub label_conflicts: usize,
}

impl DatasetStats {
    fn new(table: &LabelTable, report: &IngestReport) -> Self {
        DatasetStats {
            sparsity: table.sparsity(),
            rows_read: report.rows_read,
            rows_skipped: report.skipped.len(),
            duplicates_merged: report.merged,
            label_conflicts: report.conflicts,
        }
    }
}

/// Reads every configured dataset; an empty dataset is an error.
pub fn ingest_all(cfg: &RunConfig) -> Result<(Vec<LabelTable>, Vec<DatasetStats>), CliError> {
    let mut tables = Vec::new();
    let mut stats = Vec::new();
    for d in &cfg.datasets {
        let (table, report) = ingest(&d.path, &d.schema)?;
        if table.is_empty() {
            return Err(DataError::Empty(d.schema.name.clone()).into());
        }
        stats.push(DatasetStats::new(&table, &report));
        tables.push(table);
    }
    Ok((tables, stats))
}

/// Table-style summary lines of dataset statistics.
pub fn format_stats(stats: &[DatasetStats]) -> String {
    let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.1}"));
    let mut out = format!(
        "{:<16} {:>8} {:>12} {:>14} {:>12} {:>14}\n",
        "dataset", "# mols", "# G. labels", "% G. sparsity", "# N. labels", "% N. sparsity"
    );
    for s in stats {
        let r = &s.sparsity;
        out.push_str(&format!(
            "{:<16} {:>8} {:>12} {:>14} {:>12} {:>14}\n",
            r.dataset,
            r.molecules,
            r.graph_labels,
            pct(r.graph_sparsity),
            r.node_labels,
            pct(r.node_sparsity)
        ));
    }
    out
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<Vec<DatasetStats>, CliError> {
    let (_, stats) = ingest_all(cfg)?;
    if let Some(dir) = &cfg.output_dir {
        let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
        write_file(&dir.join("ingest_stats.json"), json)?;
    }
    Ok(stats)
}

fn write_splits(dir: &Path, splits: &[SplitAssignment]) -> Result<(), CliError> {
    for s in splits {
        write_file(&dir.join("splits").join(format!("{}.json", s.dataset)), s.to_json())?;
    }
    Ok(())
}

/// Computes splits with `seed` (or the configured one) and writes one JSON
/// file per dataset under `<out>/splits/`.
pub fn cmd_split(cfg: &RunConfig, seed: Option<u64>, out: Option<&Path>) -> Result<Vec<SplitAssignment>, CliError> {
    let (tables, _) = ingest_all(cfg)?;
    let splits = make_splits(&tables, cfg.primary_index(), cfg.splits.ratios, seed.unwrap_or(cfg.splits.seed))?;
    if let Some(dir) = out.or(cfg.output_dir.as_deref()) {
        write_splits(dir, &splits)?;
    }
    Ok(splits)
}

/// Everything needed to train or evaluate: normalized joint data, splits
/// and the model inputs.
pub struct Prepared {
    pub tables: Vec<LabelTable>,
    pub stats: Vec<DatasetStats>,
    pub splits: Vec<SplitAssignment>,
    pub data: MultiTaskData,
    pub featurize: FeaturizeStats,
    pub dims: InputDims,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let (tables, stats) = ingest_all(cfg)?;
    let splits = make_splits(&tables, cfg.primary_index(), cfg.splits.ratios, cfg.splits.seed)?;
    let joint = JointTable::union(&tables)?;
    let pairs: Vec<(&str, &MolGraph)> = joint.keys.iter().map(String::as_str).zip(&joint.graphs).collect();
    let cache = cfg.cache_dir.as_ref().map(|d| MolCache::new(d, &cfg.featurize));
    let (features, featurize) =
        featurize_all(&pairs, &cfg.featurize, cache.as_ref(), cfg.workers, cfg.featurize_batch_size)?;
    let dims = InputDims {
        d_node: cfg.featurize.features.node_dim().map_err(DataError::from)?,
        d_edge: cfg.featurize.features.edge_dim().map_err(DataError::from)?,
        lap_k: cfg.featurize.pe.lap_k,
        rwse_dim: cfg.featurize.pe.rwse_steps.len(),
    };
    let data = MultiTaskData::new(joint, &splits, features)?;
    Ok(Prepared {
        tables,
        stats,
        splits,
        data,
        featurize,
        dims,
    })
}

pub fn build_model(cfg: &RunConfig, prepared: &Prepared) -> Result<Model, CliError> {
    let mut mc = cfg.model.resolve(cfg.seed)?;
    mc.heads = heads_for(prepared.data.tasks(), &cfg.model.head_hidden, cfg.model.hybrid_alpha);
    Ok(Model::new(mc, prepared.dims)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub dataset: String,
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub train_loss: f64,
    /// `task/metric` → average over labels on the validation split.
    pub val: BTreeMap<String, Option<f64>>,
}

impl EpochSummary {
    fn new(r: &EpochRecord) -> Self {
        let mut val = BTreeMap::new();
        for e in r.val.iter().flat_map(|v| &v.entries) {
            for (m, s) in &e.metrics {
                val.insert(format!("{}/{m}", e.task), s.average);
            }
        }
        EpochSummary {
            epoch: r.epoch,
            train_loss: r.train_loss,
            val,
        }
    }
}

/// Run-dependent facts that do not affect results; excluded from the hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RuntimeInfo {
    pub wall_clock_secs: f64,
    pub featurize: FeaturizeStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub model: ModelConfig,
    pub dims: InputDims,
    pub datasets: Vec<DatasetStats>,
    pub splits: Vec<SplitCounts>,
    pub normalization: BTreeMap<String, NormStats>,
    pub param_count: usize,
    pub epochs: Vec<EpochSummary>,
    pub final_metrics: MetricReport,
    pub seed: u64,
    pub runtime: RuntimeInfo,
    /// SHA-256 of the manifest with `runtime` and `hash` blanked.
    pub hash: String,
}

impl RunManifest {
    pub fn compute_hash(&self) -> String {
        let mut m = self.clone();
        m.runtime = RuntimeInfo::default();
        m.hash = String::new();
        let bytes = serde_json::to_vec(&m).expect("manifest serializes");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointMeta {
    config: RunConfig,
    model: ModelConfig,
    dims: InputDims,
}

fn epochs_csv(epochs: &[EpochSummary]) -> String {
    let keys: BTreeSet<&String> = epochs.iter().flat_map(|e| e.val.keys()).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["epoch".to_string(), "train_loss".to_string()];
    header.extend(keys.iter().map(|k| format!("val/{k}")));
    w.write_record(&header).expect("in-memory write");
    for e in epochs {
        let mut row = vec![e.epoch.to_string(), format!("{}", e.train_loss)];
        row.extend(keys.iter().map(|k| e.val.get(*k).copied().flatten().map_or(String::new(), |v| format!("{v}"))));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Trains per the config and writes `model.ckpt`, `manifest.json`,
/// `metrics.json`, `metrics.csv`, `epochs.csv` and split files into `out`.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    let prepared = prepare(cfg)?;
    let mut model = build_model(cfg, &prepared)?;
    log::info!("model has {} parameters", model.num_params());
    let opts = TrainOptions {
        epochs: cfg.epochs(),
        adam: cfg.optim.adam,
        batches: cfg.epoch_config(),
        seed: cfg.seed,
        eval_every: cfg.optim.eval_every,
    };
    let records = fit(&mut model, &prepared.data, &opts, |_, _| true)?;
    let final_metrics = evaluate(&model, &prepared.data, &Split::ALL, &opts.batches)?;

    write_splits(out, &prepared.splits)?;
    let meta = CheckpointMeta {
        config: cfg.clone(),
        model: model.config.clone(),
        dims: model.dims,
    };
    let ckpt = out.join("model.ckpt");
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    save_checkpoint(&ckpt, &serde_json::to_string(&meta).expect("meta serializes"), &model.params)
        .map_err(|e| io_err(&ckpt, e))?;

    let epochs: Vec<EpochSummary> = records.iter().map(EpochSummary::new).collect();
    let mut manifest = RunManifest {
        config: cfg.clone(),
        model: model.config.clone(),
        dims: model.dims,
        datasets: prepared.stats.clone(),
        splits: prepared
            .splits
            .iter()
            .map(|s| SplitCounts {
                dataset: s.dataset.clone(),
                counts: Split::ALL.iter().map(|&x| (x.name().to_string(), s.count(x))).collect(),
            })
            .collect(),
        normalization: prepared
            .data
            .tasks()
            .iter()
            .zip(&prepared.data.norms)
            .map(|(t, n)| (t.name.clone(), n.clone()))
            .collect(),
        param_count: model.num_params(),
        epochs,
        final_metrics,
        seed: cfg.seed,
        runtime: RuntimeInfo {
            wall_clock_secs: start.elapsed().as_secs_f64(),
            featurize: prepared.featurize,
        },
        hash: String::new(),
    };
    manifest.hash = manifest.compute_hash();

    write_file(
        &out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    let metrics_json = serde_json::json!({
        "final": manifest.final_metrics,
        "epochs": manifest.epochs,
    });
    write_file(&out.join("metrics.json"), serde_json::to_string_pretty(&metrics_json).expect("json"))?;
    write_file(&out.join("metrics.csv"), manifest.final_metrics.to_csv())?;
    write_file(&out.join("epochs.csv"), epochs_csv(&manifest.epochs))?;
    Ok(manifest)
}

/// Re-evaluates a checkpoint on one split. The data are rebuilt from the
/// config stored in the checkpoint. Writes `eval_<split>.json` and
/// `eval_<split>.csv` next to the checkpoint.
pub fn cmd_eval(checkpoint: &Path, split: Split) -> Result<MetricReport, CliError> {
    let (meta, params) = load_checkpoint(checkpoint).map_err(|e| match e {
        crate::binfile::BinFileError::NotFound(p) => CliError::Io(format!("checkpoint not found: {p}")),
        other => CliError::Data(DataError::Schema(format!("unreadable checkpoint: {other}"))),
    })?;
    let meta: CheckpointMeta =
        serde_json::from_str(&meta).map_err(|e| CliError::Config(format!("checkpoint metadata: {e}")))?;
    let prepared = prepare(&meta.config)?;
    if prepared.dims != meta.dims {
        return Err(CliError::Config("dataset features no longer match the checkpoint".into()));
    }
    let model = Model::with_params(meta.model, meta.dims, &params)?;
    let report = evaluate(&model, &prepared.data, &[split], &meta.config.epoch_config())?;
    let dir: PathBuf = checkpoint.parent().map(Path::to_path_buf).unwrap_or_default();
    write_file(
        &dir.join(format!("eval_{}.json", split.name())),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    write_file(&dir.join(format!("eval_{}.csv", split.name())), report.to_csv())?;
    Ok(report)
}
