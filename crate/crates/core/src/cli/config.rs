use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::datapipe::{DatasetSchema, EpochConfig, FeaturizeSettings, Ratios};
use crate::gnn::{AdamConfig, GnnType, ModelConfig, PeEncoderConfig, PoolKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    /// CSV path, relative to the config file unless absolute.
    pub path: PathBuf,
    pub schema: DatasetSchema,
    /// Keep probability for this dataset's training molecules each epoch.
    #[serde(default)]
    pub sampling_weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub ratios: Ratios,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            ratios: Ratios::default(),
            seed: 0,
        }
    }
}

/// Model preset plus optional overrides of individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub preset: String,
    pub gnn_type: Option<GnnType>,
    pub num_layers: Option<usize>,
    pub hidden: Option<usize>,
    pub level_hidden: Option<usize>,
    pub pe_lap: Option<PeEncoderConfig>,
    pub pe_rwse: Option<PeEncoderConfig>,
    /// Drops both PE encoders.
    pub no_pe: bool,
    pub pool: Option<PoolKind>,
    pub residual: bool,
    /// Hidden widths of every task head.
    pub head_hidden: Vec<usize>,
    pub hybrid_alpha: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            preset: "toymix".to_string(),
            gnn_type: None,
            num_layers: None,
            hidden: None,
            level_hidden: None,
            pe_lap: None,
            pe_rwse: None,
            no_pe: false,
            pool: None,
            residual: false,
            head_hidden: Vec::new(),
            hybrid_alpha: 0.5,
        }
    }
}

/// Default epoch count of each preset.
pub fn preset_epochs(preset: &str) -> Option<usize> {
    match preset {
        "toymix" => Some(300),
        "largemix" => Some(200),
        "ultralarge" => Some(50),
        _ => None,
    }
}

impl ModelSection {
    /// Preset with overrides applied; heads are left empty.
    pub fn resolve(&self, seed: u64) -> Result<ModelConfig, CliError> {
        let mut m = ModelConfig::preset(&self.preset)
            .ok_or_else(|| CliError::Config(format!("unknown model preset `{}`", self.preset)))?;
        if let Some(v) = self.gnn_type {
            m.gnn_type = v;
        }
        if let Some(v) = self.num_layers {
            m.num_layers = v;
        }
        if let Some(v) = self.hidden {
            m.hidden = v;
            m.level_hidden = v;
        }
        if let Some(v) = self.level_hidden {
            m.level_hidden = v;
        }
        if self.pe_lap.is_some() {
            m.pe_lap = self.pe_lap;
        }
        if self.pe_rwse.is_some() {
            m.pe_rwse = self.pe_rwse;
        }
        if self.no_pe {
            m.pe_lap = None;
            m.pe_rwse = None;
        }
        if let Some(v) = self.pool {
            m.pool = v;
        }
        m.residual = self.residual;
        m.seed = seed;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimSection {
    /// Defaults to the preset's epoch count.
    pub epochs: Option<usize>,
    pub adam: AdamConfig,
    pub batches: EpochConfig,
    pub eval_every: usize,
}

impl Default for OptimSection {
    fn default() -> Self {
        OptimSection {
            epochs: None,
            adam: AdamConfig::default(),
            batches: EpochConfig::default(),
            eval_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub datasets: Vec<DatasetEntry>,
    /// Dataset whose training split defines `test-seen`; the first by default.
    #[serde(default)]
    pub primary: Option<String>,
    #[serde(default)]
    pub featurize: FeaturizeSettings,
    #[serde(default)]
    pub splits: SplitSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub optim: OptimSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default = "default_batch_size")]
    pub featurize_batch_size: usize,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn default_batch_size() -> usize {
    1000
}

impl RunConfig {
    pub fn from_yaml(text: &str) -> Result<RunConfig, CliError> {
        let cfg: RunConfig = serde_yaml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config and makes its relative paths absolute with respect to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_yaml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = std::fs::canonicalize(base).unwrap_or_else(|_| base.to_path_buf());
        cfg.rebase(&base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in &mut self.datasets {
            fix(&mut d.path);
        }
        if let Some(p) = &mut self.cache_dir {
            fix(p);
        }
        if let Some(p) = &mut self.output_dir {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.datasets.is_empty() {
            return bad("no datasets configured".into());
        }
        for d in &self.datasets {
            d.schema.validate().map_err(|e| CliError::Config(e.to_string()))?;
            if let Some(w) = d.sampling_weight {
                if !(w > 0.0 && w <= 1.0) {
                    return bad(format!("sampling weight of `{}` must be in (0, 1]", d.schema.name));
                }
            }
        }
        if let Some(p) = &self.primary {
            if !self.datasets.iter().any(|d| &d.schema.name == p) {
                return bad(format!("primary dataset `{p}` not configured"));
            }
        }
        self.featurize.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.splits.ratios.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.model.resolve(self.seed)?;
        if self.workers == 0 || self.featurize_batch_size == 0 {
            return bad("workers and featurize_batch_size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.model.hybrid_alpha) {
            return bad("hybrid_alpha must be in [0, 1]".into());
        }
        if self.optim.epochs.is_none() && preset_epochs(&self.model.preset).is_none() {
            return bad("optim.epochs required for this preset".into());
        }
        Ok(())
    }

    pub fn primary_index(&self) -> usize {
        self.primary
            .as_ref()
            .and_then(|p| self.datasets.iter().position(|d| &d.schema.name == p))
            .unwrap_or(0)
    }

    pub fn epochs(&self) -> usize {
        self.optim
            .epochs
            .or_else(|| preset_epochs(&self.model.preset))
            .unwrap_or(0)
    }

    pub fn epoch_config(&self) -> EpochConfig {
        let mut e = self.optim.batches.clone();
        if self.datasets.iter().any(|d| d.sampling_weight.is_some()) {
            e.sampling_weights = self.datasets.iter().map(|d| d.sampling_weight.unwrap_or(1.0)).collect();
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
datasets:
  - path: a.csv
    schema:
      name: a
      tasks:
        - {name: y, level: graph, kind: regression, columns: [y]}
";

    #[test]
    fn minimal_config_gets_preset_defaults() {
        let cfg = RunConfig::from_yaml(MINIMAL).unwrap();
        assert_eq!(cfg.epochs(), 300);
        assert_eq!(cfg.workers, 1);
        let m = cfg.model.resolve(cfg.seed).unwrap();
        assert_eq!(m.num_layers, 4);
        assert_eq!(m.gnn_type, GnnType::Gin);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}learning_rate: 0.1\n");
        assert!(matches!(RunConfig::from_yaml(&text), Err(CliError::Config(_))));
        let text = format!("{MINIMAL}optim: {{adam: {{lr: 0.1, momentum: 0.9}}}}\n");
        assert!(matches!(RunConfig::from_yaml(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for extra in [
            "model: {preset: huge}\n",
            "splits: {ratios: {train: 0.9, val: 0.2, test: 0.1}}\n",
            "primary: b\n",
            "workers: 0\n",
        ] {
            assert!(RunConfig::from_yaml(&format!("{MINIMAL}{extra}")).is_err(), "{extra}");
        }
        assert!(RunConfig::from_yaml("datasets: []\n").is_err());
    }

    #[test]
    fn overrides_apply_on_top_of_preset() {
        let text = format!("{MINIMAL}model: {{preset: largemix, hidden: 64, no_pe: true, gnn_type: gcn}}\noptim: {{epochs: 3}}\n");
        let cfg = RunConfig::from_yaml(&text).unwrap();
        let m = cfg.model.resolve(7).unwrap();
        assert_eq!((m.hidden, m.level_hidden, m.gnn_type, m.seed), (64, 64, GnnType::Gcn, 7));
        assert!(m.pe_lap.is_none() && m.pe_rwse.is_none());
        assert_eq!(cfg.epochs(), 3);
    }
}
