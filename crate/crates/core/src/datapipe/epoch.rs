use std::collections::HashMap;
use std::sync::mpsc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{pack_ffd, Capacity, DataError, GraphSize, LabelTable, Level, PackedBatch, Split, SplitAssignment, TaskKind};
use crate::featurize::{apply_norm, fit_norm, FeaturizedGraph, NormKind, NormStats};
use crate::molparse::MolGraph;

/// A task of the joint table, tied to the dataset that labels it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInfo {
    pub name: String,
    pub dataset: usize,
    pub dataset_name: String,
    pub level: Level,
    pub kind: TaskKind,
    pub classes: Option<usize>,
    pub columns: Vec<String>,
    pub norm: NormKind,
}

impl TaskInfo {
    pub fn width(&self) -> usize {
        self.columns.len()
    }
}

/// Union of several datasets keyed by canonical key. Molecules appear in
/// order of first occurrence, scanning datasets in order.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    pub datasets: Vec<String>,
    pub tasks: Vec<TaskInfo>,
    pub keys: Vec<String>,
    pub graphs: Vec<MolGraph>,
    /// `rows[m][d]`: row of molecule `m` in dataset `d`, if present.
    pub rows: Vec<Vec<Option<usize>>>,
    /// `labels[t][m]`: labels of task `t` for molecule `m` in the table
    /// layout, all NaN when the task's dataset lacks the molecule.
    pub labels: Vec<Vec<Vec<f64>>>,
}

impl JointTable {
    pub fn union(tables: &[LabelTable]) -> Result<JointTable, DataError> {
        let mut tasks = Vec::new();
        for (d, t) in tables.iter().enumerate() {
            for task in &t.schema.tasks {
                if tasks.iter().any(|x: &TaskInfo| x.name == task.name) {
                    return Err(DataError::Schema(format!("task `{}` declared twice", task.name)));
                }
                tasks.push(TaskInfo {
                    name: task.name.clone(),
                    dataset: d,
                    dataset_name: t.name().to_string(),
                    level: task.level,
                    kind: task.kind,
                    classes: task.classes,
                    columns: task.columns.clone(),
                    norm: task.norm,
                });
            }
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut keys = Vec::new();
        let mut graphs = Vec::new();
        let mut rows: Vec<Vec<Option<usize>>> = Vec::new();
        for (d, t) in tables.iter().enumerate() {
            for (r, row) in t.rows.iter().enumerate() {
                let m = *index.entry(row.key.as_str()).or_insert_with(|| {
                    keys.push(row.key.clone());
                    graphs.push(row.graph.clone());
                    rows.push(vec![None; tables.len()]);
                    keys.len() - 1
                });
                rows[m][d] = Some(r);
            }
        }
        let mut labels = Vec::with_capacity(tasks.len());
        for task in &tasks {
            let t_index = tables[task.dataset]
                .schema
                .tasks
                .iter()
                .position(|x| x.name == task.name)
                .expect("task came from this schema");
            let per_mol = (0..keys.len())
                .map(|m| match rows[m][task.dataset] {
                    Some(r) => tables[task.dataset].rows[r].labels[t_index].clone(),
                    None => {
                        let n = match task.level {
                            Level::Graph => 1,
                            Level::Node => graphs[m].num_atoms(),
                        };
                        vec![f64::NAN; n * task.width()]
                    }
                })
                .collect();
            labels.push(per_mol);
        }
        Ok(JointTable {
            datasets: tables.iter().map(|t| t.name().to_string()).collect(),
            tasks,
            keys,
            graphs,
            rows,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// `tags[m][d]`: split of molecule `m` within dataset `d`.
    pub fn tags(&self, splits: &[SplitAssignment]) -> Result<Vec<Vec<Option<Split>>>, DataError> {
        if splits.len() != self.datasets.len() {
            return Err(DataError::Split(format!(
                "{} split assignments for {} datasets",
                splits.len(),
                self.datasets.len()
            )));
        }
        self.rows
            .iter()
            .map(|per_ds| {
                per_ds
                    .iter()
                    .zip(splits)
                    .map(|(r, s)| match r {
                        None => Ok(None),
                        Some(r) => s
                            .tags
                            .get(*r)
                            .copied()
                            .map(Some)
                            .ok_or_else(|| DataError::Split(format!("no tag for row {r} of `{}`", s.dataset))),
                    })
                    .collect()
            })
            .collect()
    }
}

/// Joint table with tensors, split tags and fitted label normalization.
#[derive(Debug, Clone)]
pub struct MultiTaskData {
    pub joint: JointTable,
    pub tags: Vec<Vec<Option<Split>>>,
    pub features: Vec<FeaturizedGraph>,
    /// Per task; identity for non-regression tasks.
    pub norms: Vec<NormStats>,
}

/// A packed batch with per-task targets laid out like the model outputs:
/// `[max_graphs × labels]` or `[max_nodes × labels]`, NaN where missing.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub batch: PackedBatch,
    pub targets: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpochConfig {
    pub capacity: Capacity,
    pub shuffle: bool,
    /// Batches assembled ahead by a producer thread; 0 assembles inline.
    pub prefetch: usize,
    /// Optional per-dataset keep probability for training molecules; empty
    /// keeps everything.
    pub sampling_weights: Vec<f64>,
}

impl Default for EpochConfig {
    fn default() -> Self {
        EpochConfig {
            capacity: Capacity::default(),
            shuffle: true,
            prefetch: 0,
            sampling_weights: Vec::new(),
        }
    }
}

impl MultiTaskData {
    /// Fits normalization on training labels only and applies it in place.
    pub fn new(
        mut joint: JointTable,
        splits: &[SplitAssignment],
        features: Vec<FeaturizedGraph>,
    ) -> Result<MultiTaskData, DataError> {
        if features.len() != joint.len() {
            return Err(DataError::Schema(format!(
                "{} featurized graphs for {} molecules",
                features.len(),
                joint.len()
            )));
        }
        let tags = joint.tags(splits)?;
        let mut norms = Vec::with_capacity(joint.tasks.len());
        for (t, task) in joint.tasks.iter().enumerate() {
            let kinds = vec![task.norm; task.width()];
            let mut flat = Vec::new();
            let mut row_splits = Vec::new();
            for (m, values) in joint.labels[t].iter().enumerate() {
                // Rows outside this dataset's training split are excluded from fitting.
                let s = match tags[m][task.dataset] {
                    Some(Split::Train) => Split::Train,
                    _ => Split::Val,
                };
                flat.extend_from_slice(values);
                row_splits.extend(std::iter::repeat_n(s, values.len() / task.width()));
            }
            let stats = fit_norm(&task.columns, &kinds, &flat, &row_splits)?;
            for values in joint.labels[t].iter_mut() {
                apply_norm(values, &stats);
            }
            norms.push(stats);
        }
        Ok(MultiTaskData {
            joint,
            tags,
            features,
            norms,
        })
    }

    pub fn tasks(&self) -> &[TaskInfo] {
        &self.joint.tasks
    }

    /// Molecules tagged `split` in at least one dataset, ascending.
    pub fn molecules(&self, split: Split) -> Vec<usize> {
        (0..self.joint.len())
            .filter(|&m| self.tags[m].contains(&Some(split)))
            .collect()
    }

    /// Molecule groups of one epoch over `split`. With shuffling, molecule
    /// and pack order are drawn from stream `epoch` of a generator seeded
    /// with `seed`.
    pub fn epoch_plan(&self, split: Split, cfg: &EpochConfig, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>, DataError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        let mut mols = self.molecules(split);
        if split == Split::Train && !cfg.sampling_weights.is_empty() {
            if cfg.sampling_weights.len() != self.joint.datasets.len() {
                return Err(DataError::Schema("one sampling weight per dataset required".into()));
            }
            mols.retain(|&m| {
                let w = self.tags[m]
                    .iter()
                    .zip(&cfg.sampling_weights)
                    .filter(|(t, _)| **t == Some(Split::Train))
                    .map(|(_, &w)| w)
                    .fold(0.0, f64::max);
                rng.random::<f64>() < w
            });
        }
        if cfg.shuffle {
            mols.shuffle(&mut rng);
        }
        let sizes: Vec<GraphSize> = mols
            .iter()
            .map(|&m| GraphSize {
                nodes: self.features[m].num_atoms,
                edges: self.features[m].num_edges(),
            })
            .collect();
        let mut packs: Vec<Vec<usize>> = pack_ffd(&sizes, cfg.capacity)?
            .into_iter()
            .map(|p| p.into_iter().map(|i| mols[i]).collect())
            .collect();
        if cfg.shuffle {
            packs.shuffle(&mut rng);
        }
        Ok(packs)
    }

    pub fn assemble(&self, mols: &[usize], split: Split, cap: Capacity) -> Result<LabeledBatch, DataError> {
        let graphs: Vec<(&FeaturizedGraph, usize)> = mols.iter().map(|&m| (&self.features[m], m)).collect();
        let batch = PackedBatch::assemble(&graphs, cap)?;
        let targets = self.targets(&batch, split);
        Ok(LabeledBatch { batch, targets })
    }

    /// Targets of every task for the real graphs of `batch`; labels of a
    /// dataset count only where the molecule is tagged `split` there.
    pub fn targets(&self, batch: &PackedBatch, split: Split) -> Vec<Vec<f64>> {
        let cap = batch.capacity;
        self.joint
            .tasks
            .iter()
            .enumerate()
            .map(|(t, task)| {
                let w = task.width();
                let rows = match task.level {
                    Level::Graph => cap.max_graphs,
                    Level::Node => cap.max_nodes,
                };
                let mut out = vec![f64::NAN; rows * w];
                for (slot, &m) in batch.graph_ids.iter().enumerate() {
                    if self.tags[m][task.dataset] != Some(split) {
                        continue;
                    }
                    let start = match task.level {
                        Level::Graph => slot * w,
                        Level::Node => batch.node_offsets[slot] * w,
                    };
                    let values = &self.joint.labels[t][m];
                    out[start..start + values.len()].copy_from_slice(values);
                }
                out
            })
            .collect()
    }

    /// Streams the batches of `plan` into `f`, assembling up to
    /// `cfg.prefetch` batches ahead on a producer thread.
    pub fn for_each_batch<E: From<DataError>>(
        &self,
        plan: &[Vec<usize>],
        split: Split,
        cfg: &EpochConfig,
        mut f: impl FnMut(LabeledBatch) -> Result<(), E>,
    ) -> Result<(), E> {
        if cfg.prefetch == 0 {
            for mols in plan {
                f(self.assemble(mols, split, cfg.capacity)?)?;
            }
            return Ok(());
        }
        std::thread::scope(|scope| {
            let (tx, rx) = mpsc::sync_channel(cfg.prefetch);
            scope.spawn(move || {
                for mols in plan {
                    let item = self.assemble(mols, split, cfg.capacity);
                    let failed = item.is_err();
                    if tx.send(item).is_err() || failed {
                        break;
                    }
                }
            });
            for item in rx {
                f(item?)?;
            }
            Ok(())
        })
    }
}
