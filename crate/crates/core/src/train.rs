//! Training loop and evaluation over a [`MultiTaskData`] set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datapipe::{DataError, EpochConfig, LabeledBatch, Level, MultiTaskData, Split, TaskInfo, TaskKind};
use crate::gnn::{Adam, AdamConfig, HeadLoss, Model, ModelError, TaskHeadSpec};
use crate::multitask::{
    accuracy_binary, accuracy_multiclass, auroc, average_precision, hybrid_loss, mae, masked_loss, one_vs_rest,
    pearson, r2, summarize, total_loss, HybridConfig, LossError, LossKind, MaskedTargets, MetricSummary,
};
use crate::tensorcore::{Tape, TensorError, Var};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("non-finite loss {value} at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: usize, value: f64 },
}

/// One head per task, matching the task's level and loss.
pub fn heads_for(tasks: &[TaskInfo], hidden: &[usize], hybrid_alpha: f64) -> Vec<TaskHeadSpec> {
    tasks
        .iter()
        .map(|t| TaskHeadSpec {
            task: t.name.clone(),
            level: t.level,
            output_dim: t.width(),
            loss: match t.kind {
                TaskKind::Regression => HeadLoss::Mae,
                TaskKind::Binary => HeadLoss::Bce,
                TaskKind::Ranked => HeadLoss::Hybrid {
                    classes: t.classes.unwrap_or(2),
                    alpha: hybrid_alpha,
                },
            },
            hidden: hidden.to_vec(),
        })
        .collect()
}

/// Sum of the masked per-task losses on one batch; `None` when the batch
/// carries no labels at all.
pub fn batch_loss(
    tape: &mut Tape<f64>,
    model: &Model,
    vars: &[Var],
    lb: &LabeledBatch,
) -> Result<Option<Var>, TrainError> {
    let outs = model.forward(tape, vars, &lb.batch)?;
    let mut losses = Vec::with_capacity(outs.len());
    for ((spec, (_, pred)), targets) in model.config.heads.iter().zip(outs).zip(&lb.targets) {
        let t = MaskedTargets::new(targets.clone());
        let loss = match spec.loss {
            HeadLoss::Mae => masked_loss(tape, pred, &t, LossKind::Mae)?,
            HeadLoss::Bce => masked_loss(tape, pred, &t, LossKind::Bce)?,
            HeadLoss::Hybrid { classes, alpha } => hybrid_loss(tape, pred, &t, HybridConfig { classes, alpha })?,
        };
        losses.push((loss, 1.0));
    }
    Ok(total_loss(tape, &losses)?)
}

/// One optimizer step; returns the loss value before the update.
pub fn train_step(model: &mut Model, adam: &mut Adam, lb: &LabeledBatch) -> Result<Option<f64>, TrainError> {
    let mut tape = Tape::new();
    let vars = model.params.bind(&mut tape);
    let Some(loss) = batch_loss(&mut tape, model, &vars, lb)? else {
        return Ok(None);
    };
    let value = tape.value(loss).data()[0];
    if !value.is_finite() {
        return Ok(Some(value));
    }
    tape.backward(loss)?;
    let grads: Vec<_> = vars.iter().map(|&v| tape.grad(v)).collect();
    adam.step(&mut model.params, &grads);
    Ok(Some(value))
}

/// Predictions and targets of one task gathered over a split, one list per
/// label. Ranked tasks store `classes` probabilities per entry.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskPredictions {
    pub preds: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

pub fn predict_split(
    model: &Model,
    data: &MultiTaskData,
    split: Split,
    cfg: &EpochConfig,
) -> Result<Vec<TaskPredictions>, TrainError> {
    let tasks = data.tasks();
    let mut out: Vec<TaskPredictions> = tasks
        .iter()
        .map(|t| TaskPredictions {
            preds: vec![Vec::new(); t.width()],
            targets: vec![Vec::new(); t.width()],
        })
        .collect();
    let fixed = EpochConfig {
        shuffle: false,
        sampling_weights: Vec::new(),
        ..cfg.clone()
    };
    let plan = data.epoch_plan(split, &fixed, 0, 0)?;
    data.for_each_batch::<TrainError>(&plan, split, &fixed, |lb| {
        let preds = model.predict(&lb.batch)?;
        for ((task, (_, p)), (targets, acc)) in tasks.iter().zip(preds).zip(lb.targets.iter().zip(out.iter_mut())) {
            let w = task.width();
            let units = task.classes.filter(|_| task.kind == TaskKind::Ranked).unwrap_or(1);
            let rows = match task.level {
                Level::Graph => lb.batch.num_graphs,
                Level::Node => lb.batch.num_nodes,
            };
            let p = p.data();
            for r in 0..rows {
                for j in 0..w {
                    let y = targets[r * w + j];
                    if y.is_nan() {
                        continue;
                    }
                    let start = (r * w + j) * units;
                    acc.preds[j].extend_from_slice(&p[start..start + units]);
                    acc.targets[j].push(y);
                }
            }
        }
        Ok(())
    })?;
    Ok(out)
}

/// Metrics of one task on one split, each with per-label values and their
/// average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: String,
    pub dataset: String,
    pub split: Split,
    pub labels: Vec<String>,
    /// Labeled entries evaluated.
    pub count: usize,
    pub metrics: BTreeMap<String, MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub entries: Vec<TaskReport>,
}

impl MetricReport {
    pub fn get(&self, task: &str, split: Split) -> Option<&TaskReport> {
        self.entries.iter().find(|e| e.task == task && e.split == split)
    }

    /// `split,task,metric,label,value` with one `average` row per metric.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["split", "task", "metric", "label", "value"]).expect("in-memory write");
        let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        for e in &self.entries {
            for (metric, s) in &e.metrics {
                for (label, v) in e.labels.iter().zip(&s.per_label) {
                    w.write_record([e.split.name(), &e.task, metric, label, &fmt(*v)]).expect("in-memory write");
                }
                w.write_record([e.split.name(), &e.task, metric, "average", &fmt(s.average)])
                    .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

fn task_metrics(task: &TaskInfo, p: &TaskPredictions) -> BTreeMap<String, MetricSummary> {
    let per = |f: &dyn Fn(&[f64], &[f64]) -> Option<f64>| {
        summarize(p.preds.iter().zip(&p.targets).map(|(x, y)| f(x, y)).collect())
    };
    let mut m = BTreeMap::new();
    match task.kind {
        TaskKind::Regression => {
            m.insert("mae".to_string(), per(&|x, y| mae(x, y)));
            m.insert("pearson".to_string(), per(&|x, y| pearson(x, y)));
            m.insert("r2".to_string(), per(&|x, y| r2(x, y)));
        }
        TaskKind::Binary => {
            m.insert("auroc".to_string(), per(&|x, y| auroc(x, y)));
            m.insert("ap".to_string(), per(&|x, y| average_precision(x, y)));
            m.insert("accuracy".to_string(), per(&|x, y| accuracy_binary(x, y)));
        }
        TaskKind::Ranked => {
            let c = task.classes.unwrap_or(2);
            m.insert("accuracy".to_string(), per(&|x, y| accuracy_multiclass(x, c, y)));
            m.insert("auroc_ovr".to_string(), per(&|x, y| one_vs_rest(x, c, y, auroc)));
        }
    }
    m
}

/// Evaluates every task on each split where it has labeled entries.
pub fn evaluate(model: &Model, data: &MultiTaskData, splits: &[Split], cfg: &EpochConfig) -> Result<MetricReport, TrainError> {
    let mut report = MetricReport::default();
    for &split in splits {
        let preds = predict_split(model, data, split, cfg)?;
        for (task, p) in data.tasks().iter().zip(&preds) {
            let count: usize = p.targets.iter().map(Vec::len).sum();
            if count == 0 {
                continue;
            }
            report.entries.push(TaskReport {
                task: task.name.clone(),
                dataset: task.dataset_name.clone(),
                split,
                labels: task.columns.clone(),
                count,
                metrics: task_metrics(task, p),
            });
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub batches: EpochConfig,
    pub seed: u64,
    /// Validation metrics every this many epochs (and after the last); 0
    /// disables them.
    pub eval_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 300,
            adam: AdamConfig::default(),
            batches: EpochConfig::default(),
            seed: 0,
            eval_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss over the epoch.
    pub train_loss: f64,
    pub steps: usize,
    pub val: Option<MetricReport>,
}

/// Trains for `opts.epochs` epochs. `on_epoch` sees every record and may
/// stop training early by returning `false`.
pub fn fit(
    model: &mut Model,
    data: &MultiTaskData,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord, &Model) -> bool,
) -> Result<Vec<EpochRecord>, TrainError> {
    let mut adam = Adam::new(opts.adam, &model.params);
    let mut records = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        let plan = data.epoch_plan(Split::Train, &opts.batches, opts.seed, epoch as u64)?;
        let (mut sum, mut steps) = (0.0, 0usize);
        data.for_each_batch::<TrainError>(&plan, Split::Train, &opts.batches, |lb| {
            if let Some(value) = train_step(model, &mut adam, &lb)? {
                if !value.is_finite() {
                    return Err(TrainError::NonFinite { epoch, step: steps, value });
                }
                sum += value;
                steps += 1;
            }
            Ok(())
        })?;
        let last = epoch + 1 == opts.epochs;
        let val = if opts.eval_every > 0 && ((epoch + 1) % opts.eval_every == 0 || last) {
            Some(evaluate(model, data, &[Split::Val], &opts.batches)?)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            train_loss: if steps > 0 { sum / steps as f64 } else { 0.0 },
            steps,
            val,
        };
        log::info!("epoch {epoch}: loss {:.6} over {steps} steps", record.train_loss);
        let keep_going = on_epoch(&record, model);
        records.push(record);
        if !keep_going {
            break;
        }
    }
    Ok(records)
}
