use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::featurize::NormKind;
use crate::molparse::{canonical_form, parse_smiles, MolGraph};

/// Where a label lives: one value per atom or one per molecule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Node,
    Graph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Regression,
    Binary,
    /// Ordered classes `0..classes`, trained with the hybrid loss.
    Ranked,
}

/// A group of label columns predicted by one head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSchema {
    pub name: String,
    pub level: Level,
    pub kind: TaskKind,
    pub columns: Vec<String>,
    /// Required for ranked tasks.
    #[serde(default)]
    pub classes: Option<usize>,
    #[serde(default)]
    pub norm: NormKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub name: String,
    #[serde(default = "default_smiles_column")]
    pub smiles_column: String,
    pub tasks: Vec<TaskSchema>,
}

fn default_smiles_column() -> String {
    "smiles".to_string()
}

impl DatasetSchema {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Schema(format!("dataset `{}`: {m}", self.name)));
        if self.tasks.is_empty() {
            return bad("no tasks declared".into());
        }
        let mut seen = std::collections::HashSet::new();
        for t in &self.tasks {
            if t.columns.is_empty() {
                return bad(format!("task `{}` has no columns", t.name));
            }
            for c in &t.columns {
                if !seen.insert(c.as_str()) || *c == self.smiles_column {
                    return bad(format!("column `{c}` used twice"));
                }
            }
            match (t.kind, t.classes) {
                (TaskKind::Ranked, Some(c)) if c >= 2 => {}
                (TaskKind::Ranked, _) => return bad(format!("ranked task `{}` needs classes ≥ 2", t.name)),
                (_, Some(_)) => return bad(format!("task `{}`: classes only apply to ranked tasks", t.name)),
                _ => {}
            }
            if t.norm != NormKind::None && t.kind != TaskKind::Regression {
                return bad(format!("task `{}`: only regression labels are normalized", t.name));
            }
        }
        Ok(())
    }
}

/// One molecule of a dataset. The graph is in canonical atom order and
/// node-level labels follow that order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRow {
    pub key: String,
    pub smiles: String,
    pub graph: MolGraph,
    /// Per task: `[labels]` for graph tasks, row-major `[atoms × labels]`
    /// for node tasks. NaN marks a missing entry.
    pub labels: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelTable {
    pub schema: DatasetSchema,
    pub rows: Vec<LabelRow>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRow {
    /// 1-based data row (header excluded).
    pub row: usize,
    pub smiles: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub skipped: Vec<SkippedRow>,
    /// Rows folded into an earlier row of the same molecule.
    pub merged: usize,
    /// Label cells where a duplicate disagreed with the kept value.
    pub conflicts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSparsity {
    pub task: String,
    pub column: String,
    pub level: Level,
    pub missing: usize,
    pub total: usize,
}

impl ColumnSparsity {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.missing as f64 / self.total as f64
        }
    }
}

/// Dataset statistics in the usual table layout: molecule count, label
/// counts and percent of missing entries per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub dataset: String,
    #[serde(rename = "# mols")]
    pub molecules: usize,
    #[serde(rename = "# G. labels")]
    pub graph_labels: usize,
    #[serde(rename = "# N. labels")]
    pub node_labels: usize,
    #[serde(rename = "% G. sparsity")]
    pub graph_sparsity: Option<f64>,
    #[serde(rename = "% N. sparsity")]
    pub node_sparsity: Option<f64>,
    pub columns: Vec<ColumnSparsity>,
}

fn parse_cell(raw: &str) -> Result<f64, String> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    s.parse::<f64>().map_err(|_| format!("bad label value `{s}`"))
}

fn check_value(v: f64, task: &TaskSchema) -> Result<(), String> {
    if v.is_nan() {
        return Ok(());
    }
    let ok = match task.kind {
        TaskKind::Regression => v.is_finite(),
        TaskKind::Binary => v == 0.0 || v == 1.0,
        TaskKind::Ranked => v.fract() == 0.0 && v >= 0.0 && v < task.classes.unwrap_or(0) as f64,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("value {v} invalid for {:?} task `{}`", task.kind, task.name))
    }
}

impl LabelTable {
    pub fn new(schema: DatasetSchema) -> Result<Self, DataError> {
        schema.validate()?;
        Ok(LabelTable {
            schema,
            rows: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn name(&self) -> &str {
        &self.schema.name
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn position(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Adds one record given as SMILES plus raw cells per task column
    /// (`cells[t][j]` for column `j` of task `t`; node cells pipe-separated
    /// in SMILES atom order). Duplicates merge first-wins; returns the
    /// number of conflicting cells.
    pub fn insert(&mut self, smiles: &str, cells: &[Vec<&str>]) -> Result<usize, String> {
        let parsed = parse_smiles(smiles).map_err(|e| e.to_string())?;
        let form = canonical_form(&parsed);
        let n = parsed.num_atoms();
        let mut labels = Vec::with_capacity(self.schema.tasks.len());
        for (task, row) in self.schema.tasks.iter().zip(cells) {
            let width = task.columns.len();
            let mut values = match task.level {
                Level::Graph => vec![f64::NAN; width],
                Level::Node => vec![f64::NAN; n * width],
            };
            for (j, raw) in row.iter().enumerate() {
                match task.level {
                    Level::Graph => {
                        let v = parse_cell(raw)?;
                        check_value(v, task)?;
                        values[j] = v;
                    }
                    Level::Node => {
                        if raw.trim().is_empty() {
                            continue;
                        }
                        let per_atom: Vec<f64> = raw.split('|').map(parse_cell).collect::<Result<_, _>>()?;
                        if per_atom.len() != n {
                            return Err(format!(
                                "column `{}` has {} atom values for {n} atoms",
                                task.columns[j],
                                per_atom.len()
                            ));
                        }
                        for (i, &orig) in form.order.iter().enumerate() {
                            check_value(per_atom[orig], task)?;
                            values[i * width + j] = per_atom[orig];
                        }
                    }
                }
            }
            labels.push(values);
        }
        if let Some(&existing) = self.index.get(&form.key) {
            let mut conflicts = 0;
            for (old, new) in self.rows[existing].labels.iter_mut().zip(labels) {
                for (o, v) in old.iter_mut().zip(new) {
                    if o.is_nan() {
                        *o = v;
                    } else if !v.is_nan() && o.to_bits() != v.to_bits() {
                        conflicts += 1;
                    }
                }
            }
            return Ok(conflicts);
        }
        self.index.insert(form.key.clone(), self.rows.len());
        self.rows.push(LabelRow {
            graph: parsed.permuted(&form.order),
            key: form.key,
            smiles: smiles.to_string(),
            labels,
        });
        Ok(0)
    }

    pub fn sparsity(&self) -> SparsityReport {
        let mut columns = Vec::new();
        for (t, task) in self.schema.tasks.iter().enumerate() {
            let width = task.columns.len();
            for (j, col) in task.columns.iter().enumerate() {
                let (mut missing, mut total) = (0, 0);
                for row in &self.rows {
                    for v in row.labels[t].iter().skip(j).step_by(width) {
                        total += 1;
                        missing += v.is_nan() as usize;
                    }
                }
                columns.push(ColumnSparsity {
                    task: task.name.clone(),
                    column: col.clone(),
                    level: task.level,
                    missing,
                    total,
                });
            }
        }
        let level_stats = |level: Level| {
            let cols: Vec<&ColumnSparsity> = columns.iter().filter(|c| c.level == level).collect();
            let missing: usize = cols.iter().map(|c| c.missing).sum();
            let total: usize = cols.iter().map(|c| c.total).sum();
            (cols.len(), (total > 0).then(|| 100.0 * missing as f64 / total as f64))
        };
        let (graph_labels, graph_sparsity) = level_stats(Level::Graph);
        let (node_labels, node_sparsity) = level_stats(Level::Node);
        SparsityReport {
            dataset: self.schema.name.clone(),
            molecules: self.rows.len(),
            graph_labels,
            node_labels,
            graph_sparsity,
            node_sparsity,
            columns,
        }
    }
}

/// Reads a CSV dataset. Rows with unparseable SMILES or invalid label values
/// are skipped and listed in the report.
pub fn ingest(path: &Path, schema: &DatasetSchema) -> Result<(LabelTable, IngestReport), DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::Io(path.display().to_string(), e))?;
    ingest_reader(file, schema)
}

pub fn ingest_reader(reader: impl Read, schema: &DatasetSchema) -> Result<(LabelTable, IngestReport), DataError> {
    let mut table = LabelTable::new(schema.clone())?;
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| DataError::MissingColumn {
            dataset: schema.name.clone(),
            column: name.to_string(),
        })
    };
    let smiles_col = column(&schema.smiles_column)?;
    let task_cols: Vec<Vec<usize>> = schema
        .tasks
        .iter()
        .map(|t| t.columns.iter().map(|c| column(c)).collect::<Result<_, _>>())
        .collect::<Result<_, _>>()?;
    let mut report = IngestReport::default();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        report.rows_read += 1;
        let smiles = record.get(smiles_col).unwrap_or("").trim();
        let cells: Vec<Vec<&str>> = task_cols
            .iter()
            .map(|cols| cols.iter().map(|&c| record.get(c).unwrap_or("")).collect())
            .collect();
        let before = table.len();
        match table.insert(smiles, &cells) {
            Ok(conflicts) => {
                report.conflicts += conflicts;
                if table.len() == before {
                    report.merged += 1;
                }
            }
            Err(reason) => report.skipped.push(SkippedRow {
                row: i + 1,
                smiles: smiles.to_string(),
                reason,
            }),
        }
    }
    if !report.skipped.is_empty() {
        log::warn!("{}: skipped {} of {} rows", schema.name, report.skipped.len(), report.rows_read);
    }
    Ok((table, report))
}
