//! Dataset ingestion, splitting, caching and batch packing.

mod assay;
mod cache;
mod epoch;
mod pack;
mod split;
mod table;

pub use assay::{l1000_select_signature, pcba_assay_filter, AssayDecision, AssayFilter};
pub use cache::{featurize_all, featurize_one, graph_from_bytes, graph_to_bytes, FeaturizeSettings, FeaturizeStats, MolCache};
pub use epoch::{EpochConfig, JointTable, LabeledBatch, MultiTaskData, TaskInfo};
pub use pack::{node_padding, pack_ffd, pack_in_order, Capacity, GraphSize, PackError, PackedBatch};
pub use split::{make_splits, Ratios, Split, SplitAssignment};
pub use table::{
    ingest, ingest_reader, ColumnSparsity, DatasetSchema, IngestReport, LabelRow, LabelTable, Level, SkippedRow,
    SparsityReport, TaskKind, TaskSchema,
};

use crate::featurize::{FeaturizeError, NormError};
use crate::posenc::PeError;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("dataset `{dataset}` has no column `{column}`")]
    MissingColumn { dataset: String, column: String },
    #[error("{0}")]
    Schema(String),
    #[error("split: {0}")]
    Split(String),
    #[error("dataset `{0}` is empty")]
    Empty(String),
    #[error(transparent)]
    Featurize(#[from] FeaturizeError),
    #[error(transparent)]
    Pe(#[from] PeError),
    #[error(transparent)]
    Pack(#[from] PackError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error("worker pool: {0}")]
    Pool(String),
}
