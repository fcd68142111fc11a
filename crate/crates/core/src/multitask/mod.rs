//! Multi-task losses with missing-label masking, and per-label metrics.

mod loss;
mod metrics;

pub use loss::{hybrid_loss, hybrid_loss_value, masked_loss, total_loss, HybridConfig, LossError, LossKind, MaskedTargets, BCE_EPS};
pub use metrics::{
    accuracy_binary, accuracy_multiclass, auroc, average_precision, bin_zscores, mae, one_vs_rest, pearson, r2,
    summarize, MetricSummary, DEFAULT_BIN_THRESHOLDS,
};
