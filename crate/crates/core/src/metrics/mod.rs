//! Weighted confusion metrics, ROC/AUROC and the metric registry.

mod accumulator;
mod confusion;
mod registry;
mod roc;

pub use accumulator::{Aggregation, MetricAccumulator};
pub use confusion::{
    detection_confusion, score, threshold_heatmap, weighted_confusion, ScoreKind, WeightedConfusion,
};
pub use registry::{load_metrics, Metric, MetricKind, MetricSet, METRIC_NAMES};
pub use roc::{image_auroc, mauroc, roc_auroc, MaurocAccumulator, RocCurve, RocPoint, ScoreHistogram};

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum MetricError {
    #[error("prediction shape {prediction:?} does not match target shape {target:?}")]
    ShapeMismatch {
        prediction: (usize, usize),
        target: (usize, usize),
    },
    #[error("value {0} outside [0, 1]")]
    RangeError(f64),
    #[error("ground-truth mask is not binary")]
    NonBinaryMask,
    #[error("{0} scores but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("AUROC is undefined when only one class is present")]
    SingleClass,
    #[error("every image was skipped")]
    AllSkipped,
    #[error("no values were accumulated")]
    EmptyAccumulator,
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}
