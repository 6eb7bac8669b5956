use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::confusion::{score, weighted_confusion, ScoreKind, WeightedConfusion};
use super::MetricError;

/// `V1` averages per-image scores; `V2` scores the dataset-summed confusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    V1,
    V2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricAccumulator {
    kind: ScoreKind,
    mode: Aggregation,
    sum: f64,
    count: usize,
    confusion: WeightedConfusion,
}

impl MetricAccumulator {
    pub fn new(kind: ScoreKind, mode: Aggregation) -> Self {
        Self {
            kind,
            mode,
            sum: 0.0,
            count: 0,
            confusion: WeightedConfusion::default(),
        }
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn mode(&self) -> Aggregation {
        self.mode
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn update<H, M>(&mut self, heatmap: ArrayView2<H>, mask: ArrayView2<M>) -> Result<(), MetricError>
    where
        H: Copy + Into<f64>,
        M: Copy + Into<f64>,
    {
        let c = weighted_confusion(heatmap, mask)?;
        self.update_confusion(c);
        Ok(())
    }

    /// Adds one image's confusion.
    pub fn update_confusion(&mut self, c: WeightedConfusion) {
        match self.mode {
            Aggregation::V1 => self.sum += score(&c, self.kind),
            Aggregation::V2 => self.confusion += c,
        }
        self.count += 1;
    }

    /// Combines two partial accumulators of the same metric.
    pub fn merge(&mut self, other: &Self) {
        debug_assert_eq!((self.kind, self.mode), (other.kind, other.mode));
        self.sum += other.sum;
        self.count += other.count;
        self.confusion += other.confusion;
    }

    pub fn confusion(&self) -> WeightedConfusion {
        self.confusion
    }

    pub fn compute(&self) -> Result<f64, MetricError> {
        if self.count == 0 {
            return Err(MetricError::EmptyAccumulator);
        }
        Ok(match self.mode {
            Aggregation::V1 => self.sum / self.count as f64,
            Aggregation::V2 => score(&self.confusion, self.kind),
        })
    }
}
