use std::collections::BTreeMap;

use ndarray::ArrayView2;

use super::accumulator::{Aggregation, MetricAccumulator};
use super::confusion::{detection_confusion, score, weighted_confusion, ScoreKind, WeightedConfusion};
use super::roc::{MaurocAccumulator, RocCurve, ScoreHistogram};
use super::MetricError;
use crate::methods::OutputType;

/// Every registered metric name.
pub const METRIC_NAMES: [&str; 15] = [
    "f1",
    "iou",
    "mcc",
    "precision",
    "tpr",
    "fpr",
    "auroc",
    "mauroc",
    "roc",
    "f1_weighted_v1",
    "f1_weighted_v2",
    "iou_weighted_v1",
    "iou_weighted_v2",
    "mcc_weighted_v1",
    "mcc_weighted_v2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    /// Thresholded at 0.5, counts summed over the dataset.
    Threshold(ScoreKind),
    Weighted(ScoreKind, Aggregation),
    /// Pooled over all pixels (or images, for detection scores).
    Auroc,
    /// Mean of per-image AUROCs.
    Mauroc,
    Roc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metric {
    pub name: String,
    pub kind: MetricKind,
}

impl Metric {
    pub fn from_name(name: &str) -> Result<Self, MetricError> {
        use ScoreKind::*;
        let kind = match name {
            "f1" => MetricKind::Threshold(F1),
            "iou" => MetricKind::Threshold(Iou),
            "mcc" => MetricKind::Threshold(Mcc),
            "precision" => MetricKind::Threshold(Precision),
            "tpr" => MetricKind::Threshold(Tpr),
            "fpr" => MetricKind::Threshold(Fpr),
            "auroc" => MetricKind::Auroc,
            "mauroc" => MetricKind::Mauroc,
            "roc" => MetricKind::Roc,
            "f1_weighted_v1" => MetricKind::Weighted(F1, Aggregation::V1),
            "f1_weighted_v2" => MetricKind::Weighted(F1, Aggregation::V2),
            "iou_weighted_v1" => MetricKind::Weighted(Iou, Aggregation::V1),
            "iou_weighted_v2" => MetricKind::Weighted(Iou, Aggregation::V2),
            "mcc_weighted_v1" => MetricKind::Weighted(Mcc, Aggregation::V1),
            "mcc_weighted_v2" => MetricKind::Weighted(Mcc, Aggregation::V2),
            other => return Err(MetricError::UnknownMetric(other.to_string())),
        };
        Ok(Self {
            name: name.to_string(),
            kind,
        })
    }

    /// Per-image metrics have no meaning for a single detection score.
    pub fn supports(&self, output: OutputType) -> bool {
        output != OutputType::Detection
            || !matches!(
                self.kind,
                MetricKind::Weighted(_, Aggregation::V1) | MetricKind::Mauroc
            )
    }
}

/// Resolves metric names, preserving the requested order.
pub fn load_metrics<S: AsRef<str>>(names: &[S]) -> Result<Vec<Metric>, MetricError> {
    names.iter().map(|n| Metric::from_name(n.as_ref())).collect()
}

#[derive(Debug, Clone)]
enum State {
    Counts(ScoreKind, WeightedConfusion),
    Acc(MetricAccumulator),
    Hist(ScoreHistogram),
    Mauroc(MaurocAccumulator),
}

impl State {
    fn new(kind: MetricKind) -> Self {
        match kind {
            MetricKind::Threshold(k) => State::Counts(k, WeightedConfusion::default()),
            MetricKind::Weighted(k, mode) => State::Acc(MetricAccumulator::new(k, mode)),
            MetricKind::Auroc | MetricKind::Roc => State::Hist(ScoreHistogram::new()),
            MetricKind::Mauroc => State::Mauroc(MaurocAccumulator::default()),
        }
    }
}

/// Accumulators for every metric requested for one output type.
#[derive(Debug, Clone)]
pub struct MetricSet {
    output: OutputType,
    entries: Vec<(Metric, State)>,
    updates: usize,
}

impl MetricSet {
    pub fn new(output: OutputType, metrics: &[Metric]) -> Result<Self, MetricError> {
        let entries = metrics
            .iter()
            .map(|m| {
                if m.supports(output) {
                    Ok((m.clone(), State::new(m.kind)))
                } else {
                    Err(MetricError::UnknownMetric(format!("{} for {output} outputs", m.name)))
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            output,
            entries,
            updates: 0,
        })
    }

    /// Keeps only the metrics applicable to `output`.
    pub fn applicable(output: OutputType, metrics: &[Metric]) -> Self {
        let supported: Vec<Metric> = metrics.iter().filter(|m| m.supports(output)).cloned().collect();
        Self::new(output, &supported).expect("filtered to supported metrics")
    }

    pub fn output_type(&self) -> OutputType {
        self.output
    }

    pub fn metrics(&self) -> impl Iterator<Item = &Metric> {
        self.entries.iter().map(|(m, _)| m)
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Adds one predicted map (heatmap or 0/1 mask) with its ground truth.
    pub fn update_map(&mut self, prediction: ArrayView2<f32>, mask: ArrayView2<u8>) -> Result<(), MetricError> {
        // Validate once so a rejected image leaves every accumulator untouched.
        let weighted = weighted_confusion(prediction, mask)?;
        let binary = weighted_confusion(prediction.mapv(|h| u8::from(h >= 0.5)).view(), mask)?;
        for (_, state) in &mut self.entries {
            match state {
                State::Counts(_, c) => *c += binary,
                State::Acc(acc) => acc.update_confusion(weighted),
                State::Hist(h) => h.add_map(prediction, mask)?,
                State::Mauroc(acc) => acc.update(prediction, mask)?,
            }
        }
        self.updates += 1;
        Ok(())
    }

    /// Adds one image-level score with its label.
    pub fn update_detection(&mut self, value: f64, label: bool) -> Result<(), MetricError> {
        let weighted = detection_confusion(value, label)?;
        let binary = detection_confusion(if value >= 0.5 { 1.0 } else { 0.0 }, label)?;
        for (m, state) in &mut self.entries {
            match state {
                State::Counts(_, c) => *c += binary,
                State::Acc(acc) => acc.update_confusion(weighted),
                State::Hist(h) => h.add(value, label)?,
                State::Mauroc(_) => return Err(MetricError::UnknownMetric(m.name.clone())),
            }
        }
        self.updates += 1;
        Ok(())
    }

    /// Folds in a set built from the same metric list.
    pub fn merge(&mut self, other: &MetricSet) {
        for ((_, a), (_, b)) in self.entries.iter_mut().zip(&other.entries) {
            match (a, b) {
                (State::Counts(_, x), State::Counts(_, y)) => *x += *y,
                (State::Acc(x), State::Acc(y)) => x.merge(y),
                (State::Hist(x), State::Hist(y)) => x.merge(y),
                (State::Mauroc(x), State::Mauroc(y)) => x.merge(y),
                _ => panic!("merging metric sets built from different metric lists"),
            }
        }
        self.updates += other.updates;
    }

    /// Scalar results keyed by metric name; `None` where a value is undefined.
    /// ROC curves are reported through [`MetricSet::roc_curve`] instead.
    pub fn results(&self) -> BTreeMap<String, Option<f64>> {
        let mut out = BTreeMap::new();
        for (m, state) in &self.entries {
            let value = match (m.kind, state) {
                (MetricKind::Roc, _) => continue,
                (_, State::Counts(k, c)) => (self.updates > 0).then(|| score(c, *k)),
                (_, State::Acc(acc)) => acc.compute().ok(),
                (_, State::Hist(h)) => h.roc().ok().map(|r| r.1),
                (_, State::Mauroc(acc)) => acc.compute().ok(),
            };
            out.insert(m.name.clone(), value);
        }
        out
    }

    /// Images skipped by mAUROC because their mask has a single class.
    pub fn mauroc_skipped(&self) -> Option<usize> {
        self.entries.iter().find_map(|(_, s)| match s {
            State::Mauroc(acc) => Some(acc.skipped),
            _ => None,
        })
    }

    pub fn roc_curve(&self) -> Option<RocCurve> {
        self.entries.iter().find_map(|(m, s)| match (m.kind, s) {
            (MetricKind::Roc, State::Hist(h)) => h.roc().ok().map(|r| r.0),
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ordered_loading() {
        let m = load_metrics(&["auroc", "f1"]).unwrap();
        assert_eq!(
            m.iter().map(|m| m.name.as_str()).collect::<Vec<_>>(),
            ["auroc", "f1"]
        );
        assert!(load_metrics::<&str>(&[]).unwrap().is_empty());
        assert_eq!(
            load_metrics(&["f1_weighted_v1", "iou_weighted_v1", "mcc_weighted_v1"])
                .unwrap()
                .len(),
            3
        );
        assert_eq!(
            load_metrics(&["f1", "bogus"]).unwrap_err(),
            MetricError::UnknownMetric("bogus".into())
        );
        for name in METRIC_NAMES {
            assert_eq!(Metric::from_name(name).unwrap().name, name);
        }
    }

    #[test]
    fn detection_rejects_per_image_metrics() {
        let m = load_metrics(&["f1_weighted_v1"]).unwrap();
        assert!(matches!(
            MetricSet::new(OutputType::Detection, &m),
            Err(MetricError::UnknownMetric(_))
        ));
        let m = load_metrics(&["f1_weighted_v1", "f1_weighted_v2", "mauroc", "auroc"]).unwrap();
        let set = MetricSet::applicable(OutputType::Detection, &m);
        assert_eq!(
            set.metrics().map(|m| m.name.as_str()).collect::<Vec<_>>(),
            ["f1_weighted_v2", "auroc"]
        );
    }

    #[test]
    fn set_reports_each_metric() {
        let metrics = load_metrics(&["f1", "f1_weighted_v1", "auroc", "mauroc", "roc"]).unwrap();
        let mut set = MetricSet::new(OutputType::Heatmap, &metrics).unwrap();
        set.update_map(array![[0.9f32, 0.1]].view(), array![[1u8, 0]].view())
            .unwrap();
        set.update_map(array![[0.5f32, 0.5]].view(), array![[1u8, 1]].view())
            .unwrap();
        let r = set.results();
        assert_eq!(r.len(), 4);
        assert_eq!(r["mauroc"], Some(1.0));
        assert_eq!(set.mauroc_skipped(), Some(1));
        assert!(set.roc_curve().is_some());
        assert_eq!(r["f1"], Some(1.0));
    }

    #[test]
    fn rejected_update_leaves_state() {
        let metrics = load_metrics(&["f1_weighted_v2"]).unwrap();
        let mut set = MetricSet::new(OutputType::Heatmap, &metrics).unwrap();
        assert!(set
            .update_map(array![[2.0f32]].view(), array![[1u8]].view())
            .is_err());
        assert_eq!(set.updates(), 0);
        assert_eq!(set.results()["f1_weighted_v2"], None);
    }
}
