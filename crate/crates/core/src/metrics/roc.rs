use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::confusion::check_mask;
use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores `≥ threshold` are called positive; `None` for the origin point.
    pub threshold: Option<f64>,
    pub fpr: f64,
    pub tpr: f64,
}

pub type RocCurve = Vec<RocPoint>;

/// Order-preserving integer key for a finite `f64` (−0 folded onto +0).
fn key(score: f64) -> u64 {
    let bits = (score + 0.0).to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

fn unkey(k: u64) -> f64 {
    let bits = if k >> 63 == 1 { k & !(1 << 63) } else { !k };
    f64::from_bits(bits)
}

/// Positive/negative counts per distinct score. Merging two histograms is
/// exact, so dataset-level ROC curves can be built incrementally.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreHistogram {
    counts: BTreeMap<u64, (u64, u64)>,
}

impl ScoreHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, score: f64, positive: bool) -> Result<(), MetricError> {
        if !score.is_finite() {
            return Err(MetricError::RangeError(score));
        }
        let entry = self.counts.entry(key(score)).or_default();
        if positive {
            entry.0 += 1;
        } else {
            entry.1 += 1;
        }
        Ok(())
    }

    pub fn add_map<H, M>(&mut self, heatmap: ArrayView2<H>, mask: ArrayView2<M>) -> Result<(), MetricError>
    where
        H: Copy + Into<f64>,
        M: Copy + Into<f64>,
    {
        if heatmap.dim() != mask.dim() {
            return Err(MetricError::ShapeMismatch {
                prediction: heatmap.dim(),
                target: mask.dim(),
            });
        }
        check_mask(&mask)?;
        for (&h, &m) in heatmap.iter().zip(mask.iter()) {
            self.add(h.into(), m.into() == 1.0)?;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ScoreHistogram) {
        for (&k, &(p, n)) in &other.counts {
            let e = self.counts.entry(k).or_default();
            e.0 += p;
            e.1 += n;
        }
    }

    pub fn positives(&self) -> u64 {
        self.counts.values().map(|c| c.0).sum()
    }

    pub fn negatives(&self) -> u64 {
        self.counts.values().map(|c| c.1).sum()
    }

    /// ROC curve over every distinct score (descending thresholds) and the
    /// trapezoidal area under it. Ties contribute one diagonal step, which
    /// equals `P(s⁺ > s⁻) + ½·P(s⁺ = s⁻)`.
    pub fn roc(&self) -> Result<(RocCurve, f64), MetricError> {
        let (pos, neg) = (self.positives(), self.negatives());
        if pos == 0 || neg == 0 {
            return Err(MetricError::SingleClass);
        }
        let (p, n) = (pos as f64, neg as f64);
        let mut curve = vec![RocPoint {
            threshold: None,
            fpr: 0.0,
            tpr: 0.0,
        }];
        let (mut tp, mut fp) = (0u64, 0u64);
        let mut area = 0.0;
        for (&k, &(cp, cn)) in self.counts.iter().rev() {
            let (prev_tp, prev_fp) = (tp, fp);
            tp += cp;
            fp += cn;
            area += (fp - prev_fp) as f64 * (tp + prev_tp) as f64 / 2.0;
            curve.push(RocPoint {
                threshold: Some(unkey(k)),
                fpr: fp as f64 / n,
                tpr: tp as f64 / p,
            });
        }
        Ok((curve, area / (p * n)))
    }
}

/// ROC curve and AUROC of scores against binary labels.
pub fn roc_auroc(scores: &[f64], labels: &[bool]) -> Result<(RocCurve, f64), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    let mut hist = ScoreHistogram::new();
    for (&s, &l) in scores.iter().zip(labels) {
        hist.add(s, l)?;
    }
    hist.roc()
}

/// Per-image AUROC obtained by sweeping the threshold over one heatmap.
pub fn image_auroc<H, M>(heatmap: ArrayView2<H>, mask: ArrayView2<M>) -> Result<f64, MetricError>
where
    H: Copy + Into<f64>,
    M: Copy + Into<f64>,
{
    let mut hist = ScoreHistogram::new();
    hist.add_map(heatmap, mask)?;
    Ok(hist.roc()?.1)
}

/// Running mean of per-image AUROCs; single-class masks are skipped and counted.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MaurocAccumulator {
    pub sum: f64,
    pub count: usize,
    pub skipped: usize,
}

impl MaurocAccumulator {
    pub fn update<H, M>(&mut self, heatmap: ArrayView2<H>, mask: ArrayView2<M>) -> Result<(), MetricError>
    where
        H: Copy + Into<f64>,
        M: Copy + Into<f64>,
    {
        match image_auroc(heatmap, mask) {
            Ok(a) => {
                self.sum += a;
                self.count += 1;
                Ok(())
            }
            Err(MetricError::SingleClass) => {
                self.skipped += 1;
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.sum += other.sum;
        self.count += other.count;
        self.skipped += other.skipped;
    }

    pub fn compute(&self) -> Result<f64, MetricError> {
        if self.count == 0 {
            return Err(MetricError::AllSkipped);
        }
        Ok(self.sum / self.count as f64)
    }
}

/// Mean per-image AUROC with the number of skipped single-class images.
pub fn mauroc<'a, H, M, I>(per_image: I) -> Result<(f64, usize), MetricError>
where
    H: Copy + Into<f64> + 'a,
    M: Copy + Into<f64> + 'a,
    I: IntoIterator<Item = (ArrayView2<'a, H>, ArrayView2<'a, M>)>,
{
    let mut acc = MaurocAccumulator::default();
    for (h, m) in per_image {
        acc.update(h, m)?;
    }
    Ok((acc.compute()?, acc.skipped))
}
