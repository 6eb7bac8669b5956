use std::iter::Sum;
use std::ops::{Add, AddAssign};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::MetricError;

/// Real-valued confusion counts. With a heatmap `H` and mask `M`:
/// `tp = ΣHM`, `fp = ΣH(1−M)`, `tn = Σ(1−H)(1−M)`, `fn = ΣM(1−H)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedConfusion {
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

impl WeightedConfusion {
    pub fn new(tp: f64, fp: f64, tn: f64, fn_: f64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> f64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn score(&self, metric: ScoreKind) -> f64 {
        score(self, metric)
    }
}

impl Add for WeightedConfusion {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for WeightedConfusion {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sum for WeightedConfusion {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Scores derived from a confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    F1,
    Iou,
    Mcc,
    Precision,
    Tpr,
    Fpr,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Applies `metric` to `c`. Zero denominators yield 0; for MCC, so does any
/// zero factor under the square root.
pub fn score(c: &WeightedConfusion, metric: ScoreKind) -> f64 {
    let WeightedConfusion { tp, fp, tn, fn_ } = *c;
    match metric {
        ScoreKind::F1 => ratio(2.0 * tp, 2.0 * tp + fn_ + fp),
        ScoreKind::Iou => ratio(tp, tp + fp + fn_),
        ScoreKind::Precision => ratio(tp, tp + fp),
        ScoreKind::Tpr => ratio(tp, tp + fn_),
        ScoreKind::Fpr => ratio(fp, fp + tn),
        ScoreKind::Mcc => {
            let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
            if factors.iter().any(|&f| f == 0.0) {
                return 0.0;
            }
            let den = factors.iter().product::<f64>().sqrt();
            ((tp * tn - fp * fn_) / den).clamp(-1.0, 1.0)
        }
    }
}

pub(crate) fn check_mask<M: Copy + Into<f64>>(mask: &ArrayView2<M>) -> Result<(), MetricError> {
    if mask.iter().any(|&m| {
        let m: f64 = m.into();
        m != 0.0 && m != 1.0
    }) {
        return Err(MetricError::NonBinaryMask);
    }
    Ok(())
}

/// Weighted confusion of a heatmap (values in `[0, 1]`) against a binary mask.
pub fn weighted_confusion<H, M>(
    heatmap: ArrayView2<H>,
    mask: ArrayView2<M>,
) -> Result<WeightedConfusion, MetricError>
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
    let mut c = WeightedConfusion::default();
    for (&h, &m) in heatmap.iter().zip(mask.iter()) {
        let h: f64 = h.into();
        if !(0.0..=1.0).contains(&h) {
            return Err(MetricError::RangeError(h));
        }
        if m.into() == 1.0 {
            c.tp += h;
            c.fn_ += 1.0 - h;
        } else {
            c.fp += h;
            c.tn += 1.0 - h;
        }
    }
    Ok(c)
}

/// Contribution of one image-level detection score with its label.
pub fn detection_confusion(score: f64, label: bool) -> Result<WeightedConfusion, MetricError> {
    if !(0.0..=1.0).contains(&score) {
        return Err(MetricError::RangeError(score));
    }
    Ok(if label {
        WeightedConfusion::new(score, 0.0, 0.0, 1.0 - score)
    } else {
        WeightedConfusion::new(0.0, score, 1.0 - score, 0.0)
    })
}

/// `mask(x) = 1` iff `H(x) ≥ threshold`.
pub fn threshold_heatmap<H: Copy + Into<f64>>(heatmap: ArrayView2<H>, threshold: f64) -> Array2<u8> {
    heatmap.mapv(|h| u8::from(h.into() >= threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn worked_example() {
        let h = array![[0.5, 1.0, 0.0, 0.25]];
        let m = array![[1u8, 1, 0, 0]];
        let c = weighted_confusion(h.view(), m.view()).unwrap();
        assert_eq!(c, WeightedConfusion::new(1.5, 0.25, 1.75, 0.5));
        assert_eq!(c.score(ScoreKind::F1), 0.8);
        assert!((c.score(ScoreKind::Iou) - 1.5 / 2.25).abs() < 1e-12);
        assert!((c.score(ScoreKind::Mcc) - 2.5 / 15.75f64.sqrt()).abs() < 1e-12);
        assert!((c.score(ScoreKind::Mcc) - 0.629941).abs() < 1e-6);
    }

    #[test]
    fn exact_match_has_no_errors() {
        let m = array![[1u8, 0, 1], [0, 0, 0]];
        let c = weighted_confusion(m.view(), m.view()).unwrap();
        assert_eq!(c, WeightedConfusion::new(2.0, 0.0, 4.0, 0.0));
        for k in [ScoreKind::F1, ScoreKind::Iou, ScoreKind::Mcc] {
            assert_eq!(c.score(k), 1.0);
        }
    }

    #[test]
    fn inverted_prediction() {
        let m = array![[1u8, 0, 1, 0]];
        let h = m.mapv(|v| 1.0 - f64::from(v));
        let c = weighted_confusion(h.view(), m.view()).unwrap();
        assert_eq!(c.tp, 0.0);
        assert_eq!(c.tn, 0.0);
    }

    #[test]
    fn degenerate_denominators() {
        let c = WeightedConfusion::new(0.0, 0.0, 5.0, 0.0);
        for k in [
            ScoreKind::F1,
            ScoreKind::Iou,
            ScoreKind::Mcc,
            ScoreKind::Precision,
            ScoreKind::Tpr,
            ScoreKind::Fpr,
        ] {
            assert_eq!(c.score(k), 0.0);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let h = array![[1.5f64]];
        let m = array![[1u8]];
        assert_eq!(
            weighted_confusion(h.view(), m.view()).unwrap_err(),
            MetricError::RangeError(1.5)
        );
        let m2 = array![[1u8, 0]];
        assert!(matches!(
            weighted_confusion(h.view(), m2.view()),
            Err(MetricError::ShapeMismatch { .. })
        ));
        let m3 = array![[2u8]];
        assert_eq!(
            weighted_confusion(array![[0.5f64]].view(), m3.view()).unwrap_err(),
            MetricError::NonBinaryMask
        );
    }

    #[test]
    fn detection_weighting() {
        assert_eq!(
            detection_confusion(1.0, true).unwrap(),
            WeightedConfusion::new(1.0, 0.0, 0.0, 0.0)
        );
        let c = detection_confusion(0.3, false).unwrap();
        assert_eq!((c.fp, c.tn, c.tp, c.fn_), (0.3, 0.7, 0.0, 0.0));
        let perfect: WeightedConfusion = [(1.0, true), (0.0, false), (1.0, true)]
            .iter()
            .map(|&(s, l)| detection_confusion(s, l).unwrap())
            .sum();
        assert_eq!(perfect.score(ScoreKind::F1), 1.0);
        assert!(detection_confusion(-0.1, true).is_err());
    }

    #[test]
    fn thresholding_is_inclusive() {
        let h = array![[0.4, 0.5, 0.6]];
        assert_eq!(threshold_heatmap(h.view(), 0.5), array![[0u8, 1, 1]]);
        assert_eq!(threshold_heatmap(h.view(), 0.0), array![[1u8, 1, 1]]);
        let b = array![[0.0, 1.0]];
        assert_eq!(threshold_heatmap(b.view(), 0.5), array![[0u8, 1]]);
    }
}
