//! Metric behaviour checked against brute-force oracles.

use forgery_bench::metrics::{
    mauroc, roc_auroc, score, weighted_confusion, Aggregation, MetricAccumulator, MetricError, ScoreKind,
    WeightedConfusion,
};
use ndarray::{s, Array2};
use proptest::prelude::*;

const KINDS: [ScoreKind; 6] = [
    ScoreKind::F1,
    ScoreKind::Iou,
    ScoreKind::Mcc,
    ScoreKind::Precision,
    ScoreKind::Tpr,
    ScoreKind::Fpr,
];

/// Direct double loop over the four weighted sums.
fn naive_sums(h: &Array2<f64>, m: &Array2<u8>) -> [f64; 4] {
    let (mut tp, mut fp, mut tn, mut fn_) = (0.0, 0.0, 0.0, 0.0);
    for y in 0..h.nrows() {
        for x in 0..h.ncols() {
            let (hv, mv) = (h[[y, x]], f64::from(m[[y, x]]));
            tp += hv * mv;
            fp += hv * (1.0 - mv);
            tn += (1.0 - hv) * (1.0 - mv);
            fn_ += (1.0 - hv) * mv;
        }
    }
    [tp, fp, tn, fn_]
}

fn naive_score(kind: ScoreKind, [tp, fp, tn, fn_]: [f64; 4]) -> f64 {
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    match kind {
        ScoreKind::F1 => div(2.0 * tp, 2.0 * tp + fn_ + fp),
        ScoreKind::Iou => div(tp, tp + fp + fn_),
        ScoreKind::Precision => div(tp, tp + fp),
        ScoreKind::Tpr => div(tp, tp + fn_),
        ScoreKind::Fpr => div(fp, fp + tn),
        ScoreKind::Mcc => {
            let d = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
            if (tp + fp) == 0.0 || (tp + fn_) == 0.0 || (tn + fp) == 0.0 || (tn + fn_) == 0.0 {
                0.0
            } else {
                (tp * tn - fp * fn_) / d.sqrt()
            }
        }
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300) || a == b
}

fn pair() -> impl Strategy<Value = (Array2<f64>, Array2<u8>)> {
    (1usize..=32, 1usize..=32).prop_flat_map(|(h, w)| {
        (
            prop::collection::vec(0.0f64..=1.0, h * w),
            prop::collection::vec(0u8..=1, h * w),
        )
            .prop_map(move |(hv, mv)| {
                (
                    Array2::from_shape_vec((h, w), hv).unwrap(),
                    Array2::from_shape_vec((h, w), mv).unwrap(),
                )
            })
    })
}

fn binary_pair() -> impl Strategy<Value = (Array2<u8>, Array2<u8>)> {
    (1usize..=32, 1usize..=32).prop_flat_map(|(h, w)| {
        (
            prop::collection::vec(0u8..=1, h * w),
            prop::collection::vec(0u8..=1, h * w),
        )
            .prop_map(move |(a, b)| {
                (
                    Array2::from_shape_vec((h, w), a).unwrap(),
                    Array2::from_shape_vec((h, w), b).unwrap(),
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn confusion_and_scores_match_double_loop((h, m) in pair()) {
        let c = weighted_confusion(h.view(), m.view()).unwrap();
        let oracle = naive_sums(&h, &m);
        for (got, want) in [c.tp, c.fp, c.tn, c.fn_].into_iter().zip(oracle) {
            prop_assert!(close(got, want, 1e-9), "{got} vs {want}");
        }
        for kind in KINDS {
            let (got, want) = (score(&c, kind), naive_score(kind, oracle));
            prop_assert!(close(got, want, 1e-9), "{kind:?}: {got} vs {want}");
        }
    }

    #[test]
    fn confusion_partitions_the_pixels((h, m) in pair()) {
        let c = weighted_confusion(h.view(), m.view()).unwrap();
        let n = h.len() as f64;
        prop_assert!(close(c.tp + c.fp + c.tn + c.fn_, n, 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn binary_heatmaps_reduce_to_counts((h, m) in binary_pair()) {
        let c = weighted_confusion(h.view(), m.view()).unwrap();
        let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
        for (&p, &g) in h.iter().zip(&m) {
            match (p, g) {
                (1, 1) => tp += 1,
                (1, 0) => fp += 1,
                (0, 0) => tn += 1,
                _ => fn_ += 1,
            }
        }
        let f1 = if 2 * tp + fp + fn_ == 0 { 0.0 } else { (2 * tp) as f64 / (2 * tp + fp + fn_) as f64 };
        let iou = if tp + fp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fp + fn_) as f64 };
        let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
        let mcc = if factors.contains(&0) {
            0.0
        } else {
            let num = tp as i128 * tn as i128 - fp as i128 * fn_ as i128;
            let den: u128 = factors.iter().map(|&f| f as u128).product();
            num as f64 / (den as f64).sqrt()
        };
        prop_assert_eq!(score(&c, ScoreKind::F1), f1);
        prop_assert_eq!(score(&c, ScoreKind::Iou), iou);
        prop_assert_eq!(score(&c, ScoreKind::Mcc), mcc);
    }

    #[test]
    fn v2_equals_concatenated_score((h, m) in pair(), cut in 0.0f64..1.0) {
        // Split the rows into two "images"; the union is the original pair.
        let r = ((h.nrows() as f64 * cut) as usize).clamp(1, h.nrows());
        let mut acc: Vec<MetricAccumulator> = KINDS
            .iter()
            .map(|&k| MetricAccumulator::new(k, Aggregation::V2))
            .collect();
        for a in &mut acc {
            a.update(h.slice(s![..r, ..]), m.slice(s![..r, ..])).unwrap();
            if r < h.nrows() {
                a.update(h.slice(s![r.., ..]), m.slice(s![r.., ..])).unwrap();
            }
        }
        let whole = weighted_confusion(h.view(), m.view()).unwrap();
        for a in &acc {
            let want = score(&whole, a.kind());
            prop_assert!(close(a.compute().unwrap(), want, 1e-9));
        }
    }

    #[test]
    fn auroc_matches_pair_counting(
        data in prop::collection::vec((0u8..20, any::<bool>()), 2..60)
    ) {
        // Coarse scores force plenty of ties.
        let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 19.0).collect();
        let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
        let pos = labels.iter().filter(|&&l| l).count();
        let neg = labels.len() - pos;
        let result = roc_auroc(&scores, &labels);
        if pos == 0 || neg == 0 {
            prop_assert_eq!(result.unwrap_err(), MetricError::SingleClass);
        } else {
            let mut wins = 0.0;
            for (i, &li) in labels.iter().enumerate() {
                for (j, &lj) in labels.iter().enumerate() {
                    if li && !lj {
                        wins += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                    }
                }
            }
            let oracle = wins / (pos * neg) as f64;
            let (_, auc) = result.unwrap();
            prop_assert!((auc - oracle).abs() <= 1e-9);
            // Invariant under a strictly increasing transform.
            let warped: Vec<f64> = scores.iter().map(|s| s.powi(3) + 2.0).collect();
            prop_assert_eq!(roc_auroc(&warped, &labels).unwrap().1, auc);
        }
    }
}

#[test]
fn two_image_aggregation_example() {
    let images = [
        (Array2::from_elem((1, 1), 1.0f64), Array2::from_elem((1, 1), 1u8)),
        (
            Array2::from_elem((1, 4), 0.2f64),
            Array2::from_shape_vec((1, 4), vec![1u8, 0, 0, 0]).unwrap(),
        ),
    ];
    let mut v1 = MetricAccumulator::new(ScoreKind::F1, Aggregation::V1);
    let mut v2 = MetricAccumulator::new(ScoreKind::F1, Aggregation::V2);
    for (h, m) in &images {
        v1.update(h.view(), m.view()).unwrap();
        v2.update(h.view(), m.view()).unwrap();
    }
    // Image 2: tp 0.2, fp 0.6, fn 0.8 → F1 = 0.4 / 1.8.
    let oracle_v1 = (1.0 + 0.4 / 1.8) / 2.0;
    let oracle_v2 = 2.4 / (2.4 + 0.8 + 0.6);
    assert!((v1.compute().unwrap() - oracle_v1).abs() < 1e-12);
    assert!((v2.compute().unwrap() - oracle_v2).abs() < 1e-12);
    assert!((v1.compute().unwrap() - 0.611111).abs() < 1e-6);
    assert!((v2.compute().unwrap() - 0.631579).abs() < 1e-6);
}

#[test]
fn auroc_examples() {
    assert_eq!(roc_auroc(&[0.1, 0.9], &[false, true]).unwrap().1, 1.0);
    assert_eq!(roc_auroc(&[0.5, 0.5], &[false, true]).unwrap().1, 0.5);
    assert_eq!(
        roc_auroc(&[0.2, 0.4, 0.6, 0.8], &[false, true, false, true]).unwrap().1,
        0.75
    );
}

#[test]
fn mauroc_examples() {
    let m = Array2::from_shape_vec((1, 2), vec![0u8, 1]).unwrap();
    let perfect = Array2::from_shape_vec((1, 2), vec![0.0f32, 1.0]).unwrap();
    let ties = Array2::from_elem((1, 2), 0.5f32);
    let all_forged = Array2::from_elem((1, 2), 1u8);
    let (value, skipped) = mauroc([
        (perfect.view(), m.view()),
        (ties.view(), m.view()),
        (ties.view(), all_forged.view()),
    ])
    .unwrap();
    assert_eq!(value, 0.75);
    assert_eq!(skipped, 1);
}

#[test]
fn worked_confusion_example() {
    let h = Array2::from_shape_vec((1, 4), vec![0.5, 1.0, 0.0, 0.25]).unwrap();
    let m = Array2::from_shape_vec((1, 4), vec![1u8, 1, 0, 0]).unwrap();
    let c = weighted_confusion(h.view(), m.view()).unwrap();
    assert_eq!(c, WeightedConfusion::new(1.5, 0.25, 1.75, 0.5));
    assert_eq!(score(&c, ScoreKind::F1), 0.8);
    assert!((score(&c, ScoreKind::Mcc) - 2.5 / 15.75f64.sqrt()).abs() < 1e-12);
}
