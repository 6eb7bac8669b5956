//! Output shaping shared by the methods: range rescaling and size matching.
//! Maps are anchored at the top-left corner of the image.

use ndarray::Array2;

#[derive(thiserror::Error, Debug, Clone, PartialEq, Eq)]
pub enum PostprocessError {
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("cannot upscale {from:?} to smaller target {to:?}; trim instead")]
    DownscaleNotSupported {
        from: (usize, usize),
        to: (usize, usize),
    },
    #[error("target size must be at least 1×1")]
    EmptyTarget,
}

/// Min-max rescales to `[0, 1]`; a constant map becomes all zeros.
pub fn zero_one_rescale(h: &Array2<f32>) -> Result<Array2<f32>, PostprocessError> {
    if h.iter().any(|v| !v.is_finite()) {
        return Err(PostprocessError::NonFiniteInput);
    }
    let min = h.iter().copied().fold(f32::INFINITY, f32::min);
    let max = h.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if h.is_empty() || max == min {
        return Ok(Array2::zeros(h.dim()));
    }
    let range = f64::from(max) - f64::from(min);
    Ok(h.mapv(|v| {
        (((f64::from(v) - f64::from(min)) / range) as f32).clamp(0.0, 1.0)
    }))
}

/// Copies the overlapping top-left region into a zero array of `target` size.
pub fn resize_with_trim_and_pad<T: Clone + Default>(
    h: &Array2<T>,
    target: (usize, usize),
) -> Array2<T> {
    let (rows, cols) = (h.nrows().min(target.0), h.ncols().min(target.1));
    let mut out = Array2::from_elem(target, T::default());
    out.slice_mut(ndarray::s![..rows, ..cols])
        .assign(&h.slice(ndarray::s![..rows, ..cols]));
    out
}

fn check_upscale(from: (usize, usize), to: (usize, usize)) -> Result<(), PostprocessError> {
    if to.0 == 0 || to.1 == 0 {
        return Err(PostprocessError::EmptyTarget);
    }
    if to.0 < from.0 || to.1 < from.1 || from.0 == 0 || from.1 == 0 {
        return Err(PostprocessError::DownscaleNotSupported { from, to });
    }
    Ok(())
}

/// Nearest-neighbour enlargement, `src = floor(dst · S / T)`. An integer
/// ratio replicates each source cell exactly.
pub fn upscale_nearest<T: Clone>(
    m: &Array2<T>,
    target: (usize, usize),
) -> Result<Array2<T>, PostprocessError> {
    check_upscale(m.dim(), target)?;
    let (sr, sc) = m.dim();
    Ok(Array2::from_shape_fn(target, |(y, x)| {
        m[[y * sr / target.0, x * sc / target.1]].clone()
    }))
}

/// Enlarges a binary mask with nearest-neighbour sampling.
pub fn upscale_mask(m: &Array2<u8>, target: (usize, usize)) -> Result<Array2<u8>, PostprocessError> {
    upscale_nearest(m, target)
}

/// Bilinear enlargement with the align-corners mapping
/// `src = dst · (S − 1) / (T − 1)`, clamped to `[0, 1]`.
pub fn simple_upscale_heatmap(
    h: &Array2<f32>,
    target: (usize, usize),
) -> Result<Array2<f32>, PostprocessError> {
    check_upscale(h.dim(), target)?;
    let (sr, sc) = h.dim();
    let coord = |dst: usize, s: usize, t: usize| -> (usize, usize, f64) {
        if t <= 1 || s <= 1 {
            return (0, 0, 0.0);
        }
        let pos = dst as f64 * (s - 1) as f64 / (t - 1) as f64;
        let i0 = (pos.floor() as usize).min(s - 1);
        let i1 = (i0 + 1).min(s - 1);
        (i0, i1, pos - i0 as f64)
    };
    Ok(Array2::from_shape_fn(target, |(y, x)| {
        let (y0, y1, fy) = coord(y, sr, target.0);
        let (x0, x1, fx) = coord(x, sc, target.1);
        let v = |r: usize, c: usize| f64::from(h[[r, c]]);
        let top = v(y0, x0) * (1.0 - fx) + v(y0, x1) * fx;
        let bottom = v(y1, x0) * (1.0 - fx) + v(y1, x1) * fx;
        ((top * (1.0 - fy) + bottom * fy) as f32).clamp(0.0, 1.0)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn rescale_linear_values() {
        let h = array![[-2.0f32, 0.0, 2.0]];
        assert_eq!(zero_one_rescale(&h).unwrap(), array![[0.0f32, 0.5, 1.0]]);
    }

    #[test]
    fn rescale_constant_is_zero() {
        let h = Array2::from_elem((3, 3), 0.7f32);
        assert_eq!(zero_one_rescale(&h).unwrap(), Array2::<f32>::zeros((3, 3)));
    }

    #[test]
    fn rescale_identity_on_unit_range() {
        let h = array![[0.0f32, 0.25], [0.6, 1.0]];
        assert_eq!(zero_one_rescale(&h).unwrap(), h);
    }

    #[test]
    fn rescale_rejects_nan() {
        let h = array![[0.0f32, f32::NAN]];
        assert_eq!(
            zero_one_rescale(&h).unwrap_err(),
            PostprocessError::NonFiniteInput
        );
    }

    #[test]
    fn pad_and_trim() {
        let ones = Array2::<f32>::ones((4, 4));
        let padded = resize_with_trim_and_pad(&ones, (6, 6));
        assert_eq!(padded.dim(), (6, 6));
        assert_eq!(padded.iter().filter(|&&v| v == 1.0).count(), 16);
        assert!(padded.slice(ndarray::s![..4, ..4]).iter().all(|&v| v == 1.0));

        let big = Array2::from_shape_fn((6, 6), |(r, c)| (r * 6 + c) as f32);
        let trimmed = resize_with_trim_and_pad(&big, (4, 4));
        assert_eq!(trimmed, big.slice(ndarray::s![..4, ..4]).to_owned());
        assert_eq!(resize_with_trim_and_pad(&big, (6, 6)), big);
    }

    #[test]
    fn upscale_single_cell_mask() {
        let m = array![[1u8]];
        assert_eq!(upscale_mask(&m, (3, 3)).unwrap(), Array2::from_elem((3, 3), 1u8));
    }

    #[test]
    fn bilinear_align_corners() {
        let h = array![[0.0f32], [1.0]];
        let up = simple_upscale_heatmap(&h, (4, 1)).unwrap();
        let expected = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        for (got, want) in up.iter().zip(expected) {
            assert!((f64::from(*got) - want).abs() < 1e-6);
        }
    }

    #[test]
    fn downscale_is_rejected() {
        let m = Array2::<u8>::zeros((4, 4));
        assert!(matches!(
            upscale_mask(&m, (2, 8)),
            Err(PostprocessError::DownscaleNotSupported { .. })
        ));
    }

    proptest! {
        #[test]
        fn rescale_is_idempotent(values in prop::collection::vec(-100.0f32..100.0, 2..40)) {
            let h = Array2::from_shape_vec((1, values.len()), values).unwrap();
            let once = zero_one_rescale(&h).unwrap();
            let twice = zero_one_rescale(&once).unwrap();
            for (a, b) in once.iter().zip(twice.iter()) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }

        #[test]
        fn upscale_mask_stays_binary(
            bits in prop::collection::vec(0u8..2, 1..30),
            extra_r in 0usize..10,
            extra_c in 0usize..10,
        ) {
            let m = Array2::from_shape_vec((1, bits.len()), bits).unwrap();
            let target = (1 + extra_r, m.ncols() + extra_c);
            let up = upscale_mask(&m, target).unwrap();
            prop_assert_eq!(up.dim(), target);
            prop_assert!(up.iter().all(|&v| v <= 1));
        }

        #[test]
        fn bilinear_preserves_unit_range(
            values in prop::collection::vec(0.0f32..=1.0, 4),
            tr in 2usize..12,
            tc in 2usize..12,
        ) {
            let h = Array2::from_shape_vec((2, 2), values).unwrap();
            let up = simple_upscale_heatmap(&h, (tr, tc)).unwrap();
            prop_assert!(up.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn trim_pad_overlap_is_exact(r in 1usize..10, c in 1usize..10, tr in 1usize..10, tc in 1usize..10) {
            let h = Array2::from_shape_fn((r, c), |(y, x)| (y * 31 + x) as f32);
            let out = resize_with_trim_and_pad(&h, (tr, tc));
            prop_assert_eq!(out.dim(), (tr, tc));
            for y in 0..tr {
                for x in 0..tc {
                    let want = if y < r && x < c { h[[y, x]] } else { 0.0 };
                    prop_assert_eq!(out[[y, x]], want);
                }
            }
        }
    }
}
