//! Block noise-level inconsistencies conditioned on intensity.
//!
//! The noise level of each block is a robust scale estimate of the residual of
//! a normalised 3×3 Laplacian. Blocks much quieter than the median block of
//! similar intensity are anomalous; connected groups of anomalous blocks are
//! validated with a binomial-tail NFA.

use ndarray::Array2;
use serde::Deserialize;

use super::acontrario::{nfa, regions};
use super::{
    check_device, invalid, luminance, ExtraArray, Method, MethodError, MethodOutput, OutputType,
    Prediction,
};
use crate::data::{DataMap, IMAGE};
use crate::postprocessing::{resize_with_trim_and_pad, upscale_nearest};
use crate::preprocessing::PipelineSpec;

/// Consistency constant of the median absolute deviation for Gaussian noise.
const MAD_SCALE: f64 = 0.6745;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseBlocksConfig {
    pub block_size: usize,
    pub num_bins: usize,
    /// A block is anomalous below this fraction of its bin's median level.
    pub anomaly_ratio: f64,
    pub nfa_epsilon: f64,
    pub seed: Option<u64>,
    pub device: Option<String>,
}

impl Default for NoiseBlocksConfig {
    fn default() -> Self {
        Self {
            block_size: 16,
            num_bins: 8,
            anomaly_ratio: 0.5,
            nfa_epsilon: 1.0,
            seed: None,
            device: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NoiseBlocksMethod {
    config: NoiseBlocksConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseAnalysis {
    /// Estimated noise standard deviation per block.
    pub sigma: Array2<f64>,
    pub bin: Array2<usize>,
    pub anomalous: Array2<bool>,
    /// Validated block regions with their NFA.
    pub regions: Vec<(Vec<(usize, usize)>, f64)>,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Laplacian residual divided by the kernel's ℓ2 norm (6), so white noise of
/// standard deviation σ keeps standard deviation σ. Border pixels are `None`.
pub fn laplacian_residual(img: &Array2<f64>) -> Array2<Option<f64>> {
    const K: [[f64; 3]; 3] = [[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]];
    let (h, w) = img.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        if y == 0 || x == 0 || y + 1 >= h || x + 1 >= w {
            return None;
        }
        let mut s = 0.0;
        for (dy, row) in K.iter().enumerate() {
            for (dx, k) in row.iter().enumerate() {
                s += k * img[[y + dy - 1, x + dx - 1]];
            }
        }
        Some(s / 6.0)
    })
}

impl NoiseBlocksMethod {
    pub fn new(config: NoiseBlocksConfig) -> Result<Self, MethodError> {
        if !(8..=128).contains(&config.block_size) {
            return Err(invalid("block_size", "must be in 8..=128"));
        }
        if !(1..=64).contains(&config.num_bins) {
            return Err(invalid("num_bins", "must be in 1..=64"));
        }
        if !(config.anomaly_ratio > 0.0 && config.anomaly_ratio < 1.0) {
            return Err(invalid("anomaly_ratio", "must be in (0, 1)"));
        }
        if !(config.nfa_epsilon > 0.0) || !config.nfa_epsilon.is_finite() {
            return Err(invalid("nfa_epsilon", "must be a finite value > 0"));
        }
        check_device(&config.device);
        Ok(Self { config })
    }

    pub fn min_size(&self) -> usize {
        2 * self.config.block_size
    }

    pub fn analyze(&self, img: &Array2<f64>) -> Result<NoiseAnalysis, MethodError> {
        let (h, w) = img.dim();
        let min = self.min_size();
        if h < min || w < min {
            return Err(MethodError::ImageTooSmall { min, got: (h, w) });
        }
        let bs = self.config.block_size;
        let (by, bx) = (h / bs, w / bs);
        let residual = laplacian_residual(img);
        let mut sigma = Array2::<f64>::zeros((by, bx));
        let mut mean = Array2::<f64>::zeros((by, bx));
        let mut buf = Vec::with_capacity(bs * bs);
        for i in 0..by {
            for j in 0..bx {
                buf.clear();
                let mut total = 0.0;
                for y in i * bs..(i + 1) * bs {
                    for x in j * bs..(j + 1) * bs {
                        total += img[[y, x]];
                        if let Some(r) = residual[[y, x]] {
                            buf.push(r.abs());
                        }
                    }
                }
                sigma[[i, j]] = median(&mut buf) / MAD_SCALE;
                mean[[i, j]] = total / (bs * bs) as f64;
            }
        }

        let nb = self.config.num_bins;
        let lo = mean.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let bin = mean.mapv(|m| {
            if hi > lo {
                (((m - lo) / (hi - lo) * nb as f64) as usize).min(nb - 1)
            } else {
                0
            }
        });
        let mut reference = vec![0.0; nb];
        for (b, r) in reference.iter_mut().enumerate() {
            let mut members: Vec<f64> = sigma
                .iter()
                .zip(bin.iter())
                .filter(|(_, &bb)| bb == b)
                .map(|(&s, _)| s)
                .collect();
            *r = median(&mut members);
        }
        let ratio = self.config.anomaly_ratio;
        let anomalous =
            Array2::from_shape_fn((by, bx), |p| sigma[p] < ratio * reference[bin[p]]);
        let below_median = Array2::from_shape_fn((by, bx), |p| sigma[p] < reference[bin[p]]);

        let tests = (by * bx) as f64;
        let regions = regions(&anomalous, |&a| a, |_, _| true)
            .into_iter()
            .filter_map(|r| {
                let (y0, x0, y1, x1) = r.bbox;
                let k = (y0..=y1)
                    .flat_map(|y| (x0..=x1).map(move |x| (y, x)))
                    .filter(|&p| below_median[p])
                    .count() as u64;
                let value = nfa(tests, r.bbox_area() as u64, k, 0.5);
                (value < self.config.nfa_epsilon).then_some((r.pixels, value))
            })
            .collect();
        Ok(NoiseAnalysis {
            sigma,
            bin,
            anomalous,
            regions,
        })
    }
}

impl Method for NoiseBlocksMethod {
    fn name(&self) -> &'static str {
        "noise_blocks"
    }

    fn output_types(&self) -> &'static [OutputType] {
        &[OutputType::Mask, OutputType::Detection]
    }

    fn pipeline(&self) -> PipelineSpec {
        PipelineSpec::new(vec![], &[IMAGE], &[IMAGE]).expect("static pipeline is valid")
    }

    fn predict(&self, d: &DataMap) -> Result<Prediction, MethodError> {
        let img = luminance(d)?;
        let analysis = self.analyze(&img)?;
        let mut blocks = Array2::<u8>::zeros(analysis.sigma.dim());
        for (pixels, _) in &analysis.regions {
            for &p in pixels {
                blocks[p] = 1;
            }
        }
        let bs = self.config.block_size;
        let (by, bx) = blocks.dim();
        let mask = resize_with_trim_and_pad(&upscale_nearest(&blocks, (by * bs, bx * bs))?, img.dim());
        let detection = if analysis.regions.is_empty() { 0.0 } else { 1.0 };
        Ok(Prediction {
            output: MethodOutput {
                heatmap: None,
                mask: Some(mask),
                detection: Some(detection),
            },
            extras: vec![(
                "block_sigma".into(),
                ExtraArray::F32(analysis.sigma.mapv(|s| s as f32)),
            )],
        })
    }
}
