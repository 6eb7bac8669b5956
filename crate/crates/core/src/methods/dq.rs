//! Double-quantization localization from luma DCT histograms.
//!
//! For each low AC frequency the histogram of `|c|` is tested for a periodic
//! modulation against its one-period moving average. Where a period is found,
//! a coefficient in an enhanced bin is evidence for double quantization and a
//! coefficient in a depleted bin for a single (tampered) quantization.

use ndarray::Array2;
use serde::Deserialize;

use super::{check_device, invalid, Method, MethodError, MethodOutput, OutputType, Prediction};
use crate::data::{DataMap, DCT_COEFFICIENTS, IMAGE_SIZE};
use crate::image_io::jpeg::ZIGZAG;
use crate::methods::ExtraArray;
use crate::postprocessing::{resize_with_trim_and_pad, upscale_nearest, zero_one_rescale};
use crate::preprocessing::PipelineSpec;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqConfig {
    /// Leading zig-zag AC frequencies examined.
    pub num_frequencies: usize,
    pub max_period: usize,
    /// Largest `|c|` histogram bin used.
    pub max_bin: usize,
    /// Bins whose envelope falls below this count are ignored.
    pub min_count: f64,
    /// Normal-approximation z score a period must exceed.
    pub significance: f64,
    pub seed: Option<u64>,
    pub device: Option<String>,
}

impl Default for DqConfig {
    fn default() -> Self {
        Self {
            num_frequencies: 10,
            max_period: 32,
            max_bin: 80,
            min_count: 5.0,
            significance: 4.0,
            seed: None,
            device: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DqMethod {
    config: DqConfig,
}

impl DqMethod {
    pub fn new(config: DqConfig) -> Result<Self, MethodError> {
        if !(1..=63).contains(&config.num_frequencies) {
            return Err(invalid("num_frequencies", "must be in 1..=63"));
        }
        if !(2..=64).contains(&config.max_period) {
            return Err(invalid("max_period", "must be in 2..=64"));
        }
        if config.max_bin < 2 * config.max_period {
            return Err(invalid("max_bin", "must be at least twice max_period"));
        }
        if !(config.min_count > 0.0) {
            return Err(invalid("min_count", "must be > 0"));
        }
        if !(config.significance > 0.0) {
            return Err(invalid("significance", "must be > 0"));
        }
        check_device(&config.device);
        Ok(Self { config })
    }

    pub fn config(&self) -> &DqConfig {
        &self.config
    }
}

/// Periodic model of one frequency's `|c|` histogram.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PeriodFit {
    pub period: usize,
    pub z: f64,
    /// `h(a) / s(a)` normalised to mean 1; `None` outside the usable range.
    pub ratio: Vec<Option<f64>>,
}

/// Centred moving average over one period; even periods use the 2×p form.
fn envelope(h: &[f64], a: usize, p: usize) -> Option<f64> {
    let half = p / 2;
    if a < 1 + half || a + half >= h.len() {
        return None;
    }
    if p % 2 == 1 {
        Some(h[a - half..=a + half].iter().sum::<f64>() / p as f64)
    } else {
        let inner: f64 = h[a - half + 1..a + half].iter().sum();
        Some((inner + 0.5 * (h[a - half] + h[a + half])) / p as f64)
    }
}

/// Wilson–Hilferty normal approximation of a χ² statistic.
fn chi2_z(chi2: f64, df: f64) -> f64 {
    let v = 2.0 / (9.0 * df);
    ((chi2 / df).cbrt() - (1.0 - v)) / v.sqrt()
}

fn fit_period(h: &[f64], p: usize, min_count: f64) -> Option<PeriodFit> {
    let mut observed = vec![0.0; p];
    let mut expected = vec![0.0; p];
    let mut ratio = vec![None; h.len()];
    for a in 1..h.len() {
        if let Some(s) = envelope(h, a, p) {
            if s >= min_count {
                observed[a % p] += h[a];
                expected[a % p] += s;
                ratio[a] = Some(h[a] / s);
            }
        }
    }
    if expected.iter().any(|&e| e == 0.0) {
        return None;
    }
    // Remove the level bias of the envelope so only phase structure counts.
    let scale = observed.iter().sum::<f64>() / expected.iter().sum::<f64>();
    let chi2: f64 = observed
        .iter()
        .zip(&expected)
        .map(|(o, e)| (o - e * scale).powi(2) / (e * scale))
        .sum();
    for r in ratio.iter_mut().flatten() {
        *r /= scale;
    }
    Some(PeriodFit {
        period: p,
        z: chi2_z(chi2, (p - 1) as f64),
        ratio,
    })
}

/// Strongest significant period, replaced by its smallest divisor that keeps
/// at least half of its z score (harmonics of a period also fit).
pub(crate) fn detect_period(h: &[f64], config: &DqConfig) -> Option<PeriodFit> {
    let fits: Vec<PeriodFit> = (2..=config.max_period)
        .filter_map(|p| fit_period(h, p, config.min_count))
        .collect();
    let best = fits
        .iter()
        .filter(|f| f.z.is_finite() && f.z >= config.significance)
        .max_by(|a, b| a.z.total_cmp(&b.z))?;
    fits.iter()
        .filter(|f| best.period % f.period == 0 && f.z >= config.significance.max(0.5 * best.z))
        .min_by_key(|f| f.period)
        .cloned()
}

impl DqMethod {
    /// Per-block tamper evidence in `[0, 1]`; 0.5 where no frequency informs.
    pub fn block_scores(&self, coefficients: &Array2<i16>) -> Array2<f32> {
        let (by, bx) = (coefficients.nrows() / 8, coefficients.ncols() / 8);
        let mut sum = Array2::<f64>::zeros((by, bx));
        let mut count = Array2::<u32>::zeros((by, bx));
        let bins = self.config.max_bin + 1;
        for &natural in &ZIGZAG[1..=self.config.num_frequencies] {
            let (u, v) = (natural / 8, natural % 8);
            let mut h = vec![0.0f64; bins];
            for i in 0..by {
                for j in 0..bx {
                    let a = coefficients[[8 * i + u, 8 * j + v]].unsigned_abs() as usize;
                    if a < bins {
                        h[a] += 1.0;
                    }
                }
            }
            let Some(fit) = detect_period(&h, &self.config) else {
                continue;
            };
            log::debug!("frequency ({u},{v}): period {} z {:.2}", fit.period, fit.z);
            for i in 0..by {
                for j in 0..bx {
                    let a = coefficients[[8 * i + u, 8 * j + v]].unsigned_abs() as usize;
                    if let Some(Some(r)) = fit.ratio.get(a) {
                        sum[[i, j]] += 1.0 / (1.0 + r);
                        count[[i, j]] += 1;
                    }
                }
            }
        }
        Array2::from_shape_fn((by, bx), |(i, j)| {
            if count[[i, j]] == 0 {
                0.5
            } else {
                (sum[[i, j]] / f64::from(count[[i, j]])) as f32
            }
        })
    }
}

impl Method for DqMethod {
    fn name(&self) -> &'static str {
        "dq"
    }

    fn output_types(&self) -> &'static [OutputType] {
        &[OutputType::Heatmap]
    }

    fn pipeline(&self) -> PipelineSpec {
        PipelineSpec::new(
            vec![],
            &[DCT_COEFFICIENTS, IMAGE_SIZE],
            &[DCT_COEFFICIENTS, IMAGE_SIZE],
        )
        .expect("static pipeline is valid")
    }

    fn predict(&self, d: &DataMap) -> Result<Prediction, MethodError> {
        let dct = d
            .dct()
            .ok_or_else(|| MethodError::MissingKey(DCT_COEFFICIENTS.into()))?;
        let size = d
            .image_size()
            .ok_or_else(|| MethodError::MissingKey(IMAGE_SIZE.into()))?;
        if dct.components.is_empty() {
            return Err(MethodError::InvalidInput("no DCT components".into()));
        }
        let luma = dct.luma();
        let blocks = self.block_scores(&luma.coefficients);
        let (by, bx) = blocks.dim();
        let rescaled = zero_one_rescale(&blocks)?;
        let up = upscale_nearest(&rescaled, (by * 8, bx * 8))?;
        let heatmap = resize_with_trim_and_pad(&up, size);
        Ok(Prediction {
            output: MethodOutput {
                heatmap: Some(heatmap),
                ..Default::default()
            },
            extras: vec![("block_scores".into(), ExtraArray::F32(blocks))],
        })
    }
}
