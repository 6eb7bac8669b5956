//! JPEG grid alignment by per-pixel voting over the 64 candidate origins.
//!
//! Every 8×8 window is transformed with an orthonormal DCT and scored by its
//! number of near-zero AC coefficients. Each pixel votes for the origin of the
//! best-scoring window that contains it. Regions voting consistently for an
//! origin other than the dominant one are validated a contrario.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::Deserialize;

use super::acontrario::{nfa, regions};
use super::{
    check_device, invalid, luminance, ExtraArray, Method, MethodError, MethodOutput, OutputType,
    Prediction,
};
use crate::data::{DataMap, IMAGE, IMAGE_SIZE};
use crate::preprocessing::{PipelineSpec, TransformSpec};

/// Vote value of pixels without a valid vote.
pub const NO_VOTE: u8 = 255;

pub const MIN_SIZE: usize = 24;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridAlignConfig {
    pub nfa_epsilon: f64,
    /// Magnitude below which a DCT coefficient counts as zero.
    pub zero_threshold: f64,
    /// Radius of the square closing applied to the output mask.
    pub closing_radius: usize,
    pub seed: Option<u64>,
    pub device: Option<String>,
}

impl Default for GridAlignConfig {
    fn default() -> Self {
        Self {
            nfa_epsilon: 1.0,
            zero_threshold: 0.5,
            closing_radius: 4,
            seed: None,
            device: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridAlignMethod {
    config: GridAlignConfig,
}

/// A validated region with its grid origin `(y % 8) * 8 + x % 8`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRegion {
    pub origin: u8,
    pub nfa: f64,
    pub pixels: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridAnalysis {
    pub votes: Array2<u8>,
    pub global_origin: Option<u8>,
    pub global_nfa: f64,
    pub regions: Vec<GridRegion>,
}

fn dct_basis() -> [[f64; 8]; 8] {
    let mut b = [[0.0; 8]; 8];
    for (k, row) in b.iter_mut().enumerate() {
        let alpha = if k == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
        for (n, v) in row.iter_mut().enumerate() {
            *v = alpha * ((2 * n + 1) as f64 * k as f64 * PI / 16.0).cos();
        }
    }
    b
}

fn const_along_x_or_y(img: &Array2<f64>, y: usize, x: usize) -> bool {
    let rows_const = (0..8).all(|dy| (1..8).all(|dx| img[[y + dy, x + dx]] == img[[y + dy, x]]));
    let cols_const = (0..8).all(|dx| (1..8).all(|dy| img[[y + dy, x + dx]] == img[[y, x + dx]]));
    rows_const || cols_const
}

impl GridAlignMethod {
    pub fn new(config: GridAlignConfig) -> Result<Self, MethodError> {
        if !(config.nfa_epsilon > 0.0) || !config.nfa_epsilon.is_finite() {
            return Err(invalid("nfa_epsilon", "must be a finite value > 0"));
        }
        if !(config.zero_threshold > 0.0) {
            return Err(invalid("zero_threshold", "must be > 0"));
        }
        if config.closing_radius > 32 {
            return Err(invalid("closing_radius", "must be at most 32"));
        }
        check_device(&config.device);
        Ok(Self { config })
    }

    /// Number of near-zero AC coefficients of every 8×8 window (indexed by its
    /// top-left corner) and whether the window is constant along a direction.
    fn window_scores(&self, img: &Array2<f64>) -> (Array2<u8>, Array2<bool>) {
        let (h, w) = img.dim();
        let basis = dct_basis();
        let (wy, wx) = (h - 7, w - 7);
        // Horizontal 1-D DCTs of every 8-sample row segment.
        let mut rows = vec![[0.0f64; 8]; h * wx];
        for y in 0..h {
            for x in 0..wx {
                let seg = &mut rows[y * wx + x];
                for (k, b) in basis.iter().enumerate() {
                    seg[k] = (0..8).map(|n| b[n] * img[[y, x + n]]).sum();
                }
            }
        }
        let mut zeros = Array2::<u8>::zeros((wy, wx));
        let mut flat = Array2::from_elem((wy, wx), false);
        let t = self.config.zero_threshold;
        for y in 0..wy {
            for x in 0..wx {
                let mut count = 0u8;
                for (ky, b) in basis.iter().enumerate() {
                    for kx in 0..8 {
                        if ky == 0 && kx == 0 {
                            continue;
                        }
                        let c: f64 = (0..8).map(|n| b[n] * rows[(y + n) * wx + x][kx]).sum();
                        count += u8::from(c.abs() < t);
                    }
                }
                zeros[[y, x]] = count;
                flat[[y, x]] = const_along_x_or_y(img, y, x);
            }
        }
        (zeros, flat)
    }

    fn votes(&self, img: &Array2<f64>) -> Array2<u8> {
        let (h, w) = img.dim();
        let (zeros, flat) = self.window_scores(img);
        let mut votes = Array2::from_elem((h, w), NO_VOTE);
        for py in 7..h - 7 {
            for px in 7..w - 7 {
                let (mut best, mut ties, mut at) = (0u8, 0usize, (0, 0));
                for y in py - 7..=py {
                    for x in px - 7..=px {
                        let z = zeros[[y, x]];
                        if z > best {
                            (best, ties, at) = (z, 1, (y, x));
                        } else if z == best {
                            ties += 1;
                        }
                    }
                }
                if best > 0 && ties == 1 && !flat[[at.0, at.1]] {
                    votes[[py, px]] = ((at.0 % 8) * 8 + at.1 % 8) as u8;
                }
            }
        }
        votes
    }

    pub fn analyze(&self, img: &Array2<f64>) -> Result<GridAnalysis, MethodError> {
        let (h, w) = img.dim();
        if h < MIN_SIZE || w < MIN_SIZE {
            return Err(MethodError::ImageTooSmall {
                min: MIN_SIZE,
                got: (h, w),
            });
        }
        let votes = self.votes(img);
        let p = 1.0 / 64.0;
        // Votes come in correlated 8×8 patches; /64 approximates independent votes.
        let mut counts = [0u64; 64];
        for &v in votes.iter().filter(|&&v| v != NO_VOTE) {
            counts[v as usize] += 1;
        }
        let modal = (0..64).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap_or(0);
        let n_global = (h * w / 64) as u64;
        let global_nfa = nfa(64.0, n_global, counts[modal] / 64, p);
        let global_origin =
            (counts[modal] > 0 && global_nfa < self.config.nfa_epsilon).then_some(modal as u8);

        let candidates = regions(
            &votes,
            |&v| v != NO_VOTE && Some(v) != global_origin,
            |a, b| a == b,
        );
        let tests = 64.0 * candidates.len().max(1) as f64;
        let regions = candidates
            .into_iter()
            .filter_map(|r| {
                let n = (r.bbox_area() / 64) as u64;
                let k = (r.pixels.len() / 64) as u64;
                let value = nfa(tests, n, k, p);
                (k > 0 && value < self.config.nfa_epsilon).then(|| GridRegion {
                    origin: votes[r.pixels[0]],
                    nfa: value,
                    pixels: r.pixels,
                })
            })
            .collect();
        Ok(GridAnalysis {
            votes,
            global_origin,
            global_nfa,
            regions,
        })
    }

    fn mask(&self, dim: (usize, usize), regions: &[GridRegion]) -> Array2<u8> {
        let mut mask = Array2::<u8>::zeros(dim);
        for r in regions {
            for &p in &r.pixels {
                mask[p] = 1;
            }
        }
        if regions.is_empty() {
            return mask;
        }
        let r = self.config.closing_radius;
        erode(&dilate(&mask, r), r)
    }
}

fn dilate(m: &Array2<u8>, r: usize) -> Array2<u8> {
    let (h, w) = m.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        let rows = y.saturating_sub(r)..(y + r + 1).min(h);
        let any = rows
            .into_iter()
            .any(|yy| (x.saturating_sub(r)..(x + r + 1).min(w)).any(|xx| m[[yy, xx]] == 1));
        u8::from(any)
    })
}

/// Erosion treating outside pixels as set, so closing does not eat borders.
fn erode(m: &Array2<u8>, r: usize) -> Array2<u8> {
    let (h, w) = m.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        let rows = y.saturating_sub(r)..(y + r + 1).min(h);
        let all = rows
            .into_iter()
            .all(|yy| (x.saturating_sub(r)..(x + r + 1).min(w)).all(|xx| m[[yy, xx]] == 1));
        u8::from(all)
    })
}

impl Method for GridAlignMethod {
    fn name(&self) -> &'static str {
        "grid_align"
    }

    fn output_types(&self) -> &'static [OutputType] {
        &[OutputType::Mask, OutputType::Detection]
    }

    fn pipeline(&self) -> PipelineSpec {
        PipelineSpec::new(
            vec![TransformSpec::GetImageSize],
            &[IMAGE],
            &[IMAGE, IMAGE_SIZE],
        )
        .expect("static pipeline is valid")
    }

    fn predict(&self, d: &DataMap) -> Result<Prediction, MethodError> {
        let img = luminance(d)?;
        let analysis = self.analyze(&img)?;
        let mask = self.mask(img.dim(), &analysis.regions);
        let detection = if analysis.regions.is_empty() { 0.0 } else { 1.0 };
        Ok(Prediction {
            output: MethodOutput {
                heatmap: None,
                mask: Some(mask),
                detection: Some(detection),
            },
            extras: vec![("votes".into(), ExtraArray::U8(analysis.votes))],
        })
    }
}
