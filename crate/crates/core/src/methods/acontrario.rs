//! Binomial-tail number-of-false-alarms bounds and connected regions.

use libm::lgamma;
use ndarray::Array2;

fn ln_choose(n: u64, k: u64) -> f64 {
    lgamma(n as f64 + 1.0) - lgamma(k as f64 + 1.0) - lgamma((n - k) as f64 + 1.0)
}

/// Natural log of `P[X ≥ k]` for `X ~ Binomial(n, p)`.
pub fn ln_bin_tail(n: u64, k: u64, p: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if k > n || p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let first = ln_choose(n, k) + k as f64 * lp + (n - k) as f64 * lq;
    // Terms relative to the first one, accumulated in linear scale.
    let mut rel = 1.0f64;
    let mut sum = 1.0f64;
    for i in k + 1..=n {
        rel *= (n - i + 1) as f64 / i as f64 * (p / (1.0 - p));
        sum += rel;
        if rel < sum * 1e-17 && (n - i) as f64 / (i + 1) as f64 * (p / (1.0 - p)) < 1.0 {
            break;
        }
    }
    (first + sum.ln()).min(0.0)
}

pub fn bin_tail(n: u64, k: u64, p: f64) -> f64 {
    ln_bin_tail(n, k, p).exp()
}

/// `num_tests · P[Binomial(n, p) ≥ k]`.
pub fn nfa(num_tests: f64, n: u64, k: u64, p: f64) -> f64 {
    (num_tests.ln() + ln_bin_tail(n, k, p)).exp()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub pixels: Vec<(usize, usize)>,
    /// Inclusive `(y0, x0, y1, x1)`.
    pub bbox: (usize, usize, usize, usize),
}

impl Region {
    pub fn bbox_area(&self) -> usize {
        let (y0, x0, y1, x1) = self.bbox;
        (y1 - y0 + 1) * (x1 - x0 + 1)
    }
}

/// 4-connected regions of cells accepted by `include`, where neighbours must
/// also satisfy `same` to be joined. Scans in row-major order.
pub fn regions<T>(
    grid: &Array2<T>,
    include: impl Fn(&T) -> bool,
    same: impl Fn(&T, &T) -> bool,
) -> Vec<Region> {
    let (h, w) = grid.dim();
    let mut seen = Array2::from_elem((h, w), false);
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if seen[[y, x]] || !include(&grid[[y, x]]) {
                continue;
            }
            seen[[y, x]] = true;
            stack.push((y, x));
            let mut pixels = Vec::new();
            let mut bbox = (y, x, y, x);
            while let Some((cy, cx)) = stack.pop() {
                pixels.push((cy, cx));
                bbox = (bbox.0.min(cy), bbox.1.min(cx), bbox.2.max(cy), bbox.3.max(cx));
                let neighbours = [
                    (cy.wrapping_sub(1), cx),
                    (cy + 1, cx),
                    (cy, cx.wrapping_sub(1)),
                    (cy, cx + 1),
                ];
                for (ny, nx) in neighbours {
                    if ny < h
                        && nx < w
                        && !seen[[ny, nx]]
                        && include(&grid[[ny, nx]])
                        && same(&grid[[cy, cx]], &grid[[ny, nx]])
                    {
                        seen[[ny, nx]] = true;
                        stack.push((ny, nx));
                    }
                }
            }
            pixels.sort_unstable();
            out.push(Region { pixels, bbox });
        }
    }
    out
}
