//! Luma PSNR and Bjøntegaard-delta rate and quality.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;

/// PSNR of the luma planes in dB; `f64::INFINITY` for identical planes.
pub fn psnr_luma(reference: &Frame, test: &Frame) -> Result<f64> {
    if (reference.width(), reference.height()) != (test.width(), test.height()) {
        return Err(Error::Frame(format!(
            "psnr: geometry {}x{} vs {}x{}",
            reference.width(),
            reference.height(),
            test.width(),
            test.height()
        )));
    }
    if reference.bit_depth() != test.bit_depth() {
        return Err(Error::Frame(format!(
            "psnr: bit depth {} vs {}",
            reference.bit_depth(),
            test.bit_depth()
        )));
    }
    let sse: u64 = reference
        .y()
        .data()
        .iter()
        .zip(test.y().data())
        .map(|(&a, &b)| {
            let d = u64::from(a.abs_diff(b));
            d * d
        })
        .sum();
    if sse == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse as f64 / reference.y().data().len() as f64;
    let peak = f64::from(reference.max_value());
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Formats a PSNR value, writing `inf` for identical inputs.
pub fn format_psnr(db: f64) -> String {
    if db.is_infinite() {
        "inf".to_string()
    } else {
        format!("{db:.4}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub rate: f64,
    pub quality: f64,
}

/// Four rate-quality points, strictly increasing in both after sorting by rate.
#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve {
    points: [RdPoint; 4],
}

pub const BD_POINTS: usize = 4;

/// Narrowest accepted overlap of two curves, in dB for BD-rate and in
/// decades of rate for BD-quality.
pub const MIN_OVERLAP: f64 = 0.01;

impl RdCurve {
    pub fn new(points: &[RdPoint]) -> Result<Self> {
        let mut points: [RdPoint; 4] = points
            .try_into()
            .map_err(|_| Error::RdCurve(format!("need exactly {BD_POINTS} points, got {}", points.len())))?;
        for p in &points {
            if !(p.rate.is_finite() && p.rate > 0.0) {
                return Err(Error::RdCurve(format!("rate must be positive and finite, got {}", p.rate)));
            }
            if !p.quality.is_finite() {
                return Err(Error::RdCurve(format!("quality must be finite, got {}", p.quality)));
            }
        }
        points.sort_by(|a, b| a.rate.total_cmp(&b.rate));
        for w in points.windows(2) {
            if w[1].rate <= w[0].rate {
                return Err(Error::RdCurve(format!("duplicate rate {}", w[0].rate)));
            }
            if w[1].quality <= w[0].quality {
                return Err(Error::RdCurve(format!(
                    "quality must increase with rate: {} at rate {} is not above {} at rate {}",
                    w[1].quality, w[1].rate, w[0].quality, w[0].rate
                )));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[RdPoint; 4] {
        &self.points
    }

    fn log_rates(&self) -> [f64; 4] {
        self.points.map(|p| p.rate.log10())
    }

    fn qualities(&self) -> [f64; 4] {
        self.points.map(|p| p.quality)
    }
}

/// The cubic through four points, stored as power-series coefficients in
/// `x - center` for conditioning.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cubic {
    pub center: f64,
    pub coeffs: [f64; 4],
}

impl Cubic {
    /// Exact interpolation (Newton divided differences). Abscissas must be distinct.
    pub fn through(xs: [f64; 4], ys: [f64; 4]) -> Self {
        let center = xs.iter().sum::<f64>() / 4.0;
        let t = xs.map(|x| x - center);
        let mut d = ys;
        for level in 1..4 {
            for i in (level..4).rev() {
                d[i] = (d[i] - d[i - 1]) / (t[i] - t[i - level]);
            }
        }
        // Expand d0 + (s-t0)(d1 + (s-t1)(d2 + (s-t2)d3)) from the inside
        // out; `c` holds ascending powers of s.
        let mut c = [d[3], 0.0, 0.0, 0.0];
        let mut deg = 0;
        for k in (0..3).rev() {
            let mut next = [0.0; 4];
            for j in 0..=deg {
                next[j + 1] += c[j];
                next[j] -= t[k] * c[j];
            }
            next[0] += d[k];
            c = next;
            deg += 1;
        }
        Self { center, coeffs: c }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let s = x - self.center;
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    /// Closed-form definite integral over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let anti = |x: f64| {
            let s = x - self.center;
            self.coeffs
                .iter()
                .enumerate()
                .rev()
                .fold(0.0, |acc, (k, &c)| acc * s + c / (k + 1) as f64)
                * s
        };
        anti(b) - anti(a)
    }
}

fn overlap(a: [f64; 4], b: [f64; 4]) -> Result<(f64, f64)> {
    let lo = a[0].max(b[0]);
    let hi = a[3].min(b[3]);
    if !(hi - lo >= MIN_OVERLAP) {
        return Err(Error::RdCurve(format!(
            "curves overlap on [{lo:.4}, {hi:.4}], narrower than {MIN_OVERLAP}"
        )));
    }
    Ok((lo, hi))
}

/// Average bitrate difference at equal quality, in percent; negative means
/// the test curve needs fewer bits.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    let (qa, qt) = (anchor.qualities(), test.qualities());
    let (lo, hi) = overlap(qa, qt)?;
    let fa = Cubic::through(qa, anchor.log_rates());
    let ft = Cubic::through(qt, test.log_rates());
    let delta = (ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
    Ok((10f64.powf(delta) - 1.0) * 100.0)
}

/// Average quality difference (test − anchor) at equal rate, in dB.
pub fn bd_quality(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    let (ra, rt) = (anchor.log_rates(), test.log_rates());
    let (lo, hi) = overlap(ra, rt)?;
    let fa = Cubic::through(ra, anchor.qualities());
    let ft = Cubic::through(rt, test.qualities());
    Ok((ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo))
}
