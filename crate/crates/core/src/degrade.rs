//! A JPEG-like stand-in for codec compression: 8×8 orthonormal DCT-II per
//! channel, uniform quantization with a frequency-dependent step, inverse DCT.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const DCT_BLOCK: usize = 8;

/// Standard JPEG luminance quantization table (quality 50).
pub const JPEG_LUMA: [[u16; 8]; 8] = [
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
];

/// Degradation strength `q`: the step for coefficient (u, v) is
/// `q · JPEG_LUMA[u][v] / 16` on the 0..255 sample scale, so `q = 16` uses
/// the table as is.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradeSpec {
    pub strength: f64,
}

impl DegradeSpec {
    pub fn new(strength: f64) -> Result<Self> {
        let spec = Self { strength };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strength.is_finite() && self.strength > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "degradation strength must be positive, got {}",
                self.strength
            )));
        }
        Ok(())
    }

    pub fn step(&self, u: usize, v: usize) -> f64 {
        self.strength * f64::from(JPEG_LUMA[u][v]) / 16.0
    }
}

/// `basis[u][x] = a(u) cos((2x + 1) u π / 16)`, orthonormal.
fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let n = DCT_BLOCK as f64;
        let mut b = [[0.0; 8]; 8];
        for (u, row) in b.iter_mut().enumerate() {
            let a = if u == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = a * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / (2.0 * n)).cos();
            }
        }
        b
    })
}

/// Forward 2-D DCT of one 8×8 block (row-major, `[y][x]` → `[u][v]` with `u` vertical).
pub fn dct8x8(block: &[[f64; 8]; 8]) -> [[f64; 8]; 8] {
    let b = basis();
    let mut tmp = [[0.0; 8]; 8];
    for y in 0..8 {
        for v in 0..8 {
            tmp[y][v] = (0..8).map(|x| b[v][x] * block[y][x]).sum();
        }
    }
    let mut out = [[0.0; 8]; 8];
    for u in 0..8 {
        for v in 0..8 {
            out[u][v] = (0..8).map(|y| b[u][y] * tmp[y][v]).sum();
        }
    }
    out
}

pub fn idct8x8(coeffs: &[[f64; 8]; 8]) -> [[f64; 8]; 8] {
    let b = basis();
    let mut tmp = [[0.0; 8]; 8];
    for u in 0..8 {
        for x in 0..8 {
            tmp[u][x] = (0..8).map(|v| b[v][x] * coeffs[u][v]).sum();
        }
    }
    let mut out = [[0.0; 8]; 8];
    for y in 0..8 {
        for x in 0..8 {
            out[y][x] = (0..8).map(|u| b[u][y] * tmp[u][x]).sum();
        }
    }
    out
}

/// Degrades one plane of values in [0, 1]. Planes whose sides are not
/// multiples of 8 are edge-replicated up to the next multiple, and cropped back.
pub fn degrade_plane(plane: &[f64], width: usize, height: usize, spec: &DegradeSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if plane.len() != width * height || width == 0 || height == 0 {
        return Err(Error::shape("degrade_plane", &[height, width], &[plane.len()]));
    }
    let mut out = vec![0.0; plane.len()];
    for by in (0..height).step_by(DCT_BLOCK) {
        for bx in (0..width).step_by(DCT_BLOCK) {
            let mut block = [[0.0; 8]; 8];
            for (y, row) in block.iter_mut().enumerate() {
                let sy = (by + y).min(height - 1);
                for (x, v) in row.iter_mut().enumerate() {
                    *v = 255.0 * plane[sy * width + (bx + x).min(width - 1)];
                }
            }
            let mut coeffs = dct8x8(&block);
            for (u, row) in coeffs.iter_mut().enumerate() {
                for (v, c) in row.iter_mut().enumerate() {
                    let step = spec.step(u, v);
                    *c = (*c / step).round() * step;
                }
            }
            let rec = idct8x8(&coeffs);
            for y in 0..DCT_BLOCK.min(height - by) {
                for x in 0..DCT_BLOCK.min(width - bx) {
                    out[(by + y) * width + bx + x] = (rec[y][x] / 255.0).clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(out)
}

/// Degrades every channel of an N×C×H×W tensor of values in [0, 1].
pub fn degrade<T: Scalar>(input: &Tensor<T>, spec: &DegradeSpec) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.shape();
    let mut out = input.clone();
    for b in 0..n {
        for ch in 0..c {
            let plane: Vec<f64> = input.plane(b, ch).iter().map(|v| v.to_f64()).collect();
            let degraded = degrade_plane(&plane, w, h, spec)?;
            for (dst, v) in out.plane_mut(b, ch).iter_mut().zip(degraded) {
                *dst = T::from_f64(v);
            }
        }
    }
    Ok(out)
}
