//! Seeded synthetic frames for datasets and tests: smooth gradients, a few
//! sinusoidal textures and hard-edged shapes, so that block quantization
//! leaves both blocking and ringing behind.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::frame::{max_sample, ChromaFormat, Frame, Plane};

enum Shape {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Disk { cx: f64, cy: f64, r2: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Shape::Disk { cx, cy, r2 } => (x - cx).powi(2) + (y - cy).powi(2) < r2,
        }
    }
}

/// One plane of values in [0, 1], drawn on a `width`×`height` canvas and
/// sampled every `step` pixels (2 for 4:2:0 chroma).
fn plane_values(rng: &mut ChaCha8Rng, width: usize, height: usize, step: usize, contrast: f64) -> Vec<f64> {
    let (w, h) = (width as f64, height as f64);
    let base = rng.random_range(0.3..0.7);
    let gx = rng.random_range(-0.3..0.3) / w;
    let gy = rng.random_range(-0.3..0.3) / h;
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.01..0.15),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.0..std::f64::consts::PI),
                rng.random_range(0.005..0.02) * contrast,
            )
        })
        .collect();
    let shapes: Vec<(Shape, f64)> = (0..rng.random_range(24..40))
        .map(|_| {
            let shape = if rng.random_bool(0.5) {
                let (x0, y0) = (rng.random_range(0.0..w), rng.random_range(0.0..h));
                Shape::Rect {
                    x0,
                    y0,
                    x1: x0 + rng.random_range(6.0..w.max(9.0) / 4.0),
                    y1: y0 + rng.random_range(6.0..h.max(9.0) / 4.0),
                }
            } else {
                let r = rng.random_range(3.0..w.min(h).max(5.0) / 8.0);
                Shape::Disk {
                    cx: rng.random_range(0.0..w),
                    cy: rng.random_range(0.0..h),
                    r2: r * r,
                }
            };
            (shape, rng.random_range(-0.5..0.5) * contrast)
        })
        .collect();
    let (pw, ph) = (width.div_ceil(step), height.div_ceil(step));
    let mut out = Vec::with_capacity(pw * ph);
    for py in 0..ph {
        for px in 0..pw {
            let (x, y) = ((px * step) as f64, (py * step) as f64);
            let mut v = base + gx * x + gy * y;
            for &(freq, phase, angle, amp) in &waves {
                v += amp * (freq * (x * angle.cos() + y * angle.sin()) + phase).sin();
            }
            for (shape, delta) in &shapes {
                if shape.contains(x, y) {
                    v += delta;
                }
            }
            out.push(v.clamp(0.0, 1.0));
        }
    }
    out
}

/// A deterministic synthetic frame.
pub fn synthetic_frame(width: usize, height: usize, bit_depth: u8, chroma: ChromaFormat, seed: u64) -> Result<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max = f64::from(max_sample(bit_depth));
    let step = match chroma {
        ChromaFormat::Yuv420 => 2,
        ChromaFormat::Yuv444 => 1,
    };
    let (cw, ch) = chroma.chroma_size(width, height);
    let mut plane = |pw: usize, ph: usize, step: usize, contrast: f64| -> Result<Plane> {
        let values = plane_values(&mut rng, width, height, step, contrast);
        Plane::new(pw, ph, values.iter().map(|v| (v * max).round() as u16).collect())
    };
    let y = plane(width, height, 1, 1.0)?;
    let u = plane(cw, ch, step, 0.5)?;
    let v = plane(cw, ch, step, 0.5)?;
    Frame::new(bit_depth, chroma, [y, u, v])
}

/// `count` frames with seeds derived from `seed`.
pub fn synthetic_frames(
    count: usize,
    width: usize,
    height: usize,
    bit_depth: u8,
    chroma: ChromaFormat,
    seed: u64,
) -> Result<Vec<Frame>> {
    (0..count)
        .map(|i| synthetic_frame(width, height, bit_depth, chroma, crate::training::derive_seed(seed, i as u64)))
        .collect()
}
