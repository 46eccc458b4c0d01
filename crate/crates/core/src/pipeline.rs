//! Frame-level post-processing: chroma conversion, normalization, overlapped
//! 96×96 tiling, QP-based model selection and aggregation.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{max_sample, ChromaFormat, Frame, Plane};
use crate::network::{MfrNet, NetworkConfig, INPUT_CHANNELS};
use crate::tensor::{Scalar, Tensor};

pub const BLOCK_SIZE: usize = 96;
pub const OVERLAP: usize = 4;
pub const TILE_STRIDE: usize = BLOCK_SIZE - OVERLAP;

/// Upper QP bound (inclusive) of the first three models.
pub const QP_BREAKPOINTS: [f64; 3] = [24.5, 29.5, 34.5];

/// One of the four QP-group models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelId {
    Model1,
    Model2,
    Model3,
    Model4,
}

impl ModelId {
    pub const ALL: [ModelId; 4] = [ModelId::Model1, ModelId::Model2, ModelId::Model3, ModelId::Model4];

    /// Zero-based position in a bank.
    pub fn index(self) -> usize {
        self as usize
    }

    /// One-based model number.
    pub fn number(self) -> usize {
        self.index() + 1
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Model_{}", self.number())
    }
}

/// Picks the model trained for the QP group containing `qp_base`.
pub fn select_model(qp_base: f64) -> ModelId {
    if qp_base <= QP_BREAKPOINTS[0] {
        ModelId::Model1
    } else if qp_base <= QP_BREAKPOINTS[1] {
        ModelId::Model2
    } else if qp_base <= QP_BREAKPOINTS[2] {
        ModelId::Model3
    } else {
        ModelId::Model4
    }
}

/// Replicates every chroma sample onto its 2×2 luma-aligned sites.
pub fn upsample_420_to_444(frame: &Frame) -> Result<Frame> {
    if frame.chroma() != ChromaFormat::Yuv420 {
        return Err(Error::Frame("upsample expects a 4:2:0 frame".into()));
    }
    let (w, h) = (frame.width(), frame.height());
    let [y, cb, cr] = frame.planes().clone();
    let up = |p: &Plane| {
        let mut out = Vec::with_capacity(w * h);
        for yy in 0..h {
            for xx in 0..w {
                out.push(p.get(xx / 2, yy / 2));
            }
        }
        Plane::new(w, h, out).expect("upsampled plane size")
    };
    Frame::new(frame.bit_depth(), ChromaFormat::Yuv444, [y, up(&cb), up(&cr)])
}

/// Averages each 2×2 chroma block (edge blocks use the samples they have),
/// rounding half up.
pub fn downsample_444_to_420(frame: &Frame) -> Result<Frame> {
    if frame.chroma() != ChromaFormat::Yuv444 {
        return Err(Error::Frame("downsample expects a 4:4:4 frame".into()));
    }
    let (w, h) = (frame.width(), frame.height());
    let (cw, ch) = ChromaFormat::Yuv420.chroma_size(w, h);
    let [y, cb, cr] = frame.planes().clone();
    let down = |p: &Plane| {
        let mut out = Vec::with_capacity(cw * ch);
        for cy in 0..ch {
            for cx in 0..cw {
                let (mut sum, mut n) = (0u32, 0u32);
                for yy in 2 * cy..(2 * cy + 2).min(h) {
                    for xx in 2 * cx..(2 * cx + 2).min(w) {
                        sum += u32::from(p.get(xx, yy));
                        n += 1;
                    }
                }
                out.push(((sum + n / 2) / n) as u16);
            }
        }
        Plane::new(cw, ch, out).expect("downsampled plane size")
    };
    Frame::new(frame.bit_depth(), ChromaFormat::Yuv420, [y, down(&cb), down(&cr)])
}

/// A 4:4:4 frame as a 1×3×H×W tensor with samples divided by `2^bit_depth - 1`.
pub fn normalize<T: Scalar>(frame: &Frame) -> Result<Tensor<T>> {
    if frame.chroma() != ChromaFormat::Yuv444 {
        return Err(Error::Frame("normalize expects a 4:4:4 frame".into()));
    }
    let scale = f64::from(frame.max_value());
    let data = frame
        .planes()
        .iter()
        .flat_map(|p| p.data().iter().map(|&v| T::from_f64(f64::from(v) / scale)))
        .collect();
    Tensor::from_vec([1, INPUT_CHANNELS, frame.height(), frame.width()], data)
}

/// Inverse of [`normalize`]: scales back, rounds half away from zero and clamps.
pub fn denormalize<T: Scalar>(values: &Tensor<T>, bit_depth: u8) -> Result<Frame> {
    let [n, c, h, w] = values.shape();
    if n != 1 || c != INPUT_CHANNELS {
        return Err(Error::shape("denormalize", &[1, INPUT_CHANNELS], &[n, c]));
    }
    if bit_depth != 8 && bit_depth != 10 {
        return Err(Error::Frame(format!("bit depth must be 8 or 10, got {bit_depth}")));
    }
    let max = max_sample(bit_depth);
    let planes: Vec<Plane> = (0..INPUT_CHANNELS)
        .map(|ch| {
            let data = values
                .plane(0, ch)
                .iter()
                .map(|&v| to_sample(v.to_f64(), max))
                .collect();
            Plane::new(w, h, data).expect("plane size")
        })
        .collect();
    let planes: [Plane; 3] = planes.try_into().expect("three planes");
    Frame::new(bit_depth, ChromaFormat::Yuv444, planes)
}

fn to_sample(v: f64, max: u16) -> u16 {
    let scaled = (v * f64::from(max)).round();
    if scaled.is_nan() {
        return 0;
    }
    scaled.clamp(0.0, f64::from(max)) as u16
}

/// Block anchors for one frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TilePlan {
    pub block_size: usize,
    pub overlap: usize,
    /// Frame size before any edge padding.
    pub width: usize,
    pub height: usize,
    /// Top-left corners, row-major.
    pub anchors: Vec<(usize, usize)>,
}

/// Anchors along one axis: `a(k) = min(92k, dim - 96)`. Dimensions below the
/// block size get a single anchor at 0 (the frame is edge-padded first).
pub fn axis_anchors(dim: usize) -> Vec<usize> {
    if dim <= BLOCK_SIZE {
        return vec![0];
    }
    let last = dim - BLOCK_SIZE;
    let count = last.div_ceil(TILE_STRIDE) + 1;
    (0..count).map(|k| (k * TILE_STRIDE).min(last)).collect()
}

impl TilePlan {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Frame(format!("cannot tile an empty {width}x{height} frame")));
        }
        let xs = axis_anchors(width);
        let ys = axis_anchors(height);
        let anchors = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
        Ok(Self {
            block_size: BLOCK_SIZE,
            overlap: OVERLAP,
            width,
            height,
            anchors,
        })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Width and height after edge padding up to the block size.
    pub fn padded_size(&self) -> (usize, usize) {
        (self.width.max(self.block_size), self.height.max(self.block_size))
    }

    /// How many blocks cover each pixel of the (unpadded) frame, row-major.
    pub fn coverage(&self) -> Vec<u32> {
        let (pw, ph) = self.padded_size();
        let mut count = vec![0u32; pw * ph];
        for &(ax, ay) in &self.anchors {
            for y in ay..ay + self.block_size {
                for c in &mut count[y * pw + ax..y * pw + ax + self.block_size] {
                    *c += 1;
                }
            }
        }
        (0..self.height)
            .flat_map(|y| count[y * pw..y * pw + self.width].to_vec())
            .collect()
    }
}

/// Edge-replicates a 1×C×H×W tensor up to at least `min_w`×`min_h`.
fn pad_to<T: Scalar>(t: &Tensor<T>, min_w: usize, min_h: usize) -> Tensor<T> {
    let [_, c, h, w] = t.shape();
    let (pw, ph) = (w.max(min_w), h.max(min_h));
    if (pw, ph) == (w, h) {
        return t.clone();
    }
    let mut out = Tensor::zeros([1, c, ph, pw]);
    for ch in 0..c {
        let src = t.plane(0, ch);
        let dst = out.plane_mut(0, ch);
        for y in 0..ph {
            let sy = y.min(h - 1);
            for x in 0..pw {
                dst[y * pw + x] = src[sy * w + x.min(w - 1)];
            }
        }
    }
    out
}

/// Cuts a 1×C×H×W frame tensor into overlapping blocks.
pub fn tile_frame<T: Scalar>(frame: &Tensor<T>) -> Result<(TilePlan, Vec<Tensor<T>>)> {
    let [n, c, h, w] = frame.shape();
    if n != 1 {
        return Err(Error::shape("tile_frame", &[1], &[n]));
    }
    let plan = TilePlan::new(w, h)?;
    let padded = pad_to(frame, BLOCK_SIZE, BLOCK_SIZE);
    let pw = padded.width();
    let blocks = plan
        .anchors
        .iter()
        .map(|&(ax, ay)| {
            let mut block = Tensor::zeros([1, c, BLOCK_SIZE, BLOCK_SIZE]);
            for ch in 0..c {
                let src = padded.plane(0, ch);
                let dst = block.plane_mut(0, ch);
                for y in 0..BLOCK_SIZE {
                    let s = (ay + y) * pw + ax;
                    dst[y * BLOCK_SIZE..(y + 1) * BLOCK_SIZE].copy_from_slice(&src[s..s + BLOCK_SIZE]);
                }
            }
            block
        })
        .collect();
    Ok((plan, blocks))
}

/// Averages overlapping blocks back into a frame, cropping any edge padding.
/// Sums run in anchor order in double precision.
pub fn aggregate_blocks<T: Scalar>(plan: &TilePlan, blocks: &[Tensor<T>]) -> Result<Tensor<T>> {
    if blocks.len() != plan.anchors.len() {
        return Err(Error::shape("aggregate_blocks", &[plan.anchors.len()], &[blocks.len()]));
    }
    let bs = plan.block_size;
    let c = blocks.first().map_or(INPUT_CHANNELS, Tensor::channels);
    for b in blocks {
        if b.shape() != [1, c, bs, bs] {
            return Err(Error::shape("aggregate_blocks", &[1, c, bs, bs], &b.shape()));
        }
    }
    let (pw, ph) = plan.padded_size();
    let mut sum = vec![0.0f64; c * pw * ph];
    let mut count = vec![0u32; pw * ph];
    for (&(ax, ay), block) in plan.anchors.iter().zip(blocks) {
        for ch in 0..c {
            let src = block.plane(0, ch);
            for y in 0..bs {
                let row = &mut sum[(ch * ph + ay + y) * pw + ax..][..bs];
                for (acc, &v) in row.iter_mut().zip(&src[y * bs..(y + 1) * bs]) {
                    *acc += v.to_f64();
                }
            }
        }
        for y in 0..bs {
            for n in &mut count[(ay + y) * pw + ax..][..bs] {
                *n += 1;
            }
        }
    }
    let (w, h) = (plan.width, plan.height);
    let mut out = Tensor::zeros([1, c, h, w]);
    for y in 0..h {
        for x in 0..w {
            let n = count[y * pw + x];
            if n == 0 {
                return Err(Error::Frame(format!("pixel ({x}, {y}) is not covered by any block")));
            }
            for ch in 0..c {
                let v = sum[(ch * ph + y) * pw + x] / f64::from(n);
                out.set(0, ch, y, x, T::from_f64(v));
            }
        }
    }
    Ok(out)
}

/// Four models, one per QP group, sharing one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBank {
    models: [MfrNet<f32>; 4],
}

impl ModelBank {
    pub fn new(models: [MfrNet<f32>; 4]) -> Result<Self> {
        let cfg = models[0].config();
        if let Some(m) = models.iter().find(|m| m.config() != cfg) {
            return Err(Error::InvalidArgument(format!(
                "model bank configs differ: {cfg:?} vs {:?}",
                m.config()
            )));
        }
        Ok(Self { models })
    }

    /// Four all-zero (identity) models.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        let m = MfrNet::zeros(config)?;
        Ok(Self {
            models: [m.clone(), m.clone(), m.clone(), m],
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        self.models[0].config()
    }

    pub fn get(&self, id: ModelId) -> &MfrNet<f32> {
        &self.models[id.index()]
    }

    pub fn models(&self) -> &[MfrNet<f32>; 4] {
        &self.models
    }

    pub fn into_models(self) -> [MfrNet<f32>; 4] {
        self.models
    }
}

/// Runs one model over a whole frame, returning a frame in the source format.
///
/// Blocks are filtered in parallel on the current rayon pool; each block is
/// independent and aggregation is sequential, so the result does not depend
/// on the thread count.
pub fn filter_frame_with(frame: &Frame, model: &MfrNet<f32>) -> Result<Frame> {
    let full = match frame.chroma() {
        ChromaFormat::Yuv420 => upsample_420_to_444(frame)?,
        ChromaFormat::Yuv444 => frame.clone(),
    };
    let input = normalize::<f32>(&full)?;
    let (plan, blocks) = tile_frame(&input)?;
    let filtered: Vec<Tensor<f32>> = blocks
        .par_iter()
        .map(|b| model.forward(b))
        .collect::<Result<_>>()?;
    let merged = aggregate_blocks(&plan, &filtered)?;
    let out = denormalize(&merged, frame.bit_depth())?;
    match frame.chroma() {
        ChromaFormat::Yuv420 => downsample_444_to_420(&out),
        ChromaFormat::Yuv444 => Ok(out),
    }
}

/// Filters `frame` with the bank model selected by `qp_base`.
pub fn filter_frame(frame: &Frame, bank: &ModelBank, qp_base: f64) -> Result<Frame> {
    filter_frame_with(frame, bank.get(select_model(qp_base)))
}
