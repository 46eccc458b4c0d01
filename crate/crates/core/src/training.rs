//! Paired-block datasets and the ℓ1/Adam training loop.
//!
//! All randomness derives from explicit seeds: pair `i` of a dataset draws
//! from ChaCha8 stream `i` of the dataset seed, and each epoch's shuffle
//! continues one generator seeded from the training seed.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::degrade::{degrade, DegradeSpec};
use crate::error::{Error, Result};
use crate::frame::{ChromaFormat, Frame};
use crate::network::{mfrnet_forward, MfrNet, NetworkConfig, INPUT_CHANNELS};
use crate::ops;
use crate::optim::AdamState;
use crate::pipeline::{normalize, upsample_420_to_444, ModelBank, ModelId, BLOCK_SIZE};
use crate::tensor::{ConvParams, Tensor};

/// Optimization hyperparameters. Defaults follow the published recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate every `lr_decay_period` epochs.
    pub lr_decay_factor: f64,
    pub lr_decay_period: usize,
    /// Shuffle seed. Not part of the serialized form: callers derive it.
    #[serde(skip)]
    pub seed: u64,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<usize>,
    /// Start from a zeroed output layer, so the untrained network is the identity.
    pub zero_init_output: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 200,
            learning_rate: 1e-4,
            lr_decay_factor: 0.1,
            lr_decay_period: 100,
            seed: 0,
            max_steps: None,
            zero_init_output: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("training config: {what}")));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.lr_decay_factor.is_finite() && self.lr_decay_factor > 0.0) {
            return bad("lr_decay_factor must be positive");
        }
        if self.lr_decay_period == 0 {
            return bad("lr_decay_period must be positive");
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be positive when set");
        }
        Ok(())
    }

    /// `learning_rate · lr_decay_factor^⌊epoch / lr_decay_period⌋`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = i32::try_from(epoch / self.lr_decay_period).unwrap_or(i32::MAX);
        self.learning_rate * self.lr_decay_factor.powi(decays)
    }
}

/// A fresh 64-bit seed from stream `stream` of `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Rotates every plane of an N×C×H×W tensor counter-clockwise by
/// `quarter_turns` × 90°.
pub fn rotate90<T: crate::tensor::Scalar>(t: &Tensor<T>, quarter_turns: u8) -> Tensor<T> {
    let [n, c, h, w] = t.shape();
    let turns = quarter_turns % 4;
    let (oh, ow) = if turns % 2 == 0 { (h, w) } else { (w, h) };
    let mut out = Tensor::zeros([n, c, oh, ow]);
    for b in 0..n {
        for ch in 0..c {
            let src = t.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for y in 0..oh {
                for x in 0..ow {
                    let (sy, sx) = match turns {
                        0 => (y, x),
                        1 => (x, w - 1 - y),
                        2 => (h - 1 - y, w - 1 - x),
                        _ => (h - 1 - x, y),
                    };
                    dst[y * ow + x] = src[sy * w + sx];
                }
            }
        }
    }
    out
}

/// Where a pair came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairOrigin {
    pub source: usize,
    pub anchor: [usize; 2],
    /// Counter-clockwise quarter turns applied to both members.
    pub rotation: u8,
}

/// A degraded block and its pristine original, both 1×3×96×96 in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub degraded: Tensor<f32>,
    pub pristine: Tensor<f32>,
    pub origin: PairOrigin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairSet {
    pub spec: DegradeSpec,
    pub seed: u64,
    pub pairs: Vec<Pair>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn origins(&self) -> Vec<PairOrigin> {
        self.pairs.iter().map(|p| p.origin).collect()
    }

    /// Block values as little-endian f32, each pair's degraded block followed
    /// by its pristine block.
    pub fn block_bytes(&self) -> Vec<u8> {
        let per = INPUT_CHANNELS * BLOCK_SIZE * BLOCK_SIZE;
        let mut out = Vec::with_capacity(self.pairs.len() * 2 * per * 4);
        for p in &self.pairs {
            for v in p.degraded.data().iter().chain(p.pristine.data()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Inverse of [`PairSet::block_bytes`].
    pub fn from_block_bytes(spec: DegradeSpec, seed: u64, origins: &[PairOrigin], bytes: &[u8]) -> Result<Self> {
        let per = INPUT_CHANNELS * BLOCK_SIZE * BLOCK_SIZE;
        if bytes.len() != origins.len() * 2 * per * 4 {
            return Err(Error::InvalidArgument(format!(
                "pair data holds {} bytes, {} pairs need {}",
                bytes.len(),
                origins.len(),
                origins.len() * 2 * per * 4
            )));
        }
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let shape = [1, INPUT_CHANNELS, BLOCK_SIZE, BLOCK_SIZE];
        let pairs = origins
            .iter()
            .zip(values.chunks_exact(2 * per))
            .map(|(&origin, chunk)| {
                Ok(Pair {
                    degraded: Tensor::from_vec(shape, chunk[..per].to_vec())?,
                    pristine: Tensor::from_vec(shape, chunk[per..].to_vec())?,
                    origin,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { spec, seed, pairs })
    }
}

fn crop(t: &Tensor<f32>, x0: usize, y0: usize, size: usize) -> Tensor<f32> {
    let [_, c, _, w] = t.shape();
    let mut out = Tensor::zeros([1, c, size, size]);
    for ch in 0..c {
        let src = t.plane(0, ch);
        let dst = out.plane_mut(0, ch);
        for y in 0..size {
            let s = (y0 + y) * w + x0;
            dst[y * size..(y + 1) * size].copy_from_slice(&src[s..s + size]);
        }
    }
    out
}

/// Normalized 4:4:4 versions of `frames`, pristine and degraded. Whole frames
/// are degraded so the 8×8 transform grid stays frame-aligned.
fn prepare_frames(frames: &[Frame], spec: &DegradeSpec) -> Result<Vec<(Tensor<f32>, Tensor<f32>)>> {
    frames
        .par_iter()
        .map(|f| {
            if f.width() < BLOCK_SIZE || f.height() < BLOCK_SIZE {
                return Err(Error::Frame(format!(
                    "training frames must be at least {BLOCK_SIZE}x{BLOCK_SIZE}, got {}x{}",
                    f.width(),
                    f.height()
                )));
            }
            let full = match f.chroma() {
                ChromaFormat::Yuv420 => upsample_420_to_444(f)?,
                ChromaFormat::Yuv444 => f.clone(),
            };
            let pristine = normalize::<f32>(&full)?;
            let degraded = degrade(&pristine, spec)?;
            Ok((pristine, degraded))
        })
        .collect()
}

/// Draws `count` aligned 96×96 pairs from random frames, anchors and rotations.
pub fn extract_pairs(frames: &[Frame], spec: &DegradeSpec, count: usize, seed: u64) -> Result<PairSet> {
    spec.validate()?;
    if frames.is_empty() {
        return Err(Error::InvalidArgument("extract_pairs needs at least one frame".into()));
    }
    let prepared = prepare_frames(frames, spec)?;
    let pairs = (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let source = rng.random_range(0..frames.len());
            let (pristine, degraded) = &prepared[source];
            let x = rng.random_range(0..=pristine.width() - BLOCK_SIZE);
            let y = rng.random_range(0..=pristine.height() - BLOCK_SIZE);
            let rotation = rng.random_range(0..4u8);
            Pair {
                degraded: rotate90(&crop(degraded, x, y, BLOCK_SIZE), rotation),
                pristine: rotate90(&crop(pristine, x, y, BLOCK_SIZE), rotation),
                origin: PairOrigin {
                    source,
                    anchor: [x, y],
                    rotation,
                },
            }
        })
        .collect();
    Ok(PairSet {
        spec: *spec,
        seed,
        pairs,
    })
}

/// Mean ℓ1 loss of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub mean_l1: f64,
    pub batches: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingReport {
    pub history: Vec<EpochRecord>,
    pub steps: usize,
}

/// Loss and parameter gradients for one pair.
fn pair_gradient(model: &MfrNet<f32>, pair: &Pair) -> Result<(f64, Vec<ConvParams<f32>>)> {
    let mut tape = Tape::new();
    let x = tape.leaf(pair.degraded.clone());
    let y = {
        let mut rec = tape.recorder(model.layers());
        mfrnet_forward(&mut rec, model.config(), model.layout(), &x)?
    };
    let loss = tape.l1_loss(y, &pair.pristine)?;
    let value = f64::from(tape.value(loss).data()[0]);
    let grads = tape.backward(loss, model.layers())?;
    Ok((value, grads.layers))
}

/// Trains `model` in place.
///
/// Each step averages per-pair gradients over a batch. Pairs within a batch
/// may run on several threads, but gradients are summed in batch order, so
/// the result is the same for any thread count.
pub fn train(model: &mut MfrNet<f32>, pairs: &PairSet, cfg: &TrainingConfig) -> Result<TrainingReport> {
    train_observed(model, pairs, cfg, &mut |_| {})
}

/// [`train`], calling `on_epoch` after every epoch.
pub fn train_observed(
    model: &mut MfrNet<f32>,
    pairs: &PairSet,
    cfg: &TrainingConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainingReport> {
    cfg.validate()?;
    if pairs.len() < cfg.batch_size {
        return Err(Error::InvalidArgument(format!(
            "{} pairs cannot fill a batch of {}",
            pairs.len(),
            cfg.batch_size
        )));
    }
    let mut adam = AdamState::new(model.layers());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::new();
    let mut steps = 0;
    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.lr_at(epoch);
        let (mut loss_sum, mut batches) = (0.0, 0);
        for (batch, idx) in order.chunks_exact(cfg.batch_size).enumerate() {
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            let shared: &MfrNet<f32> = model;
            let results: Vec<(f64, Vec<ConvParams<f32>>)> = idx
                .par_iter()
                .map(|&i| pair_gradient(shared, &pairs.pairs[i]))
                .collect::<Result<_>>()?;
            let mut total = results[0].1.clone();
            let mut loss = results[0].0;
            for (l, g) in &results[1..] {
                loss += l;
                for (acc, layer) in total.iter_mut().zip(g) {
                    acc.add_assign(layer);
                }
            }
            let loss = loss / cfg.batch_size as f64;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            let inv = 1.0 / cfg.batch_size as f32;
            for g in &mut total {
                g.scale(inv);
            }
            adam.step(model.layers_mut(), &total, lr as f32)?;
            steps += 1;
            loss_sum += loss;
            batches += 1;
        }
        if batches > 0 {
            let record = EpochRecord {
                epoch,
                lr,
                mean_l1: loss_sum / batches as f64,
                batches,
            };
            on_epoch(&record);
            history.push(record);
        }
        if cfg.max_steps.is_some_and(|m| steps >= m) {
            break 'epochs;
        }
    }
    Ok(TrainingReport { history, steps })
}

/// Mean ℓ1 of the model's output against the pristine blocks.
pub fn evaluate_l1(model: &MfrNet<f32>, pairs: &PairSet) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on an empty pair set".into()));
    }
    let losses: Vec<f64> = pairs
        .pairs
        .par_iter()
        .map(|p| Ok(f64::from(ops::l1_loss(&model.forward(&p.degraded)?, &p.pristine)?)))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Mean ℓ1 between degraded and pristine blocks: the loss of the identity map.
pub fn degraded_l1(pairs: &PairSet) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on an empty pair set".into()));
    }
    let mut total = 0.0;
    for p in &pairs.pairs {
        total += f64::from(ops::l1_loss(&p.degraded, &p.pristine)?);
    }
    Ok(total / pairs.len() as f64)
}

/// Seed streams used when training a bank from one seed: model `k` draws its
/// dataset from stream `0x10 + k`, its initial weights from `0x20 + k` and its
/// shuffles from `0x30 + k`.
pub const STREAM_DATASET: u64 = 0x10;
pub const STREAM_INIT: u64 = 0x20;
pub const STREAM_SHUFFLE: u64 = 0x30;

/// Default degradation strengths for the four QP groups.
pub const DEFAULT_STRENGTHS: [f64; 4] = [4.0, 8.0, 16.0, 32.0];

fn check_strengths(strengths: &[f64; 4]) -> Result<[DegradeSpec; 4]> {
    let specs = strengths.map(|s| DegradeSpec { strength: s });
    for s in &specs {
        s.validate()?;
    }
    if strengths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "strengths must be strictly increasing, got {strengths:?}"
        )));
    }
    Ok(specs)
}

/// One dataset per strength, seeded from `seed`.
pub fn bank_datasets(frames: &[Frame], strengths: &[f64; 4], count: usize, seed: u64) -> Result<[PairSet; 4]> {
    let specs = check_strengths(strengths)?;
    let sets: Vec<PairSet> = specs
        .iter()
        .enumerate()
        .map(|(k, spec)| extract_pairs(frames, spec, count, derive_seed(seed, STREAM_DATASET + k as u64)))
        .collect::<Result<_>>()?;
    Ok(sets.try_into().expect("four datasets"))
}

/// Pairs used to calibrate the initial weight scales.
const INIT_PROBE_PAIRS: usize = 4;

/// A seeded starting point for training on `pairs`: He-normal weights
/// rescaled on a few degraded blocks (see [`MfrNet::normalize_scales`]),
/// with the output layer zeroed when `cfg.zero_init_output` is set.
pub fn initial_model(net: NetworkConfig, pairs: &PairSet, cfg: &TrainingConfig, seed: u64) -> Result<MfrNet<f32>> {
    let mut model = MfrNet::<f32>::init(net, seed)?;
    let probe: Vec<Tensor<f32>> = pairs
        .pairs
        .iter()
        .take(INIT_PROBE_PAIRS)
        .map(|p| p.degraded.clone())
        .collect();
    if !probe.is_empty() {
        model.normalize_scales(&Tensor::stack(&probe)?)?;
    }
    if cfg.zero_init_output {
        model.zero_output_layer();
    }
    Ok(model)
}

/// Trains one model per dataset, in increasing-strength order. Model `k`
/// uses its own initialization and shuffle seeds derived from `cfg.seed`.
pub fn train_bank_on(
    net: NetworkConfig,
    datasets: &[PairSet; 4],
    cfg: &TrainingConfig,
) -> Result<(ModelBank, Vec<TrainingReport>)> {
    train_bank_observed(net, datasets, cfg, &mut |_, _| {})
}

/// [`train_bank_on`], calling `on_epoch` with the model being trained.
pub fn train_bank_observed(
    net: NetworkConfig,
    datasets: &[PairSet; 4],
    cfg: &TrainingConfig,
    on_epoch: &mut dyn FnMut(ModelId, &EpochRecord),
) -> Result<(ModelBank, Vec<TrainingReport>)> {
    if datasets.windows(2).any(|w| w[1].spec.strength <= w[0].spec.strength) {
        return Err(Error::InvalidArgument("datasets must have strictly increasing strengths".into()));
    }
    let mut models = Vec::with_capacity(4);
    let mut reports = Vec::with_capacity(4);
    for (k, pairs) in datasets.iter().enumerate() {
        let mut model = initial_model(net, pairs, cfg, derive_seed(cfg.seed, STREAM_INIT + k as u64))?;
        let run = TrainingConfig {
            seed: derive_seed(cfg.seed, STREAM_SHUFFLE + k as u64),
            ..cfg.clone()
        };
        let id = ModelId::ALL[k];
        reports.push(train_observed(&mut model, pairs, &run, &mut |r| on_epoch(id, r))?);
        models.push(model);
    }
    let models: [MfrNet<f32>; 4] = models.try_into().expect("four models");
    Ok((ModelBank::new(models)?, reports))
}

/// Generates the four datasets from `frames` and trains a bank on them.
pub fn train_model_bank(
    frames: &[Frame],
    strengths: &[f64; 4],
    pairs_per_model: usize,
    net: NetworkConfig,
    cfg: &TrainingConfig,
) -> Result<(ModelBank, Vec<TrainingReport>)> {
    let datasets = bank_datasets(frames, strengths, pairs_per_model, cfg.seed)?;
    train_bank_on(net, &datasets, cfg)
}

/// Writes `epoch,lr,mean_l1` rows with a header.
pub fn write_loss_csv(mut out: impl Write, history: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(out, "epoch,lr,mean_l1")?;
    for r in history {
        writeln!(out, "{},{:e},{:.9}", r.epoch, r.lr, r.mean_l1)?;
    }
    Ok(())
}
