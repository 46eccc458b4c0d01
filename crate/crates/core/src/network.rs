//! The MFRNet graph: shallow features, four cascaded multi-level feature
//! review residual dense blocks (MFRBs, three FRBs each), cascade fusion,
//! two reconstruction layers and a residual output.
//!
//! Every forward function is generic over [`Exec`], so the same wiring serves
//! plain inference and recorded (differentiable) evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autograd::{Eager, Exec, LayerId};
use crate::error::{Error, Result};
use crate::tensor::{ConvParams, Scalar, Tensor};

pub const NUM_MFRB: usize = 4;
pub const FRB_PER_MFRB: usize = 3;
pub const DENSE_LAYERS_PER_FRB: usize = 4;
pub const INPUT_CHANNELS: usize = 3;

/// Channel widths and activation slope. Block counts are fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Width of the main-branch feature maps.
    pub base_channels: usize,
    /// Channels emitted by each dense layer.
    pub growth: usize,
    /// Width of the FRB side-branch outputs.
    pub side_channels: usize,
    #[serde(default = "default_slope")]
    pub lrelu_slope: f64,
}

fn default_slope() -> f64 {
    0.2
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::paper_scale()
    }
}

impl NetworkConfig {
    pub fn paper_scale() -> Self {
        Self {
            base_channels: 64,
            growth: 32,
            side_channels: 64,
            lrelu_slope: 0.2,
        }
    }

    /// The small profile used by tests and desk-scale training.
    pub fn tiny() -> Self {
        Self {
            base_channels: 8,
            growth: 4,
            side_channels: 8,
            lrelu_slope: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels < 4 {
            return Err(Error::InvalidArgument(format!(
                "base_channels must be >= 4, got {}",
                self.base_channels
            )));
        }
        if self.growth < 2 {
            return Err(Error::InvalidArgument(format!("growth must be >= 2, got {}", self.growth)));
        }
        if self.side_channels < 1 {
            return Err(Error::InvalidArgument("side_channels must be >= 1".into()));
        }
        if !(self.lrelu_slope > 0.0 && self.lrelu_slope < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "lrelu_slope must be in (0, 1), got {}",
                self.lrelu_slope
            )));
        }
        Ok(())
    }

    /// Width of the concatenated high-dimensional features in an FRB.
    pub fn hdf_channels(&self, has_side_input: bool) -> usize {
        DENSE_LAYERS_PER_FRB * self.growth + if has_side_input { self.side_channels } else { 0 }
    }

    /// Closed-form parameter count.
    ///
    /// With `conv(i, o, k) = i·o·k² + o`, `H₀ = 4g`, `H = 4g + D`:
    ///
    /// ```text
    /// conv(3, F, 3)                                   shallow features
    /// + 12 · Σₖ₌₀³ conv(F + k·g, g, 3)                dense layers
    /// + conv(H₀, F, 1) + 11 · conv(H, F, 1)           FRB fusion
    /// + 4·conv(H₀, H₀, 3) + conv(H₀, D, 1)            side branch, first FRB
    /// + 10 · (4·conv(H, H, 3) + conv(H, D, 1))        side branches, FRBs 2..11
    /// + Σₙ₌₂⁵ conv(n·F, F, 1)                         cascade fusers
    /// + 2·conv(F, F, 3) + conv(F, 3, 3)               RL1, RL2, output
    /// ```
    pub fn param_count(&self) -> usize {
        let conv = |i: usize, o: usize, k: usize| i * o * k * k + o;
        let (f, g, d) = (self.base_channels, self.growth, self.side_channels);
        let (h0, h) = (4 * g, 4 * g + d);
        let dense: usize = (0..DENSE_LAYERS_PER_FRB).map(|k| conv(f + k * g, g, 3)).sum();
        let side = |w: usize| 4 * conv(w, w, 3) + conv(w, d, 1);
        conv(3, f, 3)
            + 12 * dense
            + conv(h0, f, 1)
            + 11 * conv(h, f, 1)
            + side(h0)
            + 10 * side(h)
            + (2..=5).map(|n| conv(n * f, f, 1)).sum::<usize>()
            + 2 * conv(f, f, 3)
            + conv(f, 3, 3)
    }
}

/// Layers of one FRB's side branch: two residual blocks and a 1×1 output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SideBranch {
    pub res: [[LayerId; 2]; 2],
    pub out: LayerId,
}

/// Layer indices of one FRB.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrbLayout {
    pub dense: [LayerId; DENSE_LAYERS_PER_FRB],
    /// 1×1 fusion of the HDF back to the main width.
    pub fusion: LayerId,
    /// Absent for the last FRB of the last MFRB.
    pub side: Option<SideBranch>,
    /// False only for the first FRB of the first MFRB.
    pub has_side_input: bool,
}

/// Outputs that cascading connections carry forward.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CascadeSource {
    ShallowFeatures,
    /// Output `G_i` of MFRB `i` (1-based).
    Block(usize),
}

/// Fusion points that receive cascading connections.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CascadeSink {
    /// Entry of MFRB `i` (2, 3 or 4).
    Block(usize),
    /// Input of the first reconstruction layer.
    Reconstruction,
}

impl CascadeSink {
    pub const ALL: [CascadeSink; 4] = [
        CascadeSink::Block(2),
        CascadeSink::Block(3),
        CascadeSink::Block(4),
        CascadeSink::Reconstruction,
    ];

    /// Sources feeding this sink besides its primary input.
    pub fn sources(self) -> &'static [CascadeSource] {
        use CascadeSource::*;
        match self {
            CascadeSink::Block(2) => &[ShallowFeatures],
            CascadeSink::Block(3) => &[ShallowFeatures, Block(1)],
            CascadeSink::Block(4) => &[ShallowFeatures, Block(1), Block(2)],
            CascadeSink::Reconstruction => &[ShallowFeatures, Block(1), Block(2), Block(3)],
            CascadeSink::Block(_) => &[],
        }
    }

    fn index(self) -> usize {
        match self {
            CascadeSink::Block(i) => i - 2,
            CascadeSink::Reconstruction => 3,
        }
    }
}

/// Layer indices of the whole network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub shallow: LayerId,
    pub blocks: [[FrbLayout; FRB_PER_MFRB]; NUM_MFRB],
    /// Cascade fusers, indexed like [`CascadeSink::ALL`].
    pub fusers: [LayerId; 4],
    pub rl1: LayerId,
    pub rl2: LayerId,
    pub output: LayerId,
}

/// Shape of one conv layer plus its name in the weight manifest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl Layout {
    /// Builds the layer list in manifest order along with the index layout.
    pub fn build(cfg: &NetworkConfig) -> (Layout, Vec<LayerSpec>) {
        let mut specs = Vec::new();
        let mut add = |name: String, i: usize, o: usize, k: usize| {
            specs.push(LayerSpec {
                name,
                in_channels: i,
                out_channels: o,
                kernel: k,
            });
            LayerId(specs.len() - 1)
        };
        let (f, g, d) = (cfg.base_channels, cfg.growth, cfg.side_channels);

        let shallow = add("sf".into(), INPUT_CHANNELS, f, 3);
        let mut fusers = [LayerId(0); 4];
        let mut blocks = Vec::with_capacity(NUM_MFRB);
        for b in 0..NUM_MFRB {
            if b > 0 {
                fusers[b - 1] = add(format!("cascade.b{}", b + 1), (b + 1) * f, f, 1);
            }
            let mut frbs = Vec::with_capacity(FRB_PER_MFRB);
            for j in 0..FRB_PER_MFRB {
                let p = format!("b{}.f{}", b + 1, j + 1);
                let has_side_input = !(b == 0 && j == 0);
                let has_side_output = !(b == NUM_MFRB - 1 && j == FRB_PER_MFRB - 1);
                let hdf = cfg.hdf_channels(has_side_input);
                let dense = std::array::from_fn(|k| add(format!("{p}.dense{}", k + 1), f + k * g, g, 3));
                let fusion = add(format!("{p}.fuse"), hdf, f, 1);
                let side = has_side_output.then(|| {
                    let res = std::array::from_fn(|r| {
                        std::array::from_fn(|c| add(format!("{p}.res{}.conv{}", r + 1, c + 1), hdf, hdf, 3))
                    });
                    let out = add(format!("{p}.side"), hdf, d, 1);
                    SideBranch { res, out }
                });
                frbs.push(FrbLayout {
                    dense,
                    fusion,
                    side,
                    has_side_input,
                });
            }
            blocks.push(<[FrbLayout; FRB_PER_MFRB]>::try_from(frbs).unwrap());
        }
        fusers[3] = add("cascade.rl1".into(), 5 * f, f, 1);
        let rl1 = add("rl1".into(), f, f, 3);
        let rl2 = add("rl2".into(), f, f, 3);
        let output = add("out".into(), f, INPUT_CHANNELS, 3);

        let layout = Layout {
            shallow,
            blocks: <[[FrbLayout; FRB_PER_MFRB]; NUM_MFRB]>::try_from(blocks).unwrap(),
            fusers,
            rl1,
            rl2,
            output,
        };
        (layout, specs)
    }

    pub fn fuser(&self, sink: CascadeSink) -> LayerId {
        self.fusers[sink.index()]
    }
}

/// Counts of the structural features of a built network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructureReport {
    pub mfrbs: usize,
    pub frbs: usize,
    pub cascade_edges: usize,
    pub side_inputs: usize,
    pub side_outputs: usize,
    /// FRB-to-FRB side-branch hand-offs, within and across MFRBs.
    pub side_edges: usize,
    pub first_frb_has_side_input: bool,
    pub last_frb_has_side_output: bool,
}

/// Network configuration plus all learned parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MfrNet<T> {
    config: NetworkConfig,
    layout: Layout,
    specs: Vec<LayerSpec>,
    layers: Vec<ConvParams<T>>,
}

impl<T: Scalar> MfrNet<T> {
    /// All weights and biases zero: the network computes the identity.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let (layout, specs) = Layout::build(&config);
        let layers = specs
            .iter()
            .map(|s| ConvParams::zeros(s.out_channels, s.in_channels, s.kernel))
            .collect();
        Ok(Self {
            config,
            layout,
            specs,
            layers,
        })
    }

    /// He-normal weights (std `sqrt(2 / fan_in)`), zero biases, fully
    /// determined by `seed`. Values are drawn in double precision so every
    /// precision gets the same model up to rounding.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut model.layers {
            let fan_in = layer.in_channels() * layer.kernel() * layer.kernel();
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for w in layer.weight.data_mut() {
                *w = T::from_f64(normal.sample(&mut rng));
            }
        }
        Ok(model)
    }

    /// Reassembles a model from parameters in manifest order.
    pub fn from_layers(config: NetworkConfig, layers: Vec<ConvParams<T>>) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        if layers.len() != model.layers.len() {
            return Err(Error::shape("from_layers", &[model.layers.len()], &[layers.len()]));
        }
        for (spec, layer) in model.specs.iter().zip(&layers) {
            let expected = [spec.out_channels, spec.in_channels, spec.kernel, spec.kernel];
            if layer.weight.shape() != expected || layer.bias.len() != spec.out_channels {
                return Err(Error::shape("from_layers", &expected, &layer.weight.shape()));
            }
        }
        model.layers = layers;
        Ok(model)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[ConvParams<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvParams<T>] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvParams::param_count).sum()
    }

    pub fn slope(&self) -> T {
        T::from_f64(self.config.lrelu_slope)
    }

    /// Zeroes the output layer so the untrained network is the identity.
    pub fn zero_output_layer(&mut self) {
        let out = self.layout.output.0;
        self.layers[out] = self.layers[out].zeros_like();
    }

    /// Rescales every layer but the output layer, in forward order, so that
    /// its response to `probe` has unit RMS. Biases are zero after
    /// initialization and are left alone.
    ///
    /// He initialization keeps each conv variance-neutral, but the skip
    /// connections add up block after block and leave the deep activations
    /// four orders of magnitude above the input.
    pub fn normalize_scales(&mut self, probe: &Tensor<T>) -> Result<()> {
        let mut exec = Rescale {
            layers: &mut self.layers,
            skip: self.layout.output,
        };
        mfrnet_forward(&mut exec, &self.config, &self.layout, probe)?;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> MfrNet<U> {
        MfrNet {
            config: self.config,
            layout: self.layout.clone(),
            specs: self.specs.clone(),
            layers: self.layers.iter().map(ConvParams::cast).collect(),
        }
    }

    /// Filters a batch of 3-channel blocks.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut exec = Eager::new(&self.layers);
        mfrnet_forward(&mut exec, &self.config, &self.layout, input)
    }

    pub fn structure(&self) -> StructureReport {
        let frbs: Vec<&FrbLayout> = self.layout.blocks.iter().flatten().collect();
        let side_outputs = frbs.iter().filter(|f| f.side.is_some()).count();
        let side_edges = frbs
            .windows(2)
            .filter(|w| w[0].side.is_some() && w[1].has_side_input)
            .count();
        StructureReport {
            mfrbs: self.layout.blocks.len(),
            frbs: frbs.len(),
            cascade_edges: CascadeSink::ALL.iter().map(|s| s.sources().len()).sum(),
            side_inputs: frbs.iter().filter(|f| f.has_side_input).count(),
            side_outputs,
            side_edges,
            first_frb_has_side_input: frbs[0].has_side_input,
            last_frb_has_side_output: frbs[frbs.len() - 1].side.is_some(),
        }
    }
}

fn expect_channels<T: Scalar, E: Exec<T>>(exec: &E, v: &E::Value, expected: usize, what: &'static str) -> Result<()> {
    let got = exec.channels(v);
    if got != expected {
        return Err(Error::shape(what, &[expected], &[got]));
    }
    Ok(())
}

struct Rescale<'a, T> {
    layers: &'a mut [ConvParams<T>],
    skip: LayerId,
}

impl<T: Scalar> Exec<T> for Rescale<'_, T> {
    type Value = Tensor<T>;

    fn conv(&mut self, x: &Tensor<T>, layer: LayerId) -> Result<Tensor<T>> {
        let y = crate::ops::conv2d(x, &self.layers[layer.0])?;
        if layer == self.skip {
            return Ok(y);
        }
        let ms = y.data().iter().map(|v| v.to_f64() * v.to_f64()).sum::<f64>() / y.len().max(1) as f64;
        if !(ms.is_finite() && ms > 0.0) {
            return Ok(y);
        }
        let s = T::from_f64(ms.sqrt().recip());
        self.layers[layer.0].scale(s);
        Ok(y.map(|v| v * s))
    }

    fn leaky_relu(&mut self, x: &Tensor<T>, slope: T) -> Tensor<T> {
        Eager::new(&[]).leaky_relu(x, slope)
    }

    fn concat(&mut self, xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        Eager::new(&[]).concat(xs)
    }

    fn add(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        Eager::new(&[]).add(a, b)
    }

    fn channels(&self, x: &Tensor<T>) -> usize {
        x.channels()
    }
}

/// One feature review residual dense block.
///
/// Returns the main output (fusion of the HDF plus the block input) and, when
/// the block has a side branch, the side output for the next FRB.
pub fn frb_forward<T: Scalar, E: Exec<T>>(
    exec: &mut E,
    cfg: &NetworkConfig,
    frb: &FrbLayout,
    main_in: &E::Value,
    side_in: Option<&E::Value>,
) -> Result<(E::Value, Option<E::Value>)> {
    expect_channels(exec, main_in, cfg.base_channels, "frb main input")?;
    match (side_in, frb.has_side_input) {
        (Some(s), true) => expect_channels(exec, s, cfg.side_channels, "frb side input")?,
        (None, false) => {}
        (got, _) => {
            return Err(Error::InvalidArgument(format!(
                "frb side input {} but block expects {}",
                if got.is_some() { "given" } else { "missing" },
                if frb.has_side_input { "one" } else { "none" },
            )))
        }
    }
    let slope = T::from_f64(cfg.lrelu_slope);

    let mut dense: Vec<E::Value> = Vec::with_capacity(DENSE_LAYERS_PER_FRB);
    for (k, &layer) in frb.dense.iter().enumerate() {
        let pre = if k == 0 {
            exec.conv(main_in, layer)?
        } else {
            let mut parts: Vec<&E::Value> = vec![main_in];
            parts.extend(dense.iter());
            let cat = exec.concat(&parts)?;
            exec.conv(&cat, layer)?
        };
        dense.push(exec.leaky_relu(&pre, slope));
    }

    let mut parts: Vec<&E::Value> = dense.iter().collect();
    parts.extend(side_in);
    let hdf = exec.concat(&parts)?;

    let fused = exec.conv(&hdf, frb.fusion)?;
    let main_out = exec.add(&fused, main_in)?;

    let side_out = match &frb.side {
        None => None,
        Some(branch) => {
            let mut h = hdf;
            for [first, second] in branch.res {
                let a = exec.conv(&h, first)?;
                let a = exec.leaky_relu(&a, slope);
                let b = exec.conv(&a, second)?;
                h = exec.add(&b, &h)?;
            }
            Some(exec.conv(&h, branch.out)?)
        }
    };
    Ok((main_out, side_out))
}

/// Three chained FRBs with the multi-level residual: each FRB's main output
/// is summed with the MFRB input before it feeds the next FRB.
pub fn mfrb_forward<T: Scalar, E: Exec<T>>(
    exec: &mut E,
    cfg: &NetworkConfig,
    frbs: &[FrbLayout; FRB_PER_MFRB],
    main_in: &E::Value,
    side_in: Option<&E::Value>,
) -> Result<(E::Value, Option<E::Value>)> {
    let mut main: Option<E::Value> = None;
    let mut side: Option<E::Value> = None;
    for (j, frb) in frbs.iter().enumerate() {
        let m_in = main.as_ref().unwrap_or(main_in);
        let s_in = if j == 0 { side_in } else { side.as_ref() };
        let (m, s) = frb_forward(exec, cfg, frb, m_in, s_in)?;
        main = Some(exec.add(&m, main_in)?);
        side = s;
    }
    Ok((main.expect("three FRBs"), side))
}

/// `LReLU(conv1x1(concat(primary, sources...)))`.
pub fn cascade_fuse<T: Scalar, E: Exec<T>>(
    exec: &mut E,
    cfg: &NetworkConfig,
    sink: CascadeSink,
    layer: LayerId,
    primary: &E::Value,
    sources: &[&E::Value],
) -> Result<E::Value> {
    let expected = sink.sources().len();
    if sources.len() != expected || expected == 0 {
        return Err(Error::InvalidArgument(format!(
            "cascade sink {sink:?} takes {expected} sources, got {}",
            sources.len()
        )));
    }
    let mut parts = vec![primary];
    parts.extend_from_slice(sources);
    let cat = exec.concat(&parts)?;
    let y = exec.conv(&cat, layer)?;
    Ok(exec.leaky_relu(&y, T::from_f64(cfg.lrelu_slope)))
}

/// Full network on a batch of 3-channel blocks. The output is the input plus
/// a learned residual; it is not clamped.
pub fn mfrnet_forward<T: Scalar, E: Exec<T>>(
    exec: &mut E,
    cfg: &NetworkConfig,
    layout: &Layout,
    input: &E::Value,
) -> Result<E::Value> {
    let got = exec.channels(input);
    if got != INPUT_CHANNELS {
        return Err(Error::InvalidArgument(format!(
            "network input must have {INPUT_CHANNELS} channels, got {got}"
        )));
    }
    let slope = T::from_f64(cfg.lrelu_slope);

    let sf = exec.conv(input, layout.shallow)?;
    let sf = exec.leaky_relu(&sf, slope);

    // Block outputs G_1..G_3 kept for the cascading connections.
    let mut g: Vec<E::Value> = Vec::with_capacity(NUM_MFRB);
    let mut side: Option<E::Value> = None;
    let mut entry: Option<E::Value> = None;
    for (b, frbs) in layout.blocks.iter().enumerate() {
        let block_in = entry.as_ref().unwrap_or(&sf);
        let (gi, fi) = mfrb_forward(exec, cfg, frbs, block_in, side.as_ref())?;
        side = fi;
        let sink = CascadeSink::ALL[b];
        let sources: Vec<&E::Value> = sink
            .sources()
            .iter()
            .map(|s| match s {
                CascadeSource::ShallowFeatures => &sf,
                CascadeSource::Block(i) => &g[i - 1],
            })
            .collect();
        entry = Some(cascade_fuse(exec, cfg, sink, layout.fuser(sink), &gi, &sources)?);
        g.push(gi);
    }

    let r = exec.conv(entry.as_ref().expect("four blocks"), layout.rl1)?;
    let r = exec.leaky_relu(&r, slope);
    let r = exec.add(&r, &sf)?;
    let r = exec.conv(&r, layout.rl2)?;
    let r = exec.leaky_relu(&r, slope);
    let residual = exec.conv(&r, layout.output)?;
    exec.add(&residual, input)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_param_count_by_hand() {
        // sf 224; FRBs 11584 + 10·23264 + 2232; fusers 928; RL1+RL2 1168; out 219.
        let cfg = NetworkConfig::tiny();
        assert_eq!(cfg.param_count(), 248_995);
        assert_eq!(MfrNet::<f32>::zeros(cfg).unwrap().param_count(), 248_995);
    }

    #[test]
    fn hdf_width() {
        let cfg = NetworkConfig::tiny();
        assert_eq!(cfg.hdf_channels(false), 16);
        assert_eq!(cfg.hdf_channels(true), 16 + cfg.side_channels);
    }

    #[test]
    fn layer_names_are_unique() {
        let (_, specs) = Layout::build(&NetworkConfig::tiny());
        let mut names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), specs.len());
    }

    #[test]
    fn config_validation() {
        let mut cfg = NetworkConfig::tiny();
        cfg.base_channels = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = NetworkConfig::tiny();
        cfg.lrelu_slope = 1.0;
        assert!(cfg.validate().is_err());
        assert!(serde_json::from_str::<NetworkConfig>(r#"{"base_channels":8,"growth":4,"side_channels":8,"extra":1}"#).is_err());
    }

    #[test]
    fn rejects_non_rgb_input() {
        let model = MfrNet::<f32>::zeros(NetworkConfig::tiny()).unwrap();
        assert!(model.forward(&Tensor::zeros([1, 1, 16, 16])).is_err());
    }

    #[test]
    fn init_is_seeded_with_zero_bias() {
        let a = MfrNet::<f32>::init(NetworkConfig::tiny(), 5).unwrap();
        let b = MfrNet::<f32>::init(NetworkConfig::tiny(), 5).unwrap();
        let c = MfrNet::<f32>::init(NetworkConfig::tiny(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.layers().iter().all(|l| l.bias.iter().all(|&v| v == 0.0)));
    }
}
