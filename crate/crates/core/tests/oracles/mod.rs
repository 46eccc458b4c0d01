//! Independent reference implementations shared by the integration and
//! acceptance tests. Nothing here calls into the library's network graph,
//! kernels or metric code; parameters are looked up by their manifest names.

#![allow(dead_code)]

use std::collections::HashMap;

use mfrnet::autograd::{LayerId, Tape};
use mfrnet::network::mfrnet_forward;
use mfrnet::{ConvParams, MfrNet, NetworkConfig, RdCurve, Tensor};

/// A C×H×W feature map in double precision.
#[derive(Clone, Debug)]
pub struct Map {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

impl Map {
    pub fn from_tensor<T: mfrnet::Scalar>(t: &Tensor<T>) -> Map {
        let [n, c, h, w] = t.shape();
        assert_eq!(n, 1, "oracle maps hold one item");
        Map {
            c,
            h,
            w,
            v: t.data().iter().map(|x| x.to_f64()).collect(),
        }
    }

    fn at(&self, c: usize, y: isize, x: isize) -> f64 {
        if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
            0.0
        } else {
            self.v[(c * self.h + y as usize) * self.w + x as usize]
        }
    }
}

/// Same-padded, stride-1 cross-correlation by direct summation.
pub fn conv(x: &Map, p: &ConvParams<impl mfrnet::Scalar>) -> Map {
    let [o, i, k, _] = p.weight.shape();
    assert_eq!(i, x.c, "conv input channels");
    let pad = (k / 2) as isize;
    let mut v = vec![0.0; o * x.h * x.w];
    for oc in 0..o {
        for y in 0..x.h {
            for xx in 0..x.w {
                let mut s = p.bias[oc].to_f64();
                for ic in 0..i {
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = p.weight.get(oc, ic, ky, kx).to_f64();
                            s += wv * x.at(ic, y as isize + ky as isize - pad, xx as isize + kx as isize - pad);
                        }
                    }
                }
                v[(oc * x.h + y) * x.w + xx] = s;
            }
        }
    }
    Map { c: o, h: x.h, w: x.w, v }
}

pub fn lrelu(x: &Map, slope: f64) -> Map {
    Map {
        v: x.v.iter().map(|&a| if a >= 0.0 { a } else { slope * a }).collect(),
        ..x.clone()
    }
}

pub fn add(a: &Map, b: &Map) -> Map {
    assert_eq!((a.c, a.h, a.w), (b.c, b.h, b.w));
    Map {
        v: a.v.iter().zip(&b.v).map(|(x, y)| x + y).collect(),
        ..a.clone()
    }
}

pub fn cat(parts: &[&Map]) -> Map {
    let (h, w) = (parts[0].h, parts[0].w);
    let mut v = Vec::new();
    for p in parts {
        assert_eq!((p.h, p.w), (h, w));
        v.extend_from_slice(&p.v);
    }
    Map {
        c: parts.iter().map(|p| p.c).sum(),
        h,
        w,
        v,
    }
}

/// Parameters by manifest name.
pub struct Named<'a, T> {
    layers: HashMap<&'a str, &'a ConvParams<T>>,
    pub slope: f64,
}

impl<'a, T: mfrnet::Scalar> Named<'a, T> {
    pub fn new(model: &'a MfrNet<T>) -> Self {
        let layers = model
            .specs()
            .iter()
            .zip(model.layers())
            .map(|(s, p)| (s.name.as_str(), p))
            .collect();
        Self {
            layers,
            slope: model.config().lrelu_slope,
        }
    }

    pub fn get(&self, name: &str) -> &'a ConvParams<T> {
        self.layers.get(name).unwrap_or_else(|| panic!("no layer named {name}"))
    }

    pub fn has(&self, name: &str) -> bool {
        self.layers.contains_key(name)
    }

    pub fn conv(&self, x: &Map, name: &str) -> Map {
        conv(x, self.get(name))
    }

    pub fn conv_lrelu(&self, x: &Map, name: &str) -> Map {
        lrelu(&conv(x, self.get(name)), self.slope)
    }
}

/// One FRB written out by hand: four densely connected 3×3 layers, a 1×1
/// fusion of their outputs (plus the incoming side features) added to the
/// block input, and, when present, a side branch of two residual 3×3 pairs
/// followed by a 1×1 projection.
pub fn frb<T: mfrnet::Scalar>(n: &Named<T>, prefix: &str, x: &Map, side_in: Option<&Map>) -> (Map, Option<Map>) {
    let mut dense: Vec<Map> = Vec::new();
    for k in 1..=4 {
        let mut parts = vec![x];
        parts.extend(dense.iter());
        let d = n.conv_lrelu(&cat(&parts), &format!("{prefix}.dense{k}"));
        dense.push(d);
    }
    let mut hdf_parts: Vec<&Map> = dense.iter().collect();
    hdf_parts.extend(side_in);
    let hdf = cat(&hdf_parts);
    let main = add(&n.conv(&hdf, &format!("{prefix}.fuse")), x);
    let side = n.has(&format!("{prefix}.side")).then(|| {
        let mut h = hdf.clone();
        for r in 1..=2 {
            let a = n.conv_lrelu(&h, &format!("{prefix}.res{r}.conv1"));
            let b = n.conv(&a, &format!("{prefix}.res{r}.conv2"));
            h = add(&b, &h);
        }
        n.conv(&h, &format!("{prefix}.side"))
    });
    (main, side)
}

/// The whole network, straight-line.
pub fn forward<T: mfrnet::Scalar>(model: &MfrNet<T>, input: &Tensor<T>) -> Map {
    let n = Named::new(model);
    let x = Map::from_tensor(input);
    let sf = n.conv_lrelu(&x, "sf");
    let mut side: Option<Map> = None;
    let mut entry = sf.clone();
    let mut outputs: Vec<Map> = Vec::new();
    for b in 1..=4 {
        let block_in = entry.clone();
        let mut m = block_in.clone();
        for j in 1..=3 {
            let (main, s) = frb(&n, &format!("b{b}.f{j}"), &m, side.as_ref());
            m = add(&main, &block_in);
            side = s;
        }
        let fuser = if b < 4 { format!("cascade.b{}", b + 1) } else { "cascade.rl1".to_string() };
        let mut parts = vec![&m, &sf];
        parts.extend(outputs.iter());
        entry = n.conv_lrelu(&cat(&parts), &fuser);
        outputs.push(m);
    }
    assert!(side.is_none(), "the last FRB has no side output");
    let r = add(&n.conv_lrelu(&entry, "rl1"), &sf);
    let r = n.conv_lrelu(&r, "rl2");
    add(&n.conv(&r, "out"), &x)
}

/// `max |a - b| / max |b|`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    num / den.max(f64::MIN_POSITIVE)
}

/// Lagrange form of the cubic through four points.
pub fn lagrange(xs: &[f64; 4], ys: &[f64; 4], x: f64) -> f64 {
    (0..4)
        .map(|i| {
            let basis: f64 = (0..4).filter(|&j| j != i).map(|j| (x - xs[j]) / (xs[i] - xs[j])).product();
            ys[i] * basis
        })
        .sum()
}

pub const TRAPEZOID_INTERVALS: usize = 10_000;

/// Mean of `f` over `[lo, hi]` by the composite trapezoid rule.
pub fn trapezoid_mean(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let n = TRAPEZOID_INTERVALS;
    let step = (hi - lo) / n as f64;
    let mut s = 0.5 * (f(lo) + f(hi));
    for i in 1..n {
        s += f(lo + i as f64 * step);
    }
    s * step / (hi - lo)
}

fn columns(c: &RdCurve) -> ([f64; 4], [f64; 4]) {
    let p = *c.points();
    (p.map(|p| p.rate.log10()), p.map(|p| p.quality))
}

/// BD-rate in percent by dense numerical integration.
pub fn bd_rate_dense(anchor: &RdCurve, test: &RdCurve) -> f64 {
    let ((ra, qa), (rt, qt)) = (columns(anchor), columns(test));
    let lo = qa[0].max(qt[0]);
    let hi = qa[3].min(qt[3]);
    let diff = trapezoid_mean(|q| lagrange(&qt, &rt, q) - lagrange(&qa, &ra, q), lo, hi);
    (10f64.powf(diff) - 1.0) * 100.0
}

/// BD-quality in dB by dense numerical integration.
pub fn bd_quality_dense(anchor: &RdCurve, test: &RdCurve) -> f64 {
    let ((ra, qa), (rt, qt)) = (columns(anchor), columns(test));
    let lo = ra[0].max(rt[0]);
    let hi = ra[3].min(rt[3]);
    trapezoid_mean(|r| lagrange(&rt, &qt, r) - lagrange(&ra, &qa, r), lo, hi)
}

/// Outcome of a finite-difference sweep.
#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub failures: Vec<String>,
    /// Over gradients of magnitude at least `FD_ABS_TOL`.
    pub worst_rel: f64,
    pub worst_abs: f64,
    /// Parameters whose first stencil straddled an activation kink and were
    /// re-checked with a smaller step.
    pub refined: usize,
}

pub const FD_STEP: f64 = 1e-4;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_TOL: f64 = 1e-7;
const FD_REFINEMENTS: usize = 3;

/// Compares backpropagated parameter gradients of `Σ w ⊙ net(x)` against
/// finite differences for every parameter selected by `pick(layer, index)`,
/// where `index` runs over the weights and then the bias of the layer.
///
/// With every layer applied once, the loss is piecewise linear in any single
/// parameter. Without a kink inside the stencil both one-sided slopes agree
/// and the central difference is exact up to rounding. When they disagree,
/// the step is cut tenfold until one side's slope repeats across two steps;
/// that side held no kink, so its slope is the derivative at the point.
pub fn grad_check(
    model: &MfrNet<f64>,
    input: &Tensor<f64>,
    weights: &Tensor<f64>,
    mut pick: impl FnMut(usize, usize) -> bool,
) -> GradCheck {
    let mut layers: Vec<ConvParams<f64>> = model.layers().to_vec();
    let mut tape = Tape::new();
    let x = tape.leaf(input.clone());
    let y = {
        let mut rec = tape.recorder(&layers);
        mfrnet_forward(&mut rec, model.config(), model.layout(), &x).expect("forward")
    };
    let loss = tape.weighted_sum(y, weights).expect("loss");
    let base = tape.value(loss).data()[0];
    let grads = tape.backward(loss, &layers).expect("backward").layers;

    let mut report = GradCheck::default();
    // Latest-used layers first: a recompute from a layer's first use then
    // also refreshes every node a previously perturbed layer touched.
    let mut order: Vec<(usize, usize)> = (0..layers.len())
        .map(|l| (tape.first_use(LayerId(l)).expect("every layer is used"), l))
        .collect();
    order.sort_unstable_by(|a, b| b.cmp(a));

    for (start, l) in order {
        let count = layers[l].weight.len() + layers[l].bias.len();
        for idx in 0..count {
            if !pick(l, idx) {
                continue;
            }
            let analytic = param(&grads[l], idx);
            let original = param(&layers[l], idx);
            let eval = |v: f64, layers: &mut Vec<ConvParams<f64>>, tape: &mut Tape<f64>| {
                *param_mut(&mut layers[l], idx) = v;
                tape.recompute_from(start, layers).expect("recompute");
                tape.value(loss).data()[0]
            };
            let mut h = FD_STEP;
            let mut numeric = f64::NAN;
            let mut previous: Option<(f64, f64)> = None;
            for attempt in 0..=FD_REFINEMENTS {
                let plus = eval(original + h, &mut layers, &mut tape);
                let minus = eval(original - h, &mut layers, &mut tape);
                let (fwd, bwd) = ((plus - base) / h, (base - minus) / h);
                // Slopes closer than this cannot move the result past the
                // tolerance, kink or not.
                let noise = 64.0 * f64::EPSILON * base.abs().max(plus.abs()).max(minus.abs()) / h;
                let same = |a: f64, b: f64| (a - b).abs() <= noise + 1e-6 * a.abs().max(b.abs());
                if same(fwd, bwd) {
                    numeric = 0.5 * (fwd + bwd);
                    break;
                }
                if let Some((pf, pb)) = previous {
                    if same(fwd, pf) {
                        numeric = pf;
                        break;
                    }
                    if same(bwd, pb) {
                        numeric = pb;
                        break;
                    }
                }
                if attempt == 0 {
                    report.refined += 1;
                }
                numeric = 0.5 * (fwd + bwd);
                previous = Some((fwd, bwd));
                h /= 10.0;
            }
            *param_mut(&mut layers[l], idx) = original;
            report.checked += 1;
            let abs = (analytic - numeric).abs();
            let rel = abs / analytic.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
            report.worst_abs = report.worst_abs.max(abs);
            if analytic.abs().max(numeric.abs()) >= FD_ABS_TOL {
                report.worst_rel = report.worst_rel.max(rel);
            }
            if !(rel < FD_REL_TOL || abs < FD_ABS_TOL) {
                report.failures.push(format!(
                    "{}[{idx}]: analytic {analytic:e}, numeric {numeric:e}",
                    model.specs()[l].name
                ));
            }
        }
    }
    report
}

fn param(p: &ConvParams<f64>, idx: usize) -> f64 {
    let n = p.weight.len();
    if idx < n {
        p.weight.data()[idx]
    } else {
        p.bias[idx - n]
    }
}

fn param_mut(p: &mut ConvParams<f64>, idx: usize) -> &mut f64 {
    let n = p.weight.len();
    if idx < n {
        &mut p.weight.data_mut()[idx]
    } else {
        &mut p.bias[idx - n]
    }
}

/// A tiny model with He-normal weights, rescaled on `probe`, and small
/// random biases so that every bias path is exercised.
pub fn test_model(seed: u64, probe: &Tensor<f64>) -> MfrNet<f64> {
    use rand::{Rng, SeedableRng};
    let mut model = MfrNet::<f64>::init(NetworkConfig::tiny(), seed).unwrap();
    model.normalize_scales(probe).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    let mut layers = model.layers().to_vec();
    for l in &mut layers {
        for b in &mut l.bias {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    MfrNet::from_layers(*model.config(), layers).unwrap()
}

pub fn random_input(seed: u64, h: usize, w: usize) -> Tensor<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_vec([1, 3, h, w], (0..3 * h * w).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}
