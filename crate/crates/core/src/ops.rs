//! Forward and backward kernels for the operations the network is built from.
//!
//! Convolutions are stride 1 with zero "same" padding. Every output element is
//! reduced in a fixed order (input channel, kernel row, kernel column), so the
//! results do not depend on how callers schedule work across threads.

use crate::error::{Error, Result};
use crate::tensor::{ConvParams, Scalar, Tensor};

/// Chunk width for rows wider than `NARROW`.
const WIDE: usize = 32;

/// Chunk width for rows of at most this many pixels.
const NARROW: usize = 8;

/// Output channels accumulated together in registers.
const CO_BLOCK: usize = 4;

/// Output rows accumulated together in registers.
const ROW_BLOCK: usize = 2;

/// Output channels per weight-gradient tile; each tile spans every kernel tap.
const DW_BLOCK: usize = 1;

fn lanes_for(w: usize) -> usize {
    if w <= NARROW {
        NARROW
    } else {
        WIDE
    }
}

/// `acc += w * v` across one chunk.
#[inline(always)]
fn axpy_lanes<T: Scalar, const L: usize>(acc: &mut [T; L], w: T, v: &[T; L]) {
    for l in 0..L {
        acc[l] = w.mul_acc(v[l], acc[l]);
    }
}

/// `acc += a * b` across one chunk.
#[inline(always)]
fn fma_lanes<T: Scalar, const L: usize>(acc: &mut [T; L], a: &[T; L], b: &[T; L]) {
    for l in 0..L {
        acc[l] = a[l].mul_acc(b[l], acc[l]);
    }
}

#[inline]
fn round_up(v: usize, m: usize) -> usize {
    v.div_ceil(m) * m
}

/// One batch item copied into a zero-bordered buffer whose row stride is
/// `round_up(width, lanes) + 2 * pad`, so every kernel tap can read a full
/// chunk without bounds logic.
struct Padded<T> {
    data: Vec<T>,
    rows: usize,
    stride: usize,
}

impl<T: Scalar> Padded<T> {
    fn new(src: &[T], channels: usize, h: usize, w: usize, pad: usize, lanes: usize) -> Self {
        let rows = h + 2 * pad;
        let stride = round_up(w, lanes) + 2 * pad;
        let mut data = vec![T::ZERO; channels * rows * stride];
        for c in 0..channels {
            for y in 0..h {
                let s = (c * h + y) * w;
                let d = (c * rows + y + pad) * stride + pad;
                data[d..d + w].copy_from_slice(&src[s..s + w]);
            }
        }
        Self { data, rows, stride }
    }

    #[inline(always)]
    fn row(&self, c: usize, r: usize) -> &[T] {
        let start = (c * self.rows + r) * self.stride;
        &self.data[start..start + self.stride]
    }
}

/// Reads conv weights in place, either as stored or as the adjoint
/// convolution (channels swapped, taps flipped).
#[derive(Clone, Copy)]
struct Weights<'a, T> {
    data: &'a [T],
    out_stride: usize,
    in_stride: usize,
    flip: bool,
}

impl<'a, T: Scalar> Weights<'a, T> {
    fn forward(p: &'a ConvParams<T>) -> Self {
        let kk = p.kernel() * p.kernel();
        Self {
            data: p.weight.data(),
            out_stride: p.in_channels() * kk,
            in_stride: kk,
            flip: false,
        }
    }

    /// The K×K taps linking `CB` outputs from `co0` to input `ci`.
    #[inline(always)]
    fn taps<const CB: usize, const K: usize, const FLIP: bool>(&self, co0: usize, ci: usize) -> [[T; 9]; CB] {
        let mut taps = [[T::ZERO; 9]; CB];
        for (j, dst) in taps.iter_mut().enumerate() {
            let base = (co0 + j) * self.out_stride + ci * self.in_stride;
            let src = &self.data[base..base + K * K];
            for t in 0..K * K {
                dst[t] = if FLIP { src[K * K - 1 - t] } else { src[t] };
            }
        }
        taps
    }

    fn adjoint(p: &'a ConvParams<T>) -> Self {
        let kk = p.kernel() * p.kernel();
        Self {
            data: p.weight.data(),
            out_stride: kk,
            in_stride: p.in_channels() * kk,
            flip: true,
        }
    }
}

/// Accumulates `CB` output channels for `RB` rows of one `L`-wide chunk.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn conv_chunk<T: Scalar, const CB: usize, const RB: usize, const K: usize, const L: usize, const FLIP: bool>(
    input: &Padded<T>,
    wt: Weights<'_, T>,
    cin: usize,
    co0: usize,
    y: usize,
    xc: usize,
    init: [T; CB],
) -> [[[T; L]; CB]; RB] {
    let mut acc = [[[T::ZERO; L]; CB]; RB];
    for rows in acc.iter_mut() {
        for j in 0..CB {
            rows[j] = [init[j]; L];
        }
    }
    for ci in 0..cin {
        let taps = wt.taps::<CB, K, FLIP>(co0, ci);
        // Input row `y + r2` feeds output row `y + r` through kernel row `r2 - r`.
        for r2 in 0..RB + K - 1 {
            let row = &input.row(ci, y + r2)[xc..xc + L + K - 1];
            for kx in 0..K {
                let v: &[T; L] = row[kx..kx + L].try_into().unwrap();
                for r in 0..RB {
                    if r2 >= r && r2 - r < K {
                        let ky = r2 - r;
                        for j in 0..CB {
                            axpy_lanes(&mut acc[r][j], taps[j][ky * K + kx], v);
                        }
                    }
                }
            }
        }
    }
    acc
}

#[allow(clippy::too_many_arguments)]
fn conv_rows<T: Scalar, const CB: usize, const RB: usize, const K: usize, const L: usize, const FLIP: bool>(
    input: &Padded<T>,
    wt: Weights<'_, T>,
    init: [T; CB],
    cin: usize,
    co0: usize,
    y: usize,
    h: usize,
    w: usize,
    out: &mut [T],
) {
    for xc in (0..w).step_by(L) {
        let acc = conv_chunk::<T, CB, RB, K, L, FLIP>(input, wt, cin, co0, y, xc, init);
        let n = L.min(w - xc);
        for (r, rows) in acc.iter().enumerate() {
            for (j, a) in rows.iter().enumerate() {
                let o = ((co0 + j) * h + y + r) * w + xc;
                out[o..o + n].copy_from_slice(&a[..n]);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_block<T: Scalar, const CB: usize, const K: usize, const L: usize, const FLIP: bool>(
    input: &Padded<T>,
    wt: Weights<'_, T>,
    bias: &[T],
    cin: usize,
    co0: usize,
    h: usize,
    w: usize,
    out: &mut [T],
) {
    let init: [T; CB] = bias[co0..co0 + CB].try_into().unwrap();
    let mut y = 0;
    while y + ROW_BLOCK <= h {
        conv_rows::<T, CB, ROW_BLOCK, K, L, FLIP>(input, wt, init, cin, co0, y, h, w, out);
        y += ROW_BLOCK;
    }
    while y < h {
        conv_rows::<T, CB, 1, K, L, FLIP>(input, wt, init, cin, co0, y, h, w, out);
        y += 1;
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_item_lanes<T: Scalar, const K: usize, const L: usize, const FLIP: bool>(
    input: &Padded<T>,
    wt: Weights<'_, T>,
    bias: &[T],
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    out: &mut [T],
) {
    let mut co0 = 0;
    while co0 + CO_BLOCK <= cout {
        conv_block::<T, CO_BLOCK, K, L, FLIP>(input, wt, bias, cin, co0, h, w, out);
        co0 += CO_BLOCK;
    }
    while co0 < cout {
        conv_block::<T, 1, K, L, FLIP>(input, wt, bias, cin, co0, h, w, out);
        co0 += 1;
    }
}

/// Convolves one padded item into `out` (C_out×H×W).
#[allow(clippy::too_many_arguments)]
fn conv_item<T: Scalar>(
    input: &Padded<T>,
    wt: Weights<'_, T>,
    bias: &[T],
    cin: usize,
    cout: usize,
    k: usize,
    h: usize,
    w: usize,
    out: &mut [T],
) {
    macro_rules! run {
        ($k:literal, $l:expr) => {
            if wt.flip {
                conv_item_lanes::<T, $k, $l, true>(input, wt, bias, cin, cout, h, w, out)
            } else {
                conv_item_lanes::<T, $k, $l, false>(input, wt, bias, cin, cout, h, w, out)
            }
        };
    }
    match (k, lanes_for(w)) {
        (3, WIDE) => run!(3, WIDE),
        (3, _) => run!(3, NARROW),
        (_, WIDE) => run!(1, WIDE),
        (_, _) => run!(1, NARROW),
    }
}

fn check_conv<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<()> {
    if input.channels() != params.in_channels() {
        return Err(Error::shape(
            "conv2d",
            &input.shape(),
            &params.weight.shape(),
        ));
    }
    Ok(())
}

/// Stride-1 cross-correlation with zero "same" padding, plus bias.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Tensor<T>> {
    check_conv(input, params)?;
    let [n, cin, h, w] = input.shape();
    let (cout, k) = (params.out_channels(), params.kernel());
    let wt = Weights::forward(params);
    let mut out = Tensor::zeros([n, cout, h, w]);
    let per_out = cout * h * w;
    for b in 0..n {
        let src = &input.data()[b * cin * h * w..(b + 1) * cin * h * w];
        let padded = Padded::new(src, cin, h, w, k / 2, lanes_for(w));
        let dst = &mut out.data_mut()[b * per_out..(b + 1) * per_out];
        conv_item(&padded, wt, &params.bias, cin, cout, k, h, w, dst);
    }
    Ok(out)
}

/// Gradient of a conv with respect to its input.
pub fn conv2d_backward_input<T: Scalar>(
    grad_out: &Tensor<T>,
    params: &ConvParams<T>,
) -> Result<Tensor<T>> {
    let [n, cout, h, w] = grad_out.shape();
    if cout != params.out_channels() {
        return Err(Error::shape(
            "conv2d backward",
            &grad_out.shape(),
            &params.weight.shape(),
        ));
    }
    let (cin, k) = (params.in_channels(), params.kernel());
    let wt = Weights::adjoint(params);
    let zero_bias = vec![T::ZERO; cin];
    let mut grad_in = Tensor::zeros([n, cin, h, w]);
    let per_in = cin * h * w;
    for b in 0..n {
        let src = &grad_out.data()[b * cout * h * w..(b + 1) * cout * h * w];
        let padded = Padded::new(src, cout, h, w, k / 2, lanes_for(w));
        let dst = &mut grad_in.data_mut()[b * per_in..(b + 1) * per_in];
        conv_item(&padded, wt, &zero_bias, cout, cin, k, h, w, dst);
    }
    Ok(grad_in)
}

/// Sums `grad * shifted input` over the whole item for `CB` output channels,
/// one input channel and every kernel tap.
#[allow(clippy::too_many_arguments)]
fn weight_grad_block<T: Scalar, const CB: usize, const K: usize, const L: usize>(
    input: &Padded<T>,
    grad: &[T],
    wc: usize,
    h: usize,
    ci: usize,
    co0: usize,
) -> [[T; CB]; 9] {
    let mut acc = [[[T::ZERO; L]; 9]; CB];
    for y in 0..h {
        for xc in (0..wc).step_by(L) {
            let mut g = [[T::ZERO; L]; CB];
            for j in 0..CB {
                let o = ((co0 + j) * h + y) * wc + xc;
                g[j] = grad[o..o + L].try_into().unwrap();
            }
            for ky in 0..K {
                let xs = &input.row(ci, y + ky)[xc..xc + L + K - 1];
                for kx in 0..K {
                    let v: &[T; L] = xs[kx..kx + L].try_into().unwrap();
                    for j in 0..CB {
                        fma_lanes(&mut acc[j][ky * K + kx], &g[j], v);
                    }
                }
            }
        }
    }
    let mut sums = [[T::ZERO; CB]; 9];
    for t in 0..K * K {
        for j in 0..CB {
            let mut s = T::ZERO;
            for l in 0..L {
                s += acc[j][t][l];
            }
            sums[t][j] = s;
        }
    }
    sums
}

fn weight_grad_item<T: Scalar, const K: usize, const L: usize>(
    input: &Padded<T>,
    grad: &[T],
    cin: usize,
    cout: usize,
    h: usize,
    wc: usize,
    dw: &mut [T],
) {
    for ci in 0..cin {
        let mut co0 = 0;
        while co0 < cout {
            let cb = if cout - co0 >= DW_BLOCK { DW_BLOCK } else { 1 };
            let mut sums = [[T::ZERO; DW_BLOCK]; 9];
            if cb == DW_BLOCK {
                sums = weight_grad_block::<T, DW_BLOCK, K, L>(input, grad, wc, h, ci, co0);
            } else {
                let s = weight_grad_block::<T, 1, K, L>(input, grad, wc, h, ci, co0);
                for t in 0..K * K {
                    sums[t][0] = s[t][0];
                }
            }
            for (t, row) in sums.iter().take(K * K).enumerate() {
                for (j, &s) in row.iter().take(cb).enumerate() {
                    dw[((co0 + j) * cin + ci) * K * K + t] += s;
                }
            }
            co0 += cb;
        }
    }
}

/// Channel-by-channel dot products for a CO×CI tile of a 1×1 kernel.
fn weight_grad_1x1_block<T: Scalar, const CO: usize, const CI: usize, const L: usize>(
    input: &Padded<T>,
    grad: &[T],
    wc: usize,
    h: usize,
    co0: usize,
    ci0: usize,
) -> [[T; CI]; CO] {
    let mut acc = [[[T::ZERO; L]; CI]; CO];
    for y in 0..h {
        for xc in (0..wc).step_by(L) {
            let mut v = [[T::ZERO; L]; CI];
            for (i, vi) in v.iter_mut().enumerate() {
                *vi = input.row(ci0 + i, y)[xc..xc + L].try_into().unwrap();
            }
            for (j, acc_j) in acc.iter_mut().enumerate() {
                let o = ((co0 + j) * h + y) * wc + xc;
                let g: &[T; L] = grad[o..o + L].try_into().unwrap();
                for i in 0..CI {
                    fma_lanes(&mut acc_j[i], g, &v[i]);
                }
            }
        }
    }
    let mut sums = [[T::ZERO; CI]; CO];
    for j in 0..CO {
        for i in 0..CI {
            let mut s = T::ZERO;
            for l in 0..L {
                s += acc[j][i][l];
            }
            sums[j][i] = s;
        }
    }
    sums
}

#[allow(clippy::too_many_arguments)]
fn weight_grad_1x1_tile<T: Scalar, const CO: usize, const CI: usize, const L: usize>(
    input: &Padded<T>,
    grad: &[T],
    cin: usize,
    wc: usize,
    h: usize,
    co0: usize,
    ci0: usize,
    dw: &mut [T],
) {
    let sums = weight_grad_1x1_block::<T, CO, CI, L>(input, grad, wc, h, co0, ci0);
    for (j, row) in sums.iter().enumerate() {
        for (i, &s) in row.iter().enumerate() {
            dw[(co0 + j) * cin + ci0 + i] += s;
        }
    }
}

fn weight_grad_1x1<T: Scalar, const L: usize>(
    input: &Padded<T>,
    grad: &[T],
    cin: usize,
    cout: usize,
    h: usize,
    wc: usize,
    dw: &mut [T],
) {
    const B: usize = 4;
    let mut co0 = 0;
    while co0 < cout {
        let full_co = cout - co0 >= B;
        let mut ci0 = 0;
        while ci0 < cin {
            let full_ci = cin - ci0 >= B;
            match (full_co, full_ci) {
                (true, true) => weight_grad_1x1_tile::<T, B, B, L>(input, grad, cin, wc, h, co0, ci0, dw),
                (true, false) => weight_grad_1x1_tile::<T, B, 1, L>(input, grad, cin, wc, h, co0, ci0, dw),
                (false, true) => weight_grad_1x1_tile::<T, 1, B, L>(input, grad, cin, wc, h, co0, ci0, dw),
                (false, false) => weight_grad_1x1_tile::<T, 1, 1, L>(input, grad, cin, wc, h, co0, ci0, dw),
            }
            ci0 += if full_ci { B } else { 1 };
        }
        co0 += if full_co { B } else { 1 };
    }
}

/// Gradient of a conv with respect to its weights and bias.
pub fn conv2d_backward_params<T: Scalar>(
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
    params: &ConvParams<T>,
) -> Result<ConvParams<T>> {
    check_conv(input, params)?;
    let [n, cin, h, w] = input.shape();
    let cout = params.out_channels();
    if grad_out.shape() != [n, cout, h, w] {
        return Err(Error::shape(
            "conv2d backward",
            &grad_out.shape(),
            &[n, cout, h, w],
        ));
    }
    let k = params.kernel();
    let lanes = lanes_for(w);
    let wc = round_up(w, lanes);
    // One 512-bit register per accumulator where the row is wide enough.
    let dw_lanes = if lanes == NARROW || std::mem::size_of::<T>() == 8 { 8 } else { 16 };
    let mut grads = params.zeros_like();
    let mut grad_rows = vec![T::ZERO; cout * h * wc];
    for b in 0..n {
        let src = &input.data()[b * cin * h * w..(b + 1) * cin * h * w];
        let padded = Padded::new(src, cin, h, w, k / 2, lanes);
        for co in 0..cout {
            let g = grad_out.plane(b, co);
            let mut bsum = T::ZERO;
            for y in 0..h {
                let d = (co * h + y) * wc;
                grad_rows[d..d + w].copy_from_slice(&g[y * w..(y + 1) * w]);
                for &v in &g[y * w..(y + 1) * w] {
                    bsum += v;
                }
            }
            grads.bias[co] += bsum;
        }
        let dw = grads.weight.data_mut();
        match (k, dw_lanes) {
            (3, 16) => weight_grad_item::<T, 3, 16>(&padded, &grad_rows, cin, cout, h, wc, dw),
            (3, _) => weight_grad_item::<T, 3, 8>(&padded, &grad_rows, cin, cout, h, wc, dw),
            (_, 16) => weight_grad_1x1::<T, 16>(&padded, &grad_rows, cin, cout, h, wc, dw),
            (_, _) => weight_grad_1x1::<T, 8>(&padded, &grad_rows, cin, cout, h, wc, dw),
        }
    }
    Ok(grads)
}

/// Elementwise `x` for `x >= 0`, `slope * x` otherwise.
pub fn leaky_relu<T: Scalar>(input: &Tensor<T>, slope: T) -> Tensor<T> {
    input.map(|v| if v >= T::ZERO { v } else { slope * v })
}

pub fn leaky_relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>, slope: T) -> Tensor<T> {
    let mut g = grad_out.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
        if x < T::ZERO {
            *gv *= slope;
        }
    }
    g
}

/// Concatenates along the channel axis, in list order.
pub fn concat_channels<T: Scalar>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
    let [n, _, h, w] = first.shape();
    let mut channels = 0;
    for t in inputs {
        let [tn, tc, th, tw] = t.shape();
        if (tn, th, tw) != (n, h, w) {
            return Err(Error::shape("concat_channels", &first.shape(), &t.shape()));
        }
        channels += tc;
    }
    let hw = h * w;
    let mut data = Vec::with_capacity(n * channels * hw);
    for b in 0..n {
        for t in inputs {
            let per = t.channels() * hw;
            data.extend_from_slice(&t.data()[b * per..(b + 1) * per]);
        }
    }
    Tensor::from_vec([n, channels, h, w], data)
}

/// Splits a channel-concatenated gradient back into per-input pieces.
pub fn split_channels<T: Scalar>(grad: &Tensor<T>, channels: &[usize]) -> Vec<Tensor<T>> {
    let [n, total, h, w] = grad.shape();
    debug_assert_eq!(channels.iter().sum::<usize>(), total);
    let hw = h * w;
    let mut parts: Vec<Vec<T>> = channels.iter().map(|c| Vec::with_capacity(n * c * hw)).collect();
    for b in 0..n {
        let mut offset = b * total * hw;
        for (part, &c) in parts.iter_mut().zip(channels) {
            part.extend_from_slice(&grad.data()[offset..offset + c * hw]);
            offset += c * hw;
        }
    }
    parts
        .into_iter()
        .zip(channels)
        .map(|(data, &c)| Tensor::from_vec([n, c, h, w], data).expect("split shape"))
        .collect()
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::shape("add", &a.shape(), &b.shape()));
    }
    let mut out = a.clone();
    out.add_assign(b);
    Ok(out)
}

/// Mean absolute difference.
pub fn l1_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("l1_loss", &pred.shape(), &target.shape()));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t).abs().to_f64())
        .sum();
    Ok(T::from_f64(sum / pred.len() as f64))
}

/// `sign(pred - target) / count`, with a zero subgradient on exact ties.
pub fn l1_loss_backward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, upstream: T) -> Tensor<T> {
    let scale = upstream / T::from_f64(pred.len() as f64);
    let mut g = Tensor::zeros(pred.shape());
    for ((gv, &p), &t) in g.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        *gv = if p > t {
            scale
        } else if p < t {
            -scale
        } else {
            T::ZERO
        };
    }
    g
}
