//! Forward and backward passes.
//!
//! Activations are kept channel-major, `(C, B, H, W)`, so that each conv is a
//! single GEMM over the whole batch and BatchNorm statistics are contiguous
//! per channel. Input batches arrive sample-major `(B, C, H, W)` as stored in
//! datasets and are transposed once on entry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::model::{ModelParams, KERNEL, KERNEL_AREA, NUM_BLOCKS};
use crate::nn::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Client compression rate `r_c = N_c / N`, in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ScaleRate(f64);

impl ScaleRate {
    pub const FULL: ScaleRate = ScaleRate(1.0);

    pub fn new(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::config(format!("scale rate {rate} outside (0, 1]")));
        }
        Ok(ScaleRate(rate))
    }

    pub fn from_widths(client: usize, server: usize) -> Result<Self> {
        if server == 0 {
            return Err(Error::config("server width is zero"));
        }
        Self::new(client as f64 / server as f64)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Multiplier applied by the Scaler layer, `1 / r_c`.
    pub fn scaler_gain(self) -> f64 {
        1.0 / self.0
    }
}

/// Borrowed batch of images in sample-major `(B, C, H, W)` layout.
#[derive(Debug, Clone, Copy)]
pub struct BatchView<'a, T> {
    pub data: &'a [T],
    pub len: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl<'a, T> BatchView<'a, T> {
    pub fn new(data: &'a [T], len: usize, channels: usize, height: usize, width: usize) -> Self {
        BatchView {
            data,
            len,
            channels,
            height,
            width,
        }
    }
}

#[derive(Debug, Clone)]
struct BlockCache<T> {
    in_channels: usize,
    height: usize,
    width: usize,
    cols: Vec<T>,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    act: Vec<T>,
    pool_argmax: Vec<u32>,
}

/// Intermediates of a train-mode forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    batch: usize,
    gain: T,
    blocks: Vec<BlockCache<T>>,
    features: Vec<T>,
    pub logits: Vec<T>,
}

impl<T> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

struct BatchStats<T> {
    mean: Vec<T>,
    var: Vec<T>,
    count: usize,
}

fn validate<T: Scalar>(params: &ModelParams<T>, x: &BatchView<T>) -> Result<()> {
    if x.len == 0 {
        return Err(Error::dim("empty batch"));
    }
    if x.channels != params.arch.image_channels {
        return Err(Error::dim(format!(
            "batch has {} channels, model expects {}",
            x.channels, params.arch.image_channels
        )));
    }
    if !x.height.is_multiple_of(8) || !x.width.is_multiple_of(8) || x.height == 0 || x.width == 0 {
        return Err(Error::dim(format!(
            "spatial size {}x{} not divisible by 8",
            x.height, x.width
        )));
    }
    if x.data.len() != x.len * x.channels * x.height * x.width {
        return Err(Error::dim(format!(
            "batch buffer has {} values, expected {}",
            x.data.len(),
            x.len * x.channels * x.height * x.width
        )));
    }
    Ok(())
}

fn to_channel_major<T: Scalar>(x: &BatchView<T>) -> Vec<T> {
    let plane = x.height * x.width;
    let mut out = vec![T::zero(); x.data.len()];
    for b in 0..x.len {
        for c in 0..x.channels {
            let src = &x.data[(b * x.channels + c) * plane..][..plane];
            out[(c * x.len + b) * plane..][..plane].copy_from_slice(src);
        }
    }
    out
}

/// `(C, B, H, W)` → `(C·9, B·H·W)` patches for a 3×3 kernel with padding 1.
fn im2col<T: Scalar>(x: &[T], c: usize, batch: usize, h: usize, w: usize) -> Vec<T> {
    let plane = h * w;
    let cols_n = batch * plane;
    let mut cols = vec![T::zero(); c * KERNEL_AREA * cols_n];
    for ci in 0..c {
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut cols[((ci * KERNEL + ky) * KERNEL + kx) * cols_n..][..cols_n];
                for b in 0..batch {
                    let src = &x[(ci * batch + b) * plane..][..plane];
                    let dst = &mut row[b * plane..][..plane];
                    for oy in 0..h {
                        let sy = oy as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        // valid output columns: 0 <= ox + kx - 1 < w
                        let lo = 1usize.saturating_sub(kx);
                        let hi = (w + 1 - kx).min(w);
                        let d = &mut dst[oy * w + lo..oy * w + hi];
                        let s = &src[sy * w + lo + kx - 1..sy * w + hi + kx - 1];
                        d.copy_from_slice(s);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im<T: Scalar>(cols: &[T], c: usize, batch: usize, h: usize, w: usize) -> Vec<T> {
    let plane = h * w;
    let cols_n = batch * plane;
    let mut x = vec![T::zero(); c * batch * plane];
    for ci in 0..c {
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &cols[((ci * KERNEL + ky) * KERNEL + kx) * cols_n..][..cols_n];
                for b in 0..batch {
                    let src = &row[b * plane..][..plane];
                    let dst = &mut x[(ci * batch + b) * plane..][..plane];
                    for oy in 0..h {
                        let sy = oy as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        let lo = 1usize.saturating_sub(kx);
                        let hi = (w + 1 - kx).min(w);
                        let s = &src[oy * w + lo..oy * w + hi];
                        let d = &mut dst[sy * w + lo + kx - 1..sy * w + hi + kx - 1];
                        for (dv, &sv) in d.iter_mut().zip(s) {
                            *dv += sv;
                        }
                    }
                }
            }
        }
    }
    x
}

fn max_pool<T: Scalar>(a: &[T], c: usize, batch: usize, h: usize, w: usize) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * batch * oh * ow);
    let mut arg = Vec::with_capacity(c * batch * oh * ow);
    for cb in 0..c * batch {
        let base = cb * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let mut best = base + (2 * y) * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * x + dx;
                    if a[idx] > a[best] {
                        best = idx;
                    }
                }
                out.push(a[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

fn forward_impl<T: Scalar>(
    params: &ModelParams<T>,
    x: &BatchView<T>,
    rate: ScaleRate,
    mode: Mode,
    keep_cache: bool,
) -> Result<(Vec<T>, Option<ForwardCache<T>>, Vec<BatchStats<T>>)> {
    validate(params, x)?;
    let batch = x.len;
    let gain = T::of(rate.scaler_gain());
    let eps = T::of(params.norm.eps);
    let mut act_in = to_channel_major(x);
    let (mut h, mut w) = (x.height, x.width);
    let mut caches = Vec::with_capacity(NUM_BLOCKS);
    let mut stats = Vec::with_capacity(NUM_BLOCKS);
    let mut features = Vec::new();

    for (b, blk) in params.blocks.iter().enumerate() {
        let cin = params.arch.block_inputs(b);
        let cout = params.arch.widths[b];
        let n = batch * h * w;
        let cols = im2col(&act_in, cin, batch, h, w);

        // conv + scaler
        let mut z = vec![T::zero(); cout * n];
        T::gemm(
            cout,
            cin * KERNEL_AREA,
            n,
            gain,
            &blk.conv_weight,
            cin * KERNEL_AREA,
            1,
            &cols,
            n,
            1,
            T::zero(),
            &mut z,
            n,
            1,
        );
        for (o, row) in z.chunks_mut(n).enumerate() {
            let bias = gain * blk.conv_bias[o];
            row.iter_mut().for_each(|v| *v += bias);
        }

        // batchnorm
        let mut inv_std = vec![T::zero(); cout];
        let mut means = vec![T::zero(); cout];
        let mut vars = vec![T::zero(); cout];
        let nf = T::of(n as f64);
        for (o, row) in z.chunks(n).enumerate() {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = row.iter().fold(T::zero(), |s, &v| s + v) / nf;
                    let var = row
                        .iter()
                        .fold(T::zero(), |s, &v| s + (v - mean) * (v - mean))
                        / nf;
                    (mean, var)
                }
                Mode::Eval => (blk.running_mean[o], blk.running_var[o]),
            };
            means[o] = mean;
            vars[o] = var;
            inv_std[o] = T::one() / (var + eps).sqrt();
        }
        let mut xhat = z;
        let mut act = vec![T::zero(); cout * n];
        for o in 0..cout {
            let (g, beta, mean, is) = (blk.bn_gain[o], blk.bn_bias[o], means[o], inv_std[o]);
            let xr = &mut xhat[o * n..][..n];
            let ar = &mut act[o * n..][..n];
            for (xv, av) in xr.iter_mut().zip(ar.iter_mut()) {
                *xv = (*xv - mean) * is;
                let y = g * *xv + beta;
                *av = if y > T::zero() { y } else { T::zero() };
            }
        }
        if mode == Mode::Train {
            stats.push(BatchStats {
                mean: means,
                var: vars,
                count: n,
            });
        }

        let pool_argmax;
        if b + 1 < NUM_BLOCKS {
            let (pooled, arg) = max_pool(&act, cout, batch, h, w);
            act_in = pooled;
            pool_argmax = arg;
        } else {
            let plane = T::of((h * w) as f64);
            features = act
                .chunks(h * w)
                .map(|p| p.iter().fold(T::zero(), |s, &v| s + v) / plane)
                .collect();
            pool_argmax = Vec::new();
        }
        if keep_cache {
            caches.push(BlockCache {
                in_channels: cin,
                height: h,
                width: w,
                cols,
                xhat,
                inv_std,
                act,
                pool_argmax,
            });
        }
        if b + 1 < NUM_BLOCKS {
            h /= 2;
            w /= 2;
        }
    }

    // dense: logits (B × K) = featᵀ (B × C) · Wᵀ (C × K)
    let c = params.arch.dense_inputs();
    let k = params.arch.classes;
    let mut logits = vec![T::zero(); batch * k];
    for row in logits.chunks_mut(k) {
        row.copy_from_slice(&params.dense_bias);
    }
    T::gemm(
        batch,
        c,
        k,
        T::one(),
        &features,
        1,
        batch,
        &params.dense_weight,
        1,
        c,
        T::one(),
        &mut logits,
        k,
        1,
    );

    let cache = keep_cache.then(|| ForwardCache {
        batch,
        gain,
        blocks: caches,
        features,
        logits: logits.clone(),
    });
    Ok((logits, cache, stats))
}

/// Forward pass.
///
/// In [`Mode::Train`] BatchNorm normalizes with batch statistics and updates
/// the running statistics in `params`; in [`Mode::Eval`] it uses the running
/// statistics and leaves `params` untouched.
pub fn forward<T: Scalar>(
    params: &mut ModelParams<T>,
    x: &BatchView<T>,
    rate: ScaleRate,
    mode: Mode,
) -> Result<(Vec<T>, ForwardCache<T>)> {
    let (logits, cache, stats) = forward_impl(params, x, rate, mode, true)?;
    if mode == Mode::Train {
        let m = T::of(params.norm.momentum);
        for (blk, st) in params.blocks.iter_mut().zip(stats) {
            let unbias = if st.count > 1 {
                T::of(st.count as f64 / (st.count - 1) as f64)
            } else {
                T::one()
            };
            for o in 0..blk.running_mean.len() {
                blk.running_mean[o] = (T::one() - m) * blk.running_mean[o] + m * st.mean[o];
                blk.running_var[o] = (T::one() - m) * blk.running_var[o] + m * st.var[o] * unbias;
            }
        }
    }
    Ok((logits, cache.expect("cache requested")))
}

/// Eval-mode logits without caching intermediates.
pub fn predict<T: Scalar>(params: &ModelParams<T>, x: &BatchView<T>, rate: ScaleRate) -> Result<Vec<T>> {
    Ok(forward_impl(params, x, rate, Mode::Eval, false)?.0)
}

/// Gradients of the loss with respect to every trainable tensor, given the
/// gradient of the loss with respect to the logits (`B × classes`).
///
/// Only valid for a cache produced by a train-mode forward pass. Running
/// statistic slots of the result are zero.
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    cache: &ForwardCache<T>,
    dlogits: &[T],
) -> Result<ModelParams<T>> {
    let batch = cache.batch;
    let k = params.arch.classes;
    let c = params.arch.dense_inputs();
    if dlogits.len() != batch * k {
        return Err(Error::dim(format!(
            "dlogits has {} values, expected {}",
            dlogits.len(),
            batch * k
        )));
    }
    if cache.blocks.len() != NUM_BLOCKS {
        return Err(Error::dim("forward cache is incomplete"));
    }
    let mut grads = ModelParams::<T>::zeros(&params.arch);
    grads.norm = params.norm;

    // dense
    for row in dlogits.chunks(k) {
        for (g, &d) in grads.dense_bias.iter_mut().zip(row) {
            *g += d;
        }
    }
    T::gemm(
        k,
        batch,
        c,
        T::one(),
        dlogits,
        1,
        k,
        &cache.features,
        1,
        batch,
        T::zero(),
        &mut grads.dense_weight,
        c,
        1,
    );
    let mut dfeat = vec![T::zero(); c * batch];
    T::gemm(
        c,
        k,
        batch,
        T::one(),
        &params.dense_weight,
        1,
        c,
        dlogits,
        1,
        k,
        T::zero(),
        &mut dfeat,
        batch,
        1,
    );

    let mut dnext: Vec<T> = Vec::new();
    for b in (0..NUM_BLOCKS).rev() {
        let bc = &cache.blocks[b];
        let blk = &params.blocks[b];
        let cout = params.arch.widths[b];
        let (h, w) = (bc.height, bc.width);
        let plane = h * w;
        let n = batch * plane;

        // pooling
        let mut da = vec![T::zero(); cout * n];
        if b + 1 == NUM_BLOCKS {
            let inv = T::one() / T::of(plane as f64);
            for (cb, &g) in dfeat.iter().enumerate() {
                da[cb * plane..][..plane].iter_mut().for_each(|v| *v = g * inv);
            }
        } else {
            for (&idx, &g) in bc.pool_argmax.iter().zip(&dnext) {
                da[idx as usize] += g;
            }
        }

        // relu + batchnorm
        let nf = T::of(n as f64);
        let gb = &mut grads.blocks[b];
        let mut dz = da;
        for o in 0..cout {
            let xr = &bc.xhat[o * n..][..n];
            let ar = &bc.act[o * n..][..n];
            let dr = &mut dz[o * n..][..n];
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for ((d, &a), &xh) in dr.iter_mut().zip(ar).zip(xr) {
                if a <= T::zero() {
                    *d = T::zero();
                }
                sum_dy += *d;
                sum_dy_xhat += *d * xh;
            }
            gb.bn_gain[o] = sum_dy_xhat;
            gb.bn_bias[o] = sum_dy;
            // through normalization, then the scaler
            let coef = blk.bn_gain[o] * bc.inv_std[o] / nf * cache.gain;
            for (d, &xh) in dr.iter_mut().zip(xr) {
                *d = coef * (nf * *d - sum_dy - xh * sum_dy_xhat);
            }
            gb.conv_bias[o] = dr.iter().fold(T::zero(), |s, &v| s + v);
        }

        // conv
        let cin9 = bc.in_channels * KERNEL_AREA;
        T::gemm(
            cout,
            n,
            cin9,
            T::one(),
            &dz,
            n,
            1,
            &bc.cols,
            1,
            n,
            T::zero(),
            &mut gb.conv_weight,
            cin9,
            1,
        );
        if b > 0 {
            let mut dcols = vec![T::zero(); cin9 * n];
            T::gemm(
                cin9,
                cout,
                n,
                T::one(),
                &blk.conv_weight,
                1,
                cin9,
                &dz,
                n,
                1,
                T::zero(),
                &mut dcols,
                n,
                1,
            );
            dnext = col2im(&dcols, bc.in_channels, batch, h, w);
        }
    }
    Ok(grads)
}
