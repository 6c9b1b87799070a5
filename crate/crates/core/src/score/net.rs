//! Encoder–decoder convolutional denoiser with time conditioning.
//!
//! The network predicts the noise direction at unit scale; dividing by the
//! perturbation std turns it into a score field (see `LearnedScore`). Per
//! level: two 3x3 convolutions with SiLU, the time embedding projected to a
//! per-channel bias and summed into the block; levels are connected by 2x2
//! average pooling down and nearest-neighbor upsampling with additive skip
//! connections up. Forward and backward passes are written out by hand;
//! convolutions run as im2col + GEMM.

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::image::Image2D;
use crate::rng::{standard_normal, substream};
use crate::score::features::TimeEmbedding;
use crate::{real, Real};

/// Architecture knobs; the exact channel widths are configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Channel width per resolution level (length = number of levels).
    pub channels: Vec<usize>,
    /// Number of Gaussian random feature pairs for time conditioning.
    pub time_features: usize,
    /// Frequency scale of the time features.
    pub time_scale: f64,
    /// Initialization seed.
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            channels: vec![16, 32, 64],
            time_features: 32,
            time_scale: 16.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Conv<T> {
    /// (out_ch, in_ch·9)
    pub w: Array2<T>,
    pub b: Array1<T>,
}

#[derive(Debug, Clone)]
pub struct Linear<T> {
    /// (out, in)
    pub w: Array2<T>,
    pub b: Array1<T>,
}

/// All learnable tensors, in a fixed flattening order (encoder blocks, then
/// decoder blocks, then the head).
#[derive(Debug, Clone)]
pub struct NetParams<T> {
    pub enc_in: Vec<Conv<T>>,
    pub enc_time: Vec<Linear<T>>,
    pub enc_out: Vec<Conv<T>>,
    pub dec_in: Vec<Conv<T>>,
    pub dec_time: Vec<Linear<T>>,
    pub dec_out: Vec<Conv<T>>,
    pub head: Conv<T>,
}

impl<T: Real> NetParams<T> {
    fn conv_zeros(in_ch: usize, out_ch: usize) -> Conv<T> {
        Conv {
            w: Array2::zeros((out_ch, in_ch * 9)),
            b: Array1::zeros(out_ch),
        }
    }

    fn linear_zeros(in_dim: usize, out_dim: usize) -> Linear<T> {
        Linear {
            w: Array2::zeros((out_dim, in_dim)),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn zeros(cfg: &NetConfig) -> Self {
        let ch = &cfg.channels;
        let levels = ch.len();
        let emb_dim = 2 * cfg.time_features;
        let enc_in = (0..levels)
            .map(|l| Self::conv_zeros(if l == 0 { 1 } else { ch[l - 1] }, ch[l]))
            .collect();
        let enc_time = (0..levels).map(|l| Self::linear_zeros(emb_dim, ch[l])).collect();
        let enc_out = (0..levels).map(|l| Self::conv_zeros(ch[l], ch[l])).collect();
        let dec_in = (0..levels.saturating_sub(1))
            .map(|l| Self::conv_zeros(ch[l + 1], ch[l]))
            .collect();
        let dec_time = (0..levels.saturating_sub(1))
            .map(|l| Self::linear_zeros(emb_dim, ch[l]))
            .collect();
        let dec_out = (0..levels.saturating_sub(1))
            .map(|l| Self::conv_zeros(ch[l], ch[l]))
            .collect();
        let head = Self::conv_zeros(ch[0], 1);
        Self {
            enc_in,
            enc_time,
            enc_out,
            dec_in,
            dec_time,
            dec_out,
            head,
        }
    }

    /// He-normal convolution weights, 1/sqrt(fan_in) time projections,
    /// zero-initialized head so the fresh model predicts the zero field.
    pub fn init(cfg: &NetConfig) -> Self {
        let mut params = Self::zeros(cfg);
        let mut rng = substream(cfg.seed, "net-init");
        let mut fill_conv = |conv: &mut Conv<T>| {
            let fan_in = conv.w.ncols();
            let std = (2.0 / fan_in as f64).sqrt();
            for v in conv.w.iter_mut() {
                let n: f64 = standard_normal(&mut rng);
                *v = real(n * std);
            }
        };
        for l in 0..params.enc_in.len() {
            fill_conv(&mut params.enc_in[l]);
            fill_conv(&mut params.enc_out[l]);
        }
        for l in 0..params.dec_in.len() {
            fill_conv(&mut params.dec_in[l]);
            fill_conv(&mut params.dec_out[l]);
        }
        let mut fill_linear = |lin: &mut Linear<T>| {
            let fan_in = lin.w.ncols();
            let std = (1.0 / fan_in as f64).sqrt();
            for v in lin.w.iter_mut() {
                let n: f64 = standard_normal(&mut rng);
                *v = real(n * std);
            }
        };
        for l in 0..params.enc_time.len() {
            fill_linear(&mut params.enc_time[l]);
        }
        for l in 0..params.dec_time.len() {
            fill_linear(&mut params.dec_time[l]);
        }
        // head stays zero
        params
    }

    /// Visit every parameter slice in the fixed flattening order.
    pub fn visit_slices<'a>(&'a self, mut f: impl FnMut(&'a [T])) {
        let conv = |c: &'a Conv<T>, f: &mut dyn FnMut(&'a [T])| {
            f(c.w.as_slice().expect("standard layout"));
            f(c.b.as_slice().expect("standard layout"));
        };
        let lin = |l: &'a Linear<T>, f: &mut dyn FnMut(&'a [T])| {
            f(l.w.as_slice().expect("standard layout"));
            f(l.b.as_slice().expect("standard layout"));
        };
        for l in 0..self.enc_in.len() {
            conv(&self.enc_in[l], &mut f);
            lin(&self.enc_time[l], &mut f);
            conv(&self.enc_out[l], &mut f);
        }
        for l in 0..self.dec_in.len() {
            conv(&self.dec_in[l], &mut f);
            lin(&self.dec_time[l], &mut f);
            conv(&self.dec_out[l], &mut f);
        }
        conv(&self.head, &mut f);
    }

    pub fn visit_slices_mut(&mut self, mut f: impl FnMut(&mut [T])) {
        let visit_conv = |c: &mut Conv<T>, f: &mut dyn FnMut(&mut [T])| {
            f(c.w.as_slice_mut().expect("standard layout"));
            f(c.b.as_slice_mut().expect("standard layout"));
        };
        let visit_lin = |l: &mut Linear<T>, f: &mut dyn FnMut(&mut [T])| {
            f(l.w.as_slice_mut().expect("standard layout"));
            f(l.b.as_slice_mut().expect("standard layout"));
        };
        let levels = self.enc_in.len();
        for l in 0..levels {
            visit_conv(&mut self.enc_in[l], &mut f);
            visit_lin(&mut self.enc_time[l], &mut f);
            visit_conv(&mut self.enc_out[l], &mut f);
        }
        for l in 0..self.dec_in.len() {
            visit_conv(&mut self.dec_in[l], &mut f);
            visit_lin(&mut self.dec_time[l], &mut f);
            visit_conv(&mut self.dec_out[l], &mut f);
        }
        visit_conv(&mut self.head, &mut f);
    }

    pub fn n_params(&self) -> usize {
        let mut n = 0;
        self.visit_slices(|s| n += s.len());
        n
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_params());
        self.visit_slices(|s| out.extend_from_slice(s));
        out
    }

    pub fn load_flat(&mut self, flat: &[T]) -> crate::Result<()> {
        if flat.len() != self.n_params() {
            return Err(crate::CoreError::Checkpoint(format!(
                "parameter blob has {} values, architecture needs {}",
                flat.len(),
                self.n_params()
            )));
        }
        let mut offset = 0;
        self.visit_slices_mut(|s| {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        });
        Ok(())
    }

    /// self += other * scale, slice by slice.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        let mut theirs: Vec<&[T]> = Vec::new();
        other.visit_slices(|s| theirs.push(s));
        let mut k = 0;
        self.visit_slices_mut(|s| {
            for (a, &b) in s.iter_mut().zip(theirs[k].iter()) {
                *a += b * scale;
            }
            k += 1;
        });
    }
}

#[inline]
fn silu<T: Real>(x: T) -> T {
    x / (T::one() + (-x).exp())
}

#[inline]
fn silu_grad<T: Real>(x: T) -> T {
    let s = T::one() / (T::one() + (-x).exp());
    s * (T::one() + x * (T::one() - s))
}

fn reshape3<T: Real>(a: Array2<T>, c: usize, h: usize, w: usize) -> Array3<T> {
    let (vec, _) = a.into_raw_vec_and_offset();
    Array3::from_shape_vec((c, h, w), vec).expect("shape product matches")
}

fn outer<T: Real>(col: &Array1<T>, row: &Array1<T>) -> Array2<T> {
    let mut out = Array2::zeros((col.len(), row.len()));
    for (i, &a) in col.iter().enumerate() {
        for (j, &b) in row.iter().enumerate() {
            out[(i, j)] = a * b;
        }
    }
    out
}

/// im2col for 3x3 same-padding convolution: (C·9, H·W).
fn im2col<T: Real>(x: &Array3<T>) -> Array2<T> {
    let (c, h, w) = x.dim();
    let hw = h * w;
    let mut patches = Array2::<T>::zeros((c * 9, hw));
    let xs = x.as_slice().expect("standard layout");
    let ps = patches.as_slice_mut().expect("standard layout");
    for ci in 0..c {
        for dy in 0..3usize {
            let sy = dy as isize - 1;
            for dx in 0..3usize {
                let sx = dx as isize - 1;
                let row = ci * 9 + dy * 3 + dx;
                let w_start = if sx < 0 { 1 } else { 0 };
                let w_end = if sx > 0 { w - 1 } else { w };
                for row_h in 0..h {
                    let src_h = row_h as isize + sy;
                    if src_h < 0 || src_h >= h as isize {
                        continue;
                    }
                    let dst0 = row * hw + row_h * w + w_start;
                    let src0 = (ci * h + src_h as usize) * w + (w_start as isize + sx) as usize;
                    let n = w_end - w_start;
                    ps[dst0..dst0 + n].copy_from_slice(&xs[src0..src0 + n]);
                }
            }
        }
    }
    patches
}

/// Scatter-add the im2col adjoint back onto the input grid.
fn col2im<T: Real>(dpatches: &Array2<T>, c: usize, h: usize, w: usize) -> Array3<T> {
    let hw = h * w;
    let mut dx = Array3::<T>::zeros((c, h, w));
    let ds = dpatches.as_slice().expect("standard layout");
    let xs = dx.as_slice_mut().expect("standard layout");
    for ci in 0..c {
        for dy in 0..3usize {
            let sy = dy as isize - 1;
            for dxk in 0..3usize {
                let sx = dxk as isize - 1;
                let row = ci * 9 + dy * 3 + dxk;
                let w_start = if sx < 0 { 1 } else { 0 };
                let w_end = if sx > 0 { w - 1 } else { w };
                for row_h in 0..h {
                    let src_h = row_h as isize + sy;
                    if src_h < 0 || src_h >= h as isize {
                        continue;
                    }
                    let col0 = row * hw + row_h * w + w_start;
                    let dst0 = (ci * h + src_h as usize) * w + (w_start as isize + sx) as usize;
                    for k in 0..(w_end - w_start) {
                        xs[dst0 + k] += ds[col0 + k];
                    }
                }
            }
        }
    }
    dx
}

fn conv_forward<T: Real>(conv: &Conv<T>, x: &Array3<T>) -> Array3<T> {
    let (_, h, w) = x.dim();
    let patches = im2col(x);
    let mut y = conv.w.dot(&patches);
    for (mut row, &b) in y.rows_mut().into_iter().zip(conv.b.iter()) {
        row.mapv_inplace(|v| v + b);
    }
    reshape3(y, conv.w.nrows(), h, w)
}

/// Returns (d_input, d_weights, d_bias).
fn conv_backward<T: Real>(
    conv: &Conv<T>,
    x: &Array3<T>,
    dy: &Array3<T>,
) -> (Array3<T>, Array2<T>, Array1<T>) {
    let (c_in, h, w) = x.dim();
    let c_out = conv.w.nrows();
    let hw = h * w;
    let dy2 = {
        let flat = dy.as_slice().expect("standard layout").to_vec();
        Array2::from_shape_vec((c_out, hw), flat).expect("shape")
    };
    let patches = im2col(x);
    let dw = dy2.dot(&patches.t());
    let db = dy2.sum_axis(ndarray::Axis(1));
    let dpatches = conv.w.t().dot(&dy2);
    let dx = col2im(&dpatches, c_in, h, w);
    (dx, dw, db)
}

fn avgpool2<T: Real>(x: &Array3<T>) -> Array3<T> {
    let (c, h, w) = x.dim();
    assert!(h % 2 == 0 && w % 2 == 0, "pooling needs even dimensions");
    let quarter: T = real(0.25);
    let mut y = Array3::<T>::zeros((c, h / 2, w / 2));
    for ci in 0..c {
        for r in 0..h / 2 {
            for cl in 0..w / 2 {
                let s = x[(ci, 2 * r, 2 * cl)]
                    + x[(ci, 2 * r, 2 * cl + 1)]
                    + x[(ci, 2 * r + 1, 2 * cl)]
                    + x[(ci, 2 * r + 1, 2 * cl + 1)];
                y[(ci, r, cl)] = s * quarter;
            }
        }
    }
    y
}

fn avgpool2_backward<T: Real>(dy: &Array3<T>, h: usize, w: usize) -> Array3<T> {
    let (c, hh, ww) = dy.dim();
    debug_assert_eq!((hh, ww), (h / 2, w / 2));
    let quarter: T = real(0.25);
    let mut dx = Array3::<T>::zeros((c, h, w));
    for ci in 0..c {
        for r in 0..hh {
            for cl in 0..ww {
                let g = dy[(ci, r, cl)] * quarter;
                dx[(ci, 2 * r, 2 * cl)] = g;
                dx[(ci, 2 * r, 2 * cl + 1)] = g;
                dx[(ci, 2 * r + 1, 2 * cl)] = g;
                dx[(ci, 2 * r + 1, 2 * cl + 1)] = g;
            }
        }
    }
    dx
}

fn upsample2<T: Real>(x: &Array3<T>) -> Array3<T> {
    let (c, h, w) = x.dim();
    let mut y = Array3::<T>::zeros((c, 2 * h, 2 * w));
    for ci in 0..c {
        for r in 0..h {
            for cl in 0..w {
                let v = x[(ci, r, cl)];
                y[(ci, 2 * r, 2 * cl)] = v;
                y[(ci, 2 * r, 2 * cl + 1)] = v;
                y[(ci, 2 * r + 1, 2 * cl)] = v;
                y[(ci, 2 * r + 1, 2 * cl + 1)] = v;
            }
        }
    }
    y
}

fn upsample2_backward<T: Real>(dy: &Array3<T>) -> Array3<T> {
    let (c, h2, w2) = dy.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = Array3::<T>::zeros((c, h, w));
    for ci in 0..c {
        for r in 0..h {
            for cl in 0..w {
                dx[(ci, r, cl)] = dy[(ci, 2 * r, 2 * cl)]
                    + dy[(ci, 2 * r, 2 * cl + 1)]
                    + dy[(ci, 2 * r + 1, 2 * cl)]
                    + dy[(ci, 2 * r + 1, 2 * cl + 1)];
            }
        }
    }
    dx
}

/// Add a per-channel bias vector across the spatial grid.
fn add_channel_bias<T: Real>(x: &mut Array3<T>, bias: &[T]) {
    for (ci, mut plane) in x.outer_iter_mut().enumerate() {
        let b = bias[ci];
        plane.mapv_inplace(|v| v + b);
    }
}

struct EncCache<T> {
    x_in: Array3<T>,
    pre1: Array3<T>,
    act1: Array3<T>,
    pre2: Array3<T>,
}

struct DecCache<T> {
    upsampled: Array3<T>,
    pre1: Array3<T>,
    act1: Array3<T>,
    pre2: Array3<T>,
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardCache<T> {
    feat: Vec<T>,
    enc: Vec<EncCache<T>>,
    dec: Vec<DecCache<T>>,
    head_in: Array3<T>,
}

/// The denoiser proper: config + frozen time embedding + parameters.
pub struct DenoiserNet<T: Real> {
    cfg: NetConfig,
    emb: TimeEmbedding<T>,
    pub params: NetParams<T>,
}

impl<T: Real> DenoiserNet<T> {
    pub fn new(cfg: NetConfig) -> Self {
        assert!(!cfg.channels.is_empty(), "need at least one level");
        let emb = TimeEmbedding::new(cfg.time_features, cfg.time_scale, cfg.seed);
        let params = NetParams::init(&cfg);
        Self { cfg, emb, params }
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn n_params(&self) -> usize {
        self.params.n_params()
    }

    /// Deterministic forward pass producing the unit-scale noise prediction.
    pub fn forward(&self, x: &Image2D<T>, t: T) -> Image2D<T> {
        let (out, _) = self.forward_cached(x, t);
        let (_, h, w) = out.dim();
        let (vec, _) = out.into_raw_vec_and_offset();
        Image2D::from_vec(h, w, vec).expect("net output is finite")
    }

    /// Forward pass that keeps the tensors needed by [`Self::backward`].
    pub fn forward_cached(&self, x: &Image2D<T>, t: T) -> (Array3<T>, ForwardCache<T>) {
        let levels = self.cfg.channels.len();
        let (h0, w0) = (x.rows(), x.cols());
        let down = 1usize << (levels - 1);
        assert!(
            h0 % down == 0 && w0 % down == 0,
            "image {h0}x{w0} not divisible by the {levels}-level downsampling factor {down}"
        );
        let feat = self.emb.features(t);
        let feat_arr = Array1::from_vec(feat.clone());

        let mut enc_caches = Vec::with_capacity(levels);
        let mut skips: Vec<Array3<T>> = Vec::with_capacity(levels);
        let mut cur = Array3::from_shape_vec((1, h0, w0), x.as_slice().to_vec()).expect("shape");
        for l in 0..levels {
            let x_in = cur;
            let mut pre1 = conv_forward(&self.params.enc_in[l], &x_in);
            let tb = self.params.enc_time[l].w.dot(&feat_arr) + &self.params.enc_time[l].b;
            add_channel_bias(&mut pre1, tb.as_slice().expect("standard layout"));
            let act1 = pre1.mapv(silu);
            let pre2 = conv_forward(&self.params.enc_out[l], &act1);
            let act2 = pre2.mapv(silu);
            skips.push(act2.clone());
            enc_caches.push(EncCache {
                x_in,
                pre1,
                act1,
                pre2,
            });
            cur = if l + 1 < levels {
                avgpool2(&skips[l])
            } else {
                skips[l].clone()
            };
        }

        let mut dec_caches: Vec<DecCache<T>> = (0..levels.saturating_sub(1))
            .map(|_| DecCache {
                upsampled: Array3::zeros((0, 0, 0)),
                pre1: Array3::zeros((0, 0, 0)),
                act1: Array3::zeros((0, 0, 0)),
                pre2: Array3::zeros((0, 0, 0)),
            })
            .collect();
        for l in (0..levels.saturating_sub(1)).rev() {
            let upsampled = upsample2(&cur);
            let q = conv_forward(&self.params.dec_in[l], &upsampled);
            let mut pre1 = q + &skips[l];
            let tb = self.params.dec_time[l].w.dot(&feat_arr) + &self.params.dec_time[l].b;
            add_channel_bias(&mut pre1, tb.as_slice().expect("standard layout"));
            let act1 = pre1.mapv(silu);
            let pre2 = conv_forward(&self.params.dec_out[l], &act1);
            let act2 = pre2.mapv(silu);
            dec_caches[l] = DecCache {
                upsampled,
                pre1,
                act1,
                pre2,
            };
            cur = act2;
        }

        let head_in = cur;
        let out = conv_forward(&self.params.head, &head_in);
        (
            out,
            ForwardCache {
                feat,
                enc: enc_caches,
                dec: dec_caches,
                head_in,
            },
        )
    }

    /// Parameter gradients for an upstream gradient `dout` on the output.
    pub fn backward(&self, cache: &ForwardCache<T>, dout: &Array3<T>) -> NetParams<T> {
        let levels = self.cfg.channels.len();
        let mut grads = NetParams::zeros(&self.cfg);
        let feat = Array1::from_vec(cache.feat.clone());

        let (dhead_in, dw, db) = conv_backward(&self.params.head, &cache.head_in, dout);
        grads.head.w = dw;
        grads.head.b = db;

        // skip-connection gradients surface while walking the decoder and
        // are consumed later by the encoder walk
        let mut dskips: Vec<Option<Array3<T>>> = vec![None; levels];
        let mut dcur = dhead_in;
        for l in 0..levels.saturating_sub(1) {
            let dc = &cache.dec[l];
            // act2 = silu(pre2)
            let dpre2 = &dcur * &dc.pre2.mapv(silu_grad);
            let (dact1, dw2, db2) = conv_backward(&self.params.dec_out[l], &dc.act1, &dpre2);
            grads.dec_out[l].w = dw2;
            grads.dec_out[l].b = db2;
            let dpre1 = dact1 * dc.pre1.mapv(silu_grad);
            // time bias: channel-summed gradient
            let c = dpre1.dim().0;
            let mut dtb = Array1::<T>::zeros(c);
            for (ci, plane) in dpre1.outer_iter().enumerate() {
                dtb[ci] = plane.sum();
            }
            grads.dec_time[l].w = outer(&dtb, &feat);
            grads.dec_time[l].b = dtb;
            // pre1 = conv_dec_in(upsampled) + skip
            dskips[l] = Some(dpre1.clone());
            let (dupsampled, dw1, db1) = conv_backward(&self.params.dec_in[l], &dc.upsampled, &dpre1);
            grads.dec_in[l].w = dw1;
            grads.dec_in[l].b = db1;
            dcur = upsample2_backward(&dupsampled);
        }

        // dcur now carries the gradient arriving at the bottleneck output
        for l in (0..levels).rev() {
            let ec = &cache.enc[l];
            let (_, h, w) = ec.pre2.dim();
            let mut dact2 = if l == levels - 1 {
                dcur.clone()
            } else {
                avgpool2_backward(&dcur, h, w)
            };
            if let Some(ds) = dskips[l].take() {
                dact2 += &ds;
            }
            let dpre2 = dact2 * ec.pre2.mapv(silu_grad);
            let (dact1, dw2, db2) = conv_backward(&self.params.enc_out[l], &ec.act1, &dpre2);
            grads.enc_out[l].w = dw2;
            grads.enc_out[l].b = db2;
            let dpre1 = dact1 * ec.pre1.mapv(silu_grad);
            let c = dpre1.dim().0;
            let mut dtb = Array1::<T>::zeros(c);
            for (ci, plane) in dpre1.outer_iter().enumerate() {
                dtb[ci] = plane.sum();
            }
            grads.enc_time[l].w = outer(&dtb, &feat);
            grads.enc_time[l].b = dtb;
            let (dx_in, dw1, db1) = conv_backward(&self.params.enc_in[l], &ec.x_in, &dpre1);
            grads.enc_in[l].w = dw1;
            grads.enc_in[l].b = db1;
            dcur = dx_in;
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_cfg() -> NetConfig {
        NetConfig {
            channels: vec![3, 5],
            time_features: 4,
            time_scale: 8.0,
            seed: 13,
        }
    }

    #[test]
    fn forward_is_shape_preserving_and_deterministic() {
        let net = DenoiserNet::<f64>::new(tiny_cfg());
        let mut rng = crate::rng::substream(1, "test/netfwd");
        let x = crate::rng::normal_image::<f64>(8, 8, &mut rng);
        let y1 = net.forward(&x, 0.4);
        let y2 = net.forward(&x, 0.4);
        assert_eq!(y1.rows(), 8);
        assert_eq!(y1.cols(), 8);
        assert_eq!(y1, y2);
        let net_again = DenoiserNet::<f64>::new(tiny_cfg());
        assert_eq!(y1, net_again.forward(&x, 0.4));
    }

    #[test]
    fn fresh_net_predicts_zero() {
        // the zero-initialized head forces a zero field at init
        let net = DenoiserNet::<f64>::new(tiny_cfg());
        let mut rng = crate::rng::substream(2, "test/netzero");
        let x = crate::rng::normal_image::<f64>(8, 8, &mut rng);
        assert!(net.forward(&x, 0.8).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flat_roundtrip_preserves_params() {
        let net = DenoiserNet::<f32>::new(tiny_cfg());
        let flat = net.params.to_flat();
        let mut other = DenoiserNet::<f32>::new(NetConfig {
            seed: 999,
            ..tiny_cfg()
        });
        other.params.load_flat(&flat).unwrap();
        assert_eq!(other.params.to_flat(), flat);
    }

    #[test]
    fn load_flat_rejects_wrong_length() {
        let mut net = DenoiserNet::<f32>::new(tiny_cfg());
        assert!(net.params.load_flat(&[0.0; 7]).is_err());
    }

    /// Finite-difference check of every parameter gradient on a micro net:
    /// loss = mean of out², perturbing parameters one by one.
    #[test]
    fn parameter_gradients_match_finite_differences() {
        let cfg = NetConfig {
            channels: vec![2, 3],
            time_features: 3,
            time_scale: 4.0,
            seed: 77,
        };
        let mut net = DenoiserNet::<f64>::new(cfg);
        // nonzero head so the loss actually depends on everything
        let mut rng = crate::rng::substream(3, "test/fdgrad");
        net.params.head.w.mapv_inplace(|_| standard_normal::<f64>(&mut rng) * 0.3);
        let x = crate::rng::normal_image::<f64>(4, 4, &mut rng);
        let t = 0.6;

        let loss_of = |net: &DenoiserNet<f64>| -> f64 {
            let y = net.forward(&x, t);
            y.iter().map(|&v| v * v).sum::<f64>() / y.len() as f64
        };

        let (out, cache) = net.forward_cached(&x, t);
        let n = out.len() as f64;
        let dout = out.mapv(|v| 2.0 * v / n);
        let grads = net.backward(&cache, &dout);
        let flat_grads = grads.to_flat();

        let base = net.params.to_flat();
        let h = 1e-6;
        // probe a deterministic spread of parameters rather than all of them
        let stride = (base.len() / 97).max(1);
        for i in (0..base.len()).step_by(stride) {
            let mut plus = base.clone();
            plus[i] += h;
            net.params.load_flat(&plus).unwrap();
            let lp = loss_of(&net);
            let mut minus = base.clone();
            minus[i] -= h;
            net.params.load_flat(&minus).unwrap();
            let lm = loss_of(&net);
            let fd = (lp - lm) / (2.0 * h);
            let an = flat_grads[i];
            assert!(
                (fd - an).abs() <= 1e-3 * fd.abs().max(an.abs()).max(1e-4),
                "param {i}: fd {fd} vs analytic {an}"
            );
        }
        net.params.load_flat(&base).unwrap();
    }
}
