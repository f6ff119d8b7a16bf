//! Linear maps and convolutions on `[B, T, C, H, W]` feature maps.
//!
//! Spatial convolutions gather the shifted taps into one matrix and use a
//! single matmul; this is markedly faster on CPU than the generic conv
//! kernels for the small channel counts used here, in both directions.

use candle_core::{Tensor, D};

use super::params::Init;
use crate::error::Result;

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn leaky_relu(x: &Tensor) -> Result<Tensor> {
    Ok(x.maximum(&(x * LEAKY_SLOPE)?)?)
}

/// Softmax over the last axis; the shift is detached since softmax ignores it.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let shift = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&shift)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

#[derive(Debug, Clone)]
pub struct Linear {
    /// `[out, in]`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(init: &mut Init, in_dim: usize, out_dim: usize) -> Result<Self> {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Ok(Linear {
            weight: init.uniform("weight", &[out_dim, in_dim], bound)?,
            bias: init.uniform("bias", &[out_dim], bound)?,
        })
    }

    pub fn with_bias(init: &mut Init, in_dim: usize, out_dim: usize, bias: f32) -> Result<Self> {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Ok(Linear {
            weight: init.uniform("weight", &[out_dim, in_dim], bound)?,
            bias: init.constant("bias", &[out_dim], bias)?,
        })
    }

    /// Applies to the last axis of any-rank input.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.broadcast_matmul(&self.weight.t()?)?;
        Ok(y.broadcast_add(&self.bias)?)
    }
}

/// `k × k` convolution with zero padding `k/2` and stride 1 or 2 on
/// `[N, C, H, W]`. Weights are stored `[out, k, k, in]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub k: usize,
    pub stride: usize,
}

fn every_other(x: &Tensor, axis: usize) -> Result<Tensor> {
    let mut dims = x.dims().to_vec();
    let n = dims[axis] / 2;
    dims[axis] = n;
    dims.insert(axis + 1, 2);
    let y = x.contiguous()?.reshape(dims)?.narrow(axis + 1, 0, 1)?;
    Ok(y.squeeze(axis + 1)?)
}

impl Conv2d {
    pub fn new(init: &mut Init, c_in: usize, c_out: usize, k: usize, stride: usize) -> Result<Self> {
        let bound = 1.0 / ((c_in * k * k) as f64).sqrt();
        Ok(Conv2d {
            weight: init.uniform("weight", &[c_out, k, k, c_in], bound)?,
            bias: init.uniform("bias", &[c_out], bound)?,
            k,
            stride,
        })
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.stride), w.div_ceil(self.stride))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        let co = self.weight.dim(0)?;
        let (ho, wo) = self.out_size(h, w);
        let kk = self.k * self.k;
        let wmat = self.weight.reshape((co, kk * c))?;
        let cols = if self.k == 1 && self.stride == 1 {
            x.reshape((n, c, h * w))?
        } else {
            let p = self.k / 2;
            let (eh, ew) = if self.stride == 2 { (h % 2, w % 2) } else { (0, 0) };
            let xp = x.pad_with_zeros(2, p, p + eh)?.pad_with_zeros(3, p, p + ew)?;
            let mut taps = Vec::with_capacity(kk);
            for dy in 0..self.k {
                for dx in 0..self.k {
                    let t = xp.narrow(2, dy, ho * self.stride)?.narrow(3, dx, wo * self.stride)?;
                    let t = if self.stride == 2 { every_other(&every_other(&t, 2)?, 3)? } else { t };
                    taps.push(t);
                }
            }
            Tensor::cat(&taps, 1)?.reshape((n, kk * c, ho * wo))?
        };
        let y = wmat.broadcast_matmul(&cols)?;
        let y = y.broadcast_add(&self.bias.reshape((1, co, 1))?)?;
        Ok(y.reshape((n, co, ho, wo))?)
    }

    /// Apply frame-wise to `[B, T, C, H, W]`.
    pub fn forward_seq(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, c, h, w) = x.dims5()?;
        let y = self.forward(&x.reshape((b * t, c, h, w))?)?;
        let (_, co, ho, wo) = y.dims4()?;
        Ok(y.reshape((b, t, co, ho, wo))?)
    }
}

/// Length-3 temporal convolution with circular padding, `C → C`.
/// Weights `[out, 3·in]` act on (previous, current, next) frames.
#[derive(Debug, Clone)]
pub struct TemporalConv {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl TemporalConv {
    pub fn new(init: &mut Init, c: usize) -> Result<Self> {
        let bound = 1.0 / ((3 * c) as f64).sqrt();
        Ok(TemporalConv {
            weight: init.uniform("weight", &[c, 3 * c], bound)?,
            bias: init.uniform("bias", &[c], bound)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, c, h, w) = x.dims5()?;
        let (prev, next) = if t == 1 {
            (x.clone(), x.clone())
        } else {
            (
                Tensor::cat(&[x.narrow(1, t - 1, 1)?, x.narrow(1, 0, t - 1)?], 1)?,
                Tensor::cat(&[x.narrow(1, 1, t - 1)?, x.narrow(1, 0, 1)?], 1)?,
            )
        };
        let stacked = Tensor::cat(&[prev, x.clone(), next], 2)?.reshape((b * t, 3 * c, h * w))?;
        let co = self.weight.dim(0)?;
        let y = self.weight.broadcast_matmul(&stacked)?;
        let y = y.broadcast_add(&self.bias.reshape((1, co, 1))?)?;
        Ok(y.reshape((b, t, co, h, w))?)
    }
}

/// Spatial 3×3 convolution, LeakyReLU, then circular temporal convolution.
#[derive(Debug, Clone)]
pub struct Conv2Plus1d {
    pub spatial: Conv2d,
    pub temporal: TemporalConv,
}

impl Conv2Plus1d {
    pub fn new(init: &mut Init, c: usize, stride: usize) -> Result<Self> {
        Ok(Conv2Plus1d {
            spatial: Conv2d::new(&mut init.sub("spatial"), c, c, 3, stride)?,
            temporal: TemporalConv::new(&mut init.sub("temporal"), c)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let s = leaky_relu(&self.spatial.forward_seq(x)?)?;
        self.temporal.forward(&s)
    }
}

/// Nearest-neighbour ×2 upsampling of the last two axes.
pub fn upsample2(x: &Tensor) -> Result<Tensor> {
    let dims = x.dims().to_vec();
    let r = dims.len();
    let (h, w) = (dims[r - 2], dims[r - 1]);
    let mut d1 = dims.clone();
    d1.insert(r - 1, 2);
    let y = x.unsqueeze(r - 1)?.broadcast_as(d1)?;
    let mut d2 = dims.clone();
    d2[r - 2] = 2 * h;
    let y = y.contiguous()?.reshape(d2.clone())?;
    let mut d3 = d2.clone();
    d3.push(2);
    let y = y.unsqueeze(r)?.broadcast_as(d3)?;
    let mut d4 = d2;
    d4[r - 1] = 2 * w;
    Ok(y.contiguous()?.reshape(d4)?)
}
