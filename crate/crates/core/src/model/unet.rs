//! One cascade: a 2-level prompt-guided UNet with feature carryover.

use candle_core::{DType, Device, Tensor};

use super::blocks::{FilmBlock, PromptBlock, TcaBlock};
use super::layers::{leaky_relu, upsample2, Conv2Plus1d, Conv2d};
use super::params::Init;
use crate::error::{Error, Result};

/// Feature maps at the three attention positions (encoder, bottleneck,
/// decoder), handed from one cascade to the next.
#[derive(Debug, Clone)]
pub struct CascadeFeatures {
    pub slots: Vec<Tensor>,
}

impl CascadeFeatures {
    pub const POSITIONS: usize = 3;

    /// Zero features for the first cascade. `h`, `w` are the even working size.
    pub fn zeros(b: usize, t: usize, c: usize, h: usize, w: usize, dtype: DType) -> Result<Self> {
        let full = Tensor::zeros((b, t, c, h, w), dtype, &Device::Cpu)?;
        let half = Tensor::zeros((b, t, c, h / 2, w / 2), dtype, &Device::Cpu)?;
        Ok(CascadeFeatures {
            slots: vec![full.clone(), half, full],
        })
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.slots.iter().map(|s| s.dims().to_vec()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct UnetOutput {
    /// `[B, T, 2, H, W]`
    pub z: Tensor,
    pub features: CascadeFeatures,
    /// Concatenated FiLM prompt updates, `[B, 3C]`.
    pub p_u: Tensor,
    /// Spatial prompt update, `[B, C]`.
    pub p_s: Tensor,
}

#[derive(Debug, Clone)]
pub struct UnetBlock {
    pub input: Conv2d,
    pub enc_film: FilmBlock,
    pub enc_tca: TcaBlock,
    pub enc_conv: Conv2Plus1d,
    pub down: Conv2Plus1d,
    pub mid_film: FilmBlock,
    pub mid_tca: TcaBlock,
    pub mid_conv: Conv2Plus1d,
    pub up: Conv2Plus1d,
    pub dec_prompt: PromptBlock,
    pub dec_film: FilmBlock,
    pub dec_tca: TcaBlock,
    pub dec_conv: Conv2Plus1d,
    pub output: Conv2d,
    pub channels: usize,
}

/// Number of prompt vectors of width `C` one block contributes to the
/// classifier input (3 FiLM updates and 1 spatial prompt).
pub const PROMPTS_PER_BLOCK: usize = 4;

/// Normalized input and the per-sample standard deviation `[B, 1]`.
fn zscore(x: &Tensor) -> Result<(Tensor, Tensor)> {
    let b = x.dim(0)?;
    let flat = x.reshape((b, ()))?;
    let mu = flat.mean_keepdim(1)?;
    let centered = flat.broadcast_sub(&mu)?;
    let sigma = (centered.sqr()?.mean_keepdim(1)? + 1e-12)?.sqrt()?;
    let normed = centered.broadcast_div(&sigma)?.reshape(x.dims())?;
    Ok((normed, sigma))
}

/// Reflect-pad the last two axes by one trailing sample where odd.
fn pad_even(x: &Tensor) -> Result<Tensor> {
    let r = x.rank();
    let (h, w) = (x.dim(r - 2)?, x.dim(r - 1)?);
    let mut y = x.clone();
    if h % 2 == 1 {
        y = Tensor::cat(&[y.clone(), y.narrow(r - 2, h - 2, 1)?], r - 2)?;
    }
    if w % 2 == 1 {
        y = Tensor::cat(&[y.clone(), y.narrow(r - 1, w - 2, 1)?], r - 1)?;
    }
    Ok(y)
}

impl UnetBlock {
    pub fn new(init: &mut Init, c: usize) -> Result<Self> {
        Ok(UnetBlock {
            input: Conv2d::new(&mut init.sub("input"), 2, c, 3, 1)?,
            enc_film: FilmBlock::new(&mut init.sub("enc.film"), c)?,
            enc_tca: TcaBlock::new(&mut init.sub("enc.tca"), c)?,
            enc_conv: Conv2Plus1d::new(&mut init.sub("enc.conv"), c, 1)?,
            down: Conv2Plus1d::new(&mut init.sub("down"), c, 2)?,
            mid_film: FilmBlock::new(&mut init.sub("mid.film"), c)?,
            mid_tca: TcaBlock::new(&mut init.sub("mid.tca"), c)?,
            mid_conv: Conv2Plus1d::new(&mut init.sub("mid.conv"), c, 1)?,
            up: Conv2Plus1d::new(&mut init.sub("up"), c, 1)?,
            dec_prompt: PromptBlock::new(&mut init.sub("dec.prompt"), c)?,
            dec_film: FilmBlock::new(&mut init.sub("dec.film"), c)?,
            dec_tca: TcaBlock::new(&mut init.sub("dec.tca"), c)?,
            dec_conv: Conv2Plus1d::new(&mut init.sub("dec.conv"), c, 1)?,
            output: Conv2d::new(&mut init.sub("output"), c, 2, 3, 1)?,
            channels: c,
        })
    }

    /// Working (even) spatial size for an `h × w` input.
    pub fn working_size(h: usize, w: usize) -> (usize, usize) {
        (h + h % 2, w + w % 2)
    }

    /// `x` is `[B, T, 2, H, W]`; `prev` are the previous cascade's features
    /// (zeros for the first cascade).
    pub fn forward(&self, x: &Tensor, p_u: &Tensor, prev: &CascadeFeatures) -> Result<UnetOutput> {
        let (b, _, two, h, w) = x.dims5()?;
        if two != 2 {
            return Err(Error::shape(format!("expected 2 channels, got {two}")));
        }
        if h < 2 || w < 2 {
            return Err(Error::shape("spatial size too small for the UNet"));
        }
        let (normed, sigma) = zscore(x)?;
        let xin = pad_even(&normed)?;
        let h0 = leaky_relu(&self.input.forward_seq(&xin)?)?;

        let (f1, u1) = self.enc_film.forward(&h0, p_u)?;
        let e = self.enc_conv.forward(&self.enc_tca.forward(&f1, &prev.slots[0])?)?;
        let d = self.down.forward(&e)?;
        let (f2, u2) = self.mid_film.forward(&d, p_u)?;
        let m = self.mid_conv.forward(&self.mid_tca.forward(&f2, &prev.slots[1])?)?;
        let u = self.up.forward(&upsample2(&m)?)?;
        let (p, p_s) = self.dec_prompt.forward(&u, &e)?;
        let (f3, u3) = self.dec_film.forward(&p, p_u)?;
        let dd = self.dec_conv.forward(&self.dec_tca.forward(&f3, &prev.slots[2])?)?;

        let out = self.output.forward_seq(&dd)?.narrow(3, 0, h)?.narrow(4, 0, w)?;
        let z = (x + out.broadcast_mul(&sigma.reshape((b, 1, 1, 1, 1))?)?)?;
        Ok(UnetOutput {
            z,
            features: CascadeFeatures {
                slots: vec![f1, f2, f3],
            },
            p_u: Tensor::cat(&[u1, u2, u3], 1)?,
            p_s,
        })
    }
}
