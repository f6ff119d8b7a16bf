//! Prompt pools, FiLM modulation, temporal-channel attention and the
//! spatial prompt block.

use candle_core::{Device, Tensor};

use super::layers::{leaky_relu, softmax_last, Conv2Plus1d, Conv2d, Linear};
use super::params::Init;
use crate::error::{Error, Result};

/// Side length at which spatial prompts are stored.
pub const PROMPT_SIZE: usize = 16;

/// Learnable trajectory (`[3, C]`) and acceleration (`[6, C]`) embeddings
/// combined by a two-layer MLP.
#[derive(Debug, Clone)]
pub struct PromptPools {
    pub trajectory: Tensor,
    pub accel: Tensor,
    pub mlp1: Linear,
    pub mlp2: Linear,
}

impl PromptPools {
    pub fn new(init: &mut Init, c: usize) -> Result<Self> {
        Ok(PromptPools {
            trajectory: init.uniform("trajectory", &[3, c], 1.0)?,
            accel: init.uniform("accel", &[6, c], 1.0)?,
            mlp1: Linear::new(&mut init.sub("mlp1"), 2 * c, c)?,
            mlp2: Linear::new(&mut init.sub("mlp2"), c, c)?,
        })
    }

    /// `P_U = MLP([K_m, R_n])`, shape `[batch, C]`.
    pub fn combine(&self, m: usize, n: usize, batch: usize) -> Result<Tensor> {
        if m >= 3 || n >= 6 {
            return Err(Error::invalid(format!(
                "prompt indices out of range: trajectory {m} (of 3), acceleration {n} (of 6)"
            )));
        }
        let h = Tensor::cat(&[self.trajectory.narrow(0, m, 1)?, self.accel.narrow(0, n, 1)?], 1)?;
        let p = self.mlp2.forward(&leaky_relu(&self.mlp1.forward(&h)?)?)?;
        let c = p.dim(1)?;
        Ok(p.broadcast_as((batch, c))?.contiguous()?)
    }
}

/// Feature-wise modulation from pooled features and the undersampling prompt.
#[derive(Debug, Clone)]
pub struct FilmBlock {
    pub scale: Linear,
    pub shift: Linear,
}

impl FilmBlock {
    pub fn new(init: &mut Init, c: usize) -> Result<Self> {
        Ok(FilmBlock {
            scale: Linear::with_bias(&mut init.sub("scale"), 2 * c, c, 1.0)?,
            shift: Linear::with_bias(&mut init.sub("shift"), 2 * c, c, 0.0)?,
        })
    }

    /// Returns the modulated features and the updated prompt `[B, C]`.
    pub fn forward(&self, f: &Tensor, p_u: &Tensor) -> Result<(Tensor, Tensor)> {
        let (b, t, c, _, _) = f.dims5()?;
        let g = f.mean(4)?.mean(3)?;
        let p = p_u.unsqueeze(1)?.broadcast_as((b, t, c))?;
        let h = Tensor::cat(&[g, p.contiguous()?], 2)?;
        let w_p = self.scale.forward(&h)?;
        let b_p = self.shift.forward(&h)?;
        let out = f
            .broadcast_mul(&w_p.unsqueeze(3)?.unsqueeze(4)?)?
            .broadcast_add(&b_p.unsqueeze(3)?.unsqueeze(4)?)?;
        let updated = (w_p + b_p)?.mean(1)?;
        Ok((out, updated))
    }
}

/// Temporal attention over whole frames followed by squeeze-excitation.
#[derive(Debug, Clone)]
pub struct TcaBlock {
    pub conv_cur: Conv2Plus1d,
    pub conv_prev: Conv2Plus1d,
    pub se1: Linear,
    pub se2: Linear,
}

impl TcaBlock {
    pub fn new(init: &mut Init, c: usize) -> Result<Self> {
        let hidden = (c / 16).max(1);
        Ok(TcaBlock {
            conv_cur: Conv2Plus1d::new(&mut init.sub("conv_cur"), c, 1)?,
            conv_prev: Conv2Plus1d::new(&mut init.sub("conv_prev"), c, 1)?,
            se1: Linear::new(&mut init.sub("se1"), c, hidden)?,
            se2: Linear::new(&mut init.sub("se2"), hidden, c)?,
        })
    }

    pub fn forward(&self, cur: &Tensor, prev: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with_attention(cur, prev)?.0)
    }

    /// Also returns the `[B, T, T]` attention matrix.
    pub fn forward_with_attention(&self, cur: &Tensor, prev: &Tensor) -> Result<(Tensor, Tensor)> {
        if cur.dims() != prev.dims() {
            return Err(Error::shape(format!(
                "carried features {:?} do not match {:?}",
                prev.dims(),
                cur.dims()
            )));
        }
        let tmp = (self.conv_cur.forward(cur)? + self.conv_prev.forward(prev)?)?;
        let (b, t, c, h, w) = tmp.dims5()?;
        let flat = tmp.reshape((b, t, c * h * w))?;
        let scores = (flat.matmul(&flat.t()?)? / ((c * h * w) as f64).sqrt())?;
        let att = softmax_last(&scores)?;
        let mixed = att.matmul(&flat)?.reshape((b, t, c, h, w))?;
        let pooled = mixed.mean(4)?.mean(3)?.mean(1)?;
        let gate = candle_nn::ops::sigmoid(&self.se2.forward(&self.se1.forward(&pooled)?.relu()?)?)?;
        let out = mixed.broadcast_mul(&gate.reshape((b, 1, c, 1, 1))?)?;
        Ok((out, att))
    }
}

/// Bilinear interpolation matrix `[n_out, n_in]` (half-pixel centres).
pub fn bilinear_matrix(n_in: usize, n_out: usize) -> Result<Tensor> {
    let mut m = vec![0f32; n_out * n_in];
    let scale = n_in as f64 / n_out as f64;
    for i in 0..n_out {
        let src = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        let frac = (src - i0 as f64) as f32;
        m[i * n_in + i0] += 1.0 - frac;
        m[i * n_in + i1] += frac;
    }
    Ok(Tensor::from_vec(m, (n_out, n_in), &Device::Cpu)?)
}

/// Concatenates a learned spatial prompt with the features; one branch
/// pools it into a prompt vector, the other fuses it with the skip path.
#[derive(Debug, Clone)]
pub struct PromptBlock {
    /// `[1, C, 16, 16]`
    pub prompt: Tensor,
    pub pool: Linear,
    pub reduce: Conv2d,
    pub fuse: Conv2d,
}

impl PromptBlock {
    pub fn new(init: &mut Init, c: usize) -> Result<Self> {
        Ok(PromptBlock {
            prompt: init.uniform("prompt", &[1, c, PROMPT_SIZE, PROMPT_SIZE], 1.0)?,
            pool: Linear::new(&mut init.sub("pool"), 2 * c, c)?,
            reduce: Conv2d::new(&mut init.sub("reduce"), 2 * c, c, 1, 1)?,
            fuse: Conv2d::new(&mut init.sub("fuse"), 2 * c, c, 3, 1)?,
        })
    }

    /// `P_S` resized to `h × w`, shape `[C, h, w]`.
    pub fn resized_prompt(&self, h: usize, w: usize) -> Result<Tensor> {
        let (_, c, ph, pw) = self.prompt.dims4()?;
        let ry = bilinear_matrix(ph, h)?.to_dtype(self.prompt.dtype())?;
        let rx = bilinear_matrix(pw, w)?.to_dtype(self.prompt.dtype())?;
        let p = self.prompt.reshape((c, ph, pw))?;
        Ok(ry.broadcast_matmul(&p)?.broadcast_matmul(&rx.t()?)?)
    }

    /// Returns the fused features and the updated spatial prompt `[B, C]`.
    pub fn forward(&self, f: &Tensor, skip: &Tensor) -> Result<(Tensor, Tensor)> {
        let (b, t, c, h, w) = f.dims5()?;
        if skip.dims() != f.dims() {
            return Err(Error::shape(format!("skip {:?} does not match {:?}", skip.dims(), f.dims())));
        }
        let p = self.resized_prompt(h, w)?.reshape((1, 1, c, h, w))?.broadcast_as((b, t, c, h, w))?;
        let cat = Tensor::cat(&[f.clone(), p.contiguous()?], 2)?;
        let pooled = cat.mean(4)?.mean(3)?.mean(1)?;
        let p_s = self.pool.forward(&pooled)?;
        let reduced = leaky_relu(&self.reduce.forward_seq(&cat)?)?;
        let fused = self.fuse.forward_seq(&Tensor::cat(&[reduced, skip.clone()], 2)?)?;
        Ok((leaky_relu(&fused)?, p_s))
    }
}
