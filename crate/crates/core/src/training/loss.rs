//! Reconstruction and classification losses.

use candle_core::{DType, Device, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::classical::metrics::{gaussian_taps, SSIM_K1, SSIM_K2, SSIM_WINDOW};
use crate::error::{Error, Result};

/// Keeps the magnitude differentiable at zero.
const MAG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_l1: f64,
    pub lambda_ssim: f64,
    pub lambda_cls: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_l1: 0.16,
            lambda_ssim: 0.84,
            lambda_cls: 0.025,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_l1", self.lambda_l1),
            ("lambda_ssim", self.lambda_ssim),
            ("lambda_cls", self.lambda_cls),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// `|x|` of a `[B, T, 2, H, W]` tensor as `[B·T, H, W]`.
pub fn magnitude(x: &Tensor) -> Result<Tensor> {
    let (b, t, two, h, w) = x.dims5()?;
    if two != 2 {
        return Err(Error::shape(format!("expected a real/imaginary axis of 2, got {two}")));
    }
    let sq = x.sqr()?.sum(2)?;
    Ok((sq + MAG_EPS)?.sqrt()?.reshape((b * t, h, w))?)
}

/// Banded `[n − 10, n]` matrix applying the SSIM window along one axis.
fn window_matrix(n: usize, dtype: DType) -> Result<Tensor> {
    if n < SSIM_WINDOW {
        return Err(Error::invalid(format!("SSIM needs at least {SSIM_WINDOW} pixels per axis, got {n}")));
    }
    let taps = gaussian_taps();
    let o = n + 1 - SSIM_WINDOW;
    let mut m = vec![0.0; o * n];
    for i in 0..o {
        for (k, &g) in taps.iter().enumerate() {
            m[i * n + i + k] = g;
        }
    }
    Ok(Tensor::from_vec(m, (o, n), &Device::Cpu)?.to_dtype(dtype)?)
}

/// Mean SSIM over frames of `[N, H, W]` magnitudes, each frame with its own
/// dynamic range `max gnd`. Differentiable in `rec`.
pub fn ssim_mean(rec: &Tensor, gnd: &Tensor) -> Result<Tensor> {
    let (n, h, w) = rec.dims3()?;
    if gnd.dims() != rec.dims() {
        return Err(Error::shape(format!("rec {:?} vs gnd {:?}", rec.dims(), gnd.dims())));
    }
    let dtype = rec.dtype();
    let gh = window_matrix(h, dtype)?;
    let gwt = window_matrix(w, dtype)?.t()?;
    let blur = |x: &Tensor| -> Result<Tensor> { Ok(gh.broadcast_matmul(x)?.broadcast_matmul(&gwt)?) };
    let gnd = gnd.detach();
    let range = gnd.abs()?.flatten_from(1)?.max_keepdim(1)?.reshape((n, 1, 1))?;
    let c1 = (range.clone() * SSIM_K1)?.sqr()?;
    let c2 = (range * SSIM_K2)?.sqr()?;
    let mx = blur(rec)?;
    let my = blur(&gnd)?;
    let vx = (blur(&rec.sqr()?)? - mx.sqr()?)?;
    let vy = (blur(&gnd.sqr()?)? - my.sqr()?)?;
    let cxy = (blur(&(rec * &gnd)?)? - (&mx * &my)?)?;
    let num = ((&mx * &my)? * 2.0)?
        .broadcast_add(&c1)?
        .mul(&(cxy * 2.0)?.broadcast_add(&c2)?)?;
    let den = (mx.sqr()? + my.sqr()?)?
        .broadcast_add(&c1)?
        .mul(&(vx + vy)?.broadcast_add(&c2)?)?;
    Ok((num / den)?.mean_all()?)
}

/// L1 on the real/imaginary representation.
pub fn l1_term(rec: &Tensor, gnd: &Tensor) -> Result<Tensor> {
    if rec.dims() != gnd.dims() {
        return Err(Error::shape(format!("rec {:?} vs gnd {:?}", rec.dims(), gnd.dims())));
    }
    Ok((rec - gnd)?.abs()?.mean_all()?)
}

/// `λ_l1·mean|rec − gnd| + λ_ssim·(1 − SSIM(|rec|, |gnd|))` on
/// `[B, T, 2, H, W]` tensors.
pub fn loss_rec(rec: &Tensor, gnd: &Tensor, w: &LossWeights) -> Result<Tensor> {
    let l1 = l1_term(rec, gnd)?;
    let ssim = ssim_mean(&magnitude(rec)?, &magnitude(gnd)?)?;
    Ok(((l1 * w.lambda_l1)? + ((ssim.neg()? + 1.0)? * w.lambda_ssim)?)?)
}

/// Cross-entropy of `[B, K]` logits against class `target`, in f64.
pub fn cross_entropy(logits: &Tensor, target: usize) -> Result<Tensor> {
    let (_, k) = logits.dims2()?;
    if target >= k {
        return Err(Error::invalid(format!("class {target} out of range for {k} logits")));
    }
    let x = logits.to_dtype(DType::F64)?;
    let shift = x.max_keepdim(D::Minus1)?.detach();
    let z = x.broadcast_sub(&shift)?;
    let lse = z.exp()?.sum_keepdim(D::Minus1)?.log()?;
    let picked = z.narrow(1, target, 1)?;
    Ok((lse - picked)?.mean_all()?)
}

/// `CE(trajectory logits, m) + CE(acceleration logits, n)`, as an f64 scalar.
pub fn loss_cls(logits_traj: &Tensor, logits_acc: &Tensor, m: usize, n: usize) -> Result<Tensor> {
    Ok((cross_entropy(logits_traj, m)? + cross_entropy(logits_acc, n)?)?)
}

/// A differentiable total and the scalar values of its terms.
#[derive(Debug, Clone)]
pub struct LossParts {
    /// f64 scalar.
    pub total: Tensor,
    pub rec: f64,
    pub l1: f64,
    pub ssim: f64,
    pub cls: f64,
}

/// `λ_cls·loss_cls + loss_rec`. With `use_cls` false the classification
/// term is still reported but left out of the total.
#[allow(clippy::too_many_arguments)]
pub fn loss_total(
    rec: &Tensor,
    gnd: &Tensor,
    logits_traj: &Tensor,
    logits_acc: &Tensor,
    m: usize,
    n: usize,
    w: &LossWeights,
    use_cls: bool,
) -> Result<LossParts> {
    let l1 = l1_term(rec, gnd)?;
    let ssim = ssim_mean(&magnitude(rec)?, &magnitude(gnd)?)?;
    let rec_loss = ((&l1 * w.lambda_l1)? + ((ssim.neg()? + 1.0)? * w.lambda_ssim)?)?.to_dtype(DType::F64)?;
    let cls = loss_cls(logits_traj, logits_acc, m, n)?;
    let total = if use_cls {
        (&rec_loss + (&cls * w.lambda_cls)?)?
    } else {
        rec_loss.clone()
    };
    let scalar = |t: &Tensor| -> Result<f64> { Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?) };
    Ok(LossParts {
        rec: scalar(&rec_loss)?,
        l1: scalar(&l1)?,
        ssim: scalar(&ssim)?,
        cls: scalar(&cls)?,
        total,
    })
}
