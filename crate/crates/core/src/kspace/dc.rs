//! Data-consistency layer and k-space normalization.

use ndarray::{Array4, Zip};
use num_complex::Complex64;

use super::fft::{fft2c, ifft2c};
use super::ops::{expand_coils, reduce_coils};
use super::types::{CoilSensitivity, ImageSeq, KSpace, SamplingMask};
use crate::error::{Error, Result};

/// Regularization weight of the DC layer. `f64::INFINITY` means the
/// measured samples replace the estimate exactly.
pub fn check_lambda0(lambda0: f64) -> Result<()> {
    if lambda0.is_nan() || lambda0 < 0.0 {
        Err(Error::invalid(format!("lambda0 must be >= 0 or infinite, got {lambda0}")))
    } else {
        Ok(())
    }
}

/// Diagonal weight applied to sampled k-space entries of the estimate:
/// `1/(1+λ₀)` (0 in the hard limit).
pub fn sampled_weight(lambda0: f64) -> f64 {
    if lambda0.is_infinite() {
        0.0
    } else {
        1.0 / (1.0 + lambda0)
    }
}

/// Weight applied to the measurement at sampled entries: `λ₀/(1+λ₀)`.
pub fn measurement_weight(lambda0: f64) -> f64 {
    if lambda0.is_infinite() {
        1.0
    } else {
        lambda0 / (1.0 + lambda0)
    }
}

/// The blended multi-coil k-space `k_out` before coil reduction.
pub fn data_consistency_kspace(
    z: &ImageSeq,
    y: &KSpace,
    s: &CoilSensitivity,
    m: &SamplingMask,
    lambda0: f64,
) -> Result<Array4<Complex64>> {
    check_lambda0(lambda0)?;
    let mut k = fft2c(&expand_coils(z, s)?)?;
    if k.dim() != y.data().dim() {
        return Err(Error::shape(format!(
            "estimate k-space {:?} vs measurements {:?}",
            k.dim(),
            y.data().dim()
        )));
    }
    if m.data().dim() != z.data().dim() {
        return Err(Error::shape("mask does not match image sequence"));
    }
    let hard = lambda0.is_infinite();
    let (ws, wm) = (sampled_weight(lambda0), measurement_weight(lambda0));
    let nc = k.dim().0;
    for c in 0..nc {
        let mut kc = k.index_axis_mut(ndarray::Axis(0), c);
        let yc = y.data().index_axis(ndarray::Axis(0), c);
        Zip::from(&mut kc)
            .and(&yc)
            .and(m.data())
            .for_each(|kv, &yv, &sampled| {
                if sampled {
                    *kv = if hard { yv } else { *kv * ws + yv * wm };
                }
            });
    }
    Ok(k)
}

/// `DC(z) = Sᴴ F⁻¹ k_out` with the blending above.
pub fn data_consistency(
    z: &ImageSeq,
    y: &KSpace,
    s: &CoilSensitivity,
    m: &SamplingMask,
    lambda0: f64,
) -> Result<ImageSeq> {
    let k = data_consistency_kspace(z, y, s, m, lambda0)?;
    reduce_coils(&ifft2c(&k)?, s)
}

/// Scale k-space so the largest coil-image magnitude is one.
///
/// Returns the normalized k-space and the scale that was divided out.
pub fn normalize_kspace(y: &KSpace) -> Result<(KSpace, f64)> {
    let imgs = ifft2c(y.data())?;
    let scale = imgs.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    if scale <= 0.0 || !scale.is_finite() {
        return Err(Error::invalid("cannot normalize all-zero k-space"));
    }
    let k = fft2c(&imgs.mapv(|z| z / scale))?;
    Ok((KSpace::new(k)?, scale))
}
