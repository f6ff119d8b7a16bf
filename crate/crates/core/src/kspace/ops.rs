//! Multi-coil encoding operator `A = M F S` and its adjoint.

use ndarray::{Array3, Array4, Axis, Zip};
use num_complex::Complex64;

use super::fft::{fft2c, ifft2c};
use super::types::{apply_mask, CoilSensitivity, ImageSeq, KSpace, SamplingMask};
use crate::error::{Error, Result};

/// `out[c, t] = S_c ⊙ x_t`
pub fn expand_coils(x: &ImageSeq, s: &CoilSensitivity) -> Result<Array4<Complex64>> {
    let (nt, h, w) = x.data().dim();
    if s.spatial() != (h, w) {
        return Err(Error::shape(format!(
            "image grid {:?} vs sensitivity grid {:?}",
            (h, w),
            s.spatial()
        )));
    }
    let nc = s.n_coils();
    let mut out = Array4::zeros((nc, nt, h, w));
    for (mut coil_out, sens) in out.axis_iter_mut(Axis(0)).zip(s.data().axis_iter(Axis(0))) {
        for (mut frame_out, frame) in coil_out.axis_iter_mut(Axis(0)).zip(x.data().axis_iter(Axis(0))) {
            Zip::from(&mut frame_out)
                .and(&frame)
                .and(&sens)
                .for_each(|o, &v, &sc| *o = sc * v);
        }
    }
    Ok(out)
}

/// `out[t] = Σ_c conj(S_c) ⊙ imgs[c, t]`
pub fn reduce_coils(imgs: &Array4<Complex64>, s: &CoilSensitivity) -> Result<ImageSeq> {
    let (nc, nt, h, w) = imgs.dim();
    if s.n_coils() != nc || s.spatial() != (h, w) {
        return Err(Error::shape(format!(
            "coil images {:?} vs sensitivity {:?}",
            imgs.dim(),
            s.data().dim()
        )));
    }
    let mut out = Array3::<Complex64>::zeros((nt, h, w));
    for (coil, sens) in imgs.axis_iter(Axis(0)).zip(s.data().axis_iter(Axis(0))) {
        for (mut acc, frame) in out.axis_iter_mut(Axis(0)).zip(coil.axis_iter(Axis(0))) {
            Zip::from(&mut acc)
                .and(&frame)
                .and(&sens)
                .for_each(|a, &v, &sc| *a += sc.conj() * v);
        }
    }
    ImageSeq::new(out)
}

/// `A x = M ⊙ F(S x)`, mask broadcast over coils.
pub fn forward_a(x: &ImageSeq, s: &CoilSensitivity, m: &SamplingMask) -> Result<KSpace> {
    check_mask(x.data().dim(), m)?;
    let mut k = fft2c(&expand_coils(x, s)?)?;
    apply_mask(&mut k, m.data())?;
    KSpace::new(k)
}

/// `Aᴴ y = Sᴴ F⁻¹(M ⊙ y)`
pub fn adjoint_a(y: &KSpace, s: &CoilSensitivity, m: &SamplingMask) -> Result<ImageSeq> {
    let mut k = y.data().clone();
    apply_mask(&mut k, m.data())?;
    reduce_coils(&ifft2c(&k)?, s)
}

/// `AᴴA x` without materialising k-space outside this call.
pub fn normal_op(x: &ImageSeq, s: &CoilSensitivity, m: &SamplingMask) -> Result<ImageSeq> {
    let y = forward_a(x, s, m)?;
    adjoint_a(&y, s, m)
}

fn check_mask(dim: (usize, usize, usize), m: &SamplingMask) -> Result<()> {
    if m.data().dim() != dim {
        return Err(Error::shape(format!(
            "mask {:?} vs image {:?}",
            m.data().dim(),
            dim
        )));
    }
    Ok(())
}

/// Complex inner product `⟨a, b⟩ = Σ conj(a)·b` over any array shape.
pub fn inner<'a>(
    a: impl IntoIterator<Item = &'a Complex64>,
    b: impl IntoIterator<Item = &'a Complex64>,
) -> Complex64 {
    a.into_iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
