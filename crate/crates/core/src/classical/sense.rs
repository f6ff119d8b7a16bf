//! Zero-filled and iterative SENSE reconstructions.

use ndarray::Array4;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kspace::{adjoint_a, forward_a, CoilSensitivity, ImageSeq, KSpace, SamplingMask};

/// Coil-combined zero-filled image `Aᴴ y`.
pub fn zero_filled(y: &KSpace, s: &CoilSensitivity, m: &SamplingMask) -> Result<ImageSeq> {
    adjoint_a(y, s, m)
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { max_iters: 50, tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct CgResult {
    pub image: ImageSeq,
    pub iterations: usize,
    /// Final `‖y − A x‖ / ‖y‖`.
    pub residual: f64,
    /// `‖y − A x_k‖ / ‖y‖` for `k = 0..=iterations`.
    pub residual_history: Vec<f64>,
    /// Final normal-equation residual `‖Aᴴ(y − A x)‖ / ‖Aᴴ y‖`.
    pub normal_residual: f64,
}

fn norm_sq<'a>(it: impl IntoIterator<Item = &'a Complex64>) -> f64 {
    it.into_iter().map(|z| z.norm_sqr()).sum()
}

/// Conjugate gradients on `AᴴA x = Aᴴ y`, started from zero.
///
/// Iterates the CGLS recursion, so the data residual `‖y − A x_k‖` is
/// non-increasing. Stops when either relative residual drops below `tol`.
pub fn cg_sense(y: &KSpace, s: &CoilSensitivity, m: &SamplingMask, opts: CgOptions) -> Result<CgResult> {
    let (_, nt, h, w) = y.data().dim();
    let ynorm = norm_sq(y.data().iter()).sqrt();
    let mut x = ImageSeq::zeros(nt, h, w);
    if ynorm == 0.0 {
        return Ok(CgResult {
            image: x,
            iterations: 0,
            residual: 0.0,
            residual_history: vec![0.0],
            normal_residual: 0.0,
        });
    }
    let mut r: Array4<Complex64> = y.masked(m)?.into_data();
    let mut grad = adjoint_a(y, s, m)?;
    let g0 = norm_sq(grad.data().iter()).sqrt();
    let mut p = grad.clone();
    let mut gamma = g0 * g0;
    let mut history = vec![norm_sq(r.iter()).sqrt() / ynorm];
    let mut normal = 1.0;
    let mut iterations = 0;
    while iterations < opts.max_iters && history[iterations] >= opts.tol && normal >= opts.tol {
        let q = forward_a(&p, s, m)?;
        let qq = norm_sq(q.data().iter());
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        x.data_mut().zip_mut_with(p.data(), |xv, &pv| *xv += pv * alpha);
        r.zip_mut_with(q.data(), |rv, &qv| *rv -= qv * alpha);
        grad = adjoint_a(&KSpace::new(r.clone()).map_err(|_| nan(iterations))?, s, m)?;
        let gamma_new = norm_sq(grad.data().iter());
        if !gamma_new.is_finite() || !alpha.is_finite() {
            return Err(nan(iterations));
        }
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        let gd = grad.data().clone();
        p.data_mut().zip_mut_with(&gd, |pv, &gv| *pv = gv + *pv * beta);
        iterations += 1;
        history.push(norm_sq(r.iter()).sqrt() / ynorm);
        normal = gamma.sqrt() / g0;
    }
    Ok(CgResult {
        image: x,
        iterations,
        residual: *history.last().unwrap(),
        residual_history: history,
        normal_residual: normal,
    })
}

fn nan(iteration: usize) -> Error {
    Error::Numerical(format!("CG-SENSE produced a non-finite value at iteration {iteration}"))
}
