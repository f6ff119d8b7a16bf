//! Centered, orthonormal 2D Fourier transforms over the last two axes.
//!
//! The zero-frequency sample sits at index `(H/2, W/2)` (floor division) and
//! both directions are scaled by `1/√(H·W)`, so the transform is unitary.

use std::sync::Arc;

use ndarray::{Array, Dimension};
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

struct Plan2 {
    rows: Arc<dyn Fft<f64>>,
    cols: Arc<dyn Fft<f64>>,
    h: usize,
    w: usize,
    scale: f64,
}

impl Plan2 {
    fn new(h: usize, w: usize, dir: Direction) -> Self {
        let mut planner = FftPlanner::new();
        let d = match dir {
            Direction::Forward => FftDirection::Forward,
            Direction::Inverse => FftDirection::Inverse,
        };
        Plan2 {
            rows: planner.plan_fft(w, d),
            cols: planner.plan_fft(h, d),
            h,
            w,
            scale: 1.0 / ((h * w) as f64).sqrt(),
        }
    }

    /// Transforms one row-major `h × w` plane in place.
    fn run(&self, plane: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        let (h, w) = (self.h, self.w);
        // ifftshift on input
        scratch.clear();
        scratch.resize(h * w, Complex64::new(0.0, 0.0));
        for r in 0..h {
            let sr = (r + h / 2) % h;
            for c in 0..w {
                let sc = (c + w / 2) % w;
                scratch[r * w + c] = plane[sr * w + sc];
            }
        }
        self.rows.process(scratch);
        // transpose, transform columns as rows
        let mut t = vec![Complex64::new(0.0, 0.0); h * w];
        for r in 0..h {
            for c in 0..w {
                t[c * h + r] = scratch[r * w + c];
            }
        }
        self.cols.process(&mut t);
        // transpose back with fftshift and scaling
        for r in 0..h {
            let dr = (r + h / 2) % h;
            for c in 0..w {
                let dc = (c + w / 2) % w;
                plane[dr * w + dc] = t[c * h + r] * self.scale;
            }
        }
    }
}

fn transform<D: Dimension>(a: &Array<Complex64, D>, dir: Direction) -> Result<Array<Complex64, D>> {
    let nd = a.ndim();
    if nd < 2 {
        return Err(Error::shape(format!(
            "2D transform needs at least 2 dimensions, got {nd}"
        )));
    }
    if !a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::NonFinite("FFT input".into()));
    }
    let shape = a.shape();
    let (h, w) = (shape[nd - 2], shape[nd - 1]);
    let mut out = a.as_standard_layout().into_owned();
    if h == 0 || w == 0 {
        return Ok(out);
    }
    let plan = Plan2::new(h, w, dir);
    let mut scratch = Vec::with_capacity(h * w);
    let flat = out
        .as_slice_mut()
        .expect("standard layout arrays are contiguous");
    for plane in flat.chunks_exact_mut(h * w) {
        plan.run(plane, &mut scratch);
    }
    Ok(out)
}

/// Centered unitary forward 2D FFT over the last two axes.
pub fn fft2c<D: Dimension>(img: &Array<Complex64, D>) -> Result<Array<Complex64, D>> {
    transform(img, Direction::Forward)
}

/// Exact inverse of [`fft2c`].
pub fn ifft2c<D: Dimension>(ksp: &Array<Complex64, D>) -> Result<Array<Complex64, D>> {
    transform(ksp, Direction::Inverse)
}
