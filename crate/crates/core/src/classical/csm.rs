//! Coil sensitivity estimation from the calibration region.

use ndarray::{Array3, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kspace::{ifft2c, AcsRegion, CoilSensitivity, KSpace};

fn hann(i: usize, n: usize) -> f64 {
    let v = (std::f64::consts::PI * (i as f64 + 0.5) / n as f64).sin();
    v * v
}

/// Low-resolution sensitivity maps.
///
/// Averages the measurements over frames, keeps only the calibration
/// region under a separable Hann taper, transforms to image space and
/// normalizes by the root sum of squares. Pixels where that sum falls
/// below `1e-8` of its maximum are set to zero and excluded from the
/// support.
pub fn estimate_csm_lowres(y: &KSpace, acs: AcsRegion) -> Result<CoilSensitivity> {
    let (nc, nt, h, w) = y.data().dim();
    let avg = y.data().mean_axis(Axis(1)).ok_or_else(|| Error::shape("no frames"))?;
    let (rows, cols) = match acs {
        AcsRegion::Rows { start, end } => ((start, end), (0, w)),
        AcsRegion::Block { rows, cols } => (rows, cols),
    };
    if rows.1 > h || cols.1 > w || rows.0 >= rows.1 || cols.0 >= cols.1 {
        return Err(Error::invalid("calibration region outside k-space"));
    }
    let (nr, ncol) = (rows.1 - rows.0, cols.1 - cols.0);
    let mut low = Array3::<Complex64>::zeros((nc, h, w));
    for c in 0..nc {
        for r in rows.0..rows.1 {
            let wr = hann(r - rows.0, nr);
            for k in cols.0..cols.1 {
                low[[c, r, k]] = avg[[c, r, k]] * wr * hann(k - cols.0, ncol);
            }
        }
    }
    let _ = nt;
    let mut maps = ifft2c(&low)?;
    let rss = maps.mapv(|z| z.norm_sqr()).sum_axis(Axis(0)).mapv(f64::sqrt);
    let peak = rss.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::invalid("calibration region holds no signal"));
    }
    let floor = 1e-8 * peak;
    for c in 0..nc {
        for ((r, k), &v) in rss.indexed_iter() {
            maps[[c, r, k]] = if v >= floor { maps[[c, r, k]] / v } else { Complex64::new(0.0, 0.0) };
        }
    }
    let support = rss.mapv(|v| v >= floor);
    CoilSensitivity::new(maps, support)
}
