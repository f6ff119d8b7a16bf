//! GRAPPA for regular comb masks.
//!
//! For every missing-line offset `j ∈ 1..R` a kernel maps a neighbourhood of
//! acquired lines (up to `lines` of them, `R` apart) × `readout` columns ×
//! all coils onto the target sample of each coil. Kernels are fitted by
//! least squares on the calibration lines of each frame.
//!
//! With only 16 calibration lines a 4-line kernel spans `3R + 1` rows and no
//! longer fits once `R > 5`; source lines are then chosen nearest-first
//! around the target until the span would leave the calibration band.

use ndarray::{s, Array2, Array3, Array4, ArrayView3, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kspace::{ifft2c, uniform_pattern, AcsRegion, ImageSeq, KSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrappaKernel {
    pub readout: usize,
    pub lines: usize,
}

impl Default for GrappaKernel {
    fn default() -> Self {
        GrappaKernel { readout: 5, lines: 4 }
    }
}

/// Weights for one missing-line offset.
#[derive(Debug, Clone)]
pub struct OffsetKernel {
    /// Target row minus base row, in `1..R`.
    pub offset: usize,
    /// Source rows relative to the base row (multiples of `R`).
    pub source_lines: Vec<isize>,
    /// `[n_sources, n_coils]`, sources ordered (line, readout, coil).
    pub weights: Array2<Complex64>,
}

#[derive(Debug, Clone)]
pub struct GrappaCalibration {
    pub accel: usize,
    pub kernel: GrappaKernel,
    pub offsets: Vec<OffsetKernel>,
    /// At least one fit needed Tikhonov regularization.
    pub regularized: bool,
}

#[derive(Debug, Clone)]
pub struct GrappaResult {
    /// Root-sum-of-squares magnitude (stored as real values).
    pub image: ImageSeq,
    pub kspace: KSpace,
    pub regularized: bool,
}

fn choose_sources(offset: usize, accel: usize, kernel: GrappaKernel, band: usize) -> Vec<isize> {
    let r = accel as isize;
    let j = offset as isize;
    let half = kernel.lines as isize / 2;
    let mut cands: Vec<isize> = ((1 - half)..=half).map(|k| k * r).collect();
    cands.sort_by_key(|&c| ((c - j).abs(), c));
    let mut chosen: Vec<isize> = Vec::new();
    for c in cands {
        let lo = chosen.iter().copied().chain([c, j]).min().unwrap();
        let hi = chosen.iter().copied().chain([c, j]).max().unwrap();
        if ((hi - lo) as usize) < band {
            chosen.push(c);
        }
    }
    chosen.sort();
    chosen
}

fn gather(
    frame: &ArrayView3<Complex64>,
    base: isize,
    col: isize,
    lines: &[isize],
    readout: usize,
    out: &mut Vec<Complex64>,
) {
    let (nc, h, w) = frame.dim();
    let half = (readout / 2) as isize;
    for &l in lines {
        let row = base + l;
        for dc in -half..=half {
            let c = col + dc;
            for coil in 0..nc {
                if row >= 0 && (row as usize) < h && c >= 0 && (c as usize) < w {
                    out.push(frame[[coil, row as usize, c as usize]]);
                } else {
                    out.push(Complex64::new(0.0, 0.0));
                }
            }
        }
    }
}

/// Solve `(AᴴA + λI) X = AᴴB`; returns the solution and whether λ > 0 was needed.
fn least_squares(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Result<(Array2<Complex64>, bool)> {
    let n = a.ncols();
    let ah = a.t().mapv(|z| z.conj());
    let gram = ah.dot(a);
    let rhs = ah.dot(b);
    let trace: f64 = (0..n).map(|i| gram[[i, i]].re).sum();
    let rank_short = a.nrows() < n;
    if !rank_short {
        if let Some(x) = cholesky_solve(&gram, &rhs, 0.0, trace) {
            return Ok((x, false));
        }
    }
    let lambda = 1e-6 * trace;
    cholesky_solve(&gram, &rhs, lambda, trace)
        .map(|x| (x, true))
        .ok_or_else(|| Error::Numerical("GRAPPA calibration matrix is singular even after regularization".into()))
}

fn cholesky_solve(g: &Array2<Complex64>, rhs: &Array2<Complex64>, lambda: f64, trace: f64) -> Option<Array2<Complex64>> {
    let n = g.nrows();
    let floor = 1e-10 * trace / n.max(1) as f64;
    let mut l = Array2::<Complex64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = g[[i, j]];
            if i == j {
                sum += lambda;
            }
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]].conj();
            }
            if i == j {
                if sum.re.is_nan() || sum.re <= floor {
                    return None;
                }
                l[[i, i]] = Complex64::new(sum.re.sqrt(), 0.0);
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    let m = rhs.ncols();
    let mut x = rhs.clone();
    for col in 0..m {
        for i in 0..n {
            let mut v = x[[i, col]];
            for k in 0..i {
                v -= l[[i, k]] * x[[k, col]];
            }
            x[[i, col]] = v / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut v = x[[i, col]];
            for k in i + 1..n {
                v -= l[[k, i]].conj() * x[[k, col]];
            }
            x[[i, col]] = v / l[[i, i]];
        }
    }
    Some(x)
}

impl GrappaCalibration {
    /// Fit kernels on the calibration rows of one frame `[coil, row, col]`.
    ///
    /// Fitting positions whose target row is listed in `exclude_targets` are
    /// skipped, which allows held-out checks.
    pub fn fit(
        frame: &ArrayView3<Complex64>,
        acs_rows: (usize, usize),
        accel: usize,
        kernel: GrappaKernel,
        exclude_targets: &[usize],
    ) -> Result<Self> {
        let (nc, _, w) = frame.dim();
        let (a, b) = acs_rows;
        let band = b - a;
        let half = kernel.readout / 2;
        if w < kernel.readout {
            return Err(Error::invalid("readout shorter than the kernel"));
        }
        let mut offsets = Vec::new();
        let mut regularized = false;
        for j in 1..accel {
            let lines = choose_sources(j, accel, kernel, band);
            let lo = lines.iter().copied().chain([j as isize]).min().unwrap();
            let hi = lines.iter().copied().chain([j as isize]).max().unwrap();
            let mut rows_a = Vec::new();
            let mut rows_b = Vec::new();
            let mut buf = Vec::new();
            for base in (a as isize - lo)..=(b as isize - 1 - hi) {
                let target = (base + j as isize) as usize;
                if exclude_targets.contains(&target) {
                    continue;
                }
                for col in half..w - half {
                    buf.clear();
                    gather(frame, base, col as isize, &lines, kernel.readout, &mut buf);
                    rows_a.push(buf.clone());
                    rows_b.push(frame.slice(s![.., target, col]).to_vec());
                }
            }
            if rows_a.is_empty() {
                return Err(Error::invalid(format!(
                    "no calibration positions for offset {j} at acceleration {accel}"
                )));
            }
            let n_src = rows_a[0].len();
            let am = Array2::from_shape_fn((rows_a.len(), n_src), |(i, k)| rows_a[i][k]);
            let bm = Array2::from_shape_fn((rows_b.len(), nc), |(i, k)| rows_b[i][k]);
            let (weights, reg) = least_squares(&am, &bm)?;
            regularized |= reg;
            offsets.push(OffsetKernel { offset: j, source_lines: lines, weights });
        }
        Ok(GrappaCalibration { accel, kernel, offsets, regularized })
    }

    /// Predict every coil at `(base + offset, col)` from acquired lines.
    pub fn predict(&self, frame: &ArrayView3<Complex64>, offset: usize, base: isize, col: usize) -> Vec<Complex64> {
        let k = &self.offsets[offset - 1];
        let mut buf = Vec::with_capacity(k.weights.nrows());
        gather(frame, base, col as isize, &k.source_lines, self.kernel.readout, &mut buf);
        (0..k.weights.ncols())
            .map(|c| buf.iter().zip(k.weights.column(c)).map(|(s, w)| s * w).sum())
            .collect()
    }
}

/// GRAPPA reconstruction of comb-sampled k-space.
///
/// `mask` must be exactly the comb produced by [`uniform_pattern`] for
/// `accel`; other trajectories have no regular geometry to calibrate.
pub fn grappa_uniform(
    y: &KSpace,
    mask: &Array3<bool>,
    acs: AcsRegion,
    accel: usize,
    kernel: GrappaKernel,
) -> Result<GrappaResult> {
    let (nc, nt, h, w) = y.data().dim();
    let AcsRegion::Rows { start, end } = acs else {
        return Err(Error::invalid("GRAPPA requires a line-shaped calibration region"));
    };
    if mask.dim() != (nt, h, w) {
        return Err(Error::shape("mask does not match k-space"));
    }
    if *mask != uniform_pattern(accel, nt, h, w)? {
        return Err(Error::invalid(
            "GRAPPA supports only the uniform trajectory (regular comb with calibration lines)",
        ));
    }
    let mut filled: Array4<Complex64> = y.data().clone();
    let mut regularized = false;
    if accel > 1 {
        for t in 0..nt {
            let frame = y.data().index_axis(Axis(1), t);
            let cal = GrappaCalibration::fit(&frame, (start, end), accel, kernel, &[])?;
            regularized |= cal.regularized;
            for row in 0..h {
                if mask[[t, row, 0]] {
                    continue;
                }
                let j = (row + accel * nt - t % accel) % accel;
                let base = row as isize - j as isize;
                for col in 0..w {
                    let vals = cal.predict(&frame, j, base, col);
                    for (c, v) in vals.into_iter().enumerate() {
                        filled[[c, t, row, col]] = v;
                    }
                }
            }
        }
    }
    let _ = nc;
    let coil_imgs = ifft2c(&filled)?;
    let rss = coil_imgs
        .mapv(|z| z.norm_sqr())
        .sum_axis(Axis(0))
        .mapv(|v| Complex64::new(v.sqrt(), 0.0));
    Ok(GrappaResult {
        image: ImageSeq::new(rss)?,
        kspace: KSpace::new(filled)?,
        regularized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_selection_respects_band() {
        assert_eq!(choose_sources(1, 2, GrappaKernel::default(), 16), vec![-2, 0, 2, 4]);
        assert_eq!(choose_sources(1, 4, GrappaKernel::default(), 16), vec![-4, 0, 4, 8]);
        for r in [8, 12, 16, 20, 24] {
            for j in 1..r {
                let lines = choose_sources(j, r, GrappaKernel::default(), 16);
                assert!(!lines.is_empty());
                let lo = lines.iter().copied().chain([j as isize]).min().unwrap();
                let hi = lines.iter().copied().chain([j as isize]).max().unwrap();
                assert!(hi - lo < 16);
            }
        }
    }

    #[test]
    fn cholesky_matches_direct_solution() {
        let a = Array2::from_shape_vec(
            (3, 2),
            vec![
                Complex64::new(1.0, 0.5),
                Complex64::new(0.0, 1.0),
                Complex64::new(2.0, 0.0),
                Complex64::new(1.0, -1.0),
                Complex64::new(0.5, 0.5),
                Complex64::new(3.0, 0.0),
            ],
        )
        .unwrap();
        let x_true = Array2::from_shape_vec((2, 1), vec![Complex64::new(1.0, 2.0), Complex64::new(-1.0, 0.5)]).unwrap();
        let b = a.dot(&x_true);
        let (x, reg) = least_squares(&a, &b).unwrap();
        assert!(!reg);
        for (u, v) in x.iter().zip(x_true.iter()) {
            assert!((u - v).norm() < 1e-10);
        }
    }
}
