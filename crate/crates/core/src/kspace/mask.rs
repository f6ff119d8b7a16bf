//! Random undersampling patterns for the three trajectory families.
//!
//! Rows (the first spatial axis) are phase-encode lines. The acceleration
//! factor sets the budget outside the calibration region; calibration lines
//! are acquired on top of it.

use std::f64::consts::PI;

use ndarray::{s, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::types::{AccelFactor, AcsRegion, SamplingMask, Trajectory, ACS_SIZE};
use crate::error::{Error, Result};

/// Per-frame spoke rotation for pseudo-radial masks, in degrees.
pub const GOLDEN_ANGLE_DEG: f64 = 111.246;

/// Build a sampling mask. Deterministic for a fixed `seed`.
pub fn make_mask(
    trajectory: Trajectory,
    accel: AccelFactor,
    frames: usize,
    h: usize,
    w: usize,
    seed: u64,
) -> Result<SamplingMask> {
    if h < ACS_SIZE || w < ACS_SIZE {
        return Err(Error::invalid(format!(
            "grid {h}x{w} smaller than the {ACS_SIZE}-line calibration region"
        )));
    }
    if frames == 0 {
        return Err(Error::invalid("mask needs at least one frame"));
    }
    let r = accel.value();
    let (data, acs) = match trajectory {
        Trajectory::Uniform => (uniform_pattern(r, frames, h, w)?, AcsRegion::central_rows(h)),
        Trajectory::Gaussian => (gaussian_pattern(r, frames, h, w, seed), AcsRegion::central_rows(h)),
        Trajectory::PseudoRadial => (
            radial_pattern(r, frames, h, w),
            AcsRegion::central_block(h, w),
        ),
    };
    Ok(SamplingMask::from_parts(data, trajectory, accel, acs, seed))
}

/// Regular comb with temporal interleaving: row `h` of frame `t` is sampled
/// iff `(h − t) mod accel == 0`, plus the central calibration rows.
///
/// Accepts any `accel ≥ 1`, which GRAPPA experiments use below the
/// supported factor range.
pub fn uniform_pattern(accel: usize, frames: usize, h: usize, w: usize) -> Result<Array3<bool>> {
    if accel == 0 {
        return Err(Error::invalid("acceleration must be at least 1"));
    }
    let acs = AcsRegion::central_rows(h);
    Ok(Array3::from_shape_fn((frames, h, w), |(t, row, _)| {
        acs.contains_row(row) || (row + accel * frames - t % accel).is_multiple_of(accel)
    }))
}

fn gaussian_pattern(accel: usize, frames: usize, h: usize, w: usize, seed: u64) -> Array3<bool> {
    let acs = AcsRegion::central_rows(h);
    let candidates: Vec<usize> = (0..h).filter(|&r| !acs.contains_row(r)).collect();
    let budget = (h / accel).min(candidates.len());
    let sigma = h as f64 / 6.0;
    let centre = h as f64 / 2.0;
    let weights: Vec<f64> = candidates
        .iter()
        .map(|&r| {
            let d = r as f64 - centre;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Array3::from_elem((frames, h, w), false);
    for t in 0..frames {
        let mut frame = out.slice_mut(s![t, .., ..]);
        let (a, b) = acs.row_range();
        frame.slice_mut(s![a..b, ..]).fill(true);
        let picked = rand::seq::index::sample_weighted(&mut rng, candidates.len(), |i| weights[i], budget)
            .expect("gaussian weights are positive and finite");
        for i in picked.iter() {
            frame.slice_mut(s![candidates[i], ..]).fill(true);
        }
    }
    out
}

/// Number of spokes per frame for a given factor.
pub fn spoke_count(accel: usize, h: usize, w: usize) -> usize {
    ((PI / 2.0) * h.max(w) as f64 / accel as f64).ceil() as usize
}

fn radial_pattern(accel: usize, frames: usize, h: usize, w: usize) -> Array3<bool> {
    let n_spokes = spoke_count(accel, h, w);
    let golden = GOLDEN_ANGLE_DEG.to_radians();
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let reach = ((h * h + w * w) as f64).sqrt() / 2.0 + 1.0;
    let acs = AcsRegion::central_block(h, w);
    let mut out = Array3::from_elem((frames, h, w), false);
    for t in 0..frames {
        for k in 0..n_spokes {
            let theta = k as f64 * PI / n_spokes as f64 + t as f64 * golden;
            let (sin, cos) = theta.sin_cos();
            let steps = (2.0 * reach / 0.5).ceil() as i64;
            for i in 0..=steps {
                let rad = -reach + 0.5 * i as f64;
                let row = (cy + rad * sin).round();
                let col = (cx + rad * cos).round();
                if row >= 0.0 && col >= 0.0 && (row as usize) < h && (col as usize) < w {
                    out[[t, row as usize, col as usize]] = true;
                }
            }
        }
        if let AcsRegion::Block { rows, cols } = acs {
            out.slice_mut(s![t, rows.0..rows.1, cols.0..cols.1]).fill(true);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_masks(frames: usize, h: usize, w: usize) -> Vec<SamplingMask> {
        let mut v = Vec::new();
        for traj in Trajectory::ALL {
            for a in AccelFactor::all() {
                v.push(make_mask(traj, a, frames, h, w, 17).unwrap());
            }
        }
        v
    }

    #[test]
    fn uniform_rows_follow_the_comb() {
        let m = make_mask(Trajectory::Uniform, AccelFactor::new(4).unwrap(), 2, 64, 20, 0).unwrap();
        // enumerated by hand: rows 24..40 are ACS, the comb fills the rest
        let mut want0: Vec<usize> = (0..64).step_by(4).filter(|r| !(24..40).contains(r)).collect();
        want0.extend(24..40);
        want0.sort();
        assert_eq!(m.sampled_rows(0), want0);
        let mut want1: Vec<usize> = (1..64).step_by(4).filter(|r| !(24..40).contains(r)).collect();
        want1.extend(24..40);
        want1.sort();
        assert_eq!(m.sampled_rows(1), want1);
    }

    #[test]
    fn uniform_fraction_outside_acs() {
        for a in AccelFactor::all() {
            let h = 96;
            let m = make_mask(Trajectory::Uniform, a, 3, h, 16, 0).unwrap();
            for t in 0..3 {
                let n = m.sampled_rows(t).into_iter().filter(|&r| !m.acs.contains_row(r)).count();
                let expected = (0..h).filter(|&r| !m.acs.contains_row(r) && (r + 96 * a.value() - t) % a.value() == 0).count();
                assert_eq!(n, expected);
                let frac = n as f64 / (h - ACS_SIZE) as f64;
                assert!((frac - 1.0 / a.value() as f64).abs() <= 1.0 / (h - ACS_SIZE) as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn every_combination_satisfies_invariants() {
        for m in all_masks(4, 48, 40) {
            for t in 0..4 {
                for r in 0..48 {
                    for c in 0..40 {
                        if m.acs.contains(r, c) {
                            assert!(m.data()[[t, r, c]], "{} {} ACS hole", m.trajectory, m.accel);
                        }
                    }
                    if m.trajectory != Trajectory::PseudoRadial {
                        let row = m.data().slice(s![t, r, ..]);
                        assert!(row.iter().all(|&b| b == row[0]), "partial readout line");
                    }
                }
            }
        }
    }

    #[test]
    fn gaussian_budget_is_exact_and_frames_differ() {
        let h = 64;
        for a in AccelFactor::all() {
            let m = make_mask(Trajectory::Gaussian, a, 6, h, 32, 3).unwrap();
            for t in 0..6 {
                let n = m.sampled_rows(t).into_iter().filter(|&r| !m.acs.contains_row(r)).count();
                assert_eq!(n, h / a.value());
            }
        }
        let m = make_mask(Trajectory::Gaussian, AccelFactor::new(4).unwrap(), 6, h, 32, 3).unwrap();
        assert!((1..6).any(|t| m.sampled_rows(t) != m.sampled_rows(0)));
    }

    #[test]
    fn deterministic_for_seed() {
        for traj in Trajectory::ALL {
            let a = AccelFactor::new(8).unwrap();
            assert_eq!(make_mask(traj, a, 3, 32, 32, 5).unwrap(), make_mask(traj, a, 3, 32, 32, 5).unwrap());
        }
        let a = AccelFactor::new(8).unwrap();
        assert_ne!(
            make_mask(Trajectory::Gaussian, a, 3, 64, 32, 5).unwrap().data(),
            make_mask(Trajectory::Gaussian, a, 3, 64, 32, 6).unwrap().data()
        );
    }

    #[test]
    fn uniform_frame_shift_equivariance() {
        let a = AccelFactor::new(8).unwrap();
        let m = make_mask(Trajectory::Uniform, a, 5, 64, 16, 0).unwrap();
        for t in 0..4 {
            for r in 0..64 {
                if m.acs.contains_row(r) || m.acs.contains_row((r + 1) % 64) {
                    continue;
                }
                assert_eq!(m.data()[[t, r, 0]], m.data()[[t + 1, (r + 1) % 64, 0]]);
            }
        }
    }

    #[test]
    fn radial_spokes_rotate_and_density_falls_with_accel() {
        let m4 = make_mask(Trajectory::PseudoRadial, AccelFactor::new(4).unwrap(), 2, 64, 64, 0).unwrap();
        let m24 = make_mask(Trajectory::PseudoRadial, AccelFactor::new(24).unwrap(), 2, 64, 64, 0).unwrap();
        assert!(m4.density() > m24.density());
        assert_ne!(m4.data().slice(s![0, .., ..]), m4.data().slice(s![1, .., ..]));
        assert_eq!(spoke_count(4, 64, 64), 26);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(AccelFactor::new(6).is_err());
        assert!(make_mask(Trajectory::Uniform, AccelFactor::new(4).unwrap(), 1, 8, 32, 0).is_err());
        assert!("spiral".parse::<Trajectory>().is_err());
    }
}
