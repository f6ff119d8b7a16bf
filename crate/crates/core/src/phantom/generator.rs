//! Synthetic multi-coil cine phantom.
//!
//! Geometry lives in normalized coordinates `u, v ∈ [-1, 1]` (columns, rows).
//! A beating annulus sits inside a smooth background ellipse; its inner
//! radius follows `cos(2πt/T)`, so the sequence is exactly `T`-periodic.

use std::f64::consts::PI;

use ndarray::{Array2, Array3, Axis, Zip};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::types::coil_energy;
use crate::kspace::{forward_a, CoilSensitivity, ImageSeq, KSpace, SamplingMask};

/// Number of distinct intensity profiles.
pub const CONTRAST_PROFILES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomParams {
    /// Frames per sequence; one full cardiac cycle.
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub n_coils: usize,
    /// Relative excursion of the inner myocardial radius, in (0, 0.5).
    pub contraction_amplitude: f64,
    /// How many contrast variants a dataset cycles through.
    pub n_contrast_variants: usize,
    /// Which variant this slice uses.
    pub contrast: usize,
    pub seed: u64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        PhantomParams {
            frames: 8,
            height: 32,
            width: 32,
            n_coils: 8,
            contraction_amplitude: 0.3,
            n_contrast_variants: CONTRAST_PROFILES,
            contrast: 0,
            seed: 0,
        }
    }
}

impl PhantomParams {
    pub fn cardiac_period(&self) -> usize {
        self.frames
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 4 {
            return Err(Error::invalid(format!("phantom needs T >= 4, got {}", self.frames)));
        }
        if !(self.contraction_amplitude > 0.0 && self.contraction_amplitude < 0.5) {
            return Err(Error::invalid(format!(
                "contraction amplitude {} outside (0, 0.5)",
                self.contraction_amplitude
            )));
        }
        if self.n_coils == 0 {
            return Err(Error::invalid("phantom needs at least one coil"));
        }
        if self.n_contrast_variants == 0 {
            return Err(Error::invalid("need at least one contrast variant"));
        }
        if self.height < 16 || self.width < 16 {
            return Err(Error::invalid(format!(
                "phantom grid {}x{} below 16x16",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Profile {
    background: f64,
    myocardium: f64,
    blood: f64,
    tagged: bool,
}

fn profile(variant: usize) -> Profile {
    match variant % CONTRAST_PROFILES {
        0 => Profile { background: 0.35, myocardium: 0.25, blood: 1.0, tagged: false },
        1 => Profile { background: 0.2, myocardium: 0.55, blood: 0.9, tagged: false },
        2 => Profile { background: 0.6, myocardium: 0.4, blood: 0.75, tagged: false },
        _ => Profile { background: 0.35, myocardium: 0.3, blood: 1.0, tagged: true },
    }
}

/// Randomised geometry of one phantom slice.
#[derive(Debug, Clone)]
pub struct PhantomGeometry {
    pub ellipse_axes: (f64, f64),
    pub heart_centre: (f64, f64),
    pub outer_radius: f64,
    pub mean_inner_radius: f64,
    phase: (f64, f64, f64),
    coil_rotation: f64,
    tag_period: f64,
}

/// Soft edge falling from 1 to 0 across `d = 0` over about `width`.
fn soft_inside(d: f64, width: f64) -> f64 {
    0.5 * (1.0 - (d / width).tanh())
}

pub struct CinePhantom {
    params: PhantomParams,
    geometry: PhantomGeometry,
    profile: Profile,
}

impl CinePhantom {
    pub fn new(params: PhantomParams) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let geometry = PhantomGeometry {
            ellipse_axes: (rng.random_range(0.78..0.88), rng.random_range(0.62..0.74)),
            heart_centre: (rng.random_range(-0.08..0.08), rng.random_range(-0.08..0.08)),
            outer_radius: rng.random_range(0.36..0.42),
            mean_inner_radius: rng.random_range(0.20..0.24),
            phase: (
                rng.random_range(-PI..PI),
                rng.random_range(-0.4..0.4),
                rng.random_range(-0.4..0.4),
            ),
            coil_rotation: rng.random_range(0.0..2.0 * PI),
            tag_period: rng.random_range(0.18..0.26),
        };
        let g = &geometry;
        if g.mean_inner_radius * (1.0 + params.contraction_amplitude) >= g.outer_radius
            || g.mean_inner_radius * (1.0 - params.contraction_amplitude) <= 0.0
        {
            return Err(Error::invalid("degenerate myocardial annulus"));
        }
        Ok(CinePhantom {
            profile: profile(params.contrast),
            params,
            geometry,
        })
    }

    pub fn params(&self) -> &PhantomParams {
        &self.params
    }

    pub fn geometry(&self) -> &PhantomGeometry {
        &self.geometry
    }

    fn coords(&self, row: usize, col: usize) -> (f64, f64) {
        let (h, w) = (self.params.height as f64, self.params.width as f64);
        (
            (col as f64 - w / 2.0) / (w / 2.0),
            (row as f64 - h / 2.0) / (h / 2.0),
        )
    }

    /// Inner myocardial radius at (possibly out-of-range) frame `t`.
    pub fn inner_radius(&self, t: i64) -> f64 {
        let phase = 2.0 * PI * t.rem_euclid(self.params.frames as i64) as f64 / self.params.frames as f64;
        self.geometry.mean_inner_radius * (1.0 + self.params.contraction_amplitude * phase.cos())
    }

    /// Whether pixel `(row, col)` lies in the myocardium at every phase.
    pub fn in_myocardial_band(&self, row: usize, col: usize) -> bool {
        let (u, v) = self.coords(row, col);
        let g = &self.geometry;
        let r = ((u - g.heart_centre.0).powi(2) + (v - g.heart_centre.1).powi(2)).sqrt();
        let r_min = g.mean_inner_radius * (1.0 - self.params.contraction_amplitude);
        let r_max = g.mean_inner_radius * (1.0 + self.params.contraction_amplitude);
        r > r_min && r < r_max
    }

    /// One complex frame; frames `t` and `t + T` coincide.
    pub fn frame(&self, t: i64) -> Array2<Complex64> {
        let (h, w) = (self.params.height, self.params.width);
        let g = &self.geometry;
        let p = self.profile;
        let edge = 1.5 / h.min(w) as f64;
        let r_in = self.inner_radius(t);
        Array2::from_shape_fn((h, w), |(row, col)| {
            let (u, v) = self.coords(row, col);
            let ell = ((u / g.ellipse_axes.0).powi(2) + (v / g.ellipse_axes.1).powi(2)).sqrt();
            let body = soft_inside(ell - 1.0, edge);
            let r = ((u - g.heart_centre.0).powi(2) + (v - g.heart_centre.1).powi(2)).sqrt();
            let heart = soft_inside(r - g.outer_radius, edge);
            let blood = soft_inside(r - r_in, edge);
            let myo = (heart - blood).max(0.0);
            let mut mag = p.background * body * (1.0 - heart) + p.myocardium * myo + p.blood * blood;
            if p.tagged {
                let k = 2.0 * PI / g.tag_period;
                mag *= 0.65 + 0.35 * (k * u).cos() * (k * v).cos();
            }
            let phi = g.phase.0 + g.phase.1 * u + g.phase.2 * v;
            Complex64::from_polar(mag, phi)
        })
    }

    pub fn images(&self) -> ImageSeq {
        let (h, w) = (self.params.height, self.params.width);
        let mut data = Array3::zeros((self.params.frames, h, w));
        for (t, mut f) in data.axis_iter_mut(Axis(0)).enumerate() {
            f.assign(&self.frame(t as i64));
        }
        ImageSeq::new(data).expect("phantom frames are finite")
    }

    /// Gaussian-bump coils on a ring around the field of view, normalized so
    /// that Σ|S_c|² = 1 at every pixel.
    pub fn coil_sensitivities(&self) -> CoilSensitivity {
        let (h, w, nc) = (self.params.height, self.params.width, self.params.n_coils);
        let width = 0.75;
        let mut raw = Array3::zeros((nc, h, w));
        for (c, mut coil) in raw.axis_iter_mut(Axis(0)).enumerate() {
            let ang = self.geometry.coil_rotation + 2.0 * PI * c as f64 / nc as f64;
            let (cu, cv) = (1.15 * ang.cos(), 1.15 * ang.sin());
            for ((row, col), s) in coil.indexed_iter_mut() {
                let (u, v) = self.coords(row, col);
                let d2 = (u - cu).powi(2) + (v - cv).powi(2);
                let mag = (-d2 / (2.0 * width * width)).exp();
                let phi = ang + 0.3 * (u * ang.sin() - v * ang.cos());
                *s = Complex64::from_polar(mag, phi);
            }
        }
        let e = coil_energy(&raw);
        for mut coil in raw.axis_iter_mut(Axis(0)) {
            Zip::from(&mut coil).and(&e).for_each(|s, &en| *s /= en.sqrt());
        }
        CoilSensitivity::new(raw, Array2::from_elem((h, w), true))
            .expect("normalized coil maps satisfy the energy invariant")
    }
}

/// Generate the cine sequence and its coil maps.
pub fn make_cine_phantom(params: &PhantomParams) -> Result<(ImageSeq, CoilSensitivity)> {
    let ph = CinePhantom::new(params.clone())?;
    Ok((ph.images(), ph.coil_sensitivities()))
}

/// Fully sampled and masked k-space from the same forward model.
#[derive(Debug, Clone)]
pub struct Acquisition {
    pub full: KSpace,
    pub undersampled: KSpace,
}

pub fn simulate_acquisition(x: &ImageSeq, s: &CoilSensitivity, m: &SamplingMask) -> Result<Acquisition> {
    let (t, h, w) = x.data().dim();
    let full = forward_a(x, s, &SamplingMask::full(t, h, w))?;
    let undersampled = full.masked(m)?;
    Ok(Acquisition { full, undersampled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::{ifft2c, make_mask, AccelFactor, Trajectory};

    #[test]
    fn frames_are_periodic() {
        let ph = CinePhantom::new(PhantomParams { frames: 6, ..Default::default() }).unwrap();
        for t in 0..6 {
            assert_eq!(ph.frame(t), ph.frame(t + 6));
            assert_eq!(ph.frame(t), ph.frame(t - 12));
        }
    }

    #[test]
    fn coil_energy_is_one() {
        for nc in [1, 4, 8] {
            let (_, s) = make_cine_phantom(&PhantomParams { n_coils: nc, ..Default::default() }).unwrap();
            for e in coil_energy(s.data()).iter() {
                assert!((e - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn myocardial_pixels_vary_over_time() {
        let params = PhantomParams { seed: 3, ..Default::default() };
        let ph = CinePhantom::new(params.clone()).unwrap();
        let x = ph.images().magnitude();
        let mut found = 0;
        for r in 0..params.height {
            for c in 0..params.width {
                if ph.in_myocardial_band(r, c) {
                    let trace = x.slice(ndarray::s![.., r, c]);
                    let mean = trace.mean().unwrap();
                    let var = trace.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / trace.len() as f64;
                    assert!(var > 0.0, "static pixel ({r},{c}) in the beating band");
                    found += 1;
                }
            }
        }
        assert!(found > 0);
        // the temporal mean frame is smoother in time than any single frame
        let mean = x.mean_axis(Axis(0)).unwrap();
        let dev: f64 = x.axis_iter(Axis(0)).map(|f| (&f - &mean).mapv(|d| d * d).sum()).fold(f64::INFINITY, f64::min);
        assert!(dev > 0.0);
    }

    #[test]
    fn contrast_variants_differ() {
        let a = make_cine_phantom(&PhantomParams { contrast: 0, ..Default::default() }).unwrap().0;
        let b = make_cine_phantom(&PhantomParams { contrast: 3, ..Default::default() }).unwrap().0;
        assert_ne!(a, b);
    }

    #[test]
    fn rejects_degenerate_parameters() {
        assert!(CinePhantom::new(PhantomParams { frames: 3, ..Default::default() }).is_err());
        assert!(CinePhantom::new(PhantomParams { contraction_amplitude: 0.5, ..Default::default() }).is_err());
        assert!(CinePhantom::new(PhantomParams { contraction_amplitude: 0.0, ..Default::default() }).is_err());
        assert!(CinePhantom::new(PhantomParams { height: 8, ..Default::default() }).is_err());
    }

    #[test]
    fn acquisition_round_trip_and_masking() {
        let params = PhantomParams { frames: 4, n_coils: 4, ..Default::default() };
        let (x, s) = make_cine_phantom(&params).unwrap();
        let m = make_mask(Trajectory::Uniform, AccelFactor::new(4).unwrap(), 4, 32, 32, 0).unwrap();
        let acq = simulate_acquisition(&x, &s, &m).unwrap();
        // root-sum-of-squares of the coil images reproduces |x|
        let coil = ifft2c(acq.full.data()).unwrap();
        let rss = coil.mapv(|z| z.norm_sqr()).sum_axis(Axis(0)).mapv(f64::sqrt);
        for (a, b) in rss.iter().zip(x.magnitude().iter()) {
            assert!((a - b).abs() < 1e-4);
        }
        assert_eq!(acq.undersampled, acq.full.masked(&m).unwrap());
        let zero = simulate_acquisition(&ImageSeq::zeros(4, 32, 32), &s, &m).unwrap();
        assert!(zero.full.data().iter().all(|z| z.norm() == 0.0));
    }
}
