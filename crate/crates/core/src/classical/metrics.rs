//! Image-quality metrics on magnitude images, evaluated per frame on a
//! central crop and averaged over frames.

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Central crop geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CropSpec {
    /// Keep the whole image.
    Full,
    /// Keep `round(fraction·H) × round(fraction·W)`.
    Fraction(f64),
    /// Keep an absolute `rows × cols` window.
    Size(usize, usize),
}

impl Default for CropSpec {
    fn default() -> Self {
        CropSpec::Fraction(0.5)
    }
}

impl std::str::FromStr for CropSpec {
    type Err = Error;

    /// `full`, `half`, a fraction like `0.5`, or `ROWSxCOLS`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "full" | "none" => return Ok(CropSpec::Full),
            "half" => return Ok(CropSpec::Fraction(0.5)),
            _ => {}
        }
        if let Some((a, b)) = s.split_once('x') {
            let r = a.parse().map_err(|_| Error::invalid(format!("bad crop '{s}'")))?;
            let c = b.parse().map_err(|_| Error::invalid(format!("bad crop '{s}'")))?;
            return Ok(CropSpec::Size(r, c));
        }
        let f: f64 = s.parse().map_err(|_| Error::invalid(format!("bad crop '{s}'")))?;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::invalid(format!("crop fraction {f} outside (0, 1]")));
        }
        Ok(CropSpec::Fraction(f))
    }
}

impl CropSpec {
    pub fn window(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (ch, cw) = match *self {
            CropSpec::Full => (h, w),
            CropSpec::Fraction(f) => (
                ((h as f64 * f).round() as usize).max(1),
                ((w as f64 * f).round() as usize).max(1),
            ),
            CropSpec::Size(r, c) => (r, c),
        };
        if ch == 0 || cw == 0 || ch > h || cw > w {
            return Err(Error::invalid(format!("crop {ch}x{cw} does not fit {h}x{w}")));
        }
        Ok((ch, cw))
    }
}

/// Centered crop of the last two axes.
pub fn central_crop<T: Clone>(img: &Array3<T>, crop: CropSpec) -> Result<Array3<T>> {
    let (_, h, w) = img.dim();
    let (ch, cw) = crop.window(h, w)?;
    let (r0, c0) = ((h - ch) / 2, (w - cw) / 2);
    Ok(img.slice(s![.., r0..r0 + ch, c0..c0 + cw]).to_owned())
}

fn check_same(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("metric inputs {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// `10·log10(max(gnd)² / mse)`; `+∞` when the images agree exactly.
pub fn psnr_frame(rec: &ArrayView2<f64>, gnd: &ArrayView2<f64>) -> Result<f64> {
    check_same(rec, gnd)?;
    let mse = rec.iter().zip(gnd.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / rec.len() as f64;
    let peak = gnd.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// `‖rec − gnd‖² / ‖gnd‖²`
pub fn nmse_frame(rec: &ArrayView2<f64>, gnd: &ArrayView2<f64>) -> Result<f64> {
    check_same(rec, gnd)?;
    let den: f64 = gnd.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::invalid("NMSE reference is identically zero"));
    }
    let num: f64 = rec.iter().zip(gnd.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(num / den)
}

/// Normalized 1D Gaussian taps of the SSIM window.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= sum);
    g
}

/// Separable Gaussian filter, valid region only.
fn blur_valid(img: &Array2<f64>, taps: &[f64; SSIM_WINDOW]) -> Array2<f64> {
    let (h, w) = img.dim();
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = Array2::<f64>::zeros((h, ow));
    for r in 0..h {
        for c in 0..ow {
            rows[[r, c]] = (0..SSIM_WINDOW).map(|k| taps[k] * img[[r, c + k]]).sum();
        }
    }
    let mut out = Array2::<f64>::zeros((oh, ow));
    for r in 0..oh {
        for c in 0..ow {
            out[[r, c]] = (0..SSIM_WINDOW).map(|k| taps[k] * rows[[r + k, c]]).sum();
        }
    }
    out
}

/// Mean local SSIM with an 11×11 Gaussian window (σ = 1.5) over the valid
/// region; dynamic range is `max(gnd)`.
pub fn ssim_frame(rec: &ArrayView2<f64>, gnd: &ArrayView2<f64>) -> Result<f64> {
    check_same(rec, gnd)?;
    let (h, w) = rec.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")));
    }
    let range = gnd.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    ssim_with_range(rec, gnd, range)
}

pub(crate) fn ssim_with_range(rec: &ArrayView2<f64>, gnd: &ArrayView2<f64>, range: f64) -> Result<f64> {
    let taps = gaussian_taps();
    let x = rec.to_owned();
    let y = gnd.to_owned();
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let mx = blur_valid(&x, &taps);
    let my = blur_valid(&y, &taps);
    let mxx = blur_valid(&(&x * &x), &taps);
    let myy = blur_valid(&(&y * &y), &taps);
    let mxy = blur_valid(&(&x * &y), &taps);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (r, c) = (i / mx.ncols(), i % mx.ncols());
        let (a, b) = (mx[[r, c]], my[[r, c]]);
        let vx = mxx[[r, c]] - a * a;
        let vy = myy[[r, c]] - b * b;
        let cxy = mxy[[r, c]] - a * b;
        total += ((2.0 * a * b + c1) * (2.0 * cxy + c2)) / ((a * a + b * b + c1) * (vx + vy + c2));
    }
    let v = total / mx.len() as f64;
    if !v.is_finite() {
        return Err(Error::NonFinite("SSIM".into()));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub psnr: f64,
    pub ssim: f64,
    pub nmse: f64,
}

/// Per-frame metrics on the central crop of magnitude sequences, averaged
/// over frames.
pub fn evaluate(rec: &Array3<f64>, gnd: &Array3<f64>, crop: CropSpec) -> Result<Metrics> {
    if rec.dim() != gnd.dim() {
        return Err(Error::shape(format!("rec {:?} vs gnd {:?}", rec.dim(), gnd.dim())));
    }
    let rc = central_crop(rec, crop)?;
    let gc = central_crop(gnd, crop)?;
    let n = rc.dim().0 as f64;
    let mut m = Metrics { psnr: 0.0, ssim: 0.0, nmse: 0.0 };
    for (a, b) in rc.axis_iter(Axis(0)).zip(gc.axis_iter(Axis(0))) {
        m.psnr += psnr_frame(&a, &b)? / n;
        m.ssim += ssim_frame(&a, &b)? / n;
        m.nmse += nmse_frame(&a, &b)? / n;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn crop_geometry() {
        let img = Array3::from_shape_fn((1, 64, 64), |(_, r, c)| (r * 64 + c) as f64);
        let c = central_crop(&img, CropSpec::default()).unwrap();
        assert_eq!(c.dim(), (1, 32, 32));
        assert_eq!(c[[0, 0, 0]], (16 * 64 + 16) as f64);
        assert_eq!(central_crop(&img, CropSpec::Size(64, 64)).unwrap(), img);
        let once = central_crop(&img, CropSpec::Size(20, 20)).unwrap();
        assert_eq!(central_crop(&once, CropSpec::Size(20, 20)).unwrap(), once);
        assert!(central_crop(&img, CropSpec::Size(65, 10)).is_err());
        assert_eq!("16x12".parse::<CropSpec>().unwrap(), CropSpec::Size(16, 12));
        assert_eq!("half".parse::<CropSpec>().unwrap(), CropSpec::Fraction(0.5));
    }

    #[test]
    fn identical_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((32, 32), |_| rng.random_range(0.0..1.0));
        assert_eq!(psnr_frame(&x.view(), &x.view()).unwrap(), f64::INFINITY);
        assert_eq!(nmse_frame(&x.view(), &x.view()).unwrap(), 0.0);
        assert!((ssim_frame(&x.view(), &x.view()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_of_known_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sigma = 0.01;
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut gnd = Array2::from_shape_fn((128, 128), |_| rng.random_range(0.5..1.0));
        gnd[[0, 0]] = 1.0;
        let rec = gnd.mapv(|v| v + noise.sample(&mut rng));
        let p = psnr_frame(&rec.view(), &gnd.view()).unwrap();
        let want = 10.0 * (1.0 / (sigma * sigma)).log10();
        assert!((p - want).abs() < 0.5, "{p} vs {want}");
    }

    #[test]
    fn nmse_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Array2::from_shape_fn((16, 16), |_| rng.random_range(0.0..1.0));
        let b = Array2::from_shape_fn((16, 16), |_| rng.random_range(0.0..1.0));
        let n1 = nmse_frame(&a.view(), &b.view()).unwrap();
        let n2 = nmse_frame(&(&a * 7.0).view(), &(&b * 7.0).view()).unwrap();
        assert!((n1 - n2).abs() < 1e-12);
        assert!(nmse_frame(&a.view(), &Array2::zeros((16, 16)).view()).is_err());
    }

    #[test]
    fn ssim_detects_degradation_and_rejects_small_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Array2::from_shape_fn((24, 24), |_| rng.random_range(0.0..1.0));
        let b = a.mapv(|v| v * 0.5 + 0.1);
        assert!(ssim_frame(&b.view(), &a.view()).unwrap() < 0.99);
        let small = Array2::<f64>::zeros((10, 10));
        assert!(ssim_frame(&small.view(), &small.view()).is_err());
    }
}
