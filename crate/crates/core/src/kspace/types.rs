use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3, Array4, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supported acceleration factors, in pool order.
pub const ACCEL_FACTORS: [usize; 6] = [4, 8, 12, 16, 20, 24];

/// Number of fully sampled central lines (or block edge) in every mask.
pub const ACS_SIZE: usize = 16;

/// Sampling pattern family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trajectory {
    Uniform,
    Gaussian,
    PseudoRadial,
}

impl Trajectory {
    pub const ALL: [Trajectory; 3] = [
        Trajectory::Uniform,
        Trajectory::Gaussian,
        Trajectory::PseudoRadial,
    ];

    /// Row index into the trajectory prompt pool.
    pub fn index(self) -> usize {
        match self {
            Trajectory::Uniform => 0,
            Trajectory::Gaussian => 1,
            Trajectory::PseudoRadial => 2,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::invalid(format!("trajectory index {i} out of range 0..3")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Trajectory::Uniform => "uniform",
            Trajectory::Gaussian => "gaussian",
            Trajectory::PseudoRadial => "pseudo_radial",
        }
    }
}

impl fmt::Display for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Trajectory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Trajectory::Uniform),
            "gaussian" => Ok(Trajectory::Gaussian),
            "pseudo_radial" | "radial" => Ok(Trajectory::PseudoRadial),
            other => Err(Error::invalid(format!("unknown trajectory '{other}'"))),
        }
    }
}

/// One of the six supported acceleration factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct AccelFactor(usize);

impl AccelFactor {
    pub fn new(r: usize) -> Result<Self> {
        if ACCEL_FACTORS.contains(&r) {
            Ok(AccelFactor(r))
        } else {
            Err(Error::invalid(format!(
                "unsupported acceleration factor {r}; expected one of {ACCEL_FACTORS:?}"
            )))
        }
    }

    pub fn all() -> impl Iterator<Item = AccelFactor> {
        ACCEL_FACTORS.iter().map(|&r| AccelFactor(r))
    }

    pub fn value(self) -> usize {
        self.0
    }

    /// Row index into the acceleration prompt pool.
    pub fn index(self) -> usize {
        ACCEL_FACTORS.iter().position(|&r| r == self.0).unwrap()
    }

    pub fn from_index(i: usize) -> Result<Self> {
        ACCEL_FACTORS
            .get(i)
            .map(|&r| AccelFactor(r))
            .ok_or_else(|| Error::invalid(format!("acceleration index {i} out of range 0..6")))
    }
}

impl TryFrom<usize> for AccelFactor {
    type Error = Error;
    fn try_from(r: usize) -> Result<Self> {
        AccelFactor::new(r)
    }
}

impl From<AccelFactor> for usize {
    fn from(a: AccelFactor) -> usize {
        a.0
    }
}

impl fmt::Display for AccelFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Fully sampled calibration region of a mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AcsRegion {
    /// Rows `start..end`, every column.
    Rows { start: usize, end: usize },
    /// Rectangular block `rows × cols`.
    Block {
        rows: (usize, usize),
        cols: (usize, usize),
    },
}

impl AcsRegion {
    /// Central 16 rows of an `h`-row grid.
    pub fn central_rows(h: usize) -> Self {
        let start = (h / 2).saturating_sub(ACS_SIZE / 2);
        AcsRegion::Rows {
            start,
            end: (start + ACS_SIZE).min(h),
        }
    }

    /// Central 16×16 block.
    pub fn central_block(h: usize, w: usize) -> Self {
        let r0 = (h / 2).saturating_sub(ACS_SIZE / 2);
        let c0 = (w / 2).saturating_sub(ACS_SIZE / 2);
        AcsRegion::Block {
            rows: (r0, (r0 + ACS_SIZE).min(h)),
            cols: (c0, (c0 + ACS_SIZE).min(w)),
        }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        match *self {
            AcsRegion::Rows { start, end } => row >= start && row < end,
            AcsRegion::Block { rows, cols } => {
                row >= rows.0 && row < rows.1 && col >= cols.0 && col < cols.1
            }
        }
    }

    pub fn contains_row(&self, row: usize) -> bool {
        match *self {
            AcsRegion::Rows { start, end } => row >= start && row < end,
            AcsRegion::Block { rows, .. } => row >= rows.0 && row < rows.1,
        }
    }

    pub fn row_range(&self) -> (usize, usize) {
        match *self {
            AcsRegion::Rows { start, end } => (start, end),
            AcsRegion::Block { rows, .. } => rows,
        }
    }
}

fn check_finite<'a>(it: impl IntoIterator<Item = &'a Complex64>, what: &str) -> Result<()> {
    if it.into_iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Multi-coil k-space, laid out `[coil, frame, row, col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpace {
    data: Array4<Complex64>,
}

impl KSpace {
    pub fn new(data: Array4<Complex64>) -> Result<Self> {
        let (nc, nt, h, w) = data.dim();
        if nc == 0 || nt == 0 || h == 0 || w == 0 {
            return Err(Error::shape(format!("empty k-space {:?}", data.dim())));
        }
        check_finite(data.iter(), "k-space")?;
        Ok(KSpace { data })
    }

    pub fn zeros(n_coils: usize, frames: usize, h: usize, w: usize) -> Self {
        KSpace {
            data: Array4::zeros((n_coils, frames, h, w)),
        }
    }

    pub fn data(&self) -> &Array4<Complex64> {
        &self.data
    }

    pub fn into_data(self) -> Array4<Complex64> {
        self.data
    }

    pub fn n_coils(&self) -> usize {
        self.data.dim().0
    }

    pub fn frames(&self) -> usize {
        self.data.dim().1
    }

    /// `(height, width)`
    pub fn spatial(&self) -> (usize, usize) {
        let d = self.data.dim();
        (d.2, d.3)
    }

    /// Multiply by a binary mask broadcast over coils.
    pub fn masked(&self, mask: &SamplingMask) -> Result<KSpace> {
        let mut out = self.data.clone();
        apply_mask(&mut out, mask.data())?;
        Ok(KSpace { data: out })
    }
}

pub(crate) fn apply_mask(data: &mut Array4<Complex64>, mask: &Array3<bool>) -> Result<()> {
    let (_, nt, h, w) = data.dim();
    if mask.dim() != (nt, h, w) {
        return Err(Error::shape(format!(
            "mask {:?} does not match k-space frames/grid {:?}",
            mask.dim(),
            (nt, h, w)
        )));
    }
    for mut coil in data.axis_iter_mut(Axis(0)) {
        ndarray::Zip::from(&mut coil).and(mask).for_each(|v, &m| {
            if !m {
                *v = Complex64::new(0.0, 0.0);
            }
        });
    }
    Ok(())
}

/// Complex image sequence `[frame, row, col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSeq {
    data: Array3<Complex64>,
}

impl ImageSeq {
    pub fn new(data: Array3<Complex64>) -> Result<Self> {
        check_finite(data.iter(), "image sequence")?;
        Ok(ImageSeq { data })
    }

    pub fn zeros(frames: usize, h: usize, w: usize) -> Self {
        ImageSeq {
            data: Array3::zeros((frames, h, w)),
        }
    }

    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array3<Complex64> {
        self.data
    }

    pub fn frames(&self) -> usize {
        self.data.dim().0
    }

    pub fn spatial(&self) -> (usize, usize) {
        let d = self.data.dim();
        (d.1, d.2)
    }

    pub fn magnitude(&self) -> Array3<f64> {
        self.data.mapv(|z| z.norm())
    }
}

/// Per-coil sensitivity maps `[coil, row, col]` with their support.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilSensitivity {
    data: Array3<Complex64>,
    support: Array2<bool>,
}

impl CoilSensitivity {
    /// Validates the energy invariants: Σ|S_c|² = 1 on support, ≤ 1 elsewhere.
    pub fn new(data: Array3<Complex64>, support: Array2<bool>) -> Result<Self> {
        let (nc, h, w) = data.dim();
        if nc == 0 {
            return Err(Error::shape("coil sensitivity with zero coils"));
        }
        if support.dim() != (h, w) {
            return Err(Error::shape(format!(
                "support {:?} does not match maps {:?}",
                support.dim(),
                (h, w)
            )));
        }
        check_finite(data.iter(), "coil sensitivity")?;
        let energy = coil_energy(&data);
        for ((r, c), &e) in energy.indexed_iter() {
            if support[[r, c]] {
                if (e - 1.0).abs() > 1e-5 {
                    return Err(Error::invalid(format!(
                        "coil energy {e} at supported pixel ({r},{c}) is not 1"
                    )));
                }
            } else if e > 1.0 + 1e-5 {
                return Err(Error::invalid(format!(
                    "coil energy {e} at unsupported pixel ({r},{c}) exceeds 1"
                )));
            }
        }
        Ok(CoilSensitivity { data, support })
    }

    /// Recovers the support as the pixels whose coil energy is near one.
    pub fn from_maps(data: Array3<Complex64>) -> Result<Self> {
        let support = coil_energy(&data).mapv(|e| e > 0.5);
        Self::new(data, support)
    }

    /// Single coil with unit sensitivity everywhere.
    pub fn unit(h: usize, w: usize) -> Self {
        CoilSensitivity {
            data: Array3::from_elem((1, h, w), Complex64::new(1.0, 0.0)),
            support: Array2::from_elem((h, w), true),
        }
    }

    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    pub fn support(&self) -> &Array2<bool> {
        &self.support
    }

    pub fn n_coils(&self) -> usize {
        self.data.dim().0
    }

    pub fn spatial(&self) -> (usize, usize) {
        let d = self.data.dim();
        (d.1, d.2)
    }
}

pub(crate) fn coil_energy(data: &Array3<Complex64>) -> Array2<f64> {
    data.map(|z| z.norm_sqr()).sum_axis(Axis(0))
}

/// Binary sampling pattern `[frame, row, col]` and how it was made.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    data: Array3<bool>,
    pub trajectory: Trajectory,
    pub accel: AccelFactor,
    pub acs: AcsRegion,
    pub seed: u64,
}

impl SamplingMask {
    pub(crate) fn from_parts(
        data: Array3<bool>,
        trajectory: Trajectory,
        accel: AccelFactor,
        acs: AcsRegion,
        seed: u64,
    ) -> Self {
        SamplingMask {
            data,
            trajectory,
            accel,
            acs,
            seed,
        }
    }

    /// Every sample acquired; tagged as uniform/4 with a row ACS.
    pub fn full(frames: usize, h: usize, w: usize) -> Self {
        SamplingMask {
            data: Array3::from_elem((frames, h, w), true),
            trajectory: Trajectory::Uniform,
            accel: AccelFactor(4),
            acs: AcsRegion::central_rows(h),
            seed: 0,
        }
    }

    /// Same tags with a different pattern, e.g. a comb at an acceleration
    /// outside the training set. The calibration region must stay sampled.
    pub fn with_pattern(self, data: Array3<bool>) -> Result<Self> {
        if data.dim() != self.data.dim() {
            return Err(Error::shape(format!(
                "pattern {:?} does not match mask {:?}",
                data.dim(),
                self.data.dim()
            )));
        }
        for ((_, r, c), &b) in data.indexed_iter() {
            if !b && self.acs.contains(r, c) {
                return Err(Error::invalid("pattern leaves the calibration region unsampled"));
            }
        }
        Ok(SamplingMask { data, ..self })
    }

    /// Nothing acquired.
    pub fn empty(frames: usize, h: usize, w: usize) -> Self {
        SamplingMask {
            data: Array3::from_elem((frames, h, w), false),
            ..Self::full(frames, h, w)
        }
    }

    pub fn data(&self) -> &Array3<bool> {
        &self.data
    }

    pub fn frames(&self) -> usize {
        self.data.dim().0
    }

    pub fn spatial(&self) -> (usize, usize) {
        let d = self.data.dim();
        (d.1, d.2)
    }

    /// Fraction of acquired samples.
    pub fn density(&self) -> f64 {
        self.data.iter().filter(|&&b| b).count() as f64 / self.data.len() as f64
    }

    /// Rows of frame `t` that are fully sampled across the readout.
    pub fn sampled_rows(&self, t: usize) -> Vec<usize> {
        self.data
            .index_axis(Axis(0), t)
            .outer_iter()
            .enumerate()
            .filter(|(_, row)| row.iter().all(|&b| b))
            .map(|(h, _)| h)
            .collect()
    }
}
