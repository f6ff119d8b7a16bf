//! Sample preparation and the 18-cell validation table.

use serde::{Deserialize, Serialize};

use crate::classical::{estimate_csm_lowres, evaluate, zero_filled, CropSpec, Metrics};
use crate::error::Result;
use crate::kspace::{
    make_mask, normalize_kspace, AccelFactor, CoilSensitivity, ImageSeq, KSpace, SamplingMask, Trajectory,
};
use crate::model::{tensor_to_image, Upcmr};
use crate::phantom::PhantomSlice;

/// Where coil maps come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsmSource {
    /// The phantom's true maps.
    #[default]
    Reference,
    /// Low-resolution estimate from the calibration region.
    Estimated,
}

/// One undersampled, normalized acquisition with its reference image.
#[derive(Debug, Clone)]
pub struct Sample {
    pub y: KSpace,
    pub csm: CoilSensitivity,
    pub mask: SamplingMask,
    /// Ground truth in the same units as `y`.
    pub gnd: ImageSeq,
    pub scale: f64,
}

/// Mask a slice, normalize the measured k-space and attach coil maps.
pub fn prepare_sample(
    slice: &PhantomSlice,
    trajectory: Trajectory,
    accel: AccelFactor,
    mask_seed: u64,
    csm: CsmSource,
) -> Result<Sample> {
    let (_, t, h, w) = slice.kspace.data().dim();
    let mask = make_mask(trajectory, accel, t, h, w, mask_seed)?;
    let (y, scale) = normalize_kspace(&slice.kspace.masked(&mask)?)?;
    let gnd = ImageSeq::new(slice.ground_truth()?.into_data().mapv(|z| z / scale))?;
    let csm = match csm {
        CsmSource::Reference => slice.csm.clone(),
        CsmSource::Estimated => estimate_csm_lowres(&y, mask.acs)?,
    };
    Ok(Sample { y, csm, mask, gnd, scale })
}

/// Model reconstruction of one sample.
pub fn reconstruct(model: &Upcmr, sample: &Sample) -> Result<ImageSeq> {
    let out = model.forward(
        &sample.y,
        &sample.csm,
        &sample.mask,
        sample.mask.trajectory.index(),
        sample.mask.accel.index(),
    )?;
    tensor_to_image(&out.image.detach())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population statistics; NaN for an empty slice.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub psnr: MeanStd,
    pub ssim: MeanStd,
    pub nmse: MeanStd,
}

impl MetricStats {
    pub fn of(values: &[Metrics]) -> Self {
        let pick = |f: fn(&Metrics) -> f64| MeanStd::of(&values.iter().map(f).collect::<Vec<_>>());
        MetricStats {
            psnr: pick(|m| m.psnr),
            ssim: pick(|m| m.ssim),
            nmse: pick(|m| m.nmse),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub trajectory: Trajectory,
    pub accel: usize,
    pub method: MetricStats,
    pub zero_filled: MetricStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationTable {
    /// Trajectory-major, acceleration-minor.
    pub cells: Vec<CellReport>,
    pub overall: MetricStats,
    pub overall_zero_filled: MetricStats,
}

impl ValidationTable {
    pub fn cell(&self, trajectory: Trajectory, accel: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.trajectory == trajectory && c.accel == accel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidateOptions {
    pub crop: CropSpec,
    pub csm: CsmSource,
    pub mask_seed: u64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            crop: CropSpec::default(),
            csm: CsmSource::Reference,
            mask_seed: 0x5eed,
        }
    }
}

/// Seed of the validation mask for a slice and cell, fixed across calls.
pub fn validation_mask_seed(base: u64, slice: usize, cell: usize) -> u64 {
    base.wrapping_add((slice * 18 + cell) as u64)
}

/// Reconstruct every slice under all 18 combinations with `recon` and
/// tabulate central-crop metrics next to zero filling.
pub fn validate_with<F>(val: &[PhantomSlice], opts: &ValidateOptions, mut recon: F) -> Result<ValidationTable>
where
    F: FnMut(&Sample) -> Result<ImageSeq>,
{
    let mut cells = Vec::with_capacity(18);
    let (mut all, mut all_zf) = (Vec::new(), Vec::new());
    for (ci, (trajectory, accel)) in Trajectory::ALL
        .iter()
        .flat_map(|&t| AccelFactor::all().map(move |a| (t, a)))
        .enumerate()
    {
        let (mut ms, mut zs) = (Vec::new(), Vec::new());
        for (si, slice) in val.iter().enumerate() {
            let seed = validation_mask_seed(opts.mask_seed, si, ci);
            let sample = prepare_sample(slice, trajectory, accel, seed, opts.csm)?;
            let gnd = sample.gnd.magnitude();
            ms.push(evaluate(&recon(&sample)?.magnitude(), &gnd, opts.crop)?);
            let zf = zero_filled(&sample.y, &sample.csm, &sample.mask)?;
            zs.push(evaluate(&zf.magnitude(), &gnd, opts.crop)?);
        }
        cells.push(CellReport {
            trajectory,
            accel: accel.value(),
            method: MetricStats::of(&ms),
            zero_filled: MetricStats::of(&zs),
        });
        all.extend(ms);
        all_zf.extend(zs);
    }
    Ok(ValidationTable {
        cells,
        overall: MetricStats::of(&all),
        overall_zero_filled: MetricStats::of(&all_zf),
    })
}

/// [`validate_with`] using the model.
pub fn validate(model: &Upcmr, val: &[PhantomSlice], opts: &ValidateOptions) -> Result<ValidationTable> {
    validate_with(val, opts, |s| reconstruct(model, s))
}
