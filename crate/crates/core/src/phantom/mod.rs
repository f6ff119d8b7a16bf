//! Synthetic cine data, its on-disk format and the training sampling policy.

pub mod dataset;
pub mod generator;
pub mod sampling;

pub use dataset::{read_dataset, write_dataset, Dataset, DatasetManifest, PhantomSlice};
pub use generator::{make_cine_phantom, simulate_acquisition, Acquisition, CinePhantom, PhantomParams};
pub use sampling::{sample_training_item, SamplingTables, TrainingItem};

use crate::error::Result;
use crate::kspace::SamplingMask;

/// Generate `n_slices` phantom slices from a template, varying seed and
/// cycling contrast variants.
pub fn generate_slices(template: &PhantomParams, n_slices: usize, seed: u64) -> Result<Vec<PhantomSlice>> {
    (0..n_slices)
        .map(|i| {
            let params = PhantomParams {
                contrast: i % template.n_contrast_variants,
                seed: seed.wrapping_mul(1_000_003).wrapping_add(i as u64),
                ..template.clone()
            };
            let (x, s) = make_cine_phantom(&params)?;
            let full = SamplingMask::full(params.frames, params.height, params.width);
            let acq = simulate_acquisition(&x, &s, &full)?;
            Ok(PhantomSlice {
                id: i,
                contrast: params.contrast,
                kspace: acq.full,
                csm: s,
            })
        })
        .collect()
}
