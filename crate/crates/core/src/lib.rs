//! Prompt-guided unrolled reconstruction of undersampled multi-coil cine MRI.
//!
//! The crate is organised bottom-up:
//!
//! * [`kspace`]: centered FFTs, the encoding operator `A = M F S`, sampling
//!   masks and the data-consistency layer.
//! * [`phantom`]: a synthetic cine phantom, the on-disk dataset format and the
//!   random training-item policy.
//! * [`classical`]: zero-filled, CG-SENSE and GRAPPA baselines, coil map
//!   estimation and image-quality metrics.
//! * [`model`]: the unrolled prompt-guided network.
//! * [`training`]: losses, curriculum schedules, optimisation and validation.

pub mod classical;
pub mod error;
pub mod kspace;
pub mod model;
pub mod phantom;
pub mod training;

pub use error::{Error, Result};
