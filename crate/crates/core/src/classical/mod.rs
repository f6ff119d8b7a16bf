//! Non-learned baselines and image-quality metrics.

pub mod csm;
pub mod grappa;
pub mod metrics;
pub mod sense;

pub use csm::estimate_csm_lowres;
pub use grappa::{grappa_uniform, GrappaCalibration, GrappaKernel, GrappaResult, OffsetKernel};
pub use metrics::{central_crop, evaluate, nmse_frame, psnr_frame, ssim_frame, CropSpec, Metrics};
pub use sense::{cg_sense, zero_filled, CgOptions, CgResult};
