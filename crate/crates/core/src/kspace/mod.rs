//! Fourier transforms, the multi-coil encoding operator, sampling masks and
//! the data-consistency layer.

pub mod dc;
pub mod fft;
pub mod mask;
pub mod ops;
pub mod types;

pub use dc::{data_consistency, data_consistency_kspace, normalize_kspace};
pub use fft::{fft2c, ifft2c};
pub use mask::{make_mask, uniform_pattern};
pub use ops::{adjoint_a, expand_coils, forward_a, reduce_coils};
pub use types::{
    AccelFactor, AcsRegion, CoilSensitivity, ImageSeq, KSpace, SamplingMask, Trajectory,
    ACCEL_FACTORS, ACS_SIZE,
};
