//! Data consistency as a differentiable tensor operation.
//!
//! The forward pass runs the double-precision k-space blend. Its Jacobian
//! with respect to the image is `Sᴴ F⁻¹ W F S`, where `W` is 1 off the
//! sampled set and `1/(1+λ₀)` on it. That map is self-adjoint, so the
//! backward pass applies the same operator to the incoming gradient.

use std::sync::{Arc, Mutex};

use candle_core::{CpuStorage, CustomOp1, Device, Layout, Shape, Tensor};
use ndarray::{Array3, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kspace::{
    data_consistency_kspace, dc::sampled_weight, expand_coils, fft2c, ifft2c, reduce_coils, CoilSensitivity,
    ImageSeq, KSpace, SamplingMask,
};

/// Complex `[T, H, W]` to a real `[1, T, 2, H, W]` tensor (real, imaginary).
pub fn image_to_tensor(x: &ImageSeq) -> Result<Tensor> {
    let (t, h, w) = x.data().dim();
    Ok(Tensor::from_vec(image_to_vec(x.data()), (1, t, 2, h, w), &Device::Cpu)?)
}

fn image_to_vec(x: &Array3<Complex64>) -> Vec<f32> {
    let (t, h, w) = x.dim();
    let mut v = Vec::with_capacity(t * 2 * h * w);
    for f in 0..t {
        for part in 0..2 {
            for r in 0..h {
                for c in 0..w {
                    let z = x[[f, r, c]];
                    v.push(if part == 0 { z.re as f32 } else { z.im as f32 });
                }
            }
        }
    }
    v
}

fn vec_to_image(v: &[f32], t: usize, h: usize, w: usize) -> Array3<Complex64> {
    Array3::from_shape_fn((t, h, w), |(f, r, c)| {
        let base = f * 2 * h * w + r * w + c;
        Complex64::new(v[base] as f64, v[base + h * w] as f64)
    })
}

/// Real `[1, T, 2, H, W]` tensor back to a complex image sequence.
pub fn tensor_to_image(x: &Tensor) -> Result<ImageSeq> {
    let (b, t, two, h, w) = x.dims5()?;
    if b != 1 || two != 2 {
        return Err(Error::shape(format!("expected [1, T, 2, H, W], got {:?}", x.dims())));
    }
    let v = x.flatten_all()?.to_dtype(candle_core::DType::F32)?.to_vec1::<f32>()?;
    ImageSeq::new(vec_to_image(&v, t, h, w))
}

/// Measurements and encoding shared by every cascade of one forward pass.
#[derive(Debug)]
pub struct DcContext {
    pub y: KSpace,
    pub csm: CoilSensitivity,
    pub mask: SamplingMask,
    pub lambda0: f64,
    /// `max |k_out − y|` over the sampled set, one entry per application.
    residuals: Mutex<Vec<f64>>,
}

impl DcContext {
    pub fn new(y: KSpace, csm: CoilSensitivity, mask: SamplingMask, lambda0: f64) -> Result<Arc<Self>> {
        crate::kspace::dc::check_lambda0(lambda0)?;
        let (nc, t, h, w) = y.data().dim();
        if csm.data().dim() != (nc, h, w) || mask.data().dim() != (t, h, w) {
            return Err(Error::shape("measurements, coil maps and mask disagree"));
        }
        Ok(Arc::new(DcContext {
            y,
            csm,
            mask,
            lambda0,
            residuals: Mutex::new(Vec::new()),
        }))
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.residuals.lock().expect("residual log poisoned").clone()
    }

    /// Apply DC to a `[1, T, 2, H, W]` tensor.
    pub fn apply(self: &Arc<Self>, z: &Tensor) -> Result<Tensor> {
        Ok(z.contiguous()?.apply_op1(DcOp { ctx: self.clone() })?)
    }

    fn forward_image(&self, z: &ImageSeq) -> Result<ImageSeq> {
        let k = data_consistency_kspace(z, &self.y, &self.csm, &self.mask, self.lambda0)?;
        let mut worst = 0.0_f64;
        Zip::from(k.lanes(ndarray::Axis(0)))
            .and(self.y.data().lanes(ndarray::Axis(0)))
            .and(self.mask.data())
            .for_each(|kl, yl, &sampled| {
                if sampled {
                    for (a, b) in kl.iter().zip(yl.iter()) {
                        worst = worst.max((a - b).norm());
                    }
                }
            });
        self.residuals.lock().expect("residual log poisoned").push(worst);
        reduce_coils(&ifft2c(&k)?, &self.csm)
    }

    /// `Sᴴ F⁻¹ W F S g`.
    fn jacobian(&self, g: &ImageSeq) -> Result<ImageSeq> {
        let mut k = fft2c(&expand_coils(g, &self.csm)?)?;
        let ws = sampled_weight(self.lambda0);
        let nc = k.dim().0;
        for c in 0..nc {
            let mut kc = k.index_axis_mut(ndarray::Axis(0), c);
            Zip::from(&mut kc).and(self.mask.data()).for_each(|v, &sampled| {
                if sampled {
                    *v *= ws;
                }
            });
        }
        reduce_coils(&ifft2c(&k)?, &self.csm)
    }
}

struct DcOp {
    ctx: Arc<DcContext>,
}

fn map_err(e: Error) -> candle_core::Error {
    candle_core::Error::Msg(e.to_string())
}

impl CustomOp1 for DcOp {
    fn name(&self) -> &'static str {
        "data-consistency"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let dims = layout.shape().dims();
        if dims.len() != 5 || dims[0] != 1 || dims[2] != 2 {
            return Err(candle_core::Error::Msg(format!("DC expects [1, T, 2, H, W], got {dims:?}")));
        }
        let (t, h, w) = (dims[1], dims[3], dims[4]);
        let data = match storage {
            CpuStorage::F32(v) => v,
            _ => return Err(candle_core::Error::Msg("DC expects f32 input".into())),
        };
        let (start, end) = layout
            .contiguous_offsets()
            .ok_or_else(|| candle_core::Error::Msg("DC expects contiguous input".into()))?;
        let z = ImageSeq::new(vec_to_image(&data[start..end], t, h, w)).map_err(map_err)?;
        let out = self.ctx.forward_image(&z).map_err(map_err)?;
        Ok((CpuStorage::F32(image_to_vec(out.data())), layout.shape().clone()))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad_res: &Tensor) -> candle_core::Result<Option<Tensor>> {
        let g = tensor_to_image(grad_res).map_err(map_err)?;
        let back = self.ctx.jacobian(&g).map_err(map_err)?;
        let (t, h, w) = back.data().dim();
        Ok(Some(Tensor::from_vec(image_to_vec(back.data()), (1, t, 2, h, w), &Device::Cpu)?))
    }
}
