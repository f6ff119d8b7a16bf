//! The unrolled prompt-guided reconstruction network.
//!
//! Each cascade refines the current image with a [`UnetBlock`] and then
//! enforces data consistency. Prompt updates from every cascade feed an
//! auxiliary classifier that predicts the trajectory and acceleration.

pub mod blocks;
pub mod dc;
pub mod layers;
pub mod params;
pub mod unet;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use candle_core::{Tensor, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use blocks::{FilmBlock, PromptBlock, PromptPools, TcaBlock, PROMPT_SIZE};
pub use dc::{image_to_tensor, tensor_to_image, DcContext};
pub use layers::{Conv2Plus1d, Conv2d, Linear, TemporalConv};
pub use params::{Init, ParamStore};
pub use unet::{CascadeFeatures, UnetBlock, UnetOutput, PROMPTS_PER_BLOCK};

use crate::error::{Error, Result};
use crate::kspace::{adjoint_a, CoilSensitivity, KSpace, SamplingMask};

pub const MIN_CASCADES: usize = 3;
pub const MAX_CASCADES: usize = 8;
pub const PARAMS_FILE: &str = "params.safetensors";
pub const CHECKPOINT_MANIFEST: &str = "checkpoint.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_cascades: usize,
    pub channels: usize,
    pub unet_levels: usize,
    /// `inf` for hard data consistency.
    pub lambda0: f64,
    /// Whether the classification loss is used during training.
    pub classifier: bool,
    /// Seed of the parameter initialization.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_cascades: MAX_CASCADES,
            channels: 64,
            unet_levels: 2,
            lambda0: f64::INFINITY,
            classifier: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_CASCADES..=MAX_CASCADES).contains(&self.n_cascades) {
            return Err(Error::invalid(format!(
                "n_cascades must be in {MIN_CASCADES}..={MAX_CASCADES}, got {}",
                self.n_cascades
            )));
        }
        if self.channels == 0 {
            return Err(Error::invalid("channels must be positive"));
        }
        if self.unet_levels != 2 {
            return Err(Error::invalid(format!("only 2 UNet levels are supported, got {}", self.unet_levels)));
        }
        crate::kspace::dc::check_lambda0(self.lambda0)
    }
}

/// Two-layer trunk with trajectory (3-way) and acceleration (6-way) heads.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub trunk1: Linear,
    pub trunk2: Linear,
    pub trajectory: Linear,
    pub accel: Linear,
}

impl Classifier {
    pub fn new(init: &mut Init, in_dim: usize, c: usize) -> Result<Self> {
        Ok(Classifier {
            trunk1: Linear::new(&mut init.sub("trunk1"), in_dim, c)?,
            trunk2: Linear::new(&mut init.sub("trunk2"), c, c)?,
            trajectory: Linear::new(&mut init.sub("trajectory"), c, 3)?,
            accel: Linear::new(&mut init.sub("accel"), c, 6)?,
        })
    }

    /// `prompts` is `[B, n_cascades·4C]`; returns `([B, 3], [B, 6])` logits.
    pub fn forward(&self, prompts: &Tensor) -> Result<(Tensor, Tensor)> {
        let h = self.trunk1.forward(prompts)?.relu()?;
        let h = self.trunk2.forward(&h)?.relu()?;
        Ok((self.trajectory.forward(&h)?, self.accel.forward(&h)?))
    }
}

/// Per-cascade intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Zero-filled input `[1, T, 2, H, W]`.
    pub zero_filled: Tensor,
    /// Image after each cascade's DC step.
    pub cascade_outputs: Vec<Tensor>,
    /// Features handed on by each cascade.
    pub features: Vec<CascadeFeatures>,
    /// `max |k_out − y|` on the sampled set after each cascade.
    pub dc_residuals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `[1, T, 2, H, W]`
    pub image: Tensor,
    pub logits_trajectory: Tensor,
    pub logits_accel: Tensor,
    pub trace: ForwardTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub stage: usize,
    pub epoch: usize,
    /// Epochs completed over the whole schedule.
    pub global_epoch: usize,
    pub strategy: String,
}

#[derive(Debug, Clone)]
pub struct Upcmr {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub pools: PromptPools,
    pub cascades: Vec<UnetBlock>,
    pub classifier: Classifier,
}

impl Upcmr {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut init = Init::new(&mut store, &mut rng);
        let pools = PromptPools::new(&mut init.sub("prompts"), c)?;
        let cascades = (0..config.n_cascades)
            .map(|i| UnetBlock::new(&mut init.sub(&format!("cascade.{i}")), c))
            .collect::<Result<Vec<_>>>()?;
        let classifier = Classifier::new(
            &mut init.sub("classifier"),
            config.n_cascades * PROMPTS_PER_BLOCK * c,
            c,
        )?;
        Ok(Upcmr {
            config,
            store,
            pools,
            cascades,
            classifier,
        })
    }

    pub fn param_count(&self) -> usize {
        self.store.count()
    }

    /// Parameters added by one more cascade: the block itself and its
    /// columns in the classifier's first layer.
    pub fn block_param_count(channels: usize) -> Result<usize> {
        let probe = Upcmr::new(ModelConfig {
            n_cascades: MIN_CASCADES,
            channels,
            ..Default::default()
        })?;
        Ok(probe.store.count_prefix("cascade.0.") + PROMPTS_PER_BLOCK * channels * channels)
    }

    /// Zero every cascade's output projection, turning each block into the
    /// identity map.
    pub fn zero_output_convs(&self) -> Result<()> {
        for i in 0..self.config.n_cascades {
            for p in ["weight", "bias"] {
                let name = format!("cascade.{i}.output.{p}");
                let var = self.store.get(&name).expect("output conv registered");
                self.store.set(&name, &var.zeros_like()?)?;
            }
        }
        Ok(())
    }

    /// Run all cascades on measurements `y` with coil maps and mask;
    /// `(m, n)` index the trajectory and acceleration prompts.
    pub fn forward(
        &self,
        y: &KSpace,
        csm: &CoilSensitivity,
        mask: &SamplingMask,
        m: usize,
        n: usize,
    ) -> Result<ForwardOutput> {
        let ctx = DcContext::new(y.clone(), csm.clone(), mask.clone(), self.config.lambda0)?;
        let x0 = image_to_tensor(&adjoint_a(y, csm, mask)?)?;
        self.forward_with(&ctx, &x0, m, n)
    }

    /// As [`Upcmr::forward`] with an explicit DC context and starting image.
    pub fn forward_with(&self, ctx: &Arc<DcContext>, x0: &Tensor, m: usize, n: usize) -> Result<ForwardOutput> {
        let (_, t, _, h, w) = x0.dims5()?;
        let (hw, ww) = UnetBlock::working_size(h, w);
        let c = self.config.channels;
        let p_u = self.pools.combine(m, n, 1)?;
        let mut feats = CascadeFeatures::zeros(1, t, c, hw, ww, x0.dtype())?;
        let mut x = x0.clone();
        let mut prompts = Vec::with_capacity(2 * self.cascades.len());
        let mut outputs = Vec::with_capacity(self.cascades.len());
        let mut features = Vec::with_capacity(self.cascades.len());
        let before = ctx.residuals().len();
        for (i, block) in self.cascades.iter().enumerate() {
            let out = block.forward(&x, &p_u, &feats)?;
            let total = out.z.sum_all()?.to_scalar::<f32>()?;
            if !total.is_finite() {
                return Err(Error::Numerical(format!("non-finite values in cascade {i}")));
            }
            x = ctx.apply(&out.z)?;
            prompts.push(out.p_u);
            prompts.push(out.p_s);
            outputs.push(x.clone());
            features.push(out.features.clone());
            feats = out.features;
        }
        let (logits_trajectory, logits_accel) = self.classifier.forward(&Tensor::cat(&prompts, D::Minus1)?)?;
        Ok(ForwardOutput {
            image: x,
            logits_trajectory,
            logits_accel,
            trace: ForwardTrace {
                zero_filled: x0.clone(),
                cascade_outputs: outputs,
                features,
                dc_residuals: ctx.residuals()[before..].to_vec(),
            },
        })
    }

    /// A copy with one more cascade: existing weights are copied, the new
    /// block is freshly initialized and the classifier's new input columns
    /// start at zero.
    pub fn grow(&self) -> Result<Upcmr> {
        let n = self.config.n_cascades + 1;
        if n > MAX_CASCADES {
            return Err(Error::invalid(format!("cannot grow beyond {MAX_CASCADES} cascades")));
        }
        let grown = Upcmr::new(ModelConfig {
            n_cascades: n,
            seed: self.config.seed.wrapping_add(n as u64),
            ..self.config.clone()
        })?;
        for (name, var) in self.store.iter() {
            if name == "classifier.trunk1.weight" {
                let (rows, cols) = var.dims2()?;
                let target = grown.store.get(name).expect("classifier registered").dims2()?.1;
                let pad = Tensor::zeros((rows, target - cols), var.dtype(), var.device())?;
                grown.store.set(name, &Tensor::cat(&[var.as_tensor(), &pad], 1)?)?;
            } else {
                grown.store.set(name, var.as_tensor())?;
            }
        }
        Ok(grown)
    }

    pub fn save(&self, dir: &Path, meta: &CheckpointMeta) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.store.save(&dir.join(PARAMS_FILE))?;
        let text = toml::to_string(meta).map_err(|e| Error::invalid(e.to_string()))?;
        let path = dir.join(CHECKPOINT_MANIFEST);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read_meta(dir: &Path) -> Result<CheckpointMeta> {
        let path = dir.join(CHECKPOINT_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            reason: e.to_string(),
        })
    }

    pub fn load(dir: &Path) -> Result<(Upcmr, CheckpointMeta)> {
        let meta = Self::read_meta(dir)?;
        let model = Upcmr::new(meta.config.clone())?;
        model.store.load_exact(&ParamStore::load_tensors(&dir.join(PARAMS_FILE))?)?;
        Ok((model, meta))
    }

    /// Load a checkpoint and grow it to `target` cascades, which must be
    /// exactly one more than the checkpoint holds.
    pub fn load_grown(dir: &Path, target: usize) -> Result<Upcmr> {
        let (model, meta) = Self::load(dir)?;
        if meta.config.n_cascades + 1 != target {
            return Err(Error::invalid(format!(
                "checkpoint has {} cascades; cannot grow to {target}",
                meta.config.n_cascades
            )));
        }
        model.grow()
    }
}
