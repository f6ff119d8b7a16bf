//! The curriculum training loop.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::backprop::GradStore;
use candle_core::{DType, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_total, LossParts, LossWeights};
use super::schedule::{CurriculumSchedule, Stage};
use super::validate::{prepare_sample, validate, CsmSource, Sample, ValidateOptions, ValidationTable};
use crate::error::{Error, Result};
use crate::model::{image_to_tensor, CheckpointMeta, ModelConfig, Upcmr};
use crate::phantom::{sample_training_item, PhantomSlice};

pub const METRICS_LOG: &str = "metrics.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// `n_cascades` is taken from the schedule.
    pub model: ModelConfig,
    pub loss: LossWeights,
    /// Sampled items per epoch.
    pub steps_per_epoch: usize,
    /// Multiplies every phase's epoch count (at least one epoch each).
    pub epoch_scale: f64,
    /// Multiplies every scheduled learning rate.
    pub lr_scale: f64,
    /// Global gradient-norm bound.
    pub clip_norm: f64,
    /// Validate every n epochs and at the end of each stage; 0 disables.
    pub validate_every: usize,
    /// Checkpoint every n epochs; stage ends are always saved.
    pub checkpoint_every: usize,
    pub train_csm: CsmSource,
    pub validation: ValidateOptions,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            loss: LossWeights::default(),
            steps_per_epoch: 100,
            epoch_scale: 1.0,
            lr_scale: 1.0,
            clip_norm: 1.0,
            validate_every: 1,
            checkpoint_every: 0,
            train_csm: CsmSource::Reference,
            validation: ValidateOptions::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.steps_per_epoch == 0 {
            return Err(Error::invalid("steps_per_epoch must be positive"));
        }
        if !(self.epoch_scale.is_finite() && self.epoch_scale > 0.0) {
            return Err(Error::invalid(format!("epoch_scale must be positive, got {}", self.epoch_scale)));
        }
        if !(self.lr_scale.is_finite() && self.lr_scale >= 0.0) {
            return Err(Error::invalid(format!("lr_scale must be >= 0, got {}", self.lr_scale)));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::invalid("clip_norm must be positive"));
        }
        Ok(())
    }
}

fn scaled(epochs: usize, scale: f64) -> usize {
    ((epochs as f64 * scale).round() as usize).max(1)
}

/// Epochs actually run for a stage under `scale`.
pub fn planned_epochs(stage: &Stage, scale: f64) -> usize {
    stage.phases.iter().map(|p| scaled(p.epochs, scale)).sum()
}

/// Map an actual epoch to the schedule's own epoch count, so learning-rate
/// rules and phase switches keep their shape when the run is scaled. The
/// last actual epoch of each phase maps to that phase's last epoch.
pub fn nominal_epoch(stage: &Stage, scale: f64, e: usize) -> usize {
    let (mut a0, mut n0) = (0, 0);
    for p in &stage.phases {
        let a = scaled(p.epochs, scale);
        if e < a0 + a {
            let local = e - a0;
            let nl = if local + 1 == a { p.epochs - 1 } else { local * p.epochs / a };
            return n0 + nl;
        }
        a0 += a;
        n0 += p.epochs;
    }
    n0.saturating_sub(1)
}

/// AdamW over every model parameter with the stage's weight decay.
pub fn make_optimizer(model: &Upcmr, stage: &Stage, lr: f64) -> Result<AdamW> {
    Ok(AdamW::new(
        model.store.vars(),
        ParamsAdamW {
            lr,
            weight_decay: stage.optimizer.weight_decay,
            ..ParamsAdamW::default()
        },
    )?)
}

/// Rescale gradients so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut GradStore, vars: &[Var], max_norm: f64) -> Result<f64> {
    let mut sq = 0.0;
    for v in vars {
        if let Some(g) = grads.get(v.as_tensor()) {
            sq += g.sqr()?.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for v in vars {
            if let Some(g) = grads.remove(v.as_tensor()) {
                grads.insert(v.as_tensor(), (g * s)?);
            }
        }
    }
    Ok(norm)
}

/// Forward, loss, backward, clip and one optimizer update.
pub fn train_step(
    model: &Upcmr,
    opt: &mut AdamW,
    sample: &Sample,
    weights: &LossWeights,
    clip_norm: f64,
) -> Result<LossParts> {
    let m = sample.mask.trajectory.index();
    let n = sample.mask.accel.index();
    let out = model.forward(&sample.y, &sample.csm, &sample.mask, m, n)?;
    let gnd = image_to_tensor(&sample.gnd)?;
    let parts = loss_total(
        &out.image,
        &gnd,
        &out.logits_trajectory,
        &out.logits_accel,
        m,
        n,
        weights,
        model.config.classifier,
    )?;
    let total = parts.total.to_scalar::<f64>()?;
    if !total.is_finite() {
        return Err(Error::Numerical(format!(
            "loss is {total} (rec {}, l1 {}, ssim {}, cls {})",
            parts.rec, parts.l1, parts.ssim, parts.cls
        )));
    }
    let mut grads = parts.total.backward()?;
    clip_grad_norm(&mut grads, &model.store.vars(), clip_norm)?;
    opt.step(&grads)?;
    Ok(parts)
}

/// One line of the metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub stage: usize,
    /// 1-based within the stage.
    pub epoch: usize,
    pub global_epoch: usize,
    pub n_cascades: usize,
    pub lr: f64,
    pub steps: usize,
    pub loss_total: f64,
    pub loss_rec: f64,
    pub loss_l1: f64,
    pub loss_ssim: f64,
    pub loss_cls: f64,
    pub validation: Option<ValidationTable>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Upcmr,
    pub records: Vec<EpochRecord>,
    /// Cascade additions performed.
    pub growths: usize,
    pub checkpoints: Vec<PathBuf>,
}

/// Directory of the checkpoint after `epoch` epochs of `stage` (1-based).
pub fn checkpoint_dir(root: &Path, stage: usize, epoch: usize) -> PathBuf {
    root.join(format!("stage_{stage}")).join(format!("epoch_{epoch}"))
}

/// Per-epoch stream, reproducible on resume.
fn epoch_rng(seed: u64, stage: usize, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stage as u64) << 32) | epoch as u64);
    rng
}

fn append_record(dir: &Path, record: &EpochRecord) -> Result<()> {
    let path = dir.join(METRICS_LOG);
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    let line = serde_json::to_string(record).map_err(|e| Error::invalid(e.to_string()))?;
    writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
}

/// Read a metric log written by [`train`].
pub fn read_metric_log(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                reason: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Run `schedule` on `train_set`, optionally writing checkpoints and the
/// metric log under `out_dir` and resuming from a checkpoint directory.
pub fn train(
    train_set: &[PhantomSlice],
    val_set: &[PhantomSlice],
    schedule: &CurriculumSchedule,
    config: &TrainConfig,
    out_dir: Option<&Path>,
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    schedule.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let scale = config.epoch_scale;
    let planned: Vec<usize> = schedule.stages.iter().map(|s| planned_epochs(s, scale)).collect();

    let (mut model, mut k, mut e) = match resume {
        Some(dir) => {
            let (model, meta) = Upcmr::load(dir)?;
            if meta.strategy != schedule.name {
                return Err(Error::invalid(format!(
                    "checkpoint was written by schedule '{}', not '{}'",
                    meta.strategy, schedule.name
                )));
            }
            if meta.stage == 0 || meta.stage > schedule.stages.len() {
                return Err(Error::invalid(format!("checkpoint stage {} not in schedule", meta.stage)));
            }
            let k = meta.stage - 1;
            if model.config.n_cascades != schedule.stages[k].n_cascades {
                return Err(Error::invalid(format!(
                    "checkpoint has {} cascades but stage {} uses {}",
                    model.config.n_cascades, meta.stage, schedule.stages[k].n_cascades
                )));
            }
            (model, k, meta.epoch)
        }
        None => (
            Upcmr::new(ModelConfig {
                n_cascades: schedule.stages[0].n_cascades,
                ..config.model.clone()
            })?,
            0,
            0,
        ),
    };

    let mut records = Vec::new();
    let mut checkpoints = Vec::new();
    let mut growths = 0;
    let mut opt: Option<AdamW> = None;
    while k < schedule.stages.len() {
        let stage = &schedule.stages[k];
        if e >= planned[k] {
            k += 1;
            e = 0;
            continue;
        }
        if model.config.n_cascades < stage.n_cascades {
            model = model.grow()?;
            growths += 1;
            opt = None;
            log::info!("stage {}: grew model to {} cascades", k + 1, model.config.n_cascades);
        }
        let opt = match &mut opt {
            Some(o) => {
                o.set_params(ParamsAdamW {
                    weight_decay: stage.optimizer.weight_decay,
                    ..o.params().clone()
                });
                o
            }
            None => opt.insert(make_optimizer(&model, stage, 0.0)?),
        };
        while e < planned[k] {
            let nominal = nominal_epoch(stage, scale, e);
            let lr = schedule.lr(k, nominal) * config.lr_scale;
            opt.set_learning_rate(lr);
            let tables = stage.tables_at(nominal);
            let mut rng = epoch_rng(config.seed, k, e);
            let mut sums = [0.0; 5];
            for step in 0..config.steps_per_epoch {
                let item = sample_training_item(train_set.len(), tables, &mut rng)?;
                let mask_seed: u64 = rng.random();
                let diag = |err: Error| match err {
                    Error::Numerical(msg) => Error::Numerical(format!(
                        "{msg} at stage {} epoch {} step {step} (slice {}, {}, R={})",
                        k + 1,
                        e + 1,
                        item.slice,
                        item.trajectory,
                        item.accel
                    )),
                    other => other,
                };
                let sample = prepare_sample(
                    &train_set[item.slice],
                    item.trajectory,
                    item.accel,
                    mask_seed,
                    config.train_csm,
                )?;
                let parts = train_step(&model, opt, &sample, &config.loss, config.clip_norm).map_err(diag)?;
                let total = parts.total.to_scalar::<f64>()?;
                for (s, v) in sums.iter_mut().zip([total, parts.rec, parts.l1, parts.ssim, parts.cls]) {
                    *s += v;
                }
            }
            let n = config.steps_per_epoch as f64;
            let last = e + 1 == planned[k];
            let validation = if config.validate_every > 0
                && !val_set.is_empty()
                && ((e + 1) % config.validate_every == 0 || last)
            {
                Some(validate(&model, val_set, &config.validation)?)
            } else {
                None
            };
            let record = EpochRecord {
                stage: k + 1,
                epoch: e + 1,
                global_epoch: planned[..k].iter().sum::<usize>() + e + 1,
                n_cascades: model.config.n_cascades,
                lr,
                steps: config.steps_per_epoch,
                loss_total: sums[0] / n,
                loss_rec: sums[1] / n,
                loss_l1: sums[2] / n,
                loss_ssim: sums[3] / n,
                loss_cls: sums[4] / n,
                validation,
            };
            log::info!(
                "stage {} epoch {}/{}: lr {:.3e} loss {:.5}",
                record.stage,
                record.epoch,
                planned[k],
                lr,
                record.loss_total
            );
            if let Some(dir) = out_dir {
                append_record(dir, &record)?;
                if last || (config.checkpoint_every > 0 && (e + 1) % config.checkpoint_every == 0) {
                    let path = checkpoint_dir(dir, k + 1, e + 1);
                    model.save(
                        &path,
                        &CheckpointMeta {
                            config: model.config.clone(),
                            stage: k + 1,
                            epoch: e + 1,
                            global_epoch: record.global_epoch,
                            strategy: schedule.name.clone(),
                        },
                    )?;
                    checkpoints.push(path);
                }
            }
            records.push(record);
            e += 1;
        }
    }
    Ok(TrainOutcome {
        model,
        records,
        growths,
        checkpoints,
    })
}

/// Trajectory and acceleration head accuracy of `model` over `samples`.
pub fn classifier_accuracy(model: &Upcmr, samples: &[Sample]) -> Result<(f64, f64)> {
    let (mut hit_t, mut hit_a) = (0usize, 0usize);
    for s in samples {
        let m = s.mask.trajectory.index();
        let n = s.mask.accel.index();
        let out = model.forward(&s.y, &s.csm, &s.mask, m, n)?;
        let pt = out.logits_trajectory.argmax(1)?.to_vec1::<u32>()?[0] as usize;
        let pa = out.logits_accel.argmax(1)?.to_vec1::<u32>()?[0] as usize;
        hit_t += usize::from(pt == m);
        hit_a += usize::from(pa == n);
    }
    let n = samples.len().max(1) as f64;
    Ok((hit_t as f64 / n, hit_a as f64 / n))
}

