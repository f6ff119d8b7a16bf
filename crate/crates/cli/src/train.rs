use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use upcmr::phantom::read_dataset;
use upcmr::training::{schedule_by_name, train, CurriculumSchedule, TrainConfig, METRICS_LOG};

use crate::error::CliError;
use crate::TrainArgs;

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Replaces the built-in schedule of the same name.
    pub schedule: Option<CurriculumSchedule>,
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn run(a: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    let builtin = schedule_by_name(a.strategy.key())?;
    let schedule = match cfg.schedule.take() {
        Some(s) if s.name != builtin.name => {
            return Err(CliError::Usage(format!(
                "config schedule '{}' does not match --strategy {} ('{}')",
                s.name,
                a.strategy.key(),
                builtin.name
            )));
        }
        Some(s) => s,
        None => builtin,
    };
    let ds = read_dataset(&a.data)?;
    if a.val_slices >= ds.len() {
        return Err(CliError::Usage(format!(
            "--val-slices {} leaves no training data in a dataset of {} slices",
            a.val_slices,
            ds.len()
        )));
    }
    let (train_set, val_set) = ds.slices.split_at(ds.len() - a.val_slices);

    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let effective = RunConfig {
        train: cfg.train.clone(),
        schedule: Some(schedule.clone()),
    };
    let path = a.out.join("config.toml");
    let text = toml::to_string_pretty(&effective).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;

    let out = train(train_set, val_set, &schedule, &cfg.train, Some(&a.out), a.resume.as_deref())?;
    if let Some(last) = out.records.last() {
        println!(
            "trained {} epochs ({} growths), final loss {:.5}",
            out.records.len(),
            out.growths,
            last.loss_total
        );
        if let Some(v) = out.records.iter().rev().find_map(|r| r.validation.as_ref()) {
            println!(
                "validation PSNR {:.2} dB (zero-filled {:.2} dB)",
                v.overall.psnr.mean, v.overall_zero_filled.psnr.mean
            );
        }
    } else {
        println!("nothing left to train");
    }
    if let Some(ck) = out.checkpoints.last() {
        println!("last checkpoint {}", ck.display());
    }
    println!("metrics in {}", a.out.join(METRICS_LOG).display());
    Ok(())
}
