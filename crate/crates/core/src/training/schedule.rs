//! Curriculum schedules and learning-rate rules.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::{AccelFactor, Trajectory};
use crate::model::{MAX_CASCADES, MIN_CASCADES};
use crate::phantom::SamplingTables;

/// Learning rate as a function of the epoch index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    /// `max(initial·factor^⌊e/every⌋, floor)`, optionally replaced by
    /// `last` on the final epoch.
    StepDecay {
        initial: f64,
        factor: f64,
        every: usize,
        floor: f64,
        last: Option<f64>,
    },
    /// Linear warm-up to `peak` over `warmup` epochs, then cosine decay to
    /// `floor` at the end of the run.
    WarmupCosine { peak: f64, warmup: usize, floor: f64 },
}

impl LrSchedule {
    /// Rate at epoch `e` (0-based) of a run lasting `total` epochs.
    pub fn lr(&self, e: usize, total: usize) -> f64 {
        match *self {
            LrSchedule::StepDecay {
                initial,
                factor,
                every,
                floor,
                last,
            } => {
                if let Some(v) = last {
                    if e + 1 == total {
                        return v;
                    }
                }
                (initial * factor.powi((e / every.max(1)) as i32)).max(floor)
            }
            LrSchedule::WarmupCosine { peak, warmup, floor } => {
                if e < warmup {
                    return peak * (e + 1) as f64 / warmup as f64;
                }
                let span = total.saturating_sub(warmup).max(1) as f64;
                let progress = ((e - warmup) as f64 / span).min(1.0);
                floor + (peak - floor) * 0.5 * (1.0 + (PI * progress).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub weight_decay: f64,
    pub lr: LrSchedule,
    /// Count epochs from the start of each stage rather than from the
    /// first stage sharing this spec.
    pub per_stage: bool,
}

/// A run of epochs with fixed sampling tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub epochs: usize,
    pub tables: SamplingTables,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub n_cascades: usize,
    pub phases: Vec<Phase>,
    pub optimizer: OptimizerSpec,
}

impl Stage {
    pub fn epochs(&self) -> usize {
        self.phases.iter().map(|p| p.epochs).sum()
    }

    /// Sampling tables active at epoch `e` of this stage.
    pub fn tables_at(&self, e: usize) -> &SamplingTables {
        let mut start = 0;
        for p in &self.phases {
            if e < start + p.epochs {
                return &p.tables;
            }
            start += p.epochs;
        }
        &self.phases.last().expect("validated stage has phases").tables
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub name: String,
    pub stages: Vec<Stage>,
}

impl CurriculumSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::invalid(format!("schedule '{}' has no stages", self.name)));
        }
        let mut prev: Option<usize> = None;
        for (k, stage) in self.stages.iter().enumerate() {
            let id = k + 1;
            if !(MIN_CASCADES..=MAX_CASCADES).contains(&stage.n_cascades) {
                return Err(Error::invalid(format!("stage {id}: n_cascades {} out of range", stage.n_cascades)));
            }
            if let Some(p) = prev {
                if stage.n_cascades < p || stage.n_cascades > p + 1 {
                    return Err(Error::invalid(format!(
                        "stage {id}: n_cascades may only stay or grow by one ({p} -> {})",
                        stage.n_cascades
                    )));
                }
            }
            prev = Some(stage.n_cascades);
            if stage.phases.is_empty() || stage.phases.iter().any(|p| p.epochs == 0) {
                return Err(Error::invalid(format!("stage {id}: every phase needs at least one epoch")));
            }
            for p in &stage.phases {
                p.tables
                    .validate()
                    .map_err(|e| Error::invalid(format!("stage {id}: {e}")))?;
            }
            if stage.optimizer.weight_decay.is_nan() || stage.optimizer.weight_decay < 0.0 {
                return Err(Error::invalid(format!("stage {id}: negative weight decay")));
            }
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.stages.iter().map(Stage::epochs).sum()
    }

    /// How many stage transitions add a cascade.
    pub fn growth_count(&self) -> usize {
        self.stages
            .windows(2)
            .filter(|w| w[1].n_cascades > w[0].n_cascades)
            .count()
    }

    /// Learning rate at epoch `e` of stage `k` (both 0-based).
    pub fn lr(&self, k: usize, e: usize) -> f64 {
        let stage = &self.stages[k];
        let opt = &stage.optimizer;
        if opt.per_stage {
            return opt.lr.lr(e, stage.epochs());
        }
        // Continue counting across neighbouring stages that share the spec.
        let first = (0..=k).rev().take_while(|&i| self.stages[i].optimizer == *opt).last().unwrap_or(k);
        let last = (k..self.stages.len())
            .take_while(|&i| self.stages[i].optimizer == *opt)
            .last()
            .unwrap_or(k);
        let offset: usize = self.stages[first..k].iter().map(Stage::epochs).sum();
        let total: usize = self.stages[first..=last].iter().map(Stage::epochs).sum();
        opt.lr.lr(offset + e, total)
    }
}

fn table<T: Copy>(items: &[(T, f64)]) -> Vec<(T, f64)> {
    items.to_vec()
}

fn accels(items: &[(usize, f64)]) -> Vec<(AccelFactor, f64)> {
    items
        .iter()
        .map(|&(r, p)| (AccelFactor::new(r).expect("supported factor"), p))
        .collect()
}

fn strategy1_optimizer() -> OptimizerSpec {
    OptimizerSpec {
        weight_decay: 1e-3,
        lr: LrSchedule::StepDecay {
            initial: 2e-4,
            factor: 0.8,
            every: 10,
            floor: 0.0,
            last: None,
        },
        per_stage: false,
    }
}

/// Four stages on the full 8-cascade model with hand-set probabilities.
pub fn schedule_strategy1() -> CurriculumSchedule {
    use Trajectory::*;
    let stage = |epochs, trajectory: Vec<(Trajectory, f64)>, accel: Vec<(AccelFactor, f64)>| Stage {
        n_cascades: MAX_CASCADES,
        phases: vec![Phase {
            epochs,
            tables: SamplingTables { trajectory, accel },
        }],
        optimizer: strategy1_optimizer(),
    };
    CurriculumSchedule {
        name: "strategy1".into(),
        stages: vec![
            stage(10, table(&[(Uniform, 1.0)]), accels(&[(4, 1.0)])),
            stage(20, table(&[(Uniform, 0.2), (Gaussian, 0.8)]), accels(&[(4, 0.04), (8, 0.48), (12, 0.48)])),
            stage(
                30,
                table(&[(Uniform, 0.1), (Gaussian, 0.1), (PseudoRadial, 0.8)]),
                accels(&[(4, 0.02), (8, 0.02), (12, 0.03), (16, 0.31), (20, 0.31), (24, 0.31)]),
            ),
            stage(30, SamplingTables::uniform_all().trajectory, SamplingTables::uniform_all().accel),
        ],
    }
}

/// Seven stages growing the model from 3 to 8 cascades while adding one
/// acceleration factor at a time.
pub fn schedule_strategy2() -> CurriculumSchedule {
    let grow_opt = OptimizerSpec {
        weight_decay: 1e-2,
        lr: LrSchedule::WarmupCosine {
            peak: 2e-4,
            warmup: 6,
            floor: 2e-5,
        },
        per_stage: true,
    };
    let final_opt = OptimizerSpec {
        weight_decay: 1e-2,
        lr: LrSchedule::StepDecay {
            initial: 1e-4,
            factor: 0.8,
            every: 5,
            floor: 8e-6,
            last: Some(1e-6),
        },
        per_stage: true,
    };
    let equal = |rs: &[usize]| SamplingTables::equal_over(rs).expect("supported factors");
    let mut stages = vec![Stage {
        n_cascades: MIN_CASCADES,
        phases: vec![Phase {
            epochs: 50,
            tables: equal(&[4]),
        }],
        optimizer: grow_opt.clone(),
    }];
    let factors = [4, 8, 12, 16, 20, 24];
    for k in 1..factors.len() {
        stages.push(Stage {
            n_cascades: MIN_CASCADES + k,
            phases: vec![
                Phase {
                    epochs: 40,
                    tables: equal(&[factors[k]]),
                },
                Phase {
                    epochs: 10,
                    tables: equal(&factors[..=k]),
                },
            ],
            optimizer: grow_opt.clone(),
        });
    }
    stages.push(Stage {
        n_cascades: MAX_CASCADES,
        phases: vec![Phase {
            epochs: 50,
            tables: SamplingTables::uniform_all(),
        }],
        optimizer: final_opt,
    });
    CurriculumSchedule {
        name: "strategy2".into(),
        stages,
    }
}

/// No curriculum: every combination equally likely on the full model for
/// as many epochs as the first strategy.
pub fn schedule_flat() -> CurriculumSchedule {
    CurriculumSchedule {
        name: "flat".into(),
        stages: vec![Stage {
            n_cascades: MAX_CASCADES,
            phases: vec![Phase {
                epochs: 90,
                tables: SamplingTables::uniform_all(),
            }],
            optimizer: strategy1_optimizer(),
        }],
    }
}

/// Look up a built-in schedule by its command-line name.
pub fn schedule_by_name(name: &str) -> Result<CurriculumSchedule> {
    match name {
        "1" | "strategy1" => Ok(schedule_strategy1()),
        "2" | "strategy2" => Ok(schedule_strategy2()),
        "flat" => Ok(schedule_flat()),
        other => Err(Error::invalid(format!("unknown strategy '{other}'; expected 1, 2 or flat"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_schedules_validate() {
        for s in [schedule_strategy1(), schedule_strategy2(), schedule_flat()] {
            s.validate().unwrap();
        }
        assert_eq!(schedule_strategy1().total_epochs(), 90);
        assert_eq!(schedule_strategy2().total_epochs(), 350);
    }

    #[test]
    fn strategy1_decays_over_the_whole_run() {
        let s = schedule_strategy1();
        // global epoch 25 sits in stage 2 at local epoch 15
        assert!((s.lr(1, 15) - 1.28e-4).abs() < 1e-15);
        assert_eq!(s.lr(0, 0), 2e-4);
        assert!((s.lr(3, 29) - 2e-4 * 0.8f64.powi(8)).abs() < 1e-15);
    }

    #[test]
    fn strategy2_warmup_and_final_stage() {
        let s = schedule_strategy2();
        assert!((s.lr(0, 0) - 2e-4 / 6.0).abs() < 1e-15);
        assert!((s.lr(2, 5) - 2e-4).abs() < 1e-15);
        assert!(s.lr(2, 49) >= 2e-5 && s.lr(2, 49) < 2.1e-5);
        assert_eq!(s.lr(6, 0), 1e-4);
        assert!((s.lr(6, 7) - 8e-5).abs() < 1e-15);
        assert!((s.lr(6, 48) - 1e-4 * 0.8f64.powi(9)).abs() < 1e-18);
        assert_eq!(s.lr(6, 49), 1e-6);
    }

    #[test]
    fn bad_growth_rejected() {
        let mut s = schedule_strategy2();
        s.stages[2].n_cascades = 6;
        assert!(s.validate().is_err());
        let mut s = schedule_strategy1();
        s.stages[1].phases[0].tables.accel[0].1 = 0.5;
        assert!(s.validate().is_err());
    }
}
