//! Random choice of (slice, trajectory, acceleration) per training step.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::{AccelFactor, Trajectory};

/// Categorical distributions over trajectories and acceleration factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingTables {
    pub trajectory: Vec<(Trajectory, f64)>,
    pub accel: Vec<(AccelFactor, f64)>,
}

impl SamplingTables {
    /// All 18 combinations equally likely.
    pub fn uniform_all() -> Self {
        SamplingTables {
            trajectory: Trajectory::ALL.iter().map(|&t| (t, 1.0 / 3.0)).collect(),
            accel: AccelFactor::all().map(|a| (a, 1.0 / 6.0)).collect(),
        }
    }

    /// Equal trajectories, equal weight over the listed factors.
    pub fn equal_over(accels: &[usize]) -> Result<Self> {
        let p = 1.0 / accels.len() as f64;
        Ok(SamplingTables {
            trajectory: Trajectory::ALL.iter().map(|&t| (t, 1.0 / 3.0)).collect(),
            accel: accels
                .iter()
                .map(|&r| AccelFactor::new(r).map(|a| (a, p)))
                .collect::<Result<_>>()?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        fn check<T>(name: &str, table: &[(T, f64)]) -> Result<()> {
            if table.is_empty() {
                return Err(Error::invalid(format!("empty {name} probability table")));
            }
            if table.iter().any(|(_, p)| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::invalid(format!("negative or non-finite {name} probability")));
            }
            let sum: f64 = table.iter().map(|(_, p)| p).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("{name} probabilities sum to {sum}, not 1")));
            }
            Ok(())
        }
        check("trajectory", &self.trajectory)?;
        check("acceleration", &self.accel)
    }

    pub fn probability(&self, t: Trajectory, a: AccelFactor) -> f64 {
        let pt: f64 = self.trajectory.iter().filter(|(x, _)| *x == t).map(|(_, p)| p).sum();
        let pa: f64 = self.accel.iter().filter(|(x, _)| *x == a).map(|(_, p)| p).sum();
        pt * pa
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingItem {
    pub slice: usize,
    pub trajectory: Trajectory,
    pub accel: AccelFactor,
}

/// Uniform slice; trajectory and factor drawn from `tables`.
pub fn sample_training_item<R: Rng + ?Sized>(
    n_slices: usize,
    tables: &SamplingTables,
    rng: &mut R,
) -> Result<TrainingItem> {
    if n_slices == 0 {
        return Err(Error::invalid("cannot sample from an empty dataset"));
    }
    tables.validate()?;
    let slice = rng.random_range(0..n_slices);
    let ti = WeightedIndex::new(tables.trajectory.iter().map(|(_, p)| *p))
        .map_err(|e| Error::invalid(e.to_string()))?;
    let ai = WeightedIndex::new(tables.accel.iter().map(|(_, p)| *p))
        .map_err(|e| Error::invalid(e.to_string()))?;
    Ok(TrainingItem {
        slice,
        trajectory: tables.trajectory[ti.sample(rng)].0,
        accel: tables.accel[ai.sample(rng)].0,
    })
}
