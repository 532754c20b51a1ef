//! Optimization runs on the synthetic objective: incumbent trajectories and
//! the depths each arm spent its evaluations on.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{derive_seed, eval_synthetic, ExperimentConfig};
use crate::bo::{run_loop, BoSettings, Observation, Surrogate};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoArm {
    /// EI with the arc-kernel GP.
    ArcGp,
    /// EI with a plain GP on randomly filled inputs.
    PlainGpRandomFill,
    /// The Sobol grid head, no model.
    RandomSearch,
}

impl BoArm {
    pub const ALL: [BoArm; 3] = [BoArm::ArcGp, BoArm::PlainGpRandomFill, BoArm::RandomSearch];

    pub fn name(self) -> &'static str {
        match self {
            BoArm::ArcGp => "arc_gp",
            BoArm::PlainGpRandomFill => "plain_gp_random_fill",
            BoArm::RandomSearch => "random_search",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub arm: BoArm,
    pub seed: u64,
    pub iteration: usize,
    pub incumbent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoResult {
    pub max_depth: usize,
    /// `(arm, seed, history)` in arm-major order.
    pub runs: Vec<(BoArm, u64, Vec<Observation>)>,
}

impl BoResult {
    pub fn trajectories(&self) -> Vec<TrajectoryRow> {
        let mut rows = Vec::new();
        for (arm, seed, hist) in &self.runs {
            let mut best = f64::INFINITY;
            for (iteration, obs) in hist.iter().enumerate() {
                best = best.min(obs.value);
                rows.push(TrajectoryRow {
                    arm: *arm,
                    seed: *seed,
                    iteration,
                    incumbent: best,
                });
            }
        }
        rows
    }

    /// Final incumbent of each seed for `arm`.
    pub fn final_incumbents(&self, arm: BoArm) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|(a, _, _)| *a == arm)
            .map(|(_, _, h)| h.iter().map(|o| o.value).fold(f64::INFINITY, f64::min))
            .collect()
    }

    pub fn median_final_incumbent(&self, arm: BoArm) -> Option<f64> {
        median(self.final_incumbents(arm))
    }

    /// Evaluations per depth for `arm`, summed over seeds.
    pub fn depth_counts(&self, arm: BoArm) -> Vec<usize> {
        let mut counts = vec![0; self.max_depth + 1];
        for (_, _, h) in self.runs.iter().filter(|(a, _, _)| *a == arm) {
            for o in h {
                counts[o.point.depth()] += 1;
            }
        }
        counts
    }

    /// Fraction of `arm`'s evaluations at depth `min_depth` or deeper.
    pub fn deep_fraction(&self, arm: BoArm, min_depth: usize) -> f64 {
        let counts = self.depth_counts(arm);
        let total: usize = counts.iter().sum();
        if total == 0 {
            return 0.0;
        }
        counts.iter().skip(min_depth).sum::<usize>() as f64 / total as f64
    }

    fn arms(&self) -> Vec<BoArm> {
        let mut arms = Vec::new();
        for (a, _, _) in &self.runs {
            if !arms.contains(a) {
                arms.push(*a);
            }
        }
        arms
    }

    /// `model,seed,iteration,incumbent`.
    pub fn write_trajectories_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "seed", "iteration", "incumbent"])?;
        for r in self.trajectories() {
            w.write_record([
                r.arm.name().to_string(),
                r.seed.to_string(),
                r.iteration.to_string(),
                r.incumbent.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `model,depth,count`.
    pub fn write_architectures_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "depth", "count"])?;
        for arm in self.arms() {
            for (depth, count) in self.depth_counts(arm).into_iter().enumerate() {
                w.write_record([arm.name().to_string(), depth.to_string(), count.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    })
}

/// Runs every arm on every seed. Arms with the same seed share the Sobol
/// grid; each (arm, seed) pair is an independent job.
pub fn run_bo_experiment(cfg: &ExperimentConfig) -> Result<BoResult> {
    cfg.validate()?;
    if cfg.arms.is_empty() {
        return Err(Error::Config("no arms selected".into()));
    }
    let obj = cfg.objective();
    let space = obj.space();
    let jobs: Vec<(BoArm, u64)> = cfg
        .arms
        .iter()
        .flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let results = par::map_slice(cfg.execution(), &jobs, |&(arm, seed)| {
        let surrogate = match arm {
            BoArm::PlainGpRandomFill => Surrogate::PlainGpRandomFill {
                fill_seed: derive_seed(&[cfg.fill_seed, seed]),
            },
            _ => Surrogate::ArcGp,
        };
        let settings = BoSettings {
            surrogate,
            base: cfg.base,
            grid_size: cfg.grid_size,
            mcmc: cfg.mcmc,
            exec: Execution::Sequential,
        };
        let init = match arm {
            BoArm::RandomSearch => cfg.budget,
            _ => cfg.init_count,
        };
        run_loop(
            space,
            |p| eval_synthetic(&obj, p),
            cfg.budget,
            init,
            seed,
            settings,
        )
        .map(|h| (arm, seed, h))
    });
    Ok(BoResult {
        max_depth: space.max_depth(),
        runs: results.into_iter().collect::<Result<_>>()?,
    })
}
