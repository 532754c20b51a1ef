//! Synthetic experiments: a conditional objective, the baselines, and the
//! regression and optimization protocols with their CSV outputs.

mod baselines;
mod objective;
mod optimization;
mod regression;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Warp;
use crate::infer::McmcSettings;
use crate::kernel::BaseCovariance;
use crate::space::Point;

pub use baselines::{fill_in_random, linear_baseline, nmse, LinearModel, LINEAR_RIDGE};
pub use objective::{eval_synthetic, SyntheticObjective, MIN_VALUE};
pub use optimization::{run_bo_experiment, BoArm, BoResult, TrajectoryRow};
pub use regression::{
    generate_dataset, run_regression_experiment, FoldScore, ModelSummary, RegressionResult,
};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a list of words into one seed.
pub(crate) fn derive_seed(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x243f_6a88_85a3_08d3, |h, &w| splitmix64(h ^ w))
}

/// Random stream keyed by a seed and the relevant content of a point, so that
/// conditionally equal points share a stream.
pub(crate) fn point_stream(seed: u64, point: &Point) -> ChaCha8Rng {
    const IRRELEVANT: u64 = 0x7ff8_dead_beef_0001;
    let mut h = splitmix64(seed ^ splitmix64(point.depth() as u64));
    for v in point.relevant_values() {
        h = splitmix64(h ^ v.map_or(IRRELEVANT, |x| (x + 0.0).to_bits()));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Surrogate models compared in the regression experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// One arc-kernel GP over all depths.
    ArcGp,
    /// One arc-kernel GP per depth on that depth's relevant dimensions.
    ArcGpSeparate,
    /// One plain GP on `[depth / L, randomly filled coordinates]`.
    PlainGpRandomFill,
    /// One plain GP per depth on that depth's relevant dimensions.
    PlainGpSeparate,
    /// Least squares on the random-fill encoding.
    LinearRegression,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::ArcGp,
        ModelKind::ArcGpSeparate,
        ModelKind::PlainGpRandomFill,
        ModelKind::PlainGpSeparate,
        ModelKind::LinearRegression,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::ArcGp => "arc_gp",
            ModelKind::ArcGpSeparate => "arc_gp_separate",
            ModelKind::PlainGpRandomFill => "plain_gp_random_fill",
            ModelKind::PlainGpSeparate => "plain_gp_separate",
            ModelKind::LinearRegression => "linear_regression",
        }
    }
}

/// Settings shared by the regression and optimization experiments. Missing
/// JSON fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Models for the regression experiment.
    pub models: Vec<ModelKind>,
    /// Arms for the optimization experiment.
    pub arms: Vec<BoArm>,
    pub warp: Warp,
    pub folds: usize,
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub init_count: usize,
    /// Size of the regression data set.
    pub n_points: usize,
    pub grid_size: usize,
    pub base: BaseCovariance,
    pub mcmc: McmcSettings,
    /// Seed of the random fill-in used by the plain-kernel and linear models.
    pub fill_seed: u64,
    /// Overrides the objective's noise level.
    pub noise_sd: Option<f64>,
    /// Run independent models / seeds on the thread pool.
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            models: ModelKind::ALL.to_vec(),
            arms: BoArm::ALL.to_vec(),
            warp: Warp::Identity,
            folds: 10,
            seeds: (0..10).collect(),
            budget: 50,
            init_count: 10,
            n_points: 300,
            grid_size: crate::bo::DEFAULT_GRID_SIZE,
            base: BaseCovariance::Matern52,
            mcmc: McmcSettings::default(),
            fill_seed: 1,
            noise_sd: None,
            parallel: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.folds < 2 {
            return fail(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.seeds.is_empty() {
            return fail("seeds must not be empty".into());
        }
        if self.n_points < self.folds {
            return fail(format!(
                "n_points {} is fewer than folds {}",
                self.n_points, self.folds
            ));
        }
        if self.budget < 10 {
            return fail(format!("budget must be at least 10, got {}", self.budget));
        }
        if self.init_count == 0 || self.init_count > self.budget {
            return fail(format!(
                "init_count must be in 1..=budget, got {}",
                self.init_count
            ));
        }
        if self.grid_size < self.budget {
            return fail(format!(
                "grid_size {} is smaller than the budget",
                self.grid_size
            ));
        }
        if self.mcmc.n_samples == 0 {
            return fail("mcmc.n_samples must be at least 1".into());
        }
        if let Some(sd) = self.noise_sd {
            if !(sd >= 0.0 && sd.is_finite()) {
                return fail(format!("noise_sd must be >= 0, got {sd}"));
            }
        }
        self.base.validate()
    }

    pub(crate) fn objective(&self) -> SyntheticObjective {
        let obj = SyntheticObjective::bundled();
        match self.noise_sd {
            Some(sd) => obj.with_noise_sd(sd),
            None => obj,
        }
    }

    pub(crate) fn execution(&self) -> crate::par::Execution {
        if self.parallel {
            crate::par::Execution::Parallel
        } else {
            crate::par::Execution::Sequential
        }
    }
}
