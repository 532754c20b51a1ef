//! Expected-improvement Bayesian optimization over a fixed Sobol grid.
//!
//! Candidates are unit-cube vectors of length `D + 1`; coordinate 0 encodes
//! the depth and the rest the dimensions. Hyperparameters are resampled every
//! iteration by a slice-sampling chain that carries over between iterations,
//! and EI is averaged over the samples. Objective values are minimized.

pub mod sobol;

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::bench::fill_in_random;
use crate::error::{Error, Result};
use crate::gp::{GpModel, Warp};
use crate::infer::{Chain, Hypers, KernelFamily, McmcSettings, Posterior, TrainingData};
use crate::kernel::{BaseCovariance, KernelInput};
use crate::par::Execution;
use crate::space::{ParameterSpace, Point};

pub use sobol::sobol_grid;

/// Default number of grid candidates.
pub const DEFAULT_GRID_SIZE: usize = 2000;

/// Maps a unit vector `[u_depth, u_1, …, u_D]` to a point. The depth is
/// `floor(u_depth (L + 1))`, clamped to `L`, so every depth gets equal mass.
pub fn decode(space: &ParameterSpace, unit: &[f64]) -> Result<Point> {
    if unit.len() != space.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: space.len() + 1,
            actual: unit.len(),
        });
    }
    if let Some(u) = unit.iter().find(|u| !(0.0..=1.0).contains(*u)) {
        return Err(Error::Domain(format!("unit coordinate {u} outside [0, 1]")));
    }
    let levels = space.max_depth() + 1;
    let depth = ((unit[0] * levels as f64).floor() as usize).min(space.max_depth());
    let values: Vec<f64> = space
        .dims()
        .iter()
        .zip(&unit[1..])
        .map(|(d, &u)| (d.lower + u * d.range()).clamp(d.lower, d.upper))
        .collect();
    space.make_point(depth as f64, &values)
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E[max(incumbent - Y, 0)]` for `Y ~ N(mean, variance)`.
pub fn expected_improvement(mean: f64, variance: f64, incumbent: f64) -> f64 {
    let gap = incumbent - mean;
    let s = variance.max(0.0).sqrt();
    if s == 0.0 {
        return gap.max(0.0);
    }
    let z = gap / s;
    (gap * std_normal_cdf(z) + s * std_normal_pdf(z)).max(0.0)
}

/// Which GP the optimizer models the objective with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surrogate {
    /// Arc kernel on the conditional points.
    ArcGp,
    /// Plain kernel on `[depth / L, filled-in coordinates]`.
    PlainGpRandomFill { fill_seed: u64 },
}

impl Surrogate {
    pub fn family(&self, space: &ParameterSpace, base: BaseCovariance) -> KernelFamily {
        match self {
            Surrogate::ArcGp => KernelFamily::Arc {
                dims: space.len(),
                base,
            },
            Surrogate::PlainGpRandomFill { .. } => KernelFamily::Plain {
                dims: space.len() + 1,
                base,
            },
        }
    }

    pub fn encode(&self, space: &ParameterSpace, point: &Point) -> KernelInput {
        match *self {
            Surrogate::ArcGp => KernelInput::conditional(space, point),
            Surrogate::PlainGpRandomFill { fill_seed } => dense_encoding(
                space,
                point.depth(),
                &fill_in_random(space, point, fill_seed),
            ),
        }
    }
}

/// `[depth / L, (x_i - l_i) / (u_i - l_i) …]` with every coordinate relevant.
pub fn dense_encoding(space: &ParameterSpace, depth: usize, values: &[f64]) -> KernelInput {
    let depth_unit = if space.max_depth() == 0 {
        0.0
    } else {
        depth as f64 / space.max_depth() as f64
    };
    let mut unit = Vec::with_capacity(values.len() + 1);
    unit.push(depth_unit);
    unit.extend(
        space
            .dims()
            .iter()
            .zip(values)
            .map(|(d, &x)| (x - d.lower) / d.range()),
    );
    KernelInput::dense(unit)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoSettings {
    pub surrogate: Surrogate,
    pub base: BaseCovariance,
    pub grid_size: usize,
    pub mcmc: McmcSettings,
    pub exec: Execution,
}

impl Default for BoSettings {
    fn default() -> Self {
        Self {
            surrogate: Surrogate::ArcGp,
            base: BaseCovariance::Matern52,
            grid_size: DEFAULT_GRID_SIZE,
            mcmc: McmcSettings::default(),
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub point: Point,
    pub value: f64,
}

/// Mean and scale used to standardize observed values before modelling.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Standardizer {
    mean: f64,
    scale: f64,
}

impl Standardizer {
    fn from_values(ys: &[f64]) -> Self {
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self { mean, scale }
    }

    fn apply(&self, y: f64) -> f64 {
        (y - self.mean) / self.scale
    }
}

pub struct BoState {
    space: ParameterSpace,
    settings: BoSettings,
    seed: u64,
    grid: Vec<Vec<f64>>,
    candidates: Vec<Point>,
    encoded: Vec<KernelInput>,
    excluded: Vec<bool>,
    history: Vec<Observation>,
    chain: Option<Chain>,
    hyper_samples: Vec<Hypers>,
    models: Vec<GpModel>,
    standardizer: Option<Standardizer>,
}

impl BoState {
    /// Builds the candidate grid: Sobol points in `[0,1]^(D+1)`, digitally
    /// shifted by `seed`.
    pub fn new(space: ParameterSpace, settings: BoSettings, seed: u64) -> Result<Self> {
        let grid = sobol_grid(space.len() + 1, settings.grid_size, Some(seed))?;
        let candidates = grid
            .iter()
            .map(|u| decode(&space, u))
            .collect::<Result<Vec<_>>>()?;
        let encoded = candidates
            .iter()
            .map(|p| settings.surrogate.encode(&space, p))
            .collect();
        Ok(Self {
            excluded: vec![false; grid.len()],
            space,
            settings,
            seed,
            grid,
            candidates,
            encoded,
            history: Vec::new(),
            chain: None,
            hyper_samples: Vec::new(),
            models: Vec::new(),
            standardizer: None,
        })
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn grid(&self) -> &[Vec<f64>] {
        &self.grid
    }

    pub fn candidates(&self) -> &[Point] {
        &self.candidates
    }

    pub fn history(&self) -> &[Observation] {
        &self.history
    }

    pub fn hyper_samples(&self) -> &[Hypers] {
        &self.hyper_samples
    }

    /// Best (lowest) observed value.
    pub fn incumbent(&self) -> Option<f64> {
        self.history.iter().map(|o| o.value).reduce(f64::min)
    }

    /// Whether grid candidate `index` may still be suggested.
    pub fn is_available(&self, index: usize) -> bool {
        !self.excluded[index]
    }

    /// Records an evaluation and removes every grid candidate conditionally
    /// equal to it.
    pub fn observe(&mut self, point: Point, value: f64) {
        for (flag, cand) in self.excluded.iter_mut().zip(&self.candidates) {
            if !*flag && cand.conditionally_eq(&point) {
                *flag = true;
            }
        }
        self.history.push(Observation { point, value });
    }

    fn training_data(&mut self) -> Result<TrainingData> {
        if self.history.is_empty() {
            return Err(Error::EmptyData);
        }
        let values: Vec<f64> = self.history.iter().map(|o| o.value).collect();
        let st = Standardizer::from_values(&values);
        self.standardizer = Some(st);
        let inputs = self
            .history
            .iter()
            .map(|o| self.settings.surrogate.encode(&self.space, &o.point))
            .collect();
        TrainingData::new(
            inputs,
            values.iter().map(|&y| st.apply(y)).collect(),
            Warp::Identity,
        )
    }

    /// Advances the hyperparameter chain on the current history and refits
    /// one GP per posterior sample. The first call runs the burn-in.
    pub fn refit(&mut self) -> Result<()> {
        let data = self.training_data()?;
        let family = self
            .settings
            .surrogate
            .family(&self.space, self.settings.base);
        let mut posterior = Posterior::new(family, &data)?;
        let (burn_in, chain) = match self.chain.take() {
            Some(chain) => (0, chain),
            None => (
                self.settings.mcmc.burn_in,
                Chain::new(family, self.settings.mcmc, self.seed ^ 0x5eed_c4a1),
            ),
        };
        let mut chain = chain;
        let samples = chain.run(&mut posterior, burn_in);
        self.chain = Some(chain);
        self.fit_samples(samples, data)
    }

    /// Replaces the hyperparameter samples and refits the models.
    pub fn set_hyper_samples(&mut self, samples: Vec<Hypers>) -> Result<()> {
        let data = self.training_data()?;
        self.fit_samples(samples, data)
    }

    fn fit_samples(&mut self, samples: Vec<Hypers>, data: TrainingData) -> Result<()> {
        if samples.is_empty() {
            return Err(Error::Config("no hyperparameter samples".into()));
        }
        self.models = samples
            .iter()
            .map(|h| h.fit(&data))
            .collect::<Result<_>>()?;
        self.hyper_samples = samples;
        Ok(())
    }

    fn standardized_incumbent(&self) -> Result<f64> {
        let st = self.standardizer.ok_or(Error::EmptyData)?;
        Ok(st.apply(self.incumbent().ok_or(Error::EmptyData)?))
    }

    fn check_ready(&self) -> Result<()> {
        if self.history.is_empty() {
            return Err(Error::EmptyData);
        }
        if self.models.is_empty() {
            return Err(Error::Config("no fitted models; call refit first".into()));
        }
        Ok(())
    }

    /// EI under each hyperparameter sample, on the standardized scale.
    pub fn per_sample_ei(&self, candidate: &Point) -> Result<Vec<f64>> {
        self.check_ready()?;
        let x = self.settings.surrogate.encode(&self.space, candidate);
        let inc = self.standardized_incumbent()?;
        self.models
            .iter()
            .map(|m| {
                m.predict(&x)
                    .map(|(mu, var)| expected_improvement(mu, var, inc))
            })
            .collect()
    }

    /// EI averaged over the hyperparameter samples.
    pub fn integrated_ei(&self, candidate: &Point) -> Result<f64> {
        let per = self.per_sample_ei(candidate)?;
        Ok(per.iter().sum::<f64>() / per.len() as f64)
    }

    /// Integrated EI of every grid candidate; `None` where excluded.
    pub fn grid_scores(&self) -> Result<Vec<Option<f64>>> {
        self.check_ready()?;
        let inc = self.standardized_incumbent()?;
        let mut sums = vec![0.0; self.encoded.len()];
        for model in &self.models {
            let preds = model.predict_batch(self.settings.exec, &self.encoded)?;
            for (s, (mu, var)) in sums.iter_mut().zip(preds) {
                *s += expected_improvement(mu, var, inc);
            }
        }
        let m = self.models.len() as f64;
        Ok(sums
            .into_iter()
            .zip(&self.excluded)
            .map(|(s, &ex)| (!ex).then_some(s / m))
            .collect())
    }

    /// The available grid candidate with the highest integrated EI; ties go
    /// to the lowest index.
    pub fn suggest(&self) -> Result<(usize, Point)> {
        let scores = self.grid_scores()?;
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in scores.into_iter().enumerate() {
            if let Some(s) = s {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((i, s));
                }
            }
        }
        let (i, _) = best.ok_or(Error::GridExhausted)?;
        Ok((i, self.candidates[i].clone()))
    }

    /// Lowest-index available grid candidate.
    pub fn next_unevaluated(&self) -> Result<(usize, Point)> {
        let i = self
            .excluded
            .iter()
            .position(|e| !e)
            .ok_or(Error::GridExhausted)?;
        Ok((i, self.candidates[i].clone()))
    }
}

/// Value recorded for a failed (non-finite) evaluation: the worst finite
/// value so far plus one standard deviation of the finite values.
fn penalty_value(history: &[Observation]) -> f64 {
    let finite: Vec<f64> = history
        .iter()
        .map(|o| o.value)
        .filter(|v| v.is_finite())
        .collect();
    if finite.is_empty() {
        return 1.0;
    }
    let worst = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sd = if finite.len() < 2 {
        1.0
    } else {
        let n = finite.len() as f64;
        let mean = finite.iter().sum::<f64>() / n;
        (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    worst + sd
}

/// Runs `init_count` grid-head evaluations, then model-guided evaluations
/// until `budget` points have been evaluated.
pub fn run_loop<F>(
    space: &ParameterSpace,
    mut objective: F,
    budget: usize,
    init_count: usize,
    seed: u64,
    settings: BoSettings,
) -> Result<Vec<Observation>>
where
    F: FnMut(&Point) -> f64,
{
    if init_count == 0 || budget < init_count {
        return Err(Error::Config(format!(
            "need budget >= init_count >= 1, got budget {budget}, init_count {init_count}"
        )));
    }
    let mut state = BoState::new(space.clone(), settings, seed)?;
    for iter in 0..budget {
        let (_, point) = if iter < init_count {
            state.next_unevaluated()?
        } else {
            state.refit()?;
            state.suggest()?
        };
        let mut value = objective(&point);
        if !value.is_finite() {
            value = penalty_value(state.history());
        }
        state.observe(point, value);
    }
    Ok(state.history)
}

/// Writes `iteration,depth,<dims…>,objective,incumbent`; irrelevant
/// coordinates are left blank.
pub fn write_history_csv<W: Write>(
    space: &ParameterSpace,
    history: &[Observation],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["iteration".to_string(), "depth".to_string()];
    header.extend(space.dims().iter().map(|d| d.name.clone()));
    header.push("objective".into());
    header.push("incumbent".into());
    w.write_record(&header)?;
    let mut best = f64::INFINITY;
    for (i, obs) in history.iter().enumerate() {
        best = best.min(obs.value);
        let mut row = vec![i.to_string(), obs.point.depth().to_string()];
        row.extend(
            obs.point
                .relevant_values()
                .map(|v| v.map_or(String::new(), |x| x.to_string())),
        );
        row.push(obs.value.to_string());
        row.push(best.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
