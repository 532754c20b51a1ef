//! Cross-validated regression comparison of the surrogate models.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    derive_seed, eval_synthetic, fill_in_random, nmse, ExperimentConfig, LinearModel, ModelKind,
    SyntheticObjective,
};
use crate::bo::dense_encoding;
use crate::error::{Error, Result};
use crate::gp::Warp;
use crate::infer::{Chain, KernelFamily, McmcSettings, Posterior, TrainingData};
use crate::kernel::{BaseCovariance, KernelInput};
use crate::par;
use crate::space::{ParameterSpace, Point};

/// `n` points with uniformly drawn depths and values, and their objective
/// values. Irrelevant coordinates are stored at their lower bounds.
pub fn generate_dataset(obj: &SyntheticObjective, n: usize, seed: u64) -> Vec<(Point, f64)> {
    let space = obj.space();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0xda7a]));
    (0..n)
        .map(|_| {
            let depth = rng.random_range(0..=space.max_depth());
            let values: Vec<f64> = space
                .dims()
                .iter()
                .map(|d| {
                    let u: f64 = rng.random();
                    if depth >= d.layer {
                        d.lower + u * d.range()
                    } else {
                        d.lower
                    }
                })
                .collect();
            let p = space
                .make_point(depth as f64, &values)
                .expect("drawn inside bounds");
            let y = eval_synthetic(obj, &p);
            (p, y)
        })
        .collect()
}

/// Test-set indices of each fold after a seeded shuffle.
fn fold_tests(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0xf01d])));
    let mut tests = vec![Vec::new(); folds];
    for (i, idx) in order.into_iter().enumerate() {
        tests[i % folds].push(idx);
    }
    for t in &mut tests {
        t.sort_unstable();
    }
    tests
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldScore {
    pub model: ModelKind,
    pub seed: u64,
    /// Fold number, counted across seeds.
    pub fold: usize,
    /// NMSE in the original output space.
    pub nmse: f64,
    /// NMSE of the log outputs, reported when the log warp is used.
    pub nmse_log: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub model: ModelKind,
    pub mean: f64,
    /// Sample standard deviation over folds.
    pub sd: f64,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub warp: Warp,
    pub scores: Vec<FoldScore>,
}

impl RegressionResult {
    pub fn summary_for(&self, model: ModelKind) -> Option<ModelSummary> {
        let xs: Vec<f64> = self
            .scores
            .iter()
            .filter(|s| s.model == model)
            .map(|s| s.nmse)
            .collect();
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(ModelSummary {
            model,
            mean,
            sd,
            folds: xs.len(),
        })
    }

    /// One summary per model, in first-seen order.
    pub fn summary(&self) -> Vec<ModelSummary> {
        let mut seen = Vec::new();
        for s in &self.scores {
            if !seen.contains(&s.model) {
                seen.push(s.model);
            }
        }
        seen.into_iter()
            .filter_map(|m| self.summary_for(m))
            .collect()
    }

    /// `model,fold,nmse`, plus `nmse_log` under the log warp.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let log = self.warp == Warp::Log;
        if log {
            w.write_record(["model", "fold", "nmse", "nmse_log"])?;
        } else {
            w.write_record(["model", "fold", "nmse"])?;
        }
        for s in &self.scores {
            let mut row = vec![
                s.model.name().to_string(),
                s.fold.to_string(),
                s.nmse.to_string(),
            ];
            if log {
                row.push(s.nmse_log.map_or(String::new(), |v| v.to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Predictive mixture for one test row: `(mean, variance)` of the warped
/// output under each hyperparameter sample.
type Mixture = Vec<(f64, f64)>;

/// A GP whose hyperparameter chain carries over between folds.
struct SampledGp {
    family: KernelFamily,
    mcmc: McmcSettings,
    seed: u64,
    chain: Option<Chain>,
}

impl SampledGp {
    fn new(family: KernelFamily, mcmc: McmcSettings, seed: u64) -> Self {
        Self {
            family,
            mcmc,
            seed,
            chain: None,
        }
    }

    /// Fits on standardized warped targets and predicts on the warped scale.
    fn predict(
        &mut self,
        inputs: Vec<KernelInput>,
        warped: &[f64],
        test: &[KernelInput],
    ) -> Result<Vec<Mixture>> {
        let n = warped.len() as f64;
        let mean = warped.iter().sum::<f64>() / n;
        let var = warped.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let z = warped.iter().map(|y| (y - mean) / scale).collect();
        let data = TrainingData::new(inputs, z, Warp::Identity)?;
        let mut posterior = Posterior::new(self.family, &data)?;
        let (burn_in, mut chain) = match self.chain.take() {
            Some(c) => (0, c),
            None => (
                self.mcmc.burn_in,
                Chain::new(self.family, self.mcmc, self.seed),
            ),
        };
        let samples = chain.run(&mut posterior, burn_in);
        self.chain = Some(chain);
        let models = samples
            .iter()
            .map(|h| h.fit(&data))
            .collect::<Result<Vec<_>>>()?;
        let mut out = vec![Vec::with_capacity(models.len()); test.len()];
        for (h, m) in samples.iter().zip(&models) {
            for (row, x) in out.iter_mut().zip(test) {
                let (mu, v) = m.predict(x)?;
                row.push((mean + scale * mu, scale * scale * (v + h.noise_var)));
            }
        }
        Ok(out)
    }
}

fn arc_family(dims: usize, base: BaseCovariance) -> KernelFamily {
    KernelFamily::Arc { dims, base }
}

fn plain_family(dims: usize, base: BaseCovariance) -> KernelFamily {
    KernelFamily::Plain { dims, base }
}

/// Normalized relevant coordinates only.
fn relevant_encoding(space: &ParameterSpace, p: &Point) -> KernelInput {
    let unit: Vec<f64> = space
        .normalize(p)
        .into_iter()
        .zip(p.mask())
        .filter(|(_, &m)| m)
        .map(|(u, _)| u)
        .collect();
    KernelInput::dense(unit)
}

fn fill_encoding(space: &ParameterSpace, p: &Point, fill_seed: u64) -> KernelInput {
    dense_encoding(space, p.depth(), &fill_in_random(space, p, fill_seed))
}

/// Stateful per-(model, seed) predictor run over successive folds.
struct Runner<'a> {
    kind: ModelKind,
    space: &'a ParameterSpace,
    cfg: &'a ExperimentConfig,
    seed: u64,
    pooled: Option<SampledGp>,
    per_depth: BTreeMap<usize, SampledGp>,
}

impl<'a> Runner<'a> {
    fn new(
        kind: ModelKind,
        space: &'a ParameterSpace,
        cfg: &'a ExperimentConfig,
        seed: u64,
    ) -> Self {
        let chain_seed = derive_seed(&[seed, kind as u64, 0]);
        let pooled = match kind {
            ModelKind::ArcGp => Some(SampledGp::new(
                arc_family(space.len(), cfg.base),
                cfg.mcmc,
                chain_seed,
            )),
            ModelKind::PlainGpRandomFill => Some(SampledGp::new(
                plain_family(space.len() + 1, cfg.base),
                cfg.mcmc,
                chain_seed,
            )),
            _ => None,
        };
        Self {
            kind,
            space,
            cfg,
            seed,
            pooled,
            per_depth: BTreeMap::new(),
        }
    }

    fn predict(
        &mut self,
        train: &[&(Point, f64)],
        warped: &[f64],
        test: &[&Point],
    ) -> Result<Vec<Mixture>> {
        let space = self.space;
        let fill_seed = self.cfg.fill_seed;
        match self.kind {
            ModelKind::ArcGp => {
                let enc = |p: &Point| KernelInput::conditional(space, p);
                let inputs = train.iter().map(|(p, _)| enc(p)).collect();
                let test: Vec<_> = test.iter().map(|p| enc(p)).collect();
                self.pooled
                    .as_mut()
                    .expect("pooled model")
                    .predict(inputs, warped, &test)
            }
            ModelKind::PlainGpRandomFill => {
                let inputs = train
                    .iter()
                    .map(|(p, _)| fill_encoding(space, p, fill_seed))
                    .collect();
                let test: Vec<_> = test
                    .iter()
                    .map(|p| fill_encoding(space, p, fill_seed))
                    .collect();
                self.pooled
                    .as_mut()
                    .expect("pooled model")
                    .predict(inputs, warped, &test)
            }
            ModelKind::LinearRegression => {
                let rows: Vec<Vec<f64>> = train
                    .iter()
                    .map(|(p, _)| fill_encoding(space, p, fill_seed).unit)
                    .collect();
                let model = LinearModel::fit(&rows, warped)?;
                Ok(test
                    .iter()
                    .map(|p| vec![(model.predict(&fill_encoding(space, p, fill_seed).unit), 0.0)])
                    .collect())
            }
            ModelKind::ArcGpSeparate | ModelKind::PlainGpSeparate => {
                self.predict_separate(train, warped, test)
            }
        }
    }

    fn predict_separate(
        &mut self,
        train: &[&(Point, f64)],
        warped: &[f64],
        test: &[&Point],
    ) -> Result<Vec<Mixture>> {
        let raw_mean = train.iter().map(|(_, y)| y).sum::<f64>() / train.len() as f64;
        let fallback = match self.cfg.warp {
            Warp::Identity => raw_mean,
            Warp::Log => raw_mean.ln(),
        };
        let mut out: Vec<Mixture> = vec![vec![(fallback, 0.0)]; test.len()];
        for depth in 0..=self.space.max_depth() {
            let rows: Vec<usize> = (0..train.len())
                .filter(|&i| train[i].0.depth() == depth)
                .collect();
            let targets: Vec<usize> = (0..test.len())
                .filter(|&i| test[i].depth() == depth)
                .collect();
            if rows.is_empty() || targets.is_empty() {
                continue;
            }
            let dims = self.space.mask_at(depth).iter().filter(|&&m| m).count();
            let family = match self.kind {
                ModelKind::ArcGpSeparate => arc_family(dims, self.cfg.base),
                _ => plain_family(dims, self.cfg.base),
            };
            let (cfg, seed, kind) = (self.cfg, self.seed, self.kind);
            let gp = self.per_depth.entry(depth).or_insert_with(|| {
                SampledGp::new(
                    family,
                    cfg.mcmc,
                    derive_seed(&[seed, kind as u64, depth as u64 + 1]),
                )
            });
            let inputs = rows
                .iter()
                .map(|&i| relevant_encoding(self.space, &train[i].0))
                .collect();
            let y: Vec<f64> = rows.iter().map(|&i| warped[i]).collect();
            let xs: Vec<KernelInput> = targets
                .iter()
                .map(|&i| relevant_encoding(self.space, test[i]))
                .collect();
            for (i, m) in targets.into_iter().zip(gp.predict(inputs, &y, &xs)?) {
                out[i] = m;
            }
        }
        Ok(out)
    }
}

/// Point predictions from mixtures: `(original space, warped space)`.
fn point_predictions(mixtures: &[Mixture], warp: Warp) -> (Vec<f64>, Vec<f64>) {
    mixtures
        .iter()
        .map(|mix| {
            let k = mix.len() as f64;
            let warped = mix.iter().map(|(m, _)| m).sum::<f64>() / k;
            let original = match warp {
                Warp::Identity => warped,
                // lognormal mean
                Warp::Log => mix.iter().map(|(m, v)| (m + v / 2.0).exp()).sum::<f64>() / k,
            };
            (original, warped)
        })
        .unzip()
}

fn run_job(
    cfg: &ExperimentConfig,
    obj: &SyntheticObjective,
    kind: ModelKind,
    seed_idx: usize,
) -> Result<Vec<FoldScore>> {
    let seed = cfg.seeds[seed_idx];
    let data = generate_dataset(obj, cfg.n_points, seed);
    let mut runner = Runner::new(kind, obj.space(), cfg, seed);
    let mut scores = Vec::with_capacity(cfg.folds);
    for (k, test_idx) in fold_tests(data.len(), cfg.folds, seed)
        .into_iter()
        .enumerate()
    {
        let mut is_test = vec![false; data.len()];
        for &i in &test_idx {
            is_test[i] = true;
        }
        let train: Vec<&(Point, f64)> = data
            .iter()
            .zip(&is_test)
            .filter(|(_, &t)| !t)
            .map(|(d, _)| d)
            .collect();
        let raw: Vec<f64> = train.iter().map(|(_, y)| *y).collect();
        let warped = cfg.warp.apply(&raw)?;
        let test_points: Vec<&Point> = test_idx.iter().map(|&i| &data[i].0).collect();
        let actual: Vec<f64> = test_idx.iter().map(|&i| data[i].1).collect();
        let mixtures = runner.predict(&train, &warped, &test_points)?;
        let (orig, warped_pred) = point_predictions(&mixtures, cfg.warp);
        let nmse_log = match cfg.warp {
            Warp::Identity => None,
            Warp::Log => Some(nmse(&warped_pred, &cfg.warp.apply(&actual)?)?),
        };
        scores.push(FoldScore {
            model: kind,
            seed,
            fold: seed_idx * cfg.folds + k,
            nmse: nmse(&orig, &actual)?,
            nmse_log,
        });
    }
    Ok(scores)
}

/// Runs every model over every seed's folds. Each (model, seed) pair is an
/// independent job; results are ordered by model, then fold.
pub fn run_regression_experiment(cfg: &ExperimentConfig) -> Result<RegressionResult> {
    cfg.validate()?;
    if cfg.models.is_empty() {
        return Err(Error::Config("no models selected".into()));
    }
    let obj = cfg.objective();
    let jobs: Vec<(ModelKind, usize)> = cfg
        .models
        .iter()
        .flat_map(|&m| (0..cfg.seeds.len()).map(move |s| (m, s)))
        .collect();
    let results = par::map_slice(cfg.execution(), &jobs, |&(m, s)| run_job(cfg, &obj, m, s));
    let mut scores = Vec::new();
    for r in results {
        scores.extend(r?);
    }
    Ok(RegressionResult {
        warp: cfg.warp,
        scores,
    })
}
