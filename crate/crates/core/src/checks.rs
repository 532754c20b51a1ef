//! Randomized property suite for the arc kernel, run by `arcbo check-kernel`.
//!
//! The distance function is pluggable so that a deliberately broken
//! implementation can be fed through the same suite.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{arc_distance, embed, feature_sq_dist, ArcParams, BaseCovariance};
use crate::space::{Dimension, ParameterSpace, Point};

pub type DistanceFn = fn(&ParameterSpace, &ArcParams, &Point, &Point) -> Result<f64>;

/// Known faults that can be injected in place of the real distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Doubles the distance for dimensions relevant on one side only.
    MismatchCase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    pub space: ParameterSpace,
    pub params: ArcParams,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_gram_draws")]
    pub gram_draws: usize,
    #[serde(default = "default_gram_points")]
    pub gram_points: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fault_injection: Option<Fault>,
}

fn default_draws() -> usize {
    10_000
}

fn default_gram_draws() -> usize {
    50
}

fn default_gram_points() -> usize {
    30
}

impl CheckConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        if cfg.params.dims() != cfg.space.len() {
            return Err(Error::DimensionMismatch {
                expected: cfg.space.len(),
                actual: cfg.params.dims(),
            });
        }
        Ok(cfg)
    }

    pub fn distance_fn(&self) -> DistanceFn {
        match self.fault_injection {
            None => arc_distance,
            Some(Fault::MismatchCase) => faulty_mismatch_distance,
        }
    }
}

fn faulty_mismatch_distance(
    space: &ParameterSpace,
    params: &ArcParams,
    p: &Point,
    q: &Point,
) -> Result<f64> {
    let d = arc_distance(space, params, p, q)?;
    let extra: f64 = p
        .mask()
        .iter()
        .zip(q.mask())
        .zip(&params.omega)
        .filter(|((a, b), _)| a != b)
        .map(|(_, w)| 3.0 * w * w)
        .sum();
    Ok((d * d + extra).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// First counterexample, if any.
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub properties: Vec<PropertyResult>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PropertyResult> {
        self.properties.iter().filter(|p| !p.passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.properties {
            let status = if p.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{status} {} ({} cases)", p.name, p.cases));
            if let Some(d) = &p.detail {
                out.push_str(&format!(": {d}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Tracks a property over many cases, keeping the first failure.
struct Tally {
    name: &'static str,
    cases: usize,
    detail: Option<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            cases: 0,
            detail: None,
        }
    }

    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok && self.detail.is_none() {
            self.detail = Some(describe());
        }
    }

    fn error(&mut self, e: Error) {
        self.check(false, || e.to_string());
    }

    fn finish(self) -> PropertyResult {
        PropertyResult {
            name: self.name,
            passed: self.detail.is_none(),
            cases: self.cases,
            detail: self.detail,
        }
    }
}

/// A uniformly random point; irrelevant coordinates are drawn too.
pub fn random_point<R: Rng>(space: &ParameterSpace, rng: &mut R) -> Point {
    let depth = rng.random_range(0..=space.max_depth());
    let values: Vec<f64> = space
        .dims()
        .iter()
        .map(|d| d.lower + rng.random::<f64>() * d.range())
        .collect();
    space
        .make_point(depth as f64, &values)
        .expect("drawn inside bounds")
}

/// Random valid arc parameters with the given base covariance.
pub fn random_params<R: Rng>(dims: usize, base: BaseCovariance, rng: &mut R) -> ArcParams {
    let omega = (0..dims).map(|_| rng.random_range(0.1..3.0)).collect();
    let rho = (0..dims).map(|_| rng.random()).collect();
    ArcParams::new(omega, rho, rng.random_range(0.5..2.0), base).expect("valid draw")
}

fn kernel_value(
    dist: DistanceFn,
    space: &ParameterSpace,
    params: &ArcParams,
    p: &Point,
    q: &Point,
) -> Result<f64> {
    let d = dist(space, params, p, q)?;
    Ok(params.base.kappa_sq(d * d, params.amplitude))
}

fn embedding_agreement(
    cfg: &CheckConfig,
    dist: DistanceFn,
    rng: &mut ChaCha8Rng,
) -> PropertyResult {
    let mut t = Tally::new("embedding_agreement");
    for i in 0..cfg.draws {
        let params = if i == 0 {
            cfg.params.clone()
        } else {
            random_params(cfg.space.len(), cfg.params.base, rng)
        };
        let p = random_point(&cfg.space, rng);
        let q = random_point(&cfg.space, rng);
        let run = || -> Result<(f64, f64)> {
            let d = dist(&cfg.space, &params, &p, &q)?;
            let e = feature_sq_dist(
                &embed(&cfg.space, &params, &p)?,
                &embed(&cfg.space, &params, &q)?,
            )
            .sqrt();
            Ok((d, e))
        };
        match run() {
            Ok((d, e)) => t.check((d - e).abs() <= 1e-12, || {
                format!("closed form {d} vs embedding {e}")
            }),
            Err(e) => t.error(e),
        }
    }
    t.finish()
}

fn case_table(dist: DistanceFn) -> PropertyResult {
    let mut t = Tally::new("case_table");
    let one =
        |layer| ParameterSpace::new(1, vec![Dimension::new("x", 0.0, 1.0, layer)]).expect("valid");
    let s = one(1);
    let pt = |depth: f64, x: f64| s.make_point(depth, &[x]).expect("valid");
    let params = |omega: f64, rho: f64| {
        ArcParams::new(vec![omega], vec![rho], 1.0, BaseCovariance::Matern52).expect("valid")
    };
    let cases = [
        (
            "both irrelevant",
            params(1.3, 0.4),
            pt(0.0, 0.2),
            pt(0.0, 0.9),
            0.0,
        ),
        (
            "relevance mismatch",
            params(0.7, 0.4),
            pt(1.0, 0.2),
            pt(0.0, 0.9),
            0.7,
        ),
        (
            "half turn",
            params(1.0, 1.0),
            pt(1.0, 0.0),
            pt(1.0, 1.0),
            2.0,
        ),
        (
            "rho one third",
            params(1.0, 1.0 / 3.0),
            pt(1.0, 0.0),
            pt(1.0, 1.0),
            1.0,
        ),
        (
            "same point",
            params(2.0, 0.8),
            pt(1.0, 0.3),
            pt(1.0, 0.3),
            0.0,
        ),
    ];
    for (label, params, p, q, want) in cases {
        match dist(&s, &params, &p, &q) {
            Ok(d) => t.check((d - want).abs() <= 1e-12, || {
                format!("{label}: got {d}, want {want}")
            }),
            Err(e) => t.error(e),
        }
    }
    t.finish()
}

/// Replaces the values at `positions` with fresh in-bounds draws.
fn resample(space: &ParameterSpace, p: &Point, positions: &[usize], rng: &mut ChaCha8Rng) -> Point {
    let mut values = p.values().to_vec();
    for &i in positions {
        let d = &space.dims()[i];
        values[i] = d.lower + rng.random::<f64>() * d.range();
    }
    space.make_point(p.depth() as f64, &values).expect("valid")
}

fn invariances(cfg: &CheckConfig, dist: DistanceFn, rng: &mut ChaCha8Rng) -> [PropertyResult; 2] {
    let mut both = Tally::new("irrelevant_both_invariance");
    let mut one = Tally::new("irrelevant_one_side_invariance");
    let s = &cfg.space;
    for _ in 0..cfg.draws.div_ceil(10) {
        let p = random_point(s, rng);
        let q = random_point(s, rng);
        let base = match kernel_value(dist, s, &cfg.params, &p, &q) {
            Ok(k) => k,
            Err(e) => {
                both.error(e);
                continue;
            }
        };
        let hidden_both: Vec<usize> = (0..s.len())
            .filter(|&i| !p.mask()[i] && !q.mask()[i])
            .collect();
        let (p2, q2) = (
            resample(s, &p, &hidden_both, rng),
            resample(s, &q, &hidden_both, rng),
        );
        if let Ok(k) = kernel_value(dist, s, &cfg.params, &p2, &q2) {
            both.check(k.to_bits() == base.to_bits(), || {
                format!("{base} changed to {k}")
            });
        }
        let hidden_p: Vec<usize> = (0..s.len())
            .filter(|&i| !p.mask()[i] && q.mask()[i])
            .collect();
        let hidden_q: Vec<usize> = (0..s.len())
            .filter(|&i| p.mask()[i] && !q.mask()[i])
            .collect();
        let (p3, q3) = (
            resample(s, &p, &hidden_p, rng),
            resample(s, &q, &hidden_q, rng),
        );
        if let Ok(k) = kernel_value(dist, s, &cfg.params, &p3, &q3) {
            one.check(k.to_bits() == base.to_bits(), || {
                format!("{base} changed to {k}")
            });
        }
    }
    [both.finish(), one.finish()]
}

fn pseudo_metric(cfg: &CheckConfig, dist: DistanceFn, rng: &mut ChaCha8Rng) -> PropertyResult {
    let mut t = Tally::new("pseudo_metric");
    let s = &cfg.space;
    for _ in 0..cfg.draws.div_ceil(10) {
        let params = random_params(s.len(), cfg.params.base, rng);
        let [a, b, c] = [
            random_point(s, rng),
            random_point(s, rng),
            random_point(s, rng),
        ];
        let run = || -> Result<[f64; 5]> {
            Ok([
                dist(s, &params, &a, &b)?,
                dist(s, &params, &b, &a)?,
                dist(s, &params, &b, &c)?,
                dist(s, &params, &a, &c)?,
                dist(s, &params, &a, &a)?,
            ])
        };
        match run() {
            Ok([ab, ba, bc, ac, aa]) => {
                t.check(ab == ba, || format!("asymmetric: {ab} vs {ba}"));
                t.check(ab >= 0.0 && aa == 0.0, || {
                    format!("d(a,b) = {ab}, d(a,a) = {aa}")
                });
                t.check(ac <= ab + bc + 1e-10, || {
                    format!("triangle: {ac} > {ab} + {bc}")
                });
            }
            Err(e) => t.error(e),
        }
    }
    t.finish()
}

fn monotonicity(dist: DistanceFn, rng: &mut ChaCha8Rng) -> PropertyResult {
    let mut t = Tally::new("monotonicity");
    let s = ParameterSpace::new(0, vec![Dimension::new("x", -2.0, 3.0, 0)]).expect("valid");
    for _ in 0..20 {
        let params = random_params(1, BaseCovariance::Matern52, rng);
        let origin = s.make_point(0.0, &[-2.0]).expect("valid");
        let mut prev = 0.0;
        for k in 1..=100 {
            let x = -2.0 + 5.0 * k as f64 / 100.0;
            match dist(
                &s,
                &params,
                &origin,
                &s.make_point(0.0, &[x]).expect("valid"),
            ) {
                Ok(d) => {
                    t.check(d >= prev, || {
                        format!("distance fell from {prev} to {d} at gap {}", x + 2.0)
                    });
                    prev = d;
                }
                Err(e) => t.error(e),
            }
        }
    }
    t.finish()
}

fn gram_psd(cfg: &CheckConfig, dist: DistanceFn, rng: &mut ChaCha8Rng) -> PropertyResult {
    let mut t = Tally::new("gram_psd");
    let s = &cfg.space;
    let n = cfg.gram_points;
    let bases = [
        BaseCovariance::ExpQuadratic,
        BaseCovariance::RationalQuadratic { alpha: 1.5 },
        BaseCovariance::Matern52,
    ];
    for base in bases {
        for _ in 0..cfg.gram_draws {
            let params = random_params(s.len(), base, rng);
            let points: Vec<Point> = (0..n).map(|_| random_point(s, rng)).collect();
            let mut g = DMatrix::zeros(n, n);
            let mut failed = None;
            for i in 0..n {
                for j in 0..=i {
                    match kernel_value(dist, s, &params, &points[i], &points[j]) {
                        Ok(k) => {
                            g[(i, j)] = k;
                            g[(j, i)] = k;
                        }
                        Err(e) => failed = Some(e),
                    }
                }
            }
            if let Some(e) = failed {
                t.error(e);
                continue;
            }
            let min = SymmetricEigen::new(g).eigenvalues.min();
            let floor = -1e-8 * n as f64 * params.amplitude;
            t.check(min >= floor, || {
                format!("{base:?}: min eigenvalue {min} < {floor}")
            });
        }
    }
    t.finish()
}

/// Runs every property with the distance selected by the config.
pub fn run_kernel_checks(cfg: &CheckConfig) -> CheckReport {
    run_kernel_checks_with(cfg, cfg.distance_fn())
}

pub fn run_kernel_checks_with(cfg: &CheckConfig, dist: DistanceFn) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let [both, one] = invariances(cfg, dist, &mut rng);
    let properties = vec![
        embedding_agreement(cfg, dist, &mut rng),
        case_table(dist),
        both,
        one,
        pseudo_metric(cfg, dist, &mut rng),
        monotonicity(dist, &mut rng),
        gram_psd(cfg, dist, &mut rng),
    ];
    CheckReport { properties }
}
