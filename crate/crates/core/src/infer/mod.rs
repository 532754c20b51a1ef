//! Hyperparameter inference for the GP kernels.
//!
//! Positive hyperparameters (`ω_i`, `σ²`, noise) are sampled on the log
//! scale with standard-normal priors there, i.e. log-normal(0, 1). Each `ρ_i`
//! is sampled through a logit with a uniform prior on `[0, 1]`, so the
//! unconstrained density includes the logistic Jacobian. The constant mean is
//! fixed to the mean of the warped targets.

mod map;
mod slice;

pub use map::map_optimize;
pub use slice::{slice_step, HyperState};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{factorize, gaussian_log_density, GpModel, Warp};
use crate::kernel::{
    arc_unit_sq, ArcParams, BaseCovariance, KernelInput, KernelParams, PlainParams,
};
use crate::par::Execution;

/// Lower bound added to the sampled noise variance.
pub const NOISE_FLOOR: f64 = 1e-8;
/// Unconstrained coordinates beyond this magnitude are outside the support.
const MAX_ABS_COORD: f64 = 30.0;
const INIT_NOISE: f64 = 0.1;

/// Which kernel the hyperparameters belong to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    Arc { dims: usize, base: BaseCovariance },
    Plain { dims: usize, base: BaseCovariance },
}

impl KernelFamily {
    pub fn dims(&self) -> usize {
        match *self {
            KernelFamily::Arc { dims, .. } | KernelFamily::Plain { dims, .. } => dims,
        }
    }

    fn has_rho(&self) -> bool {
        matches!(self, KernelFamily::Arc { .. })
    }

    /// Length of the unconstrained parameter vector.
    pub fn n_params(&self) -> usize {
        let d = self.dims();
        if self.has_rho() {
            2 * d + 2
        } else {
            d + 2
        }
    }

    fn amp_index(&self) -> usize {
        self.n_params() - 2
    }

    fn noise_index(&self) -> usize {
        self.n_params() - 1
    }

    /// Prior medians, except the noise which starts at 0.1.
    pub fn initial_point(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_params()];
        x[self.noise_index()] = INIT_NOISE.ln();
        x
    }

    /// Maps an unconstrained vector to hyperparameters.
    pub fn decode(&self, x: &[f64]) -> Hypers {
        let d = self.dims();
        let clamp = |v: f64| v.clamp(-MAX_ABS_COORD, MAX_ABS_COORD);
        let omega: Vec<f64> = x[..d].iter().map(|&z| clamp(z).exp()).collect();
        let amplitude = clamp(x[self.amp_index()]).exp();
        let noise_var = NOISE_FLOOR + clamp(x[self.noise_index()]).exp();
        let kernel = match *self {
            KernelFamily::Arc { base, .. } => KernelParams::Arc(ArcParams {
                omega,
                rho: x[d..2 * d].iter().map(|&t| sigmoid(clamp(t))).collect(),
                amplitude,
                base,
            }),
            KernelFamily::Plain { base, .. } => KernelParams::Plain(PlainParams {
                omega,
                amplitude,
                base,
            }),
        };
        Hypers { kernel, noise_var }
    }

    /// Inverse of [`decode`](Self::decode).
    pub fn encode(&self, h: &Hypers) -> Vec<f64> {
        let mut x: Vec<f64> = h.kernel.omega().iter().map(|w| w.ln()).collect();
        if let KernelParams::Arc(p) = &h.kernel {
            x.extend(p.rho.iter().map(|&r| logit(r)));
        }
        x.push(h.kernel.amplitude().ln());
        x.push((h.noise_var - NOISE_FLOOR).max(f64::MIN_POSITIVE).ln());
        x
    }

    /// Prior log density on the unconstrained scale.
    pub fn log_prior(&self, x: &[f64]) -> f64 {
        if x.len() != self.n_params() || x.iter().any(|v| !v.is_finite() || v.abs() > MAX_ABS_COORD)
        {
            return f64::NEG_INFINITY;
        }
        let d = self.dims();
        let std_normal = |z: f64| -0.5 * z * z - 0.5 * (2.0 * PI).ln();
        let mut lp: f64 = x[..d].iter().map(|&z| std_normal(z)).sum();
        if self.has_rho() {
            // uniform on ρ, pulled back through the logistic map
            lp += x[d..2 * d]
                .iter()
                .map(|&t| -softplus(t) - softplus(-t))
                .sum::<f64>();
        }
        lp + std_normal(x[self.amp_index()]) + std_normal(x[self.noise_index()])
    }

    /// Draws an unconstrained vector from the prior.
    pub fn sample_prior<R: rand::Rng>(&self, rng: &mut R) -> Vec<f64> {
        use rand_distr::{Distribution, StandardNormal};
        let d = self.dims();
        (0..self.n_params())
            .map(|i| {
                if self.has_rho() && (d..2 * d).contains(&i) {
                    let u: f64 = rng.random_range(1e-12..1.0 - 1e-12);
                    logit(u)
                } else {
                    StandardNormal.sample(rng)
                }
            })
            .collect()
    }

    fn check(&self, data: &TrainingData) -> Result<()> {
        if data.inputs.is_empty() {
            return Err(Error::EmptyData);
        }
        for x in &data.inputs {
            if x.len() != self.dims() {
                return Err(Error::DimensionMismatch {
                    expected: self.dims(),
                    actual: x.len(),
                });
            }
        }
        Ok(())
    }
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else {
        t.exp().ln_1p()
    }
}

/// Kernel hyperparameters together with the noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypers {
    pub kernel: KernelParams,
    pub noise_var: f64,
}

impl Hypers {
    pub fn fit(&self, data: &TrainingData) -> Result<GpModel> {
        GpModel::fit_with(
            Execution::Sequential,
            &self.kernel,
            &data.inputs,
            &data.targets,
            self.noise_var,
            None,
            data.warp,
        )
    }
}

/// Inputs with raw (unwarped) targets.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub inputs: Vec<KernelInput>,
    pub targets: Vec<f64>,
    pub warp: Warp,
}

impl TrainingData {
    pub fn new(inputs: Vec<KernelInput>, targets: Vec<f64>, warp: Warp) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                actual: targets.len(),
            });
        }
        warp.apply(&targets)?;
        Ok(Self {
            inputs,
            targets,
            warp,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Sampler settings. Defaults: width 1, 10 step-outs, burn-in 50, thin 2,
/// 10 samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcSettings {
    pub n_samples: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub width: f64,
    pub max_stepout: usize,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self {
            n_samples: 10,
            burn_in: 50,
            thin: 2,
            width: 1.0,
            max_stepout: 10,
        }
    }
}

/// Unnormalized log posterior over unconstrained hyperparameters for a fixed
/// data set. Per-dimension squared distances are cached so that a
/// single-coordinate move only recomputes one dimension.
pub struct Posterior {
    family: KernelFamily,
    n: usize,
    resid: DVector<f64>,
    log_jacobian: f64,
    /// Packed lower triangles, one per dimension, of squared distances
    /// without the `ω²` factor.
    unit_sq: Vec<Vec<f64>>,
    /// `ρ` each arc cache entry was computed at.
    cached_rho: Vec<f64>,
    inputs: Vec<KernelInput>,
    scratch: Vec<f64>,
}

impl Posterior {
    pub fn new(family: KernelFamily, data: &TrainingData) -> Result<Self> {
        family.check(data)?;
        let warped = data.warp.apply(&data.targets)?;
        let n = warped.len();
        let mean = warped.iter().sum::<f64>() / n as f64;
        let resid = DVector::from_iterator(n, warped.iter().map(|y| y - mean));
        let packed = n * (n + 1) / 2;
        let d = family.dims();
        let mut post = Self {
            family,
            n,
            resid,
            log_jacobian: data.warp.log_jacobian(&data.targets),
            unit_sq: vec![vec![0.0; packed]; d],
            cached_rho: vec![f64::NAN; d],
            inputs: data.inputs.clone(),
            scratch: vec![0.0; packed],
        };
        if let KernelFamily::Plain { .. } = family {
            for i in 0..d {
                let mut idx = 0;
                for a in 0..n {
                    for b in 0..=a {
                        let diff = post.inputs[a].unit[i] - post.inputs[b].unit[i];
                        post.unit_sq[i][idx] = diff * diff;
                        idx += 1;
                    }
                }
            }
        }
        Ok(post)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    fn refresh_rho(&mut self, i: usize, rho: f64) {
        if self.cached_rho[i] == rho {
            return;
        }
        let mut idx = 0;
        for a in 0..self.n {
            let (xa, ma) = (self.inputs[a].unit[i], self.inputs[a].mask[i]);
            for b in 0..=a {
                let (xb, mb) = (self.inputs[b].unit[i], self.inputs[b].mask[i]);
                self.unit_sq[i][idx] = arc_unit_sq(rho, xa, ma, xb, mb);
                idx += 1;
            }
        }
        self.cached_rho[i] = rho;
    }

    /// GP log marginal likelihood at the given hyperparameters, or an error
    /// if the kernel matrix cannot be factorized.
    pub fn log_likelihood(&mut self, hypers: &Hypers) -> Result<f64> {
        let omega = hypers.kernel.omega().to_vec();
        if let KernelParams::Arc(p) = &hypers.kernel {
            for (i, &r) in p.rho.iter().enumerate() {
                self.refresh_rho(i, r);
            }
        }
        self.scratch.iter_mut().for_each(|s| *s = 0.0);
        for (i, w) in omega.iter().enumerate() {
            let w2 = w * w;
            for (s, u) in self.scratch.iter_mut().zip(&self.unit_sq[i]) {
                *s += w2 * u;
            }
        }
        let base = hypers.kernel.base();
        let amp = hypers.kernel.amplitude();
        let n = self.n;
        let mut k = DMatrix::zeros(n, n);
        let mut idx = 0;
        for a in 0..n {
            for b in 0..=a {
                let v = base.kappa_sq(self.scratch[idx], amp);
                k[(a, b)] = v;
                k[(b, a)] = v;
                idx += 1;
            }
        }
        let factor = factorize(k, hypers.noise_var)?;
        Ok(gaussian_log_density(&factor, &self.resid) + self.log_jacobian)
    }

    /// Log prior plus log marginal likelihood; `-∞` outside the support or
    /// when the GP cannot be fitted.
    pub fn log_density(&mut self, x: &[f64]) -> f64 {
        let lp = self.family.log_prior(x);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        let hypers = self.family.decode(x);
        match self.log_likelihood(&hypers) {
            Ok(ll) if ll.is_finite() => lp + ll,
            _ => f64::NEG_INFINITY,
        }
    }
}

/// Log posterior of an unconstrained vector given data (uncached).
pub fn log_posterior(family: KernelFamily, data: &TrainingData, x: &[f64]) -> Result<f64> {
    Ok(Posterior::new(family, data)?.log_density(x))
}

/// A slice-sampling chain that can be carried across changing data sets.
pub struct Chain {
    state: HyperState,
    settings: McmcSettings,
}

impl Chain {
    pub fn new(family: KernelFamily, settings: McmcSettings, seed: u64) -> Self {
        Self {
            state: HyperState::new(family.initial_point(), f64::NEG_INFINITY, seed),
            settings,
        }
    }

    pub fn from_point(x: Vec<f64>, settings: McmcSettings, seed: u64) -> Self {
        Self {
            state: HyperState::new(x, f64::NEG_INFINITY, seed),
            settings,
        }
    }

    pub fn state(&self) -> &HyperState {
        &self.state
    }

    /// Re-evaluates the cached density, e.g. after the data changed.
    pub fn rebase(&mut self, posterior: &mut Posterior) {
        self.state.log_post = posterior.log_density(&self.state.x);
    }

    /// One update of every coordinate in order.
    pub fn sweep(&mut self, posterior: &mut Posterior) {
        for axis in 0..self.state.x.len() {
            let state = std::mem::replace(&mut self.state, HyperState::new(Vec::new(), 0.0, 0));
            self.state = slice_step(
                state,
                axis,
                |x| posterior.log_density(x),
                self.settings.width,
                self.settings.max_stepout,
            );
        }
    }

    /// Runs `burn_in` sweeps then collects `n_samples`, `thin` sweeps apart.
    pub fn run(&mut self, posterior: &mut Posterior, burn_in: usize) -> Vec<Hypers> {
        self.rebase(posterior);
        for _ in 0..burn_in {
            self.sweep(posterior);
        }
        let thin = self.settings.thin.max(1);
        (0..self.settings.n_samples)
            .map(|_| {
                for _ in 0..thin {
                    self.sweep(posterior);
                }
                posterior.family().decode(&self.state.x)
            })
            .collect()
    }
}

/// Posterior samples of the hyperparameters; deterministic in `seed`.
pub fn sample_hypers(
    family: KernelFamily,
    data: &TrainingData,
    settings: McmcSettings,
    seed: u64,
) -> Result<Vec<Hypers>> {
    if settings.n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    let mut posterior = Posterior::new(family, data)?;
    let mut chain = Chain::new(family, settings, seed);
    Ok(chain.run(&mut posterior, settings.burn_in))
}
