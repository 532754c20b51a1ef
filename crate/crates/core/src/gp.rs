//! Exact GP regression with a constant mean and optional log warping.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{feature_sq_dist, kernel_matrix, KernelInput, KernelParams};
use crate::par::{self, Execution};

/// Multipliers of `trace(K)/n` tried in order until the factorization succeeds.
pub const JITTER_LADDER: [f64; 5] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Warp {
    #[default]
    Identity,
    Log,
}

impl Warp {
    pub fn apply(self, raw: &[f64]) -> Result<Vec<f64>> {
        if let Some(y) = raw.iter().find(|y| !y.is_finite()) {
            return Err(Error::Domain(format!("non-finite target {y}")));
        }
        match self {
            Warp::Identity => Ok(raw.to_vec()),
            Warp::Log => raw
                .iter()
                .map(|&y| {
                    if y > 0.0 {
                        Ok(y.ln())
                    } else {
                        Err(Error::Domain(format!(
                            "log warp needs positive targets, got {y}"
                        )))
                    }
                })
                .collect(),
        }
    }

    /// Log-Jacobian of the warp, `-Σ log y` for the log warp.
    pub fn log_jacobian(self, raw: &[f64]) -> f64 {
        match self {
            Warp::Identity => 0.0,
            Warp::Log => -raw.iter().map(|y| y.ln()).sum::<f64>(),
        }
    }
}

/// Lower Cholesky factor of `K + (noise + jitter) I` with the jitter used.
#[derive(Debug, Clone)]
pub(crate) struct Factor {
    pub l: DMatrix<f64>,
    pub jitter: f64,
}

pub(crate) fn factorize(mut k: DMatrix<f64>, noise_var: f64) -> Result<Factor> {
    let n = k.nrows();
    let scale = if n == 0 { 0.0 } else { k.trace() / n as f64 };
    for i in 0..n {
        k[(i, i)] += noise_var;
    }
    let mut prev = 0.0;
    for step in JITTER_LADDER {
        let jitter = step * scale;
        for i in 0..n {
            k[(i, i)] += jitter - prev;
        }
        prev = jitter;
        if let Some(chol) = k.clone().cholesky() {
            return Ok(Factor {
                l: chol.unpack(),
                jitter,
            });
        }
    }
    Err(Error::SingularKernel)
}

fn solve_cholesky(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let z = l.solve_lower_triangular(b).expect("nonzero diagonal");
    l.tr_solve_lower_triangular(&z).expect("nonzero diagonal")
}

/// `-½ rᵀ(K+σI)⁻¹r - log|L| - n/2 log 2π` given a factor and residuals.
pub(crate) fn gaussian_log_density(factor: &Factor, resid: &DVector<f64>) -> f64 {
    let n = resid.len() as f64;
    let z = factor
        .l
        .solve_lower_triangular(resid)
        .expect("nonzero diagonal");
    let log_det: f64 = factor.l.diagonal().iter().map(|d| d.ln()).sum();
    -0.5 * z.norm_squared() - log_det - 0.5 * n * (2.0 * PI).ln()
}

#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: KernelParams,
    inputs: Vec<KernelInput>,
    features: Vec<Vec<f64>>,
    raw_targets: Vec<f64>,
    targets: Vec<f64>,
    noise_var: f64,
    mean_const: f64,
    warp: Warp,
    factor: Factor,
    alpha: DVector<f64>,
}

impl GpModel {
    /// Conditions a GP on data. `mean_const` defaults to the mean of the
    /// warped targets.
    pub fn fit(
        kernel: &KernelParams,
        inputs: &[KernelInput],
        raw_targets: &[f64],
        noise_var: f64,
        mean_const: Option<f64>,
        warp: Warp,
    ) -> Result<Self> {
        Self::fit_with(
            Execution::default(),
            kernel,
            inputs,
            raw_targets,
            noise_var,
            mean_const,
            warp,
        )
    }

    pub fn fit_with(
        exec: Execution,
        kernel: &KernelParams,
        inputs: &[KernelInput],
        raw_targets: &[f64],
        noise_var: f64,
        mean_const: Option<f64>,
        warp: Warp,
    ) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::EmptyData);
        }
        if inputs.len() != raw_targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                actual: raw_targets.len(),
            });
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "noise variance must be positive, got {noise_var}"
            )));
        }
        for x in inputs {
            kernel.check_input(x)?;
        }
        let targets = warp.apply(raw_targets)?;
        let mean_const =
            mean_const.unwrap_or_else(|| targets.iter().sum::<f64>() / targets.len() as f64);
        let k = kernel_matrix(exec, kernel, inputs);
        let factor = factorize(k, noise_var)?;
        let resid = DVector::from_iterator(targets.len(), targets.iter().map(|y| y - mean_const));
        let alpha = solve_cholesky(&factor.l, &resid);
        let features = inputs.iter().map(|x| kernel.features(x)).collect();
        Ok(Self {
            kernel: kernel.clone(),
            inputs: inputs.to_vec(),
            features,
            raw_targets: raw_targets.to_vec(),
            targets,
            noise_var,
            mean_const,
            warp,
            factor,
            alpha,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn inputs(&self) -> &[KernelInput] {
        &self.inputs
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn mean_const(&self) -> f64 {
        self.mean_const
    }

    pub fn warp(&self) -> Warp {
        self.warp
    }

    /// Jitter added on top of the noise during factorization.
    pub fn jitter(&self) -> f64 {
        self.factor.jitter
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.factor.l
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Warped training targets.
    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Posterior mean and latent variance at `x`, in warped space.
    pub fn predict(&self, x: &KernelInput) -> Result<(f64, f64)> {
        self.kernel.check_input(x)?;
        Ok(self.predict_features(&self.kernel.features(x)))
    }

    pub fn predict_batch(&self, exec: Execution, xs: &[KernelInput]) -> Result<Vec<(f64, f64)>> {
        for x in xs {
            self.kernel.check_input(x)?;
        }
        Ok(par::map_slice(exec, xs, |x| {
            self.predict_features(&self.kernel.features(x))
        }))
    }

    fn predict_features(&self, f: &[f64]) -> (f64, f64) {
        let base = self.kernel.base();
        let amp = self.kernel.amplitude();
        let kstar = DVector::from_iterator(
            self.features.len(),
            self.features
                .iter()
                .map(|g| base.kappa_sq(feature_sq_dist(f, g), amp)),
        );
        let mean = self.mean_const + kstar.dot(&self.alpha);
        let v = self
            .factor
            .l
            .solve_lower_triangular(&kstar)
            .expect("nonzero diagonal");
        let var = (amp - v.norm_squared()).max(0.0);
        (mean, var)
    }

    /// Log marginal likelihood of the raw targets (Jacobian included for the
    /// log warp so values compare across warps).
    pub fn log_marginal_likelihood(&self) -> f64 {
        let resid = DVector::from_iterator(
            self.targets.len(),
            self.targets.iter().map(|y| y - self.mean_const),
        );
        gaussian_log_density(&self.factor, &resid) + self.warp.log_jacobian(&self.raw_targets)
    }
}
