//! The arc kernel and the plain baseline kernel.
//!
//! Each dimension `i` of a conditional point is embedded in the plane:
//! irrelevant dimensions go to the origin, relevant ones to
//! `ω_i [sin θ, cos θ]` with `θ = π ρ_i x̃_i` on the normalized coordinate.
//! Distances in the concatenated `2D`-dimensional embedding feed a
//! distance-based base covariance. Per dimension the distance is
//!
//! * `0` when the dimension is irrelevant for both points,
//! * `ω_i` when exactly one point uses it,
//! * `2 ω_i |sin(π ρ_i (x̃_i - x̃'_i) / 2)|` when both do, which equals
//!   `ω_i √2 √(1 - cos(π ρ_i (x̃_i - x̃'_i)))` without the cancellation.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::space::{ParameterSpace, Point};

/// Distance-based covariance `κ(Δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum BaseCovariance {
    #[serde(rename = "expquad")]
    ExpQuadratic,
    #[serde(rename = "rq")]
    RationalQuadratic { alpha: f64 },
    #[default]
    #[serde(rename = "matern52")]
    Matern52,
}

impl BaseCovariance {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BaseCovariance::RationalQuadratic { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                Err(Error::InvalidParams(format!(
                    "alpha must be positive, got {alpha}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// `κ` evaluated from a squared distance. Callers guarantee `sq >= 0`.
    #[inline]
    pub fn kappa_sq(&self, sq: f64, amplitude: f64) -> f64 {
        match *self {
            BaseCovariance::ExpQuadratic => amplitude * (-0.5 * sq).exp(),
            BaseCovariance::RationalQuadratic { alpha } => {
                amplitude * (1.0 + sq / (2.0 * alpha)).powf(-alpha)
            }
            BaseCovariance::Matern52 => {
                let r = (5.0 * sq).sqrt();
                amplitude * (1.0 + r + 5.0 * sq / 3.0) * (-r).exp()
            }
        }
    }

    fn name(&self) -> &'static str {
        match self {
            BaseCovariance::ExpQuadratic => "expquad",
            BaseCovariance::RationalQuadratic { .. } => "rq",
            BaseCovariance::Matern52 => "matern52",
        }
    }

    fn alpha(&self) -> Option<f64> {
        match *self {
            BaseCovariance::RationalQuadratic { alpha } => Some(alpha),
            _ => None,
        }
    }

    fn from_parts(name: &str, alpha: Option<f64>) -> Result<Self> {
        let base = match (name, alpha) {
            ("expquad", _) => BaseCovariance::ExpQuadratic,
            ("matern52", _) => BaseCovariance::Matern52,
            ("rq", Some(alpha)) => BaseCovariance::RationalQuadratic { alpha },
            ("rq", None) => {
                return Err(Error::InvalidParams("rq covariance needs alpha".into()));
            }
            (other, _) => {
                return Err(Error::InvalidParams(format!(
                    "unknown base covariance {other}"
                )));
            }
        };
        base.validate()?;
        Ok(base)
    }
}

/// `κ(Δ)` for a nonnegative distance.
pub fn base_kappa(base: BaseCovariance, delta: f64, amplitude: f64) -> Result<f64> {
    if delta < 0.0 || delta.is_nan() {
        return Err(Error::NegativeDistance(delta));
    }
    Ok(base.kappa_sq(delta * delta, amplitude))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamsDoc {
    omega: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<Vec<f64>>,
    amplitude: f64,
    base: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

/// Hyperparameters of the arc kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsDoc", into = "ParamsDoc")]
pub struct ArcParams {
    pub omega: Vec<f64>,
    pub rho: Vec<f64>,
    pub amplitude: f64,
    pub base: BaseCovariance,
}

impl ArcParams {
    pub fn new(
        omega: Vec<f64>,
        rho: Vec<f64>,
        amplitude: f64,
        base: BaseCovariance,
    ) -> Result<Self> {
        let p = Self {
            omega,
            rho,
            amplitude,
            base,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega.len() != self.rho.len() {
            return Err(Error::InvalidParams(format!(
                "omega has {} entries but rho has {}",
                self.omega.len(),
                self.rho.len()
            )));
        }
        validate_positive("omega", &self.omega)?;
        if let Some(r) = self.rho.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::InvalidParams(format!(
                "rho must lie in [0, 1], got {r}"
            )));
        }
        validate_positive("amplitude", &[self.amplitude])?;
        self.base.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("params serialize")
    }

    pub fn dims(&self) -> usize {
        self.omega.len()
    }
}

impl TryFrom<ParamsDoc> for ArcParams {
    type Error = Error;

    fn try_from(doc: ParamsDoc) -> Result<Self> {
        let rho = doc
            .rho
            .ok_or_else(|| Error::InvalidParams("arc parameters need rho".into()))?;
        ArcParams::new(
            doc.omega,
            rho,
            doc.amplitude,
            BaseCovariance::from_parts(&doc.base, doc.alpha)?,
        )
    }
}

impl From<ArcParams> for ParamsDoc {
    fn from(p: ArcParams) -> Self {
        ParamsDoc {
            omega: p.omega,
            rho: Some(p.rho),
            amplitude: p.amplitude,
            base: p.base.name().into(),
            alpha: p.base.alpha(),
        }
    }
}

/// Hyperparameters of the plain kernel: every coordinate is treated as
/// relevant and scaled by `ω_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsDoc", into = "ParamsDoc")]
pub struct PlainParams {
    pub omega: Vec<f64>,
    pub amplitude: f64,
    pub base: BaseCovariance,
}

impl PlainParams {
    pub fn new(omega: Vec<f64>, amplitude: f64, base: BaseCovariance) -> Result<Self> {
        validate_positive("omega", &omega)?;
        validate_positive("amplitude", &[amplitude])?;
        base.validate()?;
        Ok(Self {
            omega,
            amplitude,
            base,
        })
    }

    pub fn dims(&self) -> usize {
        self.omega.len()
    }
}

impl TryFrom<ParamsDoc> for PlainParams {
    type Error = Error;

    fn try_from(doc: ParamsDoc) -> Result<Self> {
        PlainParams::new(
            doc.omega,
            doc.amplitude,
            BaseCovariance::from_parts(&doc.base, doc.alpha)?,
        )
    }
}

impl From<PlainParams> for ParamsDoc {
    fn from(p: PlainParams) -> Self {
        ParamsDoc {
            omega: p.omega,
            rho: None,
            amplitude: p.amplitude,
            base: p.base.name().into(),
            alpha: p.base.alpha(),
        }
    }
}

fn validate_positive(name: &str, xs: &[f64]) -> Result<()> {
    match xs.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        Some(x) => Err(Error::InvalidParams(format!(
            "{name} must be positive, got {x}"
        ))),
        None => Ok(()),
    }
}

/// Normalized coordinates plus relevance mask; what the kernels consume.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelInput {
    pub unit: Vec<f64>,
    pub mask: Vec<bool>,
}

impl KernelInput {
    pub fn conditional(space: &ParameterSpace, point: &Point) -> Self {
        Self {
            unit: space.normalize(point),
            mask: point.mask().to_vec(),
        }
    }

    /// A fully relevant input.
    pub fn dense(unit: Vec<f64>) -> Self {
        let mask = vec![true; unit.len()];
        Self { unit, mask }
    }

    pub fn len(&self) -> usize {
        self.unit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unit.is_empty()
    }
}

/// Per-dimension squared arc distance divided by `ω_i²`.
#[inline]
pub(crate) fn arc_unit_sq(rho: f64, xa: f64, ma: bool, xb: f64, mb: bool) -> f64 {
    match (ma, mb) {
        (false, false) => 0.0,
        (true, true) => {
            let s = (0.5 * PI * rho * (xa - xb)).sin();
            4.0 * s * s
        }
        _ => 1.0,
    }
}

/// Either kernel, as used by the GP and the samplers.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelParams {
    Arc(ArcParams),
    Plain(PlainParams),
}

impl KernelParams {
    pub fn dims(&self) -> usize {
        match self {
            KernelParams::Arc(p) => p.dims(),
            KernelParams::Plain(p) => p.dims(),
        }
    }

    pub fn amplitude(&self) -> f64 {
        match self {
            KernelParams::Arc(p) => p.amplitude,
            KernelParams::Plain(p) => p.amplitude,
        }
    }

    pub fn base(&self) -> BaseCovariance {
        match self {
            KernelParams::Arc(p) => p.base,
            KernelParams::Plain(p) => p.base,
        }
    }

    pub fn omega(&self) -> &[f64] {
        match self {
            KernelParams::Arc(p) => &p.omega,
            KernelParams::Plain(p) => &p.omega,
        }
    }

    /// Squared distance in dimension `i`, without the `ω_i²` factor.
    #[inline]
    pub fn unit_sq(&self, i: usize, a: &KernelInput, b: &KernelInput) -> f64 {
        match self {
            KernelParams::Arc(p) => {
                arc_unit_sq(p.rho[i], a.unit[i], a.mask[i], b.unit[i], b.mask[i])
            }
            KernelParams::Plain(_) => {
                let d = a.unit[i] - b.unit[i];
                d * d
            }
        }
    }

    pub fn sq_dist(&self, a: &KernelInput, b: &KernelInput) -> f64 {
        let omega = self.omega();
        (0..omega.len())
            .map(|i| omega[i] * omega[i] * self.unit_sq(i, a, b))
            .sum()
    }

    pub fn eval(&self, a: &KernelInput, b: &KernelInput) -> f64 {
        self.base().kappa_sq(self.sq_dist(a, b), self.amplitude())
    }

    /// Euclidean features whose distances reproduce [`sq_dist`](Self::sq_dist):
    /// the `2D` embedding for the arc kernel, `ω`-scaled coordinates otherwise.
    pub fn features(&self, x: &KernelInput) -> Vec<f64> {
        match self {
            KernelParams::Arc(p) => arc_embedding(p, x),
            KernelParams::Plain(p) => x.unit.iter().zip(&p.omega).map(|(u, w)| u * w).collect(),
        }
    }

    pub fn check_input(&self, x: &KernelInput) -> Result<()> {
        if x.unit.len() != self.dims() || x.mask.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: x.unit.len(),
            });
        }
        Ok(())
    }
}

fn arc_embedding(p: &ArcParams, x: &KernelInput) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * x.unit.len());
    for i in 0..x.unit.len() {
        if x.mask[i] {
            let theta = PI * p.rho[i] * x.unit[i];
            out.push(p.omega[i] * theta.sin());
            out.push(p.omega[i] * theta.cos());
        } else {
            out.push(0.0);
            out.push(0.0);
        }
    }
    out
}

/// Squared Euclidean distance between feature vectors.
#[inline]
pub fn feature_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_arc(space: &ParameterSpace, params: &ArcParams, points: &[&Point]) -> Result<()> {
    if params.dims() != space.len() {
        return Err(Error::DimensionMismatch {
            expected: space.len(),
            actual: params.dims(),
        });
    }
    for p in points {
        if p.len() != space.len() {
            return Err(Error::DimensionMismatch {
                expected: space.len(),
                actual: p.len(),
            });
        }
    }
    Ok(())
}

/// The `2D`-dimensional cylindrical embedding of a point.
pub fn embed(space: &ParameterSpace, params: &ArcParams, point: &Point) -> Result<Vec<f64>> {
    check_arc(space, params, &[point])?;
    Ok(arc_embedding(
        params,
        &KernelInput::conditional(space, point),
    ))
}

/// Arc pseudo-metric from the per-dimension closed form.
pub fn arc_distance(
    space: &ParameterSpace,
    params: &ArcParams,
    p: &Point,
    q: &Point,
) -> Result<f64> {
    check_arc(space, params, &[p, q])?;
    let k = KernelParams::Arc(params.clone());
    let a = KernelInput::conditional(space, p);
    let b = KernelInput::conditional(space, q);
    Ok(k.sq_dist(&a, &b).sqrt())
}

pub fn arc_kernel(space: &ParameterSpace, params: &ArcParams, p: &Point, q: &Point) -> Result<f64> {
    let d = arc_distance(space, params, p, q)?;
    Ok(params.base.kappa_sq(d * d, params.amplitude))
}

/// Plain kernel on normalized vectors, all coordinates treated as relevant.
pub fn plain_kernel(params: &PlainParams, v: &[f64], w: &[f64]) -> Result<f64> {
    for x in [v, w] {
        if x.len() != params.dims() {
            return Err(Error::DimensionMismatch {
                expected: params.dims(),
                actual: x.len(),
            });
        }
    }
    let sq: f64 = v
        .iter()
        .zip(w)
        .zip(&params.omega)
        .map(|((a, b), om)| {
            let d = om * (a - b);
            d * d
        })
        .sum();
    Ok(params.base.kappa_sq(sq, params.amplitude))
}

/// Arc-kernel Gram matrix over conditional points.
pub fn gram(space: &ParameterSpace, params: &ArcParams, points: &[Point]) -> Result<DMatrix<f64>> {
    gram_with(Execution::default(), space, params, points)
}

pub fn gram_with(
    exec: Execution,
    space: &ParameterSpace,
    params: &ArcParams,
    points: &[Point],
) -> Result<DMatrix<f64>> {
    check_arc(space, params, &points.iter().collect::<Vec<_>>())?;
    let inputs: Vec<KernelInput> = points
        .iter()
        .map(|p| KernelInput::conditional(space, p))
        .collect();
    Ok(kernel_matrix(
        exec,
        &KernelParams::Arc(params.clone()),
        &inputs,
    ))
}

/// Symmetric kernel matrix; each entry is evaluated once and mirrored.
pub fn kernel_matrix(
    exec: Execution,
    kernel: &KernelParams,
    inputs: &[KernelInput],
) -> DMatrix<f64> {
    let n = inputs.len();
    let rows = par::map_range(exec, n, |a| {
        (0..=a)
            .map(|b| kernel.eval(&inputs[a], &inputs[b]))
            .collect::<Vec<_>>()
    });
    let mut k = DMatrix::zeros(n, n);
    for (a, row) in rows.into_iter().enumerate() {
        for (b, v) in row.into_iter().enumerate() {
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    k
}
