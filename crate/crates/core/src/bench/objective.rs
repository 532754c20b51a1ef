//! A synthetic conditional objective: one quadratic bowl per layer plus a
//! bonus that makes deeper architectures better.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::point_stream;
use crate::error::{Error, Result};
use crate::space::{Dimension, ParameterSpace, Point};

const BUNDLED: &str = include_str!("../../assets/synthetic_objective_v1.json");
/// Outputs are clipped into `[MIN_VALUE, 1]` so a log warp stays valid.
pub const MIN_VALUE: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DimDoc {
    name: String,
    lower: f64,
    upper: f64,
    optimum: f64,
    weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ObjectiveDoc {
    version: u32,
    seed: u64,
    noise_sd: f64,
    depth_bonus: Vec<f64>,
    layers: Vec<Vec<DimDoc>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticObjective {
    space: ParameterSpace,
    /// Per-dimension optimum in normalized coordinates.
    optima: Vec<f64>,
    weights: Vec<f64>,
    depth_bonus: Vec<f64>,
    noise_sd: f64,
    seed: u64,
}

impl SyntheticObjective {
    /// The versioned objective shipped with the crate (`L = 5`, 23 dimensions).
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled objective is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ObjectiveDoc = serde_json::from_str(text)?;
        if doc.layers.is_empty() {
            return Err(Error::Config("objective needs at least one layer".into()));
        }
        let max_depth = doc.layers.len() - 1;
        if doc.depth_bonus.len() != max_depth + 1 {
            return Err(Error::Config(format!(
                "depth_bonus needs {} entries, got {}",
                max_depth + 1,
                doc.depth_bonus.len()
            )));
        }
        if !(doc.noise_sd >= 0.0 && doc.noise_sd.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sd must be >= 0, got {}",
                doc.noise_sd
            )));
        }
        let mut dims = Vec::new();
        let mut optima = Vec::new();
        let mut weights = Vec::new();
        for (layer, entries) in doc.layers.into_iter().enumerate() {
            for d in entries {
                if !(0.0..=1.0).contains(&d.optimum) || d.weight.is_nan() || d.weight < 0.0 {
                    return Err(Error::Config(format!(
                        "bad optimum or weight for {}",
                        d.name
                    )));
                }
                optima.push(d.optimum);
                weights.push(d.weight);
                dims.push(Dimension::new(d.name, d.lower, d.upper, layer));
            }
        }
        Ok(Self {
            space: ParameterSpace::new(max_depth, dims)?,
            optima,
            weights,
            depth_bonus: doc.depth_bonus,
            noise_sd: doc.noise_sd,
            seed: doc.seed,
        })
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn optima(&self) -> &[f64] {
        &self.optima
    }

    pub fn depth_bonus(&self) -> &[f64] {
        &self.depth_bonus
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_noise_sd(mut self, noise_sd: f64) -> Self {
        self.noise_sd = noise_sd;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// The point at depth `depth` with every coordinate at its optimum.
    pub fn optimum_at(&self, depth: usize) -> Point {
        let unit: Vec<f64> = self.optima.clone();
        self.space
            .make_point(depth as f64, &self.space.denormalize(&unit))
            .expect("optima lie inside the bounds")
    }

    /// Noise-free value before clipping.
    pub fn mean_value(&self, point: &Point) -> f64 {
        let unit = self.space.normalize(point);
        let bowl: f64 = unit
            .iter()
            .zip(point.mask())
            .zip(self.optima.iter().zip(&self.weights))
            .filter(|((_, &m), _)| m)
            .map(|((u, _), (opt, w))| w * (u - opt).powi(2))
            .sum();
        0.5 - self.depth_bonus[point.depth()] + bowl
    }
}

/// Evaluates the objective. Only relevant coordinates are read; the noise is
/// a deterministic function of the objective seed and the point.
pub fn eval_synthetic(obj: &SyntheticObjective, point: &Point) -> f64 {
    let mut f = obj.mean_value(point);
    if obj.noise_sd > 0.0 {
        let z: f64 = StandardNormal.sample(&mut point_stream(obj.seed, point));
        f += obj.noise_sd * z;
    }
    f.clamp(MIN_VALUE, 1.0)
}
