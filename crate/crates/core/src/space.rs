//! Conditional parameter spaces.
//!
//! A space has an integer depth coordinate in `[0, L]` and `D` bounded real
//! dimensions, each tagged with a layer. Dimension `i` is relevant at depth
//! `d` iff `d >= layer(i)`; layer-0 dimensions are always relevant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub layer: usize,
}

impl Dimension {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64, layer: usize) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            layer,
        }
    }

    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }

    fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DepthDoc {
    max: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpaceDoc {
    depth: DepthDoc,
    dims: Vec<Dimension>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceDoc", into = "SpaceDoc")]
pub struct ParameterSpace {
    max_depth: usize,
    dims: Vec<Dimension>,
}

impl TryFrom<SpaceDoc> for ParameterSpace {
    type Error = Error;

    fn try_from(doc: SpaceDoc) -> Result<Self> {
        ParameterSpace::new(doc.depth.max, doc.dims)
    }
}

impl From<ParameterSpace> for SpaceDoc {
    fn from(space: ParameterSpace) -> Self {
        SpaceDoc {
            depth: DepthDoc {
                max: space.max_depth,
            },
            dims: space.dims,
        }
    }
}

impl ParameterSpace {
    pub fn new(max_depth: usize, dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidSpace("no dimensions".into()));
        }
        for (i, d) in dims.iter().enumerate() {
            if !(d.lower.is_finite() && d.upper.is_finite() && d.lower < d.upper) {
                return Err(Error::InvalidSpace(format!(
                    "dimension {} needs finite lower < upper, got [{}, {}]",
                    d.name, d.lower, d.upper
                )));
            }
            if d.layer > max_depth {
                return Err(Error::InvalidSpace(format!(
                    "dimension {} has layer {} above max depth {}",
                    d.name, d.layer, max_depth
                )));
            }
            if dims[..i].iter().any(|o| o.name == d.name) {
                return Err(Error::InvalidSpace(format!("duplicate name {}", d.name)));
            }
        }
        Ok(Self { max_depth, dims })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("space serializes")
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    /// Number of real dimensions `D` (the depth coordinate is not counted).
    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Rounds a raw depth coordinate half-up and checks it against `[0, L]`.
    pub fn depth_index(&self, depth: f64) -> Result<usize> {
        let rounded = (depth + 0.5).floor();
        if !rounded.is_finite() || rounded < 0.0 || rounded > self.max_depth as f64 {
            return Err(Error::DepthOutOfRange {
                depth,
                max: self.max_depth,
            });
        }
        Ok(rounded as usize)
    }

    /// The relevance mask `δ(x)` for a raw depth coordinate.
    pub fn relevance(&self, depth: f64) -> Result<Vec<bool>> {
        let d = self.depth_index(depth)?;
        Ok(self.mask_at(d))
    }

    pub fn mask_at(&self, depth: usize) -> Vec<bool> {
        self.dims.iter().map(|dim| depth >= dim.layer).collect()
    }

    /// Builds a point, bound-checking only the coordinates relevant at `depth`.
    pub fn make_point(&self, depth: f64, values: &[f64]) -> Result<Point> {
        if values.len() != self.dims.len() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.len(),
                actual: values.len(),
            });
        }
        let depth = self.depth_index(depth)?;
        let mask = self.mask_at(depth);
        for ((dim, &x), &relevant) in self.dims.iter().zip(values).zip(&mask) {
            if relevant && !dim.contains(x) {
                return Err(Error::OutOfBounds {
                    name: dim.name.clone(),
                    value: x,
                    lower: dim.lower,
                    upper: dim.upper,
                });
            }
        }
        Ok(Point {
            depth,
            values: values.to_vec(),
            mask,
        })
    }

    /// Maps relevant coordinates to `(x - l) / (u - l)`; irrelevant ones to 0.
    pub fn normalize(&self, point: &Point) -> Vec<f64> {
        self.dims
            .iter()
            .zip(&point.values)
            .zip(&point.mask)
            .map(|((dim, &x), &relevant)| {
                if relevant {
                    (x - dim.lower) / dim.range()
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Inverse of [`normalize`](Self::normalize) on every coordinate.
    pub fn denormalize(&self, unit: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(unit)
            .map(|(dim, &u)| dim.lower + u * dim.range())
            .collect()
    }
}

/// A point in a conditional space. The mask is always derived from the depth.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    depth: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl Point {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same mask and same values at every relevant position.
    pub fn conditionally_eq(&self, other: &Point) -> bool {
        self.depth == other.depth
            && self.mask == other.mask
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.mask)
                .all(|((a, b), &m)| !m || a == b)
    }

    /// Relevant values with irrelevant positions replaced by `None`.
    pub fn relevant_values(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.values
            .iter()
            .zip(&self.mask)
            .map(|(&x, &m)| m.then_some(x))
    }
}
