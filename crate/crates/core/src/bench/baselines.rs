//! Baselines that ignore the conditional structure.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::point_stream;
use crate::error::{Error, Result};
use crate::space::{ParameterSpace, Point};

/// Replaces irrelevant coordinates with uniform draws from their bounds.
/// The draws come from a stream keyed by `seed` and the point's relevant
/// content, so conditionally equal points always get the same fill.
pub fn fill_in_random(space: &ParameterSpace, point: &Point, seed: u64) -> Vec<f64> {
    let mut rng = point_stream(seed, point);
    point
        .values()
        .iter()
        .zip(point.mask())
        .zip(space.dims())
        .map(|((&x, &relevant), dim)| {
            let u: f64 = rng.random();
            if relevant {
                x
            } else {
                dim.lower + u * dim.range()
            }
        })
        .collect()
}

/// Least squares with an intercept and a small ridge on all coefficients.
#[derive(Debug, Clone)]
pub struct LinearModel {
    coef: DVector<f64>,
}

pub const LINEAR_RIDGE: f64 = 1e-6;

fn design(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let p = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(
        rows.len(),
        p + 1,
        |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] },
    )
}

impl LinearModel {
    pub fn fit(rows: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        let p = rows.first().map_or(0, |r| r.len());
        if rows.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                actual: targets.len(),
            });
        }
        if rows.len() < p + 2 {
            return Err(Error::Config(format!(
                "linear baseline needs at least {} rows, got {}",
                p + 2,
                rows.len()
            )));
        }
        let x = design(rows);
        let y = DVector::from_column_slice(targets);
        let mut gram = x.transpose() * &x;
        for i in 0..gram.nrows() {
            gram[(i, i)] += LINEAR_RIDGE;
        }
        let rhs = x.transpose() * y;
        let coef = gram.cholesky().ok_or(Error::SingularKernel)?.solve(&rhs);
        Ok(Self { coef })
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coef
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.coef[0]
            + row
                .iter()
                .zip(self.coef.iter().skip(1))
                .map(|(x, b)| x * b)
                .sum::<f64>()
    }
}

/// Fits on `train` and predicts every row of `test`.
pub fn linear_baseline(train: (&[Vec<f64>], &[f64]), test: &[Vec<f64>]) -> Result<Vec<f64>> {
    let model = LinearModel::fit(train.0, train.1)?;
    Ok(test.iter().map(|r| model.predict(r)).collect())
}

/// Mean squared error divided by the population variance of `actuals`.
pub fn nmse(predictions: &[f64], actuals: &[f64]) -> Result<f64> {
    if predictions.len() != actuals.len() {
        return Err(Error::DimensionMismatch {
            expected: actuals.len(),
            actual: predictions.len(),
        });
    }
    if actuals.is_empty() {
        return Err(Error::EmptyData);
    }
    let n = actuals.len() as f64;
    let mean = actuals.iter().sum::<f64>() / n;
    let var = actuals.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::Domain("NMSE undefined for constant actuals".into()));
    }
    let mse = predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (p - a).powi(2))
        .sum::<f64>()
        / n;
    Ok(mse / var)
}
