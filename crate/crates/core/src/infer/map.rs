//! MAP hyperparameters by coordinate-wise golden-section search.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Hypers, KernelFamily, Posterior, TrainingData};
use crate::error::{Error, Result};

const GOLDEN_ITERS: usize = 50;
const MAX_SWEEPS: usize = 25;
const HALF_BRACKET: f64 = 2.0;
const TOL: f64 = 1e-6;

/// Maximizes `f` along one axis on `[x - 2, x + 2]`. Only moves if the
/// search finds a strictly better value.
fn line_search<F: FnMut(&[f64]) -> f64>(x: &mut [f64], fx: f64, axis: usize, f: &mut F) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let x0 = x[axis];
    let mut probe = x.to_vec();
    let mut eval = |v: f64| {
        probe[axis] = v;
        f(&probe)
    };
    let (mut a, mut b) = (x0 - HALF_BRACKET, x0 + HALF_BRACKET);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    for _ in 0..GOLDEN_ITERS {
        if (b - a).abs() < TOL {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d);
        }
    }
    let (best, fbest) = if fc > fd { (c, fc) } else { (d, fd) };
    if fbest > fx {
        x[axis] = best;
        fbest
    } else {
        fx
    }
}

/// Best of `restarts` coordinate-descent runs started from prior draws,
/// scored by the log posterior.
pub fn map_optimize(
    family: KernelFamily,
    data: &TrainingData,
    restarts: usize,
    seed: u64,
) -> Result<Hypers> {
    Ok(family.decode(&map_optimize_point(family, data, restarts, seed)?.0))
}

/// As [`map_optimize`], returning the unconstrained optimum and its score.
pub fn map_optimize_point(
    family: KernelFamily,
    data: &TrainingData,
    restarts: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    if restarts == 0 {
        return Err(Error::Config("restarts must be at least 1".into()));
    }
    let mut posterior = Posterior::new(family, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..restarts {
        let mut x = family.sample_prior(&mut rng);
        let mut fx = posterior.log_density(&x);
        let mut f = |v: &[f64]| posterior.log_density(v);
        for _ in 0..MAX_SWEEPS {
            let before = fx;
            for axis in 0..x.len() {
                fx = line_search(&mut x, fx, axis, &mut f);
            }
            if fx - before < TOL {
                break;
            }
        }
        if fx.is_finite() && best.as_ref().is_none_or(|(_, b)| fx > *b) {
            best = Some((x, fx));
        }
    }
    best.ok_or(Error::SingularKernel)
}
