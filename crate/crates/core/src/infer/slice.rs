//! Univariate slice sampling with stepping out and shrinkage.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Interval shrinks before giving up and keeping the current value.
const MAX_SHRINKS: usize = 200;

/// Sampler position, its cached log density and the random stream.
#[derive(Debug, Clone)]
pub struct HyperState {
    pub x: Vec<f64>,
    pub log_post: f64,
    pub rng: ChaCha8Rng,
}

impl HyperState {
    pub fn new(x: Vec<f64>, log_post: f64, seed: u64) -> Self {
        Self {
            x,
            log_post,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// One slice-sampling update of coordinate `axis`.
///
/// The interval of `width` is placed at random around the current value and
/// stepped out at most `max_stepout` times in total; if the limit is hit the
/// interval built so far is used. Rejected proposals shrink the interval
/// towards the current value.
pub fn slice_step<F>(
    mut state: HyperState,
    axis: usize,
    mut log_density: F,
    width: f64,
    max_stepout: usize,
) -> HyperState
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(width > 0.0, "slice width must be positive");
    let x0 = state.x[axis];
    let mut probe = state.x.clone();
    let mut eval = |v: f64, probe: &mut Vec<f64>| {
        probe[axis] = v;
        log_density(probe)
    };

    let u: f64 = state.rng.random();
    let level = state.log_post + (1.0 - u).ln();

    let mut lo = x0 - width * state.rng.random::<f64>();
    let mut hi = lo + width;
    let split: f64 = state.rng.random();
    let mut left_steps = (max_stepout as f64 * split).floor() as usize;
    let mut right_steps = max_stepout.saturating_sub(1).saturating_sub(left_steps);
    while left_steps > 0 && eval(lo, &mut probe) > level {
        lo -= width;
        left_steps -= 1;
    }
    while right_steps > 0 && eval(hi, &mut probe) > level {
        hi += width;
        right_steps -= 1;
    }

    for _ in 0..MAX_SHRINKS {
        let x1 = lo + state.rng.random::<f64>() * (hi - lo);
        let f1 = eval(x1, &mut probe);
        if f1 > level {
            state.x[axis] = x1;
            state.log_post = f1;
            return state;
        }
        if x1 < x0 {
            lo = x1;
        } else {
            hi = x1;
        }
    }
    state
}
