//! Sobol low-discrepancy points in Gray-code order.
//!
//! Direction numbers come from the Joe–Kuo `new-joe-kuo-6.1000` table
//! bundled under `data/`. The first dimension uses the van der Corput
//! sequence. The origin is skipped, so the 1-D sequence starts
//! 0.5, 0.75, 0.25, 0.375, …

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const TABLE: &str = include_str!("../../data/new-joe-kuo-6.1000");
const BITS: usize = 32;

struct Primitive {
    degree: usize,
    coeffs: u32,
    m: Vec<u32>,
}

fn table() -> &'static [Primitive] {
    static PARSED: OnceLock<Vec<Primitive>> = OnceLock::new();
    PARSED.get_or_init(|| {
        TABLE
            .lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                let nums: Vec<u32> = line
                    .split_whitespace()
                    .map(|t| t.parse().expect("direction table is numeric"))
                    .collect();
                Primitive {
                    degree: nums[1] as usize,
                    coeffs: nums[2],
                    m: nums[3..].to_vec(),
                }
            })
            .collect()
    })
}

/// Largest supported dimension.
pub fn max_dimension() -> usize {
    table().len() + 1
}

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (31 - k);
        }
        return v;
    }
    let p = &table()[dim - 1];
    let s = p.degree;
    for (k, (vk, &m)) in v.iter_mut().zip(&p.m).take(s).enumerate() {
        *vk = m << (31 - k);
    }
    for k in s..BITS {
        v[k] = v[k - s] ^ (v[k - s] >> s);
        for j in 1..s {
            if (p.coeffs >> (s - 1 - j)) & 1 == 1 {
                v[k] ^= v[k - j];
            }
        }
    }
    v
}

/// The first `count` Sobol points in `[0,1)^dimension`, optionally with a
/// random digital shift keyed by `scramble`.
pub fn sobol_grid(dimension: usize, count: usize, scramble: Option<u64>) -> Result<Vec<Vec<f64>>> {
    if dimension == 0 || count == 0 {
        return Err(Error::Config(
            "sobol grid needs dimension and count of at least 1".into(),
        ));
    }
    if dimension > max_dimension() {
        return Err(Error::SobolDimension {
            requested: dimension,
            available: max_dimension(),
        });
    }
    if count as u64 >= u32::MAX as u64 {
        return Err(Error::Config(format!("sobol count {count} too large")));
    }
    let dirs: Vec<[u32; BITS]> = (0..dimension).map(direction_numbers).collect();
    let shift: Vec<u32> = match scramble {
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..dimension).map(|_| rng.random()).collect()
        }
        None => vec![0; dimension],
    };
    let scale = 1.0 / (1u64 << 32) as f64;
    let mut x = vec![0u32; dimension];
    let mut out = Vec::with_capacity(count);
    for i in 0..count as u32 {
        let c = i.trailing_ones() as usize;
        for (xj, dj) in x.iter_mut().zip(&dirs) {
            *xj ^= dj[c];
        }
        out.push(
            x.iter()
                .zip(&shift)
                .map(|(&xj, &sj)| (xj ^ sj) as f64 * scale)
                .collect(),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Star discrepancy of a 2-D point set, evaluated on every box whose
    /// corner coordinates come from the points (plus 1), counting both open
    /// and closed boxes.
    pub(crate) fn star_discrepancy_2d(points: &[Vec<f64>]) -> f64 {
        let n = points.len() as f64;
        let mut by_x: Vec<(f64, f64)> = points.iter().map(|p| (p[0], p[1])).collect();
        by_x.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
        ys.push(1.0);
        ys.sort_by(f64::total_cmp);
        let mut xs: Vec<f64> = by_x.iter().map(|p| p.0).collect();
        xs.push(1.0);
        let mut inside: Vec<f64> = Vec::new();
        let mut worst: f64 = 0.0;
        let mut next = 0;
        for &cx in &xs {
            // closed in x: all points with x <= cx
            while next < by_x.len() && by_x[next].0 <= cx {
                let pos = inside.partition_point(|&y| y < by_x[next].1);
                inside.insert(pos, by_x[next].1);
                next += 1;
            }
            let strictly_left = by_x.partition_point(|p| p.0 < cx);
            for &cy in &ys {
                let area = cx * cy;
                let closed = inside.partition_point(|&y| y <= cy) as f64 / n;
                worst = worst.max(closed - area);
                // open box: x < cx and y < cy
                let open = by_x[..strictly_left].iter().filter(|p| p.1 < cy).count() as f64 / n;
                worst = worst.max(area - open);
            }
        }
        worst
    }

    #[test]
    fn one_dimensional_prefix() {
        let g = sobol_grid(1, 4, None).unwrap();
        let flat: Vec<f64> = g.into_iter().map(|p| p[0]).collect();
        assert_eq!(flat, vec![0.5, 0.75, 0.25, 0.375]);
    }

    #[test]
    fn second_dimension_prefix() {
        // Joe–Kuo dimension 2 (s=1, m=1): 0.5, 0.25, 0.75, 0.375, 0.875
        let g = sobol_grid(2, 5, None).unwrap();
        let second: Vec<f64> = g.iter().map(|p| p[1]).collect();
        assert_eq!(second, vec![0.5, 0.25, 0.75, 0.375, 0.875]);
    }

    #[test]
    fn each_coordinate_is_stratified() {
        // every dyadic block of 2^k consecutive points hits each interval of
        // width 2^-k exactly once in every dimension
        let g = sobol_grid(24, 255, None).unwrap();
        let mut all: Vec<Vec<f64>> = vec![vec![0.0; 24]];
        all.extend(g);
        for d in 0..24 {
            let mut bins = [0; 256];
            for p in &all {
                bins[(p[d] * 256.0) as usize] += 1;
            }
            assert!(bins.iter().all(|&b| b == 1), "dimension {d}");
        }
    }

    #[test]
    fn beats_pseudo_random_discrepancy() {
        let sobol = sobol_grid(2, 1024, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let random: Vec<Vec<f64>> = (0..1024)
            .map(|_| vec![rng.random(), rng.random()])
            .collect();
        let ds = star_discrepancy_2d(&sobol);
        let dr = star_discrepancy_2d(&random);
        assert!(ds < dr, "sobol {ds} random {dr}");
    }

    #[test]
    fn deterministic_and_scrambled() {
        assert_eq!(
            sobol_grid(5, 50, None).unwrap(),
            sobol_grid(5, 50, None).unwrap()
        );
        let a = sobol_grid(5, 50, Some(3)).unwrap();
        assert_eq!(a, sobol_grid(5, 50, Some(3)).unwrap());
        assert_ne!(a, sobol_grid(5, 50, Some(4)).unwrap());
        assert!(a.iter().flatten().all(|&u| (0.0..1.0).contains(&u)));
    }

    #[test]
    fn dimension_limit() {
        assert_eq!(max_dimension(), 1000);
        assert!(sobol_grid(1000, 2, None).is_ok());
        assert!(matches!(
            sobol_grid(1001, 2, None),
            Err(Error::SobolDimension { .. })
        ));
    }
}
