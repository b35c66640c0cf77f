//! Seeded random test inputs: smooth nonnegative fields, nested mask chains and
//! superlevel condensers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::capacity::Condenser;
use crate::error::Result;
use crate::grid::{superlevel, Field, GridDomain, Mask};

pub const MAX_BUMPS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 2],
    pub width: f64,
    pub amplitude: f64,
}

/// Sum of Gaussian bumps, clamped at zero and tapered by `Π (1 − s_a²)²`, where `s_a`
/// runs from −1 to 1 across axis `a`, so sampled fields vanish at the grid boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpField {
    pub bumps: Vec<Bump>,
}

impl BumpField {
    /// Draws between one and [`MAX_BUMPS`] bumps with centers inside the middle half
    /// of the grid. The first bump is always positive so the field is not identically
    /// zero.
    pub fn random<R: Rng + ?Sized>(domain: &GridDomain, rng: &mut R) -> Self {
        let count = rng.random_range(1..=MAX_BUMPS);
        let mut lo = [0.0; 2];
        let mut hi = [0.0; 2];
        let mut extent: f64 = f64::INFINITY;
        for a in 0..domain.dim() {
            let len = domain.spacing()[a] * domain.shape()[a] as f64;
            let mid = domain.origin()[a] + len / 2.0;
            lo[a] = mid - len / 4.0;
            hi[a] = mid + len / 4.0;
            extent = extent.min(len);
        }
        let bumps = (0..count)
            .map(|i| {
                let mut center = [0.0; 2];
                for a in 0..domain.dim() {
                    center[a] = rng.random_range(lo[a]..hi[a]);
                }
                let width = extent * rng.random_range(0.04..0.12);
                let amplitude = if i == 0 {
                    rng.random_range(0.5..1.0)
                } else {
                    rng.random_range(-0.4..1.0)
                };
                Bump {
                    center,
                    width,
                    amplitude,
                }
            })
            .collect();
        BumpField { bumps }
    }

    pub fn sample(&self, domain: &GridDomain) -> Result<Field> {
        let dim = domain.dim();
        let mut mid = [0.0; 2];
        let mut half = [1.0; 2];
        for a in 0..dim {
            half[a] = domain.spacing()[a] * domain.shape()[a] as f64 / 2.0;
            mid[a] = domain.origin()[a] + half[a];
        }
        Field::from_fn(domain, |x| {
            let s: f64 = self
                .bumps
                .iter()
                .map(|b| {
                    let r2: f64 = (0..dim).map(|a| (x[a] - b.center[a]).powi(2)).sum();
                    b.amplitude * (-r2 / (2.0 * b.width * b.width)).exp()
                })
                .sum();
            let taper: f64 = (0..dim)
                .map(|a| (1.0 - ((x[a] - mid[a]) / half[a]).powi(2)).powi(2))
                .product();
            s.max(0.0) * taper
        })
    }
}

/// Increasing chain of `len` masks: superlevel sets of a uniform random cell field at
/// decreasing random thresholds.
pub fn random_chain<R: Rng + ?Sized>(domain: &GridDomain, len: usize, rng: &mut R) -> Vec<Mask> {
    let values: Vec<f64> = (0..domain.len()).map(|_| rng.random::<f64>()).collect();
    let noise = Field::new(domain.clone(), values).expect("finite values");
    let mut thresholds: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.iter().map(|&t| superlevel(&noise, t)).collect()
}

/// Condenser `(u > t_hi, u > t_lo)` for two random levels strictly inside the range
/// of `u`, with `t_lo < t_hi`. Returns the levels alongside.
pub fn superlevel_condenser<R: Rng + ?Sized>(u: &Field, rng: &mut R) -> Result<(Condenser, f64, f64)> {
    let (lo, hi) = (u.min(), u.max());
    let a = lo + (hi - lo) * rng.random_range(0.05..0.45);
    let b = lo + (hi - lo) * rng.random_range(0.55..0.9);
    Ok((Condenser::new(superlevel(u, b), superlevel(u, a))?, a, b))
}
