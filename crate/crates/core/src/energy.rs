//! Gradient energies `∫ w(x)·H_Q(du)^p` on grids, with `H_Q(ξ) = sqrt(ξ·Qξ)`.
//!
//! Gradients use forward differences, switching to a backward difference on the
//! last cell of each grid line. Sums run in a fixed pairwise order.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{pairwise_sum, Field, GridDomain, MAX_DIM};

/// Energy density `w(x)·H_Q(ξ)^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Integrand {
    p: f64,
    q: Option<[[f64; MAX_DIM]; MAX_DIM]>,
    q_dim: usize,
    weight: Option<Field>,
}

/// Serializable summary of an integrand, used in reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrandInfo {
    pub p: f64,
    pub q: Option<Vec<Vec<f64>>>,
    pub weighted: bool,
}

impl Integrand {
    /// `q = None` means the identity matrix; `weight = None` means `w ≡ 1`.
    pub fn new(p: f64, q: Option<Vec<Vec<f64>>>, weight: Option<Field>) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::InvalidIntegrand(format!(
                "exponent p must be finite and >= 1, got {p}"
            )));
        }
        let (q, q_dim) = match q {
            None => (None, 0),
            Some(rows) => {
                let n = rows.len();
                if n == 0 || n > MAX_DIM || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidIntegrand(format!(
                        "Q must be a square matrix of size 1 or 2, got {n} rows"
                    )));
                }
                let mut m = [[0.0; MAX_DIM]; MAX_DIM];
                for (i, r) in rows.iter().enumerate() {
                    for (j, &v) in r.iter().enumerate() {
                        if !v.is_finite() {
                            return Err(Error::InvalidIntegrand("Q entries must be finite".into()));
                        }
                        m[i][j] = v;
                    }
                }
                for i in 0..n {
                    for j in 0..i {
                        if m[i][j] != m[j][i] {
                            return Err(Error::InvalidIntegrand("Q must be symmetric".into()));
                        }
                    }
                }
                let det = if n == 1 {
                    m[0][0]
                } else {
                    m[0][0] * m[1][1] - m[0][1] * m[1][0]
                };
                if !(m[0][0] > 0.0 && det > 0.0) {
                    return Err(Error::InvalidIntegrand(
                        "Q must be positive definite (leading minors > 0)".into(),
                    ));
                }
                (Some(m), n)
            }
        };
        if let Some(w) = &weight {
            if let Some((cell, &value)) = w.values().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::InvalidIntegrand(format!(
                    "weight must be > 0, got {value} at cell {cell}"
                )));
            }
        }
        Ok(Integrand { p, q, q_dim, weight })
    }

    /// `|ξ|^p` with unit weight.
    pub fn isotropic(p: f64) -> Result<Self> {
        Integrand::new(p, None, None)
    }

    /// Dirichlet integrand `|ξ|²`.
    pub fn dirichlet() -> Self {
        Integrand::isotropic(2.0).expect("p = 2 is valid")
    }

    /// Total variation integrand `|ξ|`.
    pub fn total_variation() -> Self {
        Integrand::isotropic(1.0).expect("p = 1 is valid")
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn weight(&self) -> Option<&Field> {
        self.weight.as_ref()
    }

    pub fn info(&self) -> IntegrandInfo {
        IntegrandInfo {
            p: self.p,
            q: self
                .q
                .map(|m| (0..self.q_dim).map(|i| m[i][..self.q_dim].to_vec()).collect()),
            weighted: self.weight.is_some(),
        }
    }

    /// Same integrand with exponent `p`.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        let mut out = self.clone();
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::InvalidIntegrand(format!(
                "exponent p must be finite and >= 1, got {p}"
            )));
        }
        out.p = p;
        Ok(out)
    }

    /// Checks that `Q` and the weight fit the grid.
    pub fn check_domain(&self, d: &GridDomain) -> Result<()> {
        if self.q.is_some() && self.q_dim != d.dim() {
            return Err(Error::DomainMismatch(format!(
                "Q is {0}x{0} but the grid has dimension {1}",
                self.q_dim,
                d.dim()
            )));
        }
        if let Some(w) = &self.weight {
            w.domain().ensure_same(d, "weight field is not on the energy grid")?;
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn weight_at(&self, cell: usize) -> f64 {
        self.weight.as_ref().map_or(1.0, |w| w.values()[cell])
    }

    /// `Qξ`.
    #[inline]
    pub(crate) fn apply_q(&self, xi: [f64; MAX_DIM]) -> [f64; MAX_DIM] {
        match &self.q {
            None => xi,
            Some(m) => [m[0][0] * xi[0] + m[0][1] * xi[1], m[1][0] * xi[0] + m[1][1] * xi[1]],
        }
    }

    /// `ξ·Qξ`.
    #[inline]
    pub(crate) fn quad(&self, xi: [f64; MAX_DIM]) -> f64 {
        let qx = self.apply_q(xi);
        xi[0] * qx[0] + xi[1] * qx[1]
    }

    /// `H_Q(ξ)`.
    pub fn norm(&self, xi: [f64; MAX_DIM]) -> f64 {
        self.quad(xi).max(0.0).sqrt()
    }

    /// `w(x)·H_Q(ξ)^p` at a cell.
    pub fn density(&self, cell: usize, xi: [f64; MAX_DIM]) -> f64 {
        let q = self.quad(xi).max(0.0);
        let hp = if self.p == 2.0 {
            q
        } else if q == 0.0 {
            0.0
        } else {
            q.powf(self.p / 2.0)
        };
        self.weight_at(cell) * hp
    }
}

/// Per-cell difference quotient vector. Unused components are zero.
pub fn discrete_gradient(u: &Field) -> Vec<[f64; MAX_DIM]> {
    let d = u.domain();
    let v = u.values();
    (0..d.len())
        .map(|c| {
            let mut g = [0.0; MAX_DIM];
            for (a, ga) in g.iter_mut().enumerate().take(d.dim()) {
                if let Some((lo, hi, inv_h)) = d.stencil(c, a) {
                    *ga = (v[hi] - v[lo]) * inv_h;
                }
            }
            g
        })
        .collect()
}

/// Transpose of [`discrete_gradient`]: accumulates `Σ_c g_c·∂u_c/∂u` into a per-cell vector.
pub fn gradient_adjoint(d: &GridDomain, g: &[[f64; MAX_DIM]], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for (c, gc) in g.iter().enumerate() {
        for (a, &ga) in gc.iter().enumerate().take(d.dim()) {
            if let Some((lo, hi, inv_h)) = d.stencil(c, a) {
                out[hi] += ga * inv_h;
                out[lo] -= ga * inv_h;
            }
        }
    }
}

/// `Σ_c w·H_Q(∇u)^p·|c|`.
pub fn energy(phi: &Integrand, u: &Field) -> Result<f64> {
    phi.check_domain(u.domain())?;
    Ok(energy_unchecked(phi, u))
}

pub(crate) fn energy_unchecked(phi: &Integrand, u: &Field) -> f64 {
    let d = u.domain();
    let grad = discrete_gradient(u);
    let dens: Vec<f64> = grad.par_iter().enumerate().map(|(c, &g)| phi.density(c, g)).collect();
    pairwise_sum(&dens) * d.cell_measure()
}

/// Total variation `Σ |∇u|·|c|`.
pub fn total_variation(u: &Field) -> f64 {
    energy_unchecked(&Integrand::total_variation(), u)
}

/// Largest difference between neighbouring cells.
pub fn max_jump(u: &Field) -> f64 {
    let d = u.domain();
    let v = u.values();
    let mut best: f64 = 0.0;
    for c in 0..d.len() {
        for a in 0..d.dim() {
            if let Some((lo, hi, _)) = d.stencil(c, a) {
                best = best.max((v[hi] - v[lo]).abs());
            }
        }
    }
    best
}

/// Local coercivity of `w·H_Q^p`: superlinear growth holds iff `p > 1`.
pub fn check_coercivity(phi: &Integrand) -> bool {
    phi.p > 1.0
}

/// `min_n E(v_n) − E(limit)`. Nonnegative up to tolerance means the discrete lower
/// semicontinuity certificate holds for this sequence.
pub fn lsc_gap(phi: &Integrand, limit: &Field, sequence: &[Field]) -> Result<f64> {
    if sequence.is_empty() {
        return Err(Error::InvalidArgument("lsc_gap needs a nonempty sequence".into()));
    }
    let e_lim = energy(phi, limit)?;
    let mut best = f64::INFINITY;
    for v in sequence {
        v.domain()
            .ensure_same(limit.domain(), "sequence element is not on the limit's grid")?;
        best = best.min(energy(phi, v)?);
    }
    Ok(best - e_lim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::truncate;
    use crate::sampling::BumpField;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tent(cells: usize) -> Field {
        let d = GridDomain::interval(-2.0, 2.0, cells).unwrap();
        Field::from_fn(&d, |x| (1.0 - x[0].abs()).max(0.0)).unwrap()
    }

    #[test]
    fn integrand_validation() {
        assert!(Integrand::isotropic(0.5).is_err());
        assert!(Integrand::isotropic(f64::NAN).is_err());
        assert!(Integrand::new(2.0, Some(vec![vec![1.0, 2.0], vec![2.0, 1.0]]), None).is_err());
        assert!(Integrand::new(2.0, Some(vec![vec![1.0, 0.5], vec![0.4, 1.0]]), None).is_err());
        assert!(Integrand::new(2.0, Some(vec![vec![2.0, 0.5], vec![0.5, 1.0]]), None).is_ok());
        let d = GridDomain::interval(0.0, 1.0, 4).unwrap();
        let w = Field::new(d.clone(), vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(Integrand::new(2.0, None, Some(w)).is_err());
        let q2 = Integrand::new(2.0, Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]), None).unwrap();
        assert!(q2.check_domain(&d).is_err());
    }

    #[test]
    fn gradient_examples() {
        let d = GridDomain::interval(0.0, 1.0, 10).unwrap();
        let c = Field::constant(&d, 3.0).unwrap();
        assert!(discrete_gradient(&c).iter().all(|g| g[0] == 0.0));
        let lin = Field::from_fn(&d, |x| x[0]).unwrap();
        for g in discrete_gradient(&lin) {
            assert_relative_eq!(g[0], 1.0, epsilon = 1e-12);
        }
        let u = tent(400);
        let h = 0.01;
        for (x, g) in u.domain().centers().zip(discrete_gradient(&u)) {
            let x = x[0];
            if x.abs() > 1.0 + h {
                assert_eq!(g[0], 0.0);
            } else if x > h && x < 1.0 - h {
                assert_relative_eq!(g[0], -1.0, epsilon = 1e-9);
            } else if x < -h && x > -1.0 + h {
                assert_relative_eq!(g[0], 1.0, epsilon = 1e-9);
            } else {
                assert!(g[0].abs() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn tent_energies_converge_linearly() {
        let mut prev_err = f64::INFINITY;
        for cells in [256, 512, 1024, 2048] {
            let u = tent(cells);
            let h = 4.0 / cells as f64;
            let e2 = energy(&Integrand::dirichlet(), &u).unwrap();
            let e1 = total_variation(&u);
            let err = (e2 - 2.0).abs();
            assert!(err <= 2.0 * h, "cells={cells}: {e2}");
            assert!((e1 - 2.0).abs() <= 2.0 * h);
            assert!(err <= prev_err + 1e-12);
            prev_err = err;
        }
    }

    #[test]
    fn anisotropic_and_weighted_densities() {
        let d = GridDomain::rectangle([0.0, 0.0], [1.0, 1.0], [8, 8]).unwrap();
        let u = Field::from_fn(&d, |x| 2.0 * x[0] + x[1]).unwrap();
        let q = Integrand::new(2.0, Some(vec![vec![2.0, 0.5], vec![0.5, 1.0]]), None).unwrap();
        // ξ = (2, 1): ξ·Qξ = 8 + 2 + 1 = 11 on the unit square.
        assert_relative_eq!(energy(&q, &u).unwrap(), 11.0, epsilon = 1e-9);
        let w = Field::constant(&d, 3.0).unwrap();
        let wq = Integrand::new(2.0, Some(vec![vec![2.0, 0.5], vec![0.5, 1.0]]), Some(w)).unwrap();
        assert_relative_eq!(energy(&wq, &u).unwrap(), 33.0, epsilon = 1e-9);
    }

    #[test]
    fn coercivity_examples() {
        assert!(check_coercivity(&Integrand::isotropic(2.0).unwrap()));
        assert!(!check_coercivity(&Integrand::isotropic(1.0).unwrap()));
        assert!(check_coercivity(&Integrand::isotropic(1.5).unwrap()));
    }

    #[test]
    fn lsc_gap_examples() {
        let u = tent(512);
        let phi = Integrand::dirichlet();
        assert!(lsc_gap(&phi, &u, &[]).is_err());
        assert_eq!(lsc_gap(&phi, &u, &[u.clone(), u.clone()]).unwrap(), 0.0);
        let seq: Vec<Field> = [0.1, 0.05, 0.01]
            .iter()
            .map(|&eps| {
                Field::from_fn(u.domain(), |x| (1.0 - x[0].abs()).max(0.0) + eps * (200.0 * x[0]).sin()).unwrap()
            })
            .collect();
        assert!(lsc_gap(&phi, &u, &seq).unwrap() >= 0.0);
    }

    #[test]
    fn gradient_adjoint_is_transpose() {
        let d = GridDomain::rectangle([0.0, 0.0], [1.0, 2.0], [5, 7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = BumpField::random(&d, &mut rng).sample(&d).unwrap();
        let g: Vec<[f64; 2]> = (0..d.len()).map(|i| [(i as f64).sin(), (i as f64).cos()]).collect();
        let mut gt = vec![0.0; d.len()];
        gradient_adjoint(&d, &g, &mut gt);
        let lhs: f64 = discrete_gradient(&u)
            .iter()
            .zip(&g)
            .map(|(a, b)| a[0] * b[0] + a[1] * b[1])
            .sum();
        let rhs: f64 = u.values().iter().zip(&gt).map(|(a, b)| a * b).sum();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-10, max_relative = 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn field(seed: u64) -> Field {
            let d = GridDomain::rectangle([-1.0, -1.0], [1.0, 1.0], [16, 12]).unwrap();
            BumpField::random(&d, &mut ChaCha8Rng::seed_from_u64(seed))
                .sample(&d)
                .unwrap()
        }

        fn integrand(p: f64, aniso: bool) -> Integrand {
            let q = aniso.then(|| vec![vec![1.5, 0.3], vec![0.3, 0.7]]);
            Integrand::new(p, q, None).unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn homogeneity(seed in any::<u64>(), p in 1.0f64..4.0, lambda in 0.0f64..5.0, aniso in any::<bool>()) {
                let phi = integrand(p, aniso);
                let u = field(seed);
                let e = energy(&phi, &u).unwrap();
                let el = energy(&phi, &u.map(|v| lambda * v).unwrap()).unwrap();
                let expected = lambda.powf(p) * e;
                prop_assert!((el - expected).abs() <= 1e-10 * expected.max(1e-300) + 1e-300);
            }

            #[test]
            fn convexity(s1 in any::<u64>(), s2 in any::<u64>(), theta in 0.0f64..=1.0, p in 1.0f64..4.0, aniso in any::<bool>()) {
                let phi = integrand(p, aniso);
                let u = field(s1);
                let v = field(s2);
                let mix = Field::new(
                    u.domain().clone(),
                    u.values().iter().zip(v.values()).map(|(a, b)| theta * a + (1.0 - theta) * b).collect(),
                ).unwrap();
                let rhs = theta * energy(&phi, &u).unwrap() + (1.0 - theta) * energy(&phi, &v).unwrap();
                prop_assert!(energy(&phi, &mix).unwrap() <= rhs * (1.0 + 1e-10) + 1e-300);
            }

            #[test]
            fn truncation_does_not_increase_energy(seed in any::<u64>(), k in 0.0f64..1.2, p in 1.0f64..4.0) {
                let phi = integrand(p, false);
                let u = field(seed);
                let ek = energy(&phi, &truncate(&u, k).unwrap()).unwrap();
                prop_assert!(ek <= energy(&phi, &u).unwrap() * (1.0 + 1e-12));
            }
        }
    }
}
