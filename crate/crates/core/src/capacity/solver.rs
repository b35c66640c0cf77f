//! Matrix-free minimization of the discrete energy over fields with fixed cells.

use crate::energy::{gradient_adjoint, Integrand};
use crate::grid::{pairwise_sum, GridDomain, MAX_DIM};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Outcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Energy, gradient and Hessian products of `Σ_c w_c·|c|·H_Q(ξ_c)^p` with `ξ = Gu`.
pub(crate) struct Problem<'a> {
    d: &'a GridDomain,
    phi: &'a Integrand,
    /// `w_c·|c|`
    scale: Vec<f64>,
    free: &'a [bool],
    grad: Vec<[f64; MAX_DIM]>,
    flux: Vec<[f64; MAX_DIM]>,
}

impl<'a> Problem<'a> {
    pub fn new(d: &'a GridDomain, phi: &'a Integrand, free: &'a [bool]) -> Self {
        let cm = d.cell_measure();
        Problem {
            d,
            phi,
            scale: (0..d.len()).map(|c| phi.weight_at(c) * cm).collect(),
            free,
            grad: vec![[0.0; MAX_DIM]; d.len()],
            flux: vec![[0.0; MAX_DIM]; d.len()],
        }
    }

    fn gradient_of(&mut self, u: &[f64]) {
        let d = self.d;
        for (c, g) in self.grad.iter_mut().enumerate() {
            *g = [0.0; MAX_DIM];
            for (a, ga) in g.iter_mut().enumerate().take(d.dim()) {
                if let Some((lo, hi, inv_h)) = d.stencil(c, a) {
                    *ga = (u[hi] - u[lo]) * inv_h;
                }
            }
        }
    }

    /// `out = Gᵀ flux`, zeroed on fixed cells.
    fn scatter_flux(&self, out: &mut [f64]) {
        gradient_adjoint(self.d, &self.flux, out);
        for (o, &f) in out.iter_mut().zip(self.free) {
            if !f {
                *o = 0.0;
            }
        }
    }

    pub fn energy(&mut self, u: &[f64]) -> f64 {
        self.gradient_of(u);
        let dens: Vec<f64> = self
            .grad
            .iter()
            .enumerate()
            .map(|(c, &g)| self.phi.density(c, g) * self.d.cell_measure())
            .collect();
        pairwise_sum(&dens)
    }

    /// `∂E/∂u` on free cells.
    pub fn energy_gradient(&mut self, u: &[f64], out: &mut [f64]) {
        self.gradient_of(u);
        let p = self.phi.p();
        for c in 0..self.grad.len() {
            let qx = self.phi.apply_q(self.grad[c]);
            let hh = self.grad[c][0] * qx[0] + self.grad[c][1] * qx[1];
            let coef = if p == 2.0 {
                2.0
            } else if hh > 0.0 {
                p * hh.powf((p - 2.0) / 2.0)
            } else {
                0.0
            };
            let s = self.scale[c] * coef;
            self.flux[c] = [s * qx[0], s * qx[1]];
        }
        self.scatter_flux(out);
    }

    /// Quadratic operator `Gᵀ(w|c|Q)G` applied to `v`, restricted to free cells.
    pub fn apply_quadratic(&mut self, v: &[f64], out: &mut [f64]) {
        self.gradient_of(v);
        for c in 0..self.grad.len() {
            let qx = self.phi.apply_q(self.grad[c]);
            self.flux[c] = [self.scale[c] * qx[0], self.scale[c] * qx[1]];
        }
        self.scatter_flux(out);
    }

    /// Diagonal of `Gᵀ D G` for per-cell symmetric 2x2 blocks `D_c`.
    fn diagonal(&self, blocks: &dyn Fn(usize) -> [[f64; MAX_DIM]; MAX_DIM], out: &mut [f64]) {
        let d = self.d;
        out.iter_mut().for_each(|x| *x = 0.0);
        for c in 0..d.len() {
            let m = blocks(c);
            // Coefficient vectors of each touched cell in ξ_c.
            let mut touched: [(usize, [f64; MAX_DIM]); 2 * MAX_DIM] = [(usize::MAX, [0.0; MAX_DIM]); 2 * MAX_DIM];
            let mut n = 0;
            for a in 0..d.dim() {
                if let Some((lo, hi, inv_h)) = d.stencil(c, a) {
                    for (cell, coef) in [(lo, -inv_h), (hi, inv_h)] {
                        match touched[..n].iter_mut().find(|t| t.0 == cell) {
                            Some(t) => t.1[a] += coef,
                            None => {
                                touched[n].0 = cell;
                                touched[n].1 = [0.0; MAX_DIM];
                                touched[n].1[a] = coef;
                                n += 1;
                            }
                        }
                    }
                }
            }
            for (cell, e) in &touched[..n] {
                let me = [m[0][0] * e[0] + m[0][1] * e[1], m[1][0] * e[0] + m[1][1] * e[1]];
                out[*cell] += e[0] * me[0] + e[1] * me[1];
            }
        }
    }

    pub fn quadratic_diagonal(&self, out: &mut [f64]) {
        let q = |c: usize| {
            let s = self.scale[c];
            let c0 = self.phi.apply_q([1.0, 0.0]);
            let c1 = self.phi.apply_q([0.0, 1.0]);
            [[s * c0[0], s * c1[0]], [s * c0[1], s * c1[1]]]
        };
        self.diagonal(&q, out);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&prods)
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Preconditioned CG for `A x = b` on the cells where `mask` is set. `x` holds the
/// initial guess and the result; entries outside `mask` stay zero.
fn pcg(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    diag: &[f64],
    mask: &[bool],
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Outcome {
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Outcome {
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let inv: Vec<f64> = diag
        .iter()
        .zip(mask)
        .map(|(&dv, &m)| if m && dv > 0.0 { 1.0 / dv } else { 0.0 })
        .collect();
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = (0..n).map(|i| if mask[i] { b[i] - ax[i] } else { 0.0 }).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = norm(&r) / b_norm;
    let mut it = 0;
    while res > rel_tol && it < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
        res = norm(&r) / b_norm;
    }
    Outcome {
        iterations: it,
        residual: res,
        converged: res <= rel_tol,
    }
}

/// Minimizes the quadratic energy over the free cells of `u` (fixed cells hold their
/// prescribed values). Returns the relative residual of the reduced linear system.
pub(crate) fn solve_quadratic(prob: &mut Problem, u: &mut [f64], rel_tol: f64, max_iter: usize) -> Outcome {
    let n = u.len();
    let free = prob.free.to_vec();
    // b = −K u_fixed on free cells.
    let fixed: Vec<f64> = (0..n).map(|i| if free[i] { 0.0 } else { u[i] }).collect();
    let mut b = vec![0.0; n];
    prob.apply_quadratic(&fixed, &mut b);
    b.iter_mut().for_each(|v| *v = -*v);
    let mut diag = vec![0.0; n];
    prob.quadratic_diagonal(&mut diag);
    let mut x = vec![0.0; n];
    let out = pcg(
        &mut |v, o| prob.apply_quadratic(v, o),
        &diag,
        &free,
        &b,
        &mut x,
        rel_tol,
        max_iter,
    );
    for i in 0..n {
        if free[i] {
            u[i] = x[i];
        }
    }
    out
}

/// Projected Newton-CG for `min E(u)` subject to `0 ≤ u ≤ upper` on free cells.
///
/// Each step solves the Newton system on the inactive free cells with a regularized
/// Hessian (`H_Q` replaced by `sqrt(H_Q² + ε²)` in the curvature term), then
/// backtracks along the projected path until an Armijo decrease holds. Stops when
/// the projected gradient norm falls below `grad_tol` times its value at the field
/// that is zero on every free cell.
pub(crate) fn solve_projected(
    prob: &mut Problem,
    u: &mut [f64],
    upper: f64,
    grad_tol: f64,
    max_iter: usize,
) -> Outcome {
    let n = u.len();
    let free = prob.free.to_vec();
    let d = prob.d;
    let p = prob.phi.p();
    let h_min = d.spacing().iter().fold(f64::INFINITY, |m, &h| m.min(h));
    let eps2 = (1e-3 * upper / h_min).powi(2);

    let mut g = vec![0.0; n];
    let projected = |u: &[f64], g: &[f64], out: &mut Vec<f64>| {
        out.clear();
        out.extend((0..n).map(|i| {
            if !free[i] || (u[i] <= 0.0 && g[i] > 0.0) || (u[i] >= upper && g[i] < 0.0) {
                0.0
            } else {
                g[i]
            }
        }));
    };

    let reference = {
        let zero: Vec<f64> = (0..n).map(|i| if free[i] { 0.0 } else { u[i] }).collect();
        prob.energy_gradient(&zero, &mut g);
        let mut pg = Vec::new();
        projected(&zero, &g, &mut pg);
        norm(&pg).max(f64::MIN_POSITIVE)
    };

    for v in u.iter_mut().zip(&free).filter(|(_, f)| **f).map(|(v, _)| v) {
        *v = v.clamp(0.0, upper);
    }
    let mut e = prob.energy(u);
    let mut pg = Vec::with_capacity(n);
    let mut trial = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut res = f64::INFINITY;

    for it in 0..=max_iter {
        prob.energy_gradient(u, &mut g);
        projected(u, &g, &mut pg);
        res = norm(&pg) / reference;
        if res <= grad_tol {
            return Outcome {
                iterations: it,
                residual: res,
                converged: true,
            };
        }
        if it == max_iter {
            break;
        }
        let inactive: Vec<bool> = (0..n).map(|i| free[i] && pg[i] != 0.0).collect();

        // Curvature blocks at the current iterate.
        prob.gradient_of(u);
        let blocks: Vec<[[f64; MAX_DIM]; MAX_DIM]> = (0..n)
            .map(|c| {
                let xi = prob.grad[c];
                let qx = prob.phi.apply_q(xi);
                let hh = xi[0] * qx[0] + xi[1] * qx[1];
                let he2 = hh + eps2;
                let s = prob.scale[c];
                let q0 = prob.phi.apply_q([1.0, 0.0]);
                let q1 = prob.phi.apply_q([0.0, 1.0]);
                let (a, b) = if p == 2.0 {
                    (2.0, 0.0)
                } else {
                    (p * he2.powf((p - 2.0) / 2.0), p * (p - 2.0) * he2.powf((p - 4.0) / 2.0))
                };
                [
                    [s * (a * q0[0] + b * qx[0] * qx[0]), s * (a * q1[0] + b * qx[0] * qx[1])],
                    [s * (a * q0[1] + b * qx[1] * qx[0]), s * (a * q1[1] + b * qx[1] * qx[1])],
                ]
            })
            .collect();
        prob.diagonal(&|c| blocks[c], &mut diag);
        for i in 0..n {
            rhs[i] = if inactive[i] { -g[i] } else { 0.0 };
            dir[i] = 0.0;
        }
        let forcing = (res.sqrt()).min(0.5);
        let mut hess = |v: &[f64], out: &mut [f64]| {
            for (c, gc) in prob.grad.iter_mut().enumerate() {
                *gc = [0.0; MAX_DIM];
                for a in 0..d.dim() {
                    if let Some((lo, hi, inv_h)) = d.stencil(c, a) {
                        gc[a] = (v[hi] - v[lo]) * inv_h;
                    }
                }
            }
            for c in 0..n {
                let m = blocks[c];
                let x = prob.grad[c];
                prob.flux[c] = [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]];
            }
            prob.scatter_flux(out);
            for i in 0..n {
                if !inactive[i] {
                    out[i] = 0.0;
                }
            }
        };
        pcg(&mut hess, &diag, &inactive, &rhs, &mut dir, forcing, 200);

        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            // Fall back to a diagonally scaled steepest descent direction.
            for i in 0..n {
                dir[i] = if inactive[i] && diag[i] > 0.0 {
                    -g[i] / diag[i]
                } else {
                    0.0
                };
            }
            slope = dot(&g, &dir);
            if !(slope < 0.0) {
                break;
            }
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..n {
                trial[i] = if inactive[i] {
                    (u[i] + alpha * dir[i]).clamp(0.0, upper)
                } else {
                    u[i]
                };
            }
            let e_trial = prob.energy(&trial);
            let step: Vec<f64> = (0..n).map(|i| trial[i] - u[i]).collect();
            if e_trial <= e + 1e-4 * dot(&g, &step) {
                u.copy_from_slice(&trial);
                e = e_trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Outcome {
                iterations: it + 1,
                residual: res,
                converged: false,
            };
        }
    }
    Outcome {
        iterations: max_iter,
        residual: res,
        converged: false,
    }
}
