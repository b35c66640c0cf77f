//! Staircase approximation of an induced function by capacitary potentials.
//!
//! For `k = 1..=⌈n·max u⌉` the layer `v_{n,k}` is `1/n` times the unit capacitary
//! potential of the condenser `(T(A_{k/n}), T(A_{(k−1)/n}))`, where `A_t = {u > t}`.
//! The sum `v_n = Σ_k v_{n,k}` approaches the induced function `u*` as `n` grows.
//!
//! Layers touch along one-cell rims, so the energy of the sum exceeds the sum of
//! layer energies by a small cross term, which is reported rather than assumed zero.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::capacity::{capacity_with, Condenser, SolverOptions};
use crate::energy::{energy, energy_unchecked, Integrand};
use crate::error::{Error, Result};
use crate::grid::{pairwise_sum, superlevel, Field};
use crate::induce::induce_exact;
use crate::settrans::SetTransform;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaircaseResult {
    pub n: usize,
    #[serde(skip)]
    pub v_n: Field,
    pub layer_energies: Vec<f64>,
    /// `energy(psi, v_n)`
    pub total_energy: f64,
    /// `total_energy − Σ layer_energies`
    pub cross_term: f64,
    /// `energy(phi, u)`
    pub source_energy: f64,
    /// Largest `|v_n − u*|` over the target grid.
    pub sup_gap: f64,
    pub l1_distance: f64,
    pub layer_iterations: Vec<usize>,
    pub converged: bool,
}

impl StaircaseResult {
    pub fn layers(&self) -> usize {
        self.layer_energies.len()
    }

    /// `total_energy ≤ source_energy + 2/n + layers·solver_tol`.
    pub fn certificate_holds(&self, solver_tol: f64) -> bool {
        self.total_energy <= self.source_energy + 2.0 / self.n as f64 + self.layers() as f64 * solver_tol
    }

    /// CSV rows `n,k,layer_energy`.
    pub fn write_layers_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,k,layer_energy")?;
        for (k, e) in self.layer_energies.iter().enumerate() {
            writeln!(w, "{},{},{}", self.n, k + 1, e)?;
        }
        Ok(())
    }
}

/// Builds `v_n` for the reference `u* = induce_exact(t, u)`.
pub fn build_staircase(
    t: &SetTransform,
    phi: &Integrand,
    psi: &Integrand,
    u: &Field,
    n: usize,
) -> Result<StaircaseResult> {
    let u_star = induce_exact(t, u)?;
    build_with_reference(t, phi, psi, u, n, &u_star, &SolverOptions::default())
}

fn build_with_reference(
    t: &SetTransform,
    phi: &Integrand,
    psi: &Integrand,
    u: &Field,
    n: usize,
    u_star: &Field,
    opts: &SolverOptions,
) -> Result<StaircaseResult> {
    if n == 0 {
        return Err(Error::InvalidArgument("staircase needs n >= 1".into()));
    }
    if let Some((cell, &value)) = u.values().iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeValue { cell, value });
    }
    if !(psi.p() > 1.0) {
        return Err(Error::ExponentTooSmall(psi.p()));
    }
    u.domain()
        .ensure_same(t.source(), "field is not on the transform's source grid")?;
    psi.check_domain(t.target())?;
    let source_energy = energy(phi, u)?;

    let nf = n as f64;
    let count = (nf * u.max()).ceil() as usize;
    let layers = (1..=count)
        .into_par_iter()
        .map(|k| {
            let inner = t.apply(&superlevel(u, k as f64 / nf))?;
            let outer = t.apply(&superlevel(u, (k - 1) as f64 / nf))?;
            let cond = Condenser::new(inner, outer)?;
            let r = capacity_with(psi, &cond, 1.0, opts)?;
            let layer = r.potential.map(|v| v / nf)?;
            let e = energy_unchecked(psi, &layer);
            Ok((layer, e, r.iterations, r.converged))
        })
        .collect::<Result<Vec<_>>>()?;

    let target = t.target();
    let mut sum = vec![0.0; target.len()];
    for (layer, ..) in &layers {
        for (s, v) in sum.iter_mut().zip(layer.values()) {
            *s += v;
        }
    }
    let v_n = Field::new(target.clone(), sum)?;
    let layer_energies: Vec<f64> = layers.iter().map(|l| l.1).collect();
    let total_energy = energy_unchecked(psi, &v_n);
    Ok(StaircaseResult {
        n,
        cross_term: total_energy - pairwise_sum(&layer_energies),
        layer_energies,
        total_energy,
        source_energy,
        sup_gap: v_n.sup_distance(u_star)?,
        l1_distance: v_n.l1_distance(u_star)?,
        layer_iterations: layers.iter().map(|l| l.2).collect(),
        converged: layers.iter().all(|l| l.3),
        v_n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub n: usize,
    pub layers: usize,
    pub total_energy: f64,
    pub cross_term: f64,
    pub l1_distance: f64,
    pub sup_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaircaseStudy {
    pub rows: Vec<StudyRow>,
    pub source_energy: f64,
    /// `energy(psi, u*)`
    pub limit_energy: f64,
    /// L1 distances do not increase along the list, up to `1e-12` absolute.
    pub l1_nonincreasing: bool,
}

impl StaircaseStudy {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,layers,total_energy,cross_term,l1_distance,sup_gap")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.n, r.layers, r.total_energy, r.cross_term, r.l1_distance, r.sup_gap
            )?;
        }
        Ok(())
    }
}

pub fn staircase_convergence_study(
    t: &SetTransform,
    phi: &Integrand,
    psi: &Integrand,
    u: &Field,
    n_list: &[usize],
) -> Result<StaircaseStudy> {
    let u_star = induce_exact(t, u)?;
    let opts = SolverOptions::default();
    let results = n_list
        .iter()
        .map(|&n| build_with_reference(t, phi, psi, u, n, &u_star, &opts))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<StudyRow> = results
        .iter()
        .map(|r| StudyRow {
            n: r.n,
            layers: r.layers(),
            total_energy: r.total_energy,
            cross_term: r.cross_term,
            l1_distance: r.l1_distance,
            sup_gap: r.sup_gap,
        })
        .collect();
    let l1_nonincreasing = rows.windows(2).all(|w| w[1].l1_distance <= w[0].l1_distance + 1e-12);
    Ok(StaircaseStudy {
        rows,
        source_energy: energy(phi, u)?,
        limit_energy: energy(psi, &u_star)?,
        l1_nonincreasing,
    })
}
