//! Function transforms induced by set transforms.
//!
//! Given a set map `A -> A*`, a function `u` is sent to
//!
//! ```text
//! u*(y) = sup { t : y ∈ {u > t}* }
//! ```
//!
//! [`induce_function`] evaluates the supremum over a finite [`LevelGrid`]
//! `t_0 < ... < t_K`, taking the largest `t_k` whose transformed superlevel set
//! contains `y` and falling back to `t_0`. The result is the level-set transform of
//! the level-quantized field, so for monotone maps `{u* > t} = {u > t⁺}*` where `t⁺`
//! is the first level above `t`.
//!
//! [`induce_exact`] evaluates the supremum over all real `t`. A grid function has
//! piecewise constant superlevel sets, changing only at its own values, so the
//! supremum is attained at the next value of `u` above the last level whose image
//! contains `y`. For monotone maps this gives `{u* > t} = {u > t}*` for every `t`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{superlevel, Field, Mask};
use crate::settrans::{SetTransform, TransformSpec};

/// Number of uniform thresholds used when nothing else is requested.
pub const DEFAULT_LEVELS: usize = 256;

/// Strictly increasing finite thresholds `t_0 < ... < t_K`, `K >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelGrid {
    thresholds: Vec<f64>,
}

impl LevelGrid {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.len() < 2 {
            return Err(Error::InvalidLevels(format!(
                "need at least two thresholds, got {}",
                thresholds.len()
            )));
        }
        if thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidLevels("thresholds must be finite".into()));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidLevels("thresholds must be strictly increasing".into()));
        }
        Ok(LevelGrid { thresholds })
    }

    /// `count` equispaced thresholds from `min u` to `max u`. A constant field gets
    /// the range `[c, c + 1]`.
    pub fn uniform(u: &Field, count: usize) -> Result<Self> {
        let (lo, hi) = (u.min(), u.max());
        let hi = if hi > lo { hi } else { lo + 1.0 };
        LevelGrid::uniform_range(lo, hi, count)
    }

    pub fn uniform_range(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 || !(hi > lo) {
            return Err(Error::InvalidLevels(format!(
                "uniform grid needs count >= 2 and lo < hi (count={count}, lo={lo}, hi={hi})"
            )));
        }
        let step = (hi - lo) / (count - 1) as f64;
        let mut t: Vec<f64> = (0..count).map(|k| lo + step * k as f64).collect();
        t[count - 1] = hi;
        LevelGrid::new(t)
    }

    /// The distinct values of `u` (plus `min u + 1` for a constant field).
    pub fn from_values(u: &Field) -> Self {
        let mut v = distinct_sorted(u.values());
        if v.len() == 1 {
            v.push(v[0] + 1.0);
        }
        LevelGrid { thresholds: v }
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn lowest(&self) -> f64 {
        self.thresholds[0]
    }

    pub fn highest(&self) -> f64 {
        self.thresholds[self.thresholds.len() - 1]
    }

    /// Largest gap between consecutive thresholds.
    pub fn spacing(&self) -> f64 {
        self.thresholds.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn covers(&self, u: &Field) -> bool {
        self.lowest() <= u.min() && self.highest() >= u.max()
    }

    /// Whether `t` coincides with one of the thresholds.
    pub fn is_level(&self, t: f64) -> bool {
        self.thresholds.binary_search_by(|x| x.total_cmp(&t)).is_ok()
    }

    /// First threshold strictly above `t`.
    pub fn next_above(&self, t: f64) -> Option<f64> {
        let i = self.thresholds.partition_point(|&x| x <= t);
        self.thresholds.get(i).copied()
    }
}

fn distinct_sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// For every target cell, the largest `k` with `y ∈ {u > t_k}*`.
fn top_level_index(t: &SetTransform, u: &Field, levels: &[f64]) -> Result<Vec<Option<usize>>> {
    u.domain()
        .ensure_same(t.source(), "field is not on the transform's source grid")?;
    if t.is_identity() {
        return Ok(u
            .values()
            .iter()
            .map(|&v| levels.partition_point(|&x| x < v).checked_sub(1))
            .collect());
    }
    if let Some(ranking) = t.schwarz_ranking() {
        let target = t.target();
        let sorted = {
            let mut s = u.values().to_vec();
            s.sort_by(f64::total_cmp);
            s
        };
        // Image of {u > t_k} is the first m_k ranked cells, with m_k as in `apply`.
        let filled: Vec<usize> = levels
            .iter()
            .map(|&lv| {
                let count = sorted.len() - sorted.partition_point(|&x| x <= lv);
                let m = (u.domain().cell_measure() * count as f64 / target.cell_measure()).round();
                (m as usize).min(target.len())
            })
            .collect();
        let mut out = vec![None; target.len()];
        for (rank, &cell) in ranking.iter().enumerate() {
            out[cell] = filled.partition_point(|&m| m > rank).checked_sub(1);
        }
        return Ok(out);
    }
    if let TransformSpec::Steiner { axis } = t.spec() {
        return Ok(steiner_top_levels(u, *axis, levels));
    }

    let mut out: Vec<Option<usize>> = vec![None; t.target().len()];
    const CHUNK: usize = 64;
    for (c, chunk) in levels.chunks(CHUNK).enumerate() {
        let images = chunk
            .par_iter()
            .map(|&lv| t.apply(&superlevel(u, lv)))
            .collect::<Result<Vec<Mask>>>()?;
        for (i, img) in images.iter().enumerate() {
            let k = c * CHUNK + i;
            for cell in img.cells() {
                out[cell] = Some(k);
            }
        }
    }
    Ok(out)
}

/// Columnwise analogue of the Schwarz fast path: the `i`-th cell of a column lies in
/// the image of `{u > t}` iff the column's `i`-th largest value exceeds `t`.
fn steiner_top_levels(u: &Field, axis: usize, levels: &[f64]) -> Vec<Option<usize>> {
    let d = u.domain();
    let n = d.shape()[axis];
    let stride = d.stride(axis);
    let mut out = vec![None; d.len()];
    for start in 0..d.len() {
        if d.multi_index(start)[axis] != 0 {
            continue;
        }
        let mut col: Vec<f64> = (0..n).map(|i| u.values()[start + i * stride]).collect();
        col.sort_by(|a, b| b.total_cmp(a));
        for (i, &w) in col.iter().enumerate() {
            out[start + i * stride] = levels.partition_point(|&x| x < w).checked_sub(1);
        }
    }
    out
}

/// `u*(y) = max { t_k : y ∈ T({u > t_k}) }`, or `t_0` when no image contains `y`.
pub fn induce_function(t: &SetTransform, u: &Field, levels: &LevelGrid) -> Result<Field> {
    let ts = levels.thresholds();
    let top = top_level_index(t, u, ts)?;
    Field::new(
        t.target().clone(),
        top.into_iter().map(|k| k.map_or(ts[0], |k| ts[k])).collect(),
    )
}

/// `u*(y) = sup { t ∈ R : y ∈ T({u > t}) }` evaluated exactly for the grid function `u`.
/// Cells in no image get `min u`. Errors if some cell lies in the image of the empty set,
/// where the supremum is infinite.
pub fn induce_exact(t: &SetTransform, u: &Field) -> Result<Field> {
    let values = distinct_sorted(u.values());
    let top = top_level_index(t, u, &values)?;
    let last = values.len() - 1;
    let out = top
        .into_iter()
        .enumerate()
        .map(|(cell, k)| match k {
            None => Ok(values[0]),
            Some(k) if k == last => Err(Error::Unbounded(cell)),
            Some(k) => Ok(values[k + 1]),
        })
        .collect::<Result<Vec<_>>>()?;
    Field::new(t.target().clone(), out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelMismatch {
    pub threshold: f64,
    /// Threshold actually compared against after snapping to the level grid.
    pub snapped: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelIdentityCheck {
    pub holds: bool,
    pub mismatches: Vec<LevelMismatch>,
}

/// Compares `{u* > t}` with `T({u > t⁺})` for each sampled `t`, where `t⁺` is the first
/// level above `t` (no snapping below `t_0` or at and above `t_K`). For `u*` produced by
/// [`induce_function`] with a monotone `T` the masks agree exactly. When `u` has no
/// values in `(t, t⁺]` this is the unsnapped identity `{u* > t} = T({u > t})`.
pub fn check_level_identity(
    t: &SetTransform,
    u: &Field,
    u_star: &Field,
    levels: &LevelGrid,
    samples: &[f64],
) -> Result<LevelIdentityCheck> {
    if !levels.covers(u) {
        return Err(Error::InvalidLevels("level grid does not cover the range of u".into()));
    }
    u_star
        .domain()
        .ensure_same(t.target(), "u* is not on the transform's target grid")?;
    let mut mismatches = Vec::new();
    for &s in samples {
        let snapped = if s < levels.lowest() {
            s
        } else {
            levels.next_above(s).unwrap_or(s)
        };
        let expected = t.apply(&superlevel(u, snapped))?;
        let got = superlevel(u_star, s);
        let cells = got.symmetric_difference_count(&expected);
        if cells > 0 {
            mismatches.push(LevelMismatch {
                threshold: s,
                snapped,
                cells,
            });
        }
    }
    Ok(LevelIdentityCheck {
        holds: mismatches.is_empty(),
        mismatches,
    })
}

/// Unsnapped comparison `{u* > t}` against `T({u > t})`, as mismatched cell counts.
pub fn level_set_mismatch(t: &SetTransform, u: &Field, u_star: &Field, samples: &[f64]) -> Result<Vec<usize>> {
    samples
        .iter()
        .map(|&s| {
            let expected = t.apply(&superlevel(u, s))?;
            Ok(superlevel(u_star, s).symmetric_difference_count(&expected))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CavalieriGap {
    /// `∫ f∘u*`
    pub lhs: f64,
    /// `∫ f∘u`
    pub rhs: f64,
    pub gap: f64,
}

/// Integrals of `f∘u*` and `f∘u` as cell sums.
pub fn verify_cavalieri(u: &Field, u_star: &Field, f: impl Fn(f64) -> f64) -> Result<CavalieriGap> {
    let lhs = u_star.map(&f)?.integral();
    let rhs = u.map(&f)?.integral();
    Ok(CavalieriGap {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionCheck {
    pub holds: bool,
    pub max_difference: f64,
    pub tolerance: f64,
}

/// Compares `(f∘u)*` with `f∘(u*)`, each induced on a uniform grid of `count` levels
/// adapted to its own argument. Passes when the fields differ by at most two level
/// spacings of the grid adapted to `f∘u`.
pub fn check_composition_commute(
    t: &SetTransform,
    u: &Field,
    f: impl Fn(f64) -> f64,
    count: usize,
) -> Result<CompositionCheck> {
    let sorted = distinct_sorted(u.values());
    if sorted.windows(2).any(|w| f(w[0]) > f(w[1])) {
        return Err(Error::InvalidArgument(
            "f must be nondecreasing on the values of u".into(),
        ));
    }
    let fu = u.map(&f)?;
    let fu_levels = LevelGrid::uniform(&fu, count)?;
    let lhs = induce_function(t, &fu, &fu_levels)?;
    let rhs = induce_function(t, u, &LevelGrid::uniform(u, count)?)?.map(&f)?;
    let max_difference = lhs.sup_distance(&rhs)?;
    let tolerance = 2.0 * fu_levels.spacing() + 1e-12;
    Ok(CompositionCheck {
        holds: max_difference <= tolerance,
        max_difference,
        tolerance,
    })
}
