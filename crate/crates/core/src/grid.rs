//! Cell grids on boxes in one or two dimensions.
//!
//! A [`GridDomain`] is a box split into congruent cells. Points of the box are
//! identified with cell centers, so a [`Mask`] is a union of whole cells and a
//! [`Field`] holds one value per cell. Cells are numbered in row-major order
//! (the last axis varies fastest).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod io;

/// Upper bound on the number of axes.
pub const MAX_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct GridDomain {
    dim: usize,
    shape: [usize; MAX_DIM],
    spacing: [f64; MAX_DIM],
    origin: [f64; MAX_DIM],
}

/// Plain description of a grid, as written in configs and file headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
}

impl TryFrom<GridSpec> for GridDomain {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        GridDomain::new(&spec.shape, &spec.spacing, &spec.origin).and_then(|g| {
            if g.dim != spec.dim {
                Err(Error::InvalidGrid(format!(
                    "dim = {} but shape has {} entries",
                    spec.dim, g.dim
                )))
            } else {
                Ok(g)
            }
        })
    }
}

impl From<GridDomain> for GridSpec {
    fn from(g: GridDomain) -> Self {
        GridSpec {
            dim: g.dim,
            shape: g.shape().to_vec(),
            spacing: g.spacing().to_vec(),
            origin: g.origin().to_vec(),
        }
    }
}

impl GridDomain {
    pub fn new(shape: &[usize], spacing: &[f64], origin: &[f64]) -> Result<Self> {
        let dim = shape.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if spacing.len() != dim || origin.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "shape, spacing and origin must all have {dim} entries"
            )));
        }
        let mut g = GridDomain {
            dim,
            shape: [1; MAX_DIM],
            spacing: [1.0; MAX_DIM],
            origin: [0.0; MAX_DIM],
        };
        for a in 0..dim {
            if shape[a] == 0 {
                return Err(Error::InvalidGrid(format!("shape[{a}] must be positive")));
            }
            if !(spacing[a].is_finite() && spacing[a] > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "spacing[{a}] must be a positive finite number, got {}",
                    spacing[a]
                )));
            }
            if !origin[a].is_finite() {
                return Err(Error::InvalidGrid(format!("origin[{a}] must be finite")));
            }
            g.shape[a] = shape[a];
            g.spacing[a] = spacing[a];
            g.origin[a] = origin[a];
        }
        Ok(g)
    }

    /// `cells` equal cells covering `[lower, upper]`.
    pub fn interval(lower: f64, upper: f64, cells: usize) -> Result<Self> {
        if !(upper > lower) || cells == 0 {
            return Err(Error::InvalidGrid(format!(
                "empty interval [{lower}, {upper}] with {cells} cells"
            )));
        }
        GridDomain::new(&[cells], &[(upper - lower) / cells as f64], &[lower])
    }

    /// `shape[0] x shape[1]` cells covering `[lower[0], upper[0]] x [lower[1], upper[1]]`.
    pub fn rectangle(lower: [f64; 2], upper: [f64; 2], shape: [usize; 2]) -> Result<Self> {
        if !(upper[0] > lower[0] && upper[1] > lower[1]) || shape[0] == 0 || shape[1] == 0 {
            return Err(Error::InvalidGrid("degenerate rectangle".into()));
        }
        GridDomain::new(
            &shape,
            &[
                (upper[0] - lower[0]) / shape[0] as f64,
                (upper[1] - lower[1]) / shape[1] as f64,
            ],
            &lower,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_measure(&self) -> f64 {
        self.spacing().iter().product()
    }

    pub fn total_measure(&self) -> f64 {
        self.cell_measure() * self.len() as f64
    }

    /// Index step between neighbours along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        if self.dim == 2 && axis == 0 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn multi_index(&self, cell: usize) -> [usize; MAX_DIM] {
        if self.dim == 1 {
            [cell, 0]
        } else {
            [cell / self.shape[1], cell % self.shape[1]]
        }
    }

    pub fn linear_index(&self, idx: [usize; MAX_DIM]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] * self.shape[1] + idx[1]
        }
    }

    /// Center of a cell. Unused trailing coordinates are zero.
    pub fn center(&self, cell: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(cell);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = self.origin[a] + (idx[a] as f64 + 0.5) * self.spacing[a];
        }
        x
    }

    pub fn centers(&self) -> impl Iterator<Item = [f64; MAX_DIM]> + '_ {
        (0..self.len()).map(move |c| self.center(c))
    }

    /// Forward difference stencil of `cell` along `axis`: `(lo, hi, 1/h)` such that
    /// the derivative is `(u[hi] - u[lo]) / h`. The last cell of each line uses the
    /// backward difference. Axes with a single cell have no stencil.
    #[inline]
    pub fn stencil(&self, cell: usize, axis: usize) -> Option<(usize, usize, f64)> {
        let n = self.shape[axis];
        if n < 2 {
            return None;
        }
        let s = self.stride(axis);
        let i = self.multi_index(cell)[axis];
        let inv_h = 1.0 / self.spacing[axis];
        if i + 1 < n {
            Some((cell, cell + s, inv_h))
        } else {
            Some((cell - s, cell, inv_h))
        }
    }

    pub fn ensure_same(&self, other: &GridDomain, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::DomainMismatch(what.to_string()))
        }
    }
}

/// Sum in a fixed pairwise order, so results do not depend on thread scheduling
/// and rounding error grows like `log n`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    domain: GridDomain,
    values: Vec<f64>,
}

impl Field {
    pub fn new(domain: GridDomain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values but the grid has {} cells",
                values.len(),
                domain.len()
            )));
        }
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { cell, value });
        }
        Ok(Field { domain, values })
    }

    pub fn constant(domain: &GridDomain, value: f64) -> Result<Self> {
        Field::new(domain.clone(), vec![value; domain.len()])
    }

    pub fn zeros(domain: &GridDomain) -> Self {
        Field {
            domain: domain.clone(),
            values: vec![0.0; domain.len()],
        }
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(domain: &GridDomain, f: impl Fn([f64; MAX_DIM]) -> f64) -> Result<Self> {
        Field::new(domain.clone(), domain.centers().map(f).collect())
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pointwise map; errors if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        Field::new(self.domain.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// `cell_measure * sum(values)`.
    pub fn integral(&self) -> f64 {
        self.domain.cell_measure() * pairwise_sum(&self.values)
    }

    pub fn l1_distance(&self, other: &Field) -> Result<f64> {
        self.domain.ensure_same(&other.domain, "l1 distance")?;
        let diffs: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .collect();
        Ok(self.domain.cell_measure() * pairwise_sum(&diffs))
    }

    pub fn sup_distance(&self, other: &Field) -> Result<f64> {
        self.domain.ensure_same(&other.domain, "sup distance")?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    domain: GridDomain,
    members: Vec<bool>,
}

// Grid domains compare floats bitwise-equal; that is an equivalence relation here
// because `GridDomain::new` rejects NaN.
impl Eq for GridDomain {}

impl Mask {
    pub fn new(domain: GridDomain, members: Vec<bool>) -> Result<Self> {
        if members.len() != domain.len() {
            return Err(Error::InvalidArgument(format!(
                "mask has {} entries but the grid has {} cells",
                members.len(),
                domain.len()
            )));
        }
        Ok(Mask { domain, members })
    }

    pub fn empty(domain: &GridDomain) -> Self {
        Mask {
            domain: domain.clone(),
            members: vec![false; domain.len()],
        }
    }

    pub fn full(domain: &GridDomain) -> Self {
        Mask {
            domain: domain.clone(),
            members: vec![true; domain.len()],
        }
    }

    /// Cells whose centers satisfy `pred`.
    pub fn from_predicate(domain: &GridDomain, pred: impl Fn([f64; MAX_DIM]) -> bool) -> Self {
        Mask {
            domain: domain.clone(),
            members: domain.centers().map(pred).collect(),
        }
    }

    /// Cells whose centers lie in the open interval `(a, b)`; 1D only.
    pub fn open_interval(domain: &GridDomain, a: f64, b: f64) -> Self {
        Mask::from_predicate(domain, |x| a < x[0] && x[0] < b)
    }

    /// Cells listed by index.
    pub fn from_cells(domain: &GridDomain, cells: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Mask::empty(domain);
        for c in cells {
            m.members[c] = true;
        }
        m
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn members(&self) -> &[bool] {
        &self.members
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.members[cell]
    }

    pub fn set(&mut self, cell: usize, value: bool) {
        self.members[cell] = value;
    }

    pub fn count(&self) -> usize {
        self.members.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|&b| b)
    }

    pub fn is_full(&self) -> bool {
        self.members.iter().all(|&b| b)
    }

    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().enumerate().filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn is_subset(&self, other: &Mask) -> bool {
        self.domain == other.domain && self.members.iter().zip(&other.members).all(|(&a, &b)| !a || b)
    }

    /// First cell of `self` that is not in `other`.
    pub fn first_outside(&self, other: &Mask) -> Option<usize> {
        self.members.iter().zip(&other.members).position(|(&a, &b)| a && !b)
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.domain.ensure_same(&other.domain, "mask union")?;
        Ok(self.zip_with(other, |a, b| a || b))
    }

    pub fn intersection(&self, other: &Mask) -> Result<Mask> {
        self.domain.ensure_same(&other.domain, "mask intersection")?;
        Ok(self.zip_with(other, |a, b| a && b))
    }

    pub fn difference(&self, other: &Mask) -> Result<Mask> {
        self.domain.ensure_same(&other.domain, "mask difference")?;
        Ok(self.zip_with(other, |a, b| a && !b))
    }

    pub fn complement(&self) -> Mask {
        Mask {
            domain: self.domain.clone(),
            members: self.members.iter().map(|&b| !b).collect(),
        }
    }

    /// Number of cells where the masks differ.
    pub fn symmetric_difference_count(&self, other: &Mask) -> usize {
        self.members.iter().zip(&other.members).filter(|(a, b)| a != b).count()
    }

    /// Indicator scaled by `height`.
    pub fn indicator(&self, height: f64) -> Field {
        Field {
            domain: self.domain.clone(),
            values: self.members.iter().map(|&b| if b { height } else { 0.0 }).collect(),
        }
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Mask {
        Mask {
            domain: self.domain.clone(),
            members: self
                .members
                .iter()
                .zip(&other.members)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

pub fn measure(m: &Mask) -> f64 {
    m.domain.cell_measure() * m.count() as f64
}

/// Cells where `u > t` (strict).
pub fn superlevel(u: &Field, t: f64) -> Mask {
    Mask {
        domain: u.domain.clone(),
        members: u.values.iter().map(|&v| v > t).collect(),
    }
}

pub fn distribution_function(u: &Field, t: f64) -> f64 {
    measure(&superlevel(u, t))
}

/// Clamp to `[-k, k]`.
pub fn truncate(u: &Field, k: f64) -> Result<Field> {
    if !(k >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "truncation level must be nonnegative, got {k}"
        )));
    }
    u.map(|v| v.clamp(-k, k))
}

/// `max(u - c, 0)`.
pub fn shift_plus(u: &Field, c: f64) -> Result<Field> {
    u.map(|v| (v - c).max(0.0))
}
