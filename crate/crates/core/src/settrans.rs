//! Transformations of cell sets and checks of the rearrangement axioms.
//!
//! A transformation maps masks on a source grid to masks on a target grid. The
//! induced function transform (see [`crate::induce`]) acts on level sets only
//! when the set map sends the empty set to the empty set and the whole space to
//! the whole space, is monotone, and is continuous along increasing unions. The
//! `check_*` functions test those properties on concrete masks.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{measure, GridDomain, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Membership is pushed to the half-space `x[axis] < offset`.
    #[default]
    Lower,
    /// Membership is pushed to the half-space `x[axis] > offset`.
    Upper,
}

/// Serializable description of a set transformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TransformSpec {
    Identity,
    /// Nearest-to-origin ball of equal measure.
    Schwarz,
    /// Columnwise push-down along `axis`.
    Steiner {
        axis: usize,
    },
    /// Two-point rearrangement across the hyperplane `x[axis] = offset`.
    Polarization {
        axis: usize,
        offset: f64,
        #[serde(default)]
        side: Side,
    },
    /// One-dimensional map `A -> (0, L)` for `L = |A| <= 1` and
    /// `A -> (L/2 - 1/2, L + 1/2)` otherwise. Not monotone and not measure
    /// preserving; it shows that the gradient energy of the induced function can
    /// blow up under a linear-growth integrand.
    IntervalJump,
    /// Left-to-right application of the steps.
    Composite {
        steps: Vec<TransformSpec>,
    },
}

impl TransformSpec {
    pub fn label(&self) -> String {
        match self {
            TransformSpec::Identity => "identity".into(),
            TransformSpec::Schwarz => "schwarz".into(),
            TransformSpec::Steiner { axis } => format!("steiner(axis={axis})"),
            TransformSpec::Polarization { axis, offset, side } => {
                format!("polarization(axis={axis}, offset={offset}, side={side:?})")
            }
            TransformSpec::IntervalJump => "interval-jump".into(),
            TransformSpec::Composite { steps } => format!(
                "composite[{}]",
                steps.iter().map(|s| s.label()).collect::<Vec<_>>().join(", ")
            ),
        }
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Identity,
    Schwarz { ranking: Arc<Vec<usize>> },
    Steiner { axis: usize },
    Polarization { mirror: Arc<Vec<Option<usize>>> },
    IntervalJump,
    Composite { steps: Vec<SetTransform> },
}

/// A set transformation bound to its source and target grids.
#[derive(Debug, Clone)]
pub struct SetTransform {
    spec: TransformSpec,
    source: GridDomain,
    target: GridDomain,
    kind: Kind,
}

impl SetTransform {
    pub fn new(spec: TransformSpec, source: &GridDomain, target: &GridDomain) -> Result<Self> {
        let same = |name: &str| -> Result<()> {
            if source == target {
                Ok(())
            } else {
                Err(Error::DomainMismatch(format!(
                    "{name} needs identical source and target grids"
                )))
            }
        };
        let kind = match &spec {
            TransformSpec::Identity => {
                same("identity")?;
                Kind::Identity
            }
            TransformSpec::Schwarz => {
                if source.dim() != target.dim() {
                    return Err(Error::DomainMismatch(
                        "schwarz needs source and target of equal dimension".into(),
                    ));
                }
                Kind::Schwarz {
                    ranking: Arc::new(distance_ranking(target)),
                }
            }
            TransformSpec::Steiner { axis } => {
                same("steiner")?;
                if *axis >= source.dim() {
                    return Err(Error::InvalidArgument(format!(
                        "steiner axis {axis} out of range for a {}-dimensional grid",
                        source.dim()
                    )));
                }
                Kind::Steiner { axis: *axis }
            }
            TransformSpec::Polarization { axis, offset, side } => {
                same("polarization")?;
                if *axis >= source.dim() {
                    return Err(Error::InvalidArgument(format!(
                        "polarization axis {axis} out of range for a {}-dimensional grid",
                        source.dim()
                    )));
                }
                if !offset.is_finite() {
                    return Err(Error::InvalidArgument("polarization offset must be finite".into()));
                }
                Kind::Polarization {
                    mirror: Arc::new(mirror_table(source, *axis, *offset, *side)),
                }
            }
            TransformSpec::IntervalJump => {
                if source.dim() != 1 || target.dim() != 1 {
                    return Err(Error::RequiresDim1("interval-jump"));
                }
                Kind::IntervalJump
            }
            TransformSpec::Composite { steps } => {
                if steps.is_empty() {
                    return Err(Error::InvalidArgument("composite needs at least one step".into()));
                }
                let last = steps.len() - 1;
                let steps = steps
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let to = if i == last { target } else { source };
                        SetTransform::new(s.clone(), source, to)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Kind::Composite { steps }
            }
        };
        Ok(SetTransform {
            spec,
            source: source.clone(),
            target: target.clone(),
            kind,
        })
    }

    /// Transformation of a grid into itself.
    pub fn on(spec: TransformSpec, domain: &GridDomain) -> Result<Self> {
        SetTransform::new(spec, domain, domain)
    }

    pub fn spec(&self) -> &TransformSpec {
        &self.spec
    }

    pub fn source(&self) -> &GridDomain {
        &self.source
    }

    pub fn target(&self) -> &GridDomain {
        &self.target
    }

    /// Target cells in the order in which Schwarz symmetrization fills them, if this
    /// transform is a Schwarz symmetrization.
    pub(crate) fn schwarz_ranking(&self) -> Option<&[usize]> {
        match &self.kind {
            Kind::Schwarz { ranking } => Some(ranking),
            _ => None,
        }
    }

    pub(crate) fn is_identity(&self) -> bool {
        matches!(self.kind, Kind::Identity)
    }

    pub fn apply(&self, a: &Mask) -> Result<Mask> {
        a.domain()
            .ensure_same(&self.source, "mask is not on the transform's source grid")?;
        Ok(match &self.kind {
            Kind::Identity => a.clone(),
            Kind::Schwarz { ranking } => {
                let wanted = (measure(a) / self.target.cell_measure()).round() as usize;
                let m = wanted.min(self.target.len());
                Mask::from_cells(&self.target, ranking[..m].iter().copied())
            }
            Kind::Steiner { axis } => steiner(a, *axis),
            Kind::Polarization { mirror } => polarize(a, mirror),
            Kind::IntervalJump => {
                let (lo, hi) = interval_jump_image(measure(a));
                Mask::open_interval(&self.target, lo, hi)
            }
            Kind::Composite { steps } => {
                let mut cur = a.clone();
                for s in steps {
                    cur = s.apply(&cur)?;
                }
                cur
            }
        })
    }
}

/// Image interval of a set of length `len` under the interval-jump map.
pub fn interval_jump_image(len: f64) -> (f64, f64) {
    if len <= 1.0 {
        (0.0, len)
    } else {
        (len / 2.0 - 0.5, len + 0.5)
    }
}

/// Cells sorted by distance of their center to the coordinate origin, ties broken
/// by cell index.
///
/// On grids centered at the origin, distances come from integer half-cell offsets
/// `k = 2i + 1 − n`, so mirror cells tie exactly and are taken in alternating order.
/// Rounding in the center coordinates would otherwise order the two cells of a pair
/// at random, and the resulting profile is not the energy-minimal arrangement.
fn distance_ranking(d: &GridDomain) -> Vec<usize> {
    let dim = d.dim();
    let (h, o, n) = (d.spacing(), d.origin(), d.shape());
    let centered = (0..dim).all(|a| (o[a] + n[a] as f64 * h[a] / 2.0).abs() <= 1e-9 * h[a]);
    let isotropic = (1..dim).all(|a| h[a] == h[0]);
    let mut order: Vec<usize> = (0..d.len()).collect();
    if centered && isotropic {
        let key: Vec<u64> = (0..d.len())
            .map(|c| {
                let idx = d.multi_index(c);
                (0..dim)
                    .map(|a| (2 * idx[a] as i64 + 1 - n[a] as i64).pow(2) as u64)
                    .sum()
            })
            .collect();
        order.sort_by_key(|&c| (key[c], c));
        return order;
    }
    let dist: Vec<f64> = if centered {
        (0..d.len())
            .map(|c| {
                let idx = d.multi_index(c);
                (0..dim)
                    .map(|a| ((2 * idx[a] as i64 + 1 - n[a] as i64) as f64 * h[a]).powi(2))
                    .sum()
            })
            .collect()
    } else {
        d.centers().map(|x| x[..dim].iter().map(|v| v * v).sum()).collect()
    };
    order.sort_by(|&i, &j| match dist[i].total_cmp(&dist[j]) {
        Ordering::Equal => i.cmp(&j),
        o => o,
    });
    order
}

fn steiner(a: &Mask, axis: usize) -> Mask {
    let d = a.domain();
    let n = d.shape()[axis];
    let stride = d.stride(axis);
    let mut out = Mask::empty(d);
    for start in 0..d.len() {
        if d.multi_index(start)[axis] != 0 {
            continue;
        }
        let filled = (0..n).filter(|&i| a.contains(start + i * stride)).count();
        for i in 0..filled {
            out.set(start + i * stride, true);
        }
    }
    out
}

/// For cells on the preferred side, the mirror cell across the hyperplane; `None`
/// for cells on the other side, on the hyperplane, or whose mirror is off-grid.
fn mirror_table(d: &GridDomain, axis: usize, offset: f64, side: Side) -> Vec<Option<usize>> {
    let h = d.spacing()[axis];
    let o = d.origin()[axis];
    let n = d.shape()[axis];
    (0..d.len())
        .map(|c| {
            let x = d.center(c)[axis];
            let preferred = match side {
                Side::Lower => x < offset,
                Side::Upper => x > offset,
            };
            if !preferred {
                return None;
            }
            let pos = (2.0 * offset - x - o) / h - 0.5;
            let j = pos.round();
            if (pos - j).abs() > 1e-6 || j < 0.0 || j >= n as f64 {
                return None;
            }
            let mut idx = d.multi_index(c);
            idx[axis] = j as usize;
            let m = d.linear_index(idx);
            (m != c).then_some(m)
        })
        .collect()
}

fn polarize(a: &Mask, mirror: &[Option<usize>]) -> Mask {
    let mut out = a.clone();
    for (x, m) in mirror.iter().enumerate() {
        if let Some(y) = *m {
            let (ax, ay) = (a.contains(x), a.contains(y));
            out.set(x, ax || ay);
            out.set(y, ax && ay);
        }
    }
    out
}

/// Outcome of an axiom check, with the offending chain positions when it fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomCheck {
    pub holds: bool,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    /// Positions in the input list.
    pub first: usize,
    pub second: usize,
    /// A target cell where the required inclusion or equality fails.
    pub cell: usize,
    pub detail: String,
}

impl AxiomCheck {
    fn pass() -> Self {
        AxiomCheck {
            holds: true,
            witness: None,
        }
    }

    fn fail(first: usize, second: usize, cell: usize, detail: impl Into<String>) -> Self {
        AxiomCheck {
            holds: false,
            witness: Some(Witness {
                first,
                second,
                cell,
                detail: detail.into(),
            }),
        }
    }
}

/// Whether the empty mask maps to the empty mask and the full source grid maps to
/// the full target grid.
pub fn check_empty_full(t: &SetTransform) -> Result<bool> {
    let empty = t.apply(&Mask::empty(t.source()))?;
    let full = t.apply(&Mask::full(t.source()))?;
    Ok(empty.is_empty() && full.is_full())
}

fn ensure_increasing(chain: &[Mask]) -> Result<()> {
    for (i, w) in chain.windows(2).enumerate() {
        if !w[0].is_subset(&w[1]) {
            return Err(Error::InvalidArgument(format!(
                "chain is not increasing at positions {i} and {}",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Checks `A ⊆ B ⇒ A* ⊆ B*` on every pair of an increasing chain.
pub fn check_monotone(t: &SetTransform, chain: &[Mask]) -> Result<AxiomCheck> {
    ensure_increasing(chain)?;
    let images = chain.iter().map(|m| t.apply(m)).collect::<Result<Vec<_>>>()?;
    for i in 0..images.len() {
        for j in i + 1..images.len() {
            if let Some(cell) = images[i].first_outside(&images[j]) {
                return Ok(AxiomCheck::fail(
                    i,
                    j,
                    cell,
                    format!(
                        "image of chain[{i}] (measure {}) is not inside image of chain[{j}] (measure {})",
                        measure(&chain[i]),
                        measure(&chain[j])
                    ),
                ));
            }
        }
    }
    Ok(AxiomCheck::pass())
}

/// Checks that the image of the union of an increasing chain equals the union of the
/// images. Finite chains make this an exact set comparison.
pub fn check_continuity_inside(t: &SetTransform, chain: &[Mask]) -> Result<AxiomCheck> {
    ensure_increasing(chain)?;
    let Some(first) = chain.first() else {
        return Ok(AxiomCheck::pass());
    };
    let mut union = first.clone();
    let mut image_union = Mask::empty(t.target());
    for m in chain {
        union = union.union(m)?;
        image_union = image_union.union(&t.apply(m)?)?;
    }
    let image_of_union = t.apply(&union)?;
    match image_of_union
        .members()
        .iter()
        .zip(image_union.members())
        .position(|(a, b)| a != b)
    {
        None => Ok(AxiomCheck::pass()),
        Some(cell) => Ok(AxiomCheck::fail(
            chain.len() - 1,
            chain.len() - 1,
            cell,
            "image of the union differs from the union of the images",
        )),
    }
}

/// Largest `|measure(A*) - measure(A)|` over the samples and whether it is within `tol`.
pub fn check_measure_preserving(t: &SetTransform, samples: &[Mask], tol: f64) -> Result<(bool, f64)> {
    let mut worst: f64 = 0.0;
    for a in samples {
        worst = worst.max((measure(&t.apply(a)?) - measure(a)).abs());
    }
    Ok((worst <= tol, worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::random_chain;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line() -> GridDomain {
        // h = 1/128 keeps interval lengths exact.
        GridDomain::interval(-3.0, 3.0, 768).unwrap()
    }

    fn square() -> GridDomain {
        GridDomain::rectangle([-1.0, -1.0], [1.0, 1.0], [24, 24]).unwrap()
    }

    fn centered(d: &GridDomain, len: f64) -> Mask {
        Mask::from_predicate(d, |x| x[0].abs() < len / 2.0)
    }

    #[test]
    fn schwarz_preserves_measure_exactly() {
        let d = square();
        let t = SetTransform::on(TransformSpec::Schwarz, &d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for chain in (0..10).map(|_| random_chain(&d, 4, &mut rng)) {
            let (ok, worst) = check_measure_preserving(&t, &chain, 0.0).unwrap();
            assert!(ok);
            assert_eq!(worst, 0.0);
        }
    }

    #[test]
    fn schwarz_picks_nearest_cells() {
        let d = GridDomain::interval(-2.0, 2.0, 8).unwrap();
        let t = SetTransform::on(TransformSpec::Schwarz, &d).unwrap();
        let a = Mask::from_cells(&d, [0, 1, 7]);
        let img = t.apply(&a).unwrap();
        // Centers -0.25 (cell 3) and 0.25 (cell 4) tie; cell 3 wins. Next come 2 and 5.
        assert_eq!(img.cells().collect::<Vec<_>>(), vec![2, 3, 4]);
    }

    #[test]
    fn interval_jump_images() {
        let d = line();
        let t = SetTransform::on(TransformSpec::IntervalJump, &d).unwrap();
        let img = t.apply(&centered(&d, 0.5)).unwrap();
        assert_eq!(img, Mask::open_interval(&d, 0.0, 0.5));
        assert_eq!(measure(&img), 0.5);
        let img = t.apply(&centered(&d, 2.0)).unwrap();
        assert_eq!(img, Mask::open_interval(&d, 0.5, 2.5));
        assert_eq!(measure(&img), 2.0);
    }

    #[test]
    fn interval_jump_rejects_planar_grids() {
        let d = square();
        assert!(matches!(
            SetTransform::on(TransformSpec::IntervalJump, &d),
            Err(Error::RequiresDim1(_))
        ));
    }

    #[test]
    fn empty_full_axiom() {
        let d = square();
        for spec in [
            TransformSpec::Identity,
            TransformSpec::Schwarz,
            TransformSpec::Steiner { axis: 1 },
            TransformSpec::Polarization {
                axis: 0,
                offset: 0.25,
                side: Side::Lower,
            },
        ] {
            let t = SetTransform::on(spec.clone(), &d).unwrap();
            assert!(check_empty_full(&t).unwrap(), "{spec:?}");
        }
        // Full grid of length 4: image (1.5, 4.5) is not the whole grid.
        let d4 = GridDomain::interval(-2.0, 2.0, 400).unwrap();
        let t = SetTransform::on(TransformSpec::IntervalJump, &d4).unwrap();
        assert!(!check_empty_full(&t).unwrap());
    }

    #[test]
    fn interval_jump_is_not_monotone_across_unit_length() {
        let d = line();
        let t = SetTransform::on(TransformSpec::IntervalJump, &d).unwrap();
        let chain = vec![centered(&d, 0.9), centered(&d, 1.1)];
        let r = check_monotone(&t, &chain).unwrap();
        assert!(!r.holds);
        let w = r.witness.unwrap();
        assert_eq!((w.first, w.second), (0, 1));
        // The witness cell lies in (0, 0.9) but left of the second image, which starts
        // at 1.1/2 - 1/2 = 0.05 (up to rasterization).
        let x = d.center(w.cell)[0];
        assert!(x > 0.0 && x < 0.06, "witness at {x}");
    }

    #[test]
    fn interval_jump_is_not_continuous_from_inside() {
        let d = line();
        let t = SetTransform::on(TransformSpec::IntervalJump, &d).unwrap();
        let chain = vec![centered(&d, 0.5), centered(&d, 0.9), centered(&d, 1.1)];
        assert!(!check_continuity_inside(&t, &chain).unwrap().holds);
        let constant = vec![centered(&d, 1.1); 3];
        assert!(check_continuity_inside(&t, &constant).unwrap().holds);
    }

    #[test]
    fn interval_jump_measure_check() {
        let d = line();
        let t = SetTransform::on(TransformSpec::IntervalJump, &d).unwrap();
        // Length 2 happens to be preserved, length 1.2 is mapped to length 1.6.
        let (ok, _) = check_measure_preserving(&t, &[centered(&d, 2.0)], 1e-12).unwrap();
        assert!(ok);
        let (ok, worst) = check_measure_preserving(&t, &[centered(&d, 2.0), centered(&d, 1.2)], 1e-12).unwrap();
        assert!(!ok);
        assert!((worst - 0.4).abs() < 2.0 * d.cell_measure());
    }

    #[test]
    fn monotone_rejects_non_chains() {
        let d = line();
        let t = SetTransform::on(TransformSpec::Identity, &d).unwrap();
        let chain = vec![centered(&d, 1.0), centered(&d, 0.5)];
        assert!(check_monotone(&t, &chain).is_err());
    }

    #[test]
    fn steiner_pushes_columns_down() {
        let d = GridDomain::rectangle([0.0, 0.0], [3.0, 2.0], [3, 2]).unwrap();
        // Column (axis 0) for idx[1] = 0 holds cells 0, 2, 4; mark 2 and 4.
        let a = Mask::from_cells(&d, [2, 4, 5]);
        let t = SetTransform::on(TransformSpec::Steiner { axis: 0 }, &d).unwrap();
        let img = t.apply(&a).unwrap();
        assert_eq!(img.cells().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn polarization_moves_mass_to_the_preferred_side() {
        let d = GridDomain::interval(-2.0, 2.0, 8).unwrap();
        let t = SetTransform::on(
            TransformSpec::Polarization {
                axis: 0,
                offset: 0.0,
                side: Side::Lower,
            },
            &d,
        )
        .unwrap();
        // Cell 6 (center 1.25) mirrors to cell 1 (center -1.25).
        let a = Mask::from_cells(&d, [6]);
        assert_eq!(t.apply(&a).unwrap().cells().collect::<Vec<_>>(), vec![1]);
        // Across x = 1.5 cell 7 (1.75) mirrors cell 6 (1.25).
        let upper = |offset| {
            SetTransform::on(
                TransformSpec::Polarization {
                    axis: 0,
                    offset,
                    side: Side::Upper,
                },
                &d,
            )
            .unwrap()
        };
        let a = Mask::from_cells(&d, [6]);
        assert_eq!(upper(1.5).apply(&a).unwrap().cells().collect::<Vec<_>>(), vec![7]);
        // Across x = 1.6 the mirror of 1.75 is 1.45, not a cell center: nothing moves.
        assert_eq!(upper(1.6).apply(&a).unwrap(), a);
    }

    #[test]
    fn composite_with_identity_is_the_step() {
        let d = square();
        let plain = SetTransform::on(TransformSpec::Steiner { axis: 0 }, &d).unwrap();
        let comp = SetTransform::on(
            TransformSpec::Composite {
                steps: vec![TransformSpec::Steiner { axis: 0 }, TransformSpec::Identity],
            },
            &d,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in random_chain(&d, 5, &mut rng) {
            assert_eq!(plain.apply(&m).unwrap(), comp.apply(&m).unwrap());
        }
    }

    #[test]
    fn spec_serde_round_trip() {
        let spec = TransformSpec::Composite {
            steps: vec![
                TransformSpec::Polarization {
                    axis: 1,
                    offset: -0.5,
                    side: Side::Upper,
                },
                TransformSpec::Schwarz,
            ],
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<TransformSpec>(&json).unwrap(), spec);
        assert!(serde_json::from_str::<TransformSpec>(r#"{"kind":"steiner","axis":0,"x":1}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn schwarz_and_steiner_satisfy_axioms(seed in any::<u64>(), len in 1usize..6) {
                let d = square();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let chain = random_chain(&d, len, &mut rng);
                for spec in [TransformSpec::Schwarz, TransformSpec::Steiner { axis: 0 }, TransformSpec::Steiner { axis: 1 }] {
                    let t = SetTransform::on(spec, &d).unwrap();
                    prop_assert!(check_monotone(&t, &chain).unwrap().holds);
                    prop_assert!(check_continuity_inside(&t, &chain).unwrap().holds);
                }
            }

            #[test]
            fn schwarz_is_idempotent(seed in any::<u64>()) {
                let d = square();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let t = SetTransform::on(TransformSpec::Schwarz, &d).unwrap();
                for m in random_chain(&d, 3, &mut rng) {
                    let once = t.apply(&m).unwrap();
                    prop_assert_eq!(t.apply(&once).unwrap(), once);
                }
            }

            #[test]
            fn polarization_is_idempotent(seed in any::<u64>(), k in -8i32..8, upper in any::<bool>()) {
                let d = square();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                // Offsets on cell faces and centers both mirror cells onto cells.
                let offset = k as f64 * d.spacing()[0] / 2.0;
                let side = if upper { Side::Upper } else { Side::Lower };
                let t = SetTransform::on(TransformSpec::Polarization { axis: 1, offset, side }, &d).unwrap();
                for m in random_chain(&d, 3, &mut rng) {
                    let once = t.apply(&m).unwrap();
                    let twice = t.apply(&once).unwrap();
                    prop_assert_eq!(measure(&once), measure(&m));
                    prop_assert_eq!(&twice, &once);
                    prop_assert_eq!(t.apply(&twice).unwrap(), once);
                }
            }
        }
    }
}
