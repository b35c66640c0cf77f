//! One function per subcommand. Each returns the report plus the artifacts to write;
//! nothing touches the file system here except reading inputs.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use levelcap::energy::{max_jump, total_variation};
use levelcap::grid::io::{read_field, read_mask, write_field, write_plot_data};
use levelcap::harness::{
    equivalence_experiment, induce_with, random_samples, run_counterexample, sample_condensers,
    verify_capacity_from_ps, verify_capacity_monotone, verify_cavalieri_suite, verify_polya_szego, EquivalenceConfig,
    Sample,
};
use levelcap::induce::{check_composition_commute, check_level_identity, level_set_mismatch, LevelGrid};
use levelcap::report::inputs_hash;
use levelcap::sampling::random_chain;
use levelcap::settrans::{
    check_continuity_inside, check_empty_full, check_measure_preserving, check_monotone, Witness,
};
use levelcap::staircase::staircase_convergence_study;
use levelcap::{
    capacity_with, energy, Condenser, Field, GridDomain, LevelPolicy, Mask, Report, ReportRow, SetTransform,
    TransformSpec,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, FieldSource, Format, Region, RunConfig};

/// Results of one run, held in memory until the single write at the end.
pub struct Bundle {
    pub report: Report,
    /// Command-specific summary embedded in `report.json`.
    pub details: Value,
    /// Extra artifacts as (file name, contents).
    pub files: Vec<(String, Vec<u8>)>,
}

impl Bundle {
    fn new(report: Report, details: Value) -> Self {
        Bundle {
            report,
            details,
            files: Vec::new(),
        }
    }

    pub fn pass(&self) -> bool {
        self.report.all_pass()
    }
}

pub fn run(cfg: &RunConfig, base: &Path) -> Result<Bundle> {
    let mut bundle = match cfg.command()? {
        Command::Capacity => capacity_cmd(cfg, base)?,
        Command::Transform => transform_cmd(cfg, base)?,
        Command::VerifyPs => verify_ps(cfg, base)?,
        Command::VerifyCap => verify_cap(cfg, base)?,
        Command::Staircase => staircase_cmd(cfg, base)?,
        Command::Counterexample => counterexample_cmd(cfg)?,
        Command::Equivalence => equivalence_cmd(cfg, base)?,
        Command::Axioms => axioms_cmd(cfg)?,
    };
    bundle.files.retain(|(name, _)| {
        let format = match name.rsplit('.').next() {
            Some("csv") => Format::Csv,
            Some("dat") => Format::Plot,
            _ => Format::Fields,
        };
        cfg.wants(format)
    });
    Ok(bundle)
}

fn open(base: &Path, path: &Path) -> Result<BufReader<File>> {
    let full = base.join(path);
    let f = File::open(&full).with_context(|| format!("opening {}", full.display()))?;
    Ok(BufReader::new(f))
}

fn region_mask(d: &GridDomain, r: &Region, base: &Path, key: &str) -> Result<Mask> {
    let coords = |v: &[f64], what: &str| -> Result<()> {
        if v.len() != d.dim() {
            bail!("{key}.{what}: expected {} coordinates, got {}", d.dim(), v.len());
        }
        Ok(())
    };
    Ok(match r {
        Region::Ball { center, radius, closed } => {
            coords(center, "center")?;
            Mask::from_predicate(d, |x| {
                let r2: f64 = (0..d.dim()).map(|i| (x[i] - center[i]).powi(2)).sum();
                let dist = r2.sqrt();
                if *closed {
                    dist <= *radius
                } else {
                    dist < *radius
                }
            })
        }
        Region::Box { lower, upper, closed } => {
            coords(lower, "lower")?;
            coords(upper, "upper")?;
            Mask::from_predicate(d, |x| {
                (0..d.dim()).all(|i| {
                    if *closed {
                        x[i] >= lower[i] && x[i] <= upper[i]
                    } else {
                        x[i] > lower[i] && x[i] < upper[i]
                    }
                })
            })
        }
        Region::File { path } => {
            let m = read_mask(open(base, path)?).with_context(|| format!("{key}.path"))?;
            d.ensure_same(m.domain(), key)?;
            m
        }
    })
}

fn load_field(cfg: &RunConfig, d: &GridDomain, base: &Path) -> Result<Field> {
    Ok(match cfg.field.as_ref().unwrap_or(&FieldSource::Tent) {
        FieldSource::Tent => Field::from_fn(d, |x| {
            let r2: f64 = x[..d.dim()].iter().map(|v| v * v).sum();
            (1.0 - r2.sqrt()).max(0.0)
        })?,
        FieldSource::Bumps => Sample::bumps(d, cfg.seed.context("seed: required by field kind `bumps`")?)?.field,
        FieldSource::File { path } => {
            let u = read_field(open(base, path)?).context("field.path")?;
            d.ensure_same(u.domain(), "field")?;
            u
        }
    })
}

fn transform(cfg: &RunConfig, d: &GridDomain) -> Result<SetTransform> {
    SetTransform::on(cfg.transform.clone(), d).context("transform")
}

/// Transforms whose construction guarantees monotonicity.
fn monotone_kind(spec: &TransformSpec) -> bool {
    match spec {
        TransformSpec::IntervalJump => false,
        TransformSpec::Composite { steps } => steps.iter().all(monotone_kind),
        _ => true,
    }
}

fn plot(name: &str, names: &[&str], fields: &[&Field]) -> Result<(String, Vec<u8>)> {
    let mut buf = Vec::new();
    write_plot_data(names, fields, &mut buf)?;
    Ok((format!("{name}.dat"), buf))
}

fn field_file(name: &str, u: &Field) -> Result<(String, Vec<u8>)> {
    let mut buf = Vec::new();
    write_field(u, &mut buf)?;
    Ok((format!("{name}.field"), buf))
}

fn csv_file(name: &str, write: impl FnOnce(&mut Vec<u8>) -> levelcap::Result<()>) -> Result<(String, Vec<u8>)> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok((format!("{name}.csv"), buf))
}

/// A row counting failures, passing when there are none.
fn count_row(case: &str, hash: &str, failures: usize, note: impl Into<String>) -> ReportRow {
    let f = failures as f64;
    ReportRow::new(case, hash.to_string(), f, 0.0, f, 0.0, note)
}

fn capacity_cmd(cfg: &RunConfig, base: &Path) -> Result<Bundle> {
    let d = cfg.domain()?;
    let cc = cfg.capacity.as_ref().context("capacity: missing section")?;
    let inner = region_mask(&d, &cc.inner, base, "capacity.inner")?;
    let outer = region_mask(&d, &cc.outer, base, "capacity.outer")?;
    let cond = Condenser::new(inner, outer).context("capacity: inner region must lie inside outer region")?;
    let phi = cfg.phi.build(base).context("phi")?;
    let r = capacity_with(&phi, &cond, cfg.lambda, &cfg.solver)?;
    let hash = inputs_hash(
        &json!({"op": "capacity", "lambda": cfg.lambda, "phi": phi.info(), "solver": cfg.solver}),
        &[&cond.inner().indicator(1.0), &cond.outer().indicator(1.0)],
    );
    let mut report = Report::new("capacity", "none").with_integrands(vec![phi.info()]);
    let value_row = match cc.expected {
        Some(e) => {
            report = report.with_tolerance("expected_rel", cc.expected_rel);
            ReportRow::new(
                "value",
                hash.clone(),
                r.value,
                e,
                (r.value - e).abs(),
                cc.expected_rel * e.abs(),
                "",
            )
        }
        None => ReportRow::new("value", hash.clone(), r.value, r.value, 0.0, 0.0, "no reference value").unchecked(),
    };
    report.rows.push(value_row);
    report.rows.push(count_row(
        "solver-converged",
        &hash,
        usize::from(!r.converged),
        format!("{} iterations, residual {:e}", r.iterations, r.residual),
    ));
    let mut b = Bundle::new(report, serde_json::to_value(&r)?);
    b.files.push(plot("potential", &["potential"], &[&r.potential])?);
    b.files.push(field_file("potential", &r.potential)?);
    Ok(b)
}

fn level_samples(u: &Field, count: usize) -> Vec<f64> {
    let (lo, hi) = (u.min(), u.max());
    (0..count)
        .map(|i| lo + (i as f64 + 0.5) / count as f64 * (hi - lo))
        .collect()
}

fn transform_cmd(cfg: &RunConfig, base: &Path) -> Result<Bundle> {
    let d = cfg.domain()?;
    let t = transform(cfg, &d)?;
    let u = load_field(cfg, &d, base)?;
    let policy = cfg.levels();
    let u_star = induce_with(&t, &u, policy)?;
    let phi = cfg.phi.build(base).context("phi")?;
    let psi = cfg.psi().build(base).context("psi")?;
    let hash = inputs_hash(
        &json!({"op": "transform", "transform": cfg.transform, "levels": policy}),
        &[&u],
    );

    let samples = level_samples(&u, 64);
    let mismatched: usize = match policy {
        LevelPolicy::Uniform { count } => {
            check_level_identity(&t, &u, &u_star, &LevelGrid::uniform(&u, count)?, &samples)?
                .mismatches
                .iter()
                .map(|m| m.cells)
                .sum()
        }
        LevelPolicy::Exact => level_set_mismatch(&t, &u, &u_star, &samples)?.iter().sum(),
    };
    let mut identity = count_row(
        "level-identity",
        &hash,
        mismatched,
        "mismatched cells over 64 thresholds",
    );
    if !monotone_kind(&cfg.transform) {
        identity = identity.unchecked();
        identity.note = "transform is not monotone; level sets need not match".into();
    }
    let e_star = energy(&psi, &u_star)?;
    let e = energy(&phi, &u)?;
    let energy_row = ReportRow::new(
        "energy",
        hash.clone(),
        e_star,
        e,
        e_star - e,
        0.0,
        "informational; see verify-ps",
    )
    .unchecked();
    let mut report = Report::new("transform", t.spec().label()).with_integrands(vec![phi.info(), psi.info()]);
    report.rows = vec![identity, energy_row];
    let details = json!({
        "u": {"min": u.min(), "max": u.max(), "integral": u.integral()},
        "u_star": {"min": u_star.min(), "max": u_star.max(), "integral": u_star.integral()},
    });
    let mut b = Bundle::new(report, details);
    b.files.push(plot("transform", &["u", "u_star"], &[&u, &u_star])?);
    b.files.push(field_file("u", &u)?);
    b.files.push(field_file("u_star", &u_star)?);
    Ok(b)
}

fn seed(cfg: &RunConfig) -> Result<u64> {
    cfg.seed.context("seed: required for random sampling")
}

fn verify_ps(cfg: &RunConfig, base: &Path) -> Result<Bundle> {
    let d = cfg.domain()?;
    let t = transform(cfg, &d)?;
    let phi = cfg.phi.build(base).context("phi")?;
    let psi = cfg.psi().build(base).context("psi")?;
    let samples = random_samples(&d, seed(cfg)?, cfg.sampling.count)?;
    let policy = cfg.levels();
    let mut report = Report::new("verify-ps", t.spec().label());
    report.absorb(verify_polya_szego(&t, &phi, &psi, &samples, policy, &cfg.tolerances)?);
    report.absorb(verify_cavalieri_suite(&t, &samples, policy, &cfg.tolerances)?);
    let first = &samples[0].field;
    let first_star = induce_with(&t, first, policy)?;
    let mut b = Bundle::new(
        report,
        json!({"samples": samples.iter().map(|s| (&s.case, s.seed)).collect::<Vec<_>>()}),
    );
    b.files.push(plot("sample-0", &["u", "u_star"], &[first, &first_star])?);
    Ok(b)
}

fn verify_cap(cfg: &RunConfig, base: &Path) -> Result<Bundle> {
    let d = cfg.domain()?;
    let t = transform(cfg, &d)?;
    let phi = cfg.phi.build(base).context("phi")?;
    let psi = cfg.psi().build(base).context("psi")?;
    let s = seed(cfg)?;
    let samples = random_samples(&d, s, cfg.sampling.count)?;
    let conds = sample_condensers(&samples, cfg.sampling.condensers_per_sample, s)?;
    let mut report = Report::new("verify-cap", t.spec().label());
    report.absorb(verify_capacity_from_ps(
        &t,
        &phi,
        &psi,
        &conds,
        cfg.lambda,
        cfg.levels(),
        &cfg.tolerances,
    )?);
    report.absorb(verify_capacity_monotone(
        &t,
        &phi,
        &psi,
        &conds,
        cfg.lambda,
        &cfg.tolerances,
    )?);
    Ok(Bundle::new(report, json!({"condensers": conds.len()})))
}

fn staircase_cmd(cfg: &RunConfig, base: &Path) -> Result<Bundle> {
    let d = cfg.domain()?;
    let t = transform(cfg, &d)?;
    let u = load_field(cfg, &d, base)?;
    let phi = cfg.phi.build(base).context("phi")?;
    let psi = cfg.psi().build(base).context("psi")?;
    let study = staircase_convergence_study(&t, &phi, &psi, &u, &cfg.staircase.n)?;
    let u_star = levelcap::induce_exact(&t, &u)?;
    let hash = inputs_hash(&json!({"op": "staircase", "transform": cfg.transform}), &[&u]);
    let jump = max_jump(&u_star);
    let mut report = Report::new("staircase", t.spec().label())
        .with_integrands(vec![phi.info(), psi.info()])
        .with_tolerance("solver_per_layer", 1e-6);
    for r in &study.rows {
        let n = r.n as f64;
        let bound = study.source_energy + 2.0 / n;
        report.rows.push(ReportRow::new(
            format!("n={}/energy", r.n),
            hash.clone(),
            r.total_energy,
            bound,
            r.total_energy - bound,
            r.layers as f64 * 1e-6,
            format!("cross term {:e}", r.cross_term),
        ));
        let sup_bound = 1.0 / n + 2.0 * jump;
        report.rows.push(ReportRow::new(
            format!("n={}/sup-gap", r.n),
            hash.clone(),
            r.sup_gap,
            sup_bound,
            r.sup_gap - sup_bound,
            0.0,
            "bound 1/n + 2·max jump of u*",
        ));
    }
    report.rows.push(count_row(
        "l1-nonincreasing",
        &hash,
        usize::from(!study.l1_nonincreasing),
        "",
    ));
    let details = serde_json::to_value(&study)?;
    let mut b = Bundle::new(report, details);
    b.files.push(csv_file("staircase", |w| study.write_csv(w))?);
    b.files.push(plot("staircase", &["u", "u_star"], &[&u, &u_star])?);
    Ok(b)
}

fn counterexample_cmd(cfg: &RunConfig) -> Result<Bundle> {
    let LevelPolicy::Uniform { count } = cfg.levels() else {
        bail!("levels: counterexample uses uniform levels; the top level set of the tent has an unbounded exact image");
    };
    let ce = run_counterexample(&cfg.counterexample.h, count)?;
    let mut table = Vec::new();
    table.extend_from_slice(b"h,cells,tv_source,tv,quadratic_energy,max_jump,integral\n");
    for r in &ce.table {
        table.extend_from_slice(
            format!(
                "{},{},{},{},{},{},{}\n",
                r.h, r.cells, r.tv_source, r.tv, r.quadratic_energy, r.max_jump, r.integral
            )
            .as_bytes(),
        );
    }
    let (u, u_star) = &ce.finest;
    let details = json!({
        "domain": "[-3, 3]",
        "transform": TransformSpec::IntervalJump.label(),
        "table": ce.table,
        "finest_tv": total_variation(u_star),
    });
    let mut b = Bundle::new(ce.report.clone(), details);
    b.files.push(("counterexample.csv".into(), table));
    b.files.push(plot("counterexample", &["u", "u_star"], &[u, u_star])?);
    Ok(b)
}

fn equivalence_cmd(cfg: &RunConfig, base: &Path) -> Result<Bundle> {
    let d = cfg.domain()?;
    let t = transform(cfg, &d)?;
    let phi = cfg.phi.build(base).context("phi")?;
    let psi = cfg.psi().build(base).context("psi")?;
    let e = &cfg.equivalence;
    let ec = EquivalenceConfig {
        samples: e.samples,
        seed: seed(cfg)?,
        shifts: e.shifts.clone(),
        condensers_per_sample: e.condensers_per_sample,
        lambda: cfg.lambda,
        policy: cfg.levels(),
        tolerances: cfg.tolerances,
    };
    let report = equivalence_experiment(&t, &phi, &psi, &ec)?;
    Ok(Bundle::new(report, serde_json::to_value(&ec)?))
}

#[derive(Debug, Serialize)]
struct AxiomTable {
    empty_full: bool,
    monotone: bool,
    continuity_inside: bool,
    measure_preserving: bool,
    composition_linear: bool,
    composition_square: bool,
    monotone_witness: Option<Witness>,
    continuity_witness: Option<Witness>,
    worst_measure_gap: f64,
}

fn axioms_cmd(cfg: &RunConfig) -> Result<Bundle> {
    let d = cfg.domain()?;
    let t = transform(cfg, &d)?;
    let s = seed(cfg)?;
    let sc = &cfg.sampling;
    let hash = inputs_hash(
        &json!({"op": "axioms", "transform": cfg.transform, "seed": s, "sampling": sc}),
        &[],
    );

    let empty_full = check_empty_full(&t)?;
    let (mut mono_fail, mut cont_fail) = (0, 0);
    let (mut mono_w, mut cont_w) = (None, None);
    let mut masks = Vec::new();
    for i in 0..sc.chains as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(s.wrapping_add(i));
        let chain = random_chain(&d, sc.chain_length, &mut rng);
        let m = check_monotone(&t, &chain)?;
        if !m.holds {
            mono_fail += 1;
            mono_w = mono_w.or(m.witness);
        }
        let c = check_continuity_inside(&t, &chain)?;
        if !c.holds {
            cont_fail += 1;
            cont_w = cont_w.or(c.witness);
        }
        masks.extend(chain);
    }
    let (measure_ok, worst_measure) = check_measure_preserving(&t, &masks, 0.5 * t.target().cell_measure())?;

    let count = match cfg.levels() {
        LevelPolicy::Uniform { count } => count,
        LevelPolicy::Exact => levelcap::induce::DEFAULT_LEVELS,
    };
    let samples = random_samples(&d, s, sc.count)?;
    let mut comp_fail = [0usize; 2];
    for smp in &samples {
        for (k, f) in [|x: f64| 2.0 * x, |x: f64| x * x].into_iter().enumerate() {
            if !check_composition_commute(&t, &smp.field, f, count)?.holds {
                comp_fail[k] += 1;
            }
        }
    }

    let table = AxiomTable {
        empty_full,
        monotone: mono_fail == 0,
        continuity_inside: cont_fail == 0,
        measure_preserving: measure_ok,
        composition_linear: comp_fail[0] == 0,
        composition_square: comp_fail[1] == 0,
        monotone_witness: mono_w.clone(),
        continuity_witness: cont_w.clone(),
        worst_measure_gap: worst_measure,
    };
    let note = |w: &Option<Witness>| w.as_ref().map(|w| w.detail.clone()).unwrap_or_default();
    let mut report = Report::new("axioms", t.spec().label()).with_tolerance("measure", 0.5 * t.target().cell_measure());
    report.rows = vec![
        count_row("empty-full", &hash, usize::from(!empty_full), ""),
        count_row("monotone", &hash, mono_fail, note(&mono_w)),
        count_row("continuity-inside", &hash, cont_fail, note(&cont_w)),
        ReportRow::new(
            "measure-preserving",
            hash.clone(),
            worst_measure,
            0.0,
            worst_measure,
            0.5 * t.target().cell_measure(),
            "property, not an axiom",
        )
        .unchecked(),
        count_row("composition f=2s", &hash, comp_fail[0], ""),
        count_row("composition f=s^2", &hash, comp_fail[1], ""),
    ];
    let mut csv = b"axiom,holds\n".to_vec();
    for (name, v) in [
        ("empty_full", table.empty_full),
        ("monotone", table.monotone),
        ("continuity_inside", table.continuity_inside),
        ("measure_preserving", table.measure_preserving),
        ("composition_linear", table.composition_linear),
        ("composition_square", table.composition_square),
    ] {
        csv.extend_from_slice(format!("{name},{v}\n").as_bytes());
    }
    let mut b = Bundle::new(report, serde_json::to_value(&table)?);
    b.files.push(("axioms.csv".into(), csv));
    Ok(b)
}
