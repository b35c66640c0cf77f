//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use levelcap::grid::io::read_field;
use levelcap::grid::GridSpec;
use levelcap::{GridDomain, Integrand, LevelPolicy, SolverOptions, Tolerances, TransformSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Capacity,
    Transform,
    VerifyPs,
    VerifyCap,
    Staircase,
    Counterexample,
    Equivalence,
    Axioms,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Capacity => "capacity",
            Command::Transform => "transform",
            Command::VerifyPs => "verify-ps",
            Command::VerifyCap => "verify-cap",
            Command::Staircase => "staircase",
            Command::Counterexample => "counterexample",
            Command::Equivalence => "equivalence",
            Command::Axioms => "axioms",
        }
    }

    fn solves_capacities(self) -> bool {
        matches!(
            self,
            Command::Capacity | Command::VerifyCap | Command::Staircase | Command::Equivalence
        )
    }

    fn samples_randomly(self) -> bool {
        matches!(
            self,
            Command::VerifyPs | Command::VerifyCap | Command::Equivalence | Command::Axioms
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    /// `report.json`
    Json,
    /// Report rows and command tables.
    Csv,
    /// Whitespace-separated columns of cell centers and field values.
    Plot,
    /// Fields in the plain-text grid format.
    Fields,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrandConfig {
    pub p: f64,
    /// Symmetric positive definite matrix, identity when absent.
    pub q: Option<Vec<Vec<f64>>>,
    /// Weight field file, relative to the config file.
    pub weight: Option<PathBuf>,
}

impl Default for IntegrandConfig {
    fn default() -> Self {
        IntegrandConfig {
            p: 2.0,
            q: None,
            weight: None,
        }
    }
}

impl IntegrandConfig {
    pub fn build(&self, base: &Path) -> Result<Integrand> {
        let weight = match &self.weight {
            None => None,
            Some(path) => {
                let full = base.join(path);
                let file =
                    std::fs::File::open(&full).with_context(|| format!("opening weight file {}", full.display()))?;
                Some(read_field(std::io::BufReader::new(file)).with_context(|| format!("reading {}", full.display()))?)
            }
        };
        Ok(Integrand::new(self.p, self.q.clone(), weight)?)
    }
}

/// A set of grid cells, selected by cell center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Region {
    /// Euclidean ball. `closed = false` keeps only centers strictly inside.
    Ball {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "yes")]
        closed: bool,
    },
    /// Axis-aligned box.
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
        #[serde(default = "yes")]
        closed: bool,
    },
    /// Mask file, relative to the config file.
    File { path: PathBuf },
}

fn yes() -> bool {
    true
}

/// Input field of the single-field commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSource {
    /// `max(1 − |x|, 0)`.
    Tent,
    /// Random sum of bumps drawn from the run seed.
    Bumps,
    /// Field file, relative to the config file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityConfig {
    pub inner: Region,
    pub outer: Region,
    /// Reference value; adds a checked row when present.
    pub expected: Option<f64>,
    #[serde(default = "default_expected_rel")]
    pub expected_rel: f64,
}

fn default_expected_rel() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Random fields for verify-ps and verify-cap, composition samples for axioms.
    pub count: usize,
    pub condensers_per_sample: usize,
    /// Random nested chains for axioms.
    pub chains: usize,
    pub chain_length: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            count: 10,
            condensers_per_sample: 1,
            chains: 100,
            chain_length: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaircaseConfig {
    pub n: Vec<usize>,
}

impl Default for StaircaseConfig {
    fn default() -> Self {
        StaircaseConfig { n: vec![2, 4, 8] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterexampleConfig {
    pub h: Vec<f64>,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        CounterexampleConfig {
            h: vec![1.0 / 128.0, 1.0 / 256.0, 1.0 / 512.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquivalenceParams {
    pub samples: usize,
    pub shifts: Vec<usize>,
    pub condensers_per_sample: usize,
}

impl Default for EquivalenceParams {
    fn default() -> Self {
        EquivalenceParams {
            samples: 4,
            shifts: vec![2, 4, 8],
            condensers_per_sample: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            formats: vec![Format::Json, Format::Csv, Format::Plot],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// May be left out when the command is given on the command line.
    pub command: Option<Command>,
    /// Unused by `counterexample`, which fixes its own grids.
    pub domain: Option<GridSpec>,
    #[serde(default = "default_transform")]
    pub transform: TransformSpec,
    #[serde(default)]
    pub phi: IntegrandConfig,
    /// Defaults to `phi`.
    pub psi: Option<IntegrandConfig>,
    /// Defaults to exact induction for the energy and capacity comparisons and to 256
    /// uniform levels otherwise.
    pub levels: Option<LevelPolicy>,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputConfig,
    pub field: Option<FieldSource>,
    pub capacity: Option<CapacityConfig>,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub staircase: StaircaseConfig,
    #[serde(default)]
    pub counterexample: CounterexampleConfig,
    #[serde(default)]
    pub equivalence: EquivalenceParams,
}

fn default_transform() -> TransformSpec {
    TransformSpec::Schwarz
}

fn one() -> f64 {
    1.0
}

/// Parses TOML. Unknown keys are errors.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    Ok(toml::from_str(text)?)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("parsing config {}", path.display()))
}

impl RunConfig {
    pub fn command(&self) -> Result<Command> {
        self.command
            .context("command: no command given on the command line or in the config")
    }

    /// Fills every defaulted option so that the echoed config is complete.
    pub fn resolve(&mut self) -> Result<()> {
        let command = self.command()?;
        if self.psi.is_none() {
            self.psi = Some(self.phi.clone());
        }
        if self.levels.is_none() {
            self.levels = Some(match command {
                Command::VerifyPs | Command::VerifyCap | Command::Equivalence => LevelPolicy::Exact,
                _ => LevelPolicy::default(),
            });
        }
        if self.field.is_none() && matches!(command, Command::Transform | Command::Staircase) {
            self.field = Some(FieldSource::Tent);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let command = self.command()?;
        if command != Command::Counterexample {
            let Some(d) = &self.domain else {
                bail!("domain: required by `{}`", command.name());
            };
            for (i, &n) in d.shape.iter().enumerate() {
                if n < 8 {
                    bail!("domain.shape[{i}]: must be >= 8, got {n}");
                }
            }
        }
        positive("lambda", self.lambda)?;
        positive("solver.cg_rel_tol", self.solver.cg_rel_tol)?;
        positive("solver.grad_tol", self.solver.grad_tol)?;
        if self.solver.cg_max_factor == 0 {
            bail!("solver.cg_max_factor: must be > 0");
        }
        if self.solver.descent_max_iter == 0 {
            bail!("solver.descent_max_iter: must be > 0");
        }
        let t = &self.tolerances;
        for (key, v) in [
            ("tolerances.ps_rel", t.ps_rel),
            ("tolerances.ps_abs", t.ps_abs),
            ("tolerances.cap", t.cap),
            ("tolerances.cap_rel", t.cap_rel),
            ("tolerances.cavalieri_rel", t.cavalieri_rel),
        ] {
            positive(key, v)?;
        }
        if let Some(LevelPolicy::Uniform { count }) = self.levels {
            if count < 2 {
                bail!("levels.count: must be >= 2, got {count}");
            }
        }
        if command.solves_capacities() {
            let psi = self.psi.as_ref().unwrap_or(&self.phi);
            for (key, ic) in [("phi.p", &self.phi), ("psi.p", psi)] {
                if !(ic.p > 1.0) {
                    bail!(
                        "{key}: `{}` solves capacity problems, which need p > 1, got p = {}",
                        command.name(),
                        ic.p
                    );
                }
            }
        }
        let bumps = matches!(self.field, Some(FieldSource::Bumps));
        if (command.samples_randomly() || bumps) && self.seed.is_none() {
            bail!("seed: required because `{}` draws random samples", command.name());
        }
        if command == Command::Capacity && self.capacity.is_none() {
            bail!("capacity: the `capacity` command needs [capacity] inner and outer regions");
        }
        if let Some(c) = &self.capacity {
            positive("capacity.expected_rel", c.expected_rel)?;
        }
        if command == Command::Staircase && (self.staircase.n.is_empty() || self.staircase.n.contains(&0)) {
            bail!("staircase.n: needs at least one entry, all >= 1");
        }
        if command == Command::Counterexample {
            if self.counterexample.h.is_empty() {
                bail!("counterexample.h: needs at least one spacing");
            }
            for (i, &h) in self.counterexample.h.iter().enumerate() {
                positive(&format!("counterexample.h[{i}]"), h)?;
            }
        }
        if matches!(command, Command::VerifyPs | Command::VerifyCap | Command::Axioms) && self.sampling.count == 0 {
            bail!("sampling.count: must be > 0");
        }
        if command == Command::Axioms && (self.sampling.chains == 0 || self.sampling.chain_length == 0) {
            bail!("sampling.chains and sampling.chain_length: must be > 0");
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<GridDomain> {
        let spec = self.domain.clone().context("domain: missing")?;
        GridDomain::try_from(spec).context("domain")
    }

    pub fn psi(&self) -> &IntegrandConfig {
        self.psi.as_ref().unwrap_or(&self.phi)
    }

    pub fn levels(&self) -> LevelPolicy {
        self.levels.unwrap_or_default()
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        bail!("{key}: must be finite and > 0, got {v}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
command = "transform"
[domain]
dim = 1
shape = [64]
spacing = [0.0625]
origin = [-2.0]
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.resolve().unwrap();
        c.validate().unwrap();
        assert_eq!(c.levels, Some(LevelPolicy::Uniform { count: 256 }));
        assert_eq!(c.tolerances.ps_rel, 0.02);
        assert_eq!(c.transform, TransformSpec::Schwarz);
        assert_eq!(c.psi, Some(IntegrandConfig::default()));
        assert_eq!(c.field, Some(FieldSource::Tent));
    }

    #[test]
    fn comparisons_default_to_exact_levels() {
        for cmd in ["verify-ps", "verify-cap", "equivalence"] {
            let mut c = parse_config(&MINIMAL.replace("transform", cmd)).unwrap();
            c.resolve().unwrap();
            assert_eq!(c.levels, Some(LevelPolicy::Exact), "{cmd}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config(&format!("{MINIMAL}\n[tolerances]\nps_rell = 0.1\n")).unwrap_err();
        assert!(format!("{err:#}").contains("ps_rell"), "{err:#}");
        let err = parse_config(&format!("colour = 1\n{MINIMAL}")).unwrap_err();
        assert!(format!("{err:#}").contains("colour"), "{err:#}");
    }

    #[test]
    fn capacity_with_p_one_names_the_constraint() {
        let text = format!(
            "{}\n[phi]\np = 1.0\n[capacity]\ninner = {{ kind = \"ball\", center = [0.0], radius = 0.5 }}\nouter = {{ kind = \"ball\", center = [0.0], radius = 1.0, closed = false }}\n",
            MINIMAL.replace("transform", "capacity")
        );
        let mut c = parse_config(&text).unwrap();
        c.resolve().unwrap();
        let err = c.validate().unwrap_err().to_string();
        assert!(err.starts_with("phi.p:") && err.contains("p > 1"), "{err}");
    }

    #[test]
    fn invariant_violations_name_the_key() {
        let mut c = parse_config(&MINIMAL.replace("[64]", "[4]")).unwrap();
        c.resolve().unwrap();
        assert!(c.validate().unwrap_err().to_string().starts_with("domain.shape[0]"));

        let mut c = parse_config(&format!("{MINIMAL}\n[tolerances]\ncap = 0.0\n")).unwrap();
        c.resolve().unwrap();
        assert!(c.validate().unwrap_err().to_string().starts_with("tolerances.cap:"));

        let mut c = parse_config(&MINIMAL.replace("transform", "verify-ps")).unwrap();
        c.resolve().unwrap();
        assert!(c.validate().unwrap_err().to_string().starts_with("seed:"));
    }

    #[test]
    fn counterexample_config_round_trips() {
        let text = r#"
command = "counterexample"
transform = { kind = "interval-jump" }
levels = { kind = "uniform", count = 512 }
seed = 3

[phi]
p = 1.0

[counterexample]
h = [0.0078125, 0.00390625, 0.001953125]

[output]
dir = "ce"
formats = ["json", "csv", "plot", "fields"]
"#;
        let mut c = parse_config(text).unwrap();
        c.resolve().unwrap();
        c.validate().unwrap();
        let again = parse_config(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(again, c);
        assert_eq!(c.counterexample.h, vec![1.0 / 128.0, 1.0 / 256.0, 1.0 / 512.0]);
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
command = "capacity"
lambda = 2.0
seed = 11
transform = { kind = "composite", steps = [{ kind = "steiner", axis = 0 }, { kind = "polarization", axis = 1, offset = 0.25, side = "upper" }] }
field = { kind = "file", path = "u.field" }

[domain]
dim = 2
shape = [16, 12]
spacing = [0.25, 0.25]
origin = [-2.0, -1.5]

[phi]
p = 3.0
q = [[2.0, 0.5], [0.5, 1.0]]
weight = "w.field"

[psi]
p = 2.5

[solver]
grad_tol = 1e-7

[capacity]
inner = { kind = "box", lower = [-0.5, -0.5], upper = [0.5, 0.5] }
outer = { kind = "file", path = "b.mask" }
expected = 3.0
"#;
        let mut c = parse_config(text).unwrap();
        c.resolve().unwrap();
        c.validate().unwrap();
        let again = parse_config(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(again, c);
        assert_eq!(c.solver.grad_tol, 1e-7);
        assert_eq!(c.solver.cg_rel_tol, SolverOptions::default().cg_rel_tol);
    }
}
