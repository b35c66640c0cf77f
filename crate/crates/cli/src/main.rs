// Negated comparisons reject NaN together with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use config::{load_config, Command, Format, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "levelcap",
    version,
    about = "Rearrangement, capacity and energy-inequality experiments on grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed, overriding `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Sub {
    /// Condenser capacity.
    Capacity,
    /// Induced function of a single field.
    Transform,
    /// Energy inequality and equimeasurability on random samples.
    VerifyPs,
    /// Capacity inequality on superlevel condensers.
    VerifyCap,
    /// Staircase approximation of an induced field.
    Staircase,
    /// Interval-jump transform on the tent at several resolutions.
    Counterexample,
    /// Energy and capacity inequalities side by side.
    Equivalence,
    /// Axiom checks for the configured transform.
    Axioms,
    /// Runs the command named in the config.
    Run,
}

impl Sub {
    fn command(self) -> Option<Command> {
        Some(match self {
            Sub::Capacity => Command::Capacity,
            Sub::Transform => Command::Transform,
            Sub::VerifyPs => Command::VerifyPs,
            Sub::VerifyCap => Command::VerifyCap,
            Sub::Staircase => Command::Staircase,
            Sub::Counterexample => Command::Counterexample,
            Sub::Equivalence => Command::Equivalence,
            Sub::Axioms => Command::Axioms,
            Sub::Run => return None,
        })
    }
}

/// Exit codes: 0 all checks pass, 1 some check failed, 2 the run could not complete.
fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out_dir = cli.out.clone();
    match execute(&cli, &mut out_dir) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let record = json!({
                "status": "error",
                "command": cli.command.command().map(|c| c.name()),
                "error": e.to_string(),
                "causes": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            let text = serde_json::to_string_pretty(&record).expect("error record serializes");
            eprintln!("{text}");
            if let Some(dir) = out_dir {
                let _ = std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(dir.join("error.json"), &text));
            }
            ExitCode::from(2)
        }
    }
}

fn prepare(cli: &Cli) -> Result<(RunConfig, PathBuf)> {
    let path = cli.config.as_ref().context("--config: a config file is required")?;
    let mut cfg = load_config(path)?;
    if let Some(c) = cli.command.command() {
        cfg.command = Some(c);
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    cfg.resolve()?;
    cfg.validate()?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn execute(cli: &Cli, out_dir: &mut Option<PathBuf>) -> Result<bool> {
    let (cfg, base) = prepare(cli)?;
    *out_dir = Some(cfg.output.dir.clone());
    let start = Instant::now();
    let bundle = commands::run(&cfg, &base)?;
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let pass = bundle.pass();

    // Everything is computed before the first write.
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let report = bundle.report.without_timing();
    if cfg.wants(Format::Json) {
        let doc = json!({
            "command": cfg.command()?.name(),
            "pass": pass,
            "config": cfg,
            "report": report,
            "details": bundle.details,
        });
        write(dir, "report.json", serde_json::to_string_pretty(&doc)?.as_bytes())?;
        let timing = json!({"wall_ms": elapsed_ms, "rows": bundle.report.rows.iter().map(|r| (&r.case, r.wall_ms)).collect::<Vec<_>>()});
        write(dir, "timing.json", serde_json::to_string_pretty(&timing)?.as_bytes())?;
    }
    if cfg.wants(Format::Csv) {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        write(dir, "report.csv", &buf)?;
    }
    for (name, bytes) in &bundle.files {
        write(dir, name, bytes)?;
    }

    if !cli.quiet {
        let failed: Vec<_> = report.failures().map(|r| r.case.as_str()).collect();
        println!(
            "{} {}: {} rows, {} failed, {:.1} ms, output in {}",
            if pass { "PASS" } else { "FAIL" },
            cfg.command()?.name(),
            report.rows.len(),
            failed.len(),
            elapsed_ms,
            dir.display()
        );
        for case in failed {
            println!("  failed: {case}");
        }
    }
    Ok(pass)
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}
