use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use chiralmix::output::Table;
use chiralmix::scenarios::{preset, ScenarioConfig};

mod commands;
mod config;

use commands::{CyclesConfig, DressedConfig, ScanConfig, SpectrumConfig};
use config::Effective;

/// Enantio-selective three-wave mixing of chiral molecules.
///
/// Every subcommand reads an optional TOML config, applies `--set`
/// overrides, echoes the effective config on stderr and writes one CSV
/// table whose first line records the config hash and units.
#[derive(Parser)]
#[command(name = "chiralmix", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// CSV destination, written atomically. Stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override one config entry, e.g. `--set molecule.name=carvone`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Worker threads for parallel runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Rotational levels of a molecule.
    Spectrum,
    /// Dressed eigenvalues of the three-level model against the cycle phase.
    Dressed,
    /// Three-level cycles and their selectivity verdicts.
    Cycles,
    /// Run a molecular scenario.
    Propagate {
        /// Start from a built-in scenario instead of `--config`.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// List the built-in scenarios and exit.
        #[arg(long)]
        list: bool,
    },
    /// Final selectivity of a pulse sequence over detuning and phase.
    Scan,
}

fn header(command: &str, hash: &str, units: &str) -> String {
    format!("chiralmix {command} config-sha256={hash} units: {units}")
}

fn write_output(out: &Option<PathBuf>, table: &Table, comment: &str) -> Result<()> {
    match out {
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating file in {}", dir.display()))?;
            table.write(&mut tmp, comment)?;
            tmp.as_file().sync_all()?;
            tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            table.write(&mut lock, comment)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn echo<T>(eff: &Effective<T>) {
    eprintln!("# effective config (sha256 {})", eff.hash);
    eprint!("{}", eff.text);
    eprintln!();
}

fn run(cli: Cli) -> Result<bool> {
    let c = &cli.common;
    if let Some(n) = c.jobs {
        if n == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Spectrum => {
            let eff = config::resolve(config::base_text(c.config.as_deref(), &SpectrumConfig::default())?, &c.sets)?;
            echo(&eff);
            let table = commands::spectrum(&eff.config)?;
            write_output(&c.out, &table, &header("spectrum", &eff.hash, "energy_MHz in MHz, energy_cm-1 in cm^-1"))?;
        }
        Command::Dressed => {
            let eff = config::resolve(config::base_text(c.config.as_deref(), &DressedConfig::default())?, &c.sets)?;
            echo(&eff);
            let table = commands::dressed(&eff.config)?;
            write_output(&c.out, &table, &header("dressed", &eff.hash, "phi in rad, E in E0 = h*B"))?;
        }
        Command::Cycles => {
            let eff = config::resolve(config::base_text(c.config.as_deref(), &CyclesConfig::default())?, &c.sets)?;
            echo(&eff);
            let table = commands::cycles(&eff.config)?;
            write_output(&c.out, &table, &header("cycles", &eff.hash, "m_average in D^3"))?;
        }
        Command::Scan => {
            let eff = config::resolve(config::base_text(c.config.as_deref(), &ScanConfig::default())?, &c.sets)?;
            echo(&eff);
            let table = commands::scan(&eff.config)?;
            write_output(&c.out, &table, &header("scan", &eff.hash, "delta in 1/t0, phi in rad, S dimensionless"))?;
        }
        Command::Propagate { preset: name, list } => {
            if *list {
                for n in chiralmix::scenarios::preset_names() {
                    println!("{n}");
                }
                return Ok(true);
            }
            let base = match (name, &c.config) {
                (Some(n), _) => (format!("preset {n}"), preset(n)?.to_toml_string()?),
                (None, Some(path)) => {
                    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    (path.display().to_string(), text)
                }
                (None, None) => bail!("propagate needs --config PATH or --preset NAME"),
            };
            let eff: Effective<ScenarioConfig> = config::resolve(base, &c.sets)?;
            echo(&eff);
            let p = commands::propagate(&eff.config)?;
            eprint!("{}", p.summary);
            let units = format!("t in t0 = {:.6e} s, populations and selectivities dimensionless", p.time_unit);
            write_output(&c.out, &p.table, &header("propagate", &eff.hash, &units))?;
            if p.norm_drift > p.norm_tolerance {
                eprintln!("error: norm drift {:.3e} exceeds run.norm_tolerance {:.3e}", p.norm_drift, p.norm_tolerance);
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
