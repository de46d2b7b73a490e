use std::f64::consts::PI;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use chiralmix::cycles;
use chiralmix::output::{self, Table};
use chiralmix::rotor::MoleculeSpec;
use chiralmix::scenarios::{ScenarioConfig, Scenario};
use chiralmix::threewave::{detuning_scan, Sequence, ThreeLevelParams};

fn menthol() -> MoleculeSpec {
    MoleculeSpec { name: "menthol".into(), ..MoleculeSpec::default() }
}

/// `steps` evenly spaced points from `start` to `stop` inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.steps == 0 || !self.start.is_finite() || !self.stop.is_finite() {
            bail!("grid needs finite bounds and at least one step");
        }
        if self.steps == 1 {
            return Ok(vec![self.start]);
        }
        let n = (self.steps - 1) as f64;
        Ok((0..self.steps).map(|i| self.start + (self.stop - self.start) * i as f64 / n).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub molecule: MoleculeSpec,
    pub jmax: i32,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig { molecule: menthol(), jmax: 1 }
    }
}

pub fn spectrum(cfg: &SpectrumConfig) -> Result<Table> {
    if cfg.jmax < 0 {
        bail!("jmax must be >= 0");
    }
    Ok(output::spectrum_table(&cfg.molecule.resolve()?, cfg.jmax)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DressedConfig {
    pub params: ThreeLevelParams,
    pub phi: Grid,
}

impl Default for DressedConfig {
    fn default() -> Self {
        DressedConfig { params: ThreeLevelParams::default(), phi: Grid { start: 0.0, stop: 2.0 * PI, steps: 361 } }
    }
}

pub fn dressed(cfg: &DressedConfig) -> Result<Table> {
    cfg.params.validate()?;
    Ok(output::dressed_table(&cfg.params, &cfg.phi.values()?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CyclesConfig {
    pub molecule: MoleculeSpec,
    pub jmax: i32,
}

impl Default for CyclesConfig {
    fn default() -> Self {
        CyclesConfig { molecule: menthol(), jmax: 1 }
    }
}

pub fn cycles(cfg: &CyclesConfig) -> Result<Table> {
    let rows = cycles::report(&cfg.molecule.resolve()?, cfg.jmax)?;
    Ok(output::cycles_table(&rows))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub sequence: Sequence,
    pub phis: Vec<f64>,
    pub delta: Grid,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            sequence: Sequence::default(),
            phis: vec![0.0, PI / 4.0, PI / 2.0],
            delta: Grid { start: 0.0, stop: 0.5, steps: 101 },
        }
    }
}

pub fn scan(cfg: &ScanConfig) -> Result<Table> {
    if cfg.phis.is_empty() {
        bail!("phis is empty");
    }
    let table = detuning_scan(&cfg.sequence, &cfg.phis, &cfg.delta.values()?)?;
    Ok(output::scan_table(&table))
}

pub struct Propagated {
    pub table: Table,
    pub summary: String,
    pub norm_drift: f64,
    pub norm_tolerance: f64,
    /// Seconds.
    pub time_unit: f64,
}

pub fn propagate(cfg: &ScenarioConfig) -> Result<Propagated> {
    let sc = Scenario::from_config(cfg)?;
    let r = sc.run()?;
    Ok(Propagated {
        table: output::scenario_table(&r),
        summary: output::scenario_summary(&sc, &r),
        norm_drift: r.norm_drift(),
        norm_tolerance: sc.norm_tolerance,
        time_unit: sc.time_unit,
    })
}
