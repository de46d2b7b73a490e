//! M-resolved simulations of real molecules.
//!
//! Every sublevel `|J Ka Kc M⟩` of the chosen levels is kept. A field couples
//! all dipole-allowed pairs whose transition frequency lies within half its
//! carrier of the carrier, so off-resonant couplings (and the Stark shifts
//! they cause) are part of the dynamics. In the interaction picture a pair
//! `lo < up` driven by field `f` carries
//!
//! ```text
//! H_lo,up(t) = ½ E_f f(t) <lo|-μ·e_f|up> exp(i[φ_f + θ_f(t) - Δ t])
//! ```
//!
//! with `Δ = ω_up - ω_lo - ω_f` and the chirp phase `θ_f`. Time is in
//! `t0 = 1/B` of the ground band.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angular_momentum::Polarization;
use crate::coupling::{cycle_product, transition_element, Enantiomer, Sublevel};
use crate::error::{Error, Result};
use crate::integrator::{integrate, Stats, Tolerances};
use crate::rotor::{LevelLabel, Molecule, MoleculeSpec, RotState};
use crate::threewave::{selectivity_of, uniform_grid, Envelope, Shape, Trajectory};
use crate::units;

const PRESETS: &[(&str, &str)] = &[
    ("menthol-chirped", include_str!("../data/scenarios/menthol-chirped.toml")),
    ("menthol-simultaneous", include_str!("../data/scenarios/menthol-simultaneous.toml")),
    ("menthol-sequential", include_str!("../data/scenarios/menthol-sequential.toml")),
    ("carvone-strong", include_str!("../data/scenarios/carvone-strong.toml")),
    ("carvone-weak", include_str!("../data/scenarios/carvone-weak.toml")),
    ("hsoh-nonadiabatic", include_str!("../data/scenarios/hsoh-nonadiabatic.toml")),
    ("hsoh-adiabatic", include_str!("../data/scenarios/hsoh-adiabatic.toml")),
    ("menthol-zzz", include_str!("../data/scenarios/menthol-zzz.toml")),
    ("menthol-zxx", include_str!("../data/scenarios/menthol-zxx.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown preset `{name}` (known: {})", preset_names().join(", "))))?;
    ScenarioConfig::from_toml_str(text)
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub molecule: MoleculeSpec,
    /// Level labels `J_KaKc[@band]`.
    pub levels: Vec<String>,
    /// Starting level, averaged incoherently over its `M`; defaults to the
    /// lowest level of the set.
    #[serde(default)]
    pub initial: Option<String>,
    pub fields: Vec<FieldConfig>,
    #[serde(default)]
    pub run: RunConfig,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub polarization: Polarization,
    /// Pair of levels the carrier is tuned to.
    #[serde(default)]
    pub resonance: Option<[String; 2]>,
    /// Explicit carrier in MHz, instead of `resonance`.
    #[serde(default)]
    pub frequency_mhz: Option<f64>,
    /// W/cm².
    pub intensity: f64,
    #[serde(default = "default_shape")]
    pub shape: String,
    #[serde(default)]
    pub ramp: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Start in `t0`; defaults follow the run schedule.
    #[serde(default)]
    pub start: Option<f64>,
    /// Duration in `t0`.
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default)]
    pub duration_us: Option<f64>,
    /// Pulse area `∫ g f dt` on the resonance, `g` being the largest
    /// singular value of the sublevel coupling block; `π/2` inverts.
    #[serde(default)]
    pub area: Option<f64>,
    #[serde(default)]
    pub phase: f64,
    /// Chirp excursion `δ0` in MHz.
    #[serde(default)]
    pub chirp_mhz: Option<f64>,
    /// Chirp excursion `δ0` in units of the ground-band `B`.
    #[serde(default)]
    pub chirp_b: Option<f64>,
}

fn default_shape() -> String {
    "sin2".into()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    #[default]
    Simultaneous,
    Sequential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Total cycle phase; requires the fields' resonances to close a cycle.
    #[serde(default)]
    pub phi: Option<f64>,
    #[serde(default)]
    pub schedule: Schedule,
    /// Common area for simultaneous fields, spent over one shared window
    /// set by the mean coupling.
    #[serde(default)]
    pub area: Option<f64>,
    /// Pause between sequential pulses, in `t0`.
    #[serde(default)]
    pub gap: f64,
    /// Free evolution after the last pulse, in `t0`.
    #[serde(default)]
    pub tail: f64,
    /// Drop every pair other than the named resonances.
    #[serde(default)]
    pub resonant_only: bool,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    /// Largest accepted `|‖ψ‖ - 1|` over the run.
    #[serde(default = "default_norm_tolerance")]
    pub norm_tolerance: f64,
}

fn default_samples() -> usize {
    401
}

fn default_rtol() -> f64 {
    1e-10
}

fn default_atol() -> f64 {
    1e-12
}

fn default_norm_tolerance() -> f64 {
    1e-9
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            phi: None,
            schedule: Schedule::default(),
            area: None,
            gap: 0.0,
            tail: 0.0,
            resonant_only: false,
            samples: default_samples(),
            rtol: default_rtol(),
            atol: default_atol(),
            norm_tolerance: default_norm_tolerance(),
        }
    }
}

// ---------------------------------------------------------------------------
// Levels

/// Levels expanded into `M` sublevels; basis vector `i` is
/// `sublevels[i] = (level, M)`.
#[derive(Clone, Debug)]
pub struct LevelSet {
    pub levels: Vec<RotState>,
    pub names: Vec<String>,
    pub sublevels: Vec<(usize, i32)>,
}

impl LevelSet {
    pub fn new(mol: &Molecule, labels: &[LevelLabel]) -> Result<Self> {
        let mut levels: Vec<RotState> = Vec::new();
        for l in labels {
            let s = mol.find_level(l)?;
            if levels.iter().any(|x| x.same_level(&s)) {
                return Err(Error::Config(format!("level {l} listed twice")));
            }
            levels.push(s);
        }
        if levels.is_empty() {
            return Err(Error::Config("empty level set".into()));
        }
        let multi = mol.bands.len() > 1;
        let names = levels
            .iter()
            .map(|s| if multi { format!("{}@{}", s.label(), mol.bands[s.band].label) } else { s.label() })
            .collect();
        let sublevels = levels.iter().enumerate().flat_map(|(i, s)| (-s.j..=s.j).map(move |m| (i, m))).collect();
        Ok(LevelSet { levels, names, sublevels })
    }

    pub fn dim(&self) -> usize {
        self.sublevels.len()
    }

    pub fn index(&self, level: usize, m: i32) -> Option<usize> {
        self.sublevels.iter().position(|&s| s == (level, m))
    }

    pub fn find(&self, mol: &Molecule, label: &LevelLabel) -> Result<usize> {
        let s = mol.find_level(label)?;
        self.levels
            .iter()
            .position(|x| x.same_level(&s))
            .ok_or_else(|| Error::Config(format!("level {label} is not in the level set")))
    }

    fn sublevel(&self, i: usize) -> Sublevel<'_> {
        let (l, m) = self.sublevels[i];
        Sublevel { state: &self.levels[l], m }
    }

    /// Sublevel indices of one level.
    pub fn members(&self, level: usize) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.sublevels[i].0 == level).collect()
    }
}

// ---------------------------------------------------------------------------
// Fields and the Hamiltonian

/// A field with all times in `t0` and rates in rad/`t0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub polarization: Polarization,
    pub carrier_mhz: f64,
    /// `(lower, upper)` level indices of the named resonance.
    pub resonance: Option<(usize, usize)>,
    pub intensity: f64,
    pub envelope: Envelope,
    pub phase: f64,
    /// Excursion `δ0`: the frequency sweeps from `ω - δ0` to `ω + δ0`.
    pub chirp: Option<f64>,
}

impl Field {
    fn chirp_phase(&self, t: f64) -> f64 {
        match self.chirp {
            Some(d0) => {
                let e = &self.envelope;
                let tau = (t - e.start).clamp(0.0, e.duration);
                d0 * tau * (tau / e.duration - 1.0)
            }
            None => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Link {
    lo: usize,
    up: usize,
    field: usize,
    /// Peak coupling in rad/`t0`.
    g: Complex64,
    detuning: f64,
}

/// Time-dependent Hamiltonian of one enantiomer on a [`LevelSet`].
#[derive(Clone, Debug)]
pub struct System {
    dim: usize,
    links: Vec<Link>,
    fields: Vec<Field>,
}

impl System {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of coupled sublevel pairs.
    pub fn couplings(&self) -> usize {
        self.links.len()
    }

    fn field_factors(&self, t: f64) -> Vec<Complex64> {
        self.fields
            .iter()
            .map(|f| {
                let a = f.envelope.at(t);
                if a == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::from_polar(a, f.phase + f.chirp_phase(t))
                }
            })
            .collect()
    }

    pub fn hamiltonian(&self, t: f64) -> DMatrix<Complex64> {
        let ff = self.field_factors(t);
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for l in &self.links {
            let v = l.g * ff[l.field] * Complex64::from_polar(1.0, -l.detuning * t);
            h[(l.lo, l.up)] += v;
            h[(l.up, l.lo)] += v.conj();
        }
        h
    }

    fn apply(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        let ff = self.field_factors(t);
        dy.iter_mut().for_each(|d| *d = Complex64::new(0.0, 0.0));
        for l in &self.links {
            let f = ff[l.field];
            if f.re == 0.0 && f.im == 0.0 {
                continue;
            }
            let v = l.g * f * Complex64::from_polar(1.0, -l.detuning * t);
            // dy = -i H y
            let a = v * y[l.up];
            let b = v.conj() * y[l.lo];
            dy[l.lo] += Complex64::new(a.im, -a.re);
            dy[l.up] += Complex64::new(b.im, -b.re);
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.fields.iter().flat_map(|f| f.envelope.breakpoints()).collect()
    }

    fn shortest_pulse(&self) -> f64 {
        self.fields.iter().map(|f| f.envelope.duration).fold(f64::INFINITY, f64::min)
    }
}

fn level_omega(s: &RotState, b_mhz: f64) -> f64 {
    units::angular_rate(s.energy, b_mhz)
}

/// Assembles the interaction-picture Hamiltonian for one enantiomer.
pub fn build_system(mol: &Molecule, levels: &LevelSet, fields: &[Field], en: Enantiomer) -> Result<System> {
    assemble(mol, levels, fields, en, false)
}

/// As [`build_system`] but each field drives only its named resonance.
pub fn build_resonant_system(mol: &Molecule, levels: &LevelSet, fields: &[Field], en: Enantiomer) -> Result<System> {
    assemble(mol, levels, fields, en, true)
}

fn assemble(mol: &Molecule, levels: &LevelSet, fields: &[Field], en: Enantiomer, resonant_only: bool) -> Result<System> {
    let b = mol.ground().constants.b;
    let mut links = Vec::new();
    for (fi, f) in fields.iter().enumerate() {
        let e_field = units::field_amplitude(f.intensity)?;
        let wf = units::angular_rate(f.carrier_mhz, b);
        let mut resonant = false;
        for i in 0..levels.dim() {
            for j in 0..levels.dim() {
                let (li, lj) = (levels.sublevels[i].0, levels.sublevels[j].0);
                let (si, sj) = (&levels.levels[li], &levels.levels[lj]);
                if !(si.energy < sj.energy) || mol.dipole_between(si.band, sj.band).is_none() {
                    continue;
                }
                let w = level_omega(sj, b) - level_omega(si, b);
                if (w - wf).abs() > 0.5 * wf {
                    continue;
                }
                let el = transition_element(mol, en, levels.sublevel(i), levels.sublevel(j), f.polarization)?;
                if el.value.norm() < 1e-14 {
                    continue;
                }
                let scale = 0.5 * units::angular_rate(units::dipole_coupling_mhz(1.0, e_field), b);
                let detuning = if f.resonance == Some((li, lj)) { 0.0 } else { w - wf };
                if resonant_only && detuning != 0.0 {
                    continue;
                }
                resonant |= f.resonance == Some((li, lj));
                links.push(Link { lo: i, up: j, field: fi, g: el.value * scale, detuning });
            }
        }
        if let (Some((a, c)), false) = (f.resonance, resonant) {
            return Err(Error::NoResonance(format!(
                "{}-{} with {}-polarization",
                levels.names[a], levels.names[c], f.polarization
            )));
        }
    }
    Ok(System { dim: levels.dim(), links, fields: fields.to_vec() })
}

/// Largest singular value of the coupling block between two levels, in
/// rad/`t0` per unit envelope.
pub fn effective_coupling(mol: &Molecule, levels: &LevelSet, field: &Field, pair: (usize, usize)) -> Result<f64> {
    let b = mol.ground().constants.b;
    let e_field = units::field_amplitude(field.intensity)?;
    let scale = 0.5 * units::angular_rate(units::dipole_coupling_mhz(1.0, e_field), b);
    let lo = levels.members(pair.0);
    let up = levels.members(pair.1);
    let mut block = DMatrix::<Complex64>::zeros(lo.len(), up.len());
    for (r, &i) in lo.iter().enumerate() {
        for (c, &j) in up.iter().enumerate() {
            block[(r, c)] =
                transition_element(mol, Enantiomer::Plus, levels.sublevel(i), levels.sublevel(j), field.polarization)?.value
                    * scale;
        }
    }
    Ok(block.singular_values().max())
}

/// Three levels closed by three resonant fields: `levels` ascending in
/// energy, `fields[k]` driving leg 12, 23 and 13 for `k = 0, 1, 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClosedCycle {
    pub levels: [usize; 3],
    pub fields: [usize; 3],
}

pub fn find_cycle(levels: &LevelSet, fields: &[Field]) -> Option<ClosedCycle> {
    let pairs: Vec<(usize, (usize, usize))> =
        fields.iter().enumerate().filter_map(|(i, f)| f.resonance.map(|p| (i, p))).collect();
    let mut ids: Vec<usize> = pairs.iter().flat_map(|(_, (a, b))| [*a, *b]).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != 3 || pairs.len() != 3 {
        return None;
    }
    ids.sort_by(|&a, &b| levels.levels[a].energy.total_cmp(&levels.levels[b].energy));
    let on = |a: usize, b: usize| pairs.iter().find(|(_, p)| *p == (a, b)).map(|(i, _)| *i);
    Some(ClosedCycle { levels: [ids[0], ids[1], ids[2]], fields: [on(ids[0], ids[1])?, on(ids[1], ids[2])?, on(ids[0], ids[2])?] })
}

/// Phase `Θ` of the `M`-summed cycle product of the (+) enantiomer with
/// all field phases zero, or `None` when the sum vanishes.
pub fn material_phase(mol: &Molecule, levels: &LevelSet, fields: &[Field], cycle: &ClosedCycle) -> Result<Option<f64>> {
    let [l1, l2, l3] = cycle.levels;
    let pols = [fields[cycle.fields[0]].polarization, fields[cycle.fields[1]].polarization, fields[cycle.fields[2]].polarization];
    let mut sum = Complex64::new(0.0, 0.0);
    let mut unsigned = 0.0;
    for &a in &levels.members(l1) {
        for &b in &levels.members(l2) {
            for &c in &levels.members(l3) {
                let p = cycle_product(mol, Enantiomer::Plus, [levels.sublevel(a), levels.sublevel(b), levels.sublevel(c)], pols)?;
                sum += p.value;
                unsigned += p.value.norm();
            }
        }
    }
    Ok(if unsigned > 0.0 && sum.norm() > 1e-12 * unsigned { Some(sum.arg()) } else { None })
}

// ---------------------------------------------------------------------------
// Resolved scenario

#[derive(Clone, Debug)]
pub struct FieldReport {
    pub polarization: Polarization,
    pub resonance: Option<String>,
    pub carrier_mhz: f64,
    pub intensity: f64,
    /// V/m.
    pub field_amplitude: f64,
    /// Effective resonant coupling, rad/`t0`.
    pub coupling: Option<f64>,
    pub area: Option<f64>,
    pub start: f64,
    pub duration: f64,
    pub duration_us: f64,
    pub chirp: Option<f64>,
    pub phase: f64,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub molecule: Molecule,
    pub levels: LevelSet,
    pub fields: Vec<Field>,
    pub initial: usize,
    pub phi: Option<f64>,
    pub material_phase: Option<f64>,
    pub t_end: f64,
    pub samples: usize,
    pub resonant_only: bool,
    pub tolerances: Tolerances,
    pub norm_tolerance: f64,
    /// `t0` in seconds.
    pub time_unit: f64,
    pub report: Vec<FieldReport>,
}

fn parse_label(s: &str) -> Result<LevelLabel> {
    s.parse()
}

fn shape_of(f: &FieldConfig) -> Result<Shape> {
    let shape = match f.shape.to_ascii_lowercase().as_str() {
        "flat" => Shape::Flat,
        "sin2" => Shape::Sin2 { ramp: f.ramp.unwrap_or(0.1) },
        "gaussian" => Shape::Gaussian { sigma: f.sigma.unwrap_or(0.15) },
        other => return Err(Error::Config(format!("unknown shape `{other}` (flat, sin2, gaussian)"))),
    };
    Ok(shape)
}

impl Scenario {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        let mol = cfg.molecule.resolve()?;
        let b = mol.ground().constants.b;
        let t0 = units::time_unit(b)?;
        let labels = cfg.levels.iter().map(|s| parse_label(s)).collect::<Result<Vec<_>>>()?;
        let levels = LevelSet::new(&mol, &labels)?;
        let initial = match &cfg.initial {
            Some(s) => levels.find(&mol, &parse_label(s)?)?,
            None => (0..levels.levels.len())
                .min_by(|&a, &b| levels.levels[a].energy.total_cmp(&levels.levels[b].energy))
                .unwrap(),
        };
        if cfg.fields.is_empty() {
            return Err(Error::Config("no fields".into()));
        }
        let run = &cfg.run;
        if !(run.gap >= 0.0 && run.tail >= 0.0) || run.samples < 2 {
            return Err(Error::Config("gap and tail must be >= 0 and samples >= 2".into()));
        }
        if run.area.is_some() && run.schedule != Schedule::Simultaneous {
            return Err(Error::Config("run.area applies to the simultaneous schedule only".into()));
        }

        // Carriers, resonances and shapes; durations come after the couplings.
        let mut fields = Vec::with_capacity(cfg.fields.len());
        for (k, fc) in cfg.fields.iter().enumerate() {
            let (carrier, resonance) = match (&fc.resonance, fc.frequency_mhz) {
                (Some([a, c]), None) => {
                    let (ia, ic) = (levels.find(&mol, &parse_label(a)?)?, levels.find(&mol, &parse_label(c)?)?);
                    let (lo, up) = if levels.levels[ia].energy <= levels.levels[ic].energy { (ia, ic) } else { (ic, ia) };
                    let w = levels.levels[up].energy - levels.levels[lo].energy;
                    if !(w > 0.0) {
                        return Err(Error::NoResonance(format!("{a}-{c} (degenerate)")));
                    }
                    (w, Some((lo, up)))
                }
                (None, Some(f)) if f > 0.0 && f.is_finite() => (f, None),
                _ => return Err(Error::Config(format!("field {k}: give exactly one of `resonance` or a positive `frequency_mhz`"))),
            };
            if !(fc.intensity >= 0.0 && fc.intensity.is_finite()) {
                return Err(Error::Config(format!("field {k}: invalid intensity {}", fc.intensity)));
            }
            let chirp = match (fc.chirp_mhz, fc.chirp_b) {
                (Some(_), Some(_)) => return Err(Error::Config(format!("field {k}: give chirp_mhz or chirp_b, not both"))),
                (Some(c), None) => Some(units::angular_rate(c, b)),
                (None, Some(c)) => Some(2.0 * PI * c),
                (None, None) => None,
            };
            fields.push(Field {
                polarization: fc.polarization,
                carrier_mhz: carrier,
                resonance,
                intensity: fc.intensity,
                envelope: Envelope::new(shape_of(fc)?, 0.0, 1.0),
                phase: fc.phase,
                chirp,
            });
        }
        let couplings: Vec<Option<f64>> = fields
            .iter()
            .map(|f| f.resonance.map(|p| effective_coupling(&mol, &levels, f, p)).transpose())
            .collect::<Result<_>>()?;

        let shared = match run.area {
            Some(area) => {
                let gs: Vec<f64> = couplings.iter().map(|g| g.unwrap_or(0.0)).collect();
                let mean = gs.iter().sum::<f64>() / gs.len() as f64;
                if cfg.fields.iter().any(|f| f.duration.is_some() || f.duration_us.is_some() || f.area.is_some()) {
                    return Err(Error::Config("run.area replaces the per-field durations".into()));
                }
                if !(mean > 0.0) {
                    return Err(Error::Config("run.area needs resonant fields".into()));
                }
                let unit = fields.iter().map(|f| f.envelope.shape.unit_area()).sum::<f64>() / fields.len() as f64;
                Some(area / (mean * unit))
            }
            None => None,
        };
        let mut cursor = 0.0;
        for (k, (fc, f)) in cfg.fields.iter().zip(fields.iter_mut()).enumerate() {
            let unit = f.envelope.shape.unit_area();
            let duration = match (shared, fc.duration, fc.duration_us, fc.area) {
                (Some(d), None, None, None) => d,
                (None, Some(d), None, None) => d,
                (None, None, Some(us), None) => us * 1e-6 / t0,
                (None, None, None, Some(area)) => match couplings[k] {
                    Some(g) if g > 0.0 => area / (g * unit),
                    _ => return Err(Error::Config(format!("field {k}: `area` needs a resonance with nonzero coupling"))),
                },
                _ => return Err(Error::Config(format!("field {k}: give exactly one of duration, duration_us, area"))),
            };
            let start = fc.start.unwrap_or(match run.schedule {
                Schedule::Simultaneous => 0.0,
                Schedule::Sequential if k == 0 => 0.0,
                Schedule::Sequential => cursor + run.gap,
            });
            f.envelope = Envelope::new(f.envelope.shape, start, duration);
            f.envelope.validate()?;
            cursor = f.envelope.end();
        }

        let mut material = None;
        if let Some(phi) = run.phi {
            let cycle = find_cycle(&levels, &fields)
                .ok_or_else(|| Error::Config("run.phi needs three resonant fields closing a cycle".into()))?;
            material = material_phase(&mol, &levels, &fields, &cycle)?;
            let theta = material.unwrap_or(0.0);
            let [f12, f23, f13] = cycle.fields;
            fields[f12].phase = phi - theta - fields[f23].phase + fields[f13].phase;
        }

        if !(run.norm_tolerance > 0.0) {
            return Err(Error::Config(format!("run.norm_tolerance must be positive, got {}", run.norm_tolerance)));
        }
        let t_end = fields.iter().map(|f| f.envelope.end()).fold(0.0, f64::max) + run.tail;
        let shortest = fields.iter().map(|f| f.envelope.duration).fold(f64::INFINITY, f64::min);
        let tolerances = Tolerances { rtol: run.rtol, atol: run.atol, h_max: (shortest / 10.0).min(1.0), ..Tolerances::default() };
        let report = fields
            .iter()
            .zip(&couplings)
            .map(|(f, g)| {
                Ok(FieldReport {
                    polarization: f.polarization,
                    resonance: f.resonance.map(|(a, c)| format!("{}-{}", levels.names[a], levels.names[c])),
                    carrier_mhz: f.carrier_mhz,
                    intensity: f.intensity,
                    field_amplitude: units::field_amplitude(f.intensity)?,
                    coupling: *g,
                    area: g.map(|g| g * f.envelope.area()),
                    start: f.envelope.start,
                    duration: f.envelope.duration,
                    duration_us: f.envelope.duration * t0 * 1e6,
                    chirp: f.chirp,
                    phase: f.phase,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Scenario {
            molecule: mol,
            levels,
            fields,
            initial,
            phi: run.phi,
            material_phase: material,
            t_end,
            samples: run.samples,
            resonant_only: run.resonant_only,
            tolerances,
            norm_tolerance: run.norm_tolerance,
            time_unit: t0,
            report,
        })
    }

    pub fn system(&self, en: Enantiomer) -> Result<System> {
        assemble(&self.molecule, &self.levels, &self.fields, en, self.resonant_only)
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(0.0, self.t_end, self.samples)
    }

    /// Propagates one enantiomer from sublevel `(initial, m)`.
    pub fn propagate(&self, system: &System, m: i32) -> Result<Trajectory> {
        let start = self
            .levels
            .index(self.initial, m)
            .ok_or_else(|| Error::InvalidParams(format!("M = {m} outside the initial level")))?;
        let mut psi0 = vec![Complex64::new(0.0, 0.0); system.dim()];
        psi0[start] = Complex64::new(1.0, 0.0);
        let mut tol = self.tolerances;
        tol.h_max = tol.h_max.min(system.shortest_pulse() / 10.0);
        let sol = integrate(|t: f64, y: &[Complex64], dy: &mut [Complex64]| system.apply(t, y, dy), &psi0, &self.grid(), &system.breakpoints(), &tol)?;
        let norm_drift = sol.norm_drift();
        Ok(Trajectory { times: sol.times, amplitudes: sol.states, norm_drift, stats: sol.stats })
    }

    /// Both enantiomers from every `M` of the initial level.
    pub fn run(&self) -> Result<ScenarioResult> {
        let systems = [self.system(Enantiomer::Plus)?, self.system(Enantiomer::Minus)?];
        let j = self.levels.levels[self.initial].j;
        let jobs: Vec<(usize, i32)> = (0..2).flat_map(|e| (-j..=j).map(move |m| (e, m))).collect();
        let runs: Vec<Trajectory> = jobs.par_iter().map(|&(e, m)| self.propagate(&systems[e], m)).collect::<Result<_>>()?;
        let per = (2 * j + 1) as usize;
        let mut runs = runs.into_iter();
        let mut take = |n: usize| -> Vec<MRun> {
            (-j..=j).take(n).map(|m| MRun { initial_m: m, trajectory: runs.next().unwrap() }).collect()
        };
        let plus = take(per);
        let minus = take(per);
        Ok(ScenarioResult {
            times: plus[0].trajectory.times.clone(),
            levels: self.levels.names.clone(),
            sublevels: self.levels.sublevels.clone(),
            plus,
            minus,
        })
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    Scenario::from_config(cfg)?.run()
}

// ---------------------------------------------------------------------------
// Results

#[derive(Clone, Debug)]
pub struct MRun {
    pub initial_m: i32,
    pub trajectory: Trajectory,
}

#[derive(Clone, Debug)]
pub struct ScenarioResult {
    pub times: Vec<f64>,
    pub levels: Vec<String>,
    pub sublevels: Vec<(usize, i32)>,
    pub plus: Vec<MRun>,
    pub minus: Vec<MRun>,
}

impl ScenarioResult {
    pub fn runs(&self, en: Enantiomer) -> &[MRun] {
        match en {
            Enantiomer::Plus => &self.plus,
            Enantiomer::Minus => &self.minus,
        }
    }

    pub fn norm_drift(&self) -> f64 {
        self.plus.iter().chain(&self.minus).map(|r| r.trajectory.norm_drift).fold(0.0, f64::max)
    }

    pub fn stats(&self) -> Stats {
        let mut s = Stats::default();
        for r in self.plus.iter().chain(&self.minus) {
            s.accepted += r.trajectory.stats.accepted;
            s.rejected += r.trajectory.stats.rejected;
            s.evaluations += r.trajectory.stats.evaluations;
        }
        s
    }

    /// Level populations (time × level) summed over final `M` and averaged
    /// over initial `M`.
    pub fn level_populations(&self, en: Enantiomer) -> Vec<Vec<f64>> {
        m_averaged_populations(self.runs(en), &self.sublevels, self.levels.len())
    }

    pub fn selectivity(&self) -> Vec<Vec<f64>> {
        selectivity_of(
            &self.times,
            &self.level_populations(Enantiomer::Plus),
            &self.times,
            &self.level_populations(Enantiomer::Minus),
        )
        .expect("enantiomers share the grid")
    }

    pub fn final_selectivity(&self) -> Vec<f64> {
        self.selectivity().pop().unwrap_or_default()
    }

    /// Largest final selectivity over levels.
    pub fn peak_selectivity(&self) -> f64 {
        self.final_selectivity().into_iter().fold(0.0, f64::max)
    }

    /// Populations by `(level, M)` at the last sample, averaged over
    /// initial `M`.
    pub fn final_sublevel_populations(&self, en: Enantiomer) -> BTreeMap<(usize, i32), f64> {
        let runs = self.runs(en);
        let mut out = BTreeMap::new();
        for r in runs {
            if let Some(last) = r.trajectory.amplitudes.last() {
                for (i, c) in last.iter().enumerate() {
                    *out.entry(self.sublevels[i]).or_insert(0.0) += c.norm_sqr() / runs.len() as f64;
                }
            }
        }
        out
    }
}

pub fn m_averaged_populations(runs: &[MRun], sublevels: &[(usize, i32)], n_levels: usize) -> Vec<Vec<f64>> {
    let Some(first) = runs.first() else { return Vec::new() };
    let w = 1.0 / runs.len() as f64;
    let mut out = vec![vec![0.0; n_levels]; first.trajectory.times.len()];
    for r in runs {
        for (row, amps) in out.iter_mut().zip(&r.trajectory.amplitudes) {
            for (i, c) in amps.iter().enumerate() {
                row[sublevels[i].0] += w * c.norm_sqr();
            }
        }
    }
    out
}
