//! Reduced three-level model of cyclic three-wave mixing.
//!
//! Time is measured in `t0` and energies in `E0 = ħ/t0`; the state obeys
//! `i dψ/dt = H(t) ψ`. In the interaction picture with the rotating-wave
//! approximation the Hamiltonian is
//!
//! ```text
//!       | δ12        σ12 H12    σ13 H13 |
//!   H = | c.c.       0          σ23 H23 |
//!       | c.c.       c.c.      -δ23     |
//! ```
//!
//! with `H_nm = |H̃_nm| f_nm(t) e^{iΦ_nm}`. Only the overall phase
//! `Φ = Φ12 + Φ23 - Φ13` is gauge invariant.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::Enantiomer;
use crate::error::{Error, Result};
use crate::integrator::{integrate, Stats, Tolerances};

/// One of the three transitions of the cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Leg {
    #[serde(rename = "12")]
    L12,
    #[serde(rename = "13")]
    L13,
    #[serde(rename = "23")]
    L23,
}

impl Leg {
    pub const ALL: [Leg; 3] = [Leg::L12, Leg::L13, Leg::L23];

    pub fn index(self) -> usize {
        match self {
            Leg::L12 => 0,
            Leg::L13 => 1,
            Leg::L23 => 2,
        }
    }

    /// Matrix position `(row, column)` of the upper-triangle element.
    pub fn position(self) -> (usize, usize) {
        match self {
            Leg::L12 => (0, 1),
            Leg::L13 => (0, 2),
            Leg::L23 => (1, 2),
        }
    }
}

impl fmt::Display for Leg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Leg::L12 => "12",
            Leg::L13 => "13",
            Leg::L23 => "23",
        })
    }
}

impl FromStr for Leg {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "12" | "21" => Ok(Leg::L12),
            "13" | "31" => Ok(Leg::L13),
            "23" | "32" => Ok(Leg::L23),
            other => Err(Error::Config(format!("unknown leg `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detunings {
    pub d12: f64,
    pub d23: f64,
    pub d13: f64,
}

impl Detunings {
    pub const ZERO: Detunings = Detunings { d12: 0.0, d23: 0.0, d13: 0.0 };

    /// `δ12 = δ23 = δ`, `δ13 = 2δ`.
    pub fn symmetric(delta: f64) -> Self {
        Detunings { d12: delta, d23: delta, d13: 2.0 * delta }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreeLevelParams {
    /// `|H̃12|, |H̃13|, |H̃23|` in `E0`.
    pub couplings: [f64; 3],
    /// Leg whose sign differs between the enantiomers.
    pub flipping: Leg,
    pub detunings: Detunings,
    /// `Φ12, Φ13, Φ23` in radians.
    pub phases: [f64; 3],
}

impl Default for ThreeLevelParams {
    fn default() -> Self {
        ThreeLevelParams::unit(0.0)
    }
}

impl ThreeLevelParams {
    /// Unit couplings, zero detuning, `Φ` carried by leg 12.
    pub fn unit(phi: f64) -> Self {
        ThreeLevelParams { couplings: [1.0; 3], flipping: Leg::L23, detunings: Detunings::ZERO, phases: [phi, 0.0, 0.0] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.couplings.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidParams(format!("coupling magnitudes must be finite and >= 0: {:?}", self.couplings)));
        }
        let Detunings { d12, d23, d13 } = self.detunings;
        if ![d12, d23, d13].iter().all(|d| d.is_finite()) || self.phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParams("non-finite detuning or phase".into()));
        }
        if (d12 + d23 - d13).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!("detunings violate d12 + d23 - d13 = 0: ({d12}, {d23}, {d13})")));
        }
        Ok(())
    }

    /// `Φ = Φ12 + Φ23 - Φ13`.
    pub fn total_phase(&self) -> f64 {
        self.phases[0] + self.phases[2] - self.phases[1]
    }

    /// Copy with the overall phase set to `phi`, adjusting leg 12 only.
    pub fn with_total_phase(&self, phi: f64) -> Self {
        let mut p = self.clone();
        p.phases[0] += phi - self.total_phase();
        p
    }

    pub fn with_detunings(&self, detunings: Detunings) -> Self {
        ThreeLevelParams { detunings, ..self.clone() }
    }

    pub fn sigma(&self, en: Enantiomer, leg: Leg) -> f64 {
        if leg == self.flipping {
            en.sign()
        } else {
            1.0
        }
    }
}

/// Temporal envelope shape on `[start, start + duration]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Flat,
    /// `sin²` rise and fall each lasting `ramp` times the duration;
    /// `ramp = 0.5` is a full `sin²` pulse.
    Sin2 { ramp: f64 },
    /// Gaussian centred in the window with standard deviation `sigma`
    /// times the duration, truncated to the window.
    Gaussian { sigma: f64 },
}

impl Shape {
    pub const SMOOTH: Shape = Shape::Sin2 { ramp: 0.1 };
    pub const FULL_SIN2: Shape = Shape::Sin2 { ramp: 0.5 };

    fn validate(&self) -> Result<()> {
        match *self {
            Shape::Flat => Ok(()),
            Shape::Sin2 { ramp } if ramp > 0.0 && ramp <= 0.5 => Ok(()),
            Shape::Gaussian { sigma } if sigma > 0.0 && sigma.is_finite() => Ok(()),
            other => Err(Error::InvalidParams(format!("invalid envelope {other:?}"))),
        }
    }

    /// Value at fractional position `x ∈ [0, 1]`.
    pub fn value(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        match *self {
            Shape::Flat => 1.0,
            Shape::Sin2 { ramp } => {
                if x < ramp {
                    (0.5 * PI * x / ramp).sin().powi(2)
                } else if x > 1.0 - ramp {
                    (0.5 * PI * (1.0 - x) / ramp).sin().powi(2)
                } else {
                    1.0
                }
            }
            Shape::Gaussian { sigma } => (-(x - 0.5).powi(2) / (2.0 * sigma * sigma)).exp(),
        }
    }

    /// `∫_0^1 f(x) dx`.
    pub fn unit_area(&self) -> f64 {
        match *self {
            Shape::Flat => 1.0,
            Shape::Sin2 { ramp } => 1.0 - ramp,
            Shape::Gaussian { .. } => {
                let n = 4000;
                let h = 1.0 / n as f64;
                let mut s = self.value(0.0) + self.value(1.0);
                for i in 1..n {
                    s += self.value(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
                }
                s * h / 3.0
            }
        }
    }

    /// Interior points where the shape is not smooth.
    fn kinks(&self) -> Vec<f64> {
        match *self {
            Shape::Sin2 { ramp } if ramp < 0.5 => vec![ramp, 1.0 - ramp],
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(flatten)]
    pub shape: Shape,
    pub start: f64,
    pub duration: f64,
}

impl Envelope {
    pub fn new(shape: Shape, start: f64, duration: f64) -> Self {
        Envelope { shape, start, duration }
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn at(&self, t: f64) -> f64 {
        self.shape.value((t - self.start) / self.duration)
    }

    pub fn area(&self) -> f64 {
        self.shape.unit_area() * self.duration
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite() && self.start.is_finite()) {
            return Err(Error::InvalidParams(format!("invalid pulse window [{}, +{}]", self.start, self.duration)));
        }
        self.shape.validate()
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![self.start, self.end()];
        b.extend(self.shape.kinks().into_iter().map(|x| self.start + x * self.duration));
        b
    }
}

/// A linearly polarized field addressing one leg.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pulse {
    pub leg: Leg,
    pub envelope: Envelope,
    /// Peak amplitude multiplying the leg's coupling magnitude.
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Extra phase added to the leg phase.
    #[serde(default)]
    pub phase: f64,
    /// Linear chirp `δ(t) = -δ0 + 2 δ0 (t - start) / duration`.
    #[serde(default)]
    pub chirp: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl Pulse {
    pub fn new(leg: Leg, envelope: Envelope) -> Self {
        Pulse { leg, envelope, amplitude: 1.0, phase: 0.0, chirp: None }
    }

    /// Pulse of the given shape whose two-level rotation angle is `theta`
    /// (`π` inverts) on a leg of coupling magnitude `coupling`.
    pub fn with_rotation(leg: Leg, shape: Shape, start: f64, theta: f64, coupling: f64, amplitude: f64) -> Result<Self> {
        if !(coupling > 0.0 && amplitude > 0.0) {
            return Err(Error::InvalidParams("rotation requires positive coupling and amplitude".into()));
        }
        let duration = 0.5 * theta / (coupling * amplitude * shape.unit_area());
        Ok(Pulse { amplitude, ..Pulse::new(leg, Envelope::new(shape, start, duration)) })
    }

    /// `∫ |H̃| f(t) dt` for a leg of coupling magnitude `coupling`.
    pub fn area(&self, coupling: f64) -> f64 {
        coupling * self.amplitude * self.envelope.area()
    }

    fn chirp_at(&self, t: f64) -> f64 {
        match self.chirp {
            Some(d0) if t >= self.envelope.start && t <= self.envelope.end() => {
                -d0 + 2.0 * d0 * (t - self.envelope.start) / self.envelope.duration
            }
            _ => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        self.envelope.validate()?;
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite() && self.phase.is_finite()) {
            return Err(Error::InvalidParams(format!("invalid pulse amplitude/phase {self:?}")));
        }
        if self.chirp.is_some_and(|c| !c.is_finite()) {
            return Err(Error::InvalidParams("non-finite chirp".into()));
        }
        Ok(())
    }
}

/// Hamiltonian at fixed envelope values `env = [f12, f13, f23]`.
pub fn rwa_hamiltonian(params: &ThreeLevelParams, en: Enantiomer, env: [f64; 3]) -> Matrix3<Complex64> {
    let mut h = Matrix3::<Complex64>::zeros();
    h[(0, 0)] = Complex64::new(params.detunings.d12, 0.0);
    h[(2, 2)] = Complex64::new(-params.detunings.d23, 0.0);
    for leg in Leg::ALL {
        let i = leg.index();
        let v = Complex64::from_polar(params.sigma(en, leg) * params.couplings[i] * env[i], params.phases[i]);
        let (r, c) = leg.position();
        h[(r, c)] = v;
        h[(c, r)] = v.conj();
    }
    h
}

/// Field-dressed energies at unit envelopes with the overall phase set to
/// `phi`, ascending.
pub fn dressed_spectrum(params: &ThreeLevelParams, en: Enantiomer, phi: f64) -> [f64; 3] {
    let h = rwa_hamiltonian(&params.with_total_phase(phi), en, [1.0; 3]);
    let ev = h.symmetric_eigenvalues();
    let mut out = [ev[0], ev[1], ev[2]];
    out.sort_by(f64::total_cmp);
    out
}

/// Time series of state amplitudes for one enantiomer.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub amplitudes: Vec<Vec<Complex64>>,
    pub norm_drift: f64,
    pub stats: Stats,
}

impl Trajectory {
    pub fn populations(&self) -> Vec<Vec<f64>> {
        self.amplitudes.iter().map(|a| a.iter().map(|c| c.norm_sqr()).collect()).collect()
    }

    pub fn final_populations(&self) -> Vec<f64> {
        self.amplitudes.last().map(|a| a.iter().map(|c| c.norm_sqr()).collect()).unwrap_or_default()
    }
}

/// `|P_n(+) - P_n(-)|` at every time and state.
pub fn selectivity(plus: &Trajectory, minus: &Trajectory) -> Result<Vec<Vec<f64>>> {
    selectivity_of(&plus.times, &plus.populations(), &minus.times, &minus.populations())
}

pub(crate) fn selectivity_of(tp: &[f64], pp: &[Vec<f64>], tm: &[f64], pm: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if tp.len() != tm.len() || tp.iter().zip(tm).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0)) {
        return Err(Error::GridMismatch(format!("{} vs {} samples", tp.len(), tm.len())));
    }
    Ok(pp.iter().zip(pm).map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect()).collect())
}

/// Both enantiomers propagated under the same drive.
#[derive(Clone, Debug)]
pub struct PairTrajectory {
    pub plus: Trajectory,
    pub minus: Trajectory,
}

impl PairTrajectory {
    pub fn selectivity(&self) -> Vec<Vec<f64>> {
        selectivity(&self.plus, &self.minus).expect("pair shares its grid")
    }

    pub fn final_selectivity(&self) -> Vec<f64> {
        self.selectivity().pop().unwrap_or_default()
    }

    pub fn norm_drift(&self) -> f64 {
        self.plus.norm_drift.max(self.minus.norm_drift)
    }
}

pub fn uniform_grid(t0: f64, t1: f64, samples: usize) -> Vec<f64> {
    let n = samples.max(2);
    (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect()
}

fn check_chirps(pulses: &[Pulse]) -> Result<()> {
    for p in pulses.iter().filter(|p| p.leg == Leg::L13 && p.chirp.is_some()) {
        let partner = |leg: Leg| {
            pulses
                .iter()
                .find(|q| q.leg == leg && q.envelope.start == p.envelope.start && q.envelope.duration == p.envelope.duration)
                .and_then(|q| q.chirp)
                .unwrap_or(0.0)
        };
        let sum = partner(Leg::L12) + partner(Leg::L23);
        if (sum - p.chirp.unwrap()).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!(
                "chirp on leg 13 ({}) must equal the sum of the chirps on legs 12 and 23 ({sum})",
                p.chirp.unwrap()
            )));
        }
    }
    Ok(())
}

/// Solver settings for a pulse list: steps never exceed a tenth of the
/// shortest pulse.
pub fn tolerances_for(pulses: &[Pulse]) -> Tolerances {
    let shortest = pulses.iter().map(|p| p.envelope.duration).fold(f64::INFINITY, f64::min);
    Tolerances { h_max: (shortest / 10.0).min(1.0), ..Tolerances::default() }
}

/// Propagates `psi0` under `pulses`; the diagonal follows the static
/// detunings plus the chirps on legs 12 and 23.
pub fn propagate(
    params: &ThreeLevelParams,
    en: Enantiomer,
    pulses: &[Pulse],
    psi0: [Complex64; 3],
    tgrid: &[f64],
) -> Result<Trajectory> {
    params.validate()?;
    for p in pulses {
        p.validate()?;
    }
    check_chirps(pulses)?;
    let norm0: f64 = psi0.iter().map(|c| c.norm_sqr()).sum();
    if (norm0 - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParams(format!("initial state not normalized (|ψ|² = {norm0})")));
    }
    // Static pieces: leg prefactors σ |H̃| e^{iΦ}.
    let pre: Vec<(usize, usize, Complex64, &Pulse)> = pulses
        .iter()
        .map(|p| {
            let i = p.leg.index();
            let (r, c) = p.leg.position();
            let v = Complex64::from_polar(
                params.sigma(en, p.leg) * params.couplings[i] * p.amplitude,
                params.phases[i] + p.phase,
            );
            (r, c, v, p)
        })
        .collect();
    let d12 = params.detunings.d12;
    let d23 = params.detunings.d23;
    let rhs = |t: f64, y: &[Complex64], dy: &mut [Complex64]| {
        let mut h = [[Complex64::new(0.0, 0.0); 3]; 3];
        let mut c12 = 0.0;
        let mut c23 = 0.0;
        for &(r, c, v, p) in &pre {
            let f = p.envelope.at(t);
            if f != 0.0 {
                h[r][c] += v * f;
            }
            match p.leg {
                Leg::L12 => c12 += p.chirp_at(t),
                Leg::L23 => c23 += p.chirp_at(t),
                Leg::L13 => {}
            }
        }
        h[0][0] = Complex64::new(d12 + c12, 0.0);
        h[2][2] = Complex64::new(-(d23 + c23), 0.0);
        h[1][0] = h[0][1].conj();
        h[2][0] = h[0][2].conj();
        h[2][1] = h[1][2].conj();
        for (i, row) in h.iter().enumerate() {
            let s = row[0] * y[0] + row[1] * y[1] + row[2] * y[2];
            dy[i] = Complex64::new(s.im, -s.re);
        }
    };
    let breakpoints: Vec<f64> = pulses.iter().flat_map(|p| p.envelope.breakpoints()).collect();
    let sol = integrate(rhs, &psi0, tgrid, &breakpoints, &tolerances_for(pulses))?;
    let norm_drift = sol.norm_drift();
    Ok(Trajectory { times: sol.times, amplitudes: sol.states, norm_drift, stats: sol.stats })
}

pub fn ground() -> [Complex64; 3] {
    [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)]
}

/// Runs both enantiomers in parallel.
pub fn propagate_pair(
    params: &ThreeLevelParams,
    pulses: &[Pulse],
    psi0: [Complex64; 3],
    tgrid: &[f64],
) -> Result<PairTrajectory> {
    let (plus, minus) = rayon::join(
        || propagate(params, Enantiomer::Plus, pulses, psi0, tgrid),
        || propagate(params, Enantiomer::Minus, pulses, psi0, tgrid),
    );
    Ok(PairTrajectory { plus: plus?, minus: minus? })
}

/// Samples per chirped run.
pub const CHIRP_SAMPLES: usize = 401;

/// The three pulses on together for `duration`, each with the smooth
/// envelope, and the diagonal swept linearly from `-δ0` to `+δ0` on legs
/// 12 and 23 (`2δ0` on leg 13).
pub fn chirped_pulses(delta0: f64, duration: f64) -> Vec<Pulse> {
    let env = Envelope::new(Shape::SMOOTH, 0.0, duration);
    Leg::ALL
        .into_iter()
        .map(|leg| Pulse {
            chirp: Some(if leg == Leg::L13 { 2.0 * delta0 } else { delta0 }),
            ..Pulse::new(leg, env)
        })
        .collect()
}

pub fn chirped_passage(
    params: &ThreeLevelParams,
    en: Enantiomer,
    delta0: f64,
    duration: f64,
    phi: f64,
) -> Result<Trajectory> {
    let p = params.with_total_phase(phi);
    propagate(&p, en, &chirped_pulses(delta0, duration), ground(), &uniform_grid(0.0, duration, CHIRP_SAMPLES))
}

/// Two-level rotation angle transferring all population around the
/// resonant cycle at `Φ = π/2` with unit couplings and constant fields.
pub const SIMULTANEOUS_TRANSFER_AREA: f64 = 2.0 * PI / (3.0 * 1.732_050_807_568_877_2);

/// Pulse sequences used in detuning scans.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Sequence {
    /// `π/2` on 13, `π` on 12, `π/2` on 23, full `sin²` pulses separated by
    /// `gap`.
    Sequential { amplitude: f64, gap: f64 },
    /// All three legs on together with the smooth envelope for a total
    /// area `area`.
    Simultaneous { amplitude: f64, area: f64 },
}

impl Default for Sequence {
    fn default() -> Self {
        Sequence::Sequential { amplitude: 1.0, gap: 3.0 }
    }
}

impl Sequence {
    pub fn simultaneous() -> Self {
        Sequence::Simultaneous { amplitude: 1.0, area: SIMULTANEOUS_TRANSFER_AREA }
    }

    /// Pulses for unit couplings, and the end of the last pulse.
    pub fn pulses(&self) -> Result<(Vec<Pulse>, f64)> {
        match *self {
            Sequence::Sequential { amplitude, gap } => {
                if !(gap >= 0.0) {
                    return Err(Error::InvalidParams(format!("negative gap {gap}")));
                }
                let s = Shape::FULL_SIN2;
                let p1 = Pulse::with_rotation(Leg::L13, s, 0.0, PI / 2.0, 1.0, amplitude)?;
                let p2 = Pulse::with_rotation(Leg::L12, s, p1.envelope.end() + gap, PI, 1.0, amplitude)?;
                let p3 = Pulse::with_rotation(Leg::L23, s, p2.envelope.end() + gap, PI / 2.0, 1.0, amplitude)?;
                let end = p3.envelope.end();
                Ok((vec![p1, p2, p3], end))
            }
            Sequence::Simultaneous { amplitude, area } => {
                if !(amplitude > 0.0 && area > 0.0) {
                    return Err(Error::InvalidParams("simultaneous sequence needs positive amplitude and area".into()));
                }
                let duration = area / (amplitude * Shape::SMOOTH.unit_area());
                let env = Envelope::new(Shape::SMOOTH, 0.0, duration);
                let pulses = Leg::ALL.into_iter().map(|leg| Pulse { amplitude, ..Pulse::new(leg, env) }).collect();
                Ok((pulses, duration))
            }
        }
    }

    /// Final `max_n |P_n(+) - P_n(-)|` with `δ12 = δ23 = δ`.
    pub fn final_selectivity(&self, phi: f64, delta: f64) -> Result<f64> {
        let (pulses, end) = self.pulses()?;
        let params = ThreeLevelParams::unit(phi).with_detunings(Detunings::symmetric(delta));
        let pair = propagate_pair(&params, &pulses, ground(), &[0.0, end])?;
        Ok(pair.final_selectivity().into_iter().fold(0.0, f64::max))
    }
}

/// Final selectivity on a `Φ × δ` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanTable {
    pub phis: Vec<f64>,
    pub deltas: Vec<f64>,
    /// `values[i][j]` for `phis[i]`, `deltas[j]`.
    pub values: Vec<Vec<f64>>,
}

pub fn detuning_scan(sequence: &Sequence, phis: &[f64], deltas: &[f64]) -> Result<ScanTable> {
    let cells: Vec<(usize, usize)> = (0..phis.len()).flat_map(|i| (0..deltas.len()).map(move |j| (i, j))).collect();
    let results: Vec<Result<f64>> =
        cells.par_iter().map(|&(i, j)| sequence.final_selectivity(phis[i], deltas[j])).collect();
    let mut values = vec![vec![0.0; deltas.len()]; phis.len()];
    for (&(i, j), r) in cells.iter().zip(results) {
        values[i][j] = r?;
    }
    Ok(ScanTable { phis: phis.to_vec(), deltas: deltas.to_vec(), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sorted(mut v: [f64; 3]) -> [f64; 3] {
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn zero_coupling_is_diagonal() {
        let p = ThreeLevelParams {
            couplings: [0.0; 3],
            detunings: Detunings { d12: 0.3, d23: 0.2, d13: 0.5 },
            ..ThreeLevelParams::unit(0.0)
        };
        let h = rwa_hamiltonian(&p, Enantiomer::Plus, [1.0; 3]);
        assert_eq!(h[(0, 0)].re, 0.3);
        assert_eq!(h[(2, 2)].re, -0.2);
        assert_eq!(h[(0, 1)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn enantiomer_flips_one_leg() {
        let p = ThreeLevelParams::unit(0.7);
        let a = rwa_hamiltonian(&p, Enantiomer::Plus, [1.0; 3]);
        let b = rwa_hamiltonian(&p, Enantiomer::Minus, [1.0; 3]);
        assert_eq!(a[(0, 1)], b[(0, 1)]);
        assert_eq!(a[(0, 2)], b[(0, 2)]);
        assert_eq!(a[(1, 2)], -b[(1, 2)]);
        assert_abs_diff_eq!(a[(0, 1)].arg(), 0.7, epsilon = 1e-15);
        assert_eq!(a, a.adjoint());
    }

    #[test]
    fn dressed_at_zero_phase() {
        let p = ThreeLevelParams::unit(0.0);
        let plus = dressed_spectrum(&p, Enantiomer::Plus, 0.0);
        let minus = dressed_spectrum(&p, Enantiomer::Minus, 0.0);
        for (x, e) in plus.iter().zip([-1.0, -1.0, 2.0]) {
            assert_abs_diff_eq!(*x, e, epsilon = 1e-10);
        }
        for (x, e) in minus.iter().zip([-2.0, 1.0, 1.0]) {
            assert_abs_diff_eq!(*x, e, epsilon = 1e-10);
        }
        for phi in [PI / 2.0, 1.5 * PI] {
            let a = dressed_spectrum(&p, Enantiomer::Plus, phi);
            let b = dressed_spectrum(&p, Enantiomer::Minus, phi);
            for (x, y) in a.iter().zip(&b) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn detuning_lifts_degeneracy() {
        let p = ThreeLevelParams::unit(0.0).with_detunings(Detunings::symmetric(0.5));
        for en in Enantiomer::BOTH {
            let e = dressed_spectrum(&p, en, 0.0);
            assert!(e[1] - e[0] > 1e-3 && e[2] - e[1] > 1e-3, "{e:?}");
        }
    }

    #[test]
    fn rejects_open_detunings() {
        let p = ThreeLevelParams::unit(0.0).with_detunings(Detunings { d12: 0.1, d23: 0.1, d13: 0.1 });
        assert!(p.validate().is_err());
        let r = propagate(&p, Enantiomer::Plus, &[], ground(), &[0.0, 1.0]);
        assert!(matches!(r, Err(Error::InvalidParams(_))));
    }

    #[test]
    fn free_evolution_keeps_populations() {
        let p = ThreeLevelParams::unit(0.0).with_detunings(Detunings::symmetric(0.3));
        let psi = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8), Complex64::new(0.0, 0.0)];
        let tr = propagate(&p, Enantiomer::Plus, &[], psi, &uniform_grid(0.0, 20.0, 11)).unwrap();
        for pops in tr.populations() {
            assert_abs_diff_eq!(pops[0], 0.36, epsilon = 1e-10);
            assert_abs_diff_eq!(pops[1], 0.64, epsilon = 1e-10);
        }
    }

    #[test]
    fn flat_pi_pulse_inverts() {
        let p = ThreeLevelParams::unit(0.0);
        let pulse = Pulse::with_rotation(Leg::L12, Shape::Flat, 0.0, PI, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(pulse.envelope.duration, PI / 2.0, epsilon = 1e-15);
        let tr = propagate(&p, Enantiomer::Plus, &[pulse], ground(), &[0.0, pulse.envelope.end()]).unwrap();
        assert_abs_diff_eq!(tr.final_populations()[1], 1.0, epsilon = 1e-9);
        assert!(tr.norm_drift < 1e-9);
    }

    #[test]
    fn envelope_areas() {
        for shape in [Shape::Flat, Shape::SMOOTH, Shape::FULL_SIN2, Shape::Gaussian { sigma: 0.15 }] {
            let env = Envelope::new(shape, 1.0, 3.0);
            let n = 30000;
            let h = 3.0 / n as f64;
            let numeric: f64 = (0..n).map(|i| env.at(1.0 + (i as f64 + 0.5) * h) * h).sum();
            assert_abs_diff_eq!(env.area(), numeric, epsilon = 1e-6);
        }
        assert_eq!(Envelope::new(Shape::Flat, 0.0, 1.0).at(-0.1), 0.0);
    }

    #[test]
    fn sequential_selectivity_follows_sin_phi() {
        let seq = Sequence::default();
        let (pulses, end) = seq.pulses().unwrap();
        for phi in [0.0, 0.4, PI / 2.0, 2.0] {
            let pair = propagate_pair(&ThreeLevelParams::unit(phi), &pulses, ground(), &[0.0, end]).unwrap();
            let p3p = pair.plus.final_populations()[2];
            let p3m = pair.minus.final_populations()[2];
            assert_abs_diff_eq!(p3p, (1.0 - phi.sin()) / 2.0, epsilon = 1e-7);
            assert_abs_diff_eq!(p3m, (1.0 + phi.sin()) / 2.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn selectivity_grid_mismatch() {
        let p = ThreeLevelParams::unit(0.0);
        let a = propagate(&p, Enantiomer::Plus, &[], ground(), &[0.0, 1.0]).unwrap();
        let b = propagate(&p, Enantiomer::Minus, &[], ground(), &[0.0, 2.0]).unwrap();
        assert!(matches!(selectivity(&a, &b), Err(Error::GridMismatch(_))));
        let s = selectivity(&a, &a).unwrap();
        assert!(s.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn chirp_on_leg_13_must_close() {
        let mut pulses = chirped_pulses(1.0, 10.0);
        pulses[1].chirp = Some(1.0);
        let r = propagate(&ThreeLevelParams::unit(0.0), Enantiomer::Plus, &pulses, ground(), &[0.0, 10.0]);
        assert!(r.is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gauge_invariance(phi in 0.0..(2.0 * PI), a in -3.0..3.0f64, b in -3.0..3.0f64) {
            let (pulses, end) = Sequence::simultaneous().pulses().unwrap();
            let base = ThreeLevelParams::unit(phi);
            let moved = ThreeLevelParams { phases: [a, b, phi - a + b], ..base.clone() };
            prop_assert!((moved.total_phase() - phi).abs() < 1e-12);
            for en in Enantiomer::BOTH {
                let x = propagate(&base, en, &pulses, ground(), &[0.0, end]).unwrap().final_populations();
                let y = propagate(&moved, en, &pulses, ground(), &[0.0, end]).unwrap().final_populations();
                for (u, v) in x.iter().zip(&y) {
                    prop_assert!((u - v).abs() < 1e-8);
                }
            }
        }

        #[test]
        fn enantiomer_swap_is_phase_shift(phi in 0.0..(2.0 * PI)) {
            let (pulses, end) = Sequence::simultaneous().pulses().unwrap();
            let minus = propagate(&ThreeLevelParams::unit(phi), Enantiomer::Minus, &pulses, ground(), &[0.0, end]).unwrap();
            let plus = propagate(&ThreeLevelParams::unit(phi + PI), Enantiomer::Plus, &pulses, ground(), &[0.0, end]).unwrap();
            for (u, v) in minus.final_populations().iter().zip(plus.final_populations()) {
                prop_assert!((u - v).abs() < 1e-8);
            }
        }

        #[test]
        fn hermitian(phi in 0.0..(2.0 * PI), d in -1.0..1.0f64, f in proptest::array::uniform3(0.0..2.0f64)) {
            let p = ThreeLevelParams::unit(phi).with_detunings(Detunings::symmetric(d));
            for en in Enantiomer::BOTH {
                let h = rwa_hamiltonian(&p, en, f);
                prop_assert!((h - h.adjoint()).norm() < 1e-12);
            }
        }
    }

    /// First time at which some level reaches selectivity `threshold` under
    /// constant resonant fields.
    fn separation_time(phi: f64, threshold: f64) -> Option<f64> {
        let t_max = 40.0;
        let env = Envelope::new(Shape::Flat, 0.0, t_max);
        let pulses: Vec<Pulse> = Leg::ALL.into_iter().map(|l| Pulse::new(l, env)).collect();
        let grid = uniform_grid(0.0, t_max, 8001);
        let pair = propagate_pair(&ThreeLevelParams::unit(phi), &pulses, ground(), &grid).unwrap();
        let sel = pair.selectivity();
        grid.iter().zip(&sel).find(|(_, s)| s.iter().any(|v| *v >= threshold)).map(|(t, _)| *t)
    }

    #[test]
    fn separation_slows_as_phase_vanishes() {
        let times: Vec<f64> =
            [2.0, 4.0, 8.0, 16.0].iter().map(|d| separation_time(PI / d, 0.9).expect("separates")).collect();
        assert!(times.windows(2).all(|w| w[1] > w[0]), "{times:?}");
        assert!(separation_time(0.0, 0.9).is_none());
    }

    #[test]
    fn large_detuning_kills_selectivity() {
        for seq in [Sequence::default(), Sequence::simultaneous()] {
            for phi in [0.0, PI / 4.0, PI / 2.0] {
                assert!(seq.final_selectivity(phi, 20.0).unwrap() < 0.05);
            }
        }
    }

    #[test]
    fn exact_crossing_only_at_zero_phase() {
        let gap = |p: &ThreeLevelParams, en| {
            let e = sorted(dressed_spectrum(p, en, p.total_phase()));
            (e[1] - e[0]).min(e[2] - e[1])
        };
        let base = ThreeLevelParams::unit(0.0);
        for en in Enantiomer::BOTH {
            assert!(gap(&base, en) < 1e-10);
            assert!(gap(&base.with_total_phase(PI), en) < 1e-10);
        }
        for phi in [0.3, PI / 4.0, PI / 2.0, 2.0] {
            for en in Enantiomer::BOTH {
                assert!(gap(&base.with_total_phase(phi), en) > 1e-3);
            }
        }
        let unequal = ThreeLevelParams { couplings: [1.0, 0.8, 1.0], ..base.clone() };
        let detuned = base.with_detunings(Detunings::symmetric(0.2));
        for en in Enantiomer::BOTH {
            assert!(gap(&unequal, en) > 1e-3);
            assert!(gap(&detuned, en) > 1e-3);
        }
    }
}
