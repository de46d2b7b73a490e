//! CSV tables with fixed float formatting.
//!
//! Every table starts with a single `#` line carrying whatever the caller
//! puts there (config hash, units), then a header row. Floats are written
//! with 12 significant digits so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::cycles::ReportRow;
use crate::rotor::{Molecule, MHZ_PER_WAVENUMBER};
use crate::scenarios::{Scenario, ScenarioResult};
use crate::threewave::{dressed_spectrum, PairTrajectory, ScanTable, ThreeLevelParams};
use crate::{Enantiomer, Result};

/// `x` in scientific notation with 12 significant digits. Negative zero
/// prints as zero.
pub fn float(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.11e}")
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn push_floats(&mut self, row: impl IntoIterator<Item = f64>) {
        self.push(row.into_iter().map(float).collect());
    }

    pub fn write<W: Write>(&self, mut w: W, comment: &str) -> io::Result<()> {
        writeln!(w, "# {}", comment.replace('\n', " "))?;
        let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        csv.write_record(&self.columns)?;
        for row in &self.rows {
            csv.write_record(row)?;
        }
        csv.flush()
    }

    pub fn to_csv(&self, comment: &str) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf, comment).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 cells")
    }
}

/// Levels up to `jmax` in every band.
pub fn spectrum_table(mol: &Molecule, jmax: i32) -> Result<Table> {
    let mut t = Table::new(["band", "J", "tau", "Ka", "Kc", "label", "irrep", "energy_MHz", "energy_cm-1"]);
    for s in mol.levels(jmax)? {
        t.push(vec![
            mol.bands[s.band].label.clone(),
            s.j.to_string(),
            s.tau.to_string(),
            s.ka.to_string(),
            s.kc.to_string(),
            s.label(),
            s.irrep.to_string(),
            float(s.energy),
            float(s.energy / MHZ_PER_WAVENUMBER),
        ]);
    }
    Ok(t)
}

/// Dressed eigenvalues (ascending, in `E0`) of both enantiomers against `Φ`.
pub fn dressed_table(params: &ThreeLevelParams, phis: &[f64]) -> Table {
    let mut t = Table::new(["phi", "E1+", "E2+", "E3+", "E1-", "E2-", "E3-"]);
    for &phi in phis {
        let p = dressed_spectrum(params, Enantiomer::Plus, phi);
        let m = dressed_spectrum(params, Enantiomer::Minus, phi);
        let scale = p.iter().chain(&m).fold(0.0f64, |a, e| a.max(e.abs()));
        // Below eigensolver accuracy.
        let snap = |e: f64| if e.abs() <= 1e-12 * scale { 0.0 } else { e };
        t.push_floats(std::iter::once(phi).chain(p.map(snap)).chain(m.map(snap)));
    }
    t
}

pub fn cycles_table(rows: &[ReportRow]) -> Table {
    let mut t =
        Table::new(["level1", "level2", "level3", "polarizations", "types", "sigma", "verdict", "m_average", "agrees"]);
    for r in rows {
        let mut row = r.levels.to_vec();
        row.extend([
            r.polarizations.clone(),
            r.types.clone(),
            r.sigma.clone(),
            r.verdict.to_string(),
            float(r.m_average),
            r.agrees.to_string(),
        ]);
        t.push(row);
    }
    t
}

/// One row per detuning, one column per `Φ`.
pub fn scan_table(scan: &ScanTable) -> Table {
    let mut cols = vec!["delta".to_string()];
    cols.extend(scan.phis.iter().map(|&p| format!("S(phi={})", float(p))));
    let mut t = Table::new(cols);
    for (j, &d) in scan.deltas.iter().enumerate() {
        t.push_floats(std::iter::once(d).chain(scan.values.iter().map(|v| v[j])));
    }
    t
}

/// Three-level trajectory: amplitudes and populations of both enantiomers
/// plus the selectivity of each state.
pub fn trajectory_table(pair: &PairTrajectory) -> Table {
    let mut cols = vec!["t".to_string()];
    for sign in ["+", "-"] {
        for n in 1..=3 {
            cols.push(format!("ReA{n}{sign}"));
            cols.push(format!("ImA{n}{sign}"));
        }
    }
    for sign in ["+", "-"] {
        cols.extend((1..=3).map(|n| format!("P{n}{sign}")));
    }
    cols.extend((1..=3).map(|n| format!("S{n}")));
    let mut t = Table::new(cols);
    let sel = pair.selectivity();
    for (i, &time) in pair.plus.times.iter().enumerate() {
        let mut row = vec![time];
        for tr in [&pair.plus, &pair.minus] {
            row.extend(tr.amplitudes[i].iter().flat_map(|a| [a.re, a.im]));
        }
        for tr in [&pair.plus, &pair.minus] {
            row.extend(tr.amplitudes[i].iter().map(|a| a.norm_sqr()));
        }
        row.extend(&sel[i]);
        t.push_floats(row);
    }
    t
}

/// M-averaged level populations of both enantiomers and the selectivity
/// of each level.
pub fn scenario_table(r: &ScenarioResult) -> Table {
    let mut cols = vec!["t".to_string()];
    for sign in ["+", "-"] {
        cols.extend(r.levels.iter().map(|l| format!("P{sign}({l})")));
    }
    cols.extend(r.levels.iter().map(|l| format!("S({l})")));
    let mut t = Table::new(cols);
    let plus = r.level_populations(Enantiomer::Plus);
    let minus = r.level_populations(Enantiomer::Minus);
    let sel = r.selectivity();
    for (i, &time) in r.times.iter().enumerate() {
        let row = std::iter::once(time).chain(plus[i].iter().copied()).chain(minus[i].iter().copied());
        t.push_floats(row.chain(sel[i].iter().copied()));
    }
    t
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join("  ")
}

/// Human-readable run summary: units, fields, final selectivities.
pub fn scenario_summary(sc: &Scenario, r: &ScenarioResult) -> String {
    let mut s = String::new();
    let t0 = sc.time_unit;
    let b = 1e-6 / t0;
    let _ = writeln!(s, "molecule      {}", sc.molecule.name);
    let _ = writeln!(s, "units         t0 = 1/B = {t0:.6e} s (B = {b:.4} MHz), energies in h*B, rates in rad/t0");
    let _ = writeln!(s, "levels        {}", r.levels.join(", "));
    let _ = writeln!(s, "initial       {}", r.levels[sc.initial]);
    match sc.phi {
        Some(phi) => {
            let theta = sc.material_phase.map_or("undefined".to_string(), |t| format!("{t:.6}"));
            let _ = writeln!(s, "phi           {phi:.6} rad (material phase {theta})");
        }
        None => {
            let _ = writeln!(s, "phi           not controlled");
        }
    }
    let _ = writeln!(s, "run           {:.4} t0 = {:.4} us, {} samples", sc.t_end, sc.t_end * t0 * 1e6, sc.samples);
    let _ = writeln!(s, "fields");
    for f in &sc.report {
        let _ = write!(
            s,
            "  {} {:<16} carrier {:.4} MHz  I {} W/cm2  E {:.4e} V/m",
            f.polarization,
            f.resonance.as_deref().unwrap_or("-"),
            f.carrier_mhz,
            f.intensity,
            f.field_amplitude
        );
        if let Some(g) = f.coupling {
            let _ = write!(s, "  coupling {g:.6e} rad/t0");
        }
        if let Some(a) = f.area {
            let _ = write!(s, "  area {a:.6}");
        }
        let _ = write!(s, "  window {:.4}..{:.4} t0 ({:.4} us)", f.start, f.start + f.duration, f.duration_us);
        if let Some(c) = f.chirp {
            let _ = write!(s, "  chirp {c:.6} rad/t0");
        }
        let _ = writeln!(s, "  phase {:.6}", f.phase);
    }
    let last = |en| r.level_populations(en).pop().unwrap_or_default();
    let _ = writeln!(s, "final P(+)    {}", list(&last(Enantiomer::Plus)));
    let _ = writeln!(s, "final P(-)    {}", list(&last(Enantiomer::Minus)));
    let _ = writeln!(s, "final S       {}", list(&r.final_selectivity()));
    let _ = writeln!(s, "peak S        {:.6}", r.peak_selectivity());
    let st = r.stats();
    let _ = writeln!(s, "norm drift    {:.3e}", r.norm_drift());
    let _ = writeln!(s, "steps         {} accepted, {} rejected", st.accepted, st.rejected);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::threewave::{ground, propagate_pair, Envelope, Leg, Pulse, Shape};
    use std::f64::consts::PI;

    #[test]
    fn float_format() {
        assert_eq!(float(1.0), "1.00000000000e0");
        assert_eq!(float(-0.0), "0.00000000000e0");
        assert_eq!(float(119.29), "1.19290000000e2");
    }

    #[test]
    fn header_then_rows() {
        let mut t = Table::new(["a", "b"]);
        t.push_floats([1.0, 2.0]);
        t.push(vec!["x,y".into(), "z".into()]);
        assert_eq!(t.to_csv("hash=1\nunits"), "# hash=1 units\na,b\n1.00000000000e0,2.00000000000e0\n\"x,y\",z\n");
    }

    #[test]
    #[should_panic(expected = "row width")]
    fn ragged_rows_panic() {
        Table::new(["a"]).push(vec![]);
    }

    #[test]
    fn spectrum_rows() {
        let t = spectrum_table(&Molecule::builtin("menthol").unwrap(), 1).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.rows[0][7], float(0.0));
    }

    #[test]
    fn trajectory_columns() {
        let p = ThreeLevelParams::unit(PI / 2.0);
        let env = Envelope::new(Shape::Flat, 0.0, 1.0);
        let pair = propagate_pair(&p, &[Pulse::new(Leg::L12, env)], ground(), &[0.0, 0.5, 1.0]).unwrap();
        let t = trajectory_table(&pair);
        assert_eq!(t.columns.len(), 1 + 12 + 6 + 3);
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.columns[13], "P1+");
    }
}
