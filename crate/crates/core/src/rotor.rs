//! Rigid asymmetric-top structure.
//!
//! Each `J` block is diagonalized in the prolate symmetric-top basis with
//! the a axis along the molecule-fixed quantization axis (b along x, c
//! along y). Eigenvalues do not depend on `M`, so a [`RotState`] describes
//! all `2J+1` sublevels of a level at once.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::coupling::DipoleType;
use crate::error::{Error, Result};

/// MHz per cm^-1.
pub const MHZ_PER_WAVENUMBER: f64 = 29_979.245_8;

/// Environment variable naming an extra directory of molecule files.
pub const MOLECULE_DIR_ENV: &str = "CHIRALMIX_MOLECULE_DIR";

const BUILTIN: &[(&str, &str)] = &[
    ("menthol", include_str!("../data/molecules/menthol.toml")),
    ("carvone", include_str!("../data/molecules/carvone.toml")),
    ("hsoh", include_str!("../data/molecules/hsoh.toml")),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyUnit {
    #[serde(rename = "MHz")]
    MHz,
    #[serde(rename = "cm-1")]
    Wavenumber,
}

impl EnergyUnit {
    pub fn to_mhz(self, value: f64) -> f64 {
        match self {
            EnergyUnit::MHz => value,
            EnergyUnit::Wavenumber => value * MHZ_PER_WAVENUMBER,
        }
    }

    pub fn from_mhz(self, value: f64) -> f64 {
        match self {
            EnergyUnit::MHz => value,
            EnergyUnit::Wavenumber => value / MHZ_PER_WAVENUMBER,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            EnergyUnit::MHz => "MHz",
            EnergyUnit::Wavenumber => "cm-1",
        }
    }
}

impl FromStr for EnergyUnit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "MHz" | "mhz" => Ok(EnergyUnit::MHz),
            "cm-1" | "cm^-1" | "1/cm" => Ok(EnergyUnit::Wavenumber),
            other => Err(Error::InvalidMolecule(format!("unknown unit `{other}`"))),
        }
    }
}

/// Rotational constants in MHz.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationalConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl RotationalConstants {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::InvalidMolecule(format!("non-finite constants ({a}, {b}, {c})")));
        }
        if !(a >= b && b >= c && c > 0.0) {
            return Err(Error::InvalidMolecule(format!("constants must satisfy A >= B >= C > 0, got ({a}, {b}, {c})")));
        }
        Ok(RotationalConstants { a, b, c })
    }

    /// Ray's asymmetry parameter.
    pub fn kappa(&self) -> f64 {
        if self.a == self.c {
            return 0.0;
        }
        (2.0 * self.b - self.a - self.c) / (self.a - self.c)
    }
}

/// Molecule-fixed dipole components in Debye.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipoleComponents {
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub c: f64,
}

impl DipoleComponents {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        DipoleComponents { a, b, c }
    }

    pub fn get(&self, t: DipoleType) -> f64 {
        match t {
            DipoleType::A => self.a,
            DipoleType::B => self.b,
            DipoleType::C => self.c,
        }
    }

    fn validate(&self) -> Result<()> {
        if [self.a, self.b, self.c].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidMolecule(format!("dipole magnitudes must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }
}

/// One vibrational state with its own rotational constants.
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub label: String,
    /// Band origin in MHz.
    pub origin: f64,
    pub constants: RotationalConstants,
    /// Permanent dipole within this band.
    pub dipole: DipoleComponents,
}

/// Transition dipole between two bands.
#[derive(Clone, Debug, PartialEq)]
pub struct BandTransition {
    pub lower: usize,
    pub upper: usize,
    pub dipole: DipoleComponents,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Molecule {
    pub name: String,
    /// Unit used when the molecule was declared, kept for reporting.
    pub units: EnergyUnit,
    pub bands: Vec<Band>,
    pub transitions: Vec<BandTransition>,
}

impl Molecule {
    /// Single-band molecule.
    pub fn new(name: &str, constants: RotationalConstants, dipole: DipoleComponents) -> Result<Self> {
        dipole.validate()?;
        Ok(Molecule {
            name: name.to_string(),
            units: EnergyUnit::MHz,
            bands: vec![Band { label: "v0".into(), origin: 0.0, constants, dipole }],
            transitions: Vec::new(),
        })
    }

    /// Looks up `name` in [`MOLECULE_DIR_ENV`] first, then among the bundled
    /// species.
    pub fn load(name: &str) -> Result<Self> {
        if let Ok(dir) = std::env::var(MOLECULE_DIR_ENV) {
            if let Some(path) = find_in_dir(Path::new(&dir), name) {
                return Molecule::from_file(&path);
            }
        }
        Molecule::builtin(name)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let key = name.to_ascii_lowercase();
        BUILTIN
            .iter()
            .find(|(n, _)| *n == key)
            .ok_or_else(|| Error::UnknownMolecule(name.to_string()))
            .and_then(|(_, text)| Molecule::from_toml_str(text))
    }

    pub fn builtin_names() -> Vec<&'static str> {
        BUILTIN.iter().map(|(n, _)| *n).collect()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Molecule::from_toml_str(&text).map_err(|e| Error::InvalidMolecule(format!("{}: {e}", path.display())))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: MoleculeSpec = toml::from_str(text).map_err(|e| Error::InvalidMolecule(e.to_string()))?;
        spec.build()
    }

    pub fn ground(&self) -> &Band {
        &self.bands[0]
    }

    pub fn band_index(&self, label: &str) -> Option<usize> {
        self.bands.iter().position(|b| b.label == label)
    }

    /// Dipole connecting two bands: the permanent dipole within a band, the
    /// declared transition dipole across bands.
    pub fn dipole_between(&self, band1: usize, band2: usize) -> Option<DipoleComponents> {
        if band1 == band2 {
            return self.bands.get(band1).map(|b| b.dipole);
        }
        self.transitions
            .iter()
            .find(|t| (t.lower == band1 && t.upper == band2) || (t.lower == band2 && t.upper == band1))
            .map(|t| t.dipole)
    }

    pub fn eigenstates(&self, band: usize, j: i32) -> Result<Vec<RotState>> {
        let b = self
            .bands
            .get(band)
            .ok_or_else(|| Error::InvalidParams(format!("{} has no band {band}", self.name)))?;
        let mut states = eigenstates(&b.constants, j)?;
        for s in &mut states {
            s.band = band;
            s.energy += b.origin;
        }
        Ok(states)
    }

    /// Every level with `J <= jmax` in every band, ordered by band then
    /// energy.
    pub fn levels(&self, jmax: i32) -> Result<Vec<RotState>> {
        let mut out = Vec::new();
        for band in 0..self.bands.len() {
            let mut band_levels = Vec::new();
            for j in 0..=jmax {
                band_levels.extend(self.eigenstates(band, j)?);
            }
            band_levels.sort_by(|a, b| a.energy.total_cmp(&b.energy));
            out.extend(band_levels);
        }
        Ok(out)
    }

    pub fn find_level(&self, label: &LevelLabel) -> Result<RotState> {
        let band = match &label.band {
            Some(b) => self
                .band_index(b)
                .ok_or_else(|| Error::Config(format!("{} has no band `{b}`", self.name)))?,
            None => 0,
        };
        self.eigenstates(band, label.j)?
            .into_iter()
            .find(|s| s.ka == label.ka && s.kc == label.kc)
            .ok_or_else(|| Error::Config(format!("no level {label} in {}", self.name)))
    }
}

fn find_in_dir(dir: &Path, name: &str) -> Option<PathBuf> {
    let lower = name.to_ascii_lowercase();
    let entries = std::fs::read_dir(dir).ok()?;
    entries.filter_map(|e| e.ok()).map(|e| e.path()).find(|p| {
        p.extension().is_some_and(|x| x == "toml")
            && p.file_stem().and_then(|s| s.to_str()).is_some_and(|s| s.to_ascii_lowercase() == lower)
    })
}

/// On-disk molecule description.
///
/// Either top-level `constants` + `dipole` (one band) or a list of `band`
/// tables plus optional `transition` tables. A spec carrying only `name`
/// refers to the database.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoleculeSpec {
    pub name: String,
    #[serde(default)]
    pub units: Option<EnergyUnit>,
    #[serde(default)]
    pub constants: Option<ConstantsSpec>,
    #[serde(default)]
    pub dipole: Option<DipoleComponents>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub band: Vec<BandSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transition: Vec<TransitionSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSpec {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSpec {
    pub label: String,
    #[serde(default)]
    pub origin: f64,
    pub constants: ConstantsSpec,
    #[serde(default)]
    pub dipole: DipoleComponents,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionSpec {
    pub lower: String,
    pub upper: String,
    pub dipole: DipoleComponents,
}

impl MoleculeSpec {
    pub fn is_reference(&self) -> bool {
        self.constants.is_none() && self.dipole.is_none() && self.band.is_empty() && self.transition.is_empty()
    }

    /// Resolves a bare name through [`Molecule::load`], otherwise builds
    /// the inline description.
    pub fn resolve(&self) -> Result<Molecule> {
        if self.is_reference() {
            Molecule::load(&self.name)
        } else {
            self.build()
        }
    }

    pub fn build(&self) -> Result<Molecule> {
        let units = self.units.unwrap_or(EnergyUnit::MHz);
        let to_constants = |c: &ConstantsSpec| {
            RotationalConstants::new(units.to_mhz(c.a), units.to_mhz(c.b), units.to_mhz(c.c))
        };
        let mut bands = Vec::new();
        match (&self.constants, self.band.is_empty()) {
            (Some(c), true) => bands.push(Band {
                label: "v0".into(),
                origin: 0.0,
                constants: to_constants(c)?,
                dipole: self.dipole.unwrap_or_default(),
            }),
            (None, false) => {
                if self.dipole.is_some() {
                    return Err(Error::InvalidMolecule("top-level dipole is not allowed with bands".into()));
                }
                for b in &self.band {
                    if bands.iter().any(|x: &Band| x.label == b.label) {
                        return Err(Error::InvalidMolecule(format!("duplicate band `{}`", b.label)));
                    }
                    bands.push(Band {
                        label: b.label.clone(),
                        origin: units.to_mhz(b.origin),
                        constants: to_constants(&b.constants)?,
                        dipole: b.dipole,
                    });
                }
            }
            (Some(_), false) => {
                return Err(Error::InvalidMolecule("give either `constants` or `band` tables, not both".into()))
            }
            (None, true) => return Err(Error::InvalidMolecule(format!("`{}` declares no constants", self.name))),
        }
        for b in &bands {
            b.dipole.validate()?;
        }
        let mut transitions = Vec::new();
        for t in &self.transition {
            let find = |l: &str| {
                bands
                    .iter()
                    .position(|b| b.label == l)
                    .ok_or_else(|| Error::InvalidMolecule(format!("transition references unknown band `{l}`")))
            };
            t.dipole.validate()?;
            transitions.push(BandTransition { lower: find(&t.lower)?, upper: find(&t.upper)?, dipole: t.dipole });
        }
        Ok(Molecule { name: self.name.clone(), units, bands, transitions })
    }
}

/// Irreducible representations of D2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Irrep {
    A,
    Ba,
    Bb,
    Bc,
}

impl Irrep {
    /// (Ka parity, Kc parity) bits; the group product is XOR.
    fn bits(self) -> u8 {
        match self {
            Irrep::A => 0b00,
            Irrep::Ba => 0b01,
            Irrep::Bb => 0b11,
            Irrep::Bc => 0b10,
        }
    }

    fn from_bits(bits: u8) -> Irrep {
        match bits & 0b11 {
            0b00 => Irrep::A,
            0b01 => Irrep::Ba,
            0b11 => Irrep::Bb,
            _ => Irrep::Bc,
        }
    }

    pub fn product(self, other: Irrep) -> Irrep {
        Irrep::from_bits(self.bits() ^ other.bits())
    }

    /// Irrep of the dipole component along the given axis.
    pub fn of_dipole(t: DipoleType) -> Irrep {
        match t {
            DipoleType::A => Irrep::Ba,
            DipoleType::B => Irrep::Bb,
            DipoleType::C => Irrep::Bc,
        }
    }
}

impl fmt::Display for Irrep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Irrep::A => "A",
            Irrep::Ba => "Ba",
            Irrep::Bb => "Bb",
            Irrep::Bc => "Bc",
        };
        f.write_str(s)
    }
}

/// D2 irrep from the parities of `Ka` and `Kc`.
pub fn d2_irrep(ka: i32, kc: i32) -> Irrep {
    match (ka.rem_euclid(2), kc.rem_euclid(2)) {
        (0, 0) => Irrep::A,
        (0, _) => Irrep::Ba,
        (_, 0) => Irrep::Bc,
        _ => Irrep::Bb,
    }
}

/// `(Ka, Kc)` for the `tau_rank`-th level (1-based, ascending energy) of a
/// `J` block.
pub fn assign_ka_kc(j: i32, tau_rank: usize) -> (i32, i32) {
    debug_assert!(tau_rank >= 1 && tau_rank <= (2 * j + 1) as usize);
    let r = tau_rank as i32;
    (r / 2, j - (r - 1) / 2)
}

/// One asymmetric-top level `J_{KaKc}` with its symmetric-top expansion.
#[derive(Clone, Debug, PartialEq)]
pub struct RotState {
    pub band: usize,
    pub j: i32,
    /// 1-based energy rank within the `J` block.
    pub tau: usize,
    /// Energy in MHz, including the band origin.
    pub energy: f64,
    /// `c_K` for `K = -J..=J`, stored at index `K + J`.
    pub coeffs: Vec<f64>,
    pub ka: i32,
    pub kc: i32,
    pub irrep: Irrep,
}

impl RotState {
    pub fn coeff(&self, k: i32) -> f64 {
        if k.abs() > self.j {
            return 0.0;
        }
        self.coeffs[(k + self.j) as usize]
    }

    /// `J_KaKc`, e.g. `1_10`.
    pub fn label(&self) -> String {
        LevelLabel { j: self.j, ka: self.ka, kc: self.kc, band: None }.to_string()
    }

    pub fn same_level(&self, other: &RotState) -> bool {
        self.band == other.band && self.j == other.j && self.tau == other.tau
    }
}

/// Parsed `J_KaKc[@band]` label. Two-digit `K` values use `J_Ka_Kc`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LevelLabel {
    pub j: i32,
    pub ka: i32,
    pub kc: i32,
    pub band: Option<String>,
}

impl FromStr for LevelLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse level label `{s}` (expected J_KaKc or J_KaKc@band)"));
        let (rot, band) = match s.trim().split_once('@') {
            Some((r, b)) => (r, Some(b.to_string())),
            None => (s.trim(), None),
        };
        let parts: Vec<&str> = rot.split('_').collect();
        let parse = |x: &str| x.parse::<i32>().map_err(|_| bad());
        let (j, ka, kc) = match parts.as_slice() {
            [j, k] if k.len() == 2 => (parse(j)?, parse(&k[..1])?, parse(&k[1..])?),
            [j, ka, kc] => (parse(j)?, parse(ka)?, parse(kc)?),
            _ => return Err(bad()),
        };
        if j < 0 || ka < 0 || kc < 0 || ka > j || kc > j || !(ka + kc == j || ka + kc == j + 1) {
            return Err(bad());
        }
        Ok(LevelLabel { j, ka, kc, band })
    }
}

impl fmt::Display for LevelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ka > 9 || self.kc > 9 {
            write!(f, "{}_{}_{}", self.j, self.ka, self.kc)?;
        } else {
            write!(f, "{}_{}{}", self.j, self.ka, self.kc)?;
        }
        if let Some(b) = &self.band {
            write!(f, "@{b}")?;
        }
        Ok(())
    }
}

/// Rotational Hamiltonian of one `J` block in the basis `K = -J..=J`.
pub fn jblock_hamiltonian(constants: &RotationalConstants, j: i32) -> DMatrix<f64> {
    let n = (2 * j + 1) as usize;
    let jj = f64::from(j * (j + 1));
    let RotationalConstants { a, b, c } = *constants;
    let mut h = DMatrix::zeros(n, n);
    for k in -j..=j {
        let i = (k + j) as usize;
        let kf = f64::from(k);
        h[(i, i)] = 0.5 * (b + c) * (jj - kf * kf) + a * kf * kf;
        if k + 2 <= j {
            let f = (jj - kf * (kf + 1.0)).sqrt() * (jj - (kf + 1.0) * (kf + 2.0)).sqrt();
            let v = 0.25 * (b - c) * f;
            h[(i + 2, i)] = v;
            h[(i, i + 2)] = v;
        }
    }
    h
}

/// Energy-ordered eigenstates of one `J` block, band 0.
pub fn eigenstates(constants: &RotationalConstants, j: i32) -> Result<Vec<RotState>> {
    if j < 0 {
        return Err(Error::Domain(format!("negative J = {j}")));
    }
    let h = jblock_hamiltonian(constants, j);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diagonalization(format!("non-finite Hamiltonian for J = {j}")));
    }
    let eig = SymmetricEigen::try_new(h, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Diagonalization(format!("no convergence for J = {j}")))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));

    let mut out = Vec::with_capacity(order.len());
    for (rank, &idx) in order.iter().enumerate() {
        let mut coeffs: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
        coeffs.iter_mut().for_each(|c| *c /= norm);
        fix_sign(&mut coeffs);
        let tau = rank + 1;
        let (ka, kc) = assign_ka_kc(j, tau);
        out.push(RotState {
            band: 0,
            j,
            tau,
            energy: eig.eigenvalues[idx],
            coeffs,
            ka,
            kc,
            irrep: d2_irrep(ka, kc),
        });
    }
    Ok(out)
}

/// Largest-magnitude coefficient positive; near-ties go to the lowest K.
fn fix_sign(coeffs: &mut [f64]) {
    let max = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let pivot = coeffs.iter().position(|c| c.abs() >= max - 1e-9).unwrap_or(0);
    if coeffs[pivot] < 0.0 {
        coeffs.iter_mut().for_each(|c| *c = -*c);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn menthol() -> Molecule {
        Molecule::builtin("menthol").unwrap()
    }

    #[test]
    fn j0_block_is_zero() {
        let h = jblock_hamiltonian(&menthol().ground().constants, 0);
        assert_eq!(h.nrows(), 1);
        assert_eq!(h[(0, 0)], 0.0);
        let s = menthol().eigenstates(0, 0).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].energy, 0.0);
        assert_eq!(s[0].coeffs, vec![1.0]);
        assert_eq!(s[0].label(), "0_00");
        assert_eq!(s[0].irrep, Irrep::A);
    }

    #[test]
    fn menthol_j1_energies() {
        let m = menthol();
        let RotationalConstants { a, b, c } = m.ground().constants;
        let s = m.eigenstates(0, 1).unwrap();
        assert_abs_diff_eq!(s[0].energy, b + c, epsilon = 1e-9);
        assert_abs_diff_eq!(s[1].energy, a + c, epsilon = 1e-9);
        assert_abs_diff_eq!(s[2].energy, a + b, epsilon = 1e-9);
        assert_abs_diff_eq!(s[0].energy, 1265.97, epsilon = 1e-9);
        assert_abs_diff_eq!(s[1].energy, 2353.14, epsilon = 1e-9);
        assert_abs_diff_eq!(s[2].energy, 2472.43, epsilon = 1e-9);
        let labels: Vec<String> = s.iter().map(|x| x.label()).collect();
        assert_eq!(labels, ["1_01", "1_11", "1_10"]);
        assert_abs_diff_eq!(s[2].energy - s[1].energy, 119.29, epsilon = 1e-9);
        // 1_01 is pure K = 0
        assert_abs_diff_eq!(s[0].coeff(0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn carvone_and_hsoh_j1() {
        let c = Molecule::builtin("carvone").unwrap();
        let s = c.eigenstates(0, 1).unwrap();
        assert_abs_diff_eq!(s[2].energy - s[1].energy, 656.28 - 579.64, epsilon = 1e-9);

        let h = Molecule::builtin("hsoh").unwrap();
        let s = h.eigenstates(0, 1).unwrap();
        let e101 = EnergyUnit::Wavenumber.from_mhz(s[0].energy);
        assert_abs_diff_eq!(e101, 0.5097512033 + 0.4950163369, epsilon = 1e-9);
        assert_eq!(h.bands.len(), 2);
        assert!(h.dipole_between(0, 1).is_some());
    }

    #[test]
    fn ka_kc_assignment() {
        assert_eq!(assign_ka_kc(0, 1), (0, 0));
        assert_eq!(assign_ka_kc(1, 1), (0, 1));
        assert_eq!(assign_ka_kc(1, 2), (1, 1));
        assert_eq!(assign_ka_kc(1, 3), (1, 0));
        assert_eq!(assign_ka_kc(2, 5), (2, 0));
        for j in 0..6 {
            for t in 1..=(2 * j + 1) as usize {
                let (ka, kc) = assign_ka_kc(j, t);
                assert!(ka + kc == j || ka + kc == j + 1);
            }
        }
    }

    #[test]
    fn irreps() {
        assert_eq!(d2_irrep(0, 0), Irrep::A);
        assert_eq!(d2_irrep(0, 1), Irrep::Ba);
        assert_eq!(d2_irrep(1, 1), Irrep::Bb);
        assert_eq!(d2_irrep(1, 0), Irrep::Bc);
        assert_eq!(Irrep::Bc.product(Irrep::Bb), Irrep::Ba);
        assert_eq!(Irrep::Ba.product(Irrep::Ba), Irrep::A);
    }

    #[test]
    fn near_prolate_j2_order_matches_correlation() {
        let k = RotationalConstants::new(3000.0, 1000.0, 950.0).unwrap();
        let s = eigenstates(&k, 2).unwrap();
        let labels: Vec<String> = s.iter().map(|x| x.label()).collect();
        assert_eq!(labels, ["2_02", "2_12", "2_11", "2_21", "2_20"]);
        // the dominant |K| of each eigenvector is Ka in the prolate limit
        for st in &s {
            let dominant = (-2..=2).max_by(|&x, &y| st.coeff(x).abs().total_cmp(&st.coeff(y).abs())).unwrap();
            assert_eq!(dominant.abs(), st.ka);
        }
    }

    #[test]
    fn prolate_limit() {
        let k = RotationalConstants::new(2000.0, 700.0, 700.0).unwrap();
        for j in 0..5 {
            let s = eigenstates(&k, j).unwrap();
            let mut expected: Vec<f64> = (-j..=j)
                .map(|kk| 0.5 * 1400.0 * f64::from(j * (j + 1) - kk * kk) + 2000.0 * f64::from(kk * kk))
                .collect();
            expected.sort_by(f64::total_cmp);
            for (st, e) in s.iter().zip(&expected) {
                assert_abs_diff_eq!(st.energy, e, epsilon = 1e-8);
                // supported on a single |K|
                let support: Vec<i32> = (-j..=j).filter(|&kk| st.coeff(kk).abs() > 1e-8).map(i32::abs).collect();
                assert!(support.windows(2).all(|w| w[0] == w[1]), "{support:?}");
            }
        }
    }

    #[test]
    fn normalization_trace_and_sign() {
        let m = menthol();
        for j in 0..8 {
            let h = jblock_hamiltonian(&m.ground().constants, j);
            let s = m.eigenstates(0, j).unwrap();
            let sum: f64 = s.iter().map(|x| x.energy).sum();
            assert!((sum - h.trace()).abs() <= 1e-9 * h.trace().abs().max(1.0));
            for w in s.windows(2) {
                assert!(w[0].energy <= w[1].energy);
            }
            for st in &s {
                let n: f64 = st.coeffs.iter().map(|c| c * c).sum();
                assert_abs_diff_eq!(n, 1.0, epsilon = 1e-12);
                let max = st.coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
                let first = st.coeffs.iter().find(|c| c.abs() >= max - 1e-9).unwrap();
                assert!(*first > 0.0);
                assert_eq!(st.irrep, d2_irrep(st.ka, st.kc));
            }
        }
    }

    #[test]
    fn invalid_molecules() {
        assert!(RotationalConstants::new(1.0, 2.0, 0.5).is_err());
        assert!(RotationalConstants::new(2.0, 1.0, 0.0).is_err());
        assert!(RotationalConstants::new(f64::NAN, 1.0, 0.5).is_err());
        assert!(Molecule::builtin("unobtainium").is_err());
        let bad = "name = \"x\"\n[constants]\nA = 1.0\nB = 2.0\nC = 0.5\n";
        assert!(Molecule::from_toml_str(bad).is_err());
        let neg = "name = \"x\"\n[constants]\nA = 3.0\nB = 2.0\nC = 0.5\n[dipole]\na = -1.0\n";
        assert!(Molecule::from_toml_str(neg).is_err());
        let unknown = "name = \"x\"\nfoo = 1\n[constants]\nA = 3.0\nB = 2.0\nC = 0.5\n";
        assert!(Molecule::from_toml_str(unknown).is_err());
    }

    #[test]
    fn level_labels() {
        let l: LevelLabel = "1_10".parse().unwrap();
        assert_eq!((l.j, l.ka, l.kc), (1, 1, 0));
        let l: LevelLabel = "1_01@v1".parse().unwrap();
        assert_eq!(l.band.as_deref(), Some("v1"));
        assert_eq!(l.to_string(), "1_01@v1");
        let l: LevelLabel = "12_3_10".parse().unwrap();
        assert_eq!((l.j, l.ka, l.kc), (12, 3, 10));
        assert!("1_22".parse::<LevelLabel>().is_err());
        assert!("foo".parse::<LevelLabel>().is_err());
        let m = menthol();
        let s = m.find_level(&"1_11".parse().unwrap()).unwrap();
        assert_eq!(s.tau, 2);
    }
}
