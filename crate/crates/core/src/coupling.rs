//! Polarization-resolved dipole matrix elements between asymmetric-top
//! sublevels.
//!
//! The space-fixed projection `μ·e_p` is written as a sum of `D^1_{MK}`
//! functions times molecule-fixed components. With the a axis along the
//! symmetric-top quantization axis, b along x and c along y, every term is
//! a fixed complex coefficient; contracting with the two eigenvectors
//! gives the element.

use std::f64::consts::FRAC_1_SQRT_2 as S;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angular_momentum::{symtop_element, AngularIndex, Polarization};
use crate::error::{Error, Result};
use crate::rotor::{Irrep, Molecule, RotState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Enantiomer {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Enantiomer {
    pub const BOTH: [Enantiomer; 2] = [Enantiomer::Plus, Enantiomer::Minus];

    pub fn sign(self) -> f64 {
        match self {
            Enantiomer::Plus => 1.0,
            Enantiomer::Minus => -1.0,
        }
    }

    pub fn mirror(self) -> Enantiomer {
        match self {
            Enantiomer::Plus => Enantiomer::Minus,
            Enantiomer::Minus => Enantiomer::Plus,
        }
    }
}

impl fmt::Display for Enantiomer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Enantiomer::Plus => "+",
            Enantiomer::Minus => "-",
        })
    }
}

/// Principal axis carrying a dipole component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DipoleType {
    A,
    B,
    C,
}

impl DipoleType {
    pub const ALL: [DipoleType; 3] = [DipoleType::A, DipoleType::B, DipoleType::C];

    /// The component whose sign distinguishes the enantiomers.
    pub const FLIPPING: DipoleType = DipoleType::C;

    fn bit(self) -> u8 {
        match self {
            DipoleType::A => 1,
            DipoleType::B => 2,
            DipoleType::C => 4,
        }
    }
}

impl fmt::Display for DipoleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DipoleType::A => "a",
            DipoleType::B => "b",
            DipoleType::C => "c",
        })
    }
}

impl FromStr for DipoleType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(DipoleType::A),
            "b" => Ok(DipoleType::B),
            "c" => Ok(DipoleType::C),
            other => Err(Error::Config(format!("unknown dipole type `{other}`"))),
        }
    }
}

/// A subset of `{a, b, c}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct TypeSet(u8);

impl TypeSet {
    pub const EMPTY: TypeSet = TypeSet(0);
    pub const ALL: TypeSet = TypeSet(7);

    pub fn single(t: DipoleType) -> Self {
        TypeSet(t.bit())
    }

    pub fn contains(self, t: DipoleType) -> bool {
        self.0 & t.bit() != 0
    }

    pub fn insert(&mut self, t: DipoleType) {
        self.0 |= t.bit();
    }

    pub fn union(self, other: TypeSet) -> TypeSet {
        TypeSet(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = DipoleType> {
        DipoleType::ALL.into_iter().filter(move |t| self.contains(*t))
    }
}

impl FromIterator<DipoleType> for TypeSet {
    fn from_iter<I: IntoIterator<Item = DipoleType>>(iter: I) -> Self {
        let mut s = TypeSet::EMPTY;
        for t in iter {
            s.insert(t);
        }
        s
    }
}

impl fmt::Display for TypeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("-");
        }
        let s: String = self.iter().map(|t| t.to_string()).collect();
        f.write_str(&s)
    }
}

/// One `M` component of an asymmetric-top level.
#[derive(Clone, Copy, Debug)]
pub struct Sublevel<'a> {
    pub state: &'a RotState,
    pub m: i32,
}

impl<'a> Sublevel<'a> {
    pub fn new(state: &'a RotState, m: i32) -> Result<Self> {
        if m.abs() > state.j {
            return Err(Error::Domain(format!("|M| = {} exceeds J = {}", m.abs(), state.j)));
        }
        Ok(Sublevel { state, m })
    }

    pub fn mirrored(self) -> Self {
        Sublevel { state: self.state, m: -self.m }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarizedElement {
    /// `-<bra|μ·e_p|ket>` in Debye.
    pub value: Complex64,
    pub polarization: Polarization,
    pub types: TypeSet,
}

impl PolarizedElement {
    fn zero(polarization: Polarization) -> Self {
        PolarizedElement { value: Complex64::new(0.0, 0.0), polarization, types: TypeSet::EMPTY }
    }
}

type Term = (i32, i32, Complex64);

const fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

const fn im(x: f64) -> Complex64 {
    Complex64::new(0.0, x)
}

const Z_A: [Term; 1] = [(0, 0, re(1.0))];
const Z_B: [Term; 2] = [(0, 1, re(-S)), (0, -1, re(S))];
const Z_C: [Term; 2] = [(0, 1, im(S)), (0, -1, im(S))];
const X_A: [Term; 2] = [(-1, 0, re(S)), (1, 0, re(-S))];
const X_B: [Term; 4] = [(1, 1, re(0.5)), (1, -1, re(-0.5)), (-1, 1, re(-0.5)), (-1, -1, re(0.5))];
const X_C: [Term; 4] = [(1, 1, im(-0.5)), (1, -1, im(-0.5)), (-1, 1, im(0.5)), (-1, -1, im(0.5))];
const Y_A: [Term; 2] = [(1, 0, im(-S)), (-1, 0, im(-S))];
const Y_B: [Term; 4] = [(1, 1, im(0.5)), (1, -1, im(-0.5)), (-1, 1, im(0.5)), (-1, -1, im(-0.5))];
const Y_C: [Term; 4] = [(1, 1, re(0.5)), (1, -1, re(0.5)), (-1, 1, re(0.5)), (-1, -1, re(0.5))];

/// `D^1_{MK}` expansion of the space-fixed `pol` projection of the unit
/// vector along molecular axis `t`.
fn expansion(pol: Polarization, t: DipoleType) -> &'static [Term] {
    match (pol, t) {
        (Polarization::Z, DipoleType::A) => &Z_A,
        (Polarization::Z, DipoleType::B) => &Z_B,
        (Polarization::Z, DipoleType::C) => &Z_C,
        (Polarization::X, DipoleType::A) => &X_A,
        (Polarization::X, DipoleType::B) => &X_B,
        (Polarization::X, DipoleType::C) => &X_C,
        (Polarization::Y, DipoleType::A) => &Y_A,
        (Polarization::Y, DipoleType::B) => &Y_B,
        (Polarization::Y, DipoleType::C) => &Y_C,
    }
}

/// Dipole types allowed between two levels by `D2` symmetry.
pub fn transition_types(bra: &RotState, ket: &RotState) -> TypeSet {
    DipoleType::ALL
        .into_iter()
        .filter(|&t| bra.irrep.product(Irrep::of_dipole(t)).product(ket.irrep) == Irrep::A)
        .collect()
}

/// `-<bra|μ·e_pol|ket>` for one enantiomer.
pub fn transition_element(
    mol: &Molecule,
    en: Enantiomer,
    bra: Sublevel<'_>,
    ket: Sublevel<'_>,
    pol: Polarization,
) -> Result<PolarizedElement> {
    let dipole = mol.dipole_between(bra.state.band, ket.state.band).ok_or_else(|| {
        Error::Mismatch(format!(
            "{} declares no dipole between bands {} and {}",
            mol.name, bra.state.band, ket.state.band
        ))
    })?;
    let (jb, jk) = (bra.state.j, ket.state.j);
    if (jb - jk).abs() > 1 || (jb == 0 && jk == 0) || !pol.allows_delta_m(bra.m - ket.m) {
        return Ok(PolarizedElement::zero(pol));
    }
    let mut value = Complex64::new(0.0, 0.0);
    let mut types = TypeSet::EMPTY;
    for t in transition_types(bra.state, ket.state).iter() {
        let mut mu = dipole.get(t);
        if mu == 0.0 {
            continue;
        }
        if t == DipoleType::FLIPPING {
            mu *= en.sign();
        }
        let mut partial = Complex64::new(0.0, 0.0);
        for &(m, k, coef) in expansion(pol, t) {
            if bra.m != ket.m + m {
                continue;
            }
            for kk in -jk..=jk {
                let kb = kk + k;
                if kb.abs() > jb {
                    continue;
                }
                let cc = bra.state.coeff(kb) * ket.state.coeff(kk);
                if cc == 0.0 {
                    continue;
                }
                let s = symtop_element(
                    AngularIndex { j: jb, k: kb, m: bra.m },
                    m,
                    k,
                    AngularIndex { j: jk, k: kk, m: ket.m },
                )?;
                partial += coef * (cc * s);
            }
        }
        if partial.norm() > 1e-14 {
            types.insert(t);
            value -= partial * mu;
        }
    }
    Ok(PolarizedElement { value, polarization: pol, types })
}

/// Closed-loop product `H(s0,s1) H(s1,s2) H(s2,s0)`; leg `i` joins
/// `states[i]` and `states[(i+1) % 3]` with polarization `pols[i]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleProduct {
    pub value: Complex64,
    /// Legs whose element vanishes; any `true` means the cycle cannot close.
    pub vanishing: [bool; 3],
}

impl CycleProduct {
    pub fn closes(&self) -> bool {
        !self.vanishing.iter().any(|&v| v)
    }
}

pub fn cycle_product(
    mol: &Molecule,
    en: Enantiomer,
    states: [Sublevel<'_>; 3],
    pols: [Polarization; 3],
) -> Result<CycleProduct> {
    let mut value = Complex64::new(1.0, 0.0);
    let mut vanishing = [false; 3];
    for i in 0..3 {
        let e = transition_element(mol, en, states[i], states[(i + 1) % 3], pols[i])?;
        vanishing[i] = e.value.norm() < 1e-14;
        value *= e.value;
    }
    if vanishing.iter().any(|&v| v) {
        value = Complex64::new(0.0, 0.0);
    }
    Ok(CycleProduct { value, vanishing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular_momentum::sigma_of_m_reflection;
    use approx::assert_abs_diff_eq;

    fn levels(name: &str, jmax: i32) -> (Molecule, Vec<RotState>) {
        let m = Molecule::builtin(name).unwrap();
        let l = m.levels(jmax).unwrap();
        (m, l)
    }

    fn by_label<'a>(l: &'a [RotState], s: &str) -> &'a RotState {
        l.iter().find(|x| x.label() == s).unwrap()
    }

    fn el(m: &Molecule, en: Enantiomer, a: &RotState, ma: i32, b: &RotState, mb: i32, p: Polarization) -> Complex64 {
        transition_element(m, en, Sublevel { state: a, m: ma }, Sublevel { state: b, m: mb }, p).unwrap().value
    }

    #[test]
    fn menthol_a_type_z() {
        let (m, l) = levels("menthol", 1);
        let v = el(&m, Enantiomer::Plus, by_label(&l, "1_01"), 0, by_label(&l, "0_00"), 0, Polarization::Z);
        // -μ_a/√3 with the minus sign of -μ·E
        assert_abs_diff_eq!(v.re.abs(), 1.3 / 3f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn delta_m_rules() {
        let (m, l) = levels("menthol", 1);
        let g = by_label(&l, "0_00");
        for s in &l[1..] {
            for en in Enantiomer::BOTH {
                assert_eq!(el(&m, en, s, 1, g, 0, Polarization::Z), Complex64::new(0.0, 0.0));
                assert_eq!(el(&m, en, s, 0, g, 0, Polarization::X), Complex64::new(0.0, 0.0));
                assert_eq!(el(&m, en, s, 0, g, 0, Polarization::Y), Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn types_from_irreps() {
        let (_, l) = levels("menthol", 1);
        let g = by_label(&l, "0_00");
        assert_eq!(transition_types(g, by_label(&l, "1_01")), TypeSet::single(DipoleType::A));
        assert_eq!(transition_types(by_label(&l, "1_10"), by_label(&l, "1_11")), TypeSet::single(DipoleType::A));
        assert_eq!(transition_types(g, by_label(&l, "1_11")), TypeSet::single(DipoleType::B));
        assert_eq!(transition_types(g, by_label(&l, "1_10")), TypeSet::single(DipoleType::C));
        assert_eq!(transition_types(g, g), TypeSet::EMPTY);
    }

    #[test]
    fn c_type_flips_sign() {
        let (m, l) = levels("menthol", 1);
        let g = by_label(&l, "0_00");
        let s = by_label(&l, "1_10");
        for p in Polarization::ALL {
            for mm in -1..=1 {
                let a = el(&m, Enantiomer::Plus, s, mm, g, 0, p);
                let b = el(&m, Enantiomer::Minus, s, mm, g, 0, p);
                assert_abs_diff_eq!((a + b).norm(), 0.0, epsilon = 1e-15);
            }
        }
        assert!(el(&m, Enantiomer::Plus, s, 0, g, 0, Polarization::Z).norm() > 0.1);
    }

    #[test]
    fn hermitian_and_enantiomer_magnitudes() {
        for name in ["menthol", "carvone"] {
            let (m, l) = levels(name, 2);
            for a in &l {
                for b in &l {
                    for ma in -a.j..=a.j {
                        for mb in -b.j..=b.j {
                            for p in Polarization::ALL {
                                let plus = el(&m, Enantiomer::Plus, a, ma, b, mb, p);
                                let back = el(&m, Enantiomer::Plus, b, mb, a, ma, p);
                                assert_abs_diff_eq!((plus - back.conj()).norm(), 0.0, epsilon = 1e-12);
                                let minus = el(&m, Enantiomer::Minus, a, ma, b, mb, p);
                                assert_abs_diff_eq!(plus.norm(), minus.norm(), epsilon = 1e-12);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn allowed_types_obey_irrep_product() {
        let (m, l) = levels("carvone", 2);
        for a in &l {
            for b in &l {
                for p in Polarization::ALL {
                    for ma in -a.j..=a.j {
                        for mb in -b.j..=b.j {
                            let e = transition_element(
                                &m,
                                Enantiomer::Plus,
                                Sublevel { state: a, m: ma },
                                Sublevel { state: b, m: mb },
                                p,
                            )
                            .unwrap();
                            for t in e.types.iter() {
                                let g = a.irrep.product(Irrep::of_dipole(t)).product(b.irrep);
                                assert_eq!(g, Irrep::A);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn mirror_relation_matches_sigma() {
        let (m, l) = levels("menthol", 2);
        for a in &l {
            for b in &l {
                if (a.j - b.j).abs() > 1 {
                    continue;
                }
                for p in Polarization::ALL {
                    let sigma = f64::from(sigma_of_m_reflection(a.j - b.j, p));
                    for mb in -b.j..=b.j {
                        for dm in -1..=1 {
                            let ma = mb + dm;
                            if ma.abs() > a.j {
                                continue;
                            }
                            let fwd = el(&m, Enantiomer::Plus, a, ma, b, mb, p);
                            let rev = el(&m, Enantiomer::Plus, a, -ma, b, -mb, p);
                            assert_abs_diff_eq!((fwd - rev * sigma).norm(), 0.0, epsilon = 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn cycle_sign_relations() {
        let (m, l) = levels("menthol", 1);
        let g = by_label(&l, "0_00");
        let s1 = by_label(&l, "1_01");
        let s2 = by_label(&l, "1_11");
        // 0_00 -x- 1_01(M=1) -y- 1_11(M=0) -z- 0_00 : a(x), c(y), b(z)
        let pols = [Polarization::X, Polarization::Y, Polarization::Z];
        let mut found = false;
        for m1 in [-1, 1] {
            let st = [Sublevel { state: g, m: 0 }, Sublevel { state: s1, m: m1 }, Sublevel { state: s2, m: 0 }];
            let p = cycle_product(&m, Enantiomer::Plus, st, pols).unwrap();
            let q = cycle_product(&m, Enantiomer::Minus, st, pols).unwrap();
            if p.closes() {
                found = true;
                assert_abs_diff_eq!((p.value + q.value).norm(), 0.0, epsilon = 1e-14);
                let mirrored = st.map(Sublevel::mirrored);
                let r = cycle_product(&m, Enantiomer::Plus, mirrored, pols).unwrap();
                assert_abs_diff_eq!((p.value - r.value).norm(), 0.0, epsilon = 1e-14);
            }
        }
        assert!(found);
        let st = [Sublevel { state: g, m: 0 }, Sublevel { state: s1, m: 0 }, Sublevel { state: s2, m: 0 }];
        let p = cycle_product(&m, Enantiomer::Plus, st, pols).unwrap();
        assert!(!p.closes());
        assert_eq!(p.value, Complex64::new(0.0, 0.0));
    }
}
