//! Three-level cycles in a rotational ladder and their enantio-selectivity.
//!
//! [`classify`] applies the symmetry rules: a cycle survives averaging over
//! `M` only when its legs carry all three dipole types and all three
//! polarizations and an even number of legs change sign under `M → -M`.
//! [`verify_by_m_average`] checks the same verdict by brute force from the
//! assembled matrix elements.

use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use crate::angular_momentum::{sigma_of_m_reflection, wigner_3j_int, Polarization};
use crate::coupling::{cycle_product, transition_types, DipoleType, Enantiomer, Sublevel, TypeSet};
use crate::error::Result;
use crate::rotor::{Molecule, RotState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Selective,
    NonSelective,
    /// No `M` realization closes the loop.
    Forbidden,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Selective => "selective",
            Verdict::NonSelective => "non-selective",
            Verdict::Forbidden => "forbidden",
        })
    }
}

/// Leg `i` joins `levels[i]` and `levels[(i + 1) % 3]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleLeg {
    pub polarization: Polarization,
    /// `J` of the far end minus `J` of the near end.
    pub delta_j: i32,
    pub types: TypeSet,
    /// Sign picked up under `M → -M`.
    pub sigma: i32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleCandidate {
    pub levels: [RotState; 3],
    pub legs: [CycleLeg; 3],
    names: [String; 3],
}

impl CycleCandidate {
    pub fn new(mol: &Molecule, levels: [RotState; 3], pols: [Polarization; 3]) -> Self {
        let legs = std::array::from_fn(|i| {
            let (a, b) = (&levels[i], &levels[(i + 1) % 3]);
            let delta_j = b.j - a.j;
            CycleLeg {
                polarization: pols[i],
                delta_j,
                types: leg_types(mol, a, b),
                sigma: if delta_j.abs() <= 1 { sigma_of_m_reflection(delta_j, pols[i]) } else { 0 },
            }
        });
        let names = std::array::from_fn(|i| level_name(mol, &levels[i]));
        CycleCandidate { levels, legs, names }
    }

    pub fn polarizations(&self) -> [Polarization; 3] {
        self.legs.map(|l| l.polarization)
    }

    pub fn labels(&self) -> [String; 3] {
        self.names.clone()
    }

    /// Same cycle starting from the next level.
    pub fn rotated(&self, mol: &Molecule) -> Self {
        let l = &self.levels;
        let p = self.polarizations();
        CycleCandidate::new(mol, [l[1].clone(), l[2].clone(), l[0].clone()], [p[1], p[2], p[0]])
    }

    /// Same cycle traversed backwards.
    pub fn reversed(&self, mol: &Molecule) -> Self {
        let l = &self.levels;
        let p = self.polarizations();
        CycleCandidate::new(mol, [l[0].clone(), l[2].clone(), l[1].clone()], [p[2], p[1], p[0]])
    }

    pub fn sigma_pattern(&self) -> String {
        self.legs.iter().map(|l| if l.sigma < 0 { '-' } else { '+' }).collect()
    }

    /// Every assignment of `M` to the three levels allowed by the
    /// polarization rules on all legs.
    pub fn m_realizations(&self) -> Vec<[i32; 3]> {
        let [a, b, c] = [self.levels[0].j, self.levels[1].j, self.levels[2].j];
        let mut out = Vec::new();
        for m0 in -a..=a {
            for m1 in -b..=b {
                for m2 in -c..=c {
                    let ms = [m0, m1, m2];
                    if (0..3).all(|i| self.legs[i].polarization.allows_delta_m(ms[(i + 1) % 3] - ms[i])) {
                        out.push(ms);
                    }
                }
            }
        }
        out
    }
}

fn level_name(mol: &Molecule, s: &RotState) -> String {
    if mol.bands.len() == 1 {
        s.label()
    } else {
        format!("{}@{}", s.label(), mol.bands[s.band].label)
    }
}

/// Dipole types that both symmetry and the molecule's dipole allow.
fn leg_types(mol: &Molecule, a: &RotState, b: &RotState) -> TypeSet {
    let Some(d) = mol.dipole_between(a.band, b.band) else {
        return TypeSet::EMPTY;
    };
    if (a.j - b.j).abs() > 1 || (a.j == 0 && b.j == 0) {
        return TypeSet::EMPTY;
    }
    transition_types(a, b).iter().filter(|&t| d.get(t) != 0.0).collect()
}

/// All triangles of distinct levels with `J <= jmax` whose three legs are
/// dipole allowed, each with every polarization triple.
pub fn enumerate_cycles(mol: &Molecule, jmax: i32) -> Result<Vec<CycleCandidate>> {
    let levels = mol.levels(jmax)?;
    let n = levels.len();
    let allowed = |i: usize, j: usize| !leg_types(mol, &levels[i], &levels[j]).is_empty();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if !allowed(i, j) {
                continue;
            }
            for k in j + 1..n {
                if !(allowed(j, k) && allowed(k, i)) {
                    continue;
                }
                for p0 in Polarization::ALL {
                    for p1 in Polarization::ALL {
                        for p2 in Polarization::ALL {
                            out.push(CycleCandidate::new(
                                mol,
                                [levels[i].clone(), levels[j].clone(), levels[k].clone()],
                                [p0, p1, p2],
                            ));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Whether some `M` assignment makes every leg's orientation factor
/// nonzero.
fn m_realizable(c: &CycleCandidate) -> bool {
    c.m_realizations().iter().any(|ms| {
        (0..3).all(|i| {
            let (ja, jb) = (c.levels[i].j, c.levels[(i + 1) % 3].j);
            let (ma, mb) = (ms[i], ms[(i + 1) % 3]);
            wigner_3j_int(ja, 1, jb, ma, mb - ma, -mb).is_ok_and(|v| v != 0.0)
        })
    })
}

pub fn classify(candidate: &CycleCandidate) -> Verdict {
    if candidate.legs.iter().any(|l| l.types.is_empty() || l.delta_j.abs() > 1) || !m_realizable(candidate) {
        return Verdict::Forbidden;
    }
    let types = candidate.legs.iter().fold(TypeSet::EMPTY, |acc, l| acc.union(l.types));
    let all_types = DipoleType::ALL.iter().all(|t| types.contains(*t));
    let pols = candidate.polarizations();
    let all_pols = Polarization::ALL.iter().all(|p| pols.contains(p));
    let flips = candidate.legs.iter().filter(|l| l.sigma < 0).count();
    if all_types && all_pols && flips % 2 == 0 {
        Verdict::Selective
    } else {
        Verdict::NonSelective
    }
}

/// Cycle products summed over every `M` realization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MAverage {
    pub plus: Complex64,
    pub minus: Complex64,
    /// `Σ_M |product(+)|`, the scale for the relative threshold.
    pub unsigned: f64,
    pub realizations: usize,
}

impl MAverage {
    /// `|Σ_M [product(+) - product(-)]|`.
    pub fn differential(&self) -> f64 {
        (self.plus - self.minus).norm()
    }

    pub fn is_selective(&self) -> bool {
        self.unsigned > 0.0 && self.differential() > 1e-10 * self.unsigned
    }
}

pub fn verify_by_m_average(mol: &Molecule, candidate: &CycleCandidate) -> Result<MAverage> {
    let mut acc = MAverage {
        plus: Complex64::new(0.0, 0.0),
        minus: Complex64::new(0.0, 0.0),
        unsigned: 0.0,
        realizations: 0,
    };
    let pols = candidate.polarizations();
    for ms in candidate.m_realizations() {
        let subs: [Sublevel<'_>; 3] = std::array::from_fn(|i| Sublevel { state: &candidate.levels[i], m: ms[i] });
        let p = cycle_product(mol, Enantiomer::Plus, subs, pols)?;
        if !p.closes() {
            continue;
        }
        let q = cycle_product(mol, Enantiomer::Minus, subs, pols)?;
        acc.plus += p.value;
        acc.minus += q.value;
        acc.unsigned += p.value.norm();
        acc.realizations += 1;
    }
    Ok(acc)
}

/// One line of a cycle report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub levels: [String; 3],
    pub polarizations: String,
    pub types: String,
    pub sigma: String,
    pub verdict: Verdict,
    pub m_average: f64,
    pub agrees: bool,
}

pub fn report(mol: &Molecule, jmax: i32) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for c in enumerate_cycles(mol, jmax)? {
        let verdict = classify(&c);
        let avg = verify_by_m_average(mol, &c)?;
        let brute = if avg.realizations == 0 {
            Verdict::Forbidden
        } else if avg.is_selective() {
            Verdict::Selective
        } else {
            Verdict::NonSelective
        };
        rows.push(ReportRow {
            levels: c.labels(),
            polarizations: c.polarizations().iter().map(|p| p.to_string()).collect(),
            types: c.legs.iter().map(|l| l.types.to_string()).collect(),
            sigma: c.sigma_pattern(),
            verdict,
            m_average: avg.differential(),
            agrees: brute == verdict,
        });
    }
    Ok(rows)
}
