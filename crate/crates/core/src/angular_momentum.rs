//! Wigner 3j symbols and symmetric-top matrix elements of `D^1_{MK}`.
//!
//! The 3j symbol is evaluated with the Racah single sum. For `j <= 20` the
//! square-root prefactor is kept as a prime factorization and the sum as an
//! exact rational, so the only rounding happens in the final conversion to
//! `f64`. Larger arguments fall back to a log-factorial evaluation.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `j` evaluated in exact arithmetic.
const EXACT_J_LIMIT_DOUBLED: i32 = 40;

/// An integer or half-integer, stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);

    pub const fn from_doubled(doubled: i32) -> Self {
        HalfInt(doubled)
    }

    pub const fn int(value: i32) -> Self {
        HalfInt(2 * value)
    }

    pub const fn doubled(self) -> i32 {
        self.0
    }

    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.0) / 2.0
    }
}

impl From<i32> for HalfInt {
    fn from(value: i32) -> Self {
        HalfInt::int(value)
    }
}

impl std::ops::Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// Linear polarization axis in the space-fixed frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    X,
    Y,
    Z,
}

impl Polarization {
    pub const ALL: [Polarization; 3] = [Polarization::X, Polarization::Y, Polarization::Z];

    /// `z` preserves M, `x` and `y` change it by one unit.
    pub fn is_transverse(self) -> bool {
        !matches!(self, Polarization::Z)
    }

    pub fn allows_delta_m(self, delta_m: i32) -> bool {
        match self {
            Polarization::Z => delta_m == 0,
            Polarization::X | Polarization::Y => delta_m.abs() == 1,
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Polarization::X => "x",
            Polarization::Y => "y",
            Polarization::Z => "z",
        };
        f.write_str(s)
    }
}

impl FromStr for Polarization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(Polarization::X),
            "y" => Ok(Polarization::Y),
            "z" => Ok(Polarization::Z),
            other => Err(Error::Config(format!("unknown polarization `{other}`"))),
        }
    }
}

/// Symmetric-top quantum numbers `|J, K, M>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AngularIndex {
    pub j: i32,
    pub k: i32,
    pub m: i32,
}

impl AngularIndex {
    pub fn new(j: i32, k: i32, m: i32) -> Result<Self> {
        if j < 0 || k.abs() > j || m.abs() > j {
            return Err(Error::Domain(format!("invalid |J K M> = |{j} {k} {m}>")));
        }
        Ok(AngularIndex { j, k, m })
    }
}

/// Wigner 3j symbol `(j1 j2 j3; m1 m2 m3)`.
pub fn wigner_3j(j1: HalfInt, j2: HalfInt, j3: HalfInt, m1: HalfInt, m2: HalfInt, m3: HalfInt) -> Result<f64> {
    let dj = [j1.doubled(), j2.doubled(), j3.doubled()];
    let dm = [m1.doubled(), m2.doubled(), m3.doubled()];
    for i in 0..3 {
        if dj[i] < 0 {
            return Err(Error::Domain(format!("negative j = {}", HalfInt(dj[i]))));
        }
        if dm[i].abs() > dj[i] {
            return Err(Error::Domain(format!("|m| > j for j = {}, m = {}", HalfInt(dj[i]), HalfInt(dm[i]))));
        }
        if (dj[i] - dm[i]) % 2 != 0 {
            return Err(Error::Domain(format!(
                "j = {} and m = {} differ by a half-integer",
                HalfInt(dj[i]),
                HalfInt(dm[i])
            )));
        }
    }
    Ok(wigner_3j_doubled(dj, dm))
}

/// Integer-argument convenience wrapper around [`wigner_3j`].
pub fn wigner_3j_int(j1: i32, j2: i32, j3: i32, m1: i32, m2: i32, m3: i32) -> Result<f64> {
    wigner_3j(j1.into(), j2.into(), j3.into(), m1.into(), m2.into(), m3.into())
}

/// Doubled `(j, m)` triples.
type Key = ([i32; 3], [i32; 3]);

thread_local! {
    static CACHE: RefCell<HashMap<Key, f64>> = RefCell::new(HashMap::new());
}

const CACHE_LIMIT: usize = 200_000;

/// Arguments already validated; values are doubled.
fn wigner_3j_doubled(dj: [i32; 3], dm: [i32; 3]) -> f64 {
    if dm[0] + dm[1] + dm[2] != 0 {
        return 0.0;
    }
    if (dj[0] + dj[1] + dj[2]) % 2 != 0 || dj[2] > dj[0] + dj[1] || dj[2] < (dj[0] - dj[1]).abs() {
        return 0.0;
    }
    if let Some(v) = CACHE.with(|c| c.borrow().get(&(dj, dm)).copied()) {
        return v;
    }
    let racah = RacahTerms::new(dj, dm);
    let value = if dj.iter().copied().max().unwrap_or(0) <= EXACT_J_LIMIT_DOUBLED {
        racah.exact()
    } else {
        racah.log_factorial()
    };
    CACHE.with(|c| {
        let mut c = c.borrow_mut();
        if c.len() >= CACHE_LIMIT {
            c.clear();
        }
        c.insert((dj, dm), value);
    });
    value
}

/// Integer ingredients of the Racah formula.
struct RacahTerms {
    sign: f64,
    /// Factorial arguments in the numerator of the squared prefactor.
    num: [u32; 9],
    /// `j1 + j2 + j3 + 1`, the denominator of the triangle coefficient.
    den: u32,
    kmin: i64,
    kmax: i64,
    /// Offsets such that the six sum denominators are `(k + off[i])!` for
    /// the first three and `(off[i] - k)!` for the last three.
    plus: [i64; 3],
    minus: [i64; 3],
}

impl RacahTerms {
    fn new(dj: [i32; 3], dm: [i32; 3]) -> Self {
        let h = |x: i32| -> i64 {
            debug_assert!(x % 2 == 0);
            i64::from(x / 2)
        };
        let (j1, j2, j3) = (dj[0], dj[1], dj[2]);
        let (m1, m2, m3) = (dm[0], dm[1], dm[2]);
        let tri = [h(j1 + j2 - j3), h(j1 - j2 + j3), h(-j1 + j2 + j3)];
        let jm = [h(j1 + m1), h(j1 - m1), h(j2 + m2), h(j2 - m2), h(j3 + m3), h(j3 - m3)];
        let num = [tri[0], tri[1], tri[2], jm[0], jm[1], jm[2], jm[3], jm[4], jm[5]].map(|v| v as u32);
        let den = (h(j1 + j2 + j3) + 1) as u32;

        // k!, (j3 - j2 + k + m1)!, (j3 - j1 + k - m2)!,
        // (j1 + j2 - j3 - k)!, (j1 - k - m1)!, (j2 - k + m2)!
        let plus = [0, h(j3 - j2 + m1), h(j3 - j1 - m2)];
        let minus = [h(j1 + j2 - j3), h(j1 - m1), h(j2 + m2)];
        let kmin = plus.iter().map(|&p| -p).max().unwrap().max(0);
        let kmax = *minus.iter().min().unwrap();

        let phase = h(j1 - j2 - m3);
        let sign = if phase.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        RacahTerms { sign, num, den, kmin, kmax, plus, minus }
    }

    fn exact(&self) -> f64 {
        // squared prefactor as prime exponents
        let top = self.num.iter().copied().max().unwrap_or(0).max(self.den) as usize;
        let primes = primes_up_to(top);
        let mut exps = vec![0i64; primes.len()];
        for &n in &self.num {
            add_factorial_exponents(&primes, &mut exps, n, 1);
        }
        add_factorial_exponents(&primes, &mut exps, self.den, -1);

        let mut sum = BigRational::zero();
        for k in self.kmin..=self.kmax {
            let mut d = BigInt::one();
            for &p in &self.plus {
                d *= factorial_big((k + p) as u32);
            }
            for &m in &self.minus {
                d *= factorial_big((m - k) as u32);
            }
            let term = BigRational::new(if k % 2 == 0 { BigInt::one() } else { -BigInt::one() }, d);
            sum += term;
        }
        if sum.is_zero() {
            return 0.0;
        }

        // sqrt(prod p^e) = prod p^(e div 2) * sqrt(prod p^(e mod 2))
        let mut scale_num = BigInt::one();
        let mut scale_den = BigInt::one();
        let mut radicand = 1.0f64;
        for (p, &e) in primes.iter().zip(&exps) {
            let half = e.div_euclid(2);
            let rest = e.rem_euclid(2);
            let pb = BigInt::from(*p);
            if half > 0 {
                scale_num *= num_traits::pow(pb.clone(), half as usize);
            } else if half < 0 {
                scale_den *= num_traits::pow(pb.clone(), (-half) as usize);
            }
            if rest == 1 {
                radicand *= *p as f64;
            }
        }
        let scaled = sum * BigRational::new(scale_num, scale_den);
        self.sign * scaled.to_f64().unwrap_or(f64::NAN) * radicand.sqrt()
    }

    fn log_factorial(&self) -> f64 {
        let mut log_pref = -ln_factorial(self.den);
        for &n in &self.num {
            log_pref += ln_factorial(n);
        }
        log_pref *= 0.5;
        let mut sum = 0.0;
        for k in self.kmin..=self.kmax {
            let mut ld = 0.0;
            for &p in &self.plus {
                ld += ln_factorial((k + p) as u32);
            }
            for &m in &self.minus {
                ld += ln_factorial((m - k) as u32);
            }
            let t = (log_pref - ld).exp();
            sum += if k % 2 == 0 { t } else { -t };
        }
        self.sign * sum
    }
}

fn primes_up_to(n: usize) -> Vec<u64> {
    if n < 2 {
        return Vec::new();
    }
    let mut sieve = vec![true; n + 1];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2;
    while i * i <= n {
        if sieve[i] {
            let mut j = i * i;
            while j <= n {
                sieve[j] = false;
                j += i;
            }
        }
        i += 1;
    }
    sieve.iter().enumerate().filter(|(_, &p)| p).map(|(i, _)| i as u64).collect()
}

/// Legendre's formula, accumulated with the given sign.
fn add_factorial_exponents(primes: &[u64], exps: &mut [i64], n: u32, sign: i64) {
    let n = u64::from(n);
    for (p, e) in primes.iter().zip(exps.iter_mut()) {
        if *p > n {
            break;
        }
        let mut q = n / p;
        let mut count = 0;
        while q > 0 {
            count += q as i64;
            q /= p;
        }
        *e += sign * count;
    }
}

fn factorial_big(n: u32) -> BigInt {
    (1..=u64::from(n)).fold(BigInt::one(), |acc, i| acc * i)
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|i| f64::from(i).ln()).sum()
}

/// `<J'' K'' M'' | D^1_{M K} | J' K' M'>` in the symmetric-top basis.
///
/// `m` and `k` label the D-function component and must lie in `{-1, 0, 1}`.
pub fn symtop_element(bra: AngularIndex, m: i32, k: i32, ket: AngularIndex) -> Result<f64> {
    if m.abs() > 1 || k.abs() > 1 {
        return Err(Error::Domain(format!("D^1 component ({m}, {k}) out of range")));
    }
    if bra.m != ket.m + m || bra.k != ket.k + k {
        return Ok(0.0);
    }
    let m3 = wigner_3j_int(ket.j, 1, bra.j, ket.m, m, -bra.m)?;
    if m3 == 0.0 {
        return Ok(0.0);
    }
    let k3 = wigner_3j_int(ket.j, 1, bra.j, ket.k, k, -bra.k)?;
    let phase = if (bra.m + bra.k).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let norm = (f64::from(2 * bra.j + 1) * f64::from(2 * ket.j + 1)).sqrt();
    Ok(norm * phase * m3 * k3)
}

/// Sign relating a transition element at `M > 0` to its mirror at `M < 0`
/// for a given `ΔJ` (0 or ±1) and polarization.
pub fn sigma_of_m_reflection(delta_j: i32, polarization: Polarization) -> i32 {
    debug_assert!(delta_j.abs() <= 1);
    let same_j = delta_j == 0;
    match (polarization, same_j) {
        (Polarization::Z, true) => -1,
        (Polarization::Z, false) => 1,
        (Polarization::X, true) => 1,
        (Polarization::X, false) => -1,
        (Polarization::Y, true) => -1,
        (Polarization::Y, false) => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn w(j1: i32, j2: i32, j3: i32, m1: i32, m2: i32, m3: i32) -> f64 {
        wigner_3j_int(j1, j2, j3, m1, m2, m3).unwrap()
    }

    #[test]
    fn identity_and_closed_forms() {
        assert_eq!(w(0, 0, 0, 0, 0, 0), 1.0);
        assert_abs_diff_eq!(w(1, 1, 0, 1, -1, 0), 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_eq!(w(1, 1, 1, 1, 1, 0), 0.0);
        // (j j 0; m -m 0) = (-1)^(j-m) / sqrt(2j+1)
        for j in 0..=8 {
            for m in -j..=j {
                let expected = if (j - m) % 2 == 0 { 1.0 } else { -1.0 } / f64::from(2 * j + 1).sqrt();
                assert_abs_diff_eq!(w(j, j, 0, m, -m, 0), expected, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn half_integer_values() {
        let h = HalfInt::from_doubled;
        // (1/2 1/2 1; 1/2 -1/2 0) = 1/sqrt(6)
        let v = wigner_3j(h(1), h(1), h(2), h(1), h(-1), h(0)).unwrap();
        assert_abs_diff_eq!(v, 1.0 / 6f64.sqrt(), epsilon = 1e-15);
        // (1/2 1/2 0; 1/2 -1/2 0) = 1/sqrt(2)
        let v = wigner_3j(h(1), h(1), h(0), h(1), h(-1), h(0)).unwrap();
        assert_abs_diff_eq!(v, 1.0 / 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn domain_errors() {
        assert!(wigner_3j_int(-1, 1, 1, 0, 0, 0).is_err());
        assert!(wigner_3j_int(1, 1, 1, 2, 0, -2).is_err());
        let h = HalfInt::from_doubled;
        assert!(wigner_3j(h(2), h(2), h(2), h(1), h(-1), h(0)).is_err());
    }

    #[test]
    fn large_j_uses_log_path_consistently() {
        // continuity across the exact/log boundary via the closed form
        for j in [19, 20, 21, 25] {
            let expected = 1.0 / f64::from(2 * j + 1).sqrt();
            assert_abs_diff_eq!(w(j, j, 0, 0, 0, 0).abs(), expected, epsilon = 1e-12);
        }
        let sum: f64 = (-22i32..=22)
            .flat_map(|m1| (-1..=1).map(move |m2| (m1, m2)))
            .filter(|(m1, m2)| (m1 + m2).abs() <= 22)
            .map(|(m1, m2)| {
                let v = w(22, 1, 22, m1, m2, -(m1 + m2));
                v * v
            })
            .sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn permutation_and_reflection_symmetry() {
        for j1 in 0i32..=5 {
            for j2 in 0i32..=5 {
                for j3 in (j1 - j2).abs()..=(j1 + j2).min(5) {
                    let odd = if (j1 + j2 + j3) % 2 == 0 { 1.0 } else { -1.0 };
                    for m1 in -j1..=j1 {
                        for m2 in -j2..=j2 {
                            let m3 = -m1 - m2;
                            if m3.abs() > j3 {
                                continue;
                            }
                            let v = w(j1, j2, j3, m1, m2, m3);
                            assert_abs_diff_eq!(w(j2, j3, j1, m2, m3, m1), v, epsilon = 1e-14);
                            assert_abs_diff_eq!(w(j3, j1, j2, m3, m1, m2), v, epsilon = 1e-14);
                            assert_abs_diff_eq!(w(j2, j1, j3, m2, m1, m3), odd * v, epsilon = 1e-14);
                            assert_abs_diff_eq!(w(j1, j2, j3, -m1, -m2, -m3), odd * v, epsilon = 1e-14);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn orthogonality() {
        for j1 in 0i32..=4 {
            for j2 in 0i32..=4 {
                for j3 in (j1 - j2).abs()..=(j1 + j2) {
                    for j3p in (j1 - j2).abs()..=(j1 + j2) {
                        for m3 in -j3..=j3 {
                            for m3p in -j3p..=j3p {
                                let mut s = 0.0;
                                for m1 in -j1..=j1 {
                                    for m2 in -j2..=j2 {
                                        if m1 + m2 + m3 != 0 || m1 + m2 + m3p != 0 {
                                            continue;
                                        }
                                        s += w(j1, j2, j3, m1, m2, m3) * w(j1, j2, j3p, m1, m2, m3p);
                                    }
                                }
                                let expected = if j3 == j3p && m3 == m3p { 1.0 } else { 0.0 };
                                assert_abs_diff_eq!(f64::from(2 * j3 + 1) * s, expected, epsilon = 1e-12);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn symtop_examples() {
        let ground = AngularIndex::new(0, 0, 0).unwrap();
        let e = symtop_element(AngularIndex::new(1, 0, 0).unwrap(), 0, 0, ground).unwrap();
        assert_abs_diff_eq!(e, 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        let e = symtop_element(AngularIndex::new(1, 0, 1).unwrap(), 0, 0, ground).unwrap();
        assert_eq!(e, 0.0);
        let e = symtop_element(AngularIndex::new(2, 0, 0).unwrap(), 0, 0, ground).unwrap();
        assert_eq!(e, 0.0);
        assert!(AngularIndex::new(1, 2, 0).is_err());
    }

    #[test]
    fn sigma_table() {
        use Polarization::*;
        assert_eq!(sigma_of_m_reflection(0, Z), -1);
        assert_eq!(sigma_of_m_reflection(1, Z), 1);
        assert_eq!(sigma_of_m_reflection(0, X), 1);
        assert_eq!(sigma_of_m_reflection(-1, X), -1);
        assert_eq!(sigma_of_m_reflection(0, Y), -1);
        assert_eq!(sigma_of_m_reflection(1, Y), 1);
    }

    /// The mirror relation of the D-function elements: reflecting every M
    /// (including the component index) multiplies the element by
    /// (-1)^(J'+J''+1), which together with the relative signs of the
    /// +1/-1 components in each polarization reproduces the sign table.
    #[test]
    fn symtop_mirror_relation() {
        for jp in 0..=3 {
            for jpp in (jp - 1).max(0)..=(jp + 1).min(3) {
                let parity = if (jp + jpp + 1) % 2 == 0 { 1.0 } else { -1.0 };
                let dj = jpp - jp;
                // z uses only the M = 0 component; x combines the +1/-1
                // components with opposite signs, y with equal signs
                assert_eq!(parity as i32, sigma_of_m_reflection(dj, Polarization::Z));
                assert_eq!(-parity as i32, sigma_of_m_reflection(dj, Polarization::X));
                assert_eq!(parity as i32, sigma_of_m_reflection(dj, Polarization::Y));
                for kp in -jp..=jp {
                    for mp in -jp..=jp {
                        for k in -1..=1 {
                            for m in -1..=1 {
                                let (kpp, mpp) = (kp + k, mp + m);
                                if kpp.abs() > jpp || mpp.abs() > jpp {
                                    continue;
                                }
                                let ket = AngularIndex::new(jp, kp, mp).unwrap();
                                let bra = AngularIndex::new(jpp, kpp, mpp).unwrap();
                                let ket_r = AngularIndex::new(jp, kp, -mp).unwrap();
                                let bra_r = AngularIndex::new(jpp, kpp, -mpp).unwrap();
                                let a = symtop_element(bra, m, k, ket).unwrap();
                                let b = symtop_element(bra_r, -m, k, ket_r).unwrap();
                                assert_abs_diff_eq!(a, parity * b, epsilon = 1e-14);
                            }
                        }
                    }
                }
            }
        }
    }
}
