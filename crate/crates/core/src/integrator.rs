//! Adaptive Dormand–Prince 5(4) integration of `i dψ/dt = H(t) ψ`.
//!
//! Steps are clipped to land exactly on every output time and on every
//! declared breakpoint (pulse edges), so output values are step endpoints
//! rather than interpolants.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step, in the same time unit as the grid.
    pub h_max: f64,
    pub h_min: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: 1e-12, atol: 1e-13, h_max: f64::INFINITY, h_min: 1e-14 }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<Complex64>>,
    pub stats: Stats,
}

impl Solution {
    /// Largest `| |ψ(t)|² - |ψ(t0)|² |` over the output grid.
    pub fn norm_drift(&self) -> f64 {
        let n0 = norm_sqr(&self.states[0]);
        self.states.iter().map(|s| (norm_sqr(s) - n0).abs()).fold(0.0, f64::max)
    }
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Right-hand side `f(t, y, dy)` writing `dy/dt` into `dy`.
pub trait Rhs {
    fn eval(&mut self, t: f64, y: &[Complex64], dy: &mut [Complex64]);
}

impl<F: FnMut(f64, &[Complex64], &mut [Complex64])> Rhs for F {
    fn eval(&mut self, t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        self(t, y, dy)
    }
}

/// Integrates from `grid[0]` with `y(grid[0]) = y0`, recording the state at
/// every grid time. `breakpoints` are additional times the integrator must
/// step onto without recording.
pub fn integrate<R: Rhs>(
    mut rhs: R,
    y0: &[Complex64],
    grid: &[f64],
    breakpoints: &[f64],
    tol: &Tolerances,
) -> Result<Solution> {
    if grid.is_empty() {
        return Err(Error::InvalidParams("empty output grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParams("output grid must be finite and strictly increasing".into()));
    }
    let n = y0.len();
    let t_end = *grid.last().unwrap();
    let mut stops: Vec<f64> = grid.iter().copied().chain(breakpoints.iter().copied().filter(|&b| b > grid[0] && b < t_end)).collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));

    let mut stats = Stats::default();
    let mut times = vec![grid[0]];
    let mut states = vec![y0.to_vec()];

    let zero = Complex64::new(0.0, 0.0);
    let mut k = vec![vec![zero; n]; 7];
    let mut y = y0.to_vec();
    let mut ytmp = vec![zero; n];
    let mut ynew = vec![zero; n];
    let mut t = grid[0];
    rhs.eval(t, &y, &mut k[0]);
    stats.evaluations += 1;

    let mut h = initial_step(&y, &k[0], tol, stops.get(1).map_or(0.0, |s| s - t));
    let mut next_grid = 1;
    let mut fsal_valid = true;

    for &stop in stops.iter().skip(1) {
        while t < stop {
            if !fsal_valid {
                rhs.eval(t, &y, &mut k[0]);
                stats.evaluations += 1;
                fsal_valid = true;
            }
            let remaining = stop - t;
            let mut hs = h.min(tol.h_max);
            let last = hs >= remaining * (1.0 - 1e-12);
            if last {
                hs = remaining;
            }
            if hs < tol.h_min && !last {
                return Err(Error::StepSizeUnderflow { t, h: hs });
            }
            let err = dp_step(&mut rhs, t, hs, &y, &mut k, &mut ytmp, &mut ynew, tol);
            stats.evaluations += 6;
            if err <= 1.0 {
                stats.accepted += 1;
                t = if last { stop } else { t + hs };
                std::mem::swap(&mut y, &mut ynew);
                k.swap(0, 6);
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || factor < 1.0 {
                    h = hs * factor;
                }
            } else {
                stats.rejected += 1;
                h = hs * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if h < tol.h_min {
                    return Err(Error::StepSizeUnderflow { t, h });
                }
            }
        }
        if next_grid < grid.len() && (stop - grid[next_grid]).abs() <= 1e-12 * stop.abs().max(1.0) {
            times.push(grid[next_grid]);
            states.push(y.clone());
            next_grid += 1;
        }
    }
    Ok(Solution { times, states, stats })
}

fn initial_step(y: &[Complex64], f: &[Complex64], tol: &Tolerances, span: f64) -> f64 {
    let scale = |v: &Complex64| tol.atol + tol.rtol * v.norm();
    let d0 = y.iter().map(|v| (v.norm() / scale(v)).powi(2)).sum::<f64>().sqrt();
    let d1 = f.iter().zip(y).map(|(fv, v)| (fv.norm() / scale(v)).powi(2)).sum::<f64>().sqrt();
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h = h.min(tol.h_max);
    if span > 0.0 {
        h.min(span)
    } else {
        h
    }
}

#[allow(clippy::too_many_arguments)]
fn dp_step<R: Rhs>(
    rhs: &mut R,
    t: f64,
    h: f64,
    y: &[Complex64],
    k: &mut [Vec<Complex64>],
    ytmp: &mut [Complex64],
    ynew: &mut [Complex64],
    tol: &Tolerances,
) -> f64 {
    let n = y.len();
    macro_rules! stage {
        ($dst:expr, $c:expr, [$(($a:expr, $i:expr)),*]) => {{
            for j in 0..n {
                ytmp[j] = y[j] + h * (Complex64::new(0.0, 0.0) $(+ k[$i][j] * $a)*);
            }
            let (head, tail) = k.split_at_mut($dst);
            let _ = head;
            rhs.eval(t + $c * h, ytmp, &mut tail[0]);
        }};
    }
    stage!(1, C2, [(A21, 0)]);
    stage!(2, C3, [(A31, 0), (A32, 1)]);
    stage!(3, C4, [(A41, 0), (A42, 1), (A43, 2)]);
    stage!(4, C5, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
    stage!(5, 1.0, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
    for j in 0..n {
        ynew[j] = y[j] + h * (k[0][j] * B1 + k[2][j] * B3 + k[3][j] * B4 + k[4][j] * B5 + k[5][j] * B6);
    }
    {
        let (head, tail) = k.split_at_mut(6);
        let _ = head;
        rhs.eval(t + h, ynew, &mut tail[0]);
    }
    let mut acc = 0.0;
    for j in 0..n {
        let e = h * (k[0][j] * E1 + k[2][j] * E3 + k[3][j] * E4 + k[4][j] * E5 + k[5][j] * E6 + k[6][j] * E7);
        let sc = tol.atol + tol.rtol * y[j].norm().max(ynew[j].norm());
        acc += (e.norm() / sc).powi(2);
    }
    (acc / n as f64).sqrt()
}
