//! Two-priority assignment by alternating minimisation.
//!
//! The rate vector `a` is split into `x` (served under `p1` during the first
//! half of each block) and `a - x` (served under `p2` during the second
//! half). The objective is
//! `t = 2 * max(||P1 x||_inf, ||P2 (a - x)||_inf)`; `t < 1` certifies that the
//! split is stabilisable with equal halves.
//!
//! Each iteration first picks the best priority vector for each half with
//! `x` fixed, then re-solves for `x` with both priorities fixed by linear
//! programming. Neither step can raise `t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{check_rates, ConflictGraph, IncidenceMatrix, PriorityVector};
use crate::lp::{lp_solve, LinearProgram};
use crate::scheduling::SpParams;
use crate::stability::min_norm_priority;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_RESTARTS: usize = 16;

/// Box tolerance for `0 <= x <= a`.
const BOX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EmState {
    pub x: Vec<f64>,
    pub p1: PriorityVector,
    pub p2: PriorityVector,
    pub t: f64,
    /// Objective after every step: E-step and M-step values alternate.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Start index: 0 for the configured start, `r` for the `r`-th restart.
    pub start: usize,
}

impl EmState {
    /// `t < 1`.
    pub fn stable(&self) -> bool {
        self.t < 1.0
    }

    /// Largest increase between consecutive trace entries (0 for a
    /// non-increasing trace).
    pub fn max_increase(&self) -> f64 {
        self.trace
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Rates of the second class, `a - x`.
    pub fn complement(&self, a: &[f64]) -> Vec<f64> {
        complement(a, &self.x)
    }
}

/// Starting split.
#[derive(Debug, Clone, PartialEq)]
pub enum EmInit {
    Half,
    /// `x_i = u_i a_i` with `u_i` uniform on `[0, 1)`.
    Random(u64),
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub init: EmInit,
    /// Extra runs from random starts seeded `seed + 1, seed + 2, ...`.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            init: EmInit::Half,
            restarts: DEFAULT_RESTARTS,
            seed: 0,
        }
    }
}

fn complement(a: &[f64], x: &[f64]) -> Vec<f64> {
    a.iter().zip(x).map(|(ai, xi)| (ai - xi).max(0.0)).collect()
}

fn check_split(a: &[f64], x: &[f64]) -> Result<()> {
    if x.len() != a.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: x.len(),
        });
    }
    for (i, (&xi, &ai)) in x.iter().zip(a).enumerate() {
        if !xi.is_finite() || xi < -BOX_TOL || xi > ai + BOX_TOL {
            return Err(Error::InvalidParameter(format!(
                "split x_{} = {xi} outside [0, {ai}]",
                i + 1
            )));
        }
    }
    Ok(())
}

fn clamp_split(a: &[f64], x: &mut [f64]) {
    for (xi, &ai) in x.iter_mut().zip(a) {
        *xi = xi.clamp(0.0, ai);
    }
}

fn norm(pm: &IncidenceMatrix, v: &[f64]) -> f64 {
    pm.apply(v).into_iter().fold(0.0, f64::max)
}

/// `2 * max(||P1 x||, ||P2 (a - x)||)`.
pub fn objective(
    g: &ConflictGraph,
    p1: &PriorityVector,
    p2: &PriorityVector,
    a: &[f64],
    x: &[f64],
) -> Result<f64> {
    check_rates(g.n(), a)?;
    check_split(a, x)?;
    let m1 = IncidenceMatrix::new(g, p1)?;
    let m2 = IncidenceMatrix::new(g, p2)?;
    Ok(2.0 * norm(&m1, x).max(norm(&m2, &complement(a, x))))
}

/// Best priority for each half with the split fixed. Returns `p1`, `p2` and
/// `max(min ||P1 x||, min ||P2 (a - x)||)`.
pub fn e_step(g: &ConflictGraph, x: &[f64], a: &[f64]) -> Result<(PriorityVector, PriorityVector, f64)> {
    check_rates(g.n(), a)?;
    check_split(a, x)?;
    let mut x = x.to_vec();
    clamp_split(a, &mut x);
    let (p1, v1) = min_norm_priority(g, &x)?;
    let (p2, v2) = min_norm_priority(g, &complement(a, &x))?;
    Ok((p1, p2, v1.max(v2)))
}

/// Best split with both priorities fixed:
/// `min t` s.t. `P1 x <= t/2`, `P2 (a - x) <= t/2`, `0 <= x <= a`.
/// Returns `x` and the optimal `t`.
pub fn m_step(
    g: &ConflictGraph,
    p1: &PriorityVector,
    p2: &PriorityVector,
    a: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let n = g.n();
    check_rates(n, a)?;
    let m1 = IncidenceMatrix::new(g, p1)?;
    let m2 = IncidenceMatrix::new(g, p2)?;
    let d1 = m1.to_dense();
    let d2 = m2.to_dense();
    let pa = m2.apply(a);

    // Variables: x_1..x_n, t.
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut lp = LinearProgram::new(n + 1).minimize(c);
    for i in 0..n {
        let mut row: Vec<f64> = d1[i].iter().map(|&v| v as f64).collect();
        row.push(-0.5);
        lp = lp.le(row, 0.0);
    }
    for i in 0..n {
        let mut row: Vec<f64> = d2[i].iter().map(|&v| -(v as f64)).collect();
        row.push(-0.5);
        lp = lp.le(row, -pa[i]);
    }
    for (i, &ai) in a.iter().enumerate() {
        lp = lp.bounds(i, 0.0, ai);
    }
    let sol = lp_solve(&lp)?;
    let mut x = sol.z[..n].to_vec();
    clamp_split(a, &mut x);
    Ok((x, sol.value.max(0.0)))
}

/// One run of alternating minimisation from the split `x0`.
pub fn em_from(g: &ConflictGraph, a: &[f64], x0: Vec<f64>, tol: f64, max_iter: usize) -> Result<EmState> {
    check_rates(g.n(), a)?;
    check_split(a, &x0)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
    }
    let mut x = x0;
    clamp_split(a, &mut x);
    let mut trace = Vec::with_capacity(2 * max_iter);
    let mut current: Option<(PriorityVector, PriorityVector, f64)> = None;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        let (mut p1, mut p2, half) = e_step(g, &x, a)?;
        let mut t_e = 2.0 * half;
        // Keep the previous priorities if rounding made the new pair look
        // worse than the split's current value.
        if let Some((q1, q2, t_prev)) = &current {
            if t_e > *t_prev {
                p1 = q1.clone();
                p2 = q2.clone();
                t_e = *t_prev;
            }
        }
        trace.push(t_e);

        let (x_new, _) = m_step(g, &p1, &p2, a)?;
        let t_new = objective(g, &p1, &p2, a, &x_new)?;
        let t_m = if t_new <= t_e {
            x = x_new;
            t_new
        } else {
            t_e
        };
        trace.push(t_m);

        let baseline = current.as_ref().map_or(t_e, |c| c.2);
        current = Some((p1, p2, t_m));
        if (t_m - baseline).abs() < tol {
            converged = true;
            break;
        }
    }
    let (p1, p2, t) = current.expect("at least one iteration ran");
    Ok(EmState {
        x,
        p1,
        p2,
        t,
        trace,
        iterations,
        converged,
        start: 0,
    })
}

fn random_split(a: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    a.iter().map(|&ai| rng.gen::<f64>() * ai).collect()
}

/// Alternating minimisation with optional random restarts; the run with the
/// smallest final `t` wins, earliest start on ties.
pub fn em_assign(g: &ConflictGraph, a: &[f64], opts: &EmOptions) -> Result<EmState> {
    check_rates(g.n(), a)?;
    let first = match &opts.init {
        EmInit::Half => a.iter().map(|v| v / 2.0).collect(),
        EmInit::Random(seed) => random_split(a, *seed),
        EmInit::Given(x) => x.clone(),
    };
    let mut starts = vec![first];
    starts.extend((1..=opts.restarts as u64).map(|r| random_split(a, opts.seed.wrapping_add(r))));
    let runs: Vec<EmState> = starts
        .into_par_iter()
        .enumerate()
        .map(|(i, x0)| {
            em_from(g, a, x0, opts.tol, opts.max_iter).map(|mut s| {
                s.start = i;
                s
            })
        })
        .collect::<Result<_>>()?;
    Ok(runs
        .into_iter()
        .reduce(|best, s| if s.t < best.t { s } else { best })
        .expect("at least one start"))
}

/// Two-class parameters from an EM result: equal halves, `x` under `p1`
/// and `a - x` under `p2`.
pub fn sp_params_from_em(state: &EmState, a: &[f64], block: u64) -> Result<SpParams> {
    SpParams::new(
        vec![0.5, 0.5],
        vec![state.p1.clone(), state.p2.clone()],
        vec![state.x.clone(), state.complement(a)],
        block,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LinkSet;
    use crate::stability::{set_lowest_priority, sp_condition};

    fn ring6() -> ConflictGraph {
        ConflictGraph::ring(6).unwrap()
    }

    fn single() -> ConflictGraph {
        ConflictGraph::new(1, &[]).unwrap()
    }

    #[test]
    fn e_step_examples() {
        let a = [0.45; 6];
        let x = [0.45, 0.0, 0.45, 0.0, 0.45, 0.0];
        let (_, _, v) = e_step(&ring6(), &x, &a).unwrap();
        assert!((v - 0.45).abs() < 1e-15);

        let a = [0.3, 0.4, 0.3, 0.4, 0.3, 0.4];
        let (_, _, v) = e_step(&ring6(), &[0.0; 6], &a).unwrap();
        assert_eq!(v, min_norm_priority(&ring6(), &a).unwrap().1);

        let (_, _, v) = e_step(&single(), &[0.4], &[0.8]).unwrap();
        assert_eq!(v, 0.4);

        assert!(e_step(&single(), &[0.9], &[0.8]).is_err());
    }

    #[test]
    fn m_step_examples() {
        let p = PriorityVector::identity(1);
        let (x, t) = m_step(&single(), &p, &p, &[0.8]).unwrap();
        assert!((x[0] - 0.4).abs() < 1e-12 && (t - 0.8).abs() < 1e-12);

        let p = PriorityVector::identity(6);
        let (x, t) = m_step(&ring6(), &p, &p, &[0.0; 6]).unwrap();
        assert_eq!(x, vec![0.0; 6]);
        assert_eq!(t, 0.0);

        let odd = LinkSet::from_links([1, 3, 5]);
        let even = LinkSet::from_links([2, 4, 6]);
        let (x, t) = m_step(
            &ring6(),
            &set_lowest_priority(6, odd),
            &set_lowest_priority(6, even),
            &[0.45; 6],
        )
        .unwrap();
        assert!((t - 0.9).abs() < 1e-9, "t = {t}");
        for (xi, e) in x.iter().zip(odd.indicator(6)) {
            assert!((xi - 0.45 * e).abs() < 1e-9, "{x:?}");
        }
    }

    #[test]
    fn em_examples() {
        let opts = EmOptions::default();
        let s = em_assign(&ring6(), &[0.0; 6], &opts).unwrap();
        assert_eq!(s.t, 0.0);
        assert_eq!(s.iterations, 1);
        assert!(s.converged);

        let s = em_assign(&single(), &[0.8], &opts).unwrap();
        assert!((s.t - 0.8).abs() < 1e-12);
        assert!((s.trace[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn ring6_reaches_odd_even_split() {
        let a = [0.45; 6];
        let s = em_assign(&ring6(), &a, &EmOptions::default()).unwrap();
        assert!(s.t <= 0.9 + 1e-6, "t = {} trace {:?}", s.t, s.trace);
        assert!(s.max_increase() <= 1e-9);
        let params = sp_params_from_em(&s, &a, 100).unwrap();
        assert!(sp_condition(&ring6(), &params).unwrap().member);
    }

    #[test]
    fn half_start_stalls_without_restarts() {
        // p1 = p2 at x = a/2, and the M-step cannot separate them.
        let s = em_from(&ring6(), &[0.45; 6], vec![0.225; 6], 1e-6, 100).unwrap();
        assert!((s.t - 1.35).abs() < 1e-12);
        assert_eq!(s.iterations, 1);
    }

    #[test]
    fn trace_is_monotone_from_random_starts() {
        let a = [0.2, 0.5, 0.1, 0.4, 0.3, 0.35];
        for seed in 0..10 {
            let s = em_from(&ring6(), &a, random_split(&a, seed), 1e-9, 50).unwrap();
            assert!(s.max_increase() <= 1e-9, "{:?}", s.trace);
            let recomputed = objective(&ring6(), &s.p1, &s.p2, &a, &s.x).unwrap();
            assert!((recomputed - s.t).abs() <= 1e-12);
        }
    }

    #[test]
    fn restart_choice_is_deterministic() {
        let a = [0.48; 6];
        let opts = EmOptions {
            seed: 7,
            ..EmOptions::default()
        };
        let s1 = em_assign(&ring6(), &a, &opts).unwrap();
        let s2 = em_assign(&ring6(), &a, &opts).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn input_validation() {
        assert!(em_from(&single(), &[0.5], vec![0.25], 0.0, 10).is_err());
        assert!(em_from(&single(), &[0.5], vec![0.25], 1e-6, 0).is_err());
        assert!(em_from(&single(), &[0.5], vec![0.75], 1e-6, 10).is_err());
        assert!(em_assign(&single(), &[-0.5], &EmOptions::default()).is_err());
    }
}
