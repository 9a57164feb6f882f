//! Stability-region membership tests and certified priority constructions.
//!
//! All tests are closed (`<= 1 + tau`) and report `boundary` when the binding
//! value is within `tau` of 1, so callers that need the strict region can use
//! [`RegionVerdict::strict_member`].

use std::fmt;

use crate::error::{Error, Result};
use crate::graph::{check_rates, row_sum, ConflictGraph, IncidenceMatrix, LinkSet, PriorityVector};
use crate::lp::{lp_solve, LinearProgram, LpError};
use crate::scheduling::SpParams;

/// Default comparison tolerance for region tests.
pub const TAU: f64 = 1e-9;

/// Largest graph for which independent sets are enumerated.
pub const DECOMPOSE_N_MAX: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct RegionVerdict {
    pub member: bool,
    pub certificate: Option<PriorityVector>,
    /// The binding norm or load; for a rejection, the first value above 1.
    pub value: f64,
    pub boundary: bool,
}

impl RegionVerdict {
    fn closed(value: f64, certificate: Option<PriorityVector>) -> Self {
        RegionVerdict {
            member: value <= 1.0 + TAU,
            certificate,
            value,
            boundary: (value - 1.0).abs() <= TAU,
        }
    }

    /// Membership in the open region (`value < 1`).
    pub fn strict_member(&self) -> bool {
        self.member && !self.boundary
    }

    /// One line: `region=<name> member=<bool> value=<float> boundary=<bool>`
    /// plus `certificate=<perm>` when present.
    pub fn report(&self, region: &str) -> String {
        let mut s = format!(
            "region={region} member={} value={} boundary={}",
            self.member, self.value, self.boundary
        );
        if let Some(p) = &self.certificate {
            s.push_str(&format!(" certificate={p}"));
        }
        s
    }
}

/// Worst-case region of any maximal scheduler: every closed-neighbourhood
/// load at most 1.
pub fn in_maximal_region(g: &ConflictGraph, a: &[f64]) -> Result<RegionVerdict> {
    check_rates(g.n(), a)?;
    let value = (0..g.n())
        .map(|i| row_sum(a, i, g.nbr_bits(i)))
        .fold(0.0, f64::max);
    Ok(RegionVerdict::closed(value, None))
}

/// Region of static-priority scheduling with priority `p`: `||P a||_inf <= 1`.
pub fn in_priority_region(g: &ConflictGraph, p: &PriorityVector, a: &[f64]) -> Result<RegionVerdict> {
    check_rates(g.n(), a)?;
    let pm = IncidenceMatrix::new(g, p)?;
    let value = pm.apply(a).into_iter().fold(0.0, f64::max);
    Ok(RegionVerdict::closed(value, None))
}

struct GreedyOutcome {
    priority: Vec<usize>,
    value: f64,
    rejected: bool,
}

// Assigns priorities n, n-1, ..., 1 in turn to the remaining link with the
// smallest closed-neighbourhood load, removing it afterwards. On ties the
// highest index is peeled first, so lower-indexed links keep the higher
// priority and an all-zero rate vector yields the identity. Loads are
// recomputed from scratch each round, in the same
// summation order as `IncidenceMatrix::apply`, so the reported value matches
// a re-evaluation of the certificate exactly.
fn peel(g: &ConflictGraph, a: &[f64], reject_above: Option<f64>) -> GreedyOutcome {
    let n = g.n();
    let mut remaining = LinkSet::full(n).bits();
    let mut priority = vec![0usize; n];
    let mut value = 0.0f64;
    for k in (1..=n).rev() {
        let mut best: Option<(usize, f64)> = None;
        let mut bits = remaining;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let load = row_sum(a, i, g.nbr_bits(i) & remaining);
            if best.is_none_or(|(_, b)| load <= b) {
                best = Some((i, load));
            }
        }
        let (s, load) = best.expect("remaining set is nonempty");
        value = value.max(load);
        if reject_above.is_some_and(|lim| load > lim) {
            return GreedyOutcome {
                priority,
                value: load,
                rejected: true,
            };
        }
        priority[s] = k;
        remaining &= !(1u64 << s);
    }
    GreedyOutcome {
        priority,
        value,
        rejected: false,
    }
}

/// Decides `min_P ||P a||_inf <= 1` by peeling off minimum-load links; on
/// success the certificate is the priority vector the peeling built.
pub fn test_feasibility(g: &ConflictGraph, a: &[f64]) -> Result<RegionVerdict> {
    check_rates(g.n(), a)?;
    let out = peel(g, a, Some(1.0 + TAU));
    if out.rejected {
        return Ok(RegionVerdict {
            member: false,
            certificate: None,
            value: out.value,
            boundary: false,
        });
    }
    let p = PriorityVector::new(out.priority).expect("peeling assigns every priority once");
    Ok(RegionVerdict::closed(out.value, Some(p)))
}

/// Priority vector minimising `||P a||_inf` over all `n!` priorities, and
/// the minimum.
pub fn min_norm_priority(g: &ConflictGraph, a: &[f64]) -> Result<(PriorityVector, f64)> {
    check_rates(g.n(), a)?;
    let out = peel(g, a, None);
    let p = PriorityVector::new(out.priority).expect("peeling assigns every priority once");
    Ok((p, out.value))
}

/// Sufficient condition for multi-priority static scheduling:
/// `(P^(k) a^(k))_i <= theta^(k)` at every link with `a^(k)_i > 0`.
/// `value` is the largest ratio `(P^(k) a^(k))_i / theta^(k)`.
pub fn sp_condition(g: &ConflictGraph, params: &SpParams) -> Result<RegionVerdict> {
    if params.n() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            got: params.n(),
        });
    }
    let mut value = 0.0f64;
    for k in 0..params.k() {
        let rates = &params.rates()[k];
        let pm = IncidenceMatrix::new(g, &params.priorities()[k])?;
        let theta = params.theta()[k];
        for (i, load) in pm.apply(rates).into_iter().enumerate() {
            if rates[i] > 0.0 {
                value = value.max(load / theta);
            }
        }
    }
    Ok(RegionVerdict::closed(value, None))
}

/// All independent sets of `g`, including the empty set, sorted by their
/// ascending link lists.
pub fn independent_sets(g: &ConflictGraph) -> Result<Vec<LinkSet>> {
    if g.n() > DECOMPOSE_N_MAX {
        return Err(Error::TooLarge {
            n: g.n(),
            limit: DECOMPOSE_N_MAX,
        });
    }
    fn walk(g: &ConflictGraph, cand: u64, chosen: u64, out: &mut Vec<LinkSet>) {
        if cand == 0 {
            out.push(LinkSet::from_bits(chosen));
            return;
        }
        let i = cand.trailing_zeros() as usize;
        let rest = cand & !(1u64 << i);
        walk(g, rest & !g.nbr_bits(i), chosen | 1 << i, out);
        walk(g, rest, chosen, out);
    }
    let mut out = Vec::new();
    walk(g, g.links().bits(), 0, &mut out);
    out.sort_by_key(|s| s.to_vec());
    Ok(out)
}

/// `a = sum_k weights[k] * 1_{sets[k]}` with `sum(weights) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependentSetDecomposition {
    pub sets: Vec<LinkSet>,
    pub weights: Vec<f64>,
}

impl IndependentSetDecomposition {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn reconstruct(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (s, &w) in self.sets.iter().zip(&self.weights) {
            for l in s.iter() {
                out[l - 1] += w;
            }
        }
        out
    }
}

impl fmt::Display for IndependentSetDecomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (s, w)) in self.sets.iter().zip(&self.weights).enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{w}*{s}")?;
        }
        Ok(())
    }
}

/// Writes `a` as a convex combination of at most `n + 1` independent sets.
///
/// Solves `min sum_{S != {}} theta_S` subject to `sum_S theta_S 1_S = a`,
/// `sum_{S != {}} theta_S <= 1` over every independent set, so the busy
/// fraction is as small as possible and the empty set absorbs the rest.
/// Fails with [`Error::OutsideCapacityRegion`] when `a` is not in the convex
/// hull of independent sets.
pub fn decompose(g: &ConflictGraph, a: &[f64]) -> Result<IndependentSetDecomposition> {
    check_rates(g.n(), a)?;
    let n = g.n();
    let sets: Vec<LinkSet> = independent_sets(g)?
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect();
    let m = sets.len();
    let mut lp = LinearProgram::new(m).minimize(vec![1.0; m]).le(vec![1.0; m], 1.0);
    for (i, &ai) in a.iter().enumerate() {
        let row = sets
            .iter()
            .map(|s| if s.contains(i + 1) { 1.0 } else { 0.0 })
            .collect();
        lp = lp.eq(row, ai);
    }
    let sol = match lp_solve(&lp) {
        Ok(sol) => sol,
        Err(LpError::Infeasible) => return Err(Error::OutsideCapacityRegion),
        Err(e) => return Err(e.into()),
    };
    let mut picked: Vec<(LinkSet, f64)> = sets
        .into_iter()
        .zip(sol.z)
        .filter(|(_, w)| *w > 1e-13)
        .collect();
    let busy: f64 = picked.iter().map(|(_, w)| w).sum();
    if busy < 1.0 - 1e-13 {
        picked.push((LinkSet::EMPTY, 1.0 - busy));
    }
    reduce_support(n, &mut picked);
    let (sets, weights) = picked.into_iter().unzip();
    Ok(IndependentSetDecomposition { sets, weights })
}

/// Caratheodory reduction: while the vectors `(1_S, 1)` of the support are
/// linearly dependent, shift weight along a null vector until one weight
/// hits zero. Leaves at most `n + 1` sets.
fn reduce_support(n: usize, picked: &mut Vec<(LinkSet, f64)>) {
    while let Some(lambda) = null_vector(n, picked) {
        let step = picked
            .iter()
            .zip(&lambda)
            .filter(|(_, &l)| l > 1e-12)
            .map(|((_, w), &l)| w / l)
            .fold(f64::INFINITY, f64::min);
        if !step.is_finite() {
            break;
        }
        for ((_, w), &l) in picked.iter_mut().zip(&lambda) {
            *w -= step * l;
        }
        let (drop, _) = picked
            .iter()
            .enumerate()
            .min_by(|x, y| x.1 .1.total_cmp(&y.1 .1))
            .expect("support is nonempty");
        picked.remove(drop);
        picked.retain(|(_, w)| *w > 1e-13);
    }
}

// A nonzero lambda with sum_k lambda_k (1_{S_k}, 1) = 0, if any.
fn null_vector(n: usize, picked: &[(LinkSet, f64)]) -> Option<Vec<f64>> {
    let cols = picked.len();
    if cols == 0 {
        return None;
    }
    let rows = n + 1;
    let mut mat: Vec<Vec<f64>> = (0..rows)
        .map(|r| {
            picked
                .iter()
                .map(|(s, _)| if r == n || s.contains(r + 1) { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    // Reduced row echelon form.
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(pr) = (r..rows).max_by(|&x, &y| mat[x][c].abs().total_cmp(&mat[y][c].abs())) else {
            continue;
        };
        if mat[pr][c].abs() < 1e-12 {
            continue;
        }
        mat.swap(r, pr);
        let pv = mat[r][c];
        mat[r].iter_mut().for_each(|v| *v /= pv);
        for rr in 0..rows {
            if rr != r {
                let f = mat[rr][c];
                if f != 0.0 {
                    for cc in 0..cols {
                        mat[rr][cc] -= f * mat[r][cc];
                    }
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    let free = (0..cols).find(|c| !pivots.contains(c))?;
    let mut lambda = vec![0.0; cols];
    lambda[free] = 1.0;
    for (row, &pc) in pivots.iter().enumerate() {
        lambda[pc] = -mat[row][free];
    }
    if lambda.iter().all(|&l| l <= 1e-12) {
        lambda.iter_mut().for_each(|l| *l = -*l);
    }
    Some(lambda)
}

/// Priority vector placing the links of `set` last (lowest priorities) and
/// every other link first, both groups in ascending link order.
pub fn set_lowest_priority(n: usize, set: LinkSet) -> PriorityVector {
    let order: Vec<usize> = (1..=n)
        .filter(|&l| !set.contains(l))
        .chain((1..=n).filter(|&l| set.contains(l)))
        .collect();
    PriorityVector::from_order(&order).expect("every link listed once")
}

/// Multi-priority parameters from an independent-set decomposition of `a`:
/// one class per set, `a^(k) = theta^(k) 1_{S_k}`, and a priority vector that
/// puts `S_k` last so `(P^(k) a^(k))_i = a^(k)_i` on the support.
pub fn caratheodory_sp_params(g: &ConflictGraph, a: &[f64], block: u64) -> Result<SpParams> {
    let dec = decompose(g, a)?;
    sp_params_from_decomposition(g, &dec, block)
}

pub fn sp_params_from_decomposition(
    g: &ConflictGraph,
    dec: &IndependentSetDecomposition,
    block: u64,
) -> Result<SpParams> {
    let n = g.n();
    let priorities = dec.sets.iter().map(|&s| set_lowest_priority(n, s)).collect();
    let rates = dec
        .sets
        .iter()
        .zip(&dec.weights)
        .map(|(s, &w)| s.indicator(n).into_iter().map(|v| v * w).collect())
        .collect();
    SpParams::new(dec.weights.clone(), priorities, rates, block)
}
