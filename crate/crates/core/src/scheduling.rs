//! Greedy maximal scheduling and the policies built on it.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{check_rates, ConflictGraph, LinkSet, PriorityVector};

/// Largest graph the exact max-weight search accepts by default.
pub const MAX_WEIGHT_N_MAX: usize = 24;

/// Tolerance on `sum(theta) == 1`.
pub const THETA_TOL: f64 = 1e-9;

/// Single greedy pass: links in priority order, each joins the schedule iff
/// it is occupied and none of its neighbours has joined yet.
pub fn greedy_schedule(g: &ConflictGraph, p: &PriorityVector, occupied: LinkSet) -> Result<LinkSet> {
    p.check_len(g.n())?;
    Ok(LinkSet::from_bits(greedy_bits(g, p.order_indices(), occupied.bits())))
}

pub(crate) fn greedy_bits(g: &ConflictGraph, order: &[usize], occupied: u64) -> u64 {
    let mut s = 0u64;
    for &i in order {
        let bit = 1u64 << i;
        if occupied & bit != 0 && g.nbr_bits(i) & s == 0 {
            s |= bit;
        }
    }
    s
}

/// Links with a nonempty queue.
pub fn occupied(q: &[u64]) -> LinkSet {
    LinkSet::from_bits(
        q.iter()
            .enumerate()
            .filter(|(_, &v)| v > 0)
            .fold(0u64, |m, (i, _)| m | 1 << i),
    )
}

/// How LQF orders links with equal queue lengths.
#[derive(Debug, Clone)]
pub enum TieBreak {
    /// Lower link index first.
    LowestIndex,
    /// Fresh seeded random order among tied links each slot.
    Random(ChaCha8Rng),
}

impl TieBreak {
    pub fn random(seed: u64) -> Self {
        TieBreak::Random(ChaCha8Rng::seed_from_u64(seed))
    }
}

/// Priorities by descending queue length (`q_i > q_j` implies `p_i < p_j`).
pub fn lqf_priorities(q: &[u64], tiebreak: &mut TieBreak) -> PriorityVector {
    let mut order: Vec<usize> = (0..q.len()).collect();
    match tiebreak {
        TieBreak::LowestIndex => order.sort_by(|&a, &b| q[b].cmp(&q[a]).then(a.cmp(&b))),
        TieBreak::Random(rng) => {
            order.shuffle(rng);
            order.sort_by(|&a, &b| q[b].cmp(&q[a]));
        }
    }
    let links: Vec<usize> = order.into_iter().map(|i| i + 1).collect();
    PriorityVector::from_order(&links).expect("sorted indices form a permutation")
}

/// One LQF slot: priorities from the queue state at the start of the slot.
pub fn lqf_step(g: &ConflictGraph, q: &[u64], tiebreak: &mut TieBreak) -> Result<LinkSet> {
    check_queue_len(g, q)?;
    let p = lqf_priorities(q, tiebreak);
    greedy_schedule(g, &p, occupied(q))
}

/// One static-priority slot.
pub fn sp_single_step(g: &ConflictGraph, p: &PriorityVector, q: &[u64]) -> Result<LinkSet> {
    check_queue_len(g, q)?;
    greedy_schedule(g, p, occupied(q))
}

fn check_queue_len(g: &ConflictGraph, q: &[u64]) -> Result<()> {
    if q.len() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            got: q.len(),
        });
    }
    Ok(())
}

/// Exact max-weight independent set over occupied links. Ties go to the
/// lexicographically smallest sorted link list; zero-queue links are never
/// included.
pub fn max_weight_schedule(g: &ConflictGraph, q: &[u64]) -> Result<LinkSet> {
    max_weight_schedule_with_limit(g, q, MAX_WEIGHT_N_MAX)
}

pub fn max_weight_schedule_with_limit(g: &ConflictGraph, q: &[u64], n_max: usize) -> Result<LinkSet> {
    if g.n() > n_max {
        return Err(Error::TooLarge { n: g.n(), limit: n_max });
    }
    check_queue_len(g, q)?;
    let cand = occupied(q).bits();
    let mut search = MwSearch {
        g,
        q,
        best: 0,
        best_weight: 0,
    };
    let remaining: u64 = LinkSet::from_bits(cand).iter().map(|l| q[l - 1]).sum();
    search.dfs(cand, 0, 0, remaining);
    Ok(LinkSet::from_bits(search.best))
}

struct MwSearch<'a> {
    g: &'a ConflictGraph,
    q: &'a [u64],
    best: u64,
    best_weight: u64,
}

impl MwSearch<'_> {
    // Include-before-exclude over ascending links visits sets in
    // lexicographic order, so keeping the first strict improvement yields
    // the lexicographically smallest optimum.
    fn dfs(&mut self, cand: u64, chosen: u64, weight: u64, remaining: u64) {
        if weight + remaining <= self.best_weight && self.best_weight > 0 {
            return;
        }
        if cand == 0 {
            if weight > self.best_weight {
                self.best_weight = weight;
                self.best = chosen;
            }
            return;
        }
        let i = cand.trailing_zeros() as usize;
        let bit = 1u64 << i;
        let rest = cand & !bit;
        let w = self.q[i];
        let nb = self.g.nbr_bits(i);
        let dropped: u64 = LinkSet::from_bits(rest & nb).iter().map(|l| self.q[l - 1]).sum();
        self.dfs(rest & !nb, chosen | bit, weight + w, remaining - w - dropped);
        self.dfs(rest, chosen, weight, remaining - w);
    }
}

/// Multi-priority static scheduling parameters `{p^(k), a^(k), theta^(k)}`.
///
/// Time is cut into blocks of nominal length `block`; each block holds one
/// sub-block per class `k`, in ascending `k`. Class `k` receives
/// `floor(b * block * theta_k)` slots over the first `b` blocks, so its long
/// run share is exactly `theta_k`. When every `theta_k * block` is an integer
/// the sub-blocks have fixed lengths `theta_k * block`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpParams {
    theta: Vec<f64>,
    priorities: Vec<PriorityVector>,
    rates: Vec<Vec<f64>>,
    block: u64,
    // theta_k * block, snapped to the nearest integer when within 1e-9
    share: Vec<f64>,
}

impl SpParams {
    pub fn new(
        theta: Vec<f64>,
        priorities: Vec<PriorityVector>,
        rates: Vec<Vec<f64>>,
        block: u64,
    ) -> Result<Self> {
        let k = theta.len();
        if k == 0 {
            return Err(Error::InvalidParameter("K must be at least 1".into()));
        }
        if priorities.len() != k || rates.len() != k {
            return Err(Error::InvalidParameter(format!(
                "K = {k} but {} priority vectors and {} rate vectors",
                priorities.len(),
                rates.len()
            )));
        }
        if block == 0 {
            return Err(Error::InvalidParameter("block length must be positive".into()));
        }
        if theta.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
            return Err(Error::InvalidParameter(format!("theta must be positive: {theta:?}")));
        }
        let sum: f64 = theta.iter().sum();
        if (sum - 1.0).abs() > THETA_TOL {
            return Err(Error::InvalidParameter(format!("theta sums to {sum}, expected 1")));
        }
        let n = priorities[0].n();
        for p in &priorities {
            p.check_len(n)?;
        }
        for r in &rates {
            check_rates(n, r)?;
        }
        let share = theta
            .iter()
            .map(|&t| {
                let s = t * block as f64;
                if (s - s.round()).abs() < 1e-9 {
                    s.round()
                } else {
                    s
                }
            })
            .collect();
        Ok(SpParams {
            theta,
            priorities,
            rates,
            block,
            share,
        })
    }

    /// Single priority vector, whole block, `rates` as the only class.
    pub fn single(p: PriorityVector, rates: Vec<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![p], vec![rates], 1)
    }

    pub fn k(&self) -> usize {
        self.theta.len()
    }

    pub fn n(&self) -> usize {
        self.priorities[0].n()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn priorities(&self) -> &[PriorityVector] {
        &self.priorities
    }

    pub fn rates(&self) -> &[Vec<f64>] {
        &self.rates
    }

    pub fn block(&self) -> u64 {
        self.block
    }

    /// Sum of the class rates, per link.
    pub fn total_rate(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for r in &self.rates {
            for (o, v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        out
    }

    fn allotted(&self, k: usize, blocks: u64) -> u64 {
        (blocks as f64 * self.share[k]).floor() as u64
    }

    fn block_start(&self, b: u64) -> u64 {
        (0..self.k()).map(|k| self.allotted(k, b)).sum()
    }

    /// 0-based class active at 1-based slot `t`.
    pub fn active_class(&self, t: u64) -> usize {
        assert!(t >= 1, "slots are 1-based");
        let s = t - 1;
        let mut b = s / self.block;
        while b > 0 && self.block_start(b) > s {
            b -= 1;
        }
        while self.block_start(b + 1) <= s {
            b += 1;
        }
        let mut off = s - self.block_start(b);
        for k in 0..self.k() {
            let len = self.allotted(k, b + 1) - self.allotted(k, b);
            if off < len {
                return k;
            }
            off -= len;
        }
        unreachable!("offset lies inside block {b}")
    }

    pub fn to_file(&self) -> SpParamsFile {
        SpParamsFile {
            k: self.k(),
            theta: self.theta.clone(),
            priorities: self.priorities.iter().map(|p| p.as_slice().to_vec()).collect(),
            rates: self.rates.clone(),
            block: self.block,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: SpParamsFile = serde_json::from_str(text)?;
        f.into_params()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("plain data serializes")
    }
}

/// On-disk form of [`SpParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpParamsFile {
    #[serde(rename = "K")]
    pub k: usize,
    pub theta: Vec<f64>,
    pub priorities: Vec<Vec<usize>>,
    pub rates: Vec<Vec<f64>>,
    pub block: u64,
}

impl SpParamsFile {
    pub fn into_params(self) -> Result<SpParams> {
        if self.k != self.theta.len() {
            return Err(Error::InvalidParameter(format!(
                "K = {} but theta has {} entries",
                self.k,
                self.theta.len()
            )));
        }
        let priorities = self
            .priorities
            .into_iter()
            .map(PriorityVector::new)
            .collect::<Result<Vec<_>>>()?;
        SpParams::new(self.theta, priorities, self.rates, self.block)
    }
}

/// One multi-priority slot: the active class's priority vector over the
/// links whose class-`k` sub-queue is nonempty. Returns the schedule and
/// the 0-based active class.
pub fn sp_multi_step(
    g: &ConflictGraph,
    params: &SpParams,
    sub_queues: &[Vec<u64>],
    t: u64,
) -> Result<(LinkSet, usize)> {
    if t == 0 {
        return Err(Error::InvalidParameter("slots are 1-based".into()));
    }
    if sub_queues.len() != params.k() {
        return Err(Error::DimensionMismatch {
            expected: params.k(),
            got: sub_queues.len(),
        });
    }
    params.priorities[0].check_len(g.n())?;
    let k = params.active_class(t);
    check_queue_len(g, &sub_queues[k])?;
    let s = greedy_schedule(g, &params.priorities[k], occupied(&sub_queues[k]))?;
    Ok((s, k))
}
