//! Slotted queueing simulator.
//!
//! Each slot `t = 1..=horizon` computes a schedule from the queues left by
//! slot `t - 1`, serves one packet at every scheduled link, then adds the
//! slot's arrivals. Every slot is checked for conservation, independence,
//! maximality over the links that could transmit, and the per-slot bounds;
//! a breach aborts the run with [`Error::InvariantViolation`].

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrivals::{ArrivalProcess, ArrivalSpec, SplitArrivals, SplitMode, SplitSpec};
use crate::em::{em_assign, sp_params_from_em, EmOptions};
use crate::error::{Error, Result};
use crate::graph::{ConflictGraph, LinkSet, PriorityVector};
use crate::scheduling::{
    greedy_schedule, lqf_step, max_weight_schedule, occupied, sp_multi_step, SpParams, TieBreak,
};
use crate::stability::{caratheodory_sp_params, min_norm_priority};

pub const DEFAULT_SAMPLE_EVERY: u64 = 100;

/// Block length used by the automatically derived multi-priority schedulers.
pub const AUTO_BLOCK: u64 = 100;

/// Stable if the slope is at most this (packets/slot)...
pub const STABLE_SLOPE: f64 = 0.01;
/// ...and the final max queue is at most this fraction of the horizon.
pub const STABLE_QUEUE_FRACTION: f64 = 0.02;
/// Unstable if the final max queue is at least this fraction of the horizon.
pub const UNSTABLE_QUEUE_FRACTION: f64 = 0.05;

// Offsets separating the RNG streams that share a run seed.
const SPLIT_STREAM: u64 = 0x5851_F42D_4C95_7F2D;
const TIEBREAK_STREAM: u64 = 0x1405_7B7E_F767_814F;

/// Experiment description. Mirrors the CLI flags; the JSON form is the
/// `--config` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub graph: String,
    pub scheduler: String,
    pub arrivals: String,
    pub horizon: u64,
    #[serde(default = "one")]
    pub runs: usize,
    #[serde(default = "default_sample_every")]
    pub sample_every: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split: SplitMode,
    #[serde(default)]
    pub initial_queues: Option<Vec<u64>>,
}

fn one() -> usize {
    1
}

fn default_sample_every() -> u64 {
    DEFAULT_SAMPLE_EVERY
}

impl SimConfig {
    pub fn new(graph: &str, scheduler: &str, arrivals: &str, horizon: u64) -> Self {
        SimConfig {
            graph: graph.into(),
            scheduler: scheduler.into(),
            arrivals: arrivals.into(),
            horizon,
            runs: 1,
            sample_every: DEFAULT_SAMPLE_EVERY,
            seed: 0,
            split: SplitMode::default(),
            initial_queues: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::InvalidParameter("runs must be at least 1".into()));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidParameter("sample_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Scheduler specifier.
#[derive(Debug, Clone, PartialEq)]
pub enum SchedulerSpec {
    /// `lqf`: longest queue first, lower index on ties.
    Lqf,
    /// `lqf:random`: seeded random order among tied queues.
    LqfRandom,
    /// `maxweight`: exact max-weight independent set.
    MaxWeight,
    /// `sp:<file>` with a priority vector, or `sp:<p1,p2,...>`.
    Static(PriorityVector),
    /// `spk:<file.json>`.
    Multi(SpParams),
    /// `sp-opt`: single priority minimising `||P a||` for the offered rate.
    StaticOptimal,
    /// `sp2-em`: two priorities from alternating minimisation.
    TwoPriorityEm,
    /// `spk-cara`: one class per independent set of a decomposition.
    Caratheodory,
}

impl SchedulerSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, arg) = spec.split_once(':').unwrap_or((spec, ""));
        match (name, arg) {
            ("lqf", "") | ("lqf", "index") => Ok(SchedulerSpec::Lqf),
            ("lqf", "random") => Ok(SchedulerSpec::LqfRandom),
            ("maxweight", "") => Ok(SchedulerSpec::MaxWeight),
            ("sp-opt", "") => Ok(SchedulerSpec::StaticOptimal),
            ("sp2-em", "") => Ok(SchedulerSpec::TwoPriorityEm),
            ("spk-cara", "") => Ok(SchedulerSpec::Caratheodory),
            ("sp", arg) if !arg.is_empty() => {
                let text = if arg.contains(',') {
                    arg.replace(',', " ")
                } else {
                    std::fs::read_to_string(arg)?
                };
                Ok(SchedulerSpec::Static(PriorityVector::parse(&text)?))
            }
            ("spk", arg) if !arg.is_empty() => {
                Ok(SchedulerSpec::Multi(SpParams::from_json(&std::fs::read_to_string(arg)?)?))
            }
            _ => Err(Error::Parse(format!("unknown scheduler `{spec}`"))),
        }
    }

    /// Concrete policy for offered rate `rate`. `seed` drives the EM
    /// restarts of `sp2-em`.
    pub fn resolve(&self, g: &ConflictGraph, rate: &[f64], seed: u64) -> Result<Policy> {
        Ok(match self {
            SchedulerSpec::Lqf => Policy::Lqf { random: false },
            SchedulerSpec::LqfRandom => Policy::Lqf { random: true },
            SchedulerSpec::MaxWeight => Policy::MaxWeight,
            SchedulerSpec::Static(p) => {
                p.check_len(g.n())?;
                Policy::Static(p.clone())
            }
            SchedulerSpec::Multi(params) => {
                params.priorities()[0].check_len(g.n())?;
                Policy::Multi(params.clone())
            }
            SchedulerSpec::StaticOptimal => Policy::Static(min_norm_priority(g, rate)?.0),
            SchedulerSpec::TwoPriorityEm => {
                let opts = EmOptions {
                    seed,
                    ..EmOptions::default()
                };
                let state = em_assign(g, rate, &opts)?;
                Policy::Multi(sp_params_from_em(&state, rate, AUTO_BLOCK)?)
            }
            SchedulerSpec::Caratheodory => Policy::Multi(caratheodory_sp_params(g, rate, AUTO_BLOCK)?),
        })
    }
}

impl fmt::Display for SchedulerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedulerSpec::Lqf => write!(f, "lqf"),
            SchedulerSpec::LqfRandom => write!(f, "lqf:random"),
            SchedulerSpec::MaxWeight => write!(f, "maxweight"),
            SchedulerSpec::Static(p) => write!(f, "sp:{p}"),
            SchedulerSpec::Multi(p) => write!(f, "spk:K={}", p.k()),
            SchedulerSpec::StaticOptimal => write!(f, "sp-opt"),
            SchedulerSpec::TwoPriorityEm => write!(f, "sp2-em"),
            SchedulerSpec::Caratheodory => write!(f, "spk-cara"),
        }
    }
}

/// A scheduler ready to run.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Lqf { random: bool },
    MaxWeight,
    Static(PriorityVector),
    Multi(SpParams),
}

impl Policy {
    /// Sub-queue fractions for a multi-priority policy at offered rate
    /// `declared`: `x^(k)_i = declared_i * a^(k)_i / sum_k a^(k)_i`.
    pub fn split_for(&self, declared: &[f64]) -> Result<Option<SplitSpec>> {
        let Policy::Multi(params) = self else {
            return Ok(None);
        };
        if declared.len() != params.n() {
            return Err(Error::DimensionMismatch {
                expected: params.n(),
                got: declared.len(),
            });
        }
        let total = params.total_rate();
        for (i, (&d, &tot)) in declared.iter().zip(&total).enumerate() {
            if d > tot + 1e-9 || (d > 0.0 && tot <= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "offered rate {d} at link {} exceeds the scheduler's provisioned rate {tot}",
                    i + 1
                )));
            }
        }
        let fractions = params
            .rates()
            .iter()
            .map(|r| {
                r.iter()
                    .zip(declared.iter().zip(&total))
                    .map(|(&rk, (&d, &tot))| if tot > 0.0 { d * rk / tot } else { 0.0 })
                    .collect()
            })
            .collect();
        Ok(Some(SplitSpec::new(fractions)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Sample {
    pub slot: u64,
    pub max_queue: u64,
    pub total_queue: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub seed: u64,
    pub horizon: u64,
    pub samples: Vec<Sample>,
    pub initial_queues: Vec<u64>,
    pub final_queues: Vec<u64>,
    pub arrivals: Vec<u64>,
    pub departures: Vec<u64>,
    pub declared_rate: Vec<f64>,
}

impl SimResult {
    pub fn final_max_queue(&self) -> u64 {
        self.final_queues.iter().copied().max().unwrap_or(0)
    }

    /// `D_i(T) / T` per link.
    pub fn departure_rate(&self) -> Vec<f64> {
        self.departures
            .iter()
            .map(|&d| d as f64 / self.horizon as f64)
            .collect()
    }

    /// `max_i |D_i(T)/T - declared_i|`.
    pub fn departure_rate_error(&self) -> f64 {
        self.departure_rate()
            .iter()
            .zip(&self.declared_rate)
            .map(|(d, a)| (d - a).abs())
            .fold(0.0, f64::max)
    }

    /// Least-squares slope of the sampled max queue over the last half of
    /// the horizon, in packets per slot.
    pub fn slope(&self) -> f64 {
        let half = self.horizon / 2;
        let pts: Vec<(f64, f64)> = self
            .samples
            .iter()
            .filter(|s| s.slot >= half)
            .map(|s| (s.slot as f64, s.max_queue as f64))
            .collect();
        least_squares_slope(&pts)
    }

    /// Verdict from the slope and final max queue. With `excess` (offered
    /// load minus capacity) a slope of at least half the excess also counts
    /// as unstable.
    pub fn verdict(&self, excess: Option<f64>) -> Verdict {
        let slope = self.slope();
        let fmax = self.final_max_queue() as f64;
        let t = self.horizon as f64;
        if slope <= STABLE_SLOPE && fmax <= STABLE_QUEUE_FRACTION * t {
            Verdict::Stable
        } else if fmax >= UNSTABLE_QUEUE_FRACTION * t
            || excess.is_some_and(|e| e > 0.0 && slope >= 0.5 * e)
        {
            Verdict::Unstable
        } else {
            Verdict::Inconclusive
        }
    }
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (num, den) = pts.iter().fold((0.0, 0.0), |(num, den), &(x, y)| {
        (num + (x - mx) * (y - my), den + (x - mx) * (x - mx))
    });
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Run-level options that do not change the experiment's meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub horizon: u64,
    pub sample_every: u64,
    pub seed: u64,
    pub split: SplitMode,
    pub initial_queues: Option<Vec<u64>>,
}

impl RunOptions {
    pub fn new(horizon: u64, seed: u64) -> Self {
        RunOptions {
            horizon,
            sample_every: DEFAULT_SAMPLE_EVERY,
            seed,
            split: SplitMode::default(),
            initial_queues: None,
        }
    }
}

fn violation(slot: u64, what: String) -> Error {
    Error::InvariantViolation { slot, what }
}

// Independence, service only from nonempty queues, and maximality over the
// links whose relevant queue is nonempty.
fn check_schedule(g: &ConflictGraph, s: LinkSet, eligible: LinkSet, slot: u64) -> Result<()> {
    if !g.is_independent(s) {
        return Err(violation(slot, format!("schedule {s} is not independent")));
    }
    if !s.difference(eligible).is_empty() {
        return Err(violation(slot, format!("schedule {s} serves an empty queue")));
    }
    for l in eligible.difference(s).iter() {
        if !g.neighbors(l).intersects(s) {
            return Err(violation(slot, format!("schedule {s} is not maximal: link {l} is free")));
        }
    }
    Ok(())
}

/// One run of `policy` against `process`.
pub fn simulate_with(
    g: &ConflictGraph,
    policy: &Policy,
    mut process: Box<dyn ArrivalProcess + Send>,
    opts: &RunOptions,
) -> Result<SimResult> {
    let n = g.n();
    if process.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: process.n(),
        });
    }
    if opts.horizon == 0 || opts.sample_every == 0 {
        return Err(Error::InvalidParameter(
            "horizon and sample interval must be positive".into(),
        ));
    }
    let q0 = match &opts.initial_queues {
        Some(q) if q.len() != n => {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: q.len(),
            })
        }
        Some(q) => q.clone(),
        None => vec![0; n],
    };
    let declared = process.declared_rate().to_vec();
    let a_max = process.a_max();

    let split = policy.split_for(&declared)?;
    let k = split.as_ref().map_or(1, |s| s.k());
    let mut splitter = match split {
        Some(spec) => {
            let parent = std::mem::replace(&mut process, Box::new(NoArrivals(n)));
            Some(SplitArrivals::new(
                parent,
                &spec,
                opts.split,
                opts.seed ^ SPLIT_STREAM,
            )?)
        }
        None => None,
    };
    let mut tiebreak = match policy {
        Policy::Lqf { random: true } => TieBreak::random(opts.seed ^ TIEBREAK_STREAM),
        _ => TieBreak::LowestIndex,
    };

    let mut q = q0.clone();
    let mut sub = vec![vec![0u64; n]; k];
    sub[0].copy_from_slice(&q0);
    let mut arr = vec![0u32; n];
    let mut sub_arr = vec![vec![0u32; n]; k];
    let mut total_a = vec![0u64; n];
    let mut total_d = vec![0u64; n];
    let mut samples = Vec::with_capacity((opts.horizon / opts.sample_every) as usize + 1);

    for t in 1..=opts.horizon {
        let (s, class) = match policy {
            Policy::Lqf { .. } => (lqf_step(g, &q, &mut tiebreak)?, None),
            Policy::MaxWeight => (max_weight_schedule(g, &q)?, None),
            Policy::Static(p) => (greedy_schedule(g, p, occupied(&q))?, None),
            Policy::Multi(params) => {
                let (s, c) = sp_multi_step(g, params, &sub, t)?;
                (s, Some(c))
            }
        };
        let eligible = occupied(class.map_or(&q, |c| &sub[c]));
        check_schedule(g, s, eligible, t)?;

        for l in s.iter() {
            let i = l - 1;
            q[i] -= 1;
            if let Some(c) = class {
                sub[c][i] -= 1;
            }
            total_d[i] += 1;
        }

        match &mut splitter {
            Some(sp) => {
                sp.next_slot(&mut arr, &mut sub_arr);
                for (c, row) in sub_arr.iter().enumerate() {
                    for (i, &v) in row.iter().enumerate() {
                        sub[c][i] += v as u64;
                    }
                }
            }
            None => process.next_slot(&mut arr),
        }
        for i in 0..n {
            if arr[i] > a_max {
                return Err(violation(
                    t,
                    format!("{} arrivals at link {} exceed bound {a_max}", arr[i], i + 1),
                ));
            }
            q[i] += arr[i] as u64;
            total_a[i] += arr[i] as u64;
            if q[i] + total_d[i] != q0[i] + total_a[i] {
                return Err(violation(t, format!("queue {} breaks conservation", i + 1)));
            }
            if k > 1 && sub.iter().map(|r| r[i]).sum::<u64>() != q[i] {
                return Err(violation(t, format!("sub-queues at link {} do not sum", i + 1)));
            }
        }

        if t % opts.sample_every == 0 || t == opts.horizon {
            samples.push(Sample {
                slot: t,
                max_queue: q.iter().copied().max().unwrap_or(0),
                total_queue: q.iter().sum(),
            });
        }
    }

    Ok(SimResult {
        seed: opts.seed,
        horizon: opts.horizon,
        samples,
        initial_queues: q0,
        final_queues: q,
        arrivals: total_a,
        departures: total_d,
        declared_rate: declared,
    })
}

// Placeholder left behind once the real process moves into the splitter.
struct NoArrivals(usize);

impl ArrivalProcess for NoArrivals {
    fn n(&self) -> usize {
        self.0
    }
    fn declared_rate(&self) -> &[f64] {
        &[]
    }
    fn a_max(&self) -> u32 {
        0
    }
    fn next_slot(&mut self, out: &mut [u32]) {
        out.iter_mut().for_each(|v| *v = 0);
    }
}

/// Per-run results plus aggregates over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub runs: Vec<SimResult>,
}

impl Replication {
    pub fn mean_final_max_queue(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.final_max_queue() as f64))
    }

    pub fn max_final_max_queue(&self) -> u64 {
        self.runs.iter().map(|r| r.final_max_queue()).max().unwrap_or(0)
    }

    pub fn mean_slope(&self) -> f64 {
        mean(self.runs.iter().map(SimResult::slope))
    }

    pub fn max_slope(&self) -> f64 {
        self.runs.iter().map(SimResult::slope).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_departure_rate_error(&self) -> f64 {
        self.runs
            .iter()
            .map(SimResult::departure_rate_error)
            .fold(0.0, f64::max)
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = it.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if c == 0 {
        0.0
    } else {
        s / c as f64
    }
}

/// `runs` simulations with seeds `seed, seed + 1, ...`, run in parallel.
/// The policy is resolved once from the offered rate of the first run.
pub fn replicate_with(
    g: &ConflictGraph,
    scheduler: &SchedulerSpec,
    arrivals: &ArrivalSpec,
    runs: usize,
    opts: &RunOptions,
) -> Result<Replication> {
    if runs == 0 {
        return Err(Error::InvalidParameter("runs must be at least 1".into()));
    }
    let declared = arrivals.build(g.n(), opts.seed)?.declared_rate().to_vec();
    let policy = scheduler.resolve(g, &declared, opts.seed)?;
    let runs = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let seed = opts.seed.wrapping_add(r);
            let run_opts = RunOptions {
                seed,
                ..opts.clone()
            };
            simulate_with(g, &policy, arrivals.build(g.n(), seed)?, &run_opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Replication { runs })
}

struct Prepared {
    graph: ConflictGraph,
    scheduler: SchedulerSpec,
    arrivals: ArrivalSpec,
    opts: RunOptions,
}

fn prepare(config: &SimConfig) -> Result<Prepared> {
    config.validate()?;
    Ok(Prepared {
        graph: ConflictGraph::from_spec(&config.graph)?,
        scheduler: SchedulerSpec::parse(&config.scheduler)?,
        arrivals: ArrivalSpec::parse(&config.arrivals)?,
        opts: RunOptions {
            horizon: config.horizon,
            sample_every: config.sample_every,
            seed: config.seed,
            split: config.split,
            initial_queues: config.initial_queues.clone(),
        },
    })
}

/// A single run of `config` (its `runs` field is ignored).
pub fn simulate(config: &SimConfig) -> Result<SimResult> {
    let p = prepare(config)?;
    Ok(replicate_with(&p.graph, &p.scheduler, &p.arrivals, 1, &p.opts)?
        .runs
        .remove(0))
}

pub fn replicate(config: &SimConfig) -> Result<Replication> {
    let p = prepare(config)?;
    replicate_with(&p.graph, &p.scheduler, &p.arrivals, config.runs, &p.opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scheduler: String,
    pub rate: f64,
    pub result: Replication,
}

/// [`replicate`] at each uniform offered rate. `config.arrivals` may be a
/// bare family name (`bernoulli`, `ring6adv`, `bipartiteadv`).
pub fn rate_sweep(config: &SimConfig, rates: &[f64]) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let graph = ConflictGraph::from_spec(&config.graph)?;
    let scheduler = SchedulerSpec::parse(&config.scheduler)?;
    let family = ArrivalSpec::parse_family(&config.arrivals)?;
    let opts = RunOptions {
        horizon: config.horizon,
        sample_every: config.sample_every,
        seed: config.seed,
        split: config.split,
        initial_queues: config.initial_queues.clone(),
    };
    rates
        .iter()
        .map(|&r| {
            let arrivals = family.at_uniform_rate(r)?;
            Ok(SweepRow {
                scheduler: config.scheduler.clone(),
                rate: r,
                result: replicate_with(&graph, &scheduler, &arrivals, config.runs, &opts)?,
            })
        })
        .collect()
}

/// Header `run,slot,max_queue,total_queue`; `run` is 0-based.
pub fn write_trace_csv<W: Write>(rep: &Replication, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["run", "slot", "max_queue", "total_queue"])?;
    for (r, run) in rep.runs.iter().enumerate() {
        for s in &run.samples {
            w.serialize((r, s.slot, s.max_queue, s.total_queue))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Header `scheduler,rate,run,final_max_queue,slope,departure_rate_error`.
pub fn write_summary_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "scheduler",
        "rate",
        "run",
        "final_max_queue",
        "slope",
        "departure_rate_error",
    ])?;
    for row in rows {
        for (r, run) in row.result.runs.iter().enumerate() {
            w.serialize((
                &row.scheduler,
                row.rate,
                r,
                run.final_max_queue(),
                run.slope(),
                run.departure_rate_error(),
            ))?;
        }
    }
    w.flush()?;
    Ok(())
}
