//! Seeded arrival processes.
//!
//! Every process emits an integer arrival vector per slot, bounded by its
//! `a_max`, and declares the long-run rate it converges to.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LinkSet;

/// Tolerance for split fractions summing to the parent rate.
pub const SPLIT_TOL: f64 = 1e-9;

pub trait ArrivalProcess {
    fn n(&self) -> usize;

    /// Long-run arrival rate per link (packets/slot).
    fn declared_rate(&self) -> &[f64];

    /// Per-slot, per-link bound on arrivals.
    fn a_max(&self) -> u32;

    /// Fills `out` (length `n`) with the next slot's arrivals.
    fn next_slot(&mut self, out: &mut [u32]);
}

impl<P: ArrivalProcess + ?Sized> ArrivalProcess for Box<P> {
    fn n(&self) -> usize {
        (**self).n()
    }
    fn declared_rate(&self) -> &[f64] {
        (**self).declared_rate()
    }
    fn a_max(&self) -> u32 {
        (**self).a_max()
    }
    fn next_slot(&mut self, out: &mut [u32]) {
        (**self).next_slot(out)
    }
}

fn check_prob(name: &str, v: f64, max: f64) -> Result<()> {
    if !(0.0..=max).contains(&v) {
        return Err(Error::InvalidParameter(format!("{name} = {v} outside [0, {max}]")));
    }
    Ok(())
}

/// Independent Bernoulli arrivals: link `i` gets one packet with
/// probability `rates[i]` each slot.
#[derive(Debug, Clone)]
pub struct Bernoulli {
    rates: Vec<f64>,
    rng: ChaCha8Rng,
}

pub fn bernoulli_process(rates: &[f64], seed: u64) -> Result<Bernoulli> {
    for (i, &r) in rates.iter().enumerate() {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidRate { link: i + 1, value: r });
        }
    }
    Ok(Bernoulli {
        rates: rates.to_vec(),
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

impl ArrivalProcess for Bernoulli {
    fn n(&self) -> usize {
        self.rates.len()
    }
    fn declared_rate(&self) -> &[f64] {
        &self.rates
    }
    fn a_max(&self) -> u32 {
        1
    }
    fn next_slot(&mut self, out: &mut [u32]) {
        for (o, &r) in out.iter_mut().zip(&self.rates) {
            let u: f64 = self.rng.gen();
            *o = u32::from(u < r);
        }
    }
}

/// A periodic pattern of link sets, one per phase, cycled slot by slot.
/// Each phase fires with probability `fire_prob`; independently, with
/// probability `epsilon` one extra packet lands on every link.
#[derive(Debug, Clone)]
pub struct PeriodicAdversarial {
    n: usize,
    phases: Vec<LinkSet>,
    fire_prob: f64,
    epsilon: f64,
    declared: Vec<f64>,
    slot: u64,
    rng: ChaCha8Rng,
}

impl PeriodicAdversarial {
    fn new(n: usize, phases: Vec<LinkSet>, fire_prob: f64, epsilon: f64, seed: u64) -> Self {
        let period = phases.len() as f64;
        let declared = (1..=n)
            .map(|l| {
                let hits = phases.iter().filter(|s| s.contains(l)).count() as f64;
                fire_prob * hits / period + epsilon
            })
            .collect();
        PeriodicAdversarial {
            n,
            phases,
            fire_prob,
            epsilon,
            declared,
            slot: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl ArrivalProcess for PeriodicAdversarial {
    fn n(&self) -> usize {
        self.n
    }
    fn declared_rate(&self) -> &[f64] {
        &self.declared
    }
    fn a_max(&self) -> u32 {
        2
    }
    fn next_slot(&mut self, out: &mut [u32]) {
        let phase = self.phases[(self.slot % self.phases.len() as u64) as usize];
        self.slot += 1;
        let fire = self.rng.gen::<f64>() < self.fire_prob;
        let extra = self.rng.gen::<f64>() < self.epsilon;
        for (i, o) in out.iter_mut().enumerate() {
            *o = u32::from(fire && phase.contains(i + 1)) + u32::from(extra);
        }
    }
}

/// Period-3 pattern on the 6-ring: links {1,4}, then {2,5}, then {3,6},
/// plus an epsilon-packet on every link. Rate `(1/3 + epsilon)` per link.
pub fn ring6_adversarial(epsilon: f64, seed: u64) -> Result<PeriodicAdversarial> {
    ring6_adversarial_scaled(1.0 / 3.0, epsilon, seed)
}

/// Like [`ring6_adversarial`] but each phase fires with probability
/// `3 * rho`, giving rate `rho + epsilon` with `rho <= 1/3`.
pub fn ring6_adversarial_scaled(rho: f64, epsilon: f64, seed: u64) -> Result<PeriodicAdversarial> {
    check_prob("epsilon", epsilon, 1.0)?;
    check_prob("rho", rho, 1.0 / 3.0)?;
    let phases = vec![
        LinkSet::from_links([1, 4]),
        LinkSet::from_links([2, 5]),
        LinkSet::from_links([3, 6]),
    ];
    let fire = (3.0 * rho).min(1.0);
    Ok(PeriodicAdversarial::new(6, phases, fire, epsilon, seed))
}

/// Period-2 pattern on the 8-link bipartite graph: {1,2,7,8} on odd slots,
/// {3,4,5,6} on even slots, each phase firing with probability `2 * rho`,
/// plus an epsilon-packet on every link. Rate `rho + epsilon` per link.
///
/// This is one reading of "a pattern similar to the ring": each phase mixes
/// two left and two right links so that a greedy pass driven by queue length
/// picks lopsided schedules.
pub fn bipartite_adversarial(rho: f64, epsilon: f64, seed: u64) -> Result<PeriodicAdversarial> {
    check_prob("epsilon", epsilon, 1.0)?;
    check_prob("rho", rho, 0.5)?;
    let phases = vec![
        LinkSet::from_links([1, 2, 7, 8]),
        LinkSet::from_links([3, 4, 5, 6]),
    ];
    let fire = (2.0 * rho).min(1.0);
    Ok(PeriodicAdversarial::new(8, phases, fire, epsilon, seed))
}

/// Period-4 pattern on the 8-link bipartite graph: the pairs {1,5}, {2,6},
/// {3,7}, {4,8} in turn, each firing with probability `4 * rho`, plus an
/// epsilon-packet on every link. Rate `rho + epsilon` per link.
///
/// Each pair is independent but blocks every other link, so once queues are
/// long a longest-queue-first pass serves one fresh pair per slot and
/// delivers only 1/4 per link, like the ring pattern's 1/3.
pub fn bipartite_pair_adversarial(rho: f64, epsilon: f64, seed: u64) -> Result<PeriodicAdversarial> {
    check_prob("epsilon", epsilon, 1.0)?;
    check_prob("rho", rho, 0.25)?;
    let phases = (1..=4).map(|i| LinkSet::from_links([i, i + 4])).collect();
    let fire = (4.0 * rho).min(1.0);
    Ok(PeriodicAdversarial::new(8, phases, fire, epsilon, seed))
}

/// Replays a recorded arrival trace; zero arrivals after the last row.
#[derive(Debug, Clone)]
pub struct TraceProcess {
    n: usize,
    events: BTreeMap<u64, Vec<(usize, u32)>>,
    declared: Vec<f64>,
    a_max: u32,
    slot: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub slot: u64,
    pub link: usize,
    pub count: u32,
}

impl TraceProcess {
    /// `horizon` fixes the denominator of the declared rate; by default the
    /// last slot present in the trace.
    pub fn new(n: usize, rows: &[TraceRow], horizon: Option<u64>) -> Result<Self> {
        let mut events: BTreeMap<u64, Vec<(usize, u32)>> = BTreeMap::new();
        let mut totals = vec![0u64; n];
        let mut a_max = 1;
        for r in rows {
            if r.link == 0 || r.link > n {
                return Err(Error::LinkOutOfRange { link: r.link, n });
            }
            if r.slot == 0 {
                return Err(Error::Parse("trace slots are 1-based".into()));
            }
            let slot_events = events.entry(r.slot).or_default();
            match slot_events.iter_mut().find(|(l, _)| *l == r.link) {
                Some((_, c)) => *c += r.count,
                None => slot_events.push((r.link, r.count)),
            }
            totals[r.link - 1] += u64::from(r.count);
        }
        for evs in events.values() {
            for &(_, c) in evs {
                a_max = a_max.max(c);
            }
        }
        let last = events.keys().next_back().copied().unwrap_or(0);
        let denom = horizon.unwrap_or(last).max(1) as f64;
        let declared = totals.iter().map(|&t| t as f64 / denom).collect();
        Ok(TraceProcess {
            n,
            events,
            declared,
            a_max,
            slot: 0,
        })
    }

    pub fn from_csv<R: Read>(reader: R, n: usize, horizon: Option<u64>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().map(str::trim).collect::<Vec<_>>() != ["slot", "link", "count"] {
            return Err(Error::Parse(format!(
                "trace header must be `slot,link,count`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let rows = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<TraceRow>, _>>()?;
        Self::new(n, &rows, horizon)
    }
}

impl ArrivalProcess for TraceProcess {
    fn n(&self) -> usize {
        self.n
    }
    fn declared_rate(&self) -> &[f64] {
        &self.declared
    }
    fn a_max(&self) -> u32 {
        self.a_max
    }
    fn next_slot(&mut self, out: &mut [u32]) {
        self.slot += 1;
        out.iter_mut().for_each(|o| *o = 0);
        if let Some(evs) = self.events.get(&self.slot) {
            for &(l, c) in evs {
                out[l - 1] = c;
            }
        }
    }
}

/// Records `horizon` slots of `process` as trace rows (nonzero only).
pub fn record_trace<P: ArrivalProcess + ?Sized>(process: &mut P, horizon: u64) -> Vec<TraceRow> {
    let mut buf = vec![0u32; process.n()];
    let mut rows = Vec::new();
    for slot in 1..=horizon {
        process.next_slot(&mut buf);
        for (i, &c) in buf.iter().enumerate() {
            if c > 0 {
                rows.push(TraceRow { slot, link: i + 1, count: c });
            }
        }
    }
    rows
}

/// Writes trace rows as CSV with header `slot,link,count`.
pub fn write_trace<W: Write>(rows: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(["slot", "link", "count"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `process` for `horizon` slots and returns `A(T) / T`.
pub fn empirical_rate<P: ArrivalProcess + ?Sized>(process: &mut P, horizon: u64) -> Vec<f64> {
    let mut buf = vec![0u32; process.n()];
    let mut tot = vec![0u64; process.n()];
    for _ in 0..horizon {
        process.next_slot(&mut buf);
        for (t, &b) in tot.iter_mut().zip(&buf) {
            *t += u64::from(b);
        }
    }
    tot.iter().map(|&t| t as f64 / horizon.max(1) as f64).collect()
}

/// Per-sub-queue rates `x^(k)`; must sum over `k` to the parent rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fractions: Vec<Vec<f64>>,
}

impl SplitSpec {
    pub fn new(fractions: Vec<Vec<f64>>) -> Self {
        SplitSpec { fractions }
    }

    pub fn k(&self) -> usize {
        self.fractions.len()
    }

    pub fn validate(&self, parent_rate: &[f64]) -> Result<()> {
        if self.fractions.is_empty() {
            return Err(Error::InvalidParameter("split needs at least one sub-queue".into()));
        }
        let n = parent_rate.len();
        for x in &self.fractions {
            crate::graph::check_rates(n, x)?;
        }
        for (i, &a) in parent_rate.iter().enumerate() {
            let s: f64 = self.fractions.iter().map(|x| x[i]).sum();
            if (s - a).abs() > SPLIT_TOL {
                return Err(Error::InvalidParameter(format!(
                    "split fractions at link {} sum to {s}, parent rate is {a}",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Each packet picks sub-queue `k` with probability `x^(k)_i / a_i`.
    #[default]
    Probabilistic,
    /// Smooth weighted round-robin per link; same long-run shares.
    RoundRobin,
}

/// A parent process filtered into `K` sub-processes that sum slot by slot to
/// the parent. Single consumer: each call yields all `K` vectors.
#[derive(Debug, Clone)]
pub struct SplitArrivals<P> {
    parent: P,
    // weights[i][k] = x^(k)_i / a_i
    weights: Vec<Vec<f64>>,
    credit: Vec<Vec<f64>>,
    sub_rates: Vec<Vec<f64>>,
    mode: SplitMode,
    rng: ChaCha8Rng,
    buf: Vec<u32>,
}

pub fn split_process<P: ArrivalProcess>(
    parent: P,
    spec: &SplitSpec,
    seed: u64,
) -> Result<SplitArrivals<P>> {
    SplitArrivals::new(parent, spec, SplitMode::Probabilistic, seed)
}

impl<P: ArrivalProcess> SplitArrivals<P> {
    pub fn new(parent: P, spec: &SplitSpec, mode: SplitMode, seed: u64) -> Result<Self> {
        spec.validate(parent.declared_rate())?;
        let n = parent.n();
        let k = spec.k();
        let weights = (0..n)
            .map(|i| {
                let a = parent.declared_rate()[i];
                if a > 0.0 {
                    spec.fractions.iter().map(|x| x[i] / a).collect()
                } else {
                    // vacuous; any stray packet goes to sub-queue 1
                    (0..k).map(|kk| if kk == 0 { 1.0 } else { 0.0 }).collect()
                }
            })
            .collect();
        Ok(SplitArrivals {
            buf: vec![0; n],
            credit: vec![vec![0.0; k]; n],
            weights,
            sub_rates: spec.fractions.clone(),
            parent,
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn k(&self) -> usize {
        self.sub_rates.len()
    }

    pub fn n(&self) -> usize {
        self.parent.n()
    }

    pub fn parent(&self) -> &P {
        &self.parent
    }

    /// Declared rate of sub-process `k` (0-based).
    pub fn sub_rate(&self, k: usize) -> &[f64] {
        &self.sub_rates[k]
    }

    pub fn a_max(&self) -> u32 {
        self.parent.a_max()
    }

    /// Draws the parent's next slot into `total` and its split into `out`
    /// (`K` vectors of length `n`).
    pub fn next_slot(&mut self, total: &mut [u32], out: &mut [Vec<u32>]) {
        self.parent.next_slot(&mut self.buf);
        total.copy_from_slice(&self.buf);
        for sub in out.iter_mut() {
            sub.iter_mut().for_each(|v| *v = 0);
        }
        for i in 0..self.buf.len() {
            for _ in 0..self.buf[i] {
                let k = self.route(i);
                out[k][i] += 1;
            }
        }
    }

    fn route(&mut self, i: usize) -> usize {
        let w = &self.weights[i];
        match self.mode {
            SplitMode::Probabilistic => {
                let u: f64 = self.rng.gen();
                let mut acc = 0.0;
                let mut last_pos = 0;
                for (k, &wk) in w.iter().enumerate() {
                    if wk > 0.0 {
                        last_pos = k;
                        acc += wk;
                        if u < acc {
                            return k;
                        }
                    }
                }
                last_pos
            }
            SplitMode::RoundRobin => {
                let credit = &mut self.credit[i];
                let total: f64 = w.iter().sum();
                let mut best = 0;
                for k in 0..w.len() {
                    credit[k] += w[k];
                    if credit[k] > credit[best] {
                        best = k;
                    }
                }
                credit[best] -= total;
                best
            }
        }
    }
}

/// Arrival specifier, as accepted by the CLI and config files.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalSpec {
    /// `bernoulli:<r>` (uniform) or `bernoulli:<rates.csv>`.
    Bernoulli(RateSpec),
    /// `ring6adv:<eps>` or `ring6adv:<rho>,<eps>`.
    Ring6Adversarial { rho: f64, epsilon: f64 },
    /// `bipartiteadv:<rho>,<eps>`.
    BipartiteAdversarial { rho: f64, epsilon: f64 },
    /// `bipartitepairs:<rho>,<eps>`.
    BipartitePairs { rho: f64, epsilon: f64 },
    /// `trace:<file.csv>`.
    Trace(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RateSpec {
    Uniform(f64),
    Vector(Vec<f64>),
}

impl RateSpec {
    pub fn resolve(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            RateSpec::Uniform(r) => Ok(vec![*r; n]),
            RateSpec::Vector(v) => {
                crate::graph::check_rates(n, v)?;
                Ok(v.clone())
            }
        }
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad number `{s}`")))
}

/// Reads a `link,rate` CSV into a dense vector.
pub fn read_rates_csv<R: Read>(reader: R) -> Result<Vec<f64>> {
    #[derive(Deserialize)]
    struct Row {
        link: usize,
        rate: f64,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<Row>, _>>()?;
    let n = rows.iter().map(|r| r.link).max().unwrap_or(0);
    let mut out = vec![0.0; n];
    for r in rows {
        if r.link == 0 {
            return Err(Error::LinkOutOfRange { link: 0, n });
        }
        out[r.link - 1] = r.rate;
    }
    Ok(out)
}

impl ArrivalSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, arg) = spec.split_once(':').unwrap_or((spec, ""));
        match name {
            "bernoulli" => {
                if let Ok(r) = arg.trim().parse::<f64>() {
                    Ok(ArrivalSpec::Bernoulli(RateSpec::Uniform(r)))
                } else {
                    let file = std::fs::File::open(arg)?;
                    Ok(ArrivalSpec::Bernoulli(RateSpec::Vector(read_rates_csv(file)?)))
                }
            }
            "ring6adv" => {
                let parts: Vec<&str> = arg.split(',').collect();
                match parts.as_slice() {
                    [eps] => Ok(ArrivalSpec::Ring6Adversarial {
                        rho: 1.0 / 3.0,
                        epsilon: parse_f64(eps)?,
                    }),
                    [rho, eps] => Ok(ArrivalSpec::Ring6Adversarial {
                        rho: parse_f64(rho)?,
                        epsilon: parse_f64(eps)?,
                    }),
                    _ => Err(Error::Parse(format!("bad ring6adv arguments `{arg}`"))),
                }
            }
            "bipartiteadv" => {
                let parts: Vec<&str> = arg.split(',').collect();
                match parts.as_slice() {
                    [rho, eps] => Ok(ArrivalSpec::BipartiteAdversarial {
                        rho: parse_f64(rho)?,
                        epsilon: parse_f64(eps)?,
                    }),
                    _ => Err(Error::Parse(format!("bad bipartiteadv arguments `{arg}`"))),
                }
            }
            "bipartitepairs" => {
                let parts: Vec<&str> = arg.split(',').collect();
                match parts.as_slice() {
                    [rho, eps] => Ok(ArrivalSpec::BipartitePairs {
                        rho: parse_f64(rho)?,
                        epsilon: parse_f64(eps)?,
                    }),
                    _ => Err(Error::Parse(format!("bad bipartitepairs arguments `{arg}`"))),
                }
            }
            "trace" => Ok(ArrivalSpec::Trace(arg.to_string())),
            _ => Err(Error::Parse(format!("unknown arrival process `{spec}`"))),
        }
    }

    /// Same family at uniform offered rate `r`. Adversarial patterns use the
    /// scaled periodic part up to its full rate, then add epsilon.
    pub fn at_uniform_rate(&self, r: f64) -> Result<Self> {
        Ok(match self {
            ArrivalSpec::Bernoulli(_) => ArrivalSpec::Bernoulli(RateSpec::Uniform(r)),
            ArrivalSpec::Ring6Adversarial { .. } => {
                let rho = r.min(1.0 / 3.0);
                ArrivalSpec::Ring6Adversarial { rho, epsilon: (r - rho).max(0.0) }
            }
            ArrivalSpec::BipartiteAdversarial { .. } => {
                let rho = r.min(0.5);
                ArrivalSpec::BipartiteAdversarial { rho, epsilon: (r - rho).max(0.0) }
            }
            ArrivalSpec::BipartitePairs { .. } => {
                let rho = r.min(0.25);
                ArrivalSpec::BipartitePairs { rho, epsilon: (r - rho).max(0.0) }
            }
            ArrivalSpec::Trace(_) => {
                return Err(Error::InvalidParameter("trace arrivals cannot be rate-swept".into()))
            }
        })
    }

    /// Parses a sweep family name (`bernoulli`, `ring6adv`, `bipartiteadv`)
    /// or a full specifier.
    pub fn parse_family(spec: &str) -> Result<Self> {
        match spec {
            "bernoulli" => Ok(ArrivalSpec::Bernoulli(RateSpec::Uniform(0.0))),
            "ring6adv" => Ok(ArrivalSpec::Ring6Adversarial { rho: 0.0, epsilon: 0.0 }),
            "bipartiteadv" => Ok(ArrivalSpec::BipartiteAdversarial { rho: 0.0, epsilon: 0.0 }),
            "bipartitepairs" => Ok(ArrivalSpec::BipartitePairs { rho: 0.0, epsilon: 0.0 }),
            other => Self::parse(other),
        }
    }

    pub fn build(&self, n: usize, seed: u64) -> Result<Box<dyn ArrivalProcess + Send>> {
        let check_n = |want: usize| -> Result<()> {
            if n != want {
                return Err(Error::DimensionMismatch { expected: want, got: n });
            }
            Ok(())
        };
        Ok(match self {
            ArrivalSpec::Bernoulli(r) => Box::new(bernoulli_process(&r.resolve(n)?, seed)?),
            ArrivalSpec::Ring6Adversarial { rho, epsilon } => {
                check_n(6)?;
                Box::new(ring6_adversarial_scaled(*rho, *epsilon, seed)?)
            }
            ArrivalSpec::BipartiteAdversarial { rho, epsilon } => {
                check_n(8)?;
                Box::new(bipartite_adversarial(*rho, *epsilon, seed)?)
            }
            ArrivalSpec::BipartitePairs { rho, epsilon } => {
                check_n(8)?;
                Box::new(bipartite_pair_adversarial(*rho, *epsilon, seed)?)
            }
            ArrivalSpec::Trace(path) => {
                let file = std::fs::File::open(path)?;
                Box::new(TraceProcess::from_csv(file, n, None)?)
            }
        })
    }

    /// True if two different seeds can produce different traces.
    pub fn is_random(&self) -> bool {
        match self {
            ArrivalSpec::Bernoulli(r) => match r {
                RateSpec::Uniform(x) => *x > 0.0 && *x < 1.0,
                RateSpec::Vector(v) => v.iter().any(|&x| x > 0.0 && x < 1.0),
            },
            ArrivalSpec::Ring6Adversarial { rho, epsilon } => {
                (*epsilon > 0.0 && *epsilon < 1.0) || (*rho > 0.0 && *rho < 1.0 / 3.0)
            }
            ArrivalSpec::BipartiteAdversarial { rho, epsilon } => {
                (*epsilon > 0.0 && *epsilon < 1.0) || (*rho > 0.0 && *rho < 0.5)
            }
            ArrivalSpec::BipartitePairs { rho, epsilon } => {
                (*epsilon > 0.0 && *epsilon < 1.0) || (*rho > 0.0 && *rho < 0.25)
            }
            ArrivalSpec::Trace(_) => false,
        }
    }
}

impl std::fmt::Display for ArrivalSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ArrivalSpec::Bernoulli(RateSpec::Uniform(r)) => write!(f, "bernoulli:{r}"),
            ArrivalSpec::Bernoulli(RateSpec::Vector(v)) => write!(f, "bernoulli:{v:?}"),
            ArrivalSpec::Ring6Adversarial { rho, epsilon } => write!(f, "ring6adv:{rho},{epsilon}"),
            ArrivalSpec::BipartiteAdversarial { rho, epsilon } => {
                write!(f, "bipartiteadv:{rho},{epsilon}")
            }
            ArrivalSpec::BipartitePairs { rho, epsilon } => {
                write!(f, "bipartitepairs:{rho},{epsilon}")
            }
            ArrivalSpec::Trace(p) => write!(f, "trace:{p}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn take<P: ArrivalProcess>(p: &mut P, slots: usize) -> Vec<Vec<u32>> {
        let mut buf = vec![0; p.n()];
        (0..slots)
            .map(|_| {
                p.next_slot(&mut buf);
                buf.clone()
            })
            .collect()
    }

    fn unit(n: usize, links: &[usize]) -> Vec<u32> {
        let mut v = vec![0; n];
        for &l in links {
            v[l - 1] += 1;
        }
        v
    }

    #[test]
    fn bernoulli_degenerate_rates() {
        let mut p = bernoulli_process(&[0.0, 1.0, 0.0], 3).unwrap();
        for v in take(&mut p, 200) {
            assert_eq!(v, vec![0, 1, 0]);
        }
        assert!(bernoulli_process(&[1.2], 0).is_err());
        assert!(bernoulli_process(&[-0.1], 0).is_err());
    }

    #[test]
    fn bernoulli_empirical_rate() {
        let mut p = bernoulli_process(&[0.48; 6], 11).unwrap();
        for r in empirical_rate(&mut p, 100_000) {
            assert!((r - 0.48).abs() < 0.01, "{r}");
        }
    }

    #[test]
    fn ring6_periodic_part() {
        let mut p = ring6_adversarial(0.0, 1).unwrap();
        let slots = take(&mut p, 6);
        assert_eq!(slots[0], unit(6, &[1, 4]));
        assert_eq!(slots[1], unit(6, &[2, 5]));
        assert_eq!(slots[2], unit(6, &[3, 6]));
        assert_eq!(slots[3], unit(6, &[1, 4]));
        for r in p.declared_rate() {
            assert!((r - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(ring6_adversarial(1.5, 0).is_err());
        assert!(ring6_adversarial(-0.1, 0).is_err());
    }

    #[test]
    fn ring6_epsilon_rate() {
        let mut p = ring6_adversarial(0.1, 5).unwrap();
        for r in empirical_rate(&mut p, 100_000) {
            assert!((r - (1.0 / 3.0 + 0.1)).abs() < 0.01, "{r}");
        }
    }

    #[test]
    fn epsilon_packets_hit_all_links_together() {
        let mut p = ring6_adversarial(0.5, 9).unwrap();
        let phases = [[1, 4], [2, 5], [3, 6]];
        for (t, v) in take(&mut p, 300).into_iter().enumerate() {
            let base = unit(6, &phases[t % 3]);
            let extra: Vec<u32> = v.iter().zip(&base).map(|(a, b)| a - b).collect();
            assert!(extra.iter().all(|&e| e == extra[0]), "{extra:?}");
        }
    }

    #[test]
    fn bipartite_pattern() {
        let mut p = bipartite_adversarial(0.5, 0.0, 0).unwrap();
        let s = take(&mut p, 4);
        assert_eq!(s[0], unit(8, &[1, 2, 7, 8]));
        assert_eq!(s[1], unit(8, &[3, 4, 5, 6]));
        assert_eq!(s[2], s[0]);
        let mut z = bipartite_adversarial(0.0, 0.0, 0).unwrap();
        assert!(take(&mut z, 100).iter().all(|v| v.iter().all(|&c| c == 0)));
        assert!(bipartite_adversarial(0.6, 0.0, 0).is_err());
    }

    #[test]
    fn bipartite_scaled_rate() {
        let mut p = bipartite_adversarial(0.45, 0.0, 17).unwrap();
        for r in empirical_rate(&mut p, 100_000) {
            assert!((r - 0.45).abs() < 0.01, "{r}");
        }
    }

    #[test]
    fn determinism() {
        let a = take(&mut ring6_adversarial(0.3, 42).unwrap(), 500);
        let b = take(&mut ring6_adversarial(0.3, 42).unwrap(), 500);
        assert_eq!(a, b);
        let c = take(&mut bernoulli_process(&[0.5; 4], 42).unwrap(), 500);
        let d = take(&mut bernoulli_process(&[0.5; 4], 43).unwrap(), 500);
        assert_ne!(c, d);
    }

    #[test]
    fn degenerate_split() {
        let parent = bernoulli_process(&[0.4, 0.7], 1).unwrap();
        let spec = SplitSpec::new(vec![vec![0.4, 0.7], vec![0.0, 0.0]]);
        let mut s = split_process(parent, &spec, 2).unwrap();
        let mut total = vec![0; 2];
        let mut out = vec![vec![0; 2]; 2];
        for _ in 0..1000 {
            s.next_slot(&mut total, &mut out);
            assert_eq!(out[0], total);
            assert_eq!(out[1], vec![0, 0]);
        }
    }

    #[test]
    fn half_split_rates_and_conservation() {
        for mode in [SplitMode::Probabilistic, SplitMode::RoundRobin] {
            let parent = bernoulli_process(&[0.6, 0.0, 0.3], 4).unwrap();
            let spec = SplitSpec::new(vec![vec![0.3, 0.0, 0.15], vec![0.3, 0.0, 0.15]]);
            let mut s = SplitArrivals::new(parent, &spec, mode, 8).unwrap();
            let mut total = vec![0; 3];
            let mut out = vec![vec![0; 3]; 2];
            let mut acc = vec![vec![0u64; 3]; 2];
            let horizon = 100_000;
            for _ in 0..horizon {
                s.next_slot(&mut total, &mut out);
                for i in 0..3 {
                    assert_eq!(out[0][i] + out[1][i], total[i]);
                    acc[0][i] += u64::from(out[0][i]);
                    acc[1][i] += u64::from(out[1][i]);
                }
            }
            for k in 0..2 {
                for i in 0..3 {
                    let r = acc[k][i] as f64 / horizon as f64;
                    assert!((r - spec.fractions[k][i]).abs() < 0.01, "{mode:?} k={k} i={i} r={r}");
                }
                assert_eq!(acc[k][1], 0);
            }
        }
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let parent = bernoulli_process(&[0.4], 1).unwrap();
        let spec = SplitSpec::new(vec![vec![0.3], vec![0.3]]);
        assert!(split_process(parent, &spec, 0).is_err());
        let parent = bernoulli_process(&[0.4], 1).unwrap();
        let spec = SplitSpec::new(vec![vec![0.5], vec![-0.1]]);
        assert!(split_process(parent, &spec, 0).is_err());
    }

    #[test]
    fn trace_round_trip() {
        let mut p = ring6_adversarial(0.2, 77).unwrap();
        let rows = record_trace(&mut p, 600);
        let mut bytes = Vec::new();
        write_trace(&rows, &mut bytes).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("slot,link,count\n"));
        let mut replay = TraceProcess::from_csv(bytes.as_slice(), 6, Some(600)).unwrap();
        let expect = take(&mut ring6_adversarial(0.2, 77).unwrap(), 600);
        assert_eq!(take(&mut replay, 600), expect);
        assert_eq!(replay.a_max(), 2);
        let after = take(&mut replay, 3);
        assert!(after.iter().all(|v| v.iter().all(|&c| c == 0)));
    }

    #[test]
    fn trace_rejects_bad_rows() {
        let bad = "slot,link,count\n1,9,1\n";
        assert!(TraceProcess::from_csv(bad.as_bytes(), 6, None).is_err());
        let bad = "when,who,count\n1,1,1\n";
        assert!(TraceProcess::from_csv(bad.as_bytes(), 6, None).is_err());
    }

    #[test]
    fn specifiers() {
        assert_eq!(
            ArrivalSpec::parse("bernoulli:0.48").unwrap(),
            ArrivalSpec::Bernoulli(RateSpec::Uniform(0.48))
        );
        assert_eq!(
            ArrivalSpec::parse("ring6adv:0.1").unwrap(),
            ArrivalSpec::Ring6Adversarial { rho: 1.0 / 3.0, epsilon: 0.1 }
        );
        assert_eq!(
            ArrivalSpec::parse("bipartiteadv:0.48,0").unwrap(),
            ArrivalSpec::BipartiteAdversarial { rho: 0.48, epsilon: 0.0 }
        );
        assert!(ArrivalSpec::parse("poisson:1").is_err());
        let fam = ArrivalSpec::parse_family("ring6adv").unwrap();
        assert_eq!(
            fam.at_uniform_rate(0.30).unwrap(),
            ArrivalSpec::Ring6Adversarial { rho: 0.30, epsilon: 0.0 }
        );
        match fam.at_uniform_rate(0.4).unwrap() {
            ArrivalSpec::Ring6Adversarial { rho, epsilon } => {
                assert!((rho - 1.0 / 3.0).abs() < 1e-15);
                assert!((epsilon - (0.4 - 1.0 / 3.0)).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
        assert!(ArrivalSpec::parse("ring6adv:0.1").unwrap().build(8, 0).is_err());
    }

    #[test]
    fn rates_csv() {
        let v = read_rates_csv("link,rate\n2,0.5\n1,0.25\n".as_bytes()).unwrap();
        assert_eq!(v, vec![0.25, 0.5]);
    }
}
