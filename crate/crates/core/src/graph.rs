//! Conflict graphs, priority vectors and the priority-weighted incidence
//! matrix.
//!
//! Links are numbered `1..=n` everywhere in the public API. Rate and queue
//! vectors are plain slices where position `i - 1` belongs to link `i`.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Hard ceiling on link count, set by the `u64` link-set representation.
pub const MAX_LINKS: usize = 64;

/// Default cap used by [`ConflictGraph::new`].
pub const DEFAULT_N_MAX: usize = MAX_LINKS;

/// A set of links stored as a bitset (bit `i - 1` is link `i`).
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct LinkSet(u64);

impl LinkSet {
    pub const EMPTY: LinkSet = LinkSet(0);

    pub fn from_bits(bits: u64) -> Self {
        LinkSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    /// Builds a set from 1-based link numbers. Panics on link 0 or > 64.
    pub fn from_links<I: IntoIterator<Item = usize>>(links: I) -> Self {
        let mut bits = 0u64;
        for l in links {
            assert!((1..=MAX_LINKS).contains(&l), "link {l} out of range");
            bits |= 1 << (l - 1);
        }
        LinkSet(bits)
    }

    /// All links `1..=n`.
    pub fn full(n: usize) -> Self {
        if n >= 64 {
            LinkSet(u64::MAX)
        } else {
            LinkSet((1u64 << n) - 1)
        }
    }

    pub fn contains(self, link: usize) -> bool {
        (1..=MAX_LINKS).contains(&link) && self.0 & (1 << (link - 1)) != 0
    }

    pub fn insert(&mut self, link: usize) {
        assert!((1..=MAX_LINKS).contains(&link), "link {link} out of range");
        self.0 |= 1 << (link - 1);
    }

    pub fn remove(&mut self, link: usize) {
        if (1..=MAX_LINKS).contains(&link) {
            self.0 &= !(1 << (link - 1));
        }
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn intersects(self, other: LinkSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn union(self, other: LinkSet) -> LinkSet {
        LinkSet(self.0 | other.0)
    }

    pub fn intersection(self, other: LinkSet) -> LinkSet {
        LinkSet(self.0 & other.0)
    }

    pub fn difference(self, other: LinkSet) -> LinkSet {
        LinkSet(self.0 & !other.0)
    }

    /// Links in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(tz + 1)
            }
        })
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.iter().collect()
    }

    /// 0/1 indicator vector of length `n`.
    pub fn indicator(self, n: usize) -> Vec<f64> {
        (1..=n).map(|l| if self.contains(l) { 1.0 } else { 0.0 }).collect()
    }
}

impl fmt::Debug for LinkSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for LinkSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, l) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, "}}")
    }
}

impl FromIterator<usize> for LinkSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        LinkSet::from_links(iter)
    }
}

/// Undirected conflict graph over links `1..=n`. Immutable once built.
#[derive(Clone, PartialEq, Eq)]
pub struct ConflictGraph {
    n: usize,
    // adj[i] holds the neighbourhood of link i + 1
    adj: Vec<u64>,
}

impl ConflictGraph {
    /// Builds a graph from 1-based edge pairs. Duplicate edges (in either
    /// orientation) collapse to one.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::with_limit(n, edges, DEFAULT_N_MAX)
    }

    pub fn with_limit(n: usize, edges: &[(usize, usize)], n_max: usize) -> Result<Self> {
        let limit = n_max.min(MAX_LINKS);
        if n > limit {
            return Err(Error::TooLarge { n, limit });
        }
        if n == 0 {
            return Err(Error::InvalidParameter("graph needs at least one link".into()));
        }
        let mut adj = vec![0u64; n];
        for &(i, j) in edges {
            for l in [i, j] {
                if l == 0 || l > n {
                    return Err(Error::LinkOutOfRange { link: l, n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            adj[i - 1] |= 1 << (j - 1);
            adj[j - 1] |= 1 << (i - 1);
        }
        Ok(ConflictGraph { n, adj })
    }

    /// Cycle `1 - 2 - ... - n - 1`.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::RingTooSmall(n));
        }
        let edges: Vec<_> = (1..=n).map(|i| (i, i % n + 1)).collect();
        Self::new(n, &edges)
    }

    /// The 8-link incomplete bipartite graph: left links 1-4, right links
    /// 5-8, link `i` conflicts with every right link except `i + 4`.
    pub fn bipartite_fig1b() -> Self {
        let mut edges = Vec::with_capacity(12);
        for i in 1..=4 {
            for j in 5..=8 {
                if j != i + 4 {
                    edges.push((i, j));
                }
            }
        }
        Self::new(8, &edges).expect("static graph is valid")
    }

    /// Parses the edge-list text format: first non-comment line is `n`,
    /// then one `i j` pair per line. Lines starting with `#` are skipped.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::Parse("empty edge list".into()))?;
        let n: usize = first
            .parse()
            .map_err(|_| Error::Parse(format!("bad link count `{first}`")))?;
        let mut edges = Vec::new();
        for (lineno, line) in lines {
            let mut it = line.split_whitespace();
            let mut next = || -> Result<usize> {
                let tok = it
                    .next()
                    .ok_or_else(|| Error::Parse(format!("line {}: expected `i j`", lineno + 1)))?;
                tok.parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad link `{tok}`", lineno + 1)))
            };
            let i = next()?;
            let j = next()?;
            edges.push((i, j));
        }
        Self::new(n, &edges)
    }

    /// Accepts `ring:<n>`, `bipartite8`, or a path to an edge-list file.
    pub fn from_spec(spec: &str) -> Result<Self> {
        if let Some(n) = spec.strip_prefix("ring:") {
            let n = n
                .parse()
                .map_err(|_| Error::Parse(format!("bad ring size `{n}`")))?;
            return Self::ring(n);
        }
        if spec == "bipartite8" {
            return Ok(Self::bipartite_fig1b());
        }
        let text = fs::read_to_string(Path::new(spec))?;
        Self::parse_edge_list(&text)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn links(&self) -> LinkSet {
        LinkSet::full(self.n)
    }

    /// N_i for a 1-based link.
    pub fn neighbors(&self, link: usize) -> LinkSet {
        assert!(link >= 1 && link <= self.n, "link {link} out of range");
        LinkSet(self.adj[link - 1])
    }

    pub(crate) fn nbr_bits(&self, idx: usize) -> u64 {
        self.adj[idx]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i >= 1 && i <= self.n && j >= 1 && j <= self.n && self.adj[i - 1] & (1 << (j - 1)) != 0
    }

    /// Edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 1..=self.n {
            for j in LinkSet(self.adj[i - 1]).iter() {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|m| m.count_ones() as usize).sum::<usize>() / 2
    }

    /// True iff no two links of `s` conflict. Links outside `1..=n` make the
    /// answer false.
    pub fn is_independent(&self, s: LinkSet) -> bool {
        if s.difference(self.links()) != LinkSet::EMPTY {
            return false;
        }
        s.iter().all(|l| self.adj[l - 1] & s.0 == 0)
    }

    /// Renders the edge-list text format.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for (i, j) in self.edges() {
            out.push_str(&format!("{i} {j}\n"));
        }
        out
    }
}

impl fmt::Debug for ConflictGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConflictGraph")
            .field("n", &self.n)
            .field("edges", &self.edges())
            .finish()
    }
}

/// Priority vector: `p[i - 1]` is link `i`'s priority, 1 highest.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct PriorityVector {
    p: Vec<usize>,
    // order[r] = 0-based link index holding priority r + 1
    order: Vec<usize>,
}

impl PriorityVector {
    pub fn new(p: Vec<usize>) -> Result<Self> {
        let n = p.len();
        let mut order = vec![usize::MAX; n];
        for (idx, &v) in p.iter().enumerate() {
            if v == 0 || v > n {
                return Err(Error::InvalidPriority(format!(
                    "value {v} at link {} outside 1..={n}",
                    idx + 1
                )));
            }
            if order[v - 1] != usize::MAX {
                return Err(Error::InvalidPriority(format!("value {v} repeated")));
            }
            order[v - 1] = idx;
        }
        Ok(PriorityVector { p, order })
    }

    /// `(1, 2, ..., n)`: link 1 first.
    pub fn identity(n: usize) -> Self {
        Self::new((1..=n).collect()).expect("identity is a permutation")
    }

    /// `(n, ..., 1)`: link n first.
    pub fn reversed(n: usize) -> Self {
        Self::new((1..=n).rev().collect()).expect("reverse is a permutation")
    }

    /// Builds the vector from a consideration order (1-based links, highest
    /// priority first).
    pub fn from_order(order: &[usize]) -> Result<Self> {
        let n = order.len();
        let mut p = vec![0usize; n];
        for (rank, &link) in order.iter().enumerate() {
            if link == 0 || link > n {
                return Err(Error::LinkOutOfRange { link, n });
            }
            if p[link - 1] != 0 {
                return Err(Error::InvalidPriority(format!("link {link} listed twice")));
            }
            p[link - 1] = rank + 1;
        }
        Self::new(p)
    }

    /// Parses whitespace-separated integers, e.g. the priority file format.
    pub fn parse(text: &str) -> Result<Self> {
        let p = text
            .split_whitespace()
            .filter(|t| !t.starts_with('#'))
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad priority `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(p)
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    /// Priority of a 1-based link.
    pub fn priority(&self, link: usize) -> usize {
        self.p[link - 1]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.p
    }

    /// Links in consideration order (highest priority first), 1-based.
    pub fn consideration_order(&self) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().map(|&i| i + 1)
    }

    pub(crate) fn order_indices(&self) -> &[usize] {
        &self.order
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.p.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.p.len(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for PriorityVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, v) in self.p.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Priority-weighted incidence matrix, stored row-wise as the set of
/// higher-priority neighbours. Dense semantics: `P_ii = 1`, `P_ij = 1` iff
/// `j` is a neighbour of `i` with `p_j < p_i`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct IncidenceMatrix {
    higher: Vec<u64>,
}

impl IncidenceMatrix {
    pub fn new(g: &ConflictGraph, p: &PriorityVector) -> Result<Self> {
        p.check_len(g.n())?;
        let higher = (0..g.n())
            .map(|i| {
                LinkSet(g.nbr_bits(i))
                    .iter()
                    .filter(|&j| p.p[j - 1] < p.p[i])
                    .fold(0u64, |m, j| m | 1 << (j - 1))
            })
            .collect();
        Ok(IncidenceMatrix { higher })
    }

    pub fn n(&self) -> usize {
        self.higher.len()
    }

    /// Entry `P_ij`, 1-based.
    pub fn get(&self, i: usize, j: usize) -> u8 {
        if i == j {
            1
        } else {
            (self.higher[i - 1] >> (j - 1) & 1) as u8
        }
    }

    /// Higher-priority neighbours of link `i`.
    pub fn higher_neighbors(&self, link: usize) -> LinkSet {
        LinkSet(self.higher[link - 1])
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        let n = self.n();
        (1..=n)
            .map(|i| (1..=n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// `P a` without validation. Each row sums `a_i` first, then the
    /// higher-priority neighbours in ascending link order.
    pub fn apply(&self, a: &[f64]) -> Vec<f64> {
        self.higher
            .iter()
            .enumerate()
            .map(|(i, &m)| row_sum(a, i, m))
            .collect()
    }
}

/// `a_i + sum_{j in mask} a_j`, summed in ascending link order. Shared by
/// every path that evaluates a closed-neighbourhood load so that equal
/// quantities come out bit-identical.
#[inline]
pub(crate) fn row_sum(a: &[f64], i: usize, mask: u64) -> f64 {
    let mut s = a[i];
    let mut m = mask;
    while m != 0 {
        let j = m.trailing_zeros() as usize;
        m &= m - 1;
        s += a[j];
    }
    s
}

/// Shorthand for [`IncidenceMatrix::new`].
pub fn incidence_matrix(g: &ConflictGraph, p: &PriorityVector) -> Result<IncidenceMatrix> {
    IncidenceMatrix::new(g, p)
}

/// Validates a nonnegative finite rate vector of length `n`.
pub fn check_rates(n: usize, a: &[f64]) -> Result<()> {
    if a.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.len(),
        });
    }
    for (i, &v) in a.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidRate {
                link: i + 1,
                value: v,
            });
        }
    }
    Ok(())
}

/// `||P a||_inf = max_i (a_i + sum of a_j over higher-priority neighbours)`.
pub fn weighted_norm(pm: &IncidenceMatrix, a: &[f64]) -> Result<f64> {
    check_rates(pm.n(), a)?;
    Ok(pm.apply(a).into_iter().fold(0.0, f64::max))
}
