#![allow(dead_code)]

use greedy_sched::{ConflictGraph, IncidenceMatrix, PriorityVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// All permutations of `1..=n` (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut a: Vec<usize> = (1..=n).collect();
    let mut out = vec![a.clone()];
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

pub fn norm(g: &ConflictGraph, p: &PriorityVector, a: &[f64]) -> f64 {
    IncidenceMatrix::new(g, p)
        .unwrap()
        .apply(a)
        .into_iter()
        .fold(0.0, f64::max)
}

/// Exhaustive `min_P ||P a||_inf`.
pub fn brute_min_norm(g: &ConflictGraph, a: &[f64]) -> f64 {
    permutations(g.n())
        .into_iter()
        .map(|p| norm(g, &PriorityVector::new(p).unwrap(), a))
        .fold(f64::INFINITY, f64::min)
}

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p_edge: f64) -> ConflictGraph {
    let mut edges = Vec::new();
    for i in 1..=n {
        for j in i + 1..=n {
            if rng.gen::<f64>() < p_edge {
                edges.push((i, j));
            }
        }
    }
    ConflictGraph::new(n, &edges).unwrap()
}

pub fn random_rates(rng: &mut ChaCha8Rng, n: usize, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen::<f64>() * hi).collect()
}
