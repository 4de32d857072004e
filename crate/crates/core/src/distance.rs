//! Riemannian diameter estimate by shortest paths on the lattice graph.
//!
//! Every lattice point is joined to its `3^n - 1` neighbours in the full
//! cube stencil. An edge costs its Euclidean length times the mean of the
//! length element `(u v)^{2/(n-2)}` at its two endpoints. Dijkstra runs from
//! eight fixed, well-separated sources and the largest distance found is
//! returned. Graph paths only approximate geodesics, so the result is an
//! estimate from above of the true diameter up to metrication error.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::conformal::ConformalMetric;
use crate::grid::{PeriodicGrid, MAX_DIM};

#[derive(Copy, Clone, PartialEq)]
struct Entry {
    cost: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| self.node.cmp(&other.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Neighbour offsets of the full cube stencil with their Euclidean lengths.
fn stencil(grid: &PeriodicGrid) -> Vec<([isize; MAX_DIM], f64)> {
    let n = grid.dim();
    let h = grid.spacings();
    let mut out = Vec::with_capacity(3usize.pow(n as u32) - 1);
    for code in 0..3usize.pow(n as u32) {
        let mut offset = [0isize; MAX_DIM];
        let mut c = code;
        for o in offset.iter_mut().take(n) {
            *o = (c % 3) as isize - 1;
            c /= 3;
        }
        if offset.iter().all(|&o| o == 0) {
            continue;
        }
        let len = (0..n)
            .map(|k| (offset[k] as f64 * h[k]).powi(2))
            .sum::<f64>()
            .sqrt();
        out.push((offset, len));
    }
    out
}

/// Eight source points: the corners of `{0, m/2}^3` for `n = 3`, the
/// even-parity corners of `{0, m/2}^4` for `n = 4`.
pub fn sources(grid: &PeriodicGrid) -> Vec<usize> {
    let n = grid.dim();
    let half = grid.points_per_axis() / 2;
    (0..1usize << n)
        .filter(|bits| n == 3 || bits.count_ones() % 2 == 0)
        .map(|bits| {
            let multi: Vec<usize> = (0..n).map(|k| ((bits >> k) & 1) * half).collect();
            grid.flat_index(&multi)
        })
        .collect()
}

/// Single-source shortest path distances with the given node weights.
pub fn shortest_paths(grid: &PeriodicGrid, weight: &[f64], source: usize) -> Vec<f64> {
    let n = grid.dim();
    let m = grid.points_per_axis() as isize;
    let stencil = stencil(grid);
    let mut dist = vec![f64::INFINITY; grid.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry { cost: 0.0, node: source });
    while let Some(Entry { cost, node }) = heap.pop() {
        if cost > dist[node] {
            continue;
        }
        let here = grid.multi_index(node);
        for (offset, len) in &stencil {
            let mut next = 0usize;
            for k in 0..n {
                let i = (here[k] as isize + offset[k]).rem_euclid(m);
                next = next * m as usize + i as usize;
            }
            let candidate = cost + len * 0.5 * (weight[node] + weight[next]);
            if candidate < dist[next] {
                dist[next] = candidate;
                heap.push(Entry { cost: candidate, node: next });
            }
        }
    }
    dist
}

pub fn diameter_estimate(cm: &ConformalMetric) -> f64 {
    let grid = cm.grid();
    let weight = cm.composite_power(cm.exponents().length());
    sources(grid)
        .into_iter()
        .map(|s| {
            shortest_paths(grid, weight.values(), s)
                .into_iter()
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}
