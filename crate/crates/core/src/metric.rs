//! Path metric `d_ω(x, y) = inf ∫_γ ω ds` on the 8-connected node graph.
//!
//! Edge `(u, v)` costs `|u − v|·(ω(u) + ω(v))/2` (trapezoid rule along the
//! edge). Axis-aligned paths are exact; other directions are overestimated
//! by at most ~8% (the usual 8-neighbor metrication error).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{Grid, NEIGHBORS_8};

#[derive(Clone, Debug)]
pub struct MetricGraph {
    omega: ScalarField,
}

/// Heap entry; ordered so that the smallest distance, then the smallest node
/// index, pops first.
#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Graph distances from a source node set.
#[derive(Clone, Debug)]
pub struct DistanceField {
    pub sources: Vec<usize>,
    /// `+∞` where unreachable (or beyond the query bound).
    pub values: Vec<f64>,
    /// Predecessor on a shortest path; `usize::MAX` at sources and unreached nodes.
    pub pred: Vec<usize>,
}

impl DistanceField {
    /// Shortest path ending at `target`, listed source first.
    pub fn path_to(&self, target: usize) -> Option<Vec<usize>> {
        if !self.values[target].is_finite() {
            return None;
        }
        let mut path = vec![target];
        let mut cur = target;
        while self.pred[cur] != usize::MAX {
            cur = self.pred[cur];
            path.push(cur);
        }
        path.reverse();
        Some(path)
    }

    pub fn to_field(&self, grid: &Grid) -> Result<ScalarField> {
        ScalarField::new(grid.clone(), self.values.clone())
    }
}

/// Options restricting a shortest-path query.
#[derive(Clone, Copy, Default)]
pub struct Query<'a> {
    /// Nodes that paths may not visit.
    pub blocked: Option<&'a [bool]>,
    /// Stop expanding beyond this distance.
    pub bound: Option<f64>,
    /// Node rectangle paths must stay in.
    pub region: Option<crate::grid::NodeRect>,
}

impl MetricGraph {
    pub fn build(omega: &ScalarField) -> Result<Self> {
        if omega.values().iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::param("omega", "weights must be finite and >= 0"));
        }
        Ok(MetricGraph { omega: omega.clone() })
    }

    pub fn grid(&self) -> &Grid {
        self.omega.grid()
    }

    pub fn omega(&self) -> &ScalarField {
        &self.omega
    }

    /// Cost of the edge between `u` and its neighbor in direction `(di, dj)`.
    #[inline]
    pub fn edge_weight(&self, u: usize, v: usize, diagonal: bool) -> f64 {
        let h = self.grid().h();
        let len = if diagonal { h * std::f64::consts::SQRT_2 } else { h };
        len * (self.omega.get(u) + self.omega.get(v)) / 2.0
    }

    /// Edges incident to `u` as `(neighbor, weight)`, in fixed direction order.
    pub fn edges(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let grid = self.grid();
        let (i, j) = grid.coords(u);
        NEIGHBORS_8.iter().filter_map(move |&(di, dj)| {
            grid.offset(i, j, di, dj).map(|(a, b)| {
                let v = grid.index(a, b);
                (v, self.edge_weight(u, v, di != 0 && dj != 0))
            })
        })
    }

    pub fn shortest_distances(&self, sources: &[usize]) -> Result<DistanceField> {
        self.query(sources, Query::default())
    }

    /// Dijkstra from `sources`. Ties pop in increasing node index, so zero-cost
    /// plateaus are explored in a fixed order.
    pub fn query(&self, sources: &[usize], q: Query<'_>) -> Result<DistanceField> {
        if sources.is_empty() {
            return Err(Error::Domain("shortest distances need a nonempty source set".into()));
        }
        let grid = self.grid();
        let n = grid.n();
        let len = grid.len();
        let mut dist = vec![f64::INFINITY; len];
        let mut pred = vec![usize::MAX; len];
        let mut done = vec![false; len];
        let mut heap = BinaryHeap::new();
        let allowed = |v: usize| -> bool {
            if q.blocked.is_some_and(|b| b[v]) {
                return false;
            }
            if let Some(r) = q.region {
                let (i, j) = (v % n, v / n);
                return r.contains(i, j);
            }
            true
        };
        let mut srcs: Vec<usize> = sources.iter().copied().filter(|&s| allowed(s)).collect();
        srcs.sort_unstable();
        srcs.dedup();
        for &s in &srcs {
            dist[s] = 0.0;
            heap.push(Entry { dist: 0.0, node: s });
        }
        let bound = q.bound.unwrap_or(f64::INFINITY);
        let diag = grid.h() * std::f64::consts::SQRT_2;
        let h = grid.h();
        let omega = self.omega.values();
        while let Some(Entry { dist: d, node: u }) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            let (i, j) = (u % n, u / n);
            for &(di, dj) in &NEIGHBORS_8 {
                let Some((a, b)) = grid.offset(i, j, di, dj) else {
                    continue;
                };
                let v = b * n + a;
                if done[v] || !allowed(v) {
                    continue;
                }
                let l = if di != 0 && dj != 0 { diag } else { h };
                let nd = d + l * (omega[u] + omega[v]) / 2.0;
                if nd > bound {
                    continue;
                }
                if nd < dist[v] || (nd == dist[v] && u < pred[v]) {
                    dist[v] = nd;
                    pred[v] = u;
                    heap.push(Entry { dist: nd, node: v });
                }
            }
        }
        Ok(DistanceField {
            sources: srcs,
            values: dist,
            pred,
        })
    }

    /// `d_ω(a, b)`, always searched from the lower index so the value is
    /// exactly symmetric (sums along one path differ in the last bit when
    /// accumulated from the other end).
    pub fn distance(&self, a: usize, b: usize) -> Result<f64> {
        let (s, t) = if a <= b { (a, b) } else { (b, a) };
        Ok(self.shortest_distances(&[s])?.values[t])
    }

    /// Diameter of a node set in the graph metric. Exact (all sources) for at
    /// most `exact_limit` nodes, otherwise a double-sweep lower bound.
    pub fn weighted_diameter(&self, set: &[usize], exact_limit: usize) -> Result<Diameter> {
        if set.is_empty() {
            return Err(Error::Domain("diameter of an empty set".into()));
        }
        let ecc = |s: usize| -> Result<(f64, usize)> {
            let df = self.shortest_distances(&[s])?;
            let mut best = (0.0, s);
            for &t in set {
                if df.values[t] > best.0 {
                    best = (df.values[t], t);
                }
            }
            Ok(best)
        };
        if set.len() <= exact_limit {
            let mut d = 0.0f64;
            for &s in set {
                d = d.max(ecc(s)?.0);
            }
            return Ok(Diameter { value: d, exact: true });
        }
        let (_, far) = ecc(set[0])?;
        let (d, _) = ecc(far)?;
        Ok(Diameter { value: d, exact: false })
    }

    /// Largest `d_ω(center, x) − (p+1)^{-1}·radius^{p+1}` over nodes `x` of the
    /// closed Euclidean ball `B(center, radius)`. Requires `radius < 1/p < 1`.
    pub fn lemma35_distance_bound(&self, center: usize, radius: f64, p: f64) -> Result<f64> {
        if !(p > 1.0) || !(radius > 0.0) || !(radius < 1.0 / p) {
            return Err(Error::Precondition(format!(
                "need 0 < radius < 1/p < 1, got radius = {radius}, p = {p}"
            )));
        }
        let grid = self.grid();
        let n = grid.n();
        let h = grid.h();
        let (ci, cj) = grid.coords(center);
        let reach = (radius / h).floor() as usize;
        if ci < reach || cj < reach || ci + reach >= n || cj + reach >= n {
            return Err(Error::Geometry(format!(
                "ball of radius {radius} around node {center} leaves the grid"
            )));
        }
        let df = self.shortest_distances(&[center])?;
        let bound = radius.powf(p + 1.0) / (p + 1.0);
        let r2 = (radius / h) * (radius / h);
        let mut worst = f64::NEG_INFINITY;
        for j in cj - reach..=cj + reach {
            for i in ci - reach..=ci + reach {
                let di = i as f64 - ci as f64;
                let dj = j as f64 - cj as f64;
                if di * di + dj * dj <= r2 {
                    worst = worst.max(df.values[grid.index(i, j)] - bound);
                }
            }
        }
        Ok(worst)
    }
}

/// Quadrature allowance for [`MetricGraph::lemma35_distance_bound`]:
/// `τ(h) = 2·h·radius^p`, one edge of trapezoid error at each path end
/// evaluated at the largest weight `radius^p` inside the ball.
pub fn lemma35_tolerance(h: f64, radius: f64, p: f64) -> f64 {
    2.0 * h * radius.powf(p)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diameter {
    pub value: f64,
    /// `false` when `value` is a double-sweep lower bound.
    pub exact: bool,
}
