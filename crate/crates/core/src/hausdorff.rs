//! Hausdorff content upper bounds and box-counting dimension for node sets.
//!
//! Nodes stand for their closed cells of side `h`, so a cluster of nodes is
//! charged the diameter of the union of its cells. Euclidean content is the
//! optimum over covers whose members are the intersections of the set with
//! dyadic boxes of the node lattice (a quadtree dynamic program). Weighted
//! content and dimension use greedy covers by metric balls, each ball one
//! bounded shortest-path query.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::metric::{MetricGraph, Query};
use crate::sets::PixelMask;

/// `c(s) = π^{s/2} / (2^s Γ(s/2 + 1))`, the normalizer that makes
/// `H^n` agree with Lebesgue measure on `ℝ^n`; `c(1) = 1`, `c(2) = π/4`.
pub fn normalizer(s: f64) -> f64 {
    std::f64::consts::PI.powf(s / 2.0) / (2f64.powf(s) * statrs::function::gamma::gamma(s / 2.0 + 1.0))
}

#[derive(Clone, Copy)]
pub enum Metric<'a> {
    Euclidean,
    Weighted(&'a MetricGraph),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HausdorffQuery {
    pub s: f64,
    /// Covering sets must have diameter `< scale_cap`; `∞` gives content.
    pub scale_cap: f64,
    /// Multiply by [`normalizer`]`(s)` when set.
    pub normalized: bool,
}

impl HausdorffQuery {
    pub fn content(s: f64) -> Self {
        HausdorffQuery {
            s,
            scale_cap: f64::INFINITY,
            normalized: true,
        }
    }

    pub fn capped(s: f64, scale_cap: f64) -> Self {
        HausdorffQuery {
            s,
            scale_cap,
            normalized: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.s >= 0.0) {
            return Err(Error::param("s", format!("{} must be >= 0", self.s)));
        }
        if !(self.scale_cap > 0.0) {
            return Err(Error::param("scale_cap", format!("{} must be > 0", self.scale_cap)));
        }
        Ok(())
    }

    fn c(&self) -> f64 {
        if self.normalized {
            normalizer(self.s)
        } else {
            1.0
        }
    }
}

type Cell = (i64, i64);

fn cross(o: Cell, a: Cell, b: Cell) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull vertices (monotone chain); collinear points dropped.
fn hull(mut pts: Vec<Cell>) -> Vec<Cell> {
    pts.sort_unstable();
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<Cell> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Cell> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Diameter of the union of the closed cells centered at `pts`, in index
/// units. The function is convex in the point difference, so hull vertices
/// suffice.
fn cell_union_diameter(hull: &[Cell]) -> f64 {
    let mut best = 0i64;
    for (k, a) in hull.iter().enumerate() {
        for b in &hull[k..] {
            let dx = (a.0 - b.0).abs() + 1;
            let dy = (a.1 - b.1).abs() + 1;
            best = best.max(dx * dx + dy * dy);
        }
    }
    (best as f64).sqrt()
}

/// Diameter of the point set itself (node centers), in index units.
fn center_diameter(hull: &[Cell]) -> f64 {
    let mut best = 0i64;
    for (k, a) in hull.iter().enumerate() {
        for b in &hull[k + 1..] {
            let dx = a.0 - b.0;
            let dy = a.1 - b.1;
            best = best.max(dx * dx + dy * dy);
        }
    }
    (best as f64).sqrt()
}

/// Euclidean diameter of the node centers.
pub fn euclidean_diameter(grid: &Grid, points: &[usize]) -> f64 {
    let cells: Vec<Cell> = points
        .iter()
        .map(|&p| {
            let (i, j) = grid.coords(p);
            (i as i64, j as i64)
        })
        .collect();
    center_diameter(&hull(cells)) * grid.h()
}

struct Cluster {
    hull: Vec<Cell>,
    cost: f64,
}

/// Optimal cover over the dyadic-cluster class (see module docs).
fn dyadic_content(grid: &Grid, points: &[usize], q: &HausdorffQuery) -> f64 {
    let h = grid.h();
    let c = q.c();
    let option = |hull: &[Cell]| -> f64 {
        let d = cell_union_diameter(hull) * h;
        if d < q.scale_cap {
            c * d.powf(q.s)
        } else {
            f64::INFINITY
        }
    };
    let mut level: BTreeMap<Cell, Cluster> = BTreeMap::new();
    for &p in points {
        let (i, j) = grid.coords(p);
        let cell = (i as i64, j as i64);
        level.entry(cell).or_insert_with(|| {
            let hull = vec![cell];
            let cost = option(&hull);
            Cluster { hull, cost }
        });
    }
    let levels = (grid.n() - 1).trailing_zeros() + 1;
    for _ in 0..levels {
        let mut parents: BTreeMap<Cell, (Vec<Cell>, f64)> = BTreeMap::new();
        for (key, cl) in level {
            let entry = parents
                .entry((key.0 >> 1, key.1 >> 1))
                .or_insert_with(|| (Vec::new(), 0.0));
            entry.0.extend(cl.hull);
            entry.1 += cl.cost;
        }
        level = parents
            .into_iter()
            .map(|(key, (pts, child_cost))| {
                let hull = hull(pts);
                let cost = option(&hull).min(child_cost);
                (key, Cluster { hull, cost })
            })
            .collect();
    }
    level.values().map(|cl| cl.cost).sum()
}

/// One member of a greedy metric-ball cover.
#[derive(Clone, Debug)]
pub struct Ball {
    pub center: usize,
    pub members: Vec<usize>,
    /// Largest distance from the center to an assigned member.
    pub reach: f64,
}

/// Greedy cover of `points` by closed metric balls of radius `radius`:
/// scan points in increasing node index, open a ball at each uncovered one.
pub fn greedy_ball_cover(graph: &MetricGraph, points: &[usize], radius: f64) -> Result<Vec<Ball>> {
    let mut sorted = points.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let len = graph.grid().len();
    let mut is_point = vec![false; len];
    for &p in &sorted {
        is_point[p] = true;
    }
    let mut covered = vec![false; len];
    let mut balls = Vec::new();
    for &p in &sorted {
        if covered[p] {
            continue;
        }
        let df = graph.query(
            &[p],
            Query {
                bound: Some(radius),
                ..Query::default()
            },
        )?;
        let mut members = Vec::new();
        let mut reach = 0.0f64;
        for &t in &sorted {
            let d = df.values[t];
            if d <= radius && !covered[t] {
                covered[t] = true;
                members.push(t);
                reach = reach.max(d);
            }
        }
        balls.push(Ball {
            center: p,
            members,
            reach,
        });
    }
    Ok(balls)
}

fn weighted_content(graph: &MetricGraph, points: &[usize], q: &HausdorffQuery) -> Result<f64> {
    let omega = graph.omega();
    let cell = graph.grid().h() * std::f64::consts::SQRT_2;
    let diameter = graph.weighted_diameter(points, 32)?.value;
    let c = q.c();
    let mut best = f64::INFINITY;
    let mut radius = diameter;
    for _ in 0..48 {
        let balls = greedy_ball_cover(graph, points, radius)?;
        let mut total = 0.0;
        for b in &balls {
            let size = b.members.iter().map(|&m| omega.get(m)).fold(0.0, f64::max) * cell;
            let d = 2.0 * b.reach + size;
            if d >= q.scale_cap {
                total = f64::INFINITY;
                break;
            }
            total += c * d.powf(q.s);
        }
        best = best.min(total);
        if radius == 0.0 || balls.len() == points.len() {
            break;
        }
        radius /= 2.0;
    }
    Ok(best)
}

/// Upper bound on the `s`-dimensional Hausdorff content (or `H^s_δ` for a
/// finite `scale_cap`) of the node set. Returns `+∞` when no cover in the
/// class respects the cap.
pub fn content_upper(grid: &Grid, points: &[usize], q: &HausdorffQuery, metric: Metric<'_>) -> Result<f64> {
    q.validate()?;
    if points.is_empty() {
        return Ok(0.0);
    }
    match metric {
        Metric::Euclidean => Ok(dyadic_content(grid, points, q)),
        Metric::Weighted(g) => {
            if !g.grid().same_as(grid) {
                return Err(Error::Geometry("metric graph lives on a different grid".into()));
            }
            weighted_content(g, points, q)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleCount {
    pub scale: f64,
    pub count: usize,
    /// `count · scale^slope`, the cover sum at the fitted exponent.
    pub cover_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDimension {
    /// Least-squares slope of `ln N(ε)` against `ln(1/ε)`.
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub counts: Vec<ScaleCount>,
}

impl BoxDimension {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scale,count,cover_sum\n");
        for c in &self.counts {
            out.push_str(&format!("{},{},{}\n", c.scale, c.count, c.cover_sum));
        }
        out
    }
}

/// Number of origin-aligned boxes of side `scale` meeting the node set.
pub fn box_count(grid: &Grid, points: &[usize], scale: f64) -> usize {
    let h = grid.h();
    let mut keys: Vec<(i64, i64)> = points
        .iter()
        .map(|&p| {
            let (i, j) = grid.coords(p);
            (
                (i as f64 * h / scale + 1e-9).floor() as i64,
                (j as f64 * h / scale + 1e-9).floor() as i64,
            )
        })
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// Fits `ln N(ε) ≈ a + D·ln(1/ε)` over `scales`. The Euclidean variant counts
/// lattice-aligned boxes of side `ε`; the weighted variant counts greedy
/// metric balls of radius `ε`.
pub fn box_dimension(grid: &Grid, points: &[usize], metric: Metric<'_>, scales: &[f64]) -> Result<BoxDimension> {
    if scales.len() < 3 {
        return Err(Error::param("scales", "need at least 3 scales"));
    }
    if scales.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::param("scales", "scales must be positive and finite"));
    }
    let lo = scales.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scales.iter().copied().fold(0.0, f64::max);
    if hi / lo < 4.0 * (1.0 - 1e-12) {
        return Err(Error::param("scales", "scales must span at least two octaves"));
    }
    if points.is_empty() {
        return Err(Error::Domain("box dimension of an empty set".into()));
    }
    let mut counts = Vec::with_capacity(scales.len());
    for &scale in scales {
        let count = match metric {
            Metric::Euclidean => box_count(grid, points, scale),
            Metric::Weighted(g) => greedy_ball_cover(g, points, scale)?.len(),
        };
        counts.push(ScaleCount {
            scale,
            count,
            cover_sum: 0.0,
        });
    }
    let xs: Vec<f64> = counts.iter().map(|c| (1.0 / c.scale).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|c| (c.count as f64).ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Numeric(
            "degenerate regression: scales have zero variance".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    for c in &mut counts {
        c.cover_sum = c.count as f64 * c.scale.powf(slope);
    }
    Ok(BoxDimension {
        slope,
        intercept,
        residual,
        counts,
    })
}

/// Estimate of `H¹_∞` next to the diameter for a connected node set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContentIdentity {
    pub content: f64,
    pub diameter: f64,
    /// `4h·(1 + diameter/extent)`.
    pub tolerance: f64,
}

impl ContentIdentity {
    pub fn holds(&self) -> bool {
        (self.content - self.diameter).abs() <= self.tolerance
    }
}

pub fn connected_content_identity_check(mask: &PixelMask) -> Result<ContentIdentity> {
    if !mask.is_connected() {
        return Err(Error::Precondition("mask is not 8-connected".into()));
    }
    let grid = mask.grid();
    let points = mask.nodes();
    let content = content_upper(grid, &points, &HausdorffQuery::content(1.0), Metric::Euclidean)?;
    let diameter = euclidean_diameter(grid, &points);
    Ok(ContentIdentity {
        content,
        diameter,
        tolerance: 4.0 * grid.h() * (1.0 + diameter / grid.extent()[0]),
    })
}
