//! Modulus as the Dirichlet energy of a resistor network.
//!
//! Nodes inside the region carry the 4-neighbor (5-point) network. An edge's
//! conductance is the fraction of its dual edge inside the region, so edges
//! along the region boundary conduct 1/2; with that weighting the lattice
//! modulus of an `a × b` rectangle is exactly `b/a`. Removed nodes are
//! deleted with their edges.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{Grid, Point};
use crate::sets::PixelMask;

use super::{
    annulus_exact, CurveFamilySpec, FamilyKind, ModulusResult, Quadrilateral, Resolved, SolverKind, FLAG_DIVERGENT,
    FLAG_NO_CURVES,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConductanceOptions {
    /// Stop when `‖r‖ ≤ rel_tol·‖b‖`.
    pub rel_tol: f64,
    /// Defaults to `10·n²`.
    pub max_iter: Option<usize>,
}

impl Default for ConductanceOptions {
    fn default() -> Self {
        ConductanceOptions {
            rel_tol: 1e-10,
            max_iter: None,
        }
    }
}

const FREE: u8 = 0;
const FIXED: u8 = 1;
const OFF: u8 = 2;

struct Network {
    n: usize,
    /// Conductance of the edge from node `k` to `k + 1` (same row).
    ch: Vec<f64>,
    /// Conductance of the edge from node `k` to `k + n` (same column).
    cv: Vec<f64>,
    state: Vec<u8>,
}

impl Network {
    fn build(grid: &Grid, fam: &Resolved) -> Network {
        let n = grid.n();
        let r = fam.region;
        let active = |i: usize, j: usize| r.contains(i, j) && !fam.blocked[j * n + i];
        let mut ch = vec![0.0; n * n];
        let mut cv = vec![0.0; n * n];
        let mut state = vec![OFF; n * n];
        for j in r.j0..=r.j1 {
            for i in r.i0..=r.i1 {
                if !active(i, j) {
                    continue;
                }
                let k = j * n + i;
                state[k] = FREE;
                if i < r.i1 && active(i + 1, j) {
                    ch[k] = if j == r.j0 || j == r.j1 { 0.5 } else { 1.0 };
                }
                if j < r.j1 && active(i, j + 1) {
                    cv[k] = if i == r.i0 || i == r.i1 { 0.5 } else { 1.0 };
                }
            }
        }
        Network { n, ch, cv, state }
    }

    /// Neighbors of `k` with their conductances.
    #[inline]
    fn for_each_edge(&self, k: usize, mut f: impl FnMut(usize, f64)) {
        let n = self.n;
        let i = k % n;
        if i + 1 < n && self.ch[k] > 0.0 {
            f(k + 1, self.ch[k]);
        }
        if i > 0 && self.ch[k - 1] > 0.0 {
            f(k - 1, self.ch[k - 1]);
        }
        if k + n < self.ch.len() && self.cv[k] > 0.0 {
            f(k + n, self.cv[k]);
        }
        if k >= n && self.cv[k - n] > 0.0 {
            f(k - n, self.cv[k - n]);
        }
    }

    fn reachable(&self, from: &[usize]) -> Vec<bool> {
        let mut seen = vec![false; self.state.len()];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &s in from {
            if !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(k) = queue.pop_front() {
            self.for_each_edge(k, |w, _| {
                if !seen[w] && self.state[w] != OFF {
                    seen[w] = true;
                    queue.push_back(w);
                }
            });
        }
        seen
    }

    fn energy(&self, u: &[f64]) -> f64 {
        let n = self.n;
        let mut e = 0.0;
        for k in 0..u.len() {
            if self.ch[k] > 0.0 {
                e += self.ch[k] * (u[k] - u[k + 1]).powi(2);
            }
            if self.cv[k] > 0.0 {
                e += self.cv[k] * (u[k] - u[k + n]).powi(2);
            }
        }
        e
    }

    /// Per-node density `ρ = sqrt(E_v / A_v)`, where each edge's energy is
    /// split evenly between its ends, so that `Σ ρ²·A = energy`.
    fn density(&self, grid: &Grid, fam: &Resolved, u: &[f64]) -> ScalarField {
        let n = self.n;
        let h2 = grid.h() * grid.h();
        let mut node_e = vec![0.0; u.len()];
        for k in 0..u.len() {
            if self.ch[k] > 0.0 {
                let e = 0.5 * self.ch[k] * (u[k] - u[k + 1]).powi(2);
                node_e[k] += e;
                node_e[k + 1] += e;
            }
            if self.cv[k] > 0.0 {
                let e = 0.5 * self.cv[k] * (u[k] - u[k + n]).powi(2);
                node_e[k] += e;
                node_e[k + n] += e;
            }
        }
        let values = node_e
            .iter()
            .enumerate()
            .map(|(k, &e)| {
                let a = fam.area_fraction(k % n, k / n) * h2;
                if a > 0.0 {
                    (e / a).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        ScalarField::new(grid.clone(), values).expect("density has one value per node")
    }

    /// Preconditioned CG on the free nodes; `u` holds the fixed values on
    /// entry and the potential on exit. Returns the iteration count.
    fn solve(&self, u: &mut [f64], rel_tol: f64, max_iter: usize) -> Result<usize> {
        let len = u.len();
        let free: Vec<usize> = (0..len).filter(|&k| self.state[k] == FREE).collect();
        let mut diag = vec![0.0; len];
        for &k in &free {
            self.for_each_edge(k, |_, c| diag[k] += c);
        }
        let mut r = vec![0.0; len];
        for &k in &free {
            let mut acc = 0.0;
            self.for_each_edge(k, |w, c| acc += c * (u[w] - u[k]));
            r[k] = acc;
        }
        // With the free values at zero, the initial residual is the load.
        let b_norm = free.iter().map(|&k| r[k] * r[k]).sum::<f64>().sqrt();
        if b_norm == 0.0 {
            return Ok(0);
        }
        let mut z = vec![0.0; len];
        let mut p = vec![0.0; len];
        let mut q = vec![0.0; len];
        for &k in &free {
            z[k] = r[k] / diag[k];
            p[k] = z[k];
        }
        let mut rz: f64 = free.iter().map(|&k| r[k] * z[k]).sum();
        for iter in 1..=max_iter {
            let mut pq = 0.0;
            for &k in &free {
                let mut acc = diag[k] * p[k];
                // `p` vanishes off the free set, so fixed neighbors drop out.
                self.for_each_edge(k, |w, c| acc -= c * p[w]);
                q[k] = acc;
                pq += p[k] * acc;
            }
            let alpha = rz / pq;
            let mut r_norm2 = 0.0;
            for &k in &free {
                u[k] += alpha * p[k];
                r[k] -= alpha * q[k];
                r_norm2 += r[k] * r[k];
            }
            if r_norm2.sqrt() <= rel_tol * b_norm {
                return Ok(iter);
            }
            let mut rz_new = 0.0;
            for &k in &free {
                z[k] = r[k] / diag[k];
                rz_new += r[k] * z[k];
            }
            let beta = rz_new / rz;
            rz = rz_new;
            for &k in &free {
                p[k] = z[k] + beta * p[k];
            }
        }
        Err(Error::Numeric(format!(
            "conjugate gradient did not reach relative residual {rel_tol} in {max_iter} iterations"
        )))
    }
}

fn solve_resolved(grid: &Grid, fam: &Resolved, opts: &ConductanceOptions) -> Result<ModulusResult> {
    if fam.overlaps() {
        return Ok(ModulusResult::sentinel(
            grid,
            f64::INFINITY,
            FLAG_DIVERGENT,
            SolverKind::Conductance,
            opts.rel_tol,
        ));
    }
    let mut net = Network::build(grid, fam);
    let mut u = vec![0.0; grid.len()];
    for &s in &fam.source {
        net.state[s] = FIXED;
    }
    for &t in &fam.target {
        net.state[t] = FIXED;
        u[t] = 1.0;
    }
    let from_source = net.reachable(&fam.source);
    if !fam.target.iter().any(|&t| from_source[t]) {
        return Ok(ModulusResult::sentinel(
            grid,
            0.0,
            FLAG_NO_CURVES,
            SolverKind::Conductance,
            opts.rel_tol,
        ));
    }
    // Components touching no fixed node would make the system singular.
    let anchored = net.reachable(&[fam.source.as_slice(), fam.target.as_slice()].concat());
    for (st, &a) in net.state.iter_mut().zip(&anchored) {
        if *st == FREE && !a {
            *st = OFF;
        }
    }
    let n = grid.n();
    let max_iter = opts.max_iter.unwrap_or(10 * n * n);
    let iterations = net.solve(&mut u, opts.rel_tol, max_iter)?;
    let value = net.energy(&u);
    Ok(ModulusResult {
        value,
        rho: net.density(grid, fam, &u),
        iterations,
        // Edge densities |Δu|/h telescope to at least 1 along every path.
        certificate: 1.0,
        solver: SolverKind::Conductance,
        converged: true,
        flags: Vec::new(),
        grid_n: n,
        tolerance: opts.rel_tol,
    })
}

/// Conductance solve for an unweighted family.
pub fn family_modulus_conductance(spec: &CurveFamilySpec, opts: &ConductanceOptions) -> Result<ModulusResult> {
    if spec.length_weight.is_some() {
        return Err(Error::Precondition(
            "the conductance solver handles unweighted families only".into(),
        ));
    }
    if !(opts.rel_tol > 0.0) {
        return Err(Error::param("rel_tol", "must be > 0"));
    }
    solve_resolved(&spec.grid, &spec.resolve()?, opts)
}

/// `mod Γ(ζ1, ζ3; Q ∖ removed)`.
pub fn quad_modulus_conductance(q: &Quadrilateral, grid: &Grid, removed: Option<&PixelMask>) -> Result<ModulusResult> {
    let mut spec = CurveFamilySpec::quad(grid.clone(), *q);
    spec.removed = removed.cloned();
    family_modulus_conductance(&spec, &ConductanceOptions::default())
}

/// Modulus of the curves joining the boundary circles of `A(center; r, R)`.
pub fn annulus_modulus(center: Point, r: f64, big_r: f64, grid: &Grid) -> Result<ModulusResult> {
    let spec = CurveFamilySpec::new(grid.clone(), FamilyKind::Annulus { center, r, big_r });
    family_modulus_conductance(&spec, &ConductanceOptions::default())
}

/// Modulus of the curves joining the set to `B(x0, r)`, for a set that
/// misses `B(x0, R)`. Bounded by `2π / ln(R/r)` (see [`annulus_exact`]).
pub fn small_ball_decay(set: &PixelMask, x0: Point, r: f64, big_r: f64) -> Result<ModulusResult> {
    if !(r > 0.0) || !(big_r > r) {
        return Err(Error::Precondition(format!("need 0 < r < R, got r = {r}, R = {big_r}")));
    }
    let grid = set.grid();
    let source = set.nodes();
    if source.is_empty() {
        return Err(Error::Domain("the set is empty".into()));
    }
    let dist = |idx: usize| {
        let p = grid.point_of(idx);
        ((p[0] - x0[0]).powi(2) + (p[1] - x0[1]).powi(2)).sqrt()
    };
    if source.iter().any(|&v| dist(v) <= big_r) {
        return Err(Error::Precondition(format!("the set meets B({x0:?}, {big_r})")));
    }
    let target: Vec<usize> = (0..grid.len()).filter(|&v| dist(v) <= r).collect();
    if target.is_empty() {
        return Err(Error::Geometry(format!("B({x0:?}, {r}) contains no grid node")));
    }
    let spec = CurveFamilySpec::custom(grid.clone(), source, target);
    let mut res = family_modulus_conductance(&spec, &ConductanceOptions::default())?;
    res.flags.push(format!("annulus bound {}", annulus_exact(r, big_r)));
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Rect;
    use crate::modulus::Side;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn square_and_rectangles_are_exact_on_the_lattice() {
        let grid = Grid::unit(17).unwrap();
        let sq = quad_modulus_conductance(&Quadrilateral::new(Rect::new(0.0, 0.0, 1.0, 1.0)), &grid, None).unwrap();
        assert!(rel(sq.value, 1.0) < 1e-9, "{}", sq.value);
        let wide = Quadrilateral::new(Rect::new(0.0, 0.25, 1.0, 0.75));
        let v = quad_modulus_conductance(&wide, &grid, None).unwrap().value;
        assert!(rel(v, 0.5) < 1e-9, "{v}");
        let v = quad_modulus_conductance(&wide.rotated(), &grid, None).unwrap().value;
        assert!(rel(v, 2.0) < 1e-9, "{v}");
    }

    #[test]
    fn energy_equals_density_integral() {
        let grid = Grid::unit(17).unwrap();
        let mut removed = PixelMask::empty(grid.clone());
        for j in 5..9 {
            removed.set(8, j, true);
        }
        let q = Quadrilateral::new(Rect::new(0.0, 0.0, 1.0, 1.0));
        let res = quad_modulus_conductance(&q, &grid, Some(&removed)).unwrap();
        assert!(res.value < 1.0);
        let spec = CurveFamilySpec::quad(grid.clone(), q);
        let fam = spec.resolve().unwrap();
        let h2 = grid.h() * grid.h();
        let integral: f64 = (0..grid.len())
            .map(|k| {
                let (i, j) = grid.coords(k);
                res.rho.get(k).powi(2) * fam.area_fraction(i, j) * h2
            })
            .sum();
        assert!(rel(integral, res.value) < 1e-12);
    }

    #[test]
    fn full_slit_disconnects() {
        let grid = Grid::unit(17).unwrap();
        let mut removed = PixelMask::empty(grid.clone());
        for j in 0..17 {
            removed.set(8, j, true);
        }
        let res = quad_modulus_conductance(
            &Quadrilateral::new(Rect::new(0.0, 0.0, 1.0, 1.0)),
            &grid,
            Some(&removed),
        )
        .unwrap();
        assert_eq!(res.value, 0.0);
        assert!(res.has_flag(FLAG_NO_CURVES));
    }

    #[test]
    fn removed_side_is_a_precondition_error() {
        let grid = Grid::unit(9).unwrap();
        let mut removed = PixelMask::empty(grid.clone());
        for j in 0..9 {
            removed.set(0, j, true);
        }
        let q = Quadrilateral::with_first(Rect::new(0.0, 0.0, 1.0, 1.0), Side::Left);
        assert!(matches!(
            quad_modulus_conductance(&q, &grid, Some(&removed)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn overlapping_custom_sets_diverge() {
        let grid = Grid::unit(5).unwrap();
        let spec = CurveFamilySpec::custom(grid, vec![3, 7], vec![7]);
        let res = family_modulus_conductance(&spec, &ConductanceOptions::default()).unwrap();
        assert_eq!(res.value, f64::INFINITY);
        assert!(res.has_flag(FLAG_DIVERGENT));
    }

    #[test]
    fn coarse_annulus_is_close() {
        let grid = Grid::square([-3.0, -3.0], 6.0, 129).unwrap();
        let res = annulus_modulus([0.0, 0.0], 1.0, std::f64::consts::E, &grid).unwrap();
        assert!(rel(res.value, 2.0 * std::f64::consts::PI) < 0.05, "{}", res.value);
    }

    #[test]
    fn small_ball_decay_respects_annulus_bound() {
        let grid = Grid::square([-2.0, -2.0], 4.0, 65).unwrap();
        let set = PixelMask::from_points(grid.clone(), &[[-1.8, -1.8], [1.8, -1.8]]).unwrap();
        let a = small_ball_decay(&set, [0.5, 0.5], 0.5, 1.2).unwrap();
        let b = small_ball_decay(&set, [0.5, 0.5], 0.2, 1.2).unwrap();
        assert!(a.value <= annulus_exact(0.5, 1.2) * 1.05);
        assert!(b.value < a.value);
        assert!(matches!(
            small_ball_decay(&set, [-1.5, -1.5], 0.2, 1.0),
            Err(Error::Precondition(_))
        ));
    }
}
