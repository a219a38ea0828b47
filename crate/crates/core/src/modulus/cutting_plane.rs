//! Direct optimization of the modulus program by path generation.
//!
//! With a length weight `ω` the program is
//! `min Σ ρ²ω²·A  s.t.  Σ_γ |e|·(ρω(u) + ρω(v))/2 ≥ 1` for every curve `γ`.
//! It is solved in the variable `σ = ρω`, which turns it into the unweighted
//! program with `σ` pinned to zero where `ω` vanishes (those nodes cost
//! nothing to traverse). Each round finds a shortest `σ`-path; if it is
//! shorter than `1 − tol` it becomes a constraint and the restricted QP is
//! re-solved by Hildreth's coordinate ascent on the dual.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::metric::{MetricGraph, Query};

use super::{CurveFamilySpec, ModulusResult, Resolved, SolverKind, FLAG_DIVERGENT, FLAG_NOT_CONVERGED, FLAG_NO_CURVES};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CuttingPlaneOptions {
    /// Stop once every curve has `ρ`-length at least `1 − tol`.
    pub tol: f64,
    pub max_paths: usize,
    /// Dual ascent stops when no generated constraint is violated (or, if
    /// active, slack) by more than this.
    pub inner_tol: f64,
    /// Dual sweeps allowed per round.
    pub max_sweeps: usize,
    /// Short paths (to distinct target nodes) added per round.
    pub paths_per_round: usize,
}

impl Default for CuttingPlaneOptions {
    fn default() -> Self {
        CuttingPlaneOptions {
            tol: 1e-3,
            max_paths: 5000,
            inner_tol: 1e-4,
            max_sweeps: 2000,
            paths_per_round: 1,
        }
    }
}

impl CuttingPlaneOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::param("tol", format!("{} must lie in (0, 1)", self.tol)));
        }
        if !(self.inner_tol > 0.0) {
            return Err(Error::param("inner_tol", "must be > 0"));
        }
        if self.max_paths == 0 || self.max_sweeps == 0 || self.paths_per_round == 0 {
            return Err(Error::param("max_paths", "path and sweep limits must be positive"));
        }
        Ok(())
    }
}

/// One generated constraint `Σ c_v σ_v ≥ 1`.
struct Cut {
    /// `(node, c_v, c_v / 2A_v)`.
    terms: Vec<(usize, f64, f64)>,
    /// `Σ c_v² / 2A_v`, the curvature of the dual along this coordinate.
    q: f64,
    lambda: f64,
}

struct Dual {
    cuts: Vec<Cut>,
    /// `s_v = Σ_k λ_k c_kv`; the primal is `σ_v = s_v / 2A_v`.
    s: Vec<f64>,
}

impl Dual {
    fn length(&self, cut: &Cut) -> f64 {
        cut.terms.iter().map(|&(v, _, w)| w * self.s[v]).sum()
    }

    /// Hildreth sweeps; returns the largest KKT violation of the last sweep.
    fn ascend(&mut self, inner_tol: f64, max_sweeps: usize) -> f64 {
        let mut worst = f64::INFINITY;
        for _ in 0..max_sweeps {
            worst = 0.0f64;
            for k in 0..self.cuts.len() {
                let g = 1.0 - self.length(&self.cuts[k]);
                let cut = &mut self.cuts[k];
                let viol = if cut.lambda > 0.0 { g.abs() } else { g.max(0.0) };
                worst = worst.max(viol);
                let next = (cut.lambda + g / cut.q).max(0.0);
                let step = next - cut.lambda;
                if step != 0.0 {
                    cut.lambda = next;
                    for &(v, c, _) in &cut.terms {
                        self.s[v] += step * c;
                    }
                }
            }
            if worst <= inner_tol {
                break;
            }
        }
        worst
    }
}

/// Whether source and target are joined through nodes of zero weight only.
fn zero_length_curve(spec_grid: &crate::grid::Grid, fam: &Resolved, omega: &[f64]) -> bool {
    let n = spec_grid.n();
    let open = |k: usize| {
        let (i, j) = spec_grid.coords(k);
        omega[k] == 0.0 && !fam.blocked[k] && fam.region.contains(i, j)
    };
    let mut is_target = vec![false; omega.len()];
    for &t in &fam.target {
        is_target[t] = true;
    }
    let mut seen = vec![false; omega.len()];
    let mut queue: VecDeque<usize> = fam.source.iter().copied().filter(|&s| open(s)).collect();
    for &s in &queue {
        seen[s] = true;
    }
    while let Some(k) = queue.pop_front() {
        if is_target[k] {
            return true;
        }
        let (i, j) = spec_grid.coords(k);
        for (di, dj) in crate::grid::NEIGHBORS_8 {
            if let Some((a, b)) = spec_grid.offset(i, j, di, dj) {
                let w = b * n + a;
                if !seen[w] && open(w) {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    false
}

pub fn family_modulus_cutting_plane(spec: &CurveFamilySpec, opts: &CuttingPlaneOptions) -> Result<ModulusResult> {
    opts.validate()?;
    let fam = spec.resolve()?;
    let grid = &spec.grid;
    let len = grid.len();
    if fam.overlaps() {
        return Ok(ModulusResult::sentinel(
            grid,
            f64::INFINITY,
            FLAG_DIVERGENT,
            SolverKind::CuttingPlane,
            opts.tol,
        ));
    }
    let omega: Vec<f64> = match &spec.length_weight {
        Some(w) => w.values().to_vec(),
        None => vec![1.0; len],
    };
    if zero_length_curve(grid, &fam, &omega) {
        return Ok(ModulusResult::sentinel(
            grid,
            f64::INFINITY,
            FLAG_DIVERGENT,
            SolverKind::CuttingPlane,
            opts.tol,
        ));
    }
    let h = grid.h();
    let area: Vec<f64> = (0..len)
        .map(|k| {
            let (i, j) = grid.coords(k);
            fam.area_fraction(i, j) * h * h
        })
        .collect();

    let mut dual = Dual {
        cuts: Vec::new(),
        s: vec![0.0; len],
    };
    let mut sigma = vec![0.0; len];
    let mut is_target = vec![false; len];
    for &t in &fam.target {
        is_target[t] = true;
    }
    let query = Query {
        blocked: Some(&fam.blocked),
        bound: None,
        region: Some(fam.region),
    };

    let mut rounds = 0usize;
    let mut certificate;
    let mut converged = false;
    loop {
        rounds += 1;
        let graph = MetricGraph::build(&ScalarField::new(grid.clone(), sigma.clone())?)?;
        let df = graph.query(&fam.source, query)?;
        let mut reached: Vec<(f64, usize)> = fam
            .target
            .iter()
            .map(|&t| (df.values[t], t))
            .filter(|(d, _)| d.is_finite())
            .collect();
        if reached.is_empty() {
            return Ok(ModulusResult::sentinel(
                grid,
                0.0,
                FLAG_NO_CURVES,
                SolverKind::CuttingPlane,
                opts.tol,
            ));
        }
        reached.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        certificate = reached[0].0;
        if certificate >= 1.0 - opts.tol {
            converged = true;
            break;
        }
        if dual.cuts.len() >= opts.max_paths {
            break;
        }
        let room = opts.max_paths - dual.cuts.len();
        for &(d, t) in reached.iter().take(opts.paths_per_round.min(room)) {
            if d >= 1.0 - opts.tol {
                break;
            }
            let path = df.path_to(t).expect("reached target has a path");
            let mut coef: Vec<(usize, f64)> = Vec::with_capacity(path.len());
            for w in path.windows(2) {
                let (a, b) = (grid.coords(w[0]), grid.coords(w[1]));
                let diagonal = a.0 != b.0 && a.1 != b.1;
                let half = if diagonal { h * std::f64::consts::SQRT_2 } else { h } / 2.0;
                for v in [w[0], w[1]] {
                    match coef.iter_mut().find(|(u, _)| *u == v) {
                        Some(e) => e.1 += half,
                        None => coef.push((v, half)),
                    }
                }
            }
            coef.retain(|&(v, _)| omega[v] > 0.0);
            if coef.is_empty() {
                // Only reachable for one-node paths, which `overlaps` excludes.
                return Ok(ModulusResult::sentinel(
                    grid,
                    f64::INFINITY,
                    FLAG_DIVERGENT,
                    SolverKind::CuttingPlane,
                    opts.tol,
                ));
            }
            let terms: Vec<(usize, f64, f64)> = coef.iter().map(|&(v, c)| (v, c, c / (2.0 * area[v]))).collect();
            let q = terms.iter().map(|&(_, c, w)| c * w).sum();
            dual.cuts.push(Cut { terms, q, lambda: 0.0 });
        }
        dual.ascend(opts.inner_tol, opts.max_sweeps);
        for v in 0..len {
            // Cancellation in `s` can leave tiny negatives.
            sigma[v] = if area[v] > 0.0 {
                (dual.s[v] / (2.0 * area[v])).max(0.0)
            } else {
                0.0
            };
        }
    }

    let value: f64 = (0..len).map(|v| sigma[v] * sigma[v] * area[v]).sum();
    let rho: Vec<f64> = (0..len)
        .map(|v| {
            if omega[v] > 0.0 {
                (sigma[v] / omega[v]).min(f64::MAX)
            } else {
                0.0
            }
        })
        .collect();
    let mut flags = Vec::new();
    if !converged {
        flags.push(FLAG_NOT_CONVERGED.to_string());
    }
    flags.push(format!("paths {}", dual.cuts.len()));
    Ok(ModulusResult {
        value,
        rho: ScalarField::new(grid.clone(), rho)?,
        iterations: rounds,
        certificate,
        solver: SolverKind::CuttingPlane,
        converged,
        flags,
        grid_n: grid.n(),
        tolerance: opts.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Rect};
    use crate::modulus::{quad_modulus_conductance, FamilyKind, Quadrilateral};
    use crate::sets::PixelMask;

    #[test]
    fn unit_square_matches_conductance() {
        let grid = Grid::unit(17).unwrap();
        let q = Quadrilateral::new(Rect::new(0.0, 0.0, 1.0, 1.0));
        let cp = family_modulus_cutting_plane(&CurveFamilySpec::quad(grid.clone(), q), &CuttingPlaneOptions::default())
            .unwrap();
        let cd = quad_modulus_conductance(&q, &grid, None).unwrap();
        assert!(cp.converged);
        assert!(cp.certificate >= 1.0 - 1e-3);
        assert!(
            (cp.value - cd.value).abs() / cd.value < 0.02,
            "{} vs {}",
            cp.value,
            cd.value
        );
    }

    #[test]
    fn two_adjacent_nodes() {
        // Every path starts with a half edge at the corner (area h²/4) and
        // ends with one at the edge node (area h²/2), so the direct edge is
        // the only binding curve and mod = 1 / (1 + 1/2).
        let grid = Grid::unit(3).unwrap();
        let spec = CurveFamilySpec::custom(grid.clone(), vec![grid.index(0, 0)], vec![grid.index(1, 0)]);
        let opts = CuttingPlaneOptions {
            tol: 1e-9,
            inner_tol: 1e-13,
            max_sweeps: 100_000,
            ..CuttingPlaneOptions::default()
        };
        let res = family_modulus_cutting_plane(&spec, &opts).unwrap();
        assert!(res.converged);
        assert!((res.value - 2.0 / 3.0).abs() < 1e-9, "{}", res.value);
    }

    #[test]
    fn degenerate_families() {
        let grid = Grid::unit(5).unwrap();
        let same = CurveFamilySpec::custom(grid.clone(), vec![6], vec![6]);
        let res = family_modulus_cutting_plane(&same, &CuttingPlaneOptions::default()).unwrap();
        assert_eq!(res.value, f64::INFINITY);

        let mut wall = PixelMask::empty(grid.clone());
        for j in 0..5 {
            wall.set(2, j, true);
        }
        let cut =
            CurveFamilySpec::custom(grid.clone(), vec![grid.index(0, 2)], vec![grid.index(4, 2)]).with_removed(wall);
        let res = family_modulus_cutting_plane(&cut, &CuttingPlaneOptions::default()).unwrap();
        assert_eq!(res.value, 0.0);
        assert!(res.has_flag(FLAG_NO_CURVES));

        let zero = ScalarField::constant(grid.clone(), 0.0);
        let free = CurveFamilySpec::custom(grid.clone(), vec![0], vec![24]).with_weight(zero);
        let res = family_modulus_cutting_plane(&free, &CuttingPlaneOptions::default()).unwrap();
        assert!(res.has_flag(FLAG_DIVERGENT));
    }

    #[test]
    fn iteration_cap_is_reported() {
        let grid = Grid::unit(17).unwrap();
        let q = Quadrilateral::new(Rect::new(0.0, 0.0, 1.0, 1.0));
        let opts = CuttingPlaneOptions {
            max_paths: 3,
            ..CuttingPlaneOptions::default()
        };
        let res = family_modulus_cutting_plane(&CurveFamilySpec::quad(grid, q), &opts).unwrap();
        assert!(!res.converged);
        assert!(res.has_flag(FLAG_NOT_CONVERGED));
        assert!(res.certificate < 1.0 - 1e-3);
    }

    #[test]
    fn unit_weight_equals_unweighted() {
        let grid = Grid::unit(9).unwrap();
        let kind = FamilyKind::QuadDual {
            quad: Quadrilateral::new(Rect::new(0.0, 0.0, 1.0, 0.5)),
        };
        let plain = CurveFamilySpec::new(grid.clone(), kind.clone());
        let weighted = CurveFamilySpec::new(grid.clone(), kind).with_weight(ScalarField::constant(grid, 1.0));
        let opts = CuttingPlaneOptions::default();
        let a = family_modulus_cutting_plane(&plain, &opts).unwrap().value;
        let b = family_modulus_cutting_plane(&weighted, &opts).unwrap().value;
        assert_eq!(a, b);
    }
}
