//! Discrete 2-modulus of curve families on a grid.
//!
//! Curves are 8-connected node paths; a density `ρ` lives on nodes and the
//! `ρ`-length of a path is the trapezoid sum `Σ |e|·(ρ(u) + ρ(v))/2` over its
//! edges. Area is the dual-cell area of each node clipped to the family's
//! region, so boundary nodes carry half (corners a quarter) of `h²`.
//!
//! Two solvers: [`conductance`] solves the Dirichlet problem of the 4-neighbor
//! resistor network (unweighted families only), [`cutting_plane`] optimizes
//! the defining program directly and accepts a length weight `ω`.

pub mod conductance;
pub mod cutting_plane;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{Grid, NodeRect, Point, Rect};
use crate::sets::PixelMask;

pub use conductance::{
    annulus_modulus, family_modulus_conductance, quad_modulus_conductance, small_ball_decay, ConductanceOptions,
};
pub use cutting_plane::{family_modulus_cutting_plane, CuttingPlaneOptions};

/// Flag set when no admissible curve joins source and target.
pub const FLAG_NO_CURVES: &str = "family of no rectifiable admissible curves";
/// Flag set when the family holds a curve of zero length.
pub const FLAG_DIVERGENT: &str = "divergent: family contains a curve of zero length";
pub const FLAG_NOT_CONVERGED: &str = "not converged";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Bottom,
    Right,
    Top,
}

impl Side {
    /// Next side counterclockwise.
    pub fn next(self) -> Side {
        match self {
            Side::Left => Side::Bottom,
            Side::Bottom => Side::Right,
            Side::Right => Side::Top,
            Side::Top => Side::Left,
        }
    }

    /// Nodes of this side of `r`, in increasing index order.
    pub fn nodes(self, grid: &Grid, r: &NodeRect) -> Vec<usize> {
        let mut out: Vec<usize> = match self {
            Side::Left => (r.j0..=r.j1).map(|j| grid.index(r.i0, j)).collect(),
            Side::Right => (r.j0..=r.j1).map(|j| grid.index(r.i1, j)).collect(),
            Side::Bottom => (r.i0..=r.i1).map(|i| grid.index(i, r.j0)).collect(),
            Side::Top => (r.i0..=r.i1).map(|i| grid.index(i, r.j1)).collect(),
        };
        out.sort_unstable();
        out
    }
}

/// Axis-aligned rectangle with marked sides `ζ1..ζ4` in counterclockwise
/// order starting at `first`. `Γ(Q)` joins `ζ1` to `ζ3`, `Γ*(Q)` joins `ζ2`
/// to `ζ4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadrilateral {
    pub rect: Rect,
    pub first: Side,
}

impl Quadrilateral {
    /// `ζ1` left, `ζ2` bottom, `ζ3` right, `ζ4` top.
    pub fn new(rect: Rect) -> Self {
        Quadrilateral {
            rect,
            first: Side::Left,
        }
    }

    pub fn with_first(rect: Rect, first: Side) -> Self {
        Quadrilateral { rect, first }
    }

    /// Same rectangle, marking advanced by one side.
    pub fn rotated(&self) -> Self {
        Quadrilateral {
            rect: self.rect,
            first: self.first.next(),
        }
    }

    pub fn sides(&self) -> [Side; 4] {
        let a = self.first;
        [a, a.next(), a.next().next(), a.next().next().next()]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyKind {
    QuadPrimal {
        quad: Quadrilateral,
    },
    QuadDual {
        quad: Quadrilateral,
    },
    /// Curves joining `|x − center| ≤ r` to `|x − center| ≥ big_r`.
    Annulus {
        center: Point,
        r: f64,
        big_r: f64,
    },
    /// Curves joining two explicit node sets (flat indices).
    Custom {
        source: Vec<usize>,
        target: Vec<usize>,
    },
}

/// A connecting curve family on a grid.
#[derive(Clone, Debug)]
pub struct CurveFamilySpec {
    pub grid: Grid,
    pub kind: FamilyKind,
    /// Curves stay inside this rectangle; defaults to the quadrilateral for
    /// quad kinds and to the whole grid otherwise.
    pub region: Option<Rect>,
    /// Nodes curves must avoid.
    pub removed: Option<PixelMask>,
    /// Length weight `ω`; area is then measured with density `ω²`.
    pub length_weight: Option<ScalarField>,
}

impl CurveFamilySpec {
    pub fn new(grid: Grid, kind: FamilyKind) -> Self {
        CurveFamilySpec {
            grid,
            kind,
            region: None,
            removed: None,
            length_weight: None,
        }
    }

    pub fn quad(grid: Grid, quad: Quadrilateral) -> Self {
        Self::new(grid, FamilyKind::QuadPrimal { quad })
    }

    pub fn custom(grid: Grid, source: Vec<usize>, target: Vec<usize>) -> Self {
        Self::new(grid, FamilyKind::Custom { source, target })
    }

    pub fn with_removed(mut self, removed: PixelMask) -> Self {
        self.removed = Some(removed);
        self
    }

    pub fn with_weight(mut self, omega: ScalarField) -> Self {
        self.length_weight = Some(omega);
        self
    }

    pub fn with_region(mut self, region: Rect) -> Self {
        self.region = Some(region);
        self
    }

    pub(crate) fn resolve(&self) -> Result<Resolved> {
        let grid = &self.grid;
        if let Some(m) = &self.removed {
            if !m.grid().same_as(grid) {
                return Err(Error::Geometry("removed mask lives on a different grid".into()));
            }
        }
        if let Some(w) = &self.length_weight {
            if !w.grid().same_as(grid) {
                return Err(Error::Geometry("length weight lives on a different grid".into()));
            }
            if w.values().iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::param("length_weight", "weights must be finite and >= 0"));
            }
        }
        let blocked: Vec<bool> = match &self.removed {
            Some(m) => m.bits().to_vec(),
            None => vec![false; grid.len()],
        };
        let explicit_region = self.region.map(|r| grid.node_rect(&r)).transpose()?;

        let (region, source, target) = match &self.kind {
            FamilyKind::QuadPrimal { quad } | FamilyKind::QuadDual { quad } => {
                let nr = grid.node_rect(&quad.rect)?;
                let sides = quad.sides();
                let (a, b) = match self.kind {
                    FamilyKind::QuadPrimal { .. } => (sides[0], sides[2]),
                    _ => (sides[1], sides[3]),
                };
                let keep = |side: Side| -> Result<Vec<usize>> {
                    let nodes: Vec<usize> = side.nodes(grid, &nr).into_iter().filter(|&v| !blocked[v]).collect();
                    if nodes.is_empty() {
                        return Err(Error::Precondition(format!(
                            "side {side:?} of the quadrilateral is entirely removed"
                        )));
                    }
                    Ok(nodes)
                };
                (explicit_region.unwrap_or(nr), keep(a)?, keep(b)?)
            }
            FamilyKind::Annulus { center, r, big_r } => {
                let (source, target) = annulus_sets(grid, *center, *r, *big_r)?;
                (explicit_region.unwrap_or(grid.full_nodes()), source, target)
            }
            FamilyKind::Custom { source, target } => {
                let check = |nodes: &[usize], field: &str| -> Result<Vec<usize>> {
                    if nodes.is_empty() {
                        return Err(Error::param(field, "node set is empty"));
                    }
                    if let Some(&bad) = nodes.iter().find(|&&v| v >= grid.len()) {
                        return Err(Error::param(field, format!("node {bad} lies outside the grid")));
                    }
                    if nodes.iter().any(|&v| blocked[v]) {
                        return Err(Error::param(field, "node set meets the removed set"));
                    }
                    let mut v = nodes.to_vec();
                    v.sort_unstable();
                    v.dedup();
                    Ok(v)
                };
                (
                    explicit_region.unwrap_or(grid.full_nodes()),
                    check(source, "source")?,
                    check(target, "target")?,
                )
            }
        };
        for &v in source.iter().chain(&target) {
            let (i, j) = grid.coords(v);
            if !region.contains(i, j) {
                return Err(Error::Geometry(format!(
                    "node ({i}, {j}) of the family lies outside its region"
                )));
            }
        }
        Ok(Resolved {
            region,
            source,
            target,
            blocked,
        })
    }
}

/// Inner disk and outer complement node sets of an annulus.
fn annulus_sets(grid: &Grid, center: Point, r: f64, big_r: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(r > 0.0) || !(big_r > r) {
        return Err(Error::Precondition(format!(
            "annulus needs 0 < r < R, got r = {r}, R = {big_r}"
        )));
    }
    let h = grid.h();
    if r <= 2.0 * h {
        return Err(Error::Geometry(format!(
            "inner radius {r} is not above 2h = {}",
            2.0 * h
        )));
    }
    let rect = grid.rect();
    let tol = 1e-9 * h;
    if center[0] - big_r < rect.x0 - tol
        || center[0] + big_r > rect.x1 + tol
        || center[1] - big_r < rect.y0 - tol
        || center[1] + big_r > rect.y1 + tol
    {
        return Err(Error::Geometry(format!(
            "annulus of outer radius {big_r} leaves the grid"
        )));
    }
    let mut inner = Vec::new();
    let mut outer = Vec::new();
    for idx in 0..grid.len() {
        let p = grid.point_of(idx);
        let d = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
        if d <= r {
            inner.push(idx);
        } else if d >= big_r {
            outer.push(idx);
        }
    }
    Ok((inner, outer))
}

/// Family data in node terms.
pub(crate) struct Resolved {
    pub region: NodeRect,
    pub source: Vec<usize>,
    pub target: Vec<usize>,
    pub blocked: Vec<bool>,
}

impl Resolved {
    /// Dual-cell area fraction of node `(i, j)` inside the region.
    pub fn area_fraction(&self, i: usize, j: usize) -> f64 {
        let r = &self.region;
        if !r.contains(i, j) {
            return 0.0;
        }
        let fx = if i == r.i0 || i == r.i1 { 0.5 } else { 1.0 };
        let fy = if j == r.j0 || j == r.j1 { 0.5 } else { 1.0 };
        fx * fy
    }

    pub fn overlaps(&self) -> bool {
        let mut a = self.source.iter().peekable();
        let mut b = self.target.iter().peekable();
        while let (Some(&&x), Some(&&y)) = (a.peek(), b.peek()) {
            match x.cmp(&y) {
                std::cmp::Ordering::Equal => return true,
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
            }
        }
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Conductance,
    CuttingPlane,
}

/// Solved modulus with its optimal density.
#[derive(Clone, Debug, Serialize)]
pub struct ModulusResult {
    /// `+∞` (serialized as `null`, with [`FLAG_DIVERGENT`]) for families with
    /// a zero-length curve.
    pub value: f64,
    #[serde(skip)]
    pub rho: ScalarField,
    pub iterations: usize,
    /// Minimum `ρ`-length over the family at termination.
    pub certificate: f64,
    pub solver: SolverKind,
    pub converged: bool,
    pub flags: Vec<String>,
    pub grid_n: usize,
    pub tolerance: f64,
}

impl ModulusResult {
    fn sentinel(grid: &Grid, value: f64, flag: &str, solver: SolverKind, tolerance: f64) -> Self {
        ModulusResult {
            value,
            rho: ScalarField::constant(grid.clone(), 0.0),
            iterations: 0,
            certificate: if value == 0.0 { f64::INFINITY } else { 0.0 },
            solver,
            converged: true,
            flags: vec![flag.to_string()],
            grid_n: grid.n(),
            tolerance,
        }
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `2π / ln(R/r)`, the modulus of the family joining the boundary circles of
/// a planar annulus.
pub fn annulus_exact(r: f64, big_r: f64) -> f64 {
    2.0 * std::f64::consts::PI / (big_r / r).ln()
}
