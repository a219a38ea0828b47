//! Square node lattices over axis-aligned rectangles.
//!
//! A [`Grid`] has `n × n` nodes with `n = 2^k + 1`. Node `(i, j)` sits at
//! `origin + (i·h, j·h)`; its flat index is `j·n + i` (row-major, bottom
//! row first).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Closed axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn center(&self) -> Point {
        [(self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0]
    }

    pub fn contains_rect(&self, other: &Rect, tol: f64) -> bool {
        other.x0 >= self.x0 - tol && other.y0 >= self.y0 - tol && other.x1 <= self.x1 + tol && other.y1 <= self.y1 + tol
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    /// Mirror image under `x ↦ 2·axis − x`.
    pub fn mirror_x(&self, axis: f64) -> Rect {
        Rect {
            x0: 2.0 * axis - self.x1,
            y0: self.y0,
            x1: 2.0 * axis - self.x0,
            y1: self.y1,
        }
    }
}

/// Index rectangle `[i0, i1] × [j0, j1]` (inclusive) of grid nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeRect {
    pub i0: usize,
    pub j0: usize,
    pub i1: usize,
    pub j1: usize,
}

impl NodeRect {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        i >= self.i0 && i <= self.i1 && j >= self.j0 && j <= self.j1
    }

    pub fn width(&self) -> usize {
        self.i1 - self.i0
    }

    pub fn height(&self) -> usize {
        self.j1 - self.j0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    origin: Point,
    extent: [f64; 2],
    n: usize,
}

/// The eight lattice directions, axis moves first.
pub const NEIGHBORS_8: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, 1), (1, -1), (-1, -1)];

pub const NEIGHBORS_4: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

impl Grid {
    /// Square grid. `n` must be `2^k + 1` with `n ≥ 3`.
    pub fn new(origin: Point, extent: [f64; 2], n: usize) -> Result<Self> {
        if n < 3 || !(n - 1).is_power_of_two() {
            return Err(Error::param("n", format!("{n} is not 2^k + 1 with n >= 3")));
        }
        if !(extent[0] > 0.0 && extent[0].is_finite()) {
            return Err(Error::param("extent", "must be positive and finite"));
        }
        if (extent[0] - extent[1]).abs() > 1e-12 * extent[0] {
            return Err(Error::param(
                "extent",
                format!("grid must be square, got {}x{}", extent[0], extent[1]),
            ));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::param("origin", "must be finite"));
        }
        Ok(Grid { origin, extent, n })
    }

    /// Square grid over `[x0, x0 + side] × [y0, y0 + side]`.
    pub fn square(origin: Point, side: f64, n: usize) -> Result<Self> {
        Grid::new(origin, [side, side], n)
    }

    /// Unit grid over `[0, 1]²`.
    pub fn unit(n: usize) -> Result<Self> {
        Grid::square([0.0, 0.0], 1.0, n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn extent(&self) -> [f64; 2] {
        self.extent
    }

    pub fn h(&self) -> f64 {
        self.extent[0] / (self.n - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn rect(&self) -> Rect {
        Rect::new(
            self.origin[0],
            self.origin[1],
            self.origin[0] + self.extent[0],
            self.origin[1] + self.extent[1],
        )
    }

    pub fn full_nodes(&self) -> NodeRect {
        NodeRect {
            i0: 0,
            j0: 0,
            i1: self.n - 1,
            j1: self.n - 1,
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> Point {
        let h = self.h();
        [self.origin[0] + i as f64 * h, self.origin[1] + j as f64 * h]
    }

    #[inline]
    pub fn point_of(&self, idx: usize) -> Point {
        let (i, j) = self.coords(idx);
        self.point(i, j)
    }

    /// Neighbor of `(i, j)` in direction `(di, dj)`, if inside the grid.
    #[inline]
    pub fn offset(&self, i: usize, j: usize, di: i64, dj: i64) -> Option<(usize, usize)> {
        let ni = i as i64 + di;
        let nj = j as i64 + dj;
        if ni < 0 || nj < 0 || ni >= self.n as i64 || nj >= self.n as i64 {
            None
        } else {
            Some((ni as usize, nj as usize))
        }
    }

    /// Nearest node to a point, if the point lies within half a cell of the grid.
    pub fn nearest(&self, p: Point) -> Option<(usize, usize)> {
        let h = self.h();
        let fi = ((p[0] - self.origin[0]) / h).round();
        let fj = ((p[1] - self.origin[1]) / h).round();
        if fi < 0.0 || fj < 0.0 || fi > (self.n - 1) as f64 || fj > (self.n - 1) as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    /// Node rectangle whose boundary coincides with `rect`, which must lie on
    /// grid lines (within `1e-6·h`) and inside the grid.
    pub fn node_rect(&self, rect: &Rect) -> Result<NodeRect> {
        let h = self.h();
        let snap = |v: f64, o: f64, what: &str| -> Result<usize> {
            let f = (v - o) / h;
            let r = f.round();
            if (f - r).abs() > 1e-6 {
                return Err(Error::Geometry(format!("{what} = {v} is not on a grid line (h = {h})")));
            }
            if r < 0.0 || r > (self.n - 1) as f64 {
                return Err(Error::Geometry(format!("{what} = {v} lies outside the grid")));
            }
            Ok(r as usize)
        };
        let nr = NodeRect {
            i0: snap(rect.x0, self.origin[0], "x0")?,
            j0: snap(rect.y0, self.origin[1], "y0")?,
            i1: snap(rect.x1, self.origin[0], "x1")?,
            j1: snap(rect.y1, self.origin[1], "y1")?,
        };
        if nr.i1 <= nr.i0 || nr.j1 <= nr.j0 {
            return Err(Error::Geometry(format!(
                "rectangle {rect:?} spans fewer than two nodes per side"
            )));
        }
        Ok(nr)
    }

    /// Same lattice geometry, used to check that fields can be combined.
    pub fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n
            && (self.origin[0] - other.origin[0]).abs() <= 1e-12 * (1.0 + self.extent[0])
            && (self.origin[1] - other.origin[1]).abs() <= 1e-12 * (1.0 + self.extent[0])
            && (self.extent[0] - other.extent[0]).abs() <= 1e-12 * self.extent[0]
    }
}
