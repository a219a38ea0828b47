//! Test sets: finite generations of Cantor-type recursions plus simple
//! continua, and their cell-intersection rasterization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Point, Rect};

const MAX_LINE_DEPTH: usize = 22;
const MAX_PRODUCT_DEPTH: usize = 11;

/// Generator description of a planar compact set.
///
/// Cantor-type kinds describe the infinite intersection of a nested
/// recursion; [`CompactSetSpec::generate`] returns a finite generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompactSetSpec {
    /// Horizontal linear Cantor set on `[start, start + (length, 0)]`;
    /// each interval loses its middle fraction `ratio`.
    CantorLine {
        ratio: f64,
        start: Point,
        length: f64,
    },
    /// `C × C` for the linear Cantor set `C` on `[origin, origin + side]`.
    CantorProduct {
        ratio: f64,
        origin: Point,
        side: f64,
    },
    /// Positive-length Cantor set on a horizontal segment. Stage `k`
    /// removes a centered gap of length `gaps[k]·length` from every stage-`k`
    /// interval; `None` uses `gaps[k] = 4^{-k-1}` (total removed length 1/2).
    FatCantor {
        start: Point,
        length: f64,
        gaps: Option<Vec<f64>>,
    },
    Segment {
        a: Point,
        b: Point,
    },
    PolylineArc {
        points: Vec<Point>,
    },
    Circle {
        center: Point,
        radius: f64,
    },
    /// Explicit node set; the bounding box is the mask's grid rectangle.
    RawMask {
        mask: PixelMask,
    },
}

/// One closed piece of a generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Piece {
    /// Closed axis-aligned box, possibly degenerate (an interval or a point).
    Box(Rect),
    Segment(Point, Point),
    Circle {
        center: Point,
        radius: f64,
    },
}

/// Finite union of closed pieces.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub pieces: Vec<Piece>,
}

impl Generation {
    /// The `[x0, x1]` projections of all box pieces, in generation order.
    pub fn intervals(&self) -> Vec<(f64, f64)> {
        self.pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Box(r) => Some((r.x0, r.x1)),
                _ => None,
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Total length of the x-projections of box pieces (Lebesgue measure for
    /// pairwise disjoint intervals).
    pub fn interval_measure(&self) -> f64 {
        self.intervals().iter().map(|(a, b)| b - a).sum()
    }
}

fn check_ratio(ratio: f64) -> Result<()> {
    if ratio > 0.0 && ratio < 1.0 {
        Ok(())
    } else {
        Err(Error::param("ratio", format!("{ratio} is not in (0, 1)")))
    }
}

fn check_positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(field, format!("{v} must be positive and finite")))
    }
}

fn check_point(field: &str, p: Point) -> Result<()> {
    if p.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::param(field, "coordinates must be finite"))
    }
}

/// Intervals of the linear Cantor generation on `[a, a + len]`.
fn cantor_intervals(ratio: f64, a: f64, len: f64, depth: usize) -> Vec<(f64, f64)> {
    let mut cur = vec![(a, a + len)];
    let keep = (1.0 - ratio) / 2.0;
    for _ in 0..depth {
        let mut next = Vec::with_capacity(cur.len() * 2);
        for &(lo, hi) in &cur {
            let child = (hi - lo) * keep;
            next.push((lo, lo + child));
            next.push((hi - child, hi));
        }
        cur = next;
    }
    cur
}

/// Default fat-Cantor gap fractions `4^{-k-1}` for `k < depth`.
pub fn default_fat_gaps(depth: usize) -> Vec<f64> {
    (0..depth).map(|k| 0.25f64.powi(k as i32 + 1)).collect()
}

impl CompactSetSpec {
    /// Middle-thirds Cantor set on `[0, 1] × {0}`.
    pub fn cantor_thirds() -> Self {
        CompactSetSpec::CantorLine {
            ratio: 1.0 / 3.0,
            start: [0.0, 0.0],
            length: 1.0,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            CompactSetSpec::CantorLine { .. } => "cantor_line",
            CompactSetSpec::CantorProduct { .. } => "cantor_product",
            CompactSetSpec::FatCantor { .. } => "fat_cantor",
            CompactSetSpec::Segment { .. } => "segment",
            CompactSetSpec::PolylineArc { .. } => "polyline_arc",
            CompactSetSpec::Circle { .. } => "circle",
            CompactSetSpec::RawMask { .. } => "raw_mask",
        }
    }

    pub fn is_cantor(&self) -> bool {
        matches!(
            self,
            CompactSetSpec::CantorLine { .. } | CompactSetSpec::CantorProduct { .. } | CompactSetSpec::FatCantor { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CompactSetSpec::CantorLine { ratio, start, length } => {
                check_ratio(*ratio)?;
                check_point("start", *start)?;
                check_positive("length", *length)
            }
            CompactSetSpec::CantorProduct { ratio, origin, side } => {
                check_ratio(*ratio)?;
                check_point("origin", *origin)?;
                check_positive("side", *side)
            }
            CompactSetSpec::FatCantor { start, length, gaps } => {
                check_point("start", *start)?;
                check_positive("length", *length)?;
                if let Some(gaps) = gaps {
                    let mut removed = 0.0;
                    let mut interval = 1.0;
                    for (k, &g) in gaps.iter().enumerate() {
                        if !(g > 0.0) || g >= interval {
                            return Err(Error::param(
                                "gaps",
                                format!("gap {k} = {g} does not fit its interval of length {interval}"),
                            ));
                        }
                        removed += g * 2f64.powi(k as i32);
                        interval = (interval - g) / 2.0;
                    }
                    if removed >= 1.0 {
                        return Err(Error::param(
                            "gaps",
                            format!("total removed length {removed} is not < 1"),
                        ));
                    }
                }
                Ok(())
            }
            CompactSetSpec::Segment { a, b } => {
                check_point("a", *a)?;
                check_point("b", *b)
            }
            CompactSetSpec::PolylineArc { points } => {
                if points.len() < 2 {
                    return Err(Error::param("points", "an arc needs at least two vertices"));
                }
                points.iter().try_for_each(|p| check_point("points", *p))
            }
            CompactSetSpec::Circle { center, radius } => {
                check_point("center", *center)?;
                check_positive("radius", *radius)
            }
            CompactSetSpec::RawMask { .. } => Ok(()),
        }
    }

    /// Axis-aligned box containing every generation.
    pub fn bounding_box(&self) -> Rect {
        match self {
            CompactSetSpec::CantorLine { start, length, .. } | CompactSetSpec::FatCantor { start, length, .. } => {
                Rect::new(start[0], start[1], start[0] + length, start[1])
            }
            CompactSetSpec::CantorProduct { origin, side, .. } => {
                Rect::new(origin[0], origin[1], origin[0] + side, origin[1] + side)
            }
            CompactSetSpec::Segment { a, b } => {
                Rect::new(a[0].min(b[0]), a[1].min(b[1]), a[0].max(b[0]), a[1].max(b[1]))
            }
            CompactSetSpec::PolylineArc { points } => {
                let mut r = Rect::new(points[0][0], points[0][1], points[0][0], points[0][1]);
                for p in points {
                    r = r.union(&Rect::new(p[0], p[1], p[0], p[1]));
                }
                r
            }
            CompactSetSpec::Circle { center, radius } => Rect::new(
                center[0] - radius,
                center[1] - radius,
                center[0] + radius,
                center[1] + radius,
            ),
            CompactSetSpec::RawMask { mask } => mask.grid().rect(),
        }
    }

    /// Finite union of pieces at recursion depth `depth`. Non-recursive kinds
    /// ignore `depth`.
    pub fn generate(&self, depth: usize) -> Result<Generation> {
        self.validate()?;
        let pieces = match self {
            CompactSetSpec::CantorLine { ratio, start, length } => {
                if depth > MAX_LINE_DEPTH {
                    return Err(Error::param("depth", format!("{depth} exceeds {MAX_LINE_DEPTH}")));
                }
                cantor_intervals(*ratio, start[0], *length, depth)
                    .into_iter()
                    .map(|(a, b)| Piece::Box(Rect::new(a, start[1], b, start[1])))
                    .collect()
            }
            CompactSetSpec::CantorProduct { ratio, origin, side } => {
                if depth > MAX_PRODUCT_DEPTH {
                    return Err(Error::param("depth", format!("{depth} exceeds {MAX_PRODUCT_DEPTH}")));
                }
                let xs = cantor_intervals(*ratio, origin[0], *side, depth);
                let ys = cantor_intervals(*ratio, origin[1], *side, depth);
                let mut out = Vec::with_capacity(xs.len() * ys.len());
                for &(y0, y1) in &ys {
                    for &(x0, x1) in &xs {
                        out.push(Piece::Box(Rect::new(x0, y0, x1, y1)));
                    }
                }
                out
            }
            CompactSetSpec::FatCantor { start, length, gaps } => {
                if depth > MAX_LINE_DEPTH {
                    return Err(Error::param("depth", format!("{depth} exceeds {MAX_LINE_DEPTH}")));
                }
                let gaps = match gaps {
                    Some(g) => {
                        if g.len() < depth {
                            return Err(Error::param(
                                "gaps",
                                format!("{} gaps given but depth is {depth}", g.len()),
                            ));
                        }
                        g.clone()
                    }
                    None => default_fat_gaps(depth),
                };
                let mut cur = vec![(start[0], start[0] + length)];
                for &g in gaps.iter().take(depth) {
                    let gap = g * length;
                    let mut next = Vec::with_capacity(cur.len() * 2);
                    for &(lo, hi) in &cur {
                        let child = (hi - lo - gap) / 2.0;
                        next.push((lo, lo + child));
                        next.push((hi - child, hi));
                    }
                    cur = next;
                }
                cur.into_iter()
                    .map(|(a, b)| Piece::Box(Rect::new(a, start[1], b, start[1])))
                    .collect()
            }
            CompactSetSpec::Segment { a, b } => vec![Piece::Segment(*a, *b)],
            CompactSetSpec::PolylineArc { points } => points.windows(2).map(|w| Piece::Segment(w[0], w[1])).collect(),
            CompactSetSpec::Circle { center, radius } => vec![Piece::Circle {
                center: *center,
                radius: *radius,
            }],
            CompactSetSpec::RawMask { mask } => mask
                .nodes()
                .into_iter()
                .map(|idx| {
                    let p = mask.grid().point_of(idx);
                    Piece::Box(Rect::new(p[0], p[1], p[0], p[1]))
                })
                .collect(),
        };
        Ok(Generation { pieces })
    }

    /// Occupancy of the depth-`depth` generation on `grid`.
    pub fn rasterize(&self, depth: usize, grid: &Grid) -> Result<PixelMask> {
        let bbox = self.bounding_box();
        let tol = 1e-9 * grid.extent()[0];
        if !grid.rect().contains_rect(&bbox, tol) {
            return Err(Error::Geometry(format!(
                "grid {:?} does not cover the bounding box {:?}",
                grid.rect(),
                bbox
            )));
        }
        let generation = self.generate(depth)?;
        Ok(rasterize_generation(&generation, grid))
    }
}

/// Closed cell `[lo, hi]` of node index `i` along one axis.
#[inline]
fn cell_bounds(origin: f64, h: f64, i: usize) -> (f64, f64) {
    let c = origin + i as f64 * h;
    (c - h / 2.0, c + h / 2.0)
}

/// Node indices whose closed cells meet `[lo, hi]` along one axis.
fn axis_range(origin: f64, h: f64, n: usize, lo: f64, hi: f64) -> Option<(usize, usize)> {
    let guess_lo = ((lo - origin) / h - 0.5).floor() as i64 - 1;
    let guess_hi = ((hi - origin) / h + 0.5).ceil() as i64 + 1;
    let a = guess_lo.max(0) as usize;
    let b = guess_hi.min(n as i64 - 1);
    if b < 0 {
        return None;
    }
    let b = b as usize;
    let mut first = None;
    let mut last = None;
    for i in a..=b.max(a) {
        if i >= n {
            break;
        }
        let (clo, chi) = cell_bounds(origin, h, i);
        if clo <= hi && chi >= lo {
            if first.is_none() {
                first = Some(i);
            }
            last = Some(i);
        }
    }
    first.zip(last)
}

/// Liang–Barsky test: does the closed segment `p→q` meet the closed box?
fn segment_meets_box(p: Point, q: Point, x0: f64, y0: f64, x1: f64, y1: f64) -> bool {
    let d = [q[0] - p[0], q[1] - p[1]];
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for axis in 0..2 {
        let (lo, hi) = if axis == 0 { (x0, x1) } else { (y0, y1) };
        if d[axis] == 0.0 {
            if p[axis] < lo || p[axis] > hi {
                return false;
            }
        } else {
            let mut ta = (lo - p[axis]) / d[axis];
            let mut tb = (hi - p[axis]) / d[axis];
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

fn rasterize_generation(generation: &Generation, grid: &Grid) -> PixelMask {
    let n = grid.n();
    let h = grid.h();
    let [ox, oy] = grid.origin();
    let mut mask = PixelMask::empty(grid.clone());
    for piece in &generation.pieces {
        match piece {
            Piece::Box(r) => {
                let (Some((i0, i1)), Some((j0, j1))) =
                    (axis_range(ox, h, n, r.x0, r.x1), axis_range(oy, h, n, r.y0, r.y1))
                else {
                    continue;
                };
                for j in j0..=j1 {
                    for i in i0..=i1 {
                        mask.set(i, j, true);
                    }
                }
            }
            Piece::Segment(p, q) => {
                let (Some((i0, i1)), Some((j0, j1))) = (
                    axis_range(ox, h, n, p[0].min(q[0]), p[0].max(q[0])),
                    axis_range(oy, h, n, p[1].min(q[1]), p[1].max(q[1])),
                ) else {
                    continue;
                };
                for j in j0..=j1 {
                    let (ylo, yhi) = cell_bounds(oy, h, j);
                    for i in i0..=i1 {
                        let (xlo, xhi) = cell_bounds(ox, h, i);
                        if segment_meets_box(*p, *q, xlo, ylo, xhi, yhi) {
                            mask.set(i, j, true);
                        }
                    }
                }
            }
            Piece::Circle { center, radius } => {
                let (Some((i0, i1)), Some((j0, j1))) = (
                    axis_range(ox, h, n, center[0] - radius, center[0] + radius),
                    axis_range(oy, h, n, center[1] - radius, center[1] + radius),
                ) else {
                    continue;
                };
                for j in j0..=j1 {
                    let (ylo, yhi) = cell_bounds(oy, h, j);
                    for i in i0..=i1 {
                        let (xlo, xhi) = cell_bounds(ox, h, i);
                        let nx = center[0].clamp(xlo, xhi) - center[0];
                        let ny = center[1].clamp(ylo, yhi) - center[1];
                        let fx = (center[0] - xlo).abs().max((center[0] - xhi).abs());
                        let fy = (center[1] - ylo).abs().max((center[1] - yhi).abs());
                        let near = (nx * nx + ny * ny).sqrt();
                        let far = (fx * fx + fy * fy).sqrt();
                        if near <= *radius && *radius <= far {
                            mask.set(i, j, true);
                        }
                    }
                }
            }
        }
    }
    mask
}

/// Occupancy of a compact set on a grid: node `(i, j)` is occupied iff its
/// closed cell of side `h` meets the set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelMask {
    grid: Grid,
    #[serde(with = "bits")]
    occupied: Vec<bool>,
}

mod bits {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[bool], s: S) -> Result<S::Ok, S::Error> {
        let text: String = v.iter().map(|&b| if b { '1' } else { '0' }).collect();
        s.serialize_str(&text)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let text = String::deserialize(d)?;
        text.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(serde::de::Error::custom(format!("bad mask character {other:?}"))),
            })
            .collect()
    }
}

impl PixelMask {
    pub fn empty(grid: Grid) -> Self {
        let len = grid.len();
        PixelMask {
            grid,
            occupied: vec![false; len],
        }
    }

    pub fn from_bits(grid: Grid, occupied: Vec<bool>) -> Result<Self> {
        if occupied.len() != grid.len() {
            return Err(Error::param(
                "occupied",
                format!("expected {} entries, got {}", grid.len(), occupied.len()),
            ));
        }
        Ok(PixelMask { grid, occupied })
    }

    /// Mask occupying the nodes nearest to each point.
    pub fn from_points(grid: Grid, points: &[Point]) -> Result<Self> {
        let mut mask = PixelMask::empty(grid);
        for p in points {
            let (i, j) = mask
                .grid
                .nearest(*p)
                .ok_or_else(|| Error::Geometry(format!("point {p:?} lies outside the grid")))?;
            mask.set(i, j, true);
        }
        Ok(mask)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.occupied
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.occupied[self.grid.index(i, j)]
    }

    #[inline]
    pub fn is_set(&self, idx: usize) -> bool {
        self.occupied[idx]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        let idx = self.grid.index(i, j);
        self.occupied[idx] = value;
    }

    pub fn count(&self) -> usize {
        self.occupied.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.occupied.iter().any(|&b| b)
    }

    /// Flat indices of occupied nodes, ascending.
    pub fn nodes(&self) -> Vec<usize> {
        self.occupied
            .iter()
            .enumerate()
            .filter_map(|(k, &b)| b.then_some(k))
            .collect()
    }

    /// Number of grid columns containing at least one occupied node.
    pub fn occupied_columns(&self) -> usize {
        let n = self.grid.n();
        (0..n).filter(|&i| (0..n).any(|j| self.get(i, j))).count()
    }

    pub fn is_subset_of(&self, other: &PixelMask) -> bool {
        self.occupied.iter().zip(&other.occupied).all(|(&a, &b)| !a || b)
    }

    /// Mirror image under `i ↦ n − 1 − i`.
    pub fn reflect_x(&self) -> PixelMask {
        let n = self.grid.n();
        let mut out = PixelMask::empty(self.grid.clone());
        for j in 0..n {
            for i in 0..n {
                out.set(n - 1 - i, j, self.get(i, j));
            }
        }
        out
    }

    /// Whether the occupied nodes form one 8-connected component.
    pub fn is_connected(&self) -> bool {
        let nodes = self.nodes();
        let Some(&start) = nodes.first() else {
            return false;
        };
        let n = self.grid.n();
        let mut seen = vec![false; self.occupied.len()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut reached = 0usize;
        while let Some(idx) = stack.pop() {
            reached += 1;
            let (i, j) = self.grid.coords(idx);
            for (di, dj) in crate::grid::NEIGHBORS_8 {
                if let Some((a, b)) = self.grid.offset(i, j, di, dj) {
                    let k = b * n + a;
                    if self.occupied[k] && !seen[k] {
                        seen[k] = true;
                        stack.push(k);
                    }
                }
            }
        }
        reached == nodes.len()
    }

    /// True when no two occupied nodes are 8-adjacent.
    pub fn is_totally_disconnected(&self) -> bool {
        let n = self.grid.n();
        self.nodes().into_iter().all(|idx| {
            let (i, j) = self.grid.coords(idx);
            crate::grid::NEIGHBORS_8.iter().all(|&(di, dj)| {
                self.grid
                    .offset(i, j, di, dj)
                    .is_none_or(|(a, b)| !self.occupied[b * n + a])
            })
        })
    }
}
