//! Shared oracles for the integration and acceptance tests.
#![allow(dead_code)]

use modlab::grid::{NodeRect, NEIGHBORS_8};
use modlab::modulus::{CurveFamilySpec, CuttingPlaneOptions};
use modlab::{Grid, PixelMask, Rect};
use nalgebra::{DMatrix, DVector};

/// Fixed seed for every sampled invariant check.
pub const SEED: u64 = 0x5EED;

/// A custom family on a small grid, described by node coordinates.
#[derive(Clone, Debug)]
pub struct SmallFamily {
    pub name: &'static str,
    pub source: Vec<(usize, usize)>,
    pub target: Vec<(usize, usize)>,
    pub removed: Vec<(usize, usize)>,
    pub region: Option<Rect>,
}

impl SmallFamily {
    pub fn spec(&self, grid: &Grid) -> CurveFamilySpec {
        let idx = |v: &[(usize, usize)]| v.iter().map(|&(i, j)| grid.index(i, j)).collect::<Vec<_>>();
        let mut spec = CurveFamilySpec::custom(grid.clone(), idx(&self.source), idx(&self.target));
        if !self.removed.is_empty() {
            let mut m = PixelMask::empty(grid.clone());
            for &(i, j) in &self.removed {
                m.set(i, j, true);
            }
            spec = spec.with_removed(m);
        }
        if let Some(r) = self.region {
            spec = spec.with_region(r);
        }
        spec
    }
}

fn col(i: usize) -> Vec<(usize, usize)> {
    (0..5).map(|j| (i, j)).collect()
}

fn row(j: usize) -> Vec<(usize, usize)> {
    (0..5).map(|i| (i, j)).collect()
}

/// The fixed list of custom families on the 5×5 grid.
pub fn five_by_five_families() -> Vec<SmallFamily> {
    let f = |name, source, target, removed: Vec<(usize, usize)>| SmallFamily {
        name,
        source,
        target,
        removed,
        region: None,
    };
    vec![
        f("adjacent", vec![(0, 0)], vec![(1, 0)], vec![]),
        f("corner_to_corner", vec![(0, 0)], vec![(4, 4)], vec![]),
        f("mid_left_to_mid_right", vec![(0, 2)], vec![(4, 2)], vec![]),
        f("interior_pair", vec![(1, 1)], vec![(3, 3)], vec![]),
        f("left_to_right", col(0), col(4), vec![]),
        f("bottom_to_top_hole", row(0), row(4), vec![(2, 2)]),
        f("left_to_right_slit", col(0), col(4), vec![(2, 1), (2, 2), (2, 3)]),
        f("point_to_side", vec![(2, 0)], row(4), vec![]),
        f("two_corners_to_point", vec![(0, 0), (0, 4)], vec![(4, 2)], vec![]),
        f("around_wall", vec![(0, 0)], vec![(4, 0)], vec![(2, 0), (2, 1), (2, 2)]),
        f(
            "center_to_frame",
            vec![(2, 2)],
            [row(0), row(4), vec![(0, 1), (0, 2), (0, 3), (4, 1), (4, 2), (4, 3)]].concat(),
            vec![],
        ),
        SmallFamily {
            name: "sub_region",
            source: vec![(0, 0), (0, 1), (0, 2), (0, 3)],
            target: vec![(3, 0), (3, 1), (3, 2), (3, 3)],
            removed: vec![],
            region: Some(Rect::new(0.0, 0.0, 0.75, 0.75)),
        },
    ]
}

fn edge_len(h: f64, a: (usize, usize), b: (usize, usize)) -> f64 {
    if a.0 != b.0 && a.1 != b.1 {
        h * std::f64::consts::SQRT_2
    } else {
        h
    }
}

fn adjacent(a: (usize, usize), b: (usize, usize)) -> bool {
    a != b && a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1
}

/// Every path from the source to the target set that is not dominated by a
/// chord shortcut, as node-coefficient vectors `c_v = Σ |e|/2` over incident
/// path edges. Paths meet the source only at their first node and the target
/// only at their last.
pub fn enumerate_path_coefficients(grid: &Grid, fam: &SmallFamily) -> Vec<Vec<f64>> {
    let n = grid.n();
    let h = grid.h();
    let region = match fam.region {
        Some(r) => grid.node_rect(&r).unwrap(),
        None => grid.full_nodes(),
    };
    let allowed = |v: (usize, usize)| region.contains(v.0, v.1) && !fam.removed.contains(&v);
    let mut out = Vec::new();
    let mut path: Vec<(usize, usize)> = Vec::new();

    fn dfs(
        path: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<f64>>,
        fam: &SmallFamily,
        n: usize,
        h: f64,
        allowed: &dyn Fn((usize, usize)) -> bool,
    ) {
        let u = *path.last().unwrap();
        for &(di, dj) in NEIGHBORS_8.iter() {
            let (a, b) = (u.0 as i64 + di, u.1 as i64 + dj);
            if a < 0 || b < 0 || a >= n as i64 || b >= n as i64 {
                continue;
            }
            let v = (a as usize, b as usize);
            if !allowed(v) || path.contains(&v) || fam.source.contains(&v) {
                continue;
            }
            let m = path.len();
            // a chord p_a–v no longer than both edges it replaces gives a
            // componentwise cheaper curve
            let dominated = (0..m.saturating_sub(1)).any(|k| {
                adjacent(path[k], v) && {
                    let chord = edge_len(h, path[k], v);
                    chord <= edge_len(h, path[k], path[k + 1]) && chord <= edge_len(h, path[m - 1], v)
                }
            });
            if dominated {
                continue;
            }
            path.push(v);
            if fam.target.contains(&v) {
                let mut c = vec![0.0; n * n];
                for w in path.windows(2) {
                    let l = edge_len(h, w[0], w[1]) / 2.0;
                    c[w[0].1 * n + w[0].0] += l;
                    c[w[1].1 * n + w[1].0] += l;
                }
                out.push(c);
            } else {
                dfs(path, out, fam, n, h, allowed);
            }
            path.pop();
        }
    }

    for &s in &fam.source {
        if !allowed(s) {
            continue;
        }
        path.push(s);
        dfs(&mut path, &mut out, fam, n, h, &allowed);
        path.pop();
    }
    out
}

/// Dual-cell area of every node inside the region (halved per boundary axis).
pub fn node_areas(grid: &Grid, region: NodeRect) -> Vec<f64> {
    let h = grid.h();
    (0..grid.len())
        .map(|k| {
            let (i, j) = grid.coords(k);
            if !region.contains(i, j) {
                return 0.0;
            }
            let fx = if i == region.i0 || i == region.i1 { 0.5 } else { 1.0 };
            let fy = if j == region.j0 || j == region.j1 { 0.5 } else { 1.0 };
            fx * fy * h * h
        })
        .collect()
}

/// Minimum-norm point of the convex hull of `points` (Wolfe's algorithm).
pub fn min_norm_point(points: &[DVector<f64>]) -> DVector<f64> {
    let eps = 1e-14;
    let start = (0..points.len())
        .min_by(|&a, &b| points[a].norm_squared().total_cmp(&points[b].norm_squared()))
        .expect("nonempty point set");
    let mut corral = vec![start];
    let mut lambda = vec![1.0];
    let mut x = points[start].clone();
    let scale = points.iter().map(|p| p.norm_squared()).fold(0.0, f64::max);
    for _ in 0..100_000 {
        let (j, xdj) = (0..points.len())
            .map(|k| (k, x.dot(&points[k])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if x.norm_squared() - xdj <= eps * scale || corral.contains(&j) {
            return x;
        }
        corral.push(j);
        lambda.push(0.0);
        loop {
            let k = corral.len();
            let mut m = DMatrix::zeros(k + 1, k + 1);
            for a in 0..k {
                for b in 0..k {
                    m[(a, b)] = points[corral[a]].dot(&points[corral[b]]);
                }
                m[(a, k)] = 1.0;
                m[(k, a)] = 1.0;
            }
            let mut rhs = DVector::zeros(k + 1);
            rhs[k] = 1.0;
            let alpha = m.svd(true, true).solve(&rhs, 1e-13).expect("svd solve");
            let alpha: Vec<f64> = (0..k).map(|a| alpha[a]).collect();
            if alpha.iter().all(|&a| a > 1e-15) {
                lambda = alpha;
                break;
            }
            let mut theta = f64::INFINITY;
            for a in 0..k {
                if alpha[a] <= 1e-15 {
                    let d = lambda[a] - alpha[a];
                    if d > 0.0 {
                        theta = theta.min(lambda[a] / d);
                    }
                }
            }
            let theta = if theta.is_finite() { theta } else { 0.0 };
            for a in 0..k {
                lambda[a] += theta * (alpha[a] - lambda[a]);
            }
            let mut a = 0;
            while a < corral.len() {
                if lambda[a] <= 1e-15 {
                    corral.remove(a);
                    lambda.remove(a);
                } else {
                    a += 1;
                }
            }
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
        }
        x = corral
            .iter()
            .zip(&lambda)
            .fold(DVector::zeros(x.len()), |acc, (&c, &l)| acc + &points[c] * l);
    }
    panic!("min-norm point iteration did not terminate");
}

/// Exact modulus of a small custom family: `1 / |p*|²` for the minimum-norm
/// point `p*` of the scaled path vectors `c_v / √A_v`.
pub fn exhaustive_modulus(grid: &Grid, fam: &SmallFamily) -> (f64, usize) {
    let region = match fam.region {
        Some(r) => grid.node_rect(&r).unwrap(),
        None => grid.full_nodes(),
    };
    let area = node_areas(grid, region);
    let paths = enumerate_path_coefficients(grid, fam);
    let points: Vec<DVector<f64>> = paths
        .iter()
        .map(|c| {
            DVector::from_iterator(
                c.len(),
                c.iter()
                    .zip(&area)
                    .map(|(&c, &a)| if c > 0.0 { c / a.sqrt() } else { 0.0 }),
            )
        })
        .collect();
    let p = min_norm_point(&points);
    (1.0 / p.norm_squared(), paths.len())
}

/// Tight cutting-plane options for oracle comparisons.
pub fn tight_cutting_plane() -> CuttingPlaneOptions {
    CuttingPlaneOptions {
        tol: 1e-10,
        inner_tol: 1e-13,
        max_sweeps: 1_000_000,
        max_paths: 100_000,
        ..CuttingPlaneOptions::default()
    }
}

/// Outcome of one named invariant check.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

pub fn failures(checks: &[Check]) -> Vec<String> {
    checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect()
}

fn conductance(spec: &CurveFamilySpec) -> f64 {
    use modlab::modulus::{family_modulus_conductance, ConductanceOptions};
    family_modulus_conductance(spec, &ConductanceOptions::default())
        .unwrap()
        .value
}

/// Random node block strictly inside columns `i0+1 ..= i1-1`.
fn random_block(rng: &mut impl rand::Rng, r: &NodeRect) -> (usize, usize, usize, usize) {
    let w = rng.gen_range(1..=3usize);
    let hgt = rng.gen_range(1..=(r.j1 - r.j0).min(6));
    let i = rng.gen_range(r.i0 + 1..=r.i1 - w);
    let j = rng.gen_range(r.j0..=r.j1 + 1 - hgt);
    (i, j, w, hgt)
}

fn add_block(m: &mut PixelMask, r: &NodeRect, b: (usize, usize, usize, usize)) {
    for i in b.0..b.0 + b.2 {
        for j in b.1..b.1 + b.3 {
            if i > r.i0 && i < r.i1 && j >= r.j0 && j <= r.j1 {
                m.set(i, j, true);
            }
        }
    }
}

/// Modulus axioms over a seeded list of quadrilaterals with removed blocks
/// on the 33×33 unit grid, plus nested concentric annuli.
pub fn axiom_suite() -> Vec<Check> {
    use modlab::modulus::{annulus_modulus, Quadrilateral};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(SEED);
    let grid = Grid::unit(33).unwrap();
    let h = grid.h();
    let mut checks = Vec::new();
    for k in 0..20 {
        let i0 = rng.gen_range(0..=12usize);
        let j0 = rng.gen_range(0..=12usize);
        let i1 = rng.gen_range(i0 + 10..=32);
        let j1 = rng.gen_range(j0 + 8..=32);
        let rect = Rect::new(i0 as f64 * h, j0 as f64 * h, i1 as f64 * h, j1 as f64 * h);
        let nr = grid.node_rect(&rect).unwrap();
        let quad = Quadrilateral::new(rect);
        let mut mask = PixelMask::empty(grid.clone());
        for _ in 0..rng.gen_range(1..=3) {
            let b = random_block(&mut rng, &nr);
            add_block(&mut mask, &nr, b);
        }
        let mut bigger = mask.clone();
        let b = random_block(&mut rng, &nr);
        add_block(&mut bigger, &nr, b);

        let full = conductance(&CurveFamilySpec::quad(grid.clone(), quad));
        let removed = conductance(&CurveFamilySpec::quad(grid.clone(), quad).with_removed(mask.clone()));
        let more = conductance(&CurveFamilySpec::quad(grid.clone(), quad).with_removed(bigger));
        checks.push(Check::new(
            format!("instance {k}: removal monotonicity"),
            removed / full <= 1.0 + 1e-3,
            format!("ratio {}", removed / full),
        ));
        checks.push(Check::new(
            format!("instance {k}: monotone in the removed set"),
            more <= removed * (1.0 + 1e-9),
            format!("{more} vs {removed}"),
        ));

        let left: Vec<usize> = (nr.j0..=nr.j1).map(|j| grid.index(nr.i0, j)).collect();
        let right: Vec<usize> = (nr.j0..=nr.j1).map(|j| grid.index(nr.i1, j)).collect();
        let mid = left.len() / 2;
        let fam = |src: &[usize]| {
            conductance(
                &CurveFamilySpec::custom(grid.clone(), src.to_vec(), right.clone())
                    .with_region(rect)
                    .with_removed(mask.clone()),
            )
        };
        let all = fam(&left);
        let lower = fam(&left[..mid]);
        let upper = fam(&left[mid..]);
        checks.push(Check::new(
            format!("instance {k}: monotone in the family"),
            lower <= all * (1.0 + 1e-9) && upper <= all * (1.0 + 1e-9),
            format!("{lower}, {upper} vs {all}"),
        ));
        checks.push(Check::new(
            format!("instance {k}: subadditivity"),
            all <= (lower + upper) * (1.0 + 1e-9),
            format!("{all} vs {lower} + {upper}"),
        ));
    }

    // every curve joining the outer boundaries crosses each inner annulus
    let grid = Grid::square([-3.0, -3.0], 6.0, 129).unwrap();
    let nested = [(0.5, 2.75), (0.75, 2.0), (1.0, 1.5)];
    let values: Vec<f64> = nested
        .iter()
        .map(|&(r, big_r)| annulus_modulus([0.0, 0.0], r, big_r, &grid).unwrap().value)
        .collect();
    for k in 0..2 {
        checks.push(Check::new(
            format!("overflowing: A{:?} vs A{:?}", nested[k], nested[k + 1]),
            values[k] <= values[k + 1],
            format!("{} vs {}", values[k], values[k + 1]),
        ));
    }
    checks
}

/// Metric invariants for `d_ω` with weights built from the middle-thirds
/// Cantor set at depth 6 on a 129-node lab grid.
pub fn metric_suite() -> Vec<Check> {
    use modlab::lab::lab_grid;
    use modlab::metric::{lemma35_tolerance, MetricGraph};
    use modlab::weight::{distance_transform, eval_weight, WeightSpec};
    use modlab::CompactSetSpec;
    use rand::{Rng, SeedableRng};

    let mut checks = Vec::new();
    let set = CompactSetSpec::cantor_thirds();
    let grid = lab_grid(&set.bounding_box(), 129).unwrap();
    let mask = set.rasterize(6, &grid).unwrap();
    let delta = distance_transform(&mask).unwrap();
    let graph = |w: WeightSpec| MetricGraph::build(&eval_weight(&delta, &w).unwrap()).unwrap();
    let g = graph(WeightSpec::Power { p: 2.0 });

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(SEED);
    let nodes: Vec<usize> = (0..40).map(|_| rng.gen_range(0..grid.len())).collect();
    let fields: Vec<_> = nodes.iter().map(|&s| g.shortest_distances(&[s]).unwrap()).collect();
    // same lower-index-first rule as `MetricGraph::distance`
    let d = |a: usize, b: usize| {
        if nodes[a] <= nodes[b] {
            fields[a].values[nodes[b]]
        } else {
            fields[b].values[nodes[a]]
        }
    };

    let mut sym_worst = 0.0f64;
    for a in 0..10 {
        for b in 0..10 {
            let (x, y) = (
                g.distance(nodes[a], nodes[b]).unwrap(),
                g.distance(nodes[b], nodes[a]).unwrap(),
            );
            sym_worst = sym_worst.max((x - y).abs());
            assert_eq!(x, d(a, b));
        }
    }
    checks.push(Check::new(
        "symmetry",
        sym_worst == 0.0,
        format!("max |d(a,b) - d(b,a)| = {sym_worst:e}"),
    ));

    let mut violations = 0;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (a, b, c) = (
            rng.gen_range(0..nodes.len()),
            rng.gen_range(0..nodes.len()),
            rng.gen_range(0..nodes.len()),
        );
        let excess = d(a, c) - (d(a, b) + d(b, c));
        if excess > 0.0 {
            violations += 1;
            worst = worst.max(excess);
        }
    }
    checks.push(Check::new(
        "triangle inequality on 1000 triples",
        violations == 0,
        format!("{violations} violations, worst excess {worst:e}"),
    ));

    let pairs = [
        (WeightSpec::Power { p: 3.0 }, WeightSpec::Power { p: 2.0 }),
        (WeightSpec::Power { p: 2.0 }, WeightSpec::IndicatorComplement),
        (WeightSpec::Lemma35, WeightSpec::IndicatorComplement),
    ];
    for (lo, hi) in pairs {
        let (gl, gh) = (graph(lo), graph(hi));
        let mut ok = true;
        for &s in nodes.iter().take(10) {
            let (dl, dh) = (
                gl.shortest_distances(&[s]).unwrap(),
                gh.shortest_distances(&[s]).unwrap(),
            );
            ok &= dl.values.iter().zip(&dh.values).all(|(a, b)| a <= b);
        }
        checks.push(Check::new(
            format!("monotone in the weight: {} <= {}", lo.name(), hi.name()),
            ok,
            "",
        ));
    }

    let g35 = graph(WeightSpec::Lemma35);
    let centers = [[0.0, 0.0], [1.0 / 3.0, 0.0], [2.0 / 3.0, 0.0], [1.0, 0.0]];
    for p in [2.0, 3.0] {
        for dj in [0.1, 0.3] {
            let tol = lemma35_tolerance(grid.h(), dj, p);
            let mut worst = f64::NEG_INFINITY;
            for c in centers {
                let (i, j) = grid.nearest(c).unwrap();
                assert!(mask.get(i, j), "center {c:?} is on the set");
                worst = worst.max(g35.lemma35_distance_bound(grid.index(i, j), dj, p).unwrap());
            }
            checks.push(Check::new(
                format!("distance bound p = {p}, d = {dj}"),
                worst <= tol,
                format!("max excess {worst:e}, allowance {tol:e}"),
            ));
        }
    }
    checks
}
