//! Experiment drivers: modulus deficiency under removal, the primal/dual
//! modulus product in a degenerate weighted metric, and weighted versus
//! Euclidean box dimension.
//!
//! Every experiment is a grid of independent cells (depth × resolution ×
//! quadrilateral) run on a worker pool; results are keyed and sorted, so the
//! report does not depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{Grid, Rect};
use crate::hausdorff::{box_dimension, BoxDimension, Metric};
use crate::metric::MetricGraph;
use crate::modulus::{
    family_modulus_conductance, family_modulus_cutting_plane, ConductanceOptions, CurveFamilySpec, CuttingPlaneOptions,
    FamilyKind, ModulusResult, Quadrilateral, Side,
};
use crate::sets::{CompactSetSpec, PixelMask};
use crate::weight::{distance_transform, eval_weight, WeightSpec};

/// A named member of the quadrilateral battery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryQuad {
    pub id: String,
    pub quad: Quadrilateral,
}

pub const BATTERY_IDS: [&str; 6] = [
    "h_cross",
    "v_cross",
    "offset_left",
    "offset_right",
    "frame_1.5",
    "frame_2",
];

/// Side of the square frame the experiments are built around.
fn frame_side(bbox: &Rect) -> f64 {
    let s = bbox.width().max(bbox.height());
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Rounds `t ≥ 0` up to a multiple of `unit`.
fn ceil_to(t: f64, unit: f64) -> f64 {
    ((t / unit) - 1e-9).ceil().max(0.0) * unit
}

/// Square grid of side `2s` centered on the bounding box, `s` its larger
/// side. Every battery quadrilateral lies on its grid lines for `n ≥ 17`.
pub fn lab_grid(bbox: &Rect, n: usize) -> Result<Grid> {
    let s = frame_side(bbox);
    let c = bbox.center();
    if n < 17 {
        return Err(Error::param("resolutions", format!("n = {n} is below the minimum 17")));
    }
    Grid::square([c[0] - s, c[1] - s], 2.0 * s, n)
}

/// The default battery around a bounding box with larger side `s`, centre
/// `c` and half-extents rounded up to multiples of `s/8`; `m = s/4`.
///
/// * `h_cross`: left→right across the box padded by `m` horizontally;
/// * `v_cross`: bottom→top across the box padded by `m` vertically;
/// * `offset_left`, `offset_right`: `v_cross` shifted by `∓m` (mirror pair);
/// * `frame_1.5`, `frame_2`: squares of side `1.5s` and `2s` about `c`.
pub fn default_battery(bbox: &Rect) -> Vec<BatteryQuad> {
    let s = frame_side(bbox);
    let c = bbox.center();
    let m = s / 4.0;
    let hx = ceil_to(bbox.width() / 2.0, s / 8.0);
    let hy = ceil_to(bbox.height() / 2.0, s / 8.0);
    let rect = |cx: f64, cy: f64, ax: f64, ay: f64| Rect::new(cx - ax, cy - ay, cx + ax, cy + ay);
    let q = |id: &str, r: Rect, first: Side| BatteryQuad {
        id: id.to_string(),
        quad: Quadrilateral::with_first(r, first),
    };
    vec![
        q("h_cross", rect(c[0], c[1], hx + m, hy.max(m)), Side::Left),
        q("v_cross", rect(c[0], c[1], hx.max(m), hy + m), Side::Bottom),
        q("offset_left", rect(c[0] - m, c[1], hx.max(m), hy + m), Side::Bottom),
        q("offset_right", rect(c[0] + m, c[1], hx.max(m), hy + m), Side::Bottom),
        q("frame_1.5", rect(c[0], c[1], 0.75 * s, 0.75 * s), Side::Left),
        q("frame_2", rect(c[0], c[1], s, s), Side::Bottom),
    ]
}

/// Battery members by id, in the order given; an empty list selects all.
pub fn select_battery(bbox: &Rect, ids: &[String]) -> Result<Vec<BatteryQuad>> {
    let all = default_battery(bbox);
    if ids.is_empty() {
        return Ok(all);
    }
    ids.iter()
        .map(|id| {
            all.iter().find(|b| &b.id == id).cloned().ok_or_else(|| {
                Error::config(
                    "battery",
                    format!("unknown quadrilateral `{id}`; known: {}", BATTERY_IDS.join(", ")),
                )
            })
        })
        .collect()
}

/// Monotone direction of a sequence of values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
    Flat,
    Mixed,
}

/// Trend of `values` with differences below `tol` counted as flat.
pub fn trend(values: &[f64], tol: f64) -> Trend {
    let mut up = false;
    let mut down = false;
    for w in values.windows(2) {
        let d = w[1] - w[0];
        if d > tol {
            up = true;
        } else if d < -tol {
            down = true;
        }
    }
    match (up, down) {
        (true, false) => Trend::Increasing,
        (false, true) => Trend::Decreasing,
        (false, false) => Trend::Flat,
        (true, true) => Trend::Mixed,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LabOptions {
    /// Worker threads for experiment cells; 0 uses every available core.
    pub workers: usize,
    pub conductance: ConductanceOptions,
    pub cutting_plane: CuttingPlaneOptions,
    /// Keep optimal densities in the cells (for heatmaps).
    pub keep_rho: bool,
}

fn run_pool<T: Send, R: Send>(workers: usize, jobs: Vec<T>, f: impl Fn(T) -> R + Sync + Send) -> Result<Vec<R>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Numeric(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| jobs.into_par_iter().map(f).collect()))
}

fn check_increasing(values: &[usize], field: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config(field, "must not be empty"));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config(field, format!("{field} must increase")));
    }
    Ok(())
}

fn mask_for(set: &CompactSetSpec, depth: usize, grid: &Grid) -> Result<PixelMask> {
    set.rasterize(depth, grid)
}

#[derive(Clone, Debug, Serialize)]
pub struct DeficiencyCell {
    pub set: String,
    pub depth: usize,
    pub quad_id: String,
    pub n: usize,
    pub mod_full: f64,
    pub mod_removed: f64,
    pub ratio: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub rho: Option<ScalarField>,
}

#[derive(Clone, Debug, Serialize)]
pub struct QuadTrend {
    pub depth: usize,
    pub quad_id: String,
    pub ratios: Vec<f64>,
    pub trend: Trend,
    /// Sign of the change between the two finest resolutions.
    pub last_difference: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeficiencyReport {
    pub set: CompactSetSpec,
    pub depths: Vec<usize>,
    pub resolutions: Vec<usize>,
    pub battery: Vec<BatteryQuad>,
    pub cells: Vec<DeficiencyCell>,
    pub trends: Vec<QuadTrend>,
    /// "deficiency detected" if some ratio stays visibly below 1 at the
    /// finest resolution, otherwise "no counterexample found".
    pub summary: String,
}

impl DeficiencyReport {
    /// Flat table `set,depth,quad_id,n,mod_full,mod_removed,ratio`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("set,depth,quad_id,n,mod_full,mod_removed,ratio\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.set, c.depth, c.quad_id, c.n, c.mod_full, c.mod_removed, c.ratio
            ));
        }
        out
    }

    pub fn cell(&self, depth: usize, quad_id: &str, n: usize) -> Option<&DeficiencyCell> {
        self.cells
            .iter()
            .find(|c| c.depth == depth && c.quad_id == quad_id && c.n == n)
    }

    pub fn ratios(&self, depth: usize, quad_id: &str) -> Vec<f64> {
        self.resolutions
            .iter()
            .filter_map(|&n| self.cell(depth, quad_id, n).map(|c| c.ratio))
            .collect()
    }
}

/// Ratio `mod Γ(ζ1, ζ3; Q ∖ E) / mod Γ(Q)` for every battery member, depth
/// and resolution, both moduli by conductance.
pub fn ab_deficiency(
    set: &CompactSetSpec,
    depths: &[usize],
    battery: &[BatteryQuad],
    resolutions: &[usize],
    opts: &LabOptions,
) -> Result<DeficiencyReport> {
    set.validate()?;
    if battery.is_empty() {
        return Err(Error::config("battery", "must not be empty"));
    }
    check_increasing(resolutions, "resolutions")?;
    check_increasing(depths, "depths")?;
    let bbox = set.bounding_box();

    let mut grids = Vec::new();
    for &n in resolutions {
        grids.push((n, lab_grid(&bbox, n)?));
    }
    let mut masks = Vec::new();
    for &d in depths {
        for (n, grid) in &grids {
            let mask = mask_for(set, d, grid)?;
            for b in battery {
                let nr = grid.node_rect(&b.quad.rect)?;
                let sides = b.quad.sides();
                for side in [sides[0], sides[2]] {
                    if side.nodes(grid, &nr).iter().any(|&v| mask.is_set(v)) {
                        return Err(Error::Precondition(format!(
                            "quadrilateral `{}`: side {side:?} meets the set (depth {d}, n = {n})",
                            b.id
                        )));
                    }
                }
            }
            masks.push((d, *n, mask));
        }
    }

    let full_jobs: Vec<(usize, &Grid, &BatteryQuad)> = grids
        .iter()
        .flat_map(|(n, g)| battery.iter().map(move |b| (*n, g, b)))
        .collect();
    let conductance = opts.conductance;
    let full: Vec<Result<ModulusResult>> = run_pool(opts.workers, full_jobs, |(_, g, b)| {
        family_modulus_conductance(&CurveFamilySpec::quad(g.clone(), b.quad), &conductance)
    })?;
    let full: Vec<ModulusResult> = full.into_iter().collect::<Result<_>>()?;
    let full_value = |n: usize, id: &str| -> f64 {
        let ni = resolutions.iter().position(|&r| r == n).expect("resolution");
        let bi = battery.iter().position(|b| b.id == id).expect("quad");
        full[ni * battery.len() + bi].value
    };
    let full_converged = |n: usize, id: &str| -> bool {
        let ni = resolutions.iter().position(|&r| r == n).expect("resolution");
        let bi = battery.iter().position(|b| b.id == id).expect("quad");
        full[ni * battery.len() + bi].converged
    };

    let jobs: Vec<(usize, usize, &PixelMask, &BatteryQuad)> = masks
        .iter()
        .flat_map(|(d, n, m)| battery.iter().map(move |b| (*d, *n, m, b)))
        .collect();
    let keys: Vec<(usize, usize, String)> = jobs.iter().map(|(d, n, _, b)| (*d, *n, b.id.clone())).collect();
    let removed: Vec<Result<ModulusResult>> = run_pool(opts.workers, jobs, |(_, _, m, b)| {
        let spec = CurveFamilySpec::quad(m.grid().clone(), b.quad).with_removed(m.clone());
        family_modulus_conductance(&spec, &conductance)
    })?;

    let mut cells = Vec::with_capacity(keys.len());
    for ((d, n, id), res) in keys.into_iter().zip(removed) {
        let res = res.map_err(|e| Error::Numeric(format!("cell depth {d}, n = {n}, quad `{id}`: {e}")))?;
        let mf = full_value(n, &id);
        let converged = res.converged && full_converged(n, &id);
        cells.push(DeficiencyCell {
            set: set.kind_name().to_string(),
            depth: d,
            quad_id: id,
            n,
            mod_full: mf,
            mod_removed: res.value,
            ratio: res.value / mf,
            iterations: res.iterations,
            converged,
            rho: opts.keep_rho.then_some(res.rho),
        });
    }
    let order = |id: &str| battery.iter().position(|b| b.id == id).unwrap_or(usize::MAX);
    cells.sort_by_key(|c| (c.depth, order(&c.quad_id), c.n));

    let mut report = DeficiencyReport {
        set: set.clone(),
        depths: depths.to_vec(),
        resolutions: resolutions.to_vec(),
        battery: battery.to_vec(),
        cells,
        trends: Vec::new(),
        summary: String::new(),
    };
    let mut detected = false;
    for &d in depths {
        for b in battery {
            let ratios = report.ratios(d, &b.id);
            let last_difference = match ratios.len() {
                0 | 1 => 0.0,
                k => ratios[k - 1] - ratios[k - 2],
            };
            if ratios.last().is_some_and(|&r| r < 1.0 - 1e-2) {
                detected = true;
            }
            report.trends.push(QuadTrend {
                depth: d,
                quad_id: b.id.clone(),
                trend: trend(&ratios, 1e-9),
                ratios,
                last_difference,
            });
        }
    }
    report.summary = if detected {
        "deficiency detected".into()
    } else {
        "no counterexample found".into()
    };
    Ok(report)
}

/// Length weight for the probe: `ω ≡ 1` for the empty set, else the weight
/// applied to the distance from the mask.
pub fn probe_weight(mask: &PixelMask, weight: &WeightSpec) -> Result<ScalarField> {
    if mask.is_empty() {
        return Ok(ScalarField::constant(mask.grid().clone(), 1.0));
    }
    let omega = eval_weight(&distance_transform(mask)?, weight)?;
    let vanishing = omega.values().iter().zip(mask.bits()).all(|(&w, &b)| (w == 0.0) == b);
    if !vanishing {
        return Err(Error::Precondition("weight does not vanish exactly on the set".into()));
    }
    Ok(omega)
}

#[derive(Clone, Debug, Serialize)]
pub struct ReciprocalityCell {
    pub depth: usize,
    pub quad_id: String,
    pub n: usize,
    pub m: f64,
    pub m_star: f64,
    pub product: f64,
    pub converged: bool,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReciprocalityReport {
    pub set: CompactSetSpec,
    pub weight: WeightSpec,
    pub depths: Vec<usize>,
    pub resolutions: Vec<usize>,
    pub battery: Vec<BatteryQuad>,
    pub cells: Vec<ReciprocalityCell>,
    pub trends: Vec<QuadTrend>,
}

impl ReciprocalityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("depth,quad_id,n,m,m_star,product,converged\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.depth, c.quad_id, c.n, c.m, c.m_star, c.product, c.converged
            ));
        }
        out
    }

    pub fn products(&self, depth: usize, quad_id: &str) -> Vec<f64> {
        self.resolutions
            .iter()
            .filter_map(|&n| {
                self.cells
                    .iter()
                    .find(|c| c.depth == depth && c.quad_id == quad_id && c.n == n)
                    .map(|c| c.product)
            })
            .collect()
    }

    pub fn all_converged(&self) -> bool {
        self.cells.iter().all(|c| c.converged)
    }
}

/// `mod_ω Γ(Q) · mod_ω Γ*(Q)` with length weight `ω` and area density `ω²`,
/// both by the cutting-plane solver.
pub fn reciprocality_probe(
    set: &CompactSetSpec,
    weight: &WeightSpec,
    depths: &[usize],
    battery: &[BatteryQuad],
    resolutions: &[usize],
    opts: &LabOptions,
) -> Result<ReciprocalityReport> {
    set.validate()?;
    weight.validate()?;
    if battery.is_empty() {
        return Err(Error::config("battery", "must not be empty"));
    }
    check_increasing(resolutions, "resolutions")?;
    check_increasing(depths, "depths")?;
    let bbox = set.bounding_box();
    let mut fields = Vec::new();
    for &d in depths {
        for &n in resolutions {
            let grid = lab_grid(&bbox, n)?;
            let mask = mask_for(set, d, &grid)?;
            fields.push((d, n, probe_weight(&mask, weight)?));
        }
    }
    let jobs: Vec<(usize, usize, &ScalarField, &BatteryQuad, bool)> = fields
        .iter()
        .flat_map(|(d, n, w)| {
            battery
                .iter()
                .flat_map(move |b| [false, true].map(|dual| (*d, *n, w, b, dual)))
        })
        .collect();
    let cp = opts.cutting_plane;
    let results: Vec<Result<ModulusResult>> = run_pool(opts.workers, jobs, |(_, _, w, b, dual)| {
        let kind = if dual {
            FamilyKind::QuadDual { quad: b.quad }
        } else {
            FamilyKind::QuadPrimal { quad: b.quad }
        };
        let spec = CurveFamilySpec::new(w.grid().clone(), kind).with_weight(w.clone());
        family_modulus_cutting_plane(&spec, &cp)
    })?;
    let mut results = results.into_iter();
    let mut cells = Vec::new();
    for (d, n, _) in &fields {
        for b in battery {
            let cell_err = |e: Error| Error::Numeric(format!("cell depth {d}, n = {n}, quad `{}`: {e}", b.id));
            let m = results.next().expect("primal result").map_err(cell_err)?;
            let ms = results.next().expect("dual result").map_err(cell_err)?;
            let mut flags = m.flags.clone();
            flags.extend(ms.flags.iter().map(|f| format!("dual: {f}")));
            cells.push(ReciprocalityCell {
                depth: *d,
                quad_id: b.id.clone(),
                n: *n,
                m: m.value,
                m_star: ms.value,
                product: m.value * ms.value,
                converged: m.converged && ms.converged,
                flags,
            });
        }
    }
    let order = |id: &str| battery.iter().position(|b| b.id == id).unwrap_or(usize::MAX);
    cells.sort_by_key(|c| (c.depth, order(&c.quad_id), c.n));
    let mut report = ReciprocalityReport {
        set: set.clone(),
        weight: *weight,
        depths: depths.to_vec(),
        resolutions: resolutions.to_vec(),
        battery: battery.to_vec(),
        cells,
        trends: Vec::new(),
    };
    for &d in depths {
        for b in battery {
            let products = report.products(d, &b.id);
            let last_difference = match products.len() {
                0 | 1 => 0.0,
                k => products[k - 1] - products[k - 2],
            };
            report.trends.push(QuadTrend {
                depth: d,
                quad_id: b.id.clone(),
                trend: trend(&products, 1e-9),
                ratios: products,
                last_difference,
            });
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct DimensionCell {
    pub depth: usize,
    pub n: usize,
    pub euclidean: BoxDimension,
    pub weighted: BoxDimension,
}

#[derive(Clone, Debug, Serialize)]
pub struct QcDimensionReport {
    pub set: CompactSetSpec,
    pub weight: WeightSpec,
    pub depths: Vec<usize>,
    pub resolutions: Vec<usize>,
    pub cells: Vec<DimensionCell>,
}

impl QcDimensionReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("depth,n,euclidean,euclidean_residual,weighted,weighted_residual\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.depth, c.n, c.euclidean.slope, c.euclidean.residual, c.weighted.slope, c.weighted.residual
            ));
        }
        out
    }

    pub fn weighted(&self, depth: usize) -> Vec<f64> {
        self.cells
            .iter()
            .filter(|c| c.depth == depth)
            .map(|c| c.weighted.slope)
            .collect()
    }

    pub fn euclidean(&self, depth: usize) -> Vec<f64> {
        self.cells
            .iter()
            .filter(|c| c.depth == depth)
            .map(|c| c.euclidean.slope)
            .collect()
    }
}

/// Dyadic scales `s·2^{-k}`, `k ≥ 1`, down to the smallest not below `8h`.
pub fn dyadic_scales(bbox: &Rect, grid: &Grid) -> Vec<f64> {
    let s = frame_side(bbox);
    let mut out = Vec::new();
    let mut e = s / 2.0;
    while e >= 8.0 * grid.h() * (1.0 - 1e-12) {
        out.push(e);
        e /= 2.0;
    }
    out
}

/// Box dimension of the set in the Euclidean metric and in `d_ω` for the
/// given weight, per depth and resolution, over the dyadic scale list.
pub fn qc_dimension_experiment(
    set: &CompactSetSpec,
    weight: &WeightSpec,
    depths: &[usize],
    resolutions: &[usize],
    opts: &LabOptions,
) -> Result<QcDimensionReport> {
    set.validate()?;
    weight.validate()?;
    let disconnected = match set {
        CompactSetSpec::RawMask { mask } => mask.is_totally_disconnected(),
        CompactSetSpec::Segment { a, b } => a == b,
        other => other.is_cantor(),
    };
    if !disconnected {
        return Err(Error::Precondition(format!(
            "`{}` is not a totally disconnected set",
            set.kind_name()
        )));
    }
    check_increasing(resolutions, "resolutions")?;
    check_increasing(depths, "depths")?;
    let bbox = set.bounding_box();
    let jobs: Vec<(usize, usize)> = depths
        .iter()
        .flat_map(|&d| resolutions.iter().map(move |&n| (d, n)))
        .collect();
    let cells: Vec<Result<DimensionCell>> = run_pool(opts.workers, jobs, |(d, n)| {
        let grid = lab_grid(&bbox, n)?;
        let mask = mask_for(set, d, &grid)?;
        let points = mask.nodes();
        let scales = dyadic_scales(&bbox, &grid);
        let euclidean = box_dimension(&grid, &points, Metric::Euclidean, &scales)?;
        let omega = eval_weight(&distance_transform(&mask)?, weight)?;
        let graph = MetricGraph::build(&omega)?;
        let weighted = box_dimension(&grid, &points, Metric::Weighted(&graph), &scales)?;
        Ok(DimensionCell {
            depth: d,
            n,
            euclidean,
            weighted,
        })
    })?;
    Ok(QcDimensionReport {
        set: set.clone(),
        weight: *weight,
        depths: depths.to_vec(),
        resolutions: resolutions.to_vec(),
        cells: cells.into_iter().collect::<Result<_>>()?,
    })
}
