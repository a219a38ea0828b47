//! Distance to the set and degenerate conformal weights built from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::sets::PixelMask;

/// Values of `δ^{1/δ}` below this are flushed to the floor.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

/// Exact squared Euclidean distance transform of one line (lower envelope of
/// parabolas). `f` holds `0` on sites and `+∞` elsewhere; the result holds
/// the squared distance in index units.
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    let mut first = None;
    for (q, &fq) in f.iter().enumerate() {
        if fq.is_finite() {
            first = Some(q);
            break;
        }
    }
    let Some(first) = first else {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    };
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                // `k = 0` cannot occur: z[0] is −∞.
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Euclidean distance from every node to the nearest occupied node, by the
/// two-pass (columns, then rows) squared-distance transform. Distances are
/// exact for the node set; as a proxy for the distance to the underlying
/// continuum set they are off by at most `h·√2/2`.
pub fn distance_transform(mask: &PixelMask) -> Result<ScalarField> {
    if mask.is_empty() {
        return Err(Error::Domain("distance to empty set undefined".into()));
    }
    let grid = mask.grid().clone();
    let n = grid.n();
    let mut sq = vec![0.0f64; n * n];
    let mut line = vec![0.0f64; n];
    let mut out = vec![0.0f64; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];

    for i in 0..n {
        for (j, l) in line.iter_mut().enumerate() {
            *l = if mask.get(i, j) { 0.0 } else { f64::INFINITY };
        }
        edt_1d(&line, &mut out, &mut v, &mut z);
        for j in 0..n {
            sq[j * n + i] = out[j];
        }
    }
    for j in 0..n {
        line.copy_from_slice(&sq[j * n..(j + 1) * n]);
        edt_1d(&line, &mut out, &mut v, &mut z);
        sq[j * n..(j + 1) * n].copy_from_slice(&out);
    }
    let h = grid.h();
    let values = sq.into_iter().map(|d2| d2.sqrt() * h).collect();
    ScalarField::new(grid, values)
}

/// Worst-case gap between node-to-node distance and distance to the
/// continuum set it rasterizes.
pub fn distance_error_bound(mask: &PixelMask) -> f64 {
    mask.grid().h() * std::f64::consts::SQRT_2 / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    /// `min{δ^{1/δ}, 1}`; vanishes on the set faster than any power of δ.
    Lemma35,
    /// `min{δ^p, 1}`.
    Power { p: f64 },
    /// `1` off the set, `0` on it.
    IndicatorComplement,
}

impl WeightSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            WeightSpec::Power { p } if !(*p > 0.0 && p.is_finite()) => {
                Err(Error::param("p", format!("{p} must be > 0")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            WeightSpec::Lemma35 => "lemma35".into(),
            WeightSpec::Power { p } => format!("power({p})"),
            WeightSpec::IndicatorComplement => "indicator_complement".into(),
        }
    }

    /// Weight at distance `delta` from the set.
    pub fn eval(&self, delta: f64) -> f64 {
        if delta <= 0.0 {
            return 0.0;
        }
        match *self {
            WeightSpec::Lemma35 => {
                if delta >= 1.0 {
                    1.0
                } else {
                    let w = (delta.ln() / delta).exp();
                    w.clamp(UNDERFLOW_FLOOR, 1.0)
                }
            }
            WeightSpec::Power { p } => delta.powf(p).min(1.0),
            WeightSpec::IndicatorComplement => 1.0,
        }
    }
}

/// Applies `spec` pointwise to a distance field.
pub fn eval_weight(delta: &ScalarField, spec: &WeightSpec) -> Result<ScalarField> {
    spec.validate()?;
    let values = delta.values().iter().map(|&d| spec.eval(d)).collect();
    ScalarField::new(delta.grid().clone(), values)
}

/// Checks `ω ≤ δ^p` on every node of the closed ball `B(center, radius)`,
/// where `center` must be an occupied node (`δ = 0`) and
/// `radius < 1/p < 1`.
pub fn weight_bound_check(
    delta: &ScalarField,
    spec: &WeightSpec,
    p: f64,
    center: (usize, usize),
    radius: f64,
) -> Result<bool> {
    if !(p > 1.0) || !(radius < 1.0 / p) || !(radius > 0.0) {
        return Err(Error::Precondition(format!(
            "need 0 < radius < 1/p < 1, got radius = {radius}, p = {p}"
        )));
    }
    let grid = delta.grid();
    let n = grid.n();
    let (ci, cj) = center;
    if ci >= n || cj >= n {
        return Err(Error::Geometry(format!("center {center:?} is outside the grid")));
    }
    if delta.at(ci, cj) != 0.0 {
        return Err(Error::Precondition(format!("center {center:?} is not on the set")));
    }
    let h = grid.h();
    let reach = (radius / h).floor() as usize;
    if ci < reach || cj < reach || ci + reach >= n || cj + reach >= n {
        return Err(Error::Geometry(format!(
            "ball of radius {radius} around {center:?} leaves the grid"
        )));
    }
    let r2 = (radius / h) * (radius / h);
    for j in cj - reach..=cj + reach {
        for i in ci - reach..=ci + reach {
            let di = i as f64 - ci as f64;
            let dj = j as f64 - cj as f64;
            if di * di + dj * dj > r2 {
                continue;
            }
            let d = delta.at(i, j);
            let w = spec.eval(d);
            if w > d.powf(p) + 1e-15 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
