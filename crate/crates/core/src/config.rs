//! Experiment configuration: a sectioned `key = value` file.
//!
//! ```text
//! [set]
//! kind = cantor_line        ; cantor_line | cantor_product | fat_cantor | segment
//!                           ; | polyline_arc | circle | raw_mask
//! ratio = 1/3
//! start = 0, 0
//! length = 1
//! depths = 6
//!
//! [weight]
//! kind = lemma35            ; lemma35 | power (needs p) | indicator_complement
//!
//! [grid]
//! resolutions = 65, 129
//!
//! [deficiency]              ; each experiment section enables that experiment
//! resolutions = 129, 257    ; optional overrides: resolutions, depths, battery
//! [reciprocality]
//! [dimension]
//!
//! [solver]
//! conductance_tol = 1e-10
//! cutting_plane_tol = 1e-3
//!
//! [output]
//! dir = out
//! emit_heatmaps = false
//! workers = 0               ; 0 = all cores
//! ```
//!
//! Unknown sections and keys are rejected. Relative paths (`mask`, `dir`)
//! resolve against the config file's directory.

use std::path::{Path, PathBuf};

use ini::Ini;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Point;
use crate::mask_io::load_mask;
use crate::modulus::{ConductanceOptions, CuttingPlaneOptions};
use crate::sets::CompactSetSpec;
use crate::weight::WeightSpec;

/// Depths, resolutions and battery for one experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Plan {
    pub depths: Vec<usize>,
    pub resolutions: Vec<usize>,
    /// Battery ids; empty selects the full battery.
    pub battery: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    pub conductance: ConductanceOptions,
    pub cutting_plane: CuttingPlaneOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub set: CompactSetSpec,
    pub weight: WeightSpec,
    pub deficiency: Option<Plan>,
    pub reciprocality: Option<Plan>,
    pub dimension: Option<Plan>,
    pub solver: SolverConfig,
    pub emit_heatmaps: bool,
    /// Worker threads; 0 means every available core.
    pub workers: usize,
    /// Not echoed into reports, so reruns into different directories stay
    /// byte-identical.
    #[serde(skip)]
    pub output_dir: PathBuf,
}

const SECTIONS: [(&str, &[&str]); 8] = [
    (
        "set",
        &[
            "kind", "ratio", "start", "length", "origin", "side", "gaps", "a", "b", "points", "center", "radius",
            "mask", "depths",
        ],
    ),
    ("weight", &["kind", "p"]),
    ("grid", &["resolutions"]),
    ("deficiency", &["resolutions", "depths", "battery"]),
    ("reciprocality", &["resolutions", "depths", "battery"]),
    ("dimension", &["resolutions", "depths"]),
    (
        "solver",
        &[
            "conductance_tol",
            "conductance_max_iter",
            "cutting_plane_tol",
            "inner_tol",
            "max_paths",
            "max_sweeps",
        ],
    ),
    ("output", &["dir", "emit_heatmaps", "workers"]),
];

struct Source<'a> {
    ini: &'a Ini,
    base: &'a Path,
}

impl Source<'_> {
    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.ini.section(Some(section)).and_then(|p| p.get(key)).map(str::trim)
    }

    fn has(&self, section: &str) -> bool {
        self.ini.section(Some(section)).is_some()
    }

    fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key)
            .ok_or_else(|| Error::config(format!("{section}.{key}"), "missing"))
    }

    fn number(&self, section: &str, key: &str) -> Result<Option<f64>> {
        self.get(section, key)
            .map(|v| parse_number(v).map_err(|r| Error::config(format!("{section}.{key}"), r)))
            .transpose()
    }

    fn count(&self, section: &str, key: &str) -> Result<Option<usize>> {
        self.get(section, key)
            .map(|v| {
                v.parse::<usize>().map_err(|_| {
                    Error::config(
                        format!("{section}.{key}"),
                        format!("`{v}` is not a non-negative integer"),
                    )
                })
            })
            .transpose()
    }

    fn req_number(&self, section: &str, key: &str) -> Result<f64> {
        let v = self.require(section, key)?;
        parse_number(v).map_err(|r| Error::config(format!("{section}.{key}"), r))
    }

    fn point(&self, section: &str, key: &str) -> Result<Point> {
        let v = self.require(section, key)?;
        let xs = parse_list(v).map_err(|r| Error::config(format!("{section}.{key}"), r))?;
        match xs[..] {
            [x, y] => Ok([x, y]),
            _ => Err(Error::config(format!("{section}.{key}"), "expected `x, y`")),
        }
    }

    fn counts(&self, section: &str, key: &str) -> Result<Option<Vec<usize>>> {
        let Some(v) = self.get(section, key) else {
            return Ok(None);
        };
        let field = format!("{section}.{key}");
        let xs = v
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::config(&field, format!("`{}` is not a non-negative integer", t.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        if xs.is_empty() {
            return Err(Error::config(field, "must not be empty"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config(field, format!("{key} must increase")));
        }
        Ok(Some(xs))
    }
}

/// Decimal or `a/b`.
fn parse_number(v: &str) -> std::result::Result<f64, String> {
    let v = v.trim();
    let x = match v.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("`{v}` is not a number"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("`{v}` is not a number"))?;
            a / b
        }
        None => v.parse().map_err(|_| format!("`{v}` is not a number"))?,
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{v}` is not finite"))
    }
}

fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',').map(parse_number).collect()
}

fn parse_bool(field: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(field, format!("`{v}` is not a boolean"))),
    }
}

fn parse_set(src: &Source<'_>) -> Result<CompactSetSpec> {
    let kind = src.require("set", "kind")?;
    let set = match kind {
        "cantor_line" => CompactSetSpec::CantorLine {
            ratio: src.req_number("set", "ratio")?,
            start: src.point("set", "start")?,
            length: src.req_number("set", "length")?,
        },
        "cantor_product" => CompactSetSpec::CantorProduct {
            ratio: src.req_number("set", "ratio")?,
            origin: src.point("set", "origin")?,
            side: src.req_number("set", "side")?,
        },
        "fat_cantor" => CompactSetSpec::FatCantor {
            start: src.point("set", "start")?,
            length: src.req_number("set", "length")?,
            gaps: src
                .get("set", "gaps")
                .map(|v| parse_list(v).map_err(|r| Error::config("set.gaps", r)))
                .transpose()?,
        },
        "segment" => CompactSetSpec::Segment {
            a: src.point("set", "a")?,
            b: src.point("set", "b")?,
        },
        "polyline_arc" => {
            let xs = parse_list(src.require("set", "points")?).map_err(|r| Error::config("set.points", r))?;
            if xs.len() % 2 != 0 {
                return Err(Error::config("set.points", "expected `x0, y0, x1, y1, ...`"));
            }
            CompactSetSpec::PolylineArc {
                points: xs.chunks(2).map(|c| [c[0], c[1]]).collect(),
            }
        }
        "circle" => CompactSetSpec::Circle {
            center: src.point("set", "center")?,
            radius: src.req_number("set", "radius")?,
        },
        "raw_mask" => {
            let path = src.base.join(src.require("set", "mask")?);
            let mask = load_mask(&path).map_err(|e| Error::config("set.mask", format!("{}: {e}", path.display())))?;
            CompactSetSpec::RawMask { mask }
        }
        other => return Err(Error::config("set.kind", format!("unknown set kind `{other}`"))),
    };
    set.validate().map_err(|e| Error::config("set", e.to_string()))?;
    Ok(set)
}

fn parse_weight(src: &Source<'_>) -> Result<WeightSpec> {
    let w = match src.get("weight", "kind").unwrap_or("lemma35") {
        "lemma35" => WeightSpec::Lemma35,
        "power" => WeightSpec::Power {
            p: src.req_number("weight", "p")?,
        },
        "indicator_complement" => WeightSpec::IndicatorComplement,
        other => return Err(Error::config("weight.kind", format!("unknown weight `{other}`"))),
    };
    w.validate().map_err(|e| Error::config("weight", e.to_string()))?;
    Ok(w)
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::config(field, format!("tolerance {v} must be > 0")))
    }
}

fn parse_solver(src: &Source<'_>) -> Result<SolverConfig> {
    let mut conductance = ConductanceOptions::default();
    let mut cp = CuttingPlaneOptions::default();
    if let Some(t) = src.number("solver", "conductance_tol")? {
        conductance.rel_tol = positive("solver.conductance_tol", t)?;
    }
    conductance.max_iter = src.count("solver", "conductance_max_iter")?;
    if let Some(t) = src.number("solver", "cutting_plane_tol")? {
        cp.tol = positive("solver.cutting_plane_tol", t)?;
        if cp.tol >= 1.0 {
            return Err(Error::config("solver.cutting_plane_tol", "must be < 1"));
        }
    }
    if let Some(t) = src.number("solver", "inner_tol")? {
        cp.inner_tol = positive("solver.inner_tol", t)?;
    }
    if let Some(m) = src.count("solver", "max_paths")? {
        cp.max_paths = m.max(1);
    }
    if let Some(m) = src.count("solver", "max_sweeps")? {
        cp.max_sweeps = m.max(1);
    }
    Ok(SolverConfig {
        conductance,
        cutting_plane: cp,
    })
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::config("syntax", e.to_string()))?;
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(Error::config(k, "key outside any section"));
                }
                continue;
            };
            let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| *s == section) else {
                return Err(Error::config(section, "unknown section"));
            };
            for (k, _) in props.iter() {
                if !keys.contains(&k) {
                    return Err(Error::config(format!("{section}.{k}"), "unknown key"));
                }
            }
        }
        let src = Source { ini: &ini, base };
        let set = parse_set(&src)?;
        let weight = parse_weight(&src)?;
        let depths = src.counts("set", "depths")?.unwrap_or_else(|| vec![0]);
        let resolutions = src.counts("grid", "resolutions")?;

        let plan = |section: &str| -> Result<Option<Plan>> {
            if !src.has(section) {
                return Ok(None);
            }
            let resolutions = match src.counts(section, "resolutions")? {
                Some(r) => r,
                None => resolutions.clone().ok_or_else(|| {
                    Error::config(format!("{section}.resolutions"), "missing (and no grid.resolutions)")
                })?,
            };
            if let Some(&n) = resolutions.iter().find(|&&n| n < 17) {
                return Err(Error::config(
                    format!("{section}.resolutions"),
                    format!("n = {n} is below the minimum 17"),
                ));
            }
            let battery = src
                .get(section, "battery")
                .map(|v| {
                    v.split(',')
                        .map(|t| t.trim().to_string())
                        .filter(|t| !t.is_empty())
                        .collect()
                })
                .unwrap_or_default();
            Ok(Some(Plan {
                depths: src.counts(section, "depths")?.unwrap_or_else(|| depths.clone()),
                resolutions,
                battery,
            }))
        };
        let deficiency = plan("deficiency")?;
        let reciprocality = plan("reciprocality")?;
        let dimension = plan("dimension")?;
        if deficiency.is_none() && reciprocality.is_none() && dimension.is_none() {
            return Err(Error::config(
                "experiments",
                "no experiment section ([deficiency], [reciprocality], [dimension])",
            ));
        }
        if let Some(p) = &deficiency {
            validate_battery(&set, &p.battery, "deficiency.battery")?;
        }
        if let Some(p) = &reciprocality {
            validate_battery(&set, &p.battery, "reciprocality.battery")?;
        }

        let output_dir = base.join(src.get("output", "dir").unwrap_or("out"));
        let emit_heatmaps = src
            .get("output", "emit_heatmaps")
            .map(|v| parse_bool("output.emit_heatmaps", v))
            .transpose()?
            .unwrap_or(false);
        Ok(ExperimentConfig {
            set,
            weight,
            deficiency,
            reciprocality,
            dimension,
            solver: parse_solver(&src)?,
            emit_heatmaps,
            workers: src.count("output", "workers")?.unwrap_or(0),
            output_dir,
        })
    }

    /// Worker count with 0 resolved to the available cores.
    pub fn resolved_workers(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        }
    }
}

fn validate_battery(set: &CompactSetSpec, ids: &[String], field: &str) -> Result<()> {
    crate::lab::select_battery(&set.bounding_box(), ids)
        .map(|_| ())
        .map_err(|e| match e {
            Error::Config { reason, .. } => Error::config(field, reason),
            other => other,
        })
}
