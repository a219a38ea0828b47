//! Config-driven experiment runs and report files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::{ExperimentConfig, Plan};
use crate::error::{Error, Result};
use crate::lab::{ab_deficiency, qc_dimension_experiment, reciprocality_probe, select_battery, LabOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Deficiency,
    Reciprocality,
    Dimension,
}

impl Experiment {
    pub const ALL: [Experiment; 3] = [Experiment::Deficiency, Experiment::Reciprocality, Experiment::Dimension];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Deficiency => "deficiency",
            Experiment::Reciprocality => "reciprocality",
            Experiment::Dimension => "dimension",
        }
    }

    fn plan(self, cfg: &ExperimentConfig) -> Option<&Plan> {
        match self {
            Experiment::Deficiency => cfg.deficiency.as_ref(),
            Experiment::Reciprocality => cfg.reciprocality.as_ref(),
            Experiment::Dimension => cfg.dimension.as_ref(),
        }
    }
}

/// What a run wrote and whether every cell converged.
#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    /// Cells (`experiment: key`) whose solver did not converge.
    pub unconverged: Vec<String>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    experiment: &'a str,
    config: &'a ExperimentConfig,
    report: &'a T,
}

fn write(out: &mut RunOutcome, path: PathBuf, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, bytes)?;
    out.files.push(path);
    Ok(())
}

fn json<T: Serialize>(exp: Experiment, cfg: &ExperimentConfig, report: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Envelope {
        experiment: exp.name(),
        config: cfg,
        report,
    })?;
    s.push('\n');
    Ok(s)
}

/// Runs the experiments of `cfg` (all configured ones when `only` is
/// `None`) and writes `<name>.json` and `<name>.csv` to `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path, only: Option<Experiment>) -> Result<RunOutcome> {
    let selected: Vec<Experiment> = match only {
        Some(e) => {
            if e.plan(cfg).is_none() {
                return Err(Error::config(e.name(), "experiment is not configured"));
            }
            vec![e]
        }
        None => Experiment::ALL.into_iter().filter(|e| e.plan(cfg).is_some()).collect(),
    };
    fs::create_dir_all(out_dir)?;
    let opts = LabOptions {
        workers: cfg.resolved_workers(),
        conductance: cfg.solver.conductance,
        cutting_plane: cfg.solver.cutting_plane,
        keep_rho: cfg.emit_heatmaps,
    };
    let mut out = RunOutcome::default();
    let bbox = cfg.set.bounding_box();
    for exp in selected {
        let plan = exp.plan(cfg).expect("selected experiments are configured");
        let base = out_dir.join(exp.name());
        match exp {
            Experiment::Deficiency => {
                let battery = select_battery(&bbox, &plan.battery)?;
                let rep = ab_deficiency(&cfg.set, &plan.depths, &battery, &plan.resolutions, &opts)?;
                for c in rep.cells.iter().filter(|c| !c.converged) {
                    out.unconverged.push(format!(
                        "deficiency: depth {}, quad `{}`, n = {}",
                        c.depth, c.quad_id, c.n
                    ));
                }
                write(&mut out, base.with_extension("json"), json(exp, cfg, &rep)?)?;
                write(&mut out, base.with_extension("csv"), rep.to_csv())?;
                if cfg.emit_heatmaps {
                    let dir = out_dir.join("heatmaps");
                    fs::create_dir_all(&dir)?;
                    for c in &rep.cells {
                        if let Some(rho) = &c.rho {
                            let name = format!("deficiency_d{}_{}_n{}.pgm", c.depth, c.quad_id, c.n);
                            write(&mut out, dir.join(name), rho.to_pgm())?;
                        }
                    }
                }
            }
            Experiment::Reciprocality => {
                let battery = select_battery(&bbox, &plan.battery)?;
                let rep = reciprocality_probe(&cfg.set, &cfg.weight, &plan.depths, &battery, &plan.resolutions, &opts)?;
                for c in rep.cells.iter().filter(|c| !c.converged) {
                    out.unconverged.push(format!(
                        "reciprocality: depth {}, quad `{}`, n = {}",
                        c.depth, c.quad_id, c.n
                    ));
                }
                write(&mut out, base.with_extension("json"), json(exp, cfg, &rep)?)?;
                write(&mut out, base.with_extension("csv"), rep.to_csv())?;
            }
            Experiment::Dimension => {
                let rep = qc_dimension_experiment(&cfg.set, &cfg.weight, &plan.depths, &plan.resolutions, &opts)?;
                write(&mut out, base.with_extension("json"), json(exp, cfg, &rep)?)?;
                write(&mut out, base.with_extension("csv"), rep.to_csv())?;
            }
        }
    }
    Ok(out)
}

/// Merges every report JSON in `dir` (except an earlier summary) into one
/// object keyed by file stem, written to `dir/summary.json`.
pub fn merge_reports(dir: &Path) -> Result<PathBuf> {
    let mut merged = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if path.extension().and_then(|e| e.to_str()) != Some("json") || stem == "summary" {
            continue;
        }
        let text = fs::read_to_string(&path)?;
        let value: Value = serde_json::from_str(&text)?;
        merged.insert(stem.to_string(), value);
    }
    if merged.is_empty() {
        return Err(Error::Precondition(format!(
            "no report JSON files in {}",
            dir.display()
        )));
    }
    let path = dir.join("summary.json");
    let mut s = serde_json::to_string_pretty(&merged)?;
    s.push('\n');
    fs::write(&path, s)?;
    Ok(path)
}
