use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use modlab::config::ExperimentConfig;
use modlab::mask_io::{load_mask, save_mask};
use modlab::modulus::{
    family_modulus_conductance, family_modulus_cutting_plane, ConductanceOptions, CurveFamilySpec, CuttingPlaneOptions,
    FamilyKind, ModulusResult, Quadrilateral, FLAG_NOT_CONVERGED,
};
use modlab::runner::{merge_reports, run, Experiment};
use modlab::sets::Piece;
use modlab::weight::{distance_transform, eval_weight, WeightSpec};
use modlab::{CompactSetSpec, Error, Grid, Rect, ScalarField};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "modlab", version, about = "Discrete modulus and removability experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment configured in a `.cfg` file.
    Run { config: PathBuf },
    /// Print a finite generation of a set, optionally rasterized to a mask file.
    GenSet {
        #[arg(value_enum)]
        kind: SetKind,
        /// Removal ratio (`1/3` style fractions allowed); Cantor kinds only.
        ratio: Option<String>,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        /// Write a `MODLAB-MASK v1` rasterization here.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Grid nodes per side for `--mask`.
        #[arg(long, default_value_t = 257)]
        n: usize,
    },
    /// Exact Euclidean distance to a mask, as CSV (`.csv`) or PGM.
    Distance {
        mask: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Conformal weight from a distance field.
    Weight {
        #[arg(long, value_enum)]
        kind: WeightKind,
        /// Exponent for `--kind power`.
        #[arg(long)]
        p: Option<f64>,
        /// Distance field CSV; computed from `--mask` when absent.
        #[arg(long)]
        delta: Option<PathBuf>,
        /// Mask defining the grid (and the set, for the zero check).
        #[arg(long)]
        mask: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Modulus of an annulus or rectangle family.
    Modulus {
        /// Inner and outer radius about the origin.
        #[arg(long, num_args = 2, value_names = ["R_IN", "R_OUT"], conflicts_with = "rect")]
        annulus: Option<Vec<f64>>,
        /// Rectangle `[0, W] × [0, H]`, left→right family.
        #[arg(long, num_args = 2, value_names = ["W", "H"])]
        rect: Option<Vec<f64>>,
        #[arg(long, default_value_t = 257)]
        n: usize,
        /// Half-width of the square grid around an annulus (default 1.1·R_OUT).
        #[arg(long)]
        half_width: Option<f64>,
        /// Nodes removed from the family's region.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SolverArg::Conductance)]
        solver: SolverArg,
        /// Write the optimal density here (`.csv` or PGM).
        #[arg(long)]
        rho: Option<PathBuf>,
    },
    /// Weighted versus Euclidean box dimension from a config.
    Dimension { config: PathBuf },
    /// Modulus deficiency under removal from a config.
    Deficiency { config: PathBuf },
    /// Primal/dual modulus products from a config.
    Reciprocality { config: PathBuf },
    /// Merge the report JSONs of a directory into `summary.json`.
    Report { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum SetKind {
    /// Linear Cantor set on [0, 1].
    Cantor,
    /// Product Cantor dust on [0, 1]².
    Dust,
    /// Positive-length Cantor set on [0, 1].
    FatCantor,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightKind {
    Lemma35,
    Power,
    IndicatorComplement,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Conductance,
    CuttingPlane,
}

/// Validation failures exit 2; solver failures exit 3.
fn exit_for(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) => EXIT_NOT_CONVERGED,
        Error::Io(_) => 1,
        _ => EXIT_VALIDATION,
    }
}

fn parse_ratio(s: &str) -> Result<f64, Error> {
    let bad = || Error::Parameter {
        field: "ratio".into(),
        reason: format!("`{s}` is not a number"),
    };
    match s.split_once('/') {
        Some((a, b)) => Ok(a.trim().parse::<f64>().map_err(|_| bad())? / b.trim().parse::<f64>().map_err(|_| bad())?),
        None => s.trim().parse().map_err(|_| bad()),
    }
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    std::env::var_os("MODLAB_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.output_dir.clone())
}

fn run_config(path: &Path, only: Option<Experiment>) -> Result<u8, Error> {
    let cfg = ExperimentConfig::load(path)?;
    let dir = out_dir(&cfg);
    let outcome = run(&cfg, &dir, only)?;
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    if outcome.unconverged.is_empty() {
        Ok(0)
    } else {
        for c in &outcome.unconverged {
            eprintln!("not converged: {c}");
        }
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn gen_set(kind: SetKind, ratio: Option<String>, depth: usize, mask: Option<PathBuf>, n: usize) -> Result<u8, Error> {
    let ratio = ratio.as_deref().map(parse_ratio).transpose()?;
    let spec = match kind {
        SetKind::Cantor => CompactSetSpec::CantorLine {
            ratio: ratio.unwrap_or(1.0 / 3.0),
            start: [0.0, 0.0],
            length: 1.0,
        },
        SetKind::Dust => CompactSetSpec::CantorProduct {
            ratio: ratio.unwrap_or(0.5),
            origin: [0.0, 0.0],
            side: 1.0,
        },
        SetKind::FatCantor => CompactSetSpec::FatCantor {
            start: [0.0, 0.0],
            length: 1.0,
            gaps: None,
        },
    };
    let generation = spec.generate(depth)?;
    let mut text = format!("# {} depth {depth}: {} pieces\n", spec.kind_name(), generation.len());
    for p in &generation.pieces {
        match p {
            Piece::Box(r) if r.y0 == r.y1 => writeln!(text, "{} {}", r.x0, r.x1),
            Piece::Box(r) => writeln!(text, "{} {} {} {}", r.x0, r.y0, r.x1, r.y1),
            other => writeln!(text, "{other:?}"),
        }
        .expect("writing to a String");
    }
    // a closed pipe (e.g. `| head`) is not an error
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
    if let Some(path) = mask {
        let grid = modlab::lab::lab_grid(&spec.bounding_box(), n)?;
        save_mask(&spec.rasterize(depth, &grid)?, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn weight_cmd(
    kind: WeightKind,
    p: Option<f64>,
    delta: Option<PathBuf>,
    mask: PathBuf,
    output: PathBuf,
) -> Result<u8, Error> {
    let spec = match kind {
        WeightKind::Lemma35 => WeightSpec::Lemma35,
        WeightKind::Power => WeightSpec::Power {
            p: p.ok_or_else(|| Error::Parameter {
                field: "p".into(),
                reason: "required for --kind power".into(),
            })?,
        },
        WeightKind::IndicatorComplement => WeightSpec::IndicatorComplement,
    };
    let mask = load_mask(&mask)?;
    let delta = match delta {
        Some(path) => ScalarField::from_csv(&std::fs::read_to_string(path)?, mask.grid().clone())?,
        None => distance_transform(&mask)?,
    };
    let omega = eval_weight(&delta, &spec)?;
    let zeros_on_mask = omega.values().iter().zip(mask.bits()).all(|(&w, &b)| (w == 0.0) == b);
    omega.write(&output)?;
    println!("wrote {}", output.display());
    println!("zeros exactly on mask: {}", if zeros_on_mask { "yes" } else { "no" });
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn modulus_cmd(
    annulus: Option<Vec<f64>>,
    rect: Option<Vec<f64>>,
    n: usize,
    half_width: Option<f64>,
    mask: Option<PathBuf>,
    solver: SolverArg,
    rho: Option<PathBuf>,
) -> Result<u8, Error> {
    let mut spec = match (annulus, rect) {
        (Some(a), _) => {
            let (r, big_r) = (a[0], a[1]);
            let half = half_width.unwrap_or(1.1 * big_r);
            let grid = Grid::square([-half, -half], 2.0 * half, n)?;
            CurveFamilySpec::new(
                grid,
                FamilyKind::Annulus {
                    center: [0.0, 0.0],
                    r,
                    big_r,
                },
            )
        }
        (None, Some(wh)) => {
            let (w, h) = (wh[0], wh[1]);
            let side = w.max(h);
            let grid = Grid::square([0.0, 0.0], side, n)?;
            CurveFamilySpec::quad(grid, Quadrilateral::new(Rect::new(0.0, 0.0, w, h)))
        }
        (None, None) => {
            return Err(Error::Parameter {
                field: "family".into(),
                reason: "give --annulus or --rect".into(),
            })
        }
    };
    if let Some(path) = mask {
        let m = load_mask(&path)?;
        if !m.grid().same_as(&spec.grid) {
            return Err(Error::Geometry("mask grid differs from the family grid".into()));
        }
        spec = spec.with_removed(m);
    }
    let res: ModulusResult = match solver {
        SolverArg::Conductance => family_modulus_conductance(&spec, &ConductanceOptions::default())?,
        SolverArg::CuttingPlane => family_modulus_cutting_plane(&spec, &CuttingPlaneOptions::default())?,
    };
    println!("{}", res.to_json()?);
    if let Some(path) = rho {
        res.rho.write(&path)?;
    }
    Ok(if res.has_flag(FLAG_NOT_CONVERGED) {
        EXIT_NOT_CONVERGED
    } else {
        0
    })
}

fn dispatch(cmd: Command) -> Result<u8, Error> {
    match cmd {
        Command::Run { config } => run_config(&config, None),
        Command::Deficiency { config } => run_config(&config, Some(Experiment::Deficiency)),
        Command::Reciprocality { config } => run_config(&config, Some(Experiment::Reciprocality)),
        Command::Dimension { config } => run_config(&config, Some(Experiment::Dimension)),
        Command::GenSet {
            kind,
            ratio,
            depth,
            mask,
            n,
        } => gen_set(kind, ratio, depth, mask, n),
        Command::Distance { mask, output } => {
            let field = distance_transform(&load_mask(&mask)?)?;
            field.write(&output)?;
            println!("wrote {}", output.display());
            Ok(0)
        }
        Command::Weight {
            kind,
            p,
            delta,
            mask,
            output,
        } => weight_cmd(kind, p, delta, mask, output),
        Command::Modulus {
            annulus,
            rect,
            n,
            half_width,
            mask,
            solver,
            rho,
        } => modulus_cmd(annulus, rect, n, half_width, mask, solver, rho),
        Command::Report { dir } => {
            let path = merge_reports(&dir)?;
            println!("wrote {}", path.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
