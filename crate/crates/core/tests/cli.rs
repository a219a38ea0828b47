use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use modlab::lab::lab_grid;
use modlab::mask_io::load_mask;
use modlab::CompactSetSpec;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

fn modlab(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_modlab"));
    cmd.args(args);
    match out_dir {
        Some(d) => cmd.env("MODLAB_OUT", d),
        None => cmd.env_remove("MODLAB_OUT"),
    };
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_cfg(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.cfg");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn gen_set_prints_sixteen_intervals() {
    let o = modlab(&["gen-set", "cantor", "1/3", "--depth", "4"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let intervals: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(intervals.len(), 16);
    assert!(intervals[0].starts_with("0 0.0123"));
}

#[test]
fn annulus_modulus_is_near_two_pi() {
    let o = modlab(&["modulus", "--annulus", "1", "2.71828", "--n", "257"], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let value = v["value"].as_f64().unwrap();
    assert!(
        (value - std::f64::consts::TAU).abs() / std::f64::consts::TAU < 0.03,
        "{value}"
    );
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = modlab(&["frobnicate"], None);
    assert_eq!(o.status.code(), Some(64));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn empty_set_run_gives_unit_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        &format!(
            "[set]\nkind = raw_mask\nmask = {FIXTURES}/empty_9.mask\n[grid]\nresolutions = 17, 33\n[deficiency]\n"
        ),
    );
    let out = dir.path().join("reports");
    let o = modlab(&["run", &cfg], Some(&out));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("deficiency.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.ends_with(",1")), "{csv}");

    let o = modlab(&["report", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["deficiency"]["report"]["summary"], "no counterexample found");
}

#[test]
fn decreasing_resolutions_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "[set]\nkind = segment\na = 0, 0\nb = 1, 0\n[grid]\nresolutions = 64, 32\n[deficiency]\n",
    );
    let o = modlab(&["run", &cfg], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("resolutions must increase"), "{}", stderr(&o));
}

#[test]
fn unconverged_cells_exit_three_and_keep_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "[set]\nkind = segment\na = 0, 0\nb = 0, 0\n[reciprocality]\nresolutions = 17\nbattery = frame_2\n\
         [solver]\nmax_paths = 2\n",
    );
    let o = modlab(&["reciprocality", &cfg], Some(dir.path()));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("quad `frame_2`"));
    let csv = fs::read_to_string(dir.path().join("reciprocality.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",false"));
}

#[test]
fn weight_vanishes_exactly_on_the_mask() {
    let dir = tempfile::tempdir().unwrap();
    let mask_path = format!("{FIXTURES}/fat_cantor_d5_n65.mask");
    let delta = dir.path().join("delta.csv");
    let o = modlab(&["distance", &mask_path, "-o", delta.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    let out = dir.path().join("w.csv");
    let o = modlab(
        &[
            "weight",
            "--kind",
            "lemma35",
            "--delta",
            delta.to_str().unwrap(),
            "--mask",
            &mask_path,
            "-o",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("zeros exactly on mask: yes"));
    let mask = load_mask(&mask_path).unwrap();
    let n = mask.grid().n();
    for line in fs::read_to_string(&out).unwrap().lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (i, j, w): (usize, usize, f64) = (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap());
        assert!(i < n && j < n);
        assert_eq!(w == 0.0, mask.get(i, j), "node ({i}, {j})");
    }
    let pgm = dir.path().join("w.pgm");
    let o = modlab(
        &[
            "weight",
            "--kind",
            "lemma35",
            "--mask",
            &mask_path,
            "-o",
            pgm.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(fs::read(&pgm).unwrap().starts_with(b"P5\n"));
}

#[test]
fn fat_cantor_fixture_matches_rasterization() {
    let fixture = load_mask(format!("{FIXTURES}/fat_cantor_d5_n65.mask")).unwrap();
    let spec = CompactSetSpec::FatCantor {
        start: [0.0, 0.0],
        length: 1.0,
        gaps: None,
    };
    let grid = lab_grid(&spec.bounding_box(), 65).unwrap();
    let mask = spec.rasterize(5, &grid).unwrap();
    assert!(fixture.grid().same_as(&grid));
    assert_eq!(fixture.bits(), mask.bits());
    assert_eq!(fixture.count(), 24);
    // only the first two gap stages are wider than a cell at this size
    let (_, j) = grid.nearest([0.5, 0.0]).unwrap();
    let row: Vec<bool> = (0..grid.n()).map(|i| fixture.get(i, j)).collect();
    let runs = row.windows(2).filter(|w| w[1] && !w[0]).count() + usize::from(row[0]);
    assert_eq!(runs, 4);
}
