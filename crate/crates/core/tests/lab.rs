use modlab::lab::{ab_deficiency, default_battery, qc_dimension_experiment, reciprocality_probe, LabOptions, Trend};
use modlab::weight::WeightSpec;
use modlab::{CompactSetSpec, Grid, PixelMask};

fn opts() -> LabOptions {
    LabOptions {
        workers: 2,
        ..LabOptions::default()
    }
}

fn fat() -> CompactSetSpec {
    CompactSetSpec::FatCantor {
        start: [0.0, 0.0],
        length: 1.0,
        gaps: None,
    }
}

fn empty() -> CompactSetSpec {
    CompactSetSpec::RawMask {
        mask: PixelMask::empty(Grid::unit(5).unwrap()),
    }
}

#[test]
fn mirror_quads_agree_and_removal_never_helps() {
    let set = fat();
    let battery = default_battery(&set.bounding_box());
    let rep = ab_deficiency(&set, &[6], &battery, &[65, 129], &opts()).unwrap();
    for n in [65, 129] {
        let l = rep.cell(6, "offset_left", n).unwrap().ratio;
        let r = rep.cell(6, "offset_right", n).unwrap().ratio;
        assert!((l - r).abs() < 1e-9, "n = {n}: {l} vs {r}");
    }
    assert!(rep.cells.iter().all(|c| c.ratio <= 1.0 + 1e-3 && c.ratio > 0.0));
    assert_eq!(rep.summary, "deficiency detected");
    let t = rep.trends.iter().find(|t| t.quad_id == "v_cross").unwrap();
    assert_eq!(t.ratios.len(), 2);
    assert_eq!(
        t.trend,
        if t.last_difference > 0.0 {
            Trend::Increasing
        } else {
            Trend::Decreasing
        }
    );
}

#[test]
fn worker_count_does_not_change_the_report() {
    let set = fat();
    let battery = default_battery(&set.bounding_box());
    let one = ab_deficiency(&set, &[4], &battery, &[33, 65], &LabOptions { workers: 1, ..opts() }).unwrap();
    let three = ab_deficiency(&set, &[4], &battery, &[33, 65], &LabOptions { workers: 3, ..opts() }).unwrap();
    assert_eq!(one.to_csv(), three.to_csv());
}

#[test]
fn empty_set_experiments_are_resolution_independent() {
    let set = empty();
    let battery = default_battery(&set.bounding_box());
    let rep = ab_deficiency(&set, &[0], &battery, &[17, 33, 65], &opts()).unwrap();
    assert!(rep.cells.iter().all(|c| c.ratio == 1.0));
    for b in &battery {
        let vals: Vec<f64> = rep
            .cells
            .iter()
            .filter(|c| c.quad_id == b.id)
            .map(|c| c.mod_full)
            .collect();
        assert!(vals.iter().all(|v| (v - vals[0]).abs() < 1e-8), "{}: {vals:?}", b.id);
    }
    let sq: Vec<_> = battery.iter().filter(|b| b.id == "frame_2").cloned().collect();
    let rec = reciprocality_probe(&set, &WeightSpec::Lemma35, &[0], &sq, &[33, 65], &opts()).unwrap();
    for c in &rec.cells {
        assert!(c.converged);
        assert!((c.product - 1.0).abs() < 0.03, "n = {}: {}", c.n, c.product);
    }
}

#[test]
fn dimension_examples() {
    let point = CompactSetSpec::Segment {
        a: [0.3, 0.2],
        b: [0.3, 0.2],
    };
    let rep = qc_dimension_experiment(&point, &WeightSpec::Lemma35, &[0], &[129, 257], &opts()).unwrap();
    for c in &rep.cells {
        assert!(c.euclidean.slope.abs() < 1e-12 && c.weighted.slope.abs() < 1e-12);
    }
    let dust = CompactSetSpec::CantorProduct {
        ratio: 1.0 / 3.0,
        origin: [0.0, 0.0],
        side: 1.0,
    };
    let rep = qc_dimension_experiment(&dust, &WeightSpec::Lemma35, &[5], &[257], &opts()).unwrap();
    let c = &rep.cells[0];
    assert!(
        (c.euclidean.slope - 4f64.ln() / 3f64.ln()).abs() < 0.1,
        "{}",
        c.euclidean.slope
    );
    assert!(c.weighted.slope < c.euclidean.slope);
    assert!(c.euclidean.residual >= 0.0 && c.weighted.slope >= 0.0);
}
