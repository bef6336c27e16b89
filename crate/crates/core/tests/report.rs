use std::fs;

use mecmig::latency::RequestStatus;
use mecmig::report::{emit, summarize};
use mecmig::{run, scenarios, Error, PlannerKind, RunOutput};

fn runs(app: &str, planners: &[PlannerKind], seeds: &[u64], duration: f64) -> Vec<RunOutput> {
    let world = scenarios::load(app).unwrap();
    planners
        .iter()
        .flat_map(|&p| seeds.iter().map(move |&s| (p, s)))
        .map(|(p, s)| run(world.clone(), p, s, duration).unwrap())
        .collect()
}

fn completed_totals(out: &RunOutput) -> Vec<f64> {
    out.requests
        .iter()
        .filter(|r| r.status == RequestStatus::Completed)
        .map(|r| r.breakdown.total)
        .collect()
}

#[test]
fn single_run_mean_matches_direct_average() {
    let outs = runs("openface", &[PlannerKind::Nearest], &[2], 300.0);
    let s = summarize(&outs).unwrap();
    let g = s.group("openface", PlannerKind::Nearest).unwrap();
    let totals = completed_totals(&outs[0]);
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    assert!((g.total_ms.mean - mean).abs() < 1e-9);
    assert_eq!(g.completed, totals.len());
    assert_eq!(g.runs, 1);
    let dt: f64 = outs[0].downtime.iter().map(|d| d.duration()).sum();
    assert!((g.downtime_s.mean - dt).abs() < 1e-9);
    assert!(s.reductions.is_empty());
}

#[test]
fn order_of_runs_is_irrelevant() {
    let mut outs = runs(
        "simple",
        &[PlannerKind::Cloud, PlannerKind::Orchestrated],
        &[0, 1],
        120.0,
    );
    let a = summarize(&outs).unwrap();
    outs.reverse();
    let b = summarize(&outs).unwrap();
    assert_eq!(a, b);
}

#[test]
fn emitted_files_reproduce_reductions() {
    let planners = [
        PlannerKind::Random,
        PlannerKind::Nearest,
        PlannerKind::Orchestrated,
        PlannerKind::Cloud,
    ];
    let outs = runs("yolo", &planners, &[0], 300.0);
    let s = summarize(&outs).unwrap();
    assert_eq!(s.reductions.len(), 3);

    let dir = tempfile::tempdir().unwrap();
    let written = emit(&s, dir.path()).unwrap();
    let cdfs = written
        .iter()
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("cdf_"))
        .count();
    assert_eq!(cdfs, 4);

    // recompute the E2E reductions from breakdown.csv alone
    let mut rdr = csv::Reader::from_path(dir.path().join("breakdown.csv")).unwrap();
    let mut means = std::collections::HashMap::new();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        means.insert(rec[1].to_string(), rec[10].parse::<f64>().unwrap());
    }
    let mut rdr = csv::Reader::from_path(dir.path().join("reductions.csv")).unwrap();
    let mut seen = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let pct: f64 = rec[2].parse().unwrap();
        let oracle = 100.0 * (1.0 - means["orchestrated"] / means[&rec[1]]);
        assert!((pct - oracle).abs() < 1e-3, "{} {pct} vs {oracle}", &rec[1]);
        seen += 1;
    }
    assert_eq!(seen, 3);

    // CDF ends at one and is non-decreasing
    let mut rdr = csv::Reader::from_path(dir.path().join("cdf_yolo_orchestrated.csv")).unwrap();
    let rows: Vec<(f64, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect();
    assert!(rows.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
    assert!((rows.last().unwrap().1 - 1.0).abs() < 1e-9);
}

#[test]
fn emit_is_byte_identical() {
    let outs = runs(
        "openface",
        &[PlannerKind::Random, PlannerKind::Orchestrated],
        &[5],
        200.0,
    );
    let s = summarize(&outs).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = emit(&s, a.path()).unwrap();
    emit(&s, b.path()).unwrap();
    for p in fa {
        let name = p.file_name().unwrap();
        assert_eq!(
            fs::read(&p).unwrap(),
            fs::read(b.path().join(name)).unwrap()
        );
    }
}

#[test]
fn unwritable_destination_reports_path() {
    let outs = runs("simple", &[PlannerKind::Cloud], &[0], 30.0);
    let s = summarize(&outs).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    match emit(&s, blocker.join("out")) {
        Err(Error::Io { path, .. }) => assert!(path.starts_with(&blocker)),
        other => panic!("expected Io error, got {other:?}"),
    }
}

#[test]
fn runs_without_completed_requests_have_no_metrics() {
    let outs = runs("openface", &[PlannerKind::Orchestrated], &[0], 0.0);
    assert!(matches!(summarize(&outs), Err(Error::EmptyMetrics)));
    assert!(matches!(summarize(&[]), Err(Error::EmptyInput)));
}
