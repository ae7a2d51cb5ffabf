use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dimfac::exact::parse_lp;
use dimfac_cli::config::InstanceConfig;
use dimfac_cli::record::SolutionRecord;
use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn dimfac(args: &[&str], threads: usize) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dimfac"))
        .args(args)
        .env("DIMFAC_THREADS", threads.to_string())
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn fail(out: &Output) -> String {
    assert!(!out.status.success());
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Total of the 2x2 fixture at a placement, by hand: each footprint is its
/// own cell, the two remaining cells go to the cheaper facility, congestion
/// and lost costs are the identity on the masses.
fn fixture_oracle(p: &[(usize, usize)]) -> f64 {
    let a = [0.0001, 0.1];
    let centre = |k: usize, l: usize| (0.25 + 0.5 * k as f64, 0.25 + 0.5 * l as f64);
    let mut assigned = [0.0; 2];
    let mut lost = 0.0;
    for k in 0..2 {
        for l in 0..2 {
            if p.contains(&(k, l)) {
                lost += 0.25;
                continue;
            }
            let (x, y) = centre(k, l);
            let cost: Vec<f64> = p
                .iter()
                .zip(a)
                .map(|(&(pk, pl), a)| {
                    let (px, py) = centre(pk, pl);
                    a + ((x - px).powi(2) + (y - py).powi(2)).sqrt()
                })
                .collect();
            let winner = if cost[1] < cost[0] { 1 } else { 0 };
            assigned[winner] += 0.25;
        }
    }
    assigned[0] + assigned[1] + lost
}

#[test]
fn exact_solve_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exact.json");
    let cfg = configs().join("fixture_2x2.json");
    ok(&dimfac(&["solve", "--config", s(&cfg), "--method", "exact", "--out", s(&out)], 2));
    let rec = SolutionRecord::load(&out).unwrap();
    let cells: Vec<(usize, usize)> = rec.facilities.iter().map(|f| (f.cell[0], f.cell[1])).collect();
    assert_eq!(rec.objective.total, fixture_oracle(&cells));
    assert_eq!(rec.objective.total, 1.0);
    assert_eq!(fixture_oracle(&[(0, 0), (1, 1)]), 1.0);
    let inst = InstanceConfig::load(&cfg).unwrap().build().unwrap();
    assert!(rec.consistency_gap(&inst).unwrap() <= 1e-9);
}

fn strip_timing(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let solver = v["solver"].as_object_mut().unwrap();
    solver.remove("preprocess_seconds");
    solver.remove("solve_seconds");
    v
}

#[test]
fn grasp_records_are_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("two_squares_16x16.json");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    ok(&dimfac(&["solve", "--config", s(&cfg), "--seed", "11", "--out", s(&a)], 1));
    ok(&dimfac(&["solve", "--config", s(&cfg), "--seed", "11", "--out", s(&b), "--threads", "4"], 1));
    assert_eq!(strip_timing(&a), strip_timing(&b));
    let rec = SolutionRecord::load(&a).unwrap();
    assert_eq!(rec.solver.seed, Some(11));
    let inst = InstanceConfig::load(&cfg).unwrap().build().unwrap();
    assert!(rec.consistency_gap(&inst).unwrap() <= 1e-9);
    assert!(rec.objective.total <= rec.solver.initial_total.unwrap());
}

#[test]
fn config_without_facilities_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(configs().join("fixture_2x2.json")).unwrap()).unwrap();
    v["facilities"] = Value::Array(vec![]);
    let cfg = dir.path().join("empty.json");
    std::fs::write(&cfg, v.to_string()).unwrap();
    let err = fail(&dimfac(&["solve", "--config", s(&cfg), "--out", s(&dir.path().join("x.json"))], 1));
    assert!(err.contains("`facilities`"), "{err}");
}

#[test]
fn evaluate_reports_suitability() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("fixture_2x2.json");
    let out = dir.path().join("eval.json");
    ok(&dimfac(&["evaluate", "--config", s(&cfg), "--placement", "0,0;1,1", "--out", s(&out)], 1));
    let rec = SolutionRecord::load(&out).unwrap();
    assert_eq!(rec.objective.total, fixture_oracle(&[(0, 0), (1, 1)]));
    assert_eq!(rec.facilities[0].assigned_mass, 0.5);
    assert_eq!(rec.objective.lost_mass, 0.5);

    let err = fail(&dimfac(&["evaluate", "--config", s(&cfg), "--placement", "1,0;1,0", "--out", s(&out)], 1));
    assert!(err.contains("facilities 0 and 1 overlap"), "{err}");
    let err = fail(&dimfac(&["evaluate", "--config", s(&cfg), "--placement", "0,0;2,0", "--out", s(&out)], 1));
    assert!(err.contains("facility 1"), "{err}");
}

#[test]
fn export_parses_and_carries_warm_start() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("fixture_2x2.json");
    let sol = dir.path().join("sol.json");
    ok(&dimfac(&["evaluate", "--config", s(&cfg), "--placement", "0,0;1,1", "--out", s(&sol)], 1));
    let lp = dir.path().join("model.lp");
    let out = dimfac(&["export-milp", "--config", s(&cfg), "--out", s(&lp), "--warm-start", s(&sol)], 1);
    ok(&out);
    assert!(out.stderr.is_empty());
    let parsed = parse_lp(&std::fs::read_to_string(&lp).unwrap()).unwrap();
    // theta 2*4, tau 2*4, phi 4
    assert_eq!(parsed.variables.len(), 20);
    assert_eq!(parsed.binaries.len(), 16);
    // A3 2, A4 4, A5 8, A6 2*8
    assert_eq!(parsed.constraints.len(), 30);
    assert!(parsed.warm_start.contains(&"t_00_00_00".to_string()));
    assert!(parsed.warm_start.contains(&"t_01_01_01".to_string()));

    let out = dimfac(&["export-milp", "--config", s(&cfg), "--out", s(&lp), "--warn-rows", "10"], 1);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning: model has 30 constraints"));
    assert!(lp.exists());
}

#[test]
fn render_is_deterministic_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("mixed_shapes_20x20.json");
    let sol = dir.path().join("sol.json");
    ok(&dimfac(&["solve", "--config", s(&cfg), "--out", s(&sol)], 1));
    let a = dir.path().join("a.svg");
    let b = dir.path().join("b.svg");
    ok(&dimfac(&["render", "--config", s(&cfg), "--solution", s(&sol), "--out", s(&a)], 1));
    ok(&dimfac(&["render", "--config", s(&cfg), "--solution", s(&sol), "--out", s(&b), "--show-grid"], 3));
    let svg = std::fs::read_to_string(&a).unwrap();
    let inst = InstanceConfig::load(&cfg).unwrap().build().unwrap();
    assert_eq!(svg.matches(r#"class="facility""#).count(), inst.di.rho());
    assert_eq!(svg.matches(r#"class="cell""#).count(), inst.di.n_cells());
    let gridded = std::fs::read_to_string(&b).unwrap();
    assert_eq!(gridded.matches(r#"class="grid""#).count(), 21 + 16);
    ok(&dimfac(&["render", "--config", s(&cfg), "--solution", s(&sol), "--out", s(&b)], 2));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let err = fail(&dimfac(
        &["render", "--config", s(&configs().join("fixture_2x2.json")), "--solution", s(&sol), "--out", s(&b)],
        1,
    ));
    assert!(err.contains("does not match"), "{err}");
}
