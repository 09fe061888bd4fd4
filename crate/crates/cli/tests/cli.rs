use std::path::Path;
use std::process::{Command, Output};

use mlmc_trace::report::{read_csv_file, Method};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlmc-trace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exact_trace_of_smallest_laplacian() {
    let out = cli(&["trace-exact", "--family", "laplace2d", "--N", "2"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "1.1666666667\n");
}

#[test]
fn estimate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = cli(&["estimate", "--method", "mlmc", "--N", "63", "--eps", "1e-3", "--seed", "7", "--out", path(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(a.with_extension("json").exists());
}

#[test]
fn plateau_tolerances_cost_the_same() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let o = cli(&["sweep", "--method", "mlmc", "--N", "127", "--eps", "1e-1,1e-1.5", "--out", path(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = read_csv_file(&csv).unwrap();
    assert_eq!(records.len(), 2);
    assert!((records[1].epsilon - 10f64.powf(-1.5)).abs() < 1e-15);
    assert_eq!(records[0].work_total, records[1].work_total);
}

#[test]
fn schwinger_multilevel_beats_plain() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("schwinger.csv");
    let o = cli(&[
        "sweep", "--family", "schwinger", "--N", "16", "--m", "-0.1", "--method", "plain,mlmc", "--eps", "1e-2", "--out",
        path(&csv),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = read_csv_file(&csv).unwrap();
    let work = |m: Method| records.iter().find(|r| r.method == m).unwrap().work_total;
    assert!(records.iter().all(|r| r.is_ok()));
    assert!(work(Method::Mlmc) < work(Method::Plain), "{} vs {}", work(Method::Mlmc), work(Method::Plain));
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.json");
    let csv = dir.path().join("out.csv");
    std::fs::write(
        &config,
        r#"{"family":"laplace2d","N":15,"methods":["exact","mlmc"],"epsilon":1e-2,"seeds":[1,2]}"#,
    )
    .unwrap();
    let o = cli(&["sweep", "--config", path(&config), "--seed", "3", "--out", path(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = read_csv_file(&csv).unwrap();
    assert_eq!(records.len(), 2);
    assert!(records.iter().all(|r| r.seed == 3 && r.n == 15));
    let exact = &records[0];
    assert_eq!(exact.method, Method::Exact);
    assert!(exact.samples_per_level.is_empty());
    assert_eq!(exact.rel_error, Some(0.0));
}

#[test]
fn failing_cells_are_recorded_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let o = cli(&["sweep", "--N", "15", "--method", "deflated,mlmc", "--eps", "1e-2", "--out", path(&csv)]);
    assert_eq!(o.status.code(), Some(1));
    let records = read_csv_file(&csv).unwrap();
    assert_eq!(records.len(), 2);
    assert!(records[0].status.starts_with("error"));
    assert!(records[1].is_ok());
}

#[test]
fn invalid_input_is_rejected() {
    assert!(!cli(&["estimate", "--bogus"]).status.success());
    assert!(!cli(&["estimate", "--weights", "0.5,0.6"]).status.success());
    assert!(!cli(&["estimate", "--eps", "1e-x"]).status.success());
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"eps":1e-3}"#).unwrap();
    let o = cli(&["estimate", "--config", path(&config)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn generate_and_dump_hierarchy() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["generate", "--family", "schwinger", "--N", "8", "--m", "0.2", "--out", path(dir.path())]);
    assert!(o.status.success());
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("schwinger_N8.json")).unwrap()).unwrap();
    assert_eq!(sidecar["N"], 8);
    assert_eq!(sidecar["m"], 0.2);
    let a = mlmc_trace::sparse::mtx::read_file(dir.path().join("schwinger_N8.mtx")).unwrap();
    assert_eq!(a.nnz(), 18 * 64);

    let h = dir.path().join("h");
    let o = cli(&["hierarchy", "--N", "31", "--out", path(&h)]);
    assert!(o.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(h.join("hierarchy.json")).unwrap()).unwrap();
    assert_eq!(manifest["levels"].as_array().unwrap().len(), 3);
}

#[test]
fn report_summarizes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let o = cli(&["sweep", "--N", "15", "--method", "plain,mlmc", "--eps", "1e-2,3e-3,1e-3", "--out", path(&csv)]);
    assert!(o.status.success());
    let o = cli(&["report", path(&csv)]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("laplace2d N=15 z4 mlmc: "), "{text}");
    assert!(text.contains("plain/mlmc"), "{text}");
}
