use std::sync::Arc;

use mlmc_trace::estimators::{mlmc_trace, Distribution, StoppingRule};
use mlmc_trace::experiment::{run_cell, EstimatorSettings, Problem, ProblemConfig};
use mlmc_trace::generators::gen_laplace2d;
use mlmc_trace::multigrid::{build_geometric_hierarchy, write_hierarchy, HierarchyManifest};
use mlmc_trace::report::{read_csv, write_csv, Method};
use mlmc_trace::solvers::{MultigridSolver, SolveConfig};
use mlmc_trace::sparse::mtx;
use mlmc_trace::CostLedger;

fn loose(epsilon: f64) -> EstimatorSettings {
    EstimatorSettings {
        epsilon,
        ..EstimatorSettings::default()
    }
}

#[test]
fn mlmc_result_independent_of_batch_size() {
    let a = gen_laplace2d(31).unwrap();
    let h = Arc::new(build_geometric_hierarchy(&a, 31, 3, &mut CostLedger::new()).unwrap());
    let solver = MultigridSolver::new(h.clone(), SolveConfig::default(), &mut CostLedger::new()).unwrap();
    let results: Vec<_> = [1, 3, 8, 64]
        .into_iter()
        .map(|batch| {
            let rule = StoppingRule {
                batch_size: batch,
                ..StoppingRule::relative(3e-3)
            };
            mlmc_trace(&h, 2, &solver, Distribution::Rademacher, &rule, 11).unwrap()
        })
        .collect();
    for r in &results[1..] {
        assert_eq!(r.mean, results[0].mean);
        assert_eq!(r.samples_per_level(), results[0].samples_per_level());
        assert_eq!(r.work(), results[0].work());
    }
}

#[test]
fn all_methods_agree_on_small_laplace() {
    let problem = Problem::build(ProblemConfig::laplace(31)).unwrap();
    let settings = EstimatorSettings {
        n_defl: Some(10),
        ..loose(1e-2)
    };
    for method in [Method::Plain, Method::Deflated, Method::Mlmc] {
        let r = run_cell(&problem, method, &settings, 3);
        assert!(r.is_ok(), "{method}: {}", r.status);
        assert!(r.rel_error.unwrap() < 0.05, "{method}: {:?}", r.rel_error);
    }
}

#[test]
fn gauge_and_schwinger_cells_run() {
    for cfg in [ProblemConfig::gauge(16, 0.5, 2), ProblemConfig::schwinger(16, -0.1, 0.009, 2)] {
        let family = cfg.family;
        let problem = Problem::build(cfg).unwrap();
        let plain = run_cell(&problem, Method::Plain, &loose(1e-2), 0);
        let mlmc = run_cell(&problem, Method::Mlmc, &loose(1e-2), 0);
        for r in [&plain, &mlmc] {
            assert!(r.is_ok(), "{family} {}: {}", r.method, r.status);
            assert!(r.rel_error.unwrap() < 0.05, "{family} {}: {:?}", r.method, r.rel_error);
        }
    }
}

#[test]
fn records_survive_csv() {
    let problem = Problem::build(ProblemConfig::laplace(15)).unwrap();
    let records: Vec<_> = (0..3).map(|s| run_cell(&problem, Method::Mlmc, &loose(1e-2), s)).collect();
    let mut buf = Vec::new();
    write_csv(&records, &mut buf).unwrap();
    let back = read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), 3);
    for (a, b) in records.iter().zip(&back) {
        assert_eq!(a.samples_per_level, b.samples_per_level);
        assert_eq!(a.work_total, b.work_total);
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.status, b.status);
    }
}

#[test]
fn dumped_hierarchy_reloads() {
    let a = gen_laplace2d(31).unwrap();
    let h = build_geometric_hierarchy(&a, 31, 3, &mut CostLedger::new()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_hierarchy(&h, dir.path()).unwrap();
    let json = std::fs::read_to_string(dir.path().join("hierarchy.json")).unwrap();
    let parsed: HierarchyManifest = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed, manifest);
    for lv in &manifest.levels {
        let op = mtx::read_file(dir.path().join(&lv.operator)).unwrap();
        assert_eq!(op.nnz(), lv.nnz);
        assert_eq!(op.to_dense(), h.operator(lv.level).to_dense());
    }
}
