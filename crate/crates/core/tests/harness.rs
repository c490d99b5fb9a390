use std::fs;
use std::process::Command;

use dlmp_market::format::{to_price_units, PRICE_SCALE};
use dlmp_market::harness::{
    aggregators_csv, decompose, emit_results, emit_sweep, generate_scenario, price_of_fairness,
    run_scenario, run_sweep, trace_csv, weight_grid, write_atomic, Scenario, ScenarioKind,
    ScenarioOverrides, SweepRow, SweepTable, AGGREGATORS_CSV, LINEARIZATION_CSV, SUMMARY_JSON,
    SWEEP_CSV, TRACE_CSV,
};
use dlmp_market::solver::SolverConfig;
use dlmp_market::Error;

fn scenario(kind: ScenarioKind, seed: u64) -> Scenario {
    generate_scenario(kind, seed, &ScenarioOverrides::default()).unwrap()
}

fn size_of(s: &Scenario, node: &str) -> usize {
    s.aggregators
        .iter()
        .find(|a| a.node == node)
        .unwrap()
        .prosumers
        .len()
}

#[test]
fn scenario_generation_is_deterministic() {
    let a = scenario(ScenarioKind::I, 7);
    let b = scenario(ScenarioKind::I, 7);
    assert_eq!(a, b);
    assert_eq!(a.digest(), b.digest());
    assert_ne!(a.digest(), scenario(ScenarioKind::I, 8).digest());
    assert_eq!(Scenario::from_json(&a.to_json()).unwrap(), a);
}

#[test]
fn scenario_one_layout() {
    let s = scenario(ScenarioKind::I, 3);
    assert_eq!(s.aggregators.len(), 17);
    assert!(s.sizes().iter().all(|&g| g == 10));
    for p in s.aggregators.iter().flat_map(|a| &a.prosumers) {
        assert_eq!(p.g, 0.0);
        assert!((1.0..=4.0).contains(&p.a) && (0.5..=2.0).contains(&p.b));
    }
}

#[test]
fn scenario_two_sizes() {
    for seed in [1, 2, 99] {
        let s = scenario(ScenarioKind::II, seed);
        let large: Vec<&str> = s
            .aggregators
            .iter()
            .filter(|a| a.prosumers.len() == 20)
            .map(|a| a.node.as_str())
            .collect();
        assert_eq!(large, ["12", "25", "27", "36"]);
        assert_eq!(s.sizes().iter().filter(|&&g| g == 10).count(), 13);
        assert_eq!(size_of(&s, "23"), 10);
    }
}

#[test]
fn scenario_three_generation() {
    for seed in [1, 5] {
        let s = scenario(ScenarioKind::III, seed);
        for a in &s.aggregators {
            let pv = ["23", "26", "31"].contains(&a.node.as_str());
            assert_eq!(a.prosumers.iter().all(|p| p.g > 0.0), pv, "{}", a.node);
            if !pv {
                assert!(a.prosumers.iter().all(|p| p.g == 0.0));
            }
        }
    }
}

#[test]
fn adding_prosumers_keeps_existing_draws() {
    let small = scenario(ScenarioKind::I, 4);
    let big = generate_scenario(
        ScenarioKind::I,
        4,
        &ScenarioOverrides {
            prosumers_per_aggregator: Some(12),
            ..Default::default()
        },
    )
    .unwrap();
    for (a, b) in small.aggregators.iter().zip(&big.aggregators) {
        assert_eq!(a.prosumers[..], b.prosumers[..10]);
    }
}

#[test]
fn invalid_scenarios_are_rejected() {
    assert!(matches!(
        "IV".parse::<ScenarioKind>(),
        Err(Error::UnknownScenario(_))
    ));
    let bad = ScenarioOverrides {
        prosumers_per_aggregator: Some(0),
        ..Default::default()
    };
    assert!(generate_scenario(ScenarioKind::I, 1, &bad).is_err());
    let bad = ScenarioOverrides {
        eta: Some(-1.0),
        ..Default::default()
    };
    assert!(generate_scenario(ScenarioKind::I, 1, &bad).is_err());
    assert!(generate_scenario(ScenarioKind::Custom, 1, &ScenarioOverrides::default()).is_err());
}

#[test]
fn price_of_fairness_examples() {
    assert_eq!(price_of_fairness(100.0, 100.0).unwrap(), 0.0);
    assert!((price_of_fairness(96.0, 100.0).unwrap() - 0.04).abs() < 1e-15);
    assert!(price_of_fairness(1.0, 0.0).is_err());
    assert!(price_of_fairness(1.0, -5.0).is_err());
}

#[test]
fn weight_grid_is_snapped() {
    let g = weight_grid(0.0, 0.5, 0.02).unwrap();
    assert_eq!(g.len(), 26);
    assert_eq!(g[0], 0.0);
    assert!((g[25] - 0.5).abs() < 1e-15);
    assert_eq!(weight_grid(0.0, 0.0, 0.02).unwrap(), vec![0.0]);
    assert!(weight_grid(0.5, 0.0, 0.02).is_err());
    assert!(weight_grid(0.0, 0.5, 0.0).is_err());
}

#[test]
fn zero_grid_gives_one_unregularized_row() {
    let s = scenario(ScenarioKind::I, 1);
    let t = run_sweep(&s, &[0.0], &SolverConfig::default()).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.rows[0].fairness_weight, 0.0);
    assert_eq!(t.rows[0].pof, 0.0);
    assert!(t.rows[0].converged);
}

#[test]
fn aggregator_table_adds_up() {
    let s = scenario(ScenarioKind::I, 1);
    let config = SolverConfig {
        fairness_weight: 0.3,
        ..SolverConfig::default()
    };
    let mut s = s;
    s.fairness_weight = 0.3;
    let record = run_scenario(&s, &config).unwrap();
    let csv = aggregators_csv(&record);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "label,node,p_k,c_k,c_V,c_C,c_EL,c_F,G_k"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 17);
    // Sum the printed decimals as integers so no float rounding can hide a gap.
    let units = |s: &str| -> i128 {
        let (neg, body) = s.strip_prefix('-').map_or((false, s), |b| (true, b));
        let (int, frac) = body.split_once('.').unwrap();
        assert_eq!(frac.len(), 12);
        let v = int.parse::<i128>().unwrap() * 1_000_000_000_000 + frac.parse::<i128>().unwrap();
        if neg {
            -v
        } else {
            v
        }
    };
    for (k, r) in rows.iter().enumerate() {
        assert_eq!(
            units(r[3]),
            units(r[4]) + units(r[5]) + units(r[6]) + units(r[7])
        );
        assert_eq!(r[8], "10");
        // The printed price is the broadcast price to within the rounding.
        let c = record.result.prices[k];
        assert!((units(r[3]) - to_price_units(c)).abs() <= 2, "{k}");
        assert!((units(r[3]) as f64 / PRICE_SCALE - c).abs() <= 1e-11 * c.abs().max(1.0));
    }
}

#[test]
fn sweep_csv_round_trip() {
    let table = SweepTable {
        scenario_digest: "x".into(),
        seed: 1,
        rows: vec![
            SweepRow {
                fairness_weight: 0.0,
                jain: 0.8123456789012345,
                welfare: 577.123456789012,
                pof: 0.0,
                price_spread: 0.19413,
                iterations: 3716,
                converged: true,
            },
            SweepRow {
                fairness_weight: 0.02,
                jain: 0.82,
                welfare: 577.1,
                pof: 4.69e-8,
                price_spread: 1.0 / 3.0,
                iterations: 0,
                converged: false,
            },
        ],
    };
    let csv = table.to_csv();
    let rows = SweepTable::rows_from_csv(&csv).unwrap();
    let again = SweepTable {
        rows: rows.clone(),
        ..table.clone()
    };
    assert_eq!(again.to_csv(), csv);
    // Values come back to twelve significant digits.
    for (a, b) in rows.iter().zip(&table.rows) {
        for (x, y) in [
            (a.jain, b.jain),
            (a.welfare, b.welfare),
            (a.pof, b.pof),
            (a.price_spread, b.price_spread),
        ] {
            assert!((x - y).abs() <= 5e-12 * y.abs());
        }
        assert_eq!(
            (a.iterations, a.converged, a.fairness_weight),
            (b.iterations, b.converged, b.fairness_weight)
        );
    }
    let exact = SweepTable { rows, ..table };
    assert_eq!(
        SweepTable::rows_from_csv(&exact.to_csv()).unwrap(),
        exact.rows
    );
    assert!(SweepTable::rows_from_csv("C,J\n1,2\n").is_err());
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let s = scenario(ScenarioKind::III, 2);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let record = run_scenario(&s, &SolverConfig::default()).unwrap();
        emit_results(&s, &record, d.path()).unwrap();
    }
    for name in [AGGREGATORS_CSV, TRACE_CSV, LINEARIZATION_CSV] {
        let a = fs::read(dirs[0].path().join(name)).unwrap();
        let b = fs::read(dirs[1].path().join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn decompose_reproduces_the_table() {
    let s = scenario(ScenarioKind::I, 1);
    let record = run_scenario(&s, &SolverConfig::default()).unwrap();
    let run = tempfile::tempdir().unwrap();
    let files = emit_results(&s, &record, run.path()).unwrap();
    assert_eq!(files.len(), 4);
    assert!(run.path().join(SUMMARY_JSON).is_file());
    let trace = fs::read_to_string(run.path().join(TRACE_CSV)).unwrap();
    assert_eq!(trace, trace_csv(&record.result));
    // The first iteration has no previous demand to compare with.
    assert!(trace.lines().nth(1).unwrap().starts_with("0,,"));

    let out = tempfile::tempdir().unwrap();
    let path = decompose(run.path(), out.path()).unwrap();
    assert_eq!(
        fs::read(path).unwrap(),
        fs::read(run.path().join(AGGREGATORS_CSV)).unwrap()
    );
    assert!(decompose(out.path(), out.path()).is_err());
}

#[test]
fn sweep_files() {
    let s = scenario(ScenarioKind::I, 1);
    let table = run_sweep(&s, &[0.0, 0.1], &SolverConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_sweep(&s, &table, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join(SWEEP_CSV)).unwrap();
    let rows = SweepTable::rows_from_csv(&text).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.converged));
    assert!(!text.contains('\r'));
}

#[test]
fn sweep_without_zero_still_measures_against_it() {
    let s = scenario(ScenarioKind::I, 1);
    let t = run_sweep(&s, &[0.2], &SolverConfig::default()).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert!(t.rows[0].pof.is_finite());
    assert!(run_sweep(&s, &[-0.1], &SolverConfig::default()).is_err());
}

#[test]
fn atomic_write_replaces_contents() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    write_atomic(&path, "a\n").unwrap();
    write_atomic(&path, "b\n").unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), "b\n");
    let names: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names, ["f.csv"]);
}

fn dlmp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dlmp"))
}

#[test]
fn cli_run_and_decompose() {
    let run = tempfile::tempdir().unwrap();
    let status = dlmp()
        .args([
            "run",
            "--scenario",
            "I",
            "--seed",
            "1",
            "--fairness",
            "0.1",
            "--out",
        ])
        .arg(run.path())
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    assert!(String::from_utf8_lossy(&status.stdout).contains("converged=true"));
    let out = tempfile::tempdir().unwrap();
    let status = dlmp()
        .args(["decompose", "--in"])
        .arg(run.path())
        .arg("--out")
        .arg(out.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        fs::read(out.path().join(AGGREGATORS_CSV)).unwrap(),
        fs::read(run.path().join(AGGREGATORS_CSV)).unwrap()
    );
}

#[test]
fn cli_scenario_file_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("scenario.json");
    fs::write(&file, scenario(ScenarioKind::II, 3).to_json()).unwrap();
    let status = dlmp()
        .args(["validate", "--scenario"])
        .arg(&file)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join(LINEARIZATION_CSV).is_file());
}

#[test]
fn cli_rejects_bad_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let out = dlmp()
        .args(["run", "--scenario", "IV", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = dlmp()
        .args(["sweep", "--scenario", "I", "--c-step", "0", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = dlmp()
        .args(["run", "--scenario", "I", "--eta", "-1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
