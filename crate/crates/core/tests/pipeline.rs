use std::fs;
use std::path::Path;
use std::process::Command as Process;

use crn_recovery::driver::{
    cmd_dump_operators, cmd_mismatch, cmd_recover, cmd_simulate, cmd_sweep, Command, ConfigOverrides, FormulationChoice,
    RunConfig, SweepSpec,
};
use crn_recovery::graph::true_edge_set;
use crn_recovery::presets;
use crn_recovery::spline::{build_operators, TimeGrid};
use crn_recovery::CrnModel;

fn config(command: Command, dir: &Path, o: ConfigOverrides) -> RunConfig {
    let o = ConfigOverrides { output_dir: Some(dir.to_path_buf()), ..o };
    RunConfig::resolve(command, o, None).unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn simulate_writes_all_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(Command::Simulate, dir.path(), ConfigOverrides { n_points: Some(20), ..Default::default() });
    let out = cmd_simulate(&cfg).unwrap();
    let rows = read_csv(&out.trajectory);
    assert_eq!(rows[0], ["t", "exp", "A", "P", "cat", "catA", "noisy"]);
    assert_eq!(rows.len(), 1 + 2 * 6 * 20);
    // without noise the two halves agree value for value
    let half = 6 * 20;
    for k in 1..=half {
        assert_eq!(rows[k][..6], rows[k + half][..6]);
    }
    let experiments: std::collections::BTreeSet<&str> = rows[1..].iter().map(|r| r[1].as_str()).collect();
    assert_eq!(experiments.len(), 6);
    assert!(dir.path().join("config.json").exists());
}

#[test]
fn simulate_is_reproducible() {
    let run = |seed| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(
            Command::Simulate,
            dir.path(),
            ConfigOverrides { seed: Some(seed), noise_sd: Some(1e-2), n_points: Some(15), ..Default::default() },
        );
        let out = cmd_simulate(&cfg).unwrap();
        fs::read(out.trajectory).unwrap()
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
}

#[test]
fn recover_m1_thirty_points_gives_true_graph() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        Command::Recover,
        dir.path(),
        ConfigOverrides {
            n_points: Some(30),
            seed: Some(7),
            formulation: Some(FormulationChoice::Integral),
            ..Default::default()
        },
    );
    let summary = cmd_recover(&cfg).unwrap();
    assert_eq!(summary.len(), 1);
    assert_eq!(summary[0].edges, 4);
    let dot = fs::read_to_string(dir.path().join("graph_integral.dot")).unwrap();
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches("->").count(), 4);
    for name in ["recovery_integral.json", "fit_integral.json", "model.json", "summary.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    // the sampled model written next to the results reloads to the same network
    let truth = CrnModel::from_file(&dir.path().join("model.json")).unwrap();
    assert_eq!(true_edge_set(&truth).len(), 4);
}

#[test]
fn model_file_runs_like_a_preset() {
    let dir = tempfile::tempdir().unwrap();
    let model = presets::m1().with_rates(&[0.5, 0.2, 0.7, 0.1]).unwrap();
    let path = dir.path().join("m1.json");
    fs::write(&path, serde_json::to_string_pretty(&model.to_model_file()).unwrap()).unwrap();
    let reloaded = CrnModel::from_file(&path).unwrap();
    assert!((reloaded.coefficients() - model.coefficients()).amax() == 0.0);

    let out = dir.path().join("out");
    let cfg = config(
        Command::Recover,
        &out,
        ConfigOverrides { model: Some(path.display().to_string()), n_points: Some(60), ..Default::default() },
    );
    let summary = cmd_recover(&cfg).unwrap();
    assert!(summary.iter().all(|s| s.kirchhoff_mismatch.is_some()));
}

#[test]
fn large_threshold_is_an_empty_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(Command::Recover, dir.path(), ConfigOverrides { tau: Some(1e6), ..Default::default() });
    let err = cmd_recover(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 4);
    // the regressions are still written before the failure
    assert!(dir.path().join("recovery_integral.json").exists());
}

#[test]
fn config_file_sits_between_cli_and_preset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, r#"{"model": "vdv", "n_points": 40, "tau": 0.5}"#).unwrap();
    let file = ConfigOverrides::from_file(&path).unwrap();
    let cli = ConfigOverrides { tau: Some(1e-3), ..Default::default() };
    let cfg = RunConfig::resolve(Command::Recover, cli, Some(file)).unwrap();
    assert_eq!(cfg.model, "vdv");
    assert_eq!(cfg.w, 4);
    assert_eq!(cfg.n_points, 40);
    assert_eq!(cfg.tau, 1e-3);
}

#[test]
fn dumped_operators_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(Command::DumpOperators, dir.path(), ConfigOverrides { n_points: Some(12), ..Default::default() });
    cmd_dump_operators(&cfg).unwrap();
    let ops = build_operators(&TimeGrid::new(0.0, 20.0, 12).unwrap()).unwrap();
    for (name, m) in [("L.csv", &ops.l), ("J.csv", &ops.j)] {
        let rows = read_csv(&dir.path().join(name));
        assert_eq!(rows.len(), 12);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), 12);
            for (k, v) in row.iter().enumerate() {
                assert_eq!(v.parse::<f64>().unwrap(), m[(i, k)]);
            }
        }
    }
}

#[test]
fn single_trial_single_size_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        Command::Sweep,
        dir.path(),
        ConfigOverrides { trials: Some(1), sweep: Some(SweepSpec { start: 60, stop: 60, step: 10 }), ..Default::default() },
    );
    let out = cmd_sweep(&cfg).unwrap();
    assert_eq!(out.failures, 0);
    let rows = read_csv(&dir.path().join("sweep.csv"));
    assert_eq!(rows[0], ["n", "method", "gmean_error", "slope_window"]);
    assert_eq!(rows.len(), 1 + 4);
    assert!(rows[1..].iter().all(|r| r[0] == "60" && r[3].is_empty()));
}

#[test]
fn single_trial_mismatch_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        Command::Mismatch,
        dir.path(),
        ConfigOverrides { trials: Some(1), resolutions: Some(vec![40]), ..Default::default() },
    );
    cmd_mismatch(&cfg).unwrap();
    let rows = read_csv(&dir.path().join("histogram.csv"));
    assert_eq!(rows[0], ["n", "method", "mismatch_bin", "count"]);
    for method in ["dif_ls", "dif_stls", "int_ls", "int_stls"] {
        let total: usize = rows[1..].iter().filter(|r| r[1] == method).map(|r| r[3].parse::<usize>().unwrap()).sum();
        assert_eq!(total, 1, "{method}");
    }
    let kirchhoff = read_csv(&dir.path().join("kirchhoff.csv"));
    assert!(kirchhoff[1..].iter().all(|r| r[1].ends_with("stls")));
}

#[test]
fn bounds_refuse_gaussian_noise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        Command::Sweep,
        dir.path(),
        ConfigOverrides { noise_sd: Some(1e-3), with_bounds: Some(true), trials: Some(1), ..Default::default() },
    );
    assert_eq!(cmd_sweep(&cfg).unwrap_err().exit_code(), 2);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_crn-recovery");
    let dir = tempfile::tempdir().unwrap();
    let status = |args: &[&str]| {
        Process::new(bin).args(args).arg("-o").arg(dir.path()).output().unwrap().status.code()
    };
    assert_eq!(status(&["dump-operators", "--n", "8"]), Some(0));
    assert_eq!(status(&["recover", "--model", "no-such-model"]), Some(2));
    assert_eq!(status(&["sweep", "--sweep", "100:50:10"]), Some(2));
    assert_eq!(status(&["recover", "--n", "20", "--tau", "1e9"]), Some(4));
    assert_eq!(status(&["simulate", "--n", "10", "--rel-tol", "0.5"]), Some(2));
}
