//! End-to-end checks of the command-line interface: exit codes, file
//! schemas, config handling, and the documented error channels.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_lagflow")
}

fn fresh_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("lagflow-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("launch")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .skip(1)
        .collect()
}

#[test]
fn help_prints_usage() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("exit codes"));
    assert!(text.contains("converge"));
}

#[test]
fn unknown_key_is_config_error() {
    let out = run(&["exp1", "--mystery", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("error = config"));
    assert!(err.contains("unknown key"));
}

#[test]
fn bad_value_is_config_error() {
    for args in [
        ["evolve", "--alpha", "0.3"],
        ["evolve", "--tau", "0"],
        ["exp2", "--lambda", "2"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    let out = run(&["evolve", "--config", "/nonexistent/path.cfg"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_three() {
    let dir = fresh_dir("fail");
    let out = run(&[
        "exp1",
        "--k",
        "25",
        "--t_end",
        "0.01",
        "--newton_max_iter",
        "2",
        "--tau_halvings",
        "0",
        "--outdir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("error = solver_failure"), "{err}");
    assert!(err.contains("step = "), "{err}");
}

#[test]
fn config_file_with_flag_override() {
    let dir = fresh_dir("cfgfile");
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "k = 10\ntau = 0.002 # coarse\nt_end = 0.01\n").unwrap();
    let out = run(&[
        "evolve",
        "--config",
        cfg.to_str().unwrap(),
        "--k",
        "8",
        "--lambda",
        "1",
        "--outdir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let ts = read(&dir, "timeseries.csv");
    assert!(ts.contains("# k = 8"), "flag must override the file");
    assert!(ts.contains("# tau = 2.0000000000000000e-3"));
}

#[test]
fn evolve_zero_horizon_emits_initial_only() {
    let dir = fresh_dir("zero");
    let out = run(&[
        "evolve",
        "--t_end",
        "0",
        "--k",
        "6",
        "--outdir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let rows = data_lines(&read(&dir, "timeseries.csv")).len();
    assert_eq!(rows, 1);
    let snaps = data_lines(&read(&dir, "snapshots.csv")).len();
    assert_eq!(snaps, 1);
}

#[test]
fn exp1_gap_monotone_and_below_envelope() {
    let dir = fresh_dir("exp1");
    let out = run(&[
        "exp1",
        "--k",
        "25",
        "--t_end",
        "0.1",
        "--outdir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let ts = read(&dir, "timeseries.csv");
    assert!(ts.contains("# rate_2lambda_over_1_plus_lambda_tau"));
    assert!(ts.contains("# crossover_time"));
    let mut prev = f64::INFINITY;
    let mut first_gap = None;
    for line in data_lines(&ts) {
        let f: Vec<&str> = line.split(',').collect();
        let t: f64 = f[0].parse().unwrap();
        let h_gap: f64 = f[3].parse().unwrap();
        let env = *first_gap.get_or_insert(h_gap) * (-10.0 * t).exp();
        assert!(h_gap <= prev * (1.0 + 1e-12), "H gap must decrease");
        assert!(
            h_gap <= env * (1.0 + 1e-12),
            "H gap must stay below the envelope"
        );
        prev = h_gap;
    }
}

#[test]
fn exp2_snapshot_times_and_tracking() {
    let dir = fresh_dir("exp2");
    let out = run(&[
        "exp2",
        "--k",
        "12",
        "--t_end",
        "1",
        "--outdir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let ss = read(&dir, "selfsim.csv");
    let rows = data_lines(&ss);
    assert_eq!(rows.len(), 3, "targets 0, 0.1, 1 within horizon");
    for line in &rows {
        let f: Vec<&str> = line.split(',').collect();
        let t_hat: f64 = f[1].parse().unwrap();
        let s: f64 = f[2].parse().unwrap();
        let dev: f64 = f[3].parse().unwrap();
        let r_delta: f64 = f[5].parse().unwrap();
        assert!(s >= 1.0 && t_hat >= 0.0);
        assert!(dev <= 1e-9, "solver must track the dilation, dev = {dev:e}");
        assert!(r_delta >= 1.0);
    }
    // snapshots at the same times
    assert_eq!(data_lines(&read(&dir, "snapshots.csv")).len(), 3);
}

#[test]
fn minimizer_snapshot_schema() {
    let dir = fresh_dir("minimizer");
    let out = run(&[
        "minimizer",
        "--k",
        "16",
        "--lambda",
        "3",
        "--outdir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = read(&dir, "minimizer_K16.csv");
    let header = text
        .lines()
        .find(|l| !l.starts_with('#'))
        .expect("column header");
    assert_eq!(header.split(',').count(), 18); // t plus 17 positions
    assert!(header.starts_with("t,x0,"));
    assert!(header.ends_with(",x16"));
    assert_eq!(data_lines(&text).len(), 1);
    assert!(text.contains("# h_min = "));
    assert!(text.contains("# grad_f_norm = "));
}

#[test]
fn converge_errors_shrink() {
    let dir = fresh_dir("converge");
    let out = run(&[
        "converge",
        "--ks",
        "8,16,32",
        "--outdir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = read(&dir, "convergence.csv");
    let rows = data_lines(&text);
    assert_eq!(rows.len(), 3);
    let mut prev = [f64::INFINITY; 4];
    for line in rows {
        let f: Vec<f64> = line
            .split(',')
            .skip(1)
            .map(|v| v.parse().unwrap())
            .collect();
        for (i, v) in f.iter().enumerate() {
            assert!(*v < prev[i], "column {i} must shrink with refinement");
            assert!(*v > 0.0);
        }
        prev = [f[0], f[1], f[2], f[3]];
    }
    assert!(dir.join("minimizer_K8.csv").exists());
    assert!(dir.join("minimizer_K32.csv").exists());
}

#[test]
fn barenblatt_initial_condition() {
    // confined: starting at the profile quantiles keeps the entropy gap small
    let dir = fresh_dir("barenblatt");
    let out = run(&[
        "evolve",
        "--initial",
        "barenblatt",
        "--lambda",
        "5",
        "--k",
        "20",
        "--t_end",
        "0.02",
        "--outdir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let gaps: Vec<f64> = data_lines(&read(&dir, "timeseries.csv"))
        .iter()
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert!(gaps[0] > 0.0 && gaps[0] < 1e-2, "near-stationary start");
    assert!(gaps.last().unwrap() <= &gaps[0]);

    // unconfined: seeded from the lambda = 1 profile, the support spreads
    let dir2 = fresh_dir("barenblatt0");
    let out = run(&[
        "evolve",
        "--initial",
        "barenblatt",
        "--lambda",
        "0",
        "--k",
        "20",
        "--t_end",
        "0.02",
        "--grid",
        "graded:0.5",
        "--outdir",
        dir2.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let snaps = read(&dir2, "snapshots.csv");
    let rows = data_lines(&snaps);
    let first: Vec<f64> = rows[0].split(',').map(|v| v.parse().unwrap()).collect();
    let last: Vec<f64> = rows[rows.len() - 1]
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(last[1] < first[1] && last[21] > first[21], "support spreads");
}

#[test]
fn tabulated_initial_and_grid_file() {
    let dir = fresh_dir("files");
    // triangle density of unit mass on [-1, 1]
    let ic = dir.join("triangle.csv");
    std::fs::write(&ic, "-1, 0\n0, 1\n1, 0\n").unwrap();
    // mildly non-uniform mass nodes
    let grid = dir.join("grid.txt");
    let mut nodes = String::new();
    for i in 0..=8 {
        let s = i as f64 / 8.0;
        nodes.push_str(&format!("{}\n", s * s * (3.0 - 2.0 * s)));
    }
    std::fs::write(&grid, nodes).unwrap();
    let out = run(&[
        "evolve",
        "--initial",
        &format!("file:{}", ic.display()),
        "--grid",
        &format!("nonuniform:{}", grid.display()),
        "--lambda",
        "2",
        "--t_end",
        "0.02",
        "--outdir",
        dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let ts = read(&dir, "timeseries.csv");
    // information dissipates along the run
    let f_vals: Vec<f64> = data_lines(&ts)
        .iter()
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(f_vals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));

    // a density file with the wrong mass is rejected as configuration error
    let bad = dir.join("bad.csv");
    std::fs::write(&bad, "-1, 0\n0, 3\n1, 0\n").unwrap();
    let out = run(&[
        "evolve",
        "--initial",
        &format!("file:{}", bad.display()),
        "--outdir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
