//! End-to-end tests of the command-line surface: exit codes, determinism of
//! the written artifacts, and flag overrides.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_gismooth")
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("binary launches")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gismooth-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

/// A small config for fast end-to-end runs.
fn small_config(dir: &Path) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let path = dir.join("small.cfg");
    fs::write(
        &path,
        "\
model = vdp
vdp.amplitude = 100.0
vdp.frequency = 2.9059732045705586
vdp.delta = 0.01
q = [[0.001, 0, 0], [0, 0.001, 0], [0, 0, 0.001]]
r = [[0.1, 0], [0, 0.1]]
steps = 12
runs = 3
seed = 7
x0 = [2.75, 0.0, 2.0]
init_mean = [0.0, -3.0, 1.0]
init_cov = [[10, 0, 0], [0, 10, 0], [0, 0, 0.5]]
strategies = gi, ckf, ukf, ekf
output_dir = results
",
    )
    .unwrap();
    path
}

#[test]
fn validate_accepts_the_bundled_configs() {
    for name in ["vdp_benchmark.cfg", "vdp_benchmark_scaled.cfg"] {
        let out = run(&["validate", "--config", repo_config(name).to_str().unwrap()]);
        assert!(out.status.success(), "{name}: {out:?}");
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert!(stdout.contains("model = vdp"));
        assert!(stdout.contains("steps = 300"));
    }
}

#[test]
fn validate_missing_file_exits_two() {
    let out = run(&["validate", "--config", "/nonexistent/nope.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("error"));
}

#[test]
fn unknown_flags_exit_two() {
    let out = run(&["run", "--nonsense"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_exits_nonzero_with_message() {
    let dir = tmp_dir("badcfg");
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.cfg");
    fs::write(&path, "model = vdp\n").unwrap();
    let out = run(&["validate", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("missing key"), "{stderr}");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn run_writes_reports_and_is_deterministic() {
    let dir = tmp_dir("determinism");
    let config = small_config(&dir);
    let out_a = dir.join("a");
    let out_b = dir.join("b");

    // The second run caps the worker pool; the artifacts must not change.
    for (out_dir, threads) in [(&out_a, None), (&out_b, Some("1"))] {
        let mut cmd = Command::new(binary());
        cmd.args([
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        if let Some(threads) = threads {
            cmd.env("GISMOOTH_THREADS", threads);
        }
        let out = cmd.output().expect("binary launches");
        assert!(out.status.success(), "{out:?}");
    }

    // The RMSE artifacts are byte-identical across executions.
    for file in ["rmse_filter.csv", "rmse_smoother.csv"] {
        let a = fs::read(out_a.join(file)).unwrap();
        let b = fs::read(out_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} must be byte-identical");
    }

    // config_echo reflects the effective configuration, so the overridden
    // output directory is the only difference between the two runs.
    let drop_out_dir = |text: String| -> Vec<String> {
        text.lines()
            .filter(|l| !l.starts_with("output_dir"))
            .map(str::to_string)
            .collect()
    };
    let echo_a = drop_out_dir(fs::read_to_string(out_a.join("config_echo")).unwrap());
    let echo_b = drop_out_dir(fs::read_to_string(out_b.join("config_echo")).unwrap());
    assert_eq!(echo_a, echo_b);

    // summary.csv is identical except the wall-clock ret column.
    let strip_ret = |text: &str| -> Vec<String> {
        text.lines()
            .map(|line| {
                let cells: Vec<&str> = line.split(',').collect();
                let mut kept = cells.clone();
                if cells.len() >= 2 && cells[cells.len() - 2] != "ret" {
                    kept.remove(cells.len() - 2);
                }
                kept.join(",")
            })
            .collect()
    };
    let a = strip_ret(&fs::read_to_string(out_a.join("summary.csv")).unwrap());
    let b = strip_ret(&fs::read_to_string(out_b.join("summary.csv")).unwrap());
    assert_eq!(a, b);

    // Header shape of the per-step files.
    let head = fs::read_to_string(out_a.join("rmse_filter.csv")).unwrap();
    assert!(head.starts_with("step,method,state_index,rmse\n"));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn strategy_and_run_overrides_apply() {
    let dir = tmp_dir("overrides");
    let config = small_config(&dir);
    let out_dir = dir.join("out");
    let out = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--runs",
        "2",
        "--seed",
        "99",
        "--strategies",
        "gi,ekf",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");

    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.contains("gi,filter"));
    assert!(summary.contains("ekf,smoother"));
    assert!(!summary.contains("ckf"));
    assert!(!summary.contains("ukf"));

    let echo = fs::read_to_string(out_dir.join("config_echo")).unwrap();
    assert!(echo.contains("runs = 2"));
    assert!(echo.contains("seed = 99"));
    assert!(echo.contains("strategies = gi, ekf"));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn oracle_subcommand_reports_max_error() {
    let out = run(&["oracle", "--dim", "2", "--degree", "5", "--cases", "40"]);
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("max relative error"), "{stdout}");
}

#[test]
fn oracle_reference_invocation_passes_at_tolerance() {
    let out = run(&["oracle", "--dim", "3", "--degree", "6", "--cases", "200"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("200 cases"), "{stdout}");
}
