//! CSV materialization of an [`RmseReport`].
//!
//! Four artifacts per experiment, all in one directory:
//!
//! - `rmse_filter.csv` — columns `step,method,state_index,rmse`
//! - `rmse_smoother.csv` — same schema, smoothed estimates
//! - `summary.csv` — columns `method,kind,state1..stateN,ret,diverged`
//!   with `kind` in `{filter, smoother}`
//! - `config_echo` — the effective configuration, re-parseable
//!
//! Floats are written with 17 significant digits so parsing a report back
//! recovers bit-identical values. Methods whose every run diverged appear in
//! `summary.csv` with `nan` statistics and their divergence count, and are
//! omitted from the per-step files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{format_float, ExperimentConfig};
use crate::error::{Error, Result};
use crate::experiment::RmseReport;

/// Writes all report files into `directory` (created if needed) and returns
/// the paths written.
pub fn write_reports(
    report: &RmseReport,
    config: &ExperimentConfig,
    directory: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(directory).map_err(|e| Error::io(directory.display().to_string(), e))?;

    let written = vec![
        write_file(
            directory.join("rmse_filter.csv"),
            &per_step_csv(report, Kind::Filter),
        )?,
        write_file(
            directory.join("rmse_smoother.csv"),
            &per_step_csv(report, Kind::Smoother),
        )?,
        write_file(directory.join("summary.csv"), &summary_csv(report))?,
        write_file(directory.join("config_echo"), &config.to_config_text())?,
    ];
    Ok(written)
}

#[derive(Clone, Copy)]
enum Kind {
    Filter,
    Smoother,
}

impl Kind {
    fn label(self) -> &'static str {
        match self {
            Kind::Filter => "filter",
            Kind::Smoother => "smoother",
        }
    }
}

fn per_step_csv(report: &RmseReport, kind: Kind) -> String {
    let mut out = String::from("step,method,state_index,rmse\n");
    for method in &report.methods {
        let Some(stats) = &method.stats else {
            continue;
        };
        let rmse = match kind {
            Kind::Filter => &stats.filter_rmse,
            Kind::Smoother => &stats.smoother_rmse,
        };
        for (step_index, row) in rmse.iter().enumerate() {
            for (state_index, value) in row.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    step_index + 1,
                    method.name,
                    state_index + 1,
                    format_float(*value)
                ));
            }
        }
    }
    out
}

fn summary_csv(report: &RmseReport) -> String {
    let mut header = String::from("method,kind");
    for i in 1..=report.state_dim {
        header.push_str(&format!(",state{i}"));
    }
    header.push_str(",ret,diverged\n");

    let mut out = header;
    for method in &report.methods {
        for kind in [Kind::Filter, Kind::Smoother] {
            out.push_str(&method.name);
            out.push(',');
            out.push_str(kind.label());
            match &method.stats {
                Some(stats) => {
                    let (avg, ret) = match kind {
                        Kind::Filter => (&stats.filter_avg, stats.filter_ret),
                        Kind::Smoother => (&stats.smoother_avg, stats.smoother_ret),
                    };
                    for value in avg {
                        out.push(',');
                        out.push_str(&format_float(*value));
                    }
                    out.push(',');
                    out.push_str(&format_float(ret));
                }
                None => {
                    for _ in 0..report.state_dim + 1 {
                        out.push_str(",nan");
                    }
                }
            }
            out.push_str(&format!(",{}\n", method.diverged_runs));
        }
    }
    out
}

fn write_file(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{MethodReport, MethodStats};

    fn tiny_report() -> RmseReport {
        RmseReport {
            steps: 2,
            state_dim: 2,
            runs: 3,
            methods: vec![
                MethodReport {
                    name: "gi".into(),
                    diverged_runs: 0,
                    stats: Some(MethodStats {
                        filter_rmse: vec![vec![0.125, 0.25], vec![0.0625, 0.3]],
                        smoother_rmse: vec![vec![0.1, 0.2], vec![0.0625, 0.3]],
                        filter_avg: vec![0.09375, 0.275],
                        smoother_avg: vec![0.08125, 0.25],
                        filter_seconds: 2.0,
                        smoother_seconds: 2.5,
                        filter_ret: 5.0,
                        smoother_ret: 6.25,
                    }),
                },
                MethodReport {
                    name: "ekf".into(),
                    diverged_runs: 3,
                    stats: None,
                },
            ],
        }
    }

    #[test]
    fn empty_method_list_yields_header_only_files() {
        let report = RmseReport {
            steps: 5,
            state_dim: 3,
            runs: 2,
            methods: vec![],
        };
        assert_eq!(
            per_step_csv(&report, Kind::Filter),
            "step,method,state_index,rmse\n"
        );
        assert_eq!(
            summary_csv(&report),
            "method,kind,state1,state2,state3,ret,diverged\n"
        );
    }

    #[test]
    fn per_step_csv_has_one_row_per_cell() {
        let report = tiny_report();
        let csv = per_step_csv(&report, Kind::Filter);
        let lines: Vec<&str> = csv.lines().collect();
        // Header + 2 steps x 2 states for the one surviving method.
        assert_eq!(lines.len(), 1 + 4);
        assert_eq!(lines[0], "step,method,state_index,rmse");
        assert!(lines[1].starts_with("1,gi,1,"));
        assert!(lines[4].starts_with("2,gi,2,"));
    }

    #[test]
    fn summary_marks_fully_diverged_methods() {
        let report = tiny_report();
        let csv = summary_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "method,kind,state1,state2,ret,diverged");
        assert_eq!(lines.len(), 1 + 4);
        let ekf_filter = lines.iter().find(|l| l.starts_with("ekf,filter")).unwrap();
        assert!(ekf_filter.ends_with("nan,nan,nan,3"));
    }

    #[test]
    fn float_fields_round_trip_bit_exactly() {
        let report = tiny_report();
        let csv = per_step_csv(&report, Kind::Smoother);
        let mut parsed = Vec::new();
        for line in csv.lines().skip(1) {
            let value: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
            parsed.push(value);
        }
        let stats = report.methods[0].stats.as_ref().unwrap();
        let expected: Vec<f64> = stats.smoother_rmse.iter().flatten().copied().collect();
        assert_eq!(parsed, expected);

        // An awkward irrational value survives the round trip too.
        let x = std::f64::consts::PI * 1e-3;
        let reparsed: f64 = format_float(x).parse().unwrap();
        assert_eq!(x.to_bits(), reparsed.to_bits());
    }

    #[test]
    fn write_reports_creates_all_four_files() {
        let dir = std::env::temp_dir().join(format!("gismooth-report-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let config = crate::config::ExperimentConfig::parse(
            "\
model = vdp
vdp.amplitude = 100.0
vdp.frequency = 2.9059732045705586
vdp.delta = 0.01
q = [[0.001, 0, 0], [0, 0.001, 0], [0, 0, 0.001]]
r = [[0.1, 0], [0, 0.1]]
steps = 2
runs = 3
seed = 1
x0 = [2.75, 0.0, 2.0]
init_mean = [0.0, -3.0, 1.0]
init_cov = [[10, 0, 0], [0, 10, 0], [0, 0, 0.5]]
strategies = gi, ekf
",
        )
        .unwrap();
        // The tiny report has state_dim 2; that only affects headers.
        let written = write_reports(&tiny_report(), &config, &dir).unwrap();
        assert_eq!(written.len(), 4);
        for path in &written {
            assert!(path.exists(), "{path:?}");
        }
        let echoed = fs::read_to_string(dir.join("config_echo")).unwrap();
        let again = crate::config::ExperimentConfig::parse(&echoed).unwrap();
        assert_eq!(again, config);
        let _ = fs::remove_dir_all(&dir);
    }
}
