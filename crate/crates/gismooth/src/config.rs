//! Experiment configuration: a flat, human-editable key/value text format
//! with vector and matrix literals.
//!
//! Grammar (line oriented, `#` starts a comment, blank lines ignored):
//!
//! ```text
//! key = value
//! ```
//!
//! Values are plain decimals (`0.01`), integers (`300`), vectors
//! (`[2.75, 0.0, 2.0]`), row-major matrices (`[[1, 0], [0, 1]]`), bare words
//! (`vdp`), comma-separated word lists (`gi, ckf, ukf, ekf`), or polynomial
//! strings in the `"1.0*x1^2*x2 + -3.0*x3"` format for generic models.
//!
//! Recognized keys:
//!
//! | key | meaning |
//! |-----|---------|
//! | `model` | `vdp` or `generic` |
//! | `vdp.amplitude`, `vdp.frequency`, `vdp.delta` | forcing and sampling parameters |
//! | `state_dim`, `measurement_dim`, `f1..fN`, `h1..hM` | generic polynomial model |
//! | `q`, `r` | process / measurement noise covariances |
//! | `steps`, `runs`, `seed` | horizon, Monte Carlo count, master seed |
//! | `x0` | true initial state (index 0) |
//! | `init_mean`, `init_cov` | initial estimate belief |
//! | `strategies` | subset of `gi, ckf, ukf, ekf` |
//! | `output_dir` | report directory (default `results`) |

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::GaussianBelief;
use crate::models::{vdp_model, StateSpaceModel};
use crate::polynomial::{Polynomial, PolynomialMap};
use crate::strategies::STRATEGY_NAMES;

/// Model block of a configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    /// Van der Pol shorthand.
    Vdp {
        amplitude: f64,
        frequency: f64,
        delta: f64,
    },
    /// Arbitrary time-invariant polynomial model.
    Generic {
        dynamics: Vec<Polynomial>,
        measurement: Vec<Polynomial>,
    },
}

/// A fully parsed experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub process_noise: DMatrix<f64>,
    pub measurement_noise: DMatrix<f64>,
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
    pub x0: DVector<f64>,
    pub init_mean: DVector<f64>,
    pub init_covariance: DMatrix<f64>,
    pub strategies: Vec<String>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let entries = parse_entries(text)?;
        let get = |key: &str| -> Result<&str> {
            entries
                .get(key)
                .map(String::as_str)
                .ok_or_else(|| Error::Config(format!("missing key \"{key}\"")))
        };

        let model = match get("model")? {
            "vdp" => ModelConfig::Vdp {
                amplitude: parse_number(get("vdp.amplitude")?)?,
                frequency: parse_number(get("vdp.frequency")?)?,
                delta: parse_number(get("vdp.delta")?)?,
            },
            "generic" => {
                let state_dim = parse_count(get("state_dim")?)?;
                let measurement_dim = parse_count(get("measurement_dim")?)?;
                let dynamics = (1..=state_dim)
                    .map(|i| Polynomial::parse(state_dim, get(&format!("f{i}"))?))
                    .collect::<Result<Vec<_>>>()?;
                let measurement = (1..=measurement_dim)
                    .map(|j| Polynomial::parse(state_dim, get(&format!("h{j}"))?))
                    .collect::<Result<Vec<_>>>()?;
                ModelConfig::Generic {
                    dynamics,
                    measurement,
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "model must be \"vdp\" or \"generic\", got \"{other}\""
                )))
            }
        };

        let config = Self {
            model,
            process_noise: parse_matrix(get("q")?)?,
            measurement_noise: parse_matrix(get("r")?)?,
            steps: parse_count(get("steps")?)?,
            runs: parse_count(get("runs")?)?,
            seed: {
                let raw = get("seed")?;
                raw.parse()
                    .map_err(|_| Error::Config(format!("invalid seed \"{raw}\"")))?
            },
            x0: parse_vector(get("x0")?)?,
            init_mean: parse_vector(get("init_mean")?)?,
            init_covariance: parse_matrix(get("init_cov")?)?,
            strategies: get("strategies")?
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
            output_dir: PathBuf::from(
                entries
                    .get("output_dir")
                    .map(String::as_str)
                    .unwrap_or("results"),
            ),
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks every invariant the harness relies on, including that the model
    /// actually builds.
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        for name in &self.strategies {
            if !STRATEGY_NAMES.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "unknown strategy \"{name}\" (expected a subset of {STRATEGY_NAMES:?})"
                )));
            }
        }
        let model = self.build_model()?;
        let n = model.state_dim();
        if self.x0.len() != n {
            return Err(Error::Config(format!(
                "x0 has length {}, model state dimension is {n}",
                self.x0.len()
            )));
        }
        if self.init_mean.len() != n {
            return Err(Error::Config(format!(
                "init_mean has length {}, model state dimension is {n}",
                self.init_mean.len()
            )));
        }
        self.init_belief()?;
        Ok(())
    }

    pub fn build_model(&self) -> Result<StateSpaceModel> {
        match &self.model {
            ModelConfig::Vdp {
                amplitude,
                frequency,
                delta,
            } => vdp_model(
                *amplitude,
                *frequency,
                *delta,
                self.process_noise.clone(),
                self.measurement_noise.clone(),
            ),
            ModelConfig::Generic {
                dynamics,
                measurement,
            } => StateSpaceModel::new(
                PolynomialMap::new(dynamics.clone())?,
                PolynomialMap::new(measurement.clone())?,
                self.process_noise.clone(),
                self.measurement_noise.clone(),
            ),
        }
    }

    pub fn init_belief(&self) -> Result<GaussianBelief> {
        GaussianBelief::new(self.init_mean.clone(), self.init_covariance.clone())
    }

    /// Serializes back to the config format with full float precision; the
    /// output parses to an equal configuration.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        match &self.model {
            ModelConfig::Vdp {
                amplitude,
                frequency,
                delta,
            } => {
                out.push_str("model = vdp\n");
                let _ = writeln!(out, "vdp.amplitude = {}", format_float(*amplitude));
                let _ = writeln!(out, "vdp.frequency = {}", format_float(*frequency));
                let _ = writeln!(out, "vdp.delta = {}", format_float(*delta));
            }
            ModelConfig::Generic {
                dynamics,
                measurement,
            } => {
                out.push_str("model = generic\n");
                let _ = writeln!(out, "state_dim = {}", dynamics.len());
                let _ = writeln!(out, "measurement_dim = {}", measurement.len());
                for (i, p) in dynamics.iter().enumerate() {
                    let _ = writeln!(out, "f{} = {p}", i + 1);
                }
                for (j, p) in measurement.iter().enumerate() {
                    let _ = writeln!(out, "h{} = {p}", j + 1);
                }
            }
        }
        let _ = writeln!(out, "q = {}", format_matrix(&self.process_noise));
        let _ = writeln!(out, "r = {}", format_matrix(&self.measurement_noise));
        let _ = writeln!(out, "steps = {}", self.steps);
        let _ = writeln!(out, "runs = {}", self.runs);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "x0 = {}", format_vector(&self.x0));
        let _ = writeln!(out, "init_mean = {}", format_vector(&self.init_mean));
        let _ = writeln!(out, "init_cov = {}", format_matrix(&self.init_covariance));
        let _ = writeln!(out, "strategies = {}", self.strategies.join(", "));
        let _ = writeln!(out, "output_dir = {}", self.output_dir.display());
        out
    }
}

/// 17 significant digits: enough to round-trip any f64 exactly.
pub(crate) fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn format_vector(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|&x| format_float(x)).collect();
    format!("[{}]", parts.join(", "))
}

fn format_matrix(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let cells: Vec<String> = (0..m.ncols()).map(|j| format_float(m[(i, j)])).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn parse_entries(text: &str) -> Result<HashMap<String, String>> {
    let mut entries = HashMap::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected \"key = value\"", line_no + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if entries.insert(key.clone(), value).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key \"{key}\"",
                line_no + 1
            )));
        }
    }
    Ok(entries)
}

fn parse_number(text: &str) -> Result<f64> {
    text.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid number \"{text}\"")))
}

fn parse_count(text: &str) -> Result<usize> {
    text.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid count \"{text}\"")))
}

fn parse_vector(text: &str) -> Result<DVector<f64>> {
    let inner = strip_brackets(text)?;
    if inner.contains('[') {
        return Err(Error::Config(format!(
            "expected a vector, got nested brackets in \"{text}\""
        )));
    }
    let values = split_top_level(inner)
        .into_iter()
        .map(parse_number)
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::Config("empty vector".into()));
    }
    Ok(DVector::from_vec(values))
}

fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let inner = strip_brackets(text)?;
    let rows: Vec<DVector<f64>> = split_top_level(inner)
        .into_iter()
        .map(parse_vector)
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::Config("empty matrix".into()));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Config(format!("ragged matrix literal \"{text}\"")));
    }
    let mut m = DMatrix::zeros(rows.len(), cols);
    for (i, row) in rows.iter().enumerate() {
        for j in 0..cols {
            m[(i, j)] = row[j];
        }
    }
    Ok(m)
}

fn strip_brackets(text: &str) -> Result<&str> {
    let trimmed = text.trim();
    trimmed
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| Error::Config(format!("expected [...] literal, got \"{text}\"")))
}

/// Splits on commas that are not inside brackets.
fn split_top_level(text: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in text.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(text[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        parts.push(tail);
    }
    parts
}

#[cfg(test)]
mod tests {
    use super::*;

    const VDP_TEXT: &str = "\
# Van der Pol benchmark
model = vdp
vdp.amplitude = 100.0
vdp.frequency = 2.9059732045705586
vdp.delta = 0.01
q = [[0.001, 0, 0], [0, 0.001, 0], [0, 0, 0.001]]
r = [[0.1, 0], [0, 0.1]]
steps = 300
runs = 1000
seed = 20240901
x0 = [2.75, 0.0, 2.0]
init_mean = [0.0, -3.0, 1.0]
init_cov = [[10, 0, 0], [0, 10, 0], [0, 0, 0.5]]
strategies = gi, ckf, ukf, ekf
output_dir = results
";

    #[test]
    fn parses_the_vdp_block() {
        let cfg = ExperimentConfig::parse(VDP_TEXT).unwrap();
        match cfg.model {
            ModelConfig::Vdp {
                amplitude,
                frequency,
                delta,
            } => {
                assert_eq!(amplitude, 100.0);
                assert_eq!(frequency, 1.85 * std::f64::consts::PI / 2.0);
                assert_eq!(delta, 0.01);
            }
            _ => panic!("expected vdp model"),
        }
        assert_eq!(cfg.steps, 300);
        assert_eq!(cfg.runs, 1000);
        assert_eq!(cfg.strategies, vec!["gi", "ckf", "ukf", "ekf"]);
        assert_eq!(cfg.process_noise[(1, 1)], 1e-3);
        assert_eq!(cfg.measurement_noise[(0, 0)], 1e-1);
        assert_eq!(cfg.x0[0], 2.75);
        assert_eq!(cfg.init_mean[1], -3.0);
        assert_eq!(cfg.init_covariance[(2, 2)], 0.5);
    }

    #[test]
    fn echo_round_trips_exactly() {
        let cfg = ExperimentConfig::parse(VDP_TEXT).unwrap();
        let echoed = cfg.to_config_text();
        let again = ExperimentConfig::parse(&echoed).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn generic_model_parses_and_builds() {
        let text = "\
model = generic
state_dim = 2
measurement_dim = 1
f1 = 0.9*x1 + 0.1*x2
f2 = -0.05*x1^3 + 0.8*x2
h1 = 1.0*x1
q = [[0.01, 0], [0, 0.01]]
r = [[0.5]]
steps = 10
runs = 2
seed = 1
x0 = [1.0, 0.0]
init_mean = [0.0, 0.0]
init_cov = [[1, 0], [0, 1]]
strategies = gi, ekf
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        let model = cfg.build_model().unwrap();
        assert_eq!(model.state_dim(), 2);
        assert_eq!(model.measurement_dim(), 1);
        assert_eq!(cfg.output_dir, PathBuf::from("results"));
        let echoed = cfg.to_config_text();
        assert_eq!(ExperimentConfig::parse(&echoed).unwrap(), cfg);
    }

    #[test]
    fn rejects_invalid_configs() {
        let base = VDP_TEXT.replace("runs = 1000", "runs = 0");
        assert!(matches!(
            ExperimentConfig::parse(&base),
            Err(Error::Config(_))
        ));

        let base = VDP_TEXT.replace("strategies = gi, ckf, ukf, ekf", "strategies = gi, pf");
        assert!(ExperimentConfig::parse(&base).is_err());

        let base = VDP_TEXT.replace("x0 = [2.75, 0.0, 2.0]", "x0 = [2.75, 0.0]");
        assert!(ExperimentConfig::parse(&base).is_err());

        let base = VDP_TEXT.replace("model = vdp", "model = banana");
        assert!(ExperimentConfig::parse(&base).is_err());

        assert!(ExperimentConfig::parse("model = vdp\nmodel = vdp\n").is_err());
    }

    #[test]
    fn comments_and_whitespace_are_ignored() {
        let cfg_a = ExperimentConfig::parse(VDP_TEXT).unwrap();
        let noisy = VDP_TEXT.replace("steps = 300", "  steps   =  300   # horizon");
        let cfg_b = ExperimentConfig::parse(&noisy).unwrap();
        assert_eq!(cfg_a, cfg_b);
    }
}
