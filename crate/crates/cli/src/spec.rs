//! JSON sweep description and its validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mcrx::arrival::CountModel;
use mcrx::ber::Scenario;
use mcrx::channel::{Dimension, LinkConfig};

use crate::table::Format;
use crate::{CliError, CliResult};

/// Algorithm selection as written in a spec or on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmChoice {
    Alg1,
    Alg2,
    Grid,
    /// Gradient descent for discrete models, implicit filtering for the
    /// Gaussian one, plus the grid oracle for every model.
    All,
}

/// Which table a spec produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    BerCurve,
    Optimize,
    UnknownLocation,
    Isi,
    Particle,
}

impl Command {
    pub fn default_parameter(self) -> &'static str {
        match self {
            Command::BerCurve | Command::Particle => "t_r_over_t_b",
            Command::Optimize => "d_i_over_d",
            Command::UnknownLocation => "a_over_b",
            Command::Isi => "symbol_interval",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: LinkConfig,
    /// Defaults to the natural parameter of the command.
    #[serde(default)]
    pub parameter: Option<String>,
    pub values: Vec<f64>,
    #[serde(default = "default_models")]
    pub models: Vec<CountModel>,
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<AlgorithmChoice>,
    /// Monte Carlo trials per point; absent or 0 disables simulation.
    #[serde(default)]
    pub trials: Option<u64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
    /// Extra analytic ISI columns in optimization tables.
    #[serde(default)]
    pub isi_memories: Vec<usize>,
    #[serde(default = "default_detector_memories")]
    pub detector_memories: Vec<usize>,
    #[serde(default = "default_sequences")]
    pub sequences: u64,
    #[serde(default = "default_sequence_length")]
    pub sequence_length: usize,
    #[serde(default = "default_particles")]
    pub particles: u64,
    #[serde(default = "default_time_step")]
    pub time_step: f64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub format: Format,
}

fn default_models() -> Vec<CountModel> {
    vec![CountModel::Binomial]
}
fn default_algorithms() -> Vec<AlgorithmChoice> {
    vec![AlgorithmChoice::All]
}
fn default_seed() -> u64 {
    1
}
fn default_grid() -> usize {
    2000
}
fn default_nodes() -> usize {
    mcrx::optimizer::DEFAULT_QUADRATURE_NODES
}
fn default_detector_memories() -> Vec<usize> {
    vec![2, 7]
}
fn default_sequences() -> u64 {
    1000
}
fn default_sequence_length() -> usize {
    100
}
fn default_particles() -> u64 {
    100_000
}
fn default_time_step() -> f64 {
    1e-5
}
fn default_format() -> Format {
    Format::Csv
}

/// One resolved sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub value: f64,
    pub config: LinkConfig,
    /// T_r/T_b for curve sweeps, sample time over T_b for particle runs.
    pub time_ratio: Option<f64>,
}

const CONFIG_FIELDS: &[&str] = &[
    "diffusion_coeff",
    "distance_tx",
    "distance_ix",
    "receiver_radius",
    "symbol_interval",
    "low_count",
    "high_count",
    "isi_memory",
];
const RATIOS: &[&str] = &["d_i_over_d", "t_r_over_t_b", "a_over_b"];

fn cfg_err(path: impl Into<String>, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {msg}", path.into()))
}

fn lift(path: &str, e: mcrx::Error) -> CliError {
    match e {
        mcrx::Error::Config { field, msg } => cfg_err(format!("{path}.{field}"), msg),
        other => cfg_err(path, other),
    }
}

fn as_count(v: f64, field: &str) -> Result<u32, String> {
    if v.fract() != 0.0 || !(0.0..=u32::MAX as f64).contains(&v) {
        return Err(format!("{field} needs a nonnegative integer, got {v}"));
    }
    Ok(v as u32)
}

impl SweepSpec {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("spec: {e}")))
    }

    pub fn from_path(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Spec over the given base with every other field at its default.
    pub fn new(base: LinkConfig, values: Vec<f64>) -> Self {
        SweepSpec {
            base,
            parameter: None,
            values,
            models: default_models(),
            scenario: None,
            algorithms: default_algorithms(),
            trials: None,
            seed: default_seed(),
            grid: default_grid(),
            quadrature_nodes: default_nodes(),
            isi_memories: Vec::new(),
            detector_memories: default_detector_memories(),
            sequences: default_sequences(),
            sequence_length: default_sequence_length(),
            particles: default_particles(),
            time_step: default_time_step(),
            out: None,
            format: default_format(),
        }
    }

    pub fn parameter_for(&self, command: Command) -> &str {
        self.parameter.as_deref().unwrap_or(command.default_parameter())
    }

    pub fn trials(&self) -> u64 {
        self.trials.unwrap_or(0)
    }

    fn apply(&self, param: &str, value: f64) -> Result<(LinkConfig, Option<f64>), String> {
        let mut c = self.base.clone();
        let mut ratio = None;
        match param {
            "diffusion_coeff" => c.diffusion_coeff = value,
            "distance_tx" => c.distance_tx = value,
            "distance_ix" => c.distance_ix = value,
            "receiver_radius" => c.receiver_radius = value,
            "symbol_interval" => c.symbol_interval = value,
            "low_count" => c.low_count = as_count(value, param)?,
            "high_count" => c.high_count = as_count(value, param)?,
            "isi_memory" => c.isi_memory = as_count(value, param)? as usize,
            "d_i_over_d" => {
                if !(value.is_finite() && value > 0.0) {
                    return Err(format!("d_i_over_d must be > 0, got {value}"));
                }
                c.distance_ix = value * c.distance_tx;
            }
            "t_r_over_t_b" => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(format!("t_r_over_t_b must lie in [0, 1], got {value}"));
                }
                ratio = Some(value);
            }
            "a_over_b" => {
                let b = match c.location_bounds {
                    Some((_, b)) => b,
                    None => return Err("a_over_b needs base.location_bounds to fix b".into()),
                };
                if !(value > 0.0 && value <= 1.0) {
                    return Err(format!("a_over_b must lie in (0, 1], got {value}"));
                }
                if value == 1.0 {
                    // Degenerate uniform law: a point interferer at b.
                    c.interference_location_known = true;
                    c.distance_ix = b;
                } else {
                    c.interference_location_known = false;
                    c.location_bounds = Some((value * b, b));
                }
            }
            other => return Err(format!("unknown parameter `{other}`")),
        }
        Ok((c, ratio))
    }

    /// Validates the spec for `command` and resolves every sweep point.
    pub fn points(&self, command: Command) -> CliResult<Vec<Point>> {
        let param = self.parameter_for(command);
        if !CONFIG_FIELDS.contains(&param) && !RATIOS.contains(&param) {
            return Err(cfg_err(
                "parameter",
                format!(
                    "`{param}` is not a recognized field ({}) or ratio ({})",
                    CONFIG_FIELDS.join(", "),
                    RATIOS.join(", ")
                ),
            ));
        }
        let time_sweep = matches!(command, Command::BerCurve | Command::Particle);
        if time_sweep != (param == "t_r_over_t_b") {
            return Err(cfg_err(
                "parameter",
                format!("`{param}` cannot drive {command:?}; expected `{}`", command.default_parameter()),
            ));
        }
        if command == Command::UnknownLocation && param != "a_over_b" {
            return Err(cfg_err("parameter", "unknown-location sweeps a_over_b"));
        }
        if command == Command::Isi && param != "symbol_interval" {
            return Err(cfg_err("parameter", "isi sweeps symbol_interval"));
        }
        if self.values.is_empty() {
            return Err(cfg_err("values", "must not be empty"));
        }
        if self.models.is_empty() {
            return Err(cfg_err("models", "must not be empty"));
        }
        if self.algorithms.is_empty() {
            return Err(cfg_err("algorithms", "must not be empty"));
        }
        if self.grid < 2 {
            return Err(cfg_err("grid", format!("needs at least 2 points, got {}", self.grid)));
        }
        if self.quadrature_nodes == 0 {
            return Err(cfg_err("quadrature_nodes", "must be >= 1"));
        }
        for (i, &m) in self.isi_memories.iter().enumerate() {
            if !(1..=mcrx::arrival::ISI_MEMORY_CAP).contains(&m) {
                return Err(cfg_err(
                    format!("isi_memories[{i}]"),
                    format!("must lie in 1..={}", mcrx::arrival::ISI_MEMORY_CAP),
                ));
            }
        }
        if command == Command::Isi {
            if self.detector_memories.is_empty() {
                return Err(cfg_err("detector_memories", "must not be empty"));
            }
            for (i, &m) in self.detector_memories.iter().enumerate() {
                if !(1..=mcrx::arrival::ISI_MEMORY_CAP).contains(&m) {
                    return Err(cfg_err(
                        format!("detector_memories[{i}]"),
                        format!("must lie in 1..={}", mcrx::arrival::ISI_MEMORY_CAP),
                    ));
                }
            }
            if self.sequences == 0 || self.sequence_length == 0 {
                return Err(cfg_err("sequences", "sequences and sequence_length must be >= 1"));
            }
            if self.models.contains(&CountModel::Gaussian) {
                return Err(cfg_err("models", "isi detection uses discrete models only"));
            }
        }
        if command == Command::Particle {
            if self.particles == 0 {
                return Err(cfg_err("particles", "must be >= 1"));
            }
            if !(self.time_step.is_finite() && self.time_step > 0.0) {
                return Err(cfg_err("time_step", format!("must be > 0, got {}", self.time_step)));
            }
        }
        if matches!(command, Command::Optimize | Command::UnknownLocation | Command::Isi)
            && self.models.contains(&CountModel::Gaussian)
            && self.algorithms.contains(&AlgorithmChoice::Alg1)
        {
            return Err(cfg_err("algorithms", "alg1 needs a discrete model; use alg2 for gaussian"));
        }
        if command == Command::UnknownLocation && self.base.dimension != Dimension::One {
            return Err(cfg_err("base.dimension", "unknown-location sweeps are 1D only"));
        }
        // The base itself may miss sweep-driven fields, so it is checked
        // only through the resolved points.
        let mut points = Vec::with_capacity(self.values.len());
        for (i, &v) in self.values.iter().enumerate() {
            let path = format!("values[{i}]");
            let (config, time_ratio) = self.apply(param, v).map_err(|m| cfg_err(&path, m))?;
            config.validate().map_err(|e| lift(&format!("{path} -> base"), e))?;
            if let Some(s) = self.scenario {
                check_scenario(s, &config).map_err(|m| cfg_err("scenario", format!("{path}: {m}")))?;
            }
            points.push(Point {
                value: v,
                config,
                time_ratio,
            });
        }
        Ok(points)
    }
}

fn check_scenario(s: Scenario, c: &LinkConfig) -> Result<(), String> {
    match s {
        Scenario::Known if !c.interference_location_known => {
            Err("known scenario needs interference_location_known = true".into())
        }
        Scenario::UnknownLocation if c.interference_location_known => {
            Err("unknown-location scenario needs interference_location_known = false".into())
        }
        Scenario::Isi if c.isi_memory < 2 => Err("isi scenario needs isi_memory >= 2".into()),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json() -> String {
        serde_json::to_string(&LinkConfig::table1_1d()).unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let s = SweepSpec::from_json(&format!(r#"{{"base": {}, "values": [2, 4]}}"#, base_json())).unwrap();
        assert_eq!(s.models, vec![CountModel::Binomial]);
        assert_eq!(s.grid, 2000);
        let pts = s.points(Command::Optimize).unwrap();
        assert_eq!(pts.len(), 2);
        assert!((pts[1].config.distance_ix - 6e-5).abs() < 1e-18);
    }

    #[test]
    fn unknown_fields_rejected() {
        let e = SweepSpec::from_json(&format!(r#"{{"base": {}, "values": [1], "valuez": 2}}"#, base_json()))
            .unwrap_err();
        assert!(e.to_string().contains("valuez"));
    }

    #[test]
    fn invariant_violations_name_the_field() {
        let mut s = SweepSpec::new(LinkConfig::table1_3d(), vec![1.0, 0.05]);
        let e = s.points(Command::Optimize).unwrap_err().to_string();
        assert!(e.contains("values[1]") && e.contains("receiver_radius"), "{e}");

        s.parameter = Some("high_count".into());
        s.values = vec![3000.0, 500.0];
        let e = s.points(Command::Optimize).unwrap_err().to_string();
        assert!(e.contains("values[1]") && e.contains("high_count"), "{e}");

        s.values = vec![2500.5];
        assert!(s.points(Command::Optimize).unwrap_err().to_string().contains("integer"));

        s.parameter = Some("distance_tx".into());
        s.values = vec![-1.0];
        assert!(s.points(Command::Optimize).unwrap_err().to_string().contains("distance_tx"));

        s.parameter = Some("bogus".into());
        assert!(s.points(Command::Optimize).unwrap_err().to_string().starts_with("config error: parameter"));

        s.parameter = None;
        s.values.clear();
        assert!(s.points(Command::Optimize).unwrap_err().to_string().contains("values"));
    }

    #[test]
    fn command_parameter_pairing() {
        let s = SweepSpec::new(LinkConfig::table1_1d(), vec![0.5]);
        assert!(s.points(Command::BerCurve).is_ok());
        let mut t = s.clone();
        t.values = vec![1.5];
        assert!(t.points(Command::BerCurve).unwrap_err().to_string().contains("values[0]"));
        let mut u = s.clone();
        u.parameter = Some("d_i_over_d".into());
        assert!(u.points(Command::BerCurve).is_err());
        let mut g = s;
        g.models = vec![CountModel::Gaussian];
        g.algorithms = vec![AlgorithmChoice::Alg1];
        g.parameter = None;
        g.values = vec![2.0];
        assert!(g.points(Command::Optimize).unwrap_err().to_string().contains("algorithms"));
    }

    #[test]
    fn a_over_b_resolution() {
        let mut base = LinkConfig::table1_1d();
        base.location_bounds = Some((3e-5, 1.2e-4));
        let s = SweepSpec::new(base, vec![0.25, 1.0]);
        let pts = s.points(Command::UnknownLocation).unwrap();
        assert!(!pts[0].config.interference_location_known);
        assert_eq!(pts[0].config.location_bounds, Some((3e-5, 1.2e-4)));
        assert!(pts[1].config.interference_location_known);
        assert_eq!(pts[1].config.distance_ix, 1.2e-4);

        let mut s3 = SweepSpec::new(LinkConfig::table1_3d(), vec![0.5]);
        s3.base.location_bounds = Some((3e-5, 1.2e-4));
        assert!(s3.points(Command::UnknownLocation).unwrap_err().to_string().contains("dimension"));
        let s4 = SweepSpec::new(LinkConfig::table1_1d(), vec![0.5]);
        assert!(s4.points(Command::UnknownLocation).unwrap_err().to_string().contains("location_bounds"));
    }

    #[test]
    fn scenario_must_match_config() {
        let mut s = SweepSpec::new(LinkConfig::table1_1d(), vec![0.5]);
        s.scenario = Some(Scenario::Isi);
        assert!(s.points(Command::BerCurve).unwrap_err().to_string().contains("scenario"));
        s.base.isi_memory = 2;
        assert!(s.points(Command::BerCurve).is_ok());
    }
}
