//! Experiment configuration.
//!
//! Configurations are TOML documents with units in the key names. Every
//! section is required and unknown keys are rejected; [`ScenarioConfig::paper_reference`]
//! gives the reference scenario and `jdtc preset paper-reference` prints it
//! as a starting point for edits.
//!
//! Overrides of the form `KEY=VALUE` address any value by its dotted path
//! (`sensors.detection_prob=0.9`). A few short aliases are accepted:
//!
//! | alias    | path                          |
//! |----------|-------------------------------|
//! | `pD`     | `sensors.detection_prob`      |
//! | `pS`     | `filter.survival_probability` |
//! | `pB`     | `birth.probability`           |
//! | `lambda` | `sensors.clutter_rate`        |
//! | `R`      | `sensors.noise_var_m2`        |
//! | `L`      | `network.consensus_steps`     |
//! | `radius` | `network.radius_m`            |
//! | `trials` | `run.trials`                  |
//! | `seed`   | `run.seed`                    |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::filter::Criterion;
use crate::fusion::WeightRule;
use crate::reduce::ReductionPolicy;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },
    #[error("bad override `{0}`: expected KEY=VALUE with an existing key")]
    Override(String),
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation { key: key.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub modes: Vec<ModeConfig>,
    pub classes: Vec<ClassConfig>,
    pub birth: BirthConfig,
    pub filter: FilterConfig,
    pub sensors: SensorsConfig,
    pub network: NetworkConfig,
    pub reduction: ReductionPolicy,
    pub ospa: OspaConfig,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub timesteps: usize,
    pub sampling_interval_s: f64,
    pub true_class: u32,
    /// `[ξ m, ξ̇ m/s, η m, η̇ m/s]` at the first step of the schedule.
    pub initial_state: Vec<f64>,
    /// Add process noise `Q(m)` to the reference trajectory.
    #[serde(default)]
    pub noisy_truth: bool,
    /// Contiguous mode segments; the target exists exactly over their union.
    pub schedule: Vec<ScheduleSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSegment {
    pub first_step: usize,
    pub last_step: usize,
    pub mode: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Cv,
    Ct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub id: u32,
    pub kind: ModeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_rate_rad_s: Option<f64>,
    pub sigma_m_s2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassConfig {
    pub id: u32,
    pub modes: Vec<u32>,
    /// Row = previous mode, column = next mode, in `modes` order.
    pub transition: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BirthConfig {
    pub probability: f64,
    /// In `classes` order.
    pub class_pmf: Vec<f64>,
    /// Per class in `classes` order, per mode in that class's `modes` order.
    pub mode_pmf: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub cov_diag: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub survival_probability: f64,
    pub existence_threshold: f64,
    pub estimator: Criterion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorsConfig {
    /// Sensor `i` (1-based) sits at `positions_m[i-1]`.
    pub positions_m: Vec<[f64; 2]>,
    pub noise_var_m2: f64,
    pub detection_prob: f64,
    /// Per-class detection probabilities keyed by class id, overriding
    /// `detection_prob`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub detection_prob_by_class: BTreeMap<String, f64>,
    /// Expected clutter points per scan.
    pub clutter_rate: f64,
    pub clutter_range_m: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Geometric,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub topology: Topology,
    /// Link range for the geometric topology.
    pub radius_m: f64,
    pub consensus_steps: usize,
    pub weights: WeightRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OspaConfig {
    pub order: f64,
    pub cutoff_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub trials: usize,
    pub seed: u64,
}

/// Side of the square bounding the quarter-disc surveillance region.
pub const SURVEILLANCE_EXTENT_M: f64 = 5000.0 * std::f64::consts::SQRT_2;

/// 5 × 4 grid of cell centres over the bounding square, row-major from the
/// origin.
pub fn reference_sensor_grid() -> Vec<[f64; 2]> {
    let (cols, rows) = (5, 4);
    let mut out = Vec::with_capacity(cols * rows);
    for row in 0..rows {
        for col in 0..cols {
            out.push([
                (col as f64 + 0.5) * SURVEILLANCE_EXTENT_M / cols as f64,
                (row as f64 + 0.5) * SURVEILLANCE_EXTENT_M / rows as f64,
            ]);
        }
    }
    out
}

impl ScenarioConfig {
    pub fn paper_reference() -> Self {
        let third = 1.0 / 3.0;
        let pi3 = vec![vec![0.8, 0.1, 0.1], vec![0.1, 0.8, 0.1], vec![0.1, 0.1, 0.8]];
        let ct = |id, w| ModeConfig { id, kind: ModeKind::Ct, turn_rate_rad_s: Some(w), sigma_m_s2: 1.4 };
        Self {
            scenario: ScenarioSection {
                timesteps: 100,
                sampling_interval_s: 1.0,
                true_class: 2,
                initial_state: vec![4786.0, -8.3, 3584.0, -100.9],
                noisy_truth: false,
                schedule: vec![
                    ScheduleSegment { first_step: 6, last_step: 25, mode: 1 },
                    ScheduleSegment { first_step: 26, last_step: 50, mode: 2 },
                    ScheduleSegment { first_step: 51, last_step: 60, mode: 1 },
                    ScheduleSegment { first_step: 61, last_step: 90, mode: 3 },
                ],
            },
            modes: vec![
                ModeConfig { id: 1, kind: ModeKind::Cv, turn_rate_rad_s: None, sigma_m_s2: 1.0 },
                ct(2, -0.1),
                ct(3, 0.15),
                ct(4, 1.0),
                ct(5, -1.0),
            ],
            classes: vec![
                ClassConfig { id: 1, modes: vec![1], transition: vec![vec![1.0]] },
                ClassConfig { id: 2, modes: vec![1, 2, 3], transition: pi3.clone() },
                ClassConfig { id: 3, modes: vec![1, 4, 5], transition: pi3 },
            ],
            birth: BirthConfig {
                probability: 0.2,
                class_pmf: vec![third; 3],
                mode_pmf: vec![vec![1.0], vec![third; 3], vec![third; 3]],
                mean: vec![4780.0, -8.0, 3590.0, -100.0],
                cov_diag: vec![100.0; 4],
            },
            filter: FilterConfig { survival_probability: 0.98, existence_threshold: 0.5, estimator: Criterion::Mmse },
            sensors: SensorsConfig {
                positions_m: reference_sensor_grid(),
                noise_var_m2: 25.0,
                detection_prob: 0.95,
                detection_prob_by_class: BTreeMap::new(),
                clutter_rate: 5.0,
                clutter_range_m: [0.0, SURVEILLANCE_EXTENT_M],
            },
            network: NetworkConfig {
                topology: Topology::Geometric,
                radius_m: 2000.0,
                consensus_steps: 3,
                weights: WeightRule::Metropolis,
            },
            reduction: ReductionPolicy::default(),
            ospa: OspaConfig { order: 1.0, cutoff_m: 150.0 },
            run: RunConfig { trials: 100, seed: 0 },
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper-reference" => Some(Self::paper_reference()),
            _ => None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    /// Apply `KEY=VALUE` overrides and re-validate.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(&self.to_toml_string())?;
        for item in overrides {
            apply_override(&mut table, item.as_ref())?;
        }
        let config: Self = toml::Value::Table(table).try_into()?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.scenario;
        if s.timesteps == 0 {
            return Err(invalid("scenario.timesteps", "must be at least 1"));
        }
        if !(s.sampling_interval_s > 0.0) {
            return Err(invalid("scenario.sampling_interval_s", "must be positive"));
        }
        if s.initial_state.len() != 4 {
            return Err(invalid("scenario.initial_state", "must have 4 entries"));
        }
        let class = self
            .classes
            .iter()
            .find(|c| c.id == s.true_class)
            .ok_or_else(|| invalid("scenario.true_class", format!("unknown class {}", s.true_class)))?;
        let mut expected_first = None;
        for (i, seg) in s.schedule.iter().enumerate() {
            let key = format!("scenario.schedule[{i}]");
            if seg.first_step == 0 || seg.last_step < seg.first_step || seg.last_step > s.timesteps {
                return Err(invalid(key, "steps must satisfy 1 <= first_step <= last_step <= timesteps"));
            }
            if expected_first.is_some_and(|f| f != seg.first_step) {
                return Err(invalid(key, "segments must be contiguous"));
            }
            if !class.modes.contains(&seg.mode) {
                return Err(invalid(key, format!("mode {} is not admissible for class {}", seg.mode, class.id)));
            }
            expected_first = Some(seg.last_step + 1);
        }

        let mut mode_ids = Vec::new();
        for (i, m) in self.modes.iter().enumerate() {
            let key = format!("modes[{i}]");
            if mode_ids.contains(&m.id) {
                return Err(invalid(key, format!("duplicate mode id {}", m.id)));
            }
            mode_ids.push(m.id);
            if !(m.sigma_m_s2 > 0.0) {
                return Err(invalid(format!("{key}.sigma_m_s2"), "must be positive"));
            }
            match (m.kind, m.turn_rate_rad_s) {
                (ModeKind::Ct, Some(w)) if w != 0.0 && w.is_finite() => {}
                (ModeKind::Ct, _) => {
                    return Err(invalid(format!("{key}.turn_rate_rad_s"), "turn modes need a nonzero turn rate"))
                }
                (ModeKind::Cv, Some(_)) => {
                    return Err(invalid(format!("{key}.turn_rate_rad_s"), "constant-velocity modes take no turn rate"))
                }
                (ModeKind::Cv, None) => {}
            }
        }

        if self.classes.is_empty() {
            return Err(invalid("classes", "at least one class is required"));
        }
        let mut class_ids = Vec::new();
        for (i, c) in self.classes.iter().enumerate() {
            let key = format!("classes[{i}]");
            if class_ids.contains(&c.id) {
                return Err(invalid(key, format!("duplicate class id {}", c.id)));
            }
            class_ids.push(c.id);
            if c.modes.is_empty() {
                return Err(invalid(format!("{key}.modes"), "must not be empty"));
            }
            if let Some(m) = c.modes.iter().find(|m| !mode_ids.contains(m)) {
                return Err(invalid(format!("{key}.modes"), format!("unknown mode {m}")));
            }
            let n = c.modes.len();
            if c.transition.len() != n || c.transition.iter().any(|row| row.len() != n) {
                return Err(invalid(format!("{key}.transition"), format!("must be {n}x{n}")));
            }
            for (r, row) in c.transition.iter().enumerate() {
                check_pmf(&format!("{key}.transition[{r}]"), row, "transition row sum")?;
            }
        }

        let b = &self.birth;
        check_prob("birth.probability", b.probability)?;
        if b.class_pmf.len() != self.classes.len() {
            return Err(invalid("birth.class_pmf", "needs one entry per class"));
        }
        check_pmf("birth.class_pmf", &b.class_pmf, "classPmf sum")?;
        if b.mode_pmf.len() != self.classes.len() {
            return Err(invalid("birth.mode_pmf", "needs one row per class"));
        }
        for (i, (row, c)) in b.mode_pmf.iter().zip(&self.classes).enumerate() {
            let key = format!("birth.mode_pmf[{i}]");
            if row.len() != c.modes.len() {
                return Err(invalid(key, "needs one entry per mode of the class"));
            }
            check_pmf(&key, row, "modePmf sum")?;
        }
        if b.mean.len() != 4 {
            return Err(invalid("birth.mean", "must have 4 entries"));
        }
        if b.cov_diag.len() != 4 || b.cov_diag.iter().any(|v| !(*v > 0.0)) {
            return Err(invalid("birth.cov_diag", "must have 4 positive entries"));
        }

        check_prob("filter.survival_probability", self.filter.survival_probability)?;
        check_prob("filter.existence_threshold", self.filter.existence_threshold)?;

        let sn = &self.sensors;
        if sn.positions_m.is_empty() {
            return Err(invalid("sensors.positions_m", "at least one sensor is required"));
        }
        if !(sn.noise_var_m2 > 0.0) {
            return Err(invalid("sensors.noise_var_m2", "must be positive"));
        }
        check_prob("sensors.detection_prob", sn.detection_prob)?;
        for (k, &p) in &sn.detection_prob_by_class {
            let key = format!("sensors.detection_prob_by_class.{k}");
            let id: u32 = k.parse().map_err(|_| invalid(&key, "keys must be class ids"))?;
            if !class_ids.contains(&id) {
                return Err(invalid(&key, format!("unknown class {id}")));
            }
            check_prob(&key, p)?;
        }
        if !(sn.clutter_rate >= 0.0) || !sn.clutter_rate.is_finite() {
            return Err(invalid("sensors.clutter_rate", "must be nonnegative"));
        }
        if !(sn.clutter_range_m[1] > sn.clutter_range_m[0]) {
            return Err(invalid("sensors.clutter_range_m", "must be a nonempty interval"));
        }

        if self.network.consensus_steps == 0 {
            return Err(invalid("network.consensus_steps", "must be at least 1"));
        }
        if self.network.topology == Topology::Geometric && !(self.network.radius_m > 0.0) {
            return Err(invalid("network.radius_m", "must be positive"));
        }
        self.reduction.validate().map_err(|e| invalid("reduction", e.to_string()))?;
        if !(self.ospa.order >= 1.0) {
            return Err(invalid("ospa.order", "must be at least 1"));
        }
        if !(self.ospa.cutoff_m > 0.0) {
            return Err(invalid("ospa.cutoff_m", "must be positive"));
        }
        if self.run.trials == 0 {
            return Err(invalid("run.trials", "must be at least 1"));
        }
        Ok(())
    }
}

fn check_prob(key: &str, p: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(key, format!("probability {p} outside [0, 1]")))
    }
}

fn check_pmf(key: &str, values: &[f64], what: &str) -> Result<(), ConfigError> {
    for &p in values {
        check_prob(key, p)?;
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(invalid(key, format!("{what} = {sum}")));
    }
    Ok(())
}

/// Read and validate a configuration file.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
    ScenarioConfig::from_toml_str(&text)
}

fn resolve_alias(key: &str) -> &str {
    match key {
        "pD" => "sensors.detection_prob",
        "pS" => "filter.survival_probability",
        "pB" => "birth.probability",
        "lambda" => "sensors.clutter_rate",
        "R" => "sensors.noise_var_m2",
        "L" => "network.consensus_steps",
        "radius" => "network.radius_m",
        "trials" => "run.trials",
        "seed" => "run.seed",
        other => other,
    }
}

fn parse_value(text: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_owned()))
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), ConfigError> {
    let bad = || ConfigError::Override(item.to_owned());
    let (key, value) = item.split_once('=').ok_or_else(bad)?;
    let path = resolve_alias(key.trim());
    let mut parts = path.split('.').peekable();
    let mut node = table;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            let slot = node.get_mut(part).ok_or_else(bad)?;
            let mut new = parse_value(value.trim());
            // Integers given where floats are expected (and vice versa for
            // whole floats) keep the original TOML type.
            match (&*slot, &new) {
                (toml::Value::Float(_), toml::Value::Integer(i)) => new = toml::Value::Float(*i as f64),
                (toml::Value::Integer(_), toml::Value::Float(f)) if f.fract() == 0.0 => {
                    new = toml::Value::Integer(*f as i64)
                }
                _ => {}
            }
            *slot = new;
            return Ok(());
        }
        node = node.get_mut(part).and_then(toml::Value::as_table_mut).ok_or_else(bad)?;
    }
    Err(bad())
}
