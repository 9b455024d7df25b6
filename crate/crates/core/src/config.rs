//! Run configuration: JSON schema, defaults, validation and construction of
//! the model, initial state and stepper settings.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{check_non_cavitation, Model, ModelParams, State};
use crate::multiplier::{grid_sample_range, preset, validate_admissible, MultiplierPair};
use crate::snapshot;
use crate::spectral::SpectralGrid;
use crate::stepper::{RunControl, StepperConfig};

/// A single `(field, reason)` violation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub reason: String,
}

impl Violation {
    pub fn new(field: &str, reason: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration: {}", join(.0))]
    Validation(Vec<Violation>),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl ConfigError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ConfigError::Validation(v) => v,
            _ => &[],
        }
    }
}

impl From<serde_json::Error> for ConfigError {
    fn from(e: serde_json::Error) -> Self {
        ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

/// A preset name or an explicit multiplier pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Preset(String),
    Custom(MultiplierPair),
}

impl ModelSpec {
    pub fn pair(&self, mu: f64) -> Result<MultiplierPair, String> {
        match self {
            ModelSpec::Preset(name) => preset(name, mu).map(|(p, _)| p).map_err(|e| e.to_string()),
            ModelSpec::Custom(pair) => Ok(pair.with_mu(mu)),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModelSpec::Preset(name) => name.clone(),
            ModelSpec::Custom(_) => "custom".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// `amplitude * exp(-|x - center|^2 / width^2)`, periodized over the domain.
    Gaussian,
    /// `amplitude * cos(2 pi mode x_0 / L)`
    Cosine,
    /// Seeded band-limited random field.
    Random,
    /// WBSNAP01 snapshot at `path`.
    File,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub kind: InitialKind,
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Defaults to the domain center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default = "one_usize")]
    pub mode: usize,
    /// `v_0 = velocity_factor * zeta`, other components zero.
    #[serde(default = "one")]
    pub velocity_factor: f64,
    /// Rescale the state so that `|U0|_{X^s}` equals this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_norm: Option<f64>,
    /// Spectral decay of random fields; defaults to `t0 + 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl InitialSpec {
    pub fn gaussian(amplitude: f64, width: f64) -> Self {
        Self {
            kind: InitialKind::Gaussian,
            amplitude,
            center: None,
            width,
            mode: 1,
            velocity_factor: 1.0,
            target_norm: None,
            decay: None,
            path: None,
        }
    }

    pub fn cosine(amplitude: f64, mode: usize) -> Self {
        Self {
            kind: InitialKind::Cosine,
            mode,
            ..Self::gaussian(amplitude, 1.0)
        }
    }
}

fn default_dir() -> String {
    "out".to_string()
}
fn default_blowup() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "one_usize")]
    pub csv_cadence: usize,
    /// Steps between snapshots; 0 writes only the final state.
    #[serde(default)]
    pub snapshot_cadence: usize,
    #[serde(default = "default_blowup")]
    pub blowup_factor: f64,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            csv_cadence: 1,
            snapshot_cadence: 0,
            blowup_factor: default_blowup(),
        }
    }
}

fn default_length() -> f64 {
    2.0 * PI
}
fn default_h_min() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L", default = "default_length")]
    pub length: f64,
    #[serde(default = "one")]
    pub mu: f64,
    pub epsilon: f64,
    #[serde(default = "default_h_min")]
    pub h_min: f64,
    /// Norm index; defaults to `d/2 + 1.51`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    /// Sobolev threshold; defaults to `d/2 + 0.51`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default = "one")]
    pub t_end_over_eps: f64,
    #[serde(default)]
    pub stepper: StepperConfig,
    pub initial: InitialSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Outcome of a successful validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Validated {
    pub warnings: Vec<String>,
    pub min_depth: f64,
}

impl RunConfig {
    /// Minimal configuration with every optional field at its default.
    pub fn new(model: &str, dim: usize, n: usize, epsilon: f64, initial: InitialSpec) -> Self {
        Self {
            model: ModelSpec::Preset(model.to_string()),
            dim,
            n,
            length: default_length(),
            mu: 1.0,
            epsilon,
            h_min: default_h_min(),
            s: None,
            t0: None,
            t_end_over_eps: 1.0,
            stepper: StepperConfig::default(),
            initial,
            seed: 0,
            output: OutputSpec::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn s(&self) -> f64 {
        self.s.unwrap_or(self.dim as f64 / 2.0 + 1.51)
    }

    pub fn t0(&self) -> f64 {
        self.t0.unwrap_or(self.dim as f64 / 2.0 + 0.51)
    }

    /// `t_end_over_eps / epsilon`.
    pub fn t_end(&self) -> f64 {
        self.t_end_over_eps / self.epsilon
    }

    pub fn grid(&self) -> Result<std::sync::Arc<SpectralGrid>, String> {
        SpectralGrid::shared(self.dim, self.n, self.length).map_err(|e| e.to_string())
    }

    pub fn build_model(&self) -> Result<Model, String> {
        let grid = self.grid()?;
        let pair = self.model.pair(self.mu)?;
        let params = ModelParams::new(&pair, self.epsilon, self.mu, self.h_min).map_err(|e| e.to_string())?;
        Model::new(grid, params).map_err(|e| e.to_string())
    }

    pub fn stepper_config(&self) -> StepperConfig {
        self.stepper.clone().with_t_end(self.t_end())
    }

    pub fn run_control(&self) -> RunControl {
        RunControl {
            snapshot_every: if self.output.snapshot_cadence == 0 {
                usize::MAX
            } else {
                self.output.snapshot_cadence
            },
            diag_every: self.output.csv_cadence,
            blowup_factor: self.output.blowup_factor,
            s: self.s(),
            t0: self.t0(),
        }
    }

    /// Build the initial state on `model`'s grid.
    pub fn initial_state(&self, model: &Model) -> Result<State, String> {
        let g = model.grid().clone();
        let init = &self.initial;
        let l = self.length;
        let zeta = match init.kind {
            InitialKind::Gaussian => {
                let c = init.center.clone().unwrap_or_else(|| vec![l / 2.0; self.dim]);
                if c.len() != self.dim {
                    return Err(format!("initial.center must have {} entries", self.dim));
                }
                let cy = c.get(1).copied().unwrap_or(0.0);
                let w2 = init.width * init.width;
                // periodized: sum over the nearest images keeps the profile smooth across the boundary
                let images = (3.0 * init.width / l).ceil() as i64 + 1;
                let bump = |d: f64| -> f64 {
                    (-images..=images)
                        .map(|m| (-(d + m as f64 * l).powi(2) / w2).exp())
                        .sum()
                };
                g.sample(|x, y| {
                    let by = if self.dim == 2 { bump(y - cy) } else { 1.0 };
                    init.amplitude * bump(x - c[0]) * by
                })
            }
            InitialKind::Cosine => {
                let k = 2.0 * PI * init.mode as f64 / l;
                g.sample(|x, _| init.amplitude * (k * x).cos())
            }
            InitialKind::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let f = g.random_field(&mut rng, init.decay.unwrap_or(self.t0() + 2.0));
                let peak = f.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
                f.iter().map(|x| init.amplitude * x / peak).collect()
            }
            InitialKind::File => {
                let path = init.path.as_ref().ok_or("initial.path is required for kind \"file\"")?;
                let state = snapshot::read_snapshot(Path::new(path)).map_err(|e| e.to_string())?;
                if state.grid.n() != self.n || state.grid.dim() != self.dim {
                    return Err("snapshot grid does not match the configuration".into());
                }
                let mut s = state;
                s.grid = g;
                s.time = 0.0;
                return Ok(self.rescale(model, s));
            }
        };
        let mut v = vec![vec![0.0; g.len()]; self.dim];
        v[0] = zeta.iter().map(|z| init.velocity_factor * z).collect();
        let s = State::new(g, zeta, v).map_err(|e| e.to_string())?;
        Ok(self.rescale(model, s))
    }

    fn rescale(&self, model: &Model, s: State) -> State {
        match self.initial.target_norm {
            Some(target) => {
                let norm = model.x_norm(&s, self.s());
                if norm > 0.0 {
                    s.scaled(target / norm)
                } else {
                    s
                }
            }
            None => s,
        }
    }

    /// Check every field, admissibility and non-cavitation of the initial data.
    pub fn validate(&self) -> Result<Validated, ConfigError> {
        let mut v = Vec::new();
        let mut warnings = Vec::new();
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            v.push(Violation::new("epsilon", "must lie in (0,1]"));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            v.push(Violation::new("mu", "must lie in (0,1]"));
        }
        if !(self.h_min > 0.0 && self.h_min < 1.0) {
            v.push(Violation::new("h_min", "must lie in (0,1)"));
        }
        if !(1..=2).contains(&self.dim) {
            v.push(Violation::new("dim", "must be 1 or 2"));
        }
        if self.n < 4 || !self.n.is_multiple_of(2) {
            v.push(Violation::new("N", "must be even and at least 4"));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            v.push(Violation::new("L", "must be positive"));
        }
        if !(self.t_end_over_eps >= 0.0 && self.t_end_over_eps.is_finite()) {
            v.push(Violation::new("t_end_over_eps", "must be non-negative"));
        }
        let st = &self.stepper;
        if !(st.cfl > 0.0 && st.cfl <= 1.0) {
            v.push(Violation::new("stepper.cfl", "must lie in (0,1]"));
        }
        if let Some(dt) = st.dt_override {
            if !(dt > 0.0 && dt.is_finite()) {
                v.push(Violation::new("stepper.dt_override", "must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&st.alpha) {
            v.push(Violation::new("stepper.alpha", "must lie in [0,1]"));
        }
        if !(st.picard_tol > 0.0) {
            v.push(Violation::new("stepper.picard_tol", "must be positive"));
        }
        if st.picard_max_iter == 0 {
            v.push(Violation::new("stepper.picard_max_iter", "must be at least 1"));
        }
        if self.output.csv_cadence == 0 {
            v.push(Violation::new("output.csv_cadence", "must be at least 1"));
        }
        if !(self.output.blowup_factor > 1.0) {
            v.push(Violation::new("output.blowup_factor", "must exceed 1"));
        }
        if !(self.initial.width > 0.0) {
            v.push(Violation::new("initial.width", "must be positive"));
        }
        if !self.initial.amplitude.is_finite() {
            v.push(Violation::new("initial.amplitude", "must be finite"));
        }
        let s = self.s();
        let bound = self.dim as f64 / 2.0 + 1.0;
        if s <= bound {
            warnings.push(format!("s = {s} does not exceed d/2 + 1 = {bound}; the existence theory does not cover it"));
        }
        if !v.is_empty() {
            return Err(ConfigError::Validation(v));
        }

        let pair = match self.model.pair(self.mu) {
            Ok(p) => p,
            Err(e) => return Err(ConfigError::Validation(vec![Violation::new("model", e)])),
        };
        let grid = self.grid().map_err(|e| ConfigError::Validation(vec![Violation::new("N", e)]))?;
        let report = validate_admissible(&pair, grid_sample_range(&grid), 256);
        if !report.passed() {
            let list = report
                .violations
                .iter()
                .map(|x| Violation::new("model", format!("not admissible: {x}")))
                .collect();
            return Err(ConfigError::Validation(list));
        }
        let model = self
            .build_model()
            .map_err(|e| ConfigError::Validation(vec![Violation::new("model", e)]))?;
        let state = self
            .initial_state(&model)
            .map_err(|e| ConfigError::Validation(vec![Violation::new("initial", e)]))?;
        let (ok, min_depth) = check_non_cavitation(&state.zeta, self.epsilon, self.h_min);
        if !ok {
            return Err(ConfigError::Validation(vec![Violation::new(
                "initial",
                format!("non-cavitation fails: min(1 + eps zeta0) = {min_depth} < h_min = {}", self.h_min),
            )]));
        }
        Ok(Validated { warnings, min_depth })
    }
}

/// Read, parse and validate a configuration file.
pub fn load_config(path: &Path) -> Result<(RunConfig, Validated), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let cfg = RunConfig::from_json(&text)?;
    let validated = cfg.validate()?;
    Ok((cfg, validated))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": "shallow_water",
        "dim": 1,
        "N": 64,
        "epsilon": 0.1,
        "initial": {"kind": "gaussian", "amplitude": 0.5}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.stepper.cfl, 0.4);
        assert_eq!(cfg.h_min, 0.5);
        assert!((cfg.s() - 2.01).abs() < 1e-12);
        assert!((cfg.t0() - 1.01).abs() < 1e-12);
        assert!((cfg.length - 2.0 * PI).abs() < 1e-15);
        assert!(cfg.validate().unwrap().warnings.is_empty());
    }

    #[test]
    fn epsilon_out_of_range() {
        let mut cfg = RunConfig::from_json(MINIMAL).unwrap();
        cfg.epsilon = 1.5;
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.violations()[0], Violation::new("epsilon", "must lie in (0,1]"));
    }

    #[test]
    fn cavitating_initial_data() {
        let mut cfg = RunConfig::from_json(MINIMAL).unwrap();
        cfg.epsilon = 1.0;
        cfg.initial = InitialSpec::cosine(2.0, 1);
        let err = cfg.validate().unwrap_err();
        let v = &err.violations()[0];
        assert_eq!(v.field, "initial");
        assert!(v.reason.contains("-1"), "{}", v.reason);
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        let text = "{\n  \"model\": \"ddk\",\n  \"dim\": 1,\n  \"N\": 32,\n  \"epsilon\": 0.1,\n  \"bogus\": 3,\n  \"initial\": {\"kind\": \"cosine\"}\n}";
        match RunConfig::from_json(text) {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let mut cfg = RunConfig::from_json(MINIMAL).unwrap();
        cfg.s = Some(2.5);
        cfg.stepper.dt_override = Some(0.01);
        let again = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn low_regularity_warns() {
        let mut cfg = RunConfig::from_json(MINIMAL).unwrap();
        cfg.s = Some(1.2);
        assert_eq!(cfg.validate().unwrap().warnings.len(), 1);
    }

    #[test]
    fn dominated_pair_is_rejected() {
        let text = r#"{
            "model": {"g1": {"kind": "identity"}, "g2": {"kind": "identity", "scale": 2.0}},
            "dim": 1, "N": 32, "epsilon": 0.1,
            "initial": {"kind": "cosine", "amplitude": 0.1}
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("domination"), "{err}");
    }

    #[test]
    fn target_norm_rescales() {
        let mut cfg = RunConfig::from_json(MINIMAL).unwrap();
        cfg.initial.target_norm = Some(1.0);
        let m = cfg.build_model().unwrap();
        let s = cfg.initial_state(&m).unwrap();
        assert!((m.x_norm(&s, cfg.s()) - 1.0).abs() < 1e-12);
    }
}
