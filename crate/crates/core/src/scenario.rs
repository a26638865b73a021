//! Scenario files.
//!
//! Scenarios are TOML documents. Every key except `x0`, `x_target` and
//! `num_iterations` has a default; unknown keys are rejected. The format is
//! documented in `docs/scenario-format.md`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::ControllerConfig;
use crate::dynamics::{ModelParams, State};
use crate::environment::{ActiveIterations, ObstacleSpec, Shape};
use crate::history::DistanceWeights;
use crate::ilqr::IlqrConfig;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

const REQUIRED_KEYS: [&str; 3] = ["x0", "x_target", "num_iterations"];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("missing required keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Grid searched when building the iteration-0 trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialTrajectoryConfig {
    /// Cruise speeds, m/s, in search order.
    pub cruise_speeds: Vec<f64>,
    /// Lateral offsets, m, in search order.
    pub lateral_offsets: Vec<f64>,
    /// Length of the lane-change ramps, m.
    pub ramp_length: f64,
}

impl Default for InitialTrajectoryConfig {
    fn default() -> Self {
        Self {
            cruise_speeds: vec![6.0, 4.0, 2.0],
            lateral_offsets: vec![0.0, 8.0, -8.0, 12.0, -12.0],
            ramp_length: 30.0,
        }
    }
}

/// A fully resolved benchmark scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub x0: State,
    pub x_target: State,
    /// Target tolerance on the full-state Euclidean norm.
    pub epsilon: f64,
    pub model: ModelParams,
    pub obstacles: Vec<ObstacleSpec>,
    pub num_iterations: usize,
    pub max_steps_per_iteration: usize,
    pub controller: ControllerConfig,
    pub initial: InitialTrajectoryConfig,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if !self.x0.is_finite() || !self.x_target.is_finite() {
            return invalid("x0 and x_target must be finite".into());
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return invalid(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if self.x0.distance(&self.x_target) < self.epsilon {
            return invalid("x0 already lies within epsilon of x_target; the task is degenerate".into());
        }
        if !self.model.is_valid() {
            return invalid("model needs dt > 0, lr > 0 and lf >= 0".into());
        }
        if self.max_steps_per_iteration == 0 {
            return invalid("max_steps_per_iteration must be > 0".into());
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            o.check().map_err(|m| ScenarioError::Invalid(format!("obstacles[{i}]: {m}")))?;
        }
        self.controller.check().map_err(ScenarioError::Invalid)?;
        let init = &self.initial;
        if init.cruise_speeds.is_empty() || !init.cruise_speeds.iter().all(|v| v.is_finite() && *v > 0.0) {
            return invalid("initial.cruise_speeds must be a non-empty list of positive speeds".into());
        }
        if init.lateral_offsets.is_empty() || !init.lateral_offsets.iter().all(|v| v.is_finite()) {
            return invalid("initial.lateral_offsets must be a non-empty list of finite offsets".into());
        }
        if !(init.ramp_length.is_finite() && init.ramp_length > 0.0) {
            return invalid("initial.ramp_length must be > 0".into());
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
        let scenario = file.resolve()?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&ScenarioFile::from(self)).expect("scenario serializes")
    }
}

/// Load a scenario from disk.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    Scenario::from_toml_str(&text)
}

fn parse_error(text: &str, e: &toml::de::Error) -> ScenarioError {
    let (line, column) = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    ScenarioError::Parse { line, column, message: e.message().to_string() }
}

/// On-disk layout. Also embedded verbatim in run-log headers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_version: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps_per_iteration: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_target: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub obstacles: Vec<ObstacleFile>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dt: Option<f64>,
    pub lf: Option<f64>,
    pub lr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerFile {
    pub k: Option<usize>,
    pub r_max: Option<usize>,
    pub d0: Option<[f64; 4]>,
    pub d1: Option<[f64; 4]>,
    pub w_h: Option<f64>,
    pub w_d: Option<f64>,
    pub history_window: Option<usize>,
    pub ilqr: Option<IlqrFile>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlqrFile {
    pub horizon: Option<usize>,
    pub terminal_weight: Option<[f64; 4]>,
    pub input_weight: Option<[f64; 2]>,
    pub state_weight: Option<[f64; 4]>,
    pub barrier_q1: Option<f64>,
    pub barrier_q2: Option<f64>,
    pub input_barrier_q2: Option<f64>,
    pub max_iterations: Option<usize>,
    pub convergence_tol: Option<f64>,
    pub reg_init: Option<f64>,
    pub reg_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialFile {
    pub cruise_speeds: Option<Vec<f64>>,
    pub lateral_offsets: Option<Vec<f64>>,
    pub ramp_length: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IterationsFile {
    Keyword(String),
    List(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleFile {
    /// `"ellipse"` or `"circle"`.
    pub shape: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semi_axes: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    pub center: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<IterationsFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spawn_time: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety_margin: Option<f64>,
}

const DEFAULT_ELLIPSE_AXES: [f64; 2] = [12.0, 6.0];
const DEFAULT_CIRCLE_RADIUS: f64 = 6.0;
const DEFAULT_SAFETY_MARGIN: f64 = 0.5;

impl ObstacleFile {
    fn resolve(&self, index: usize) -> Result<ObstacleSpec, ScenarioError> {
        let invalid = |m: String| ScenarioError::Invalid(format!("obstacles[{index}]: {m}"));
        let shape = match self.shape.as_str() {
            "ellipse" => {
                if self.radius.is_some() {
                    return Err(invalid("ellipse takes semi_axes, not radius".into()));
                }
                let [a, b] = self.semi_axes.unwrap_or(DEFAULT_ELLIPSE_AXES);
                Shape::Ellipse { a, b }
            }
            "circle" => {
                if self.semi_axes.is_some() {
                    return Err(invalid("circle takes radius, not semi_axes".into()));
                }
                Shape::Circle { radius: self.radius.unwrap_or(DEFAULT_CIRCLE_RADIUS) }
            }
            other => return Err(invalid(format!("unknown shape {other:?} (expected \"ellipse\" or \"circle\")"))),
        };
        let active = match &self.iterations {
            None => ActiveIterations::All,
            Some(IterationsFile::Keyword(k)) if k == "all" => ActiveIterations::All,
            Some(IterationsFile::Keyword(k)) => return Err(invalid(format!("iterations must be \"all\" or a list, got {k:?}"))),
            Some(IterationsFile::List(list)) => ActiveIterations::Only(list.clone()),
        };
        Ok(ObstacleSpec {
            shape,
            center: self.center,
            velocity: self.velocity.unwrap_or([0.0, 0.0]),
            active,
            spawn_time: self.spawn_time.unwrap_or(0),
            safety_margin: self.safety_margin.unwrap_or(DEFAULT_SAFETY_MARGIN),
        })
    }
}

impl From<&ObstacleSpec> for ObstacleFile {
    fn from(o: &ObstacleSpec) -> Self {
        let (shape, semi_axes, radius) = match o.shape {
            Shape::Ellipse { a, b } => ("ellipse", Some([a, b]), None),
            Shape::Circle { radius } => ("circle", None, Some(radius)),
        };
        Self {
            shape: shape.into(),
            semi_axes,
            radius,
            center: o.center,
            velocity: Some(o.velocity),
            iterations: Some(match &o.active {
                ActiveIterations::All => IterationsFile::Keyword("all".into()),
                ActiveIterations::Only(list) => IterationsFile::List(list.clone()),
            }),
            spawn_time: Some(o.spawn_time),
            safety_margin: Some(o.safety_margin),
        }
    }
}

impl ScenarioFile {
    /// Fill defaults and convert. Fails on missing required keys or malformed
    /// obstacle entries; invariant checks live in [`Scenario::validate`].
    pub fn resolve(&self) -> Result<Scenario, ScenarioError> {
        let present = [self.x0.is_some(), self.x_target.is_some(), self.num_iterations.is_some()];
        let missing: Vec<String> =
            REQUIRED_KEYS.iter().zip(present).filter(|(_, p)| !p).map(|(k, _)| k.to_string()).collect();
        if !missing.is_empty() {
            return Err(ScenarioError::MissingKeys(missing));
        }
        if let Some(v) = self.format_version {
            if v != SCENARIO_FORMAT_VERSION {
                return Err(ScenarioError::Invalid(format!(
                    "format_version {v} is not supported (expected {SCENARIO_FORMAT_VERSION})"
                )));
            }
        }

        let dm = ModelParams::default();
        let m = self.model.clone().unwrap_or_default();
        let model = ModelParams { dt: m.dt.unwrap_or(dm.dt), lf: m.lf.unwrap_or(dm.lf), lr: m.lr.unwrap_or(dm.lr) };

        let dc = ControllerConfig::default();
        let c = self.controller.clone().unwrap_or_default();
        let di = dc.ilqr.clone();
        let i = c.ilqr.clone().unwrap_or_default();
        let d0 = c.d0.map(DistanceWeights).unwrap_or(dc.d0);
        let controller = ControllerConfig {
            k: c.k.unwrap_or(dc.k),
            r_max: c.r_max.unwrap_or(dc.r_max),
            d0,
            d1: c.d1.unwrap_or(d0.0),
            w_h: c.w_h.unwrap_or(dc.w_h),
            w_d: c.w_d.unwrap_or(dc.w_d),
            history_window: c.history_window.unwrap_or(dc.history_window),
            ilqr: IlqrConfig {
                horizon: i.horizon.unwrap_or(di.horizon),
                terminal_weight: i.terminal_weight.unwrap_or(di.terminal_weight),
                input_weight: i.input_weight.unwrap_or(di.input_weight),
                state_weight: i.state_weight.unwrap_or(di.state_weight),
                barrier_q1: i.barrier_q1.unwrap_or(di.barrier_q1),
                barrier_q2: i.barrier_q2.unwrap_or(di.barrier_q2),
                input_barrier_q2: i.input_barrier_q2.unwrap_or(di.input_barrier_q2),
                max_iterations: i.max_iterations.unwrap_or(di.max_iterations),
                convergence_tol: i.convergence_tol.unwrap_or(di.convergence_tol),
                reg_init: i.reg_init.unwrap_or(di.reg_init),
                reg_max: i.reg_max.unwrap_or(di.reg_max),
            },
        };

        let dinit = InitialTrajectoryConfig::default();
        let init = self.initial.clone().unwrap_or_default();
        let initial = InitialTrajectoryConfig {
            cruise_speeds: init.cruise_speeds.unwrap_or(dinit.cruise_speeds),
            lateral_offsets: init.lateral_offsets.unwrap_or(dinit.lateral_offsets),
            ramp_length: init.ramp_length.unwrap_or(dinit.ramp_length),
        };

        let obstacles = self.obstacles.iter().enumerate().map(|(k, o)| o.resolve(k)).collect::<Result<_, _>>()?;

        Ok(Scenario {
            name: self.name.clone().unwrap_or_else(|| "unnamed".into()),
            x0: self.x0.unwrap().into(),
            x_target: self.x_target.unwrap().into(),
            epsilon: self.epsilon.unwrap_or(2.0),
            model,
            obstacles,
            num_iterations: self.num_iterations.unwrap(),
            max_steps_per_iteration: self.max_steps_per_iteration.unwrap_or(200),
            controller,
            initial,
            seed: self.seed.unwrap_or(0),
        })
    }
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        let c = &s.controller;
        let i = &c.ilqr;
        Self {
            format_version: Some(SCENARIO_FORMAT_VERSION),
            name: Some(s.name.clone()),
            num_iterations: Some(s.num_iterations),
            max_steps_per_iteration: Some(s.max_steps_per_iteration),
            epsilon: Some(s.epsilon),
            seed: Some(s.seed),
            x0: Some(s.x0.into()),
            x_target: Some(s.x_target.into()),
            model: Some(ModelFile { dt: Some(s.model.dt), lf: Some(s.model.lf), lr: Some(s.model.lr) }),
            controller: Some(ControllerFile {
                k: Some(c.k),
                r_max: Some(c.r_max),
                d0: Some(c.d0.0),
                d1: Some(c.d1),
                w_h: Some(c.w_h),
                w_d: Some(c.w_d),
                history_window: Some(c.history_window),
                ilqr: Some(IlqrFile {
                    horizon: Some(i.horizon),
                    terminal_weight: Some(i.terminal_weight),
                    input_weight: Some(i.input_weight),
                    state_weight: Some(i.state_weight),
                    barrier_q1: Some(i.barrier_q1),
                    barrier_q2: Some(i.barrier_q2),
                    input_barrier_q2: Some(i.input_barrier_q2),
                    max_iterations: Some(i.max_iterations),
                    convergence_tol: Some(i.convergence_tol),
                    reg_init: Some(i.reg_init),
                    reg_max: Some(i.reg_max),
                }),
            }),
            initial: Some(InitialFile {
                cruise_speeds: Some(s.initial.cruise_speeds.clone()),
                lateral_offsets: Some(s.initial.lateral_offsets.clone()),
                ramp_length: Some(s.initial.ramp_length),
            }),
            obstacles: s.obstacles.iter().map(ObstacleFile::from).collect(),
        }
    }
}

/// Scenarios shipped with the crate.
pub mod bundled {
    pub const NO_OBSTACLE: &str = include_str!("../scenarios/no_obstacle.scn");
    pub const STATIC_ELLIPSE: &str = include_str!("../scenarios/static_ellipse.scn");
    pub const ADDED_STATIC_CIRCLE: &str = include_str!("../scenarios/added_static_circle.scn");
    pub const MOVING_CIRCLE: &str = include_str!("../scenarios/moving_circle.scn");

    pub const ALL: [(&str, &str); 4] = [
        ("no_obstacle", NO_OBSTACLE),
        ("static_ellipse", STATIC_ELLIPSE),
        ("added_static_circle", ADDED_STATIC_CIRCLE),
        ("moving_circle", MOVING_CIRCLE),
    ];

    /// Source text of a bundled scenario by name (with or without `.scn`).
    pub fn source(name: &str) -> Option<&'static str> {
        let stem = name.strip_suffix(".scn").unwrap_or(name);
        ALL.iter().find(|(n, _)| *n == stem).map(|(_, s)| *s)
    }

    pub fn load(name: &str) -> Option<super::Scenario> {
        source(name).map(|s| super::Scenario::from_toml_str(s).expect("bundled scenarios are valid"))
    }
}
