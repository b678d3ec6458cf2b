use std::path::PathBuf;
use std::sync::Arc;

use qrdesign::search::GAConfig;
use qrdesign::{Basis, CubicBSpline, DesignSpace, ScenarioConfig, SigmaShape, VarianceFunction};
use serde::Deserialize;
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Loss,
    Minbias,
    Uniform,
    Straightline,
    Quadratic,
    Compound,
    Ga,
    Saturated,
    Scenario,
}

impl Task {
    pub const ALL: [&'static str; 9] =
        ["loss", "minbias", "uniform", "straightline", "quadratic", "compound", "ga", "saturated", "scenario"];

    pub fn name(self) -> &'static str {
        Self::ALL[self as usize]
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SpaceSpec {
    /// Equally spaced points, both ends included.
    Grid { lo: f64, hi: f64, size: usize },
    /// Explicit abscissae.
    Points { points: Vec<f64> },
    /// An interval, integrated on a node grid.
    Continuous {
        lo: f64,
        hi: f64,
        #[serde(default = "default_nodes")]
        nodes: usize,
    },
}

fn default_nodes() -> usize {
    2001
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BasisSpec {
    Polynomial {
        degree: usize,
    },
    Spline {
        #[serde(default)]
        preset: Option<String>,
        #[serde(default)]
        lo: Option<f64>,
        #[serde(default)]
        hi: Option<f64>,
        #[serde(default)]
        internal: Option<Vec<f64>>,
    },
}

/// A design read from disk, for the `loss` task.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub csv: PathBuf,
    #[serde(default)]
    pub continuous: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    #[serde(default)]
    pub space: Option<SpaceSpec>,
    #[serde(default)]
    pub basis: Option<BasisSpec>,
    #[serde(default)]
    pub sigma: Option<SigmaShape>,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// When set, replaces the seeds of every randomized stage.
    #[serde(default)]
    pub rng_seed: Option<u64>,
    #[serde(default = "default_true")]
    pub symmetric: bool,
    #[serde(default)]
    pub design: Option<DesignFile>,
    #[serde(default = "default_nu_grid")]
    pub nu_grid: Vec<f64>,
    #[serde(default)]
    pub ga: GAConfig,
    #[serde(default)]
    pub scenario: ScenarioConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_true() -> bool {
    true
}

fn default_nu_grid() -> Vec<f64> {
    (0..=20).map(|k| k as f64 / 20.0).collect()
}

fn invalid(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Config { field: field.to_string(), reason: reason.into() }
}

/// Applies a `key.path=value` override. The value is read as JSON when it
/// parses, otherwise as a bare string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| invalid("--set", format!("expected key=value, got `{assignment}`")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(invalid("--set", format!("malformed key `{key}`")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let obj = match node {
            Value::Object(map) => map,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().expect("just created")
            }
            _ => return Err(invalid(&parts[..depth].join("."), "is not an object and cannot take sub-keys")),
        };
        if depth + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("key has at least one part")
}

pub fn parse(mut root: Value, overrides: &[String]) -> Result<RunConfig, CliError> {
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    let mut cfg: RunConfig = serde_path_to_error::deserialize(root).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "config".to_string() } else { path };
        invalid(&field, e.into_inner().to_string())
    })?;
    if let Some(seed) = cfg.rng_seed {
        cfg.ga.rng_seed = seed;
        cfg.scenario.rng_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        if let Some(nu) = self.nu {
            if !(0.0..=1.0).contains(&nu) {
                return Err(invalid("nu", format!("must lie in [0, 1], got {nu}")));
            }
        }
        if let Some(bad) = self.nu_grid.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid("nu_grid", format!("entries must lie in [0, 1], got {bad}")));
        }
        if self.n == Some(0) {
            return Err(invalid("n", "must be at least 1"));
        }
        let needs_nu = matches!(self.task, Task::Straightline | Task::Quadratic | Task::Compound | Task::Ga);
        if needs_nu && self.nu.is_none() {
            return Err(invalid("nu", format!("required by task `{}`", self.task.name())));
        }
        if matches!(self.task, Task::Compound | Task::Ga) && self.n.is_none() {
            return Err(invalid("n", format!("required by task `{}`", self.task.name())));
        }
        if self.task == Task::Loss && self.design.is_none() {
            return Err(invalid("design", "the loss task needs {\"csv\": path}"));
        }
        if self.task != Task::Scenario && self.space.is_none() && self.task != Task::Loss {
            return Err(invalid("space", format!("required by task `{}`", self.task.name())));
        }
        if self.task == Task::Scenario && self.basis.is_some() {
            return Err(invalid("basis", "the scenario task fits on `scenario.fit_knots`"));
        }
        self.ga.validate().map_err(|e| lib_field("ga", e))?;
        if self.task == Task::Scenario {
            self.scenario.validate().map_err(|e| lib_field("scenario", e))?;
        }
        Ok(())
    }

    /// The design space; the scenario task defaults to the case-study grid.
    pub fn space(&self) -> Result<Arc<DesignSpace>, CliError> {
        let built = match &self.space {
            Some(SpaceSpec::Grid { lo, hi, size }) => DesignSpace::discrete_grid(*lo, *hi, *size),
            Some(SpaceSpec::Points { points }) => DesignSpace::discrete(points.clone()),
            Some(SpaceSpec::Continuous { lo, hi, nodes }) => DesignSpace::continuous(*lo, *hi, *nodes),
            None => DesignSpace::discrete_grid(0.0, 18.0, 1801),
        };
        built.map(Arc::new).map_err(|e| invalid("space", e.to_string()))
    }

    /// Straight line unless a basis is given; the scenario task fits on its
    /// configured knots.
    pub fn basis(&self) -> Result<Basis, CliError> {
        match &self.basis {
            None if self.task == Task::Scenario => self.scenario_spline().map(Basis::CubicBSpline),
            None => Ok(Basis::straight_line()),
            Some(BasisSpec::Polynomial { degree }) => Ok(Basis::polynomial(*degree)),
            Some(BasisSpec::Spline { .. }) => self.spline().map(Basis::CubicBSpline),
        }
    }

    pub fn spline(&self) -> Result<CubicBSpline, CliError> {
        match &self.basis {
            Some(BasisSpec::Spline { preset: Some(name), lo: None, hi: None, internal: None }) => {
                CubicBSpline::from_preset(name).map_err(|e| invalid("basis.preset", e.to_string()))
            }
            Some(BasisSpec::Spline { preset: None, lo: Some(lo), hi: Some(hi), internal: Some(k) }) => {
                CubicBSpline::new(*lo, *hi, k.clone()).map_err(|e| invalid("basis", e.to_string()))
            }
            Some(BasisSpec::Spline { .. }) => {
                Err(invalid("basis", "a spline takes either `preset` or all of `lo`, `hi`, `internal`"))
            }
            None if self.task == Task::Scenario => self.scenario_spline(),
            _ => Err(invalid("basis", format!("task `{}` needs a spline basis", self.task.name()))),
        }
    }

    fn scenario_spline(&self) -> Result<CubicBSpline, CliError> {
        CubicBSpline::from_preset(&self.scenario.fit_knots).map_err(|e| invalid("scenario.fit_knots", e.to_string()))
    }

    /// Constant unless given; the scenario task uses its own preset.
    pub fn sigma(&self, space: &DesignSpace) -> Result<VarianceFunction, CliError> {
        let shape = match (self.sigma, self.task) {
            (Some(s), _) => s,
            (None, Task::Scenario) => self.scenario.sigma,
            (None, _) => SigmaShape::Constant,
        };
        VarianceFunction::normalized(shape, space).map_err(|e| invalid("sigma", e.to_string()))
    }

    pub fn seed(&self) -> u64 {
        self.rng_seed.unwrap_or(qrdesign::optim::DEFAULT_SEED)
    }

    pub fn nu_or_default(&self) -> f64 {
        self.nu.unwrap_or(0.5)
    }
}

fn lib_field(prefix: &str, e: qrdesign::DesignError) -> CliError {
    match e {
        qrdesign::DesignError::InvalidParameter { name, reason } => invalid(&format!("{prefix}.{name}"), reason),
        other => invalid(prefix, other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn override_creates_nested_keys() {
        let mut v = json!({"task": "uniform"});
        apply_override(&mut v, "ga.population_size=60").unwrap();
        apply_override(&mut v, "output=/tmp/x").unwrap();
        apply_override(&mut v, "space={\"kind\":\"grid\",\"lo\":0,\"hi\":1,\"size\":3}").unwrap();
        assert_eq!(v["ga"]["population_size"], json!(60));
        assert_eq!(v["output"], json!("/tmp/x"));
        assert_eq!(v["space"]["size"], json!(3));
    }

    #[test]
    fn override_into_scalar_is_rejected() {
        let mut v = json!({"nu": 0.5});
        assert!(apply_override(&mut v, "nu.x=1").is_err());
        assert!(apply_override(&mut v, "novalue").is_err());
    }

    #[test]
    fn type_errors_name_the_field() {
        let v = json!({"task": "uniform", "nu": "half", "space": {"kind": "grid", "lo": 0, "hi": 1, "size": 3}});
        match parse(v, &[]) {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "nu"),
            other => panic!("{other:?}"),
        }
        // tagged sections are buffered, so errors inside them name the section
        let v = json!({"task": "uniform", "space": {"kind": "grid", "lo": 0, "hi": 1, "size": "many"}});
        match parse(v, &[]) {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "space"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seed_override_reaches_sub_configs() {
        let v = json!({"task": "uniform", "rng_seed": 7, "space": {"kind": "grid", "lo": 0, "hi": 1, "size": 3}});
        let cfg = parse(v, &[]).unwrap();
        assert_eq!((cfg.ga.rng_seed, cfg.scenario.rng_seed, cfg.seed()), (7, 7, 7));
    }

    #[test]
    fn missing_nu_is_reported() {
        let v = json!({"task": "compound", "n": 4, "space": {"kind": "grid", "lo": -1, "hi": 1, "size": 5}});
        match parse(v, &[]) {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "nu"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn task_names_follow_declaration_order() {
        assert_eq!(Task::Scenario.name(), "scenario");
        assert_eq!(Task::Loss.name(), "loss");
    }
}
