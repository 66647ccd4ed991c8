//! Run configuration: JSON merged over defaults, `NF_*` environment
//! overrides, and a schema walk that reports every violation with its path.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::experiments::Instance;
use crate::gainfield::KernelSign;
use crate::grid::{Axis, Boundary, FieldState, Grid, GridError, Quadrature, QuadratureRule};
use crate::model::{FiringRate, LearningKernel, ModelError, ModelSpec, Mode, SynapticKernel};
use crate::solver::SolverConfig;
use crate::stationary::StationaryMethod;

pub const ENV_PREFIX: &str = "NF_";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SchemaViolation {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed JSON: {0}")]
    Parse(String),
    #[error("{} schema violation(s):\n{}", .0.len(), .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Schema(Vec<SchemaViolation>),
}

impl ConfigError {
    pub fn violations(&self) -> &[SchemaViolation] {
        match self {
            ConfigError::Schema(v) => v,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub boundary: Boundary,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { axes: vec![Axis::new(-10.0, 10.0, 201)], boundary: Boundary::Compact }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid, GridError> {
        Grid::new(self.axes.clone(), self.boundary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `amplitude exp(-|x - center|^2 / width^2)`
    Gaussian { amplitude: f64, width: f64, center: Vec<f64> },
    Constant { value: f64 },
    /// `value` where the first coordinate is below `split`, zero elsewhere.
    Step { value: f64, split: f64 },
    Tabulated { values: Vec<f64> },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Gaussian { amplitude: 1.0, width: 1.0, center: vec![0.0] }
    }
}

impl InitialCondition {
    pub fn sample(&self, grid: &Grid) -> Result<FieldState, String> {
        let values = match self {
            InitialCondition::Gaussian { amplitude, width, center } => {
                if center.len() != grid.dim() {
                    return Err(format!("center has {} coordinates, grid is {}-D", center.len(), grid.dim()));
                }
                grid.sample(|x| {
                    let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                    amplitude * (-r2 / (width * width)).exp()
                })
            }
            InitialCondition::Constant { value } => vec![*value; grid.len()],
            InitialCondition::Step { value, split } => grid.sample(|x| if x[0] < *split { *value } else { 0.0 }),
            InitialCondition::Tabulated { values } => {
                if values.len() != grid.len() {
                    return Err(format!("{} values for {} grid nodes", values.len(), grid.len()));
                }
                values.clone()
            }
        };
        Ok(FieldState::new(values, 0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StationaryConfig {
    pub method: StationaryMethod,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub flow_dt: f64,
    pub flow_t_max: f64,
    pub settle_tol: f64,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        StationaryConfig {
            method: StationaryMethod::DampedFp,
            damping: crate::stationary::DEFAULT_DAMPING,
            tol: 1e-12,
            max_iter: 10_000,
            flow_dt: 0.5,
            flow_t_max: 500.0,
            settle_tol: 1e-11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainfieldConfig {
    pub sign: KernelSign,
    /// Defaults to `1 / lambda`.
    pub k_pre: Option<f64>,
    /// Leading eigenpairs in the gain field; all when absent.
    pub rank: Option<usize>,
    pub lambda: f64,
    /// Square-well half-width for the Schrödinger cross-check.
    pub half_width: f64,
    /// Well height for the standalone eigensolver.
    pub height: f64,
    /// One-dimensional box for the Schrödinger problems.
    pub box_axis: Axis,
    pub n_states: usize,
    pub bracket: Option<(f64, f64)>,
}

impl Default for GainfieldConfig {
    fn default() -> Self {
        GainfieldConfig {
            sign: KernelSign::Plus,
            k_pre: None,
            rank: None,
            lambda: 1.0,
            half_width: 1.0,
            height: 2.0,
            box_axis: Axis::new(-20.0, 20.0, 2000),
            n_states: 3,
            bracket: None,
        }
    }
}

impl GainfieldConfig {
    pub fn k_pre(&self) -> f64 {
        self.k_pre.unwrap_or(1.0 / self.lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub gammas: Vec<f64>,
    /// Plasticity-limit runs start from `u0 + initial_drift gamma delta`.
    pub initial_drift: f64,
    pub eps: Vec<f64>,
    /// Segment length for the dependence and contraction studies; the
    /// default-safety length when absent.
    pub rho: Option<f64>,
    pub pairs: usize,
    pub steps: usize,
    pub contraction_slack: f64,
    /// Initial data for the L¹ study.
    pub data: Vec<InitialCondition>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            gammas: vec![0.4, 0.2, 0.1, 0.05, 0.025],
            initial_drift: 0.0,
            eps: vec![0.2, 0.1, 0.05],
            rho: None,
            pairs: 200,
            steps: 10,
            contraction_slack: 0.01,
            data: vec![
                InitialCondition::Constant { value: 0.0 },
                InitialCondition::Step { value: 1.0, split: 0.0 },
            ],
        }
    }
}

pub fn default_model() -> ModelSpec {
    ModelSpec {
        kernel: SynapticKernel::exponential(0.5, 1.0),
        firing: FiringRate::sigmoid(4.0, 0.3),
        learning: LearningKernel::default(),
        gamma: 0.5,
        mode: Mode::WellPosed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub quadrature: QuadratureRule,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub stationary: StationaryConfig,
    #[serde(default)]
    pub gainfield: GainfieldConfig,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(default)]
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: default_model(),
            grid: GridConfig::default(),
            quadrature: QuadratureRule::default(),
            solver: SolverConfig::default(),
            initial: InitialCondition::default(),
            stationary: StationaryConfig::default(),
            gainfield: GainfieldConfig::default(),
            study: StudyConfig::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn instance(&self) -> Result<Instance, GridError> {
        Instance::new(self.model.clone(), self.grid.build()?, self.quadrature)
    }

    pub fn initial_state(&self, grid: &Grid) -> Result<FieldState, String> {
        self.initial.sample(grid)
    }

    /// Cross-field checks that need typed values.
    fn semantic_violations(&self) -> Vec<SchemaViolation> {
        let mut out = Vec::new();
        let mut push = |path: &str, message: String| out.push(SchemaViolation { path: path.into(), message });
        if let Err(errs) = self.model.validate() {
            for e in errs {
                match e {
                    ModelError::Invalid { field, message } => push(&format!("model.{field}"), message),
                    other => push("model", other.to_string()),
                }
            }
        }
        match self.grid.build() {
            Ok(grid) => {
                if let Err(e) = Quadrature::new(&grid, self.quadrature) {
                    push("quadrature", e.to_string());
                }
                if let Err(e) = self.initial.sample(&grid) {
                    push("initial", e);
                }
                for (k, d) in self.study.data.iter().enumerate() {
                    if let Err(e) = d.sample(&grid) {
                        push(&format!("study.data[{k}]"), e);
                    }
                }
                if let SynapticKernel::Tabulated(_) = self.model.kernel {
                    if grid.points().any(|x| self.model.kernel.eval(x, x).is_err()) {
                        push("model.kernel", "tabulated kernel does not cover the grid nodes".into());
                    }
                }
            }
            Err(e) => push("grid", e.to_string()),
        }
        if let Err(e) = self.solver.validate() {
            push("solver", e.to_string());
        }
        if !self.study.gammas.windows(2).all(|w| w[0] > w[1]) {
            push("study.gammas", "must be strictly descending".into());
        }
        if let Some((lo, hi)) = self.gainfield.bracket {
            if !(lo < hi) {
                push("gainfield.bracket", format!("needs lo < hi, got [{lo}, {hi}]"));
            }
        }
        out
    }
}

/// Structural schema used for unknown-key, type and range checks.
#[derive(Debug, Clone)]
enum Schema {
    Num { min: Option<(f64, bool)>, max: Option<(f64, bool)>, int: bool },
    Str(&'static [&'static str]),
    Obj(Vec<(&'static str, Schema)>),
    Arr(Box<Schema>, usize),
    Pair(Box<Schema>),
    Opt(Box<Schema>),
    /// `{"kind": name, "params": {...}}`
    Tagged(Vec<(&'static str, Schema)>),
}

fn num() -> Schema {
    Schema::Num { min: None, max: None, int: false }
}
fn ge(v: f64) -> Schema {
    Schema::Num { min: Some((v, true)), max: None, int: false }
}
fn gt(v: f64) -> Schema {
    Schema::Num { min: Some((v, false)), max: None, int: false }
}
fn int_ge(v: f64) -> Schema {
    Schema::Num { min: Some((v, true)), max: None, int: true }
}
fn obj(fields: Vec<(&'static str, Schema)>) -> Schema {
    Schema::Obj(fields)
}
fn arr(s: Schema) -> Schema {
    Schema::Arr(Box::new(s), 0)
}
fn opt(s: Schema) -> Schema {
    Schema::Opt(Box::new(s))
}

fn axis_schema() -> Schema {
    obj(vec![("lo", num()), ("hi", num()), ("n", int_ge(2.0))])
}

fn initial_schema() -> Schema {
    Schema::Tagged(vec![
        ("gaussian", obj(vec![("amplitude", num()), ("width", gt(0.0)), ("center", arr(num()))])),
        ("constant", obj(vec![("value", num())])),
        ("step", obj(vec![("value", num()), ("split", num())])),
        ("tabulated", obj(vec![("values", arr(num()))])),
    ])
}

fn schema() -> Schema {
    let kernel = Schema::Tagged(vec![
        ("exponential", obj(vec![("amplitude", gt(0.0)), ("decay", ge(0.0))])),
        ("mexican-hat", obj(vec![("scale", gt(0.0))])),
        ("tabulated", obj(vec![("nodes", arr(arr(num()))), ("values", arr(arr(num())))])),
    ]);
    let firing = Schema::Tagged(vec![
        ("sigmoid", obj(vec![("slope", gt(0.0)), ("threshold", num())])),
        ("scaled-arctan", obj(vec![("scale", gt(0.0))])),
        ("linear", obj(vec![])),
        ("piecewise-linear-clamped", obj(vec![("slope", ge(0.0)), ("threshold", num()), ("ceiling", ge(0.0))])),
    ]);
    let learning = Schema::Tagged(vec![("gaussian", obj(vec![("width", gt(0.0))]))]);
    obj(vec![
        (
            "model",
            obj(vec![
                ("kernel", kernel),
                ("firing", firing),
                ("learning", learning),
                ("gamma", ge(0.0)),
                ("mode", Schema::Str(&["well-posed", "gain-field"])),
            ]),
        ),
        (
            "grid",
            obj(vec![
                ("axes", Schema::Arr(Box::new(axis_schema()), 1)),
                ("boundary", Schema::Str(&["compact", "periodic"])),
            ]),
        ),
        ("quadrature", Schema::Str(&["trapezoid", "simpson"])),
        (
            "solver",
            obj(vec![
                ("method", Schema::Str(&["picard", "exp-euler", "rk4"])),
                ("dt", gt(0.0)),
                ("segment_rho", opt(gt(0.0))),
                ("picard_tol", gt(0.0)),
                ("picard_max_iter", int_ge(1.0)),
                ("t_end", gt(0.0)),
            ]),
        ),
        ("initial", initial_schema()),
        (
            "stationary",
            obj(vec![
                ("method", Schema::Str(&["damped-fp", "flow"])),
                ("damping", Schema::Num { min: Some((0.0, false)), max: Some((1.0, true)), int: false }),
                ("tol", gt(0.0)),
                ("max_iter", int_ge(1.0)),
                ("flow_dt", gt(0.0)),
                ("flow_t_max", gt(0.0)),
                ("settle_tol", gt(0.0)),
            ]),
        ),
        (
            "gainfield",
            obj(vec![
                ("sign", Schema::Str(&["plus", "minus"])),
                ("k_pre", opt(gt(0.0))),
                ("rank", opt(int_ge(1.0))),
                ("lambda", gt(0.0)),
                ("half_width", gt(0.0)),
                ("height", ge(0.0)),
                ("box_axis", axis_schema()),
                ("n_states", int_ge(1.0)),
                ("bracket", opt(Schema::Pair(Box::new(num())))),
            ]),
        ),
        (
            "study",
            obj(vec![
                ("gammas", Schema::Arr(Box::new(ge(0.0)), 1)),
                ("initial_drift", num()),
                ("eps", Schema::Arr(Box::new(ge(0.0)), 1)),
                ("rho", opt(gt(0.0))),
                ("pairs", int_ge(1.0)),
                ("steps", int_ge(1.0)),
                ("contraction_slack", ge(0.0)),
                ("data", arr(initial_schema())),
            ]),
        ),
        ("seed", int_ge(0.0)),
    ])
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn walk(schema: &Schema, v: &Value, path: &str, out: &mut Vec<SchemaViolation>) {
    let mut bad = |m: String| out.push(SchemaViolation { path: path.to_string(), message: m });
    match schema {
        Schema::Num { min, max, int } => {
            let Some(x) = v.as_f64() else {
                bad(format!("expected a number, got {v}"));
                return;
            };
            if *int && !(v.is_u64() || (x.fract() == 0.0 && x >= 0.0)) {
                bad(format!("expected a non-negative integer, got {v}"));
                return;
            }
            if let Some((m, inclusive)) = min {
                if (*inclusive && x < *m) || (!inclusive && x <= *m) {
                    bad(format!("must be {} {m}, got {x}", if *inclusive { ">=" } else { ">" }));
                }
            }
            if let Some((m, inclusive)) = max {
                if (*inclusive && x > *m) || (!inclusive && x >= *m) {
                    bad(format!("must be {} {m}, got {x}", if *inclusive { "<=" } else { "<" }));
                }
            }
        }
        Schema::Str(allowed) => match v.as_str() {
            Some(s) if allowed.contains(&s) => {}
            _ => bad(format!("expected one of {allowed:?}, got {v}")),
        },
        Schema::Opt(inner) => {
            if !v.is_null() {
                walk(inner, v, path, out);
            }
        }
        Schema::Arr(inner, min_len) => match v.as_array() {
            Some(items) => {
                if items.len() < *min_len {
                    bad(format!("needs at least {min_len} entries"));
                }
                for (k, item) in items.iter().enumerate() {
                    walk(inner, item, &format!("{path}[{k}]"), out);
                }
            }
            None => bad(format!("expected an array, got {v}")),
        },
        Schema::Pair(inner) => match v.as_array() {
            Some(items) if items.len() == 2 => {
                for (k, item) in items.iter().enumerate() {
                    walk(inner, item, &format!("{path}[{k}]"), out);
                }
            }
            _ => bad(format!("expected a two-element array, got {v}")),
        },
        Schema::Obj(fields) => {
            let Some(map) = v.as_object() else {
                bad(format!("expected an object, got {v}"));
                return;
            };
            for (key, value) in map {
                match fields.iter().find(|(k, _)| k == key) {
                    Some((_, s)) => walk(s, value, &join(path, key), out),
                    None => out.push(SchemaViolation { path: join(path, key), message: "unknown key".into() }),
                }
            }
        }
        Schema::Tagged(variants) => {
            let Some(map) = v.as_object() else {
                bad(format!("expected an object with `kind` and `params`, got {v}"));
                return;
            };
            for key in map.keys() {
                if key != "kind" && key != "params" {
                    out.push(SchemaViolation { path: join(path, key), message: "unknown key".into() });
                }
            }
            let kind = map.get("kind").and_then(Value::as_str);
            match variants.iter().find(|(name, _)| Some(*name) == kind) {
                None => out.push(SchemaViolation {
                    path: join(path, "kind"),
                    message: format!(
                        "expected one of {:?}, got {}",
                        variants.iter().map(|(n, _)| *n).collect::<Vec<_>>(),
                        map.get("kind").cloned().unwrap_or(Value::Null)
                    ),
                }),
                Some((_, params)) => {
                    let p = map.get("params").cloned().unwrap_or_else(|| Value::Object(Map::new()));
                    walk(params, &p, &join(path, "params"), out);
                    if let (Schema::Obj(fields), Some(pm)) = (params, p.as_object()) {
                        for (k, _) in fields {
                            if !pm.contains_key(*k) {
                                out.push(SchemaViolation {
                                    path: join(&join(path, "params"), k),
                                    message: "missing".into(),
                                });
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Objects merge key by key; a tagged object whose `kind` changes is
/// replaced as a whole; everything else is replaced.
pub fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            let kind_changed = o.get("kind").is_some_and(|k| b.get("kind") != Some(k));
            if kind_changed {
                *b = o.clone();
                return;
            }
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

/// Leaf paths reachable through plain objects and tagged parameters, with
/// their environment names (`NF_` + path in upper case, `.` as `_`).
fn env_paths(schema: &Schema, path: &str, out: &mut Vec<(String, String)>) {
    match schema {
        Schema::Obj(fields) => {
            for (k, s) in fields {
                env_paths(s, &join(path, k), out);
            }
        }
        Schema::Tagged(variants) => {
            out.push((join(path, "kind"), String::new()));
            for (_, params) in variants {
                env_paths(params, &join(path, "params"), out);
            }
        }
        _ => out.push((path.to_string(), String::new())),
    }
    for entry in out.iter_mut() {
        if entry.1.is_empty() {
            entry.1 = format!("{ENV_PREFIX}{}", entry.0.replace('.', "_").to_uppercase());
        }
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        if !cur.is_object() {
            *cur = Value::Object(Map::new());
        }
        let map = cur.as_object_mut().unwrap();
        if k + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return;
        }
        cur = map.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
}

/// Applies overrides whose names match a known path. Values are parsed as
/// JSON, falling back to a plain string. Returns the applied paths.
pub fn apply_env_overrides<I>(root: &mut Value, vars: I) -> Vec<String>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut paths = Vec::new();
    env_paths(&schema(), "", &mut paths);
    paths.sort();
    paths.dedup();
    let mut applied = Vec::new();
    let vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    for (path, name) in &paths {
        if let Some((_, raw)) = vars.iter().find(|(k, _)| k == name) {
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
            set_path(root, path, value);
            applied.push(path.clone());
        }
    }
    applied
}

/// Validates a JSON document merged over the defaults.
pub fn config_from_value(user: &Value) -> Result<RunConfig, ConfigError> {
    if !user.is_object() {
        return Err(ConfigError::Schema(vec![SchemaViolation {
            path: String::new(),
            message: "configuration must be a JSON object".into(),
        }]));
    }
    let mut merged = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    merge(&mut merged, user);
    let mut violations = Vec::new();
    walk(&schema(), &merged, "", &mut violations);
    if !violations.is_empty() {
        return Err(ConfigError::Schema(violations));
    }
    let cfg: RunConfig = serde_json::from_value(merged)
        .map_err(|e| ConfigError::Schema(vec![SchemaViolation { path: String::new(), message: e.to_string() }]))?;
    let semantic = cfg.semantic_violations();
    if semantic.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Schema(semantic))
    }
}

pub fn parse_config_str<I>(text: &str, env: I) -> Result<RunConfig, ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    apply_env_overrides(&mut value, env);
    config_from_value(&value)
}

/// Reads, merges and validates a configuration file, applying `NF_*`
/// variables from the process environment.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_config_str(&text, std::env::vars())
}
