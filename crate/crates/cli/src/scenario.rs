//! Scenario files: loading, reference resolution and validation.

use std::fmt;
use std::path::{Path, PathBuf};

use motforge::measures::{convex_order_leq, Coupling, DiscreteMeasure, SupportSet};
use motforge::motlp::{Sense, ORDER_TOL};
use motforge::pipelines::Instance;
use motforge::sepsim::{PathFunctional, Sigma, StopGo, StoppedPath};
use motforge::transforms::{Case, TransformSpec};
use motforge::CostFunction;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// Nesting limit for `{"$ref": ...}` chains.
const MAX_REF_DEPTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    MotSolve,
    MonotoneCheck,
    TransformApply,
    TransformClassify,
    SepFit,
    SepCompare,
    StopGo,
    SymmetrySuite,
}

impl Kind {
    pub const ALL: [Kind; 8] = [
        Kind::MotSolve,
        Kind::MonotoneCheck,
        Kind::TransformApply,
        Kind::TransformClassify,
        Kind::SepFit,
        Kind::SepCompare,
        Kind::StopGo,
        Kind::SymmetrySuite,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Kind::MotSolve => "mot_solve",
            Kind::MonotoneCheck => "monotone_check",
            Kind::TransformApply => "transform_apply",
            Kind::TransformClassify => "transform_classify",
            Kind::SepFit => "sep_fit",
            Kind::SepCompare => "sep_compare",
            Kind::StopGo => "stop_go",
            Kind::SymmetrySuite => "symmetry_suite",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.tag() == tag)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON at line {line}, column {column}: {message}")]
    Syntax {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message} (at {pointer})")]
    Schema {
        path: PathBuf,
        pointer: String,
        message: String,
    },
    #[error("{path}: marginals at {pointer} are not in convex order, witness x = {witness:?}: {detail}")]
    ConvexOrder {
        path: PathBuf,
        pointer: String,
        witness: Option<f64>,
        detail: String,
    },
}

impl LoadError {
    fn schema(path: &Path, pointer: impl Into<String>, message: impl Into<String>) -> Self {
        LoadError::Schema {
            path: path.to_path_buf(),
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    /// Machine-readable form for the failure list.
    pub fn to_json(&self) -> Value {
        match self {
            LoadError::Io { path, source } => json!({
                "error": "io", "file": path, "message": source.to_string(),
            }),
            LoadError::Syntax { path, line, column, message } => json!({
                "error": "syntax", "file": path, "line": line, "column": column, "message": message,
            }),
            LoadError::Schema { path, pointer, message } => json!({
                "error": "schema", "file": path, "pointer": pointer, "message": message,
            }),
            LoadError::ConvexOrder { path, pointer, witness, detail } => json!({
                "error": "convex_order", "file": path, "pointer": pointer, "witness": witness, "message": detail,
            }),
        }
    }
}

fn tol9() -> f64 {
    1e-9
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectValue {
    pub value: f64,
    #[serde(default = "tol9")]
    pub tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotSolveSpec {
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
    pub cost: CostFunction,
    #[serde(default)]
    pub sense: Sense,
    #[serde(default)]
    pub tiebreak: Option<CostFunction>,
    #[serde(default)]
    pub expect: Option<ExpectValue>,
}

fn default_max_support() -> usize {
    3
}

fn default_trials() -> usize {
    200
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonotoneCheckSpec {
    pub support: SupportSet,
    pub cost: CostFunction,
    #[serde(default = "default_max_support")]
    pub max_support: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub expect_monotone: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformApplySpec {
    pub transform: TransformSpec,
    pub coupling: Coupling,
    #[serde(default)]
    pub cost: Option<CostFunction>,
    #[serde(default = "tol9")]
    pub tol: f64,
    #[serde(default)]
    pub expect_martingale: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformClassifySpec {
    #[serde(default)]
    pub transform: Option<TransformSpec>,
    /// Index into the built-in nonconforming corpus.
    #[serde(default)]
    pub corpus: Option<usize>,
    /// Hide the declared variant behind opaque maps.
    #[serde(default)]
    pub black_box: bool,
    pub x_grid: Vec<f64>,
    pub y_grid: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub expect_case: Option<Case>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitShape {
    Right,
    Inner,
    Outer,
}

fn default_margin() -> f64 {
    0.5
}

fn default_sweeps() -> usize {
    200
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SepFitSpec {
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
    pub delta: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    pub barrier: FitShape,
    #[serde(default = "default_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "yes")]
    pub exclude_time_zero: bool,
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Largest acceptable W1 misfit; defaults to `2·delta`.
    #[serde(default)]
    pub max_w1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OneSided {
    #[default]
    Right,
    Left,
}

fn default_epsilon_steps() -> f64 {
    4.0
}

fn three() -> f64 {
    3.0
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareExpect {
    /// Fractions must not rise by more than `tol_se` combined standard errors.
    #[serde(default)]
    pub non_increasing: bool,
    #[serde(default)]
    pub max_final: Option<f64>,
    #[serde(default)]
    pub min_all: Option<f64>,
    #[serde(default = "three")]
    pub tol_se: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SepCompareSpec {
    /// Fixed start law, snapped to each grid.
    #[serde(default)]
    pub mu: Option<DiscreteMeasure>,
    /// Alternative start law: uniform on the grid points of `[lo, hi]` at each step.
    #[serde(default)]
    pub start_grid: Option<[f64; 2]>,
    /// Knots `[y, ψ(y)]` of a piecewise-linear threshold, constant beyond the ends.
    pub psi: Vec<[f64; 2]>,
    #[serde(default)]
    pub barrier: OneSided,
    /// Grid range `[lo, hi]`.
    pub extent: [f64; 2],
    pub deltas: Vec<f64>,
    pub n_paths: usize,
    /// Stopping positions closer than this many steps count as equal.
    #[serde(default = "default_epsilon_steps")]
    pub epsilon_steps: f64,
    #[serde(default)]
    pub exclude_time_zero: bool,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub expect: Option<CompareExpect>,
}

fn default_samples() -> usize {
    10_000
}

fn default_sg_delta() -> f64 {
    0.05
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopGoSpec {
    pub f: StoppedPath,
    pub g: StoppedPath,
    pub gamma: PathFunctional,
    #[serde(default)]
    pub gamma2: Option<PathFunctional>,
    pub sigma: Sigma,
    #[serde(default = "default_sg_delta")]
    pub delta: f64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub expect_verdict: Option<StopGo>,
}

fn default_max_mu() -> usize {
    6
}

fn default_max_nu() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomInstances {
    pub count: usize,
    #[serde(default = "default_max_mu")]
    pub max_mu: usize,
    #[serde(default = "default_max_nu")]
    pub max_nu: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetrySuiteSpec {
    pub transform: TransformSpec,
    #[serde(default)]
    pub instances: Vec<Instance>,
    #[serde(default)]
    pub random: Option<RandomInstances>,
    #[serde(default = "tol9")]
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub enum Spec {
    MotSolve(MotSolveSpec),
    MonotoneCheck(MonotoneCheckSpec),
    TransformApply(TransformApplySpec),
    TransformClassify(TransformClassifySpec),
    SepFit(SepFitSpec),
    SepCompare(SepCompareSpec),
    StopGo(StopGoSpec),
    SymmetrySuite(SymmetrySuiteSpec),
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub kind: Kind,
    pub seed: Option<u64>,
    pub source: PathBuf,
    pub spec: Spec,
}

impl Scenario {
    /// Seed of a stochastic scenario; validation guarantees it is present.
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

fn read_json(path: &Path) -> Result<Value, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| LoadError::Syntax {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn push_pointer(base: &str, token: &str) -> String {
    format!("{base}/{}", token.replace('~', "~0").replace('/', "~1"))
}

/// Replaces every `{"$ref": "file.json"}` object with the parsed file,
/// resolved relative to the directory of the file that mentions it.
fn resolve_refs(v: &mut Value, dir: &Path, root: &Path, pointer: &str, depth: usize) -> Result<(), LoadError> {
    match v {
        Value::Object(map) if map.contains_key("$ref") => {
            let target = match (map.len(), map.get("$ref")) {
                (1, Some(Value::String(s))) => dir.join(s),
                _ => {
                    return Err(LoadError::schema(
                        root,
                        pointer,
                        "a reference must be an object with a single string \"$ref\"",
                    ))
                }
            };
            if depth >= MAX_REF_DEPTH {
                return Err(LoadError::schema(root, pointer, "references nested too deeply"));
            }
            let mut inner = read_json(&target)?;
            let sub = target.parent().unwrap_or(Path::new(".")).to_path_buf();
            resolve_refs(&mut inner, &sub, root, pointer, depth + 1)?;
            *v = inner;
        }
        Value::Object(map) => {
            for (k, child) in map.iter_mut() {
                resolve_refs(child, dir, root, &push_pointer(pointer, k), depth)?;
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter_mut().enumerate() {
                resolve_refs(child, dir, root, &format!("{pointer}/{i}"), depth)?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// Checks every `atoms` and `entries` list for well-formed tuples with finite
/// coordinates and nonnegative mass, so that errors point at the bad number.
fn check_mass_lists(v: &Value, root: &Path, pointer: &str) -> Result<(), LoadError> {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let here = push_pointer(pointer, k);
                let arity = match k.as_str() {
                    "atoms" => Some(2),
                    "entries" => Some(3),
                    _ => None,
                };
                match (arity, child) {
                    (Some(n), Value::Array(items)) => check_tuples(items, n, root, &here)?,
                    _ => check_mass_lists(child, root, &here)?,
                }
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                check_mass_lists(child, root, &format!("{pointer}/{i}"))?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn check_tuples(items: &[Value], n: usize, root: &Path, pointer: &str) -> Result<(), LoadError> {
    for (i, item) in items.iter().enumerate() {
        let at = format!("{pointer}/{i}");
        let Some(t) = item.as_array().filter(|t| t.len() == n) else {
            return Err(LoadError::schema(root, at, format!("expected an array of {n} numbers")));
        };
        for (j, c) in t.iter().enumerate() {
            let at = format!("{at}/{j}");
            let Some(x) = c.as_f64() else {
                return Err(LoadError::schema(root, at, "expected a number"));
            };
            if j == n - 1 && x < 0.0 {
                return Err(LoadError::schema(root, at, format!("negative mass {x}")));
            }
        }
    }
    Ok(())
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out = push_pointer(&out, key),
            Segment::Enum { variant } => out = push_pointer(&out, variant),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    out
}

fn typed<T: DeserializeOwned>(v: Value, root: &Path) -> Result<T, LoadError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let pointer = pointer_of(e.path());
        LoadError::schema(root, pointer, e.into_inner().to_string())
    })
}

fn require_order(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    root: &Path,
    pointer: &str,
) -> Result<(), LoadError> {
    let bad = |message: String| LoadError::schema(root, pointer, message);
    if !mu.is_probability(1e-9) || !nu.is_probability(1e-9) {
        return Err(bad(format!(
            "marginals must be probability measures, got masses {} and {}",
            mu.total_mass(),
            nu.total_mass()
        )));
    }
    let verdict = convex_order_leq(mu, nu, ORDER_TOL).map_err(|e| bad(e.to_string()))?;
    if verdict.holds {
        return Ok(());
    }
    Err(LoadError::ConvexOrder {
        path: root.to_path_buf(),
        pointer: pointer.into(),
        witness: verdict.witness,
        detail: verdict.failure.map(|f| format!("{f:?}")).unwrap_or_default(),
    })
}

fn positive(x: f64, root: &Path, pointer: &str) -> Result<(), LoadError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(LoadError::schema(root, pointer, format!("must be positive and finite, got {x}")))
    }
}

fn is_stochastic(spec: &Spec) -> bool {
    match spec {
        Spec::MonotoneCheck(_) | Spec::TransformClassify(_) | Spec::SepCompare(_) | Spec::StopGo(_) => true,
        Spec::SymmetrySuite(s) => s.random.is_some(),
        Spec::MotSolve(_) | Spec::TransformApply(_) | Spec::SepFit(_) => false,
    }
}

fn validate(spec: &Spec, root: &Path) -> Result<(), LoadError> {
    match spec {
        Spec::MotSolve(s) => require_order(&s.mu, &s.nu, root, "/nu"),
        Spec::SepFit(s) => {
            positive(s.delta, root, "/delta")?;
            if !(s.margin >= 0.0) {
                return Err(LoadError::schema(root, "/margin", "must be nonnegative"));
            }
            require_order(&s.mu, &s.nu, root, "/nu")
        }
        Spec::SepCompare(s) => {
            match (&s.mu, s.start_grid) {
                (Some(_), None) => {}
                (None, Some([lo, hi])) if lo <= hi => {}
                (None, Some(_)) => return Err(LoadError::schema(root, "/start_grid", "needs lo <= hi")),
                _ => return Err(LoadError::schema(root, "", "give exactly one of \"mu\" and \"start_grid\"")),
            }
            if s.psi.is_empty() {
                return Err(LoadError::schema(root, "/psi", "needs at least one knot"));
            }
            if s.psi.windows(2).any(|w| !(w[0][0] < w[1][0])) {
                return Err(LoadError::schema(root, "/psi", "knot positions must increase strictly"));
            }
            if !(s.extent[0] < s.extent[1]) {
                return Err(LoadError::schema(root, "/extent", "needs lo < hi"));
            }
            if s.deltas.is_empty() {
                return Err(LoadError::schema(root, "/deltas", "needs at least one step"));
            }
            for (i, &d) in s.deltas.iter().enumerate() {
                positive(d, root, &format!("/deltas/{i}"))?;
            }
            if s.n_paths == 0 {
                return Err(LoadError::schema(root, "/n_paths", "must be at least 1"));
            }
            Ok(())
        }
        Spec::StopGo(s) => positive(s.delta, root, "/delta"),
        Spec::TransformClassify(s) => {
            match (&s.transform, s.corpus) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => return Err(LoadError::schema(root, "", "give exactly one of \"transform\" and \"corpus\"")),
            }
            if s.x_grid.len() < 2 {
                return Err(LoadError::schema(root, "/x_grid", "needs at least two points"));
            }
            if s.y_grid.len() < 3 {
                return Err(LoadError::schema(root, "/y_grid", "needs at least three points"));
            }
            Ok(())
        }
        Spec::SymmetrySuite(s) => {
            if s.instances.is_empty() && s.random.is_none() {
                return Err(LoadError::schema(root, "/instances", "no instances and no \"random\" block"));
            }
            for (i, inst) in s.instances.iter().enumerate() {
                require_order(&inst.mu, &inst.nu, root, &format!("/instances/{i}/nu"))?;
            }
            Ok(())
        }
        Spec::MonotoneCheck(_) | Spec::TransformApply(_) => Ok(()),
    }
}

/// Parses an already-read scenario object. `expected` pins the kind when the
/// scenario comes from a kind-specific subcommand; `seed` overrides or fills
/// the file's seed per `seed_overrides`.
pub fn parse_scenario(
    mut value: Value,
    source: &Path,
    default_name: &str,
    expected: Option<Kind>,
    seed: Option<u64>,
    seed_overrides: bool,
) -> Result<Scenario, LoadError> {
    let dir = source.parent().unwrap_or(Path::new(".")).to_path_buf();
    resolve_refs(&mut value, &dir, source, "", 0)?;
    let Value::Object(mut map) = value else {
        return Err(LoadError::schema(source, "", "scenario must be a JSON object"));
    };
    let kind = match (map.remove("kind"), expected) {
        (None, Some(k)) => k,
        (None, None) => return Err(LoadError::schema(source, "/kind", "missing scenario kind")),
        (Some(Value::String(tag)), expected) => {
            let kind = Kind::from_tag(&tag)
                .ok_or_else(|| LoadError::schema(source, "/kind", format!("unknown scenario kind \"{tag}\"")))?;
            if let Some(e) = expected.filter(|&e| e != kind) {
                return Err(LoadError::schema(
                    source,
                    "/kind",
                    format!("file describes a {kind} scenario, not {e}"),
                ));
            }
            kind
        }
        (Some(_), _) => return Err(LoadError::schema(source, "/kind", "kind must be a string")),
    };
    let name = match map.remove("name") {
        None => default_name.to_string(),
        Some(Value::String(s)) if valid_name(&s) => s,
        Some(_) => {
            return Err(LoadError::schema(
                source,
                "/name",
                "name must be a nonempty string of letters, digits, '-', '_' or '.'",
            ))
        }
    };
    let file_seed = match map.remove("seed") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_u64().ok_or_else(|| LoadError::schema(source, "/seed", "seed must be an unsigned integer"))?),
    };
    let seed = if seed_overrides { seed.or(file_seed) } else { file_seed.or(seed) };
    let body = Value::Object(map);
    check_mass_lists(&body, source, "")?;
    let spec = match kind {
        Kind::MotSolve => Spec::MotSolve(typed(body, source)?),
        Kind::MonotoneCheck => Spec::MonotoneCheck(typed(body, source)?),
        Kind::TransformApply => Spec::TransformApply(typed(body, source)?),
        Kind::TransformClassify => Spec::TransformClassify(typed(body, source)?),
        Kind::SepFit => Spec::SepFit(typed(body, source)?),
        Kind::SepCompare => Spec::SepCompare(typed(body, source)?),
        Kind::StopGo => Spec::StopGo(typed(body, source)?),
        Kind::SymmetrySuite => Spec::SymmetrySuite(typed(body, source)?),
    };
    validate(&spec, source)?;
    if seed.is_none() && is_stochastic(&spec) {
        return Err(LoadError::schema(
            source,
            "/seed",
            format!("{kind} is stochastic and needs a seed (in the file or via --seed)"),
        ));
    }
    Ok(Scenario {
        name,
        kind,
        seed,
        source: source.to_path_buf(),
        spec,
    })
}

pub fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| valid_name(s))
        .unwrap_or_else(|| "scenario".into())
}

/// Reads and validates one scenario file.
pub fn load_problem(path: &Path, expected: Option<Kind>, seed: Option<u64>) -> Result<Scenario, LoadError> {
    let value = read_json(path)?;
    parse_scenario(value, path, &stem(path), expected, seed, true)
}

/// Reads a suite manifest `{"scenarios": [...]}` whose entries are file paths,
/// `$ref` objects or inline scenarios. `seed` fills in missing seeds.
pub fn load_manifest(path: &Path, seed: Option<u64>) -> Result<Vec<Scenario>, LoadError> {
    let value = read_json(path)?;
    let Value::Object(mut map) = value else {
        return Err(LoadError::schema(path, "", "manifest must be a JSON object"));
    };
    if let Some(k) = map.keys().find(|k| *k != "scenarios") {
        return Err(LoadError::schema(path, push_pointer("", k), "unknown manifest field"));
    }
    let Some(Value::Array(entries)) = map.remove("scenarios") else {
        return Err(LoadError::schema(path, "/scenarios", "expected an array of scenarios"));
    };
    let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut out: Vec<Scenario> = Vec::with_capacity(entries.len());
    for (i, entry) in entries.into_iter().enumerate() {
        let s = match entry {
            Value::String(file) => {
                let p = dir.join(file);
                let value = read_json(&p)?;
                parse_scenario(value, &p, &stem(&p), None, seed, false)?
            }
            other => with_pointer_prefix(
                parse_scenario(other, path, &format!("scenario_{i}"), None, seed, false),
                &format!("/scenarios/{i}"),
            )?,
        };
        if out.iter().any(|o| o.name == s.name) {
            return Err(LoadError::schema(
                path,
                format!("/scenarios/{i}"),
                format!("duplicate scenario name \"{}\"", s.name),
            ));
        }
        out.push(s);
    }
    Ok(out)
}

fn with_pointer_prefix(r: Result<Scenario, LoadError>, prefix: &str) -> Result<Scenario, LoadError> {
    r.map_err(|e| match e {
        LoadError::Schema { path, pointer, message } => LoadError::Schema {
            path,
            pointer: format!("{prefix}{pointer}"),
            message,
        },
        LoadError::ConvexOrder { path, pointer, witness, detail } => LoadError::ConvexOrder {
            path,
            pointer: format!("{prefix}{pointer}"),
            witness,
            detail,
        },
        other => other,
    })
}

/// Piecewise-linear interpolation through sorted knots, flat outside.
pub fn interpolate(knots: &[[f64; 2]], y: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if y <= first[0] {
        return first[1];
    }
    if y >= last[0] {
        return last[1];
    }
    let k = knots.partition_point(|p| p[0] <= y);
    let (a, b) = (knots[k - 1], knots[k]);
    a[1] + (b[1] - a[1]) * (y - a[0]) / (b[0] - a[0])
}
