//! JSON run configuration: schema, defaults and invariant checks.
//!
//! Every error carries a JSONPath-like location (`$.problem.eps`,
//! `$.problem.A[1][0]`, ...) so that it can be traced back to the document.

use std::fmt;

use serde::{Deserialize, Serialize};
use shishkin::mesh::admissible_p;
use shishkin::problem::{validate_eps, ProblemError, DEFAULT_SAMPLE_DENSITY};
use shishkin::verify::{catalog_with, layer_problem, reaction_matrix, CatalogId, DEFAULT_REFINEMENT, DEFAULT_SWEEP_RATIO};
use shishkin::{Field, MeshError, ProblemSpec};

use crate::expr::{parse_expression, ExprTree};

/// Catalog name selecting the layer problem instead of a manufactured one.
pub const LAYER_CATALOG: &str = "layer";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Validate,
    Solve,
    Convergence,
    Sweep,
    Selftest,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Validate => "validate",
            Self::Solve => "solve",
            Self::Convergence => "convergence",
            Self::Sweep => "sweep",
            Self::Selftest => "selftest",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default = "default_sample_density")]
    pub sample_density: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Either a catalog entry (`catalog` set, no expressions) or an inline
/// definition (`A` and `f` required, boundary and initial data default to 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<String>,
    pub n: usize,
    pub eps: Vec<f64>,
    #[serde(rename = "T", default = "default_t_end")]
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n_intervals: Option<usize>,
    #[serde(rename = "M")]
    pub m_intervals: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<u32>,
}

impl MeshConfig {
    /// `(N, M)`; only meaningful after [`load_config`] filled in `N`.
    pub fn cell(&self) -> (usize, usize) {
        (self.n_intervals.unwrap_or(0), self.m_intervals)
    }
}

/// Geometric parameter families `eps_i = eta ratio^(i-1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySweep {
    pub count: usize,
    pub eta_min: f64,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(rename = "N_list", default)]
    pub n_list: Vec<usize>,
    #[serde(rename = "M_list", default)]
    pub m_list: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_sweep: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_families: Option<FamilySweep>,
    #[serde(default = "default_refinement")]
    pub refinement: usize,
    /// Use the two-mesh estimate even when a closed form is known.
    #[serde(default)]
    pub force_reference: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Profiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            formats: default_formats(),
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }
}

fn default_sample_density() -> usize {
    DEFAULT_SAMPLE_DENSITY
}

fn default_t_end() -> f64 {
    1.0
}

fn default_ratio() -> f64 {
    DEFAULT_SWEEP_RATIO
}

fn default_refinement() -> usize {
    DEFAULT_REFINEMENT
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

/// A configuration problem at a document location.
#[derive(Debug, Clone, PartialEq, Serialize, thiserror::Error)]
#[error("{path}: {message}")]
pub struct SchemaError {
    pub path: String,
    /// Short machine-readable category, e.g. `bad_n` or `expression`.
    pub kind: String,
    pub message: String,
}

impl SchemaError {
    pub fn new(path: impl Into<String>, kind: &str, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            kind: kind.to_string(),
            message: message.into(),
        }
    }

    fn mesh(path: String, err: MeshError) -> Self {
        let kind = match err {
            MeshError::BadN { .. } => "bad_n",
            _ => "mesh",
        };
        Self::new(path, kind, err.to_string())
    }
}

/// Category and config location of a problem-level error.
pub fn problem_error(err: &ProblemError) -> SchemaError {
    let (path, kind) = match err {
        ProblemError::EpsOutOfRange { .. } => ("$.problem.eps".to_string(), "eps_out_of_range"),
        ProblemError::CoincidentParameters { .. } => ("$.problem.eps".into(), "coincident_parameters"),
        ProblemError::AlphaTooSmall { .. } => ("$.problem.eps".into(), "alpha_too_small"),
        ProblemError::CornerMismatch { component, .. } => (format!("$.problem.initial[{component}]"), "corner_mismatch"),
        ProblemError::DominanceViolation { row, .. } => (format!("$.problem.A[{row}]"), "dominance_violation"),
        ProblemError::SignViolation { row, col, .. } => (format!("$.problem.A[{row}][{col}]"), "sign_violation"),
        ProblemError::NonPositiveRowSum { row, .. } => (format!("$.problem.A[{row}]"), "nonpositive_row_sum"),
        ProblemError::BadAlphaOverride { .. } => ("$.problem.alpha".into(), "bad_alpha"),
        ProblemError::NonFinite { .. } => ("$.problem".into(), "non_finite"),
        ProblemError::BadSampleDensity(_) => ("$.sample_density".into(), "bad_sample_density"),
        ProblemError::Malformed(_) => ("$.problem".into(), "malformed"),
    };
    SchemaError::new(path, kind, err.to_string())
}

fn json_path(path: &serde_path_to_error::Path) -> String {
    let s = path.to_string();
    if s == "." || s.is_empty() {
        "$".into()
    } else {
        format!("$.{s}")
    }
}

/// Parses, applies defaults and checks every invariant that does not need
/// a solve.
pub fn load_config(text: &str) -> Result<RunConfig, SchemaError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = json_path(e.path());
        let inner = e.into_inner();
        let message = inner.to_string();
        let kind = if inner.is_syntax() || inner.is_eof() { "syntax" } else { "schema" };
        if let Some(field) = message.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
            path = format!("{path}.{field}");
        }
        SchemaError::new(path, kind, message)
    })?;
    cfg.normalize()?;
    if let Some(command) = cfg.command {
        cfg.check_for(command)?;
    }
    Ok(cfg)
}

fn check_list(path: &str, items: &[String], n: usize) -> Result<(), SchemaError> {
    if items.len() != n {
        return Err(SchemaError::new(
            path,
            "shape",
            format!("expected {n} entries, found {}", items.len()),
        ));
    }
    for (i, s) in items.iter().enumerate() {
        parse_expression(s).map_err(|e| SchemaError::new(format!("{path}[{i}]"), "expression", e.to_string()))?;
    }
    Ok(())
}

fn check_eps(path: &str, eps: &[f64], n: usize) -> Result<(), SchemaError> {
    if eps.len() != n {
        return Err(SchemaError::new(
            path,
            "shape",
            format!("expected {n} parameters, found {}", eps.len()),
        ));
    }
    validate_eps(eps).map_err(|e| SchemaError {
        path: path.to_string(),
        ..problem_error(&e)
    })
}

fn check_intervals(path: &str, n: usize, n_intervals: usize) -> Result<u32, SchemaError> {
    admissible_p(n, n_intervals).map_err(|e| SchemaError::mesh(path.to_string(), e))
}

impl ProblemConfig {
    fn normalize(&self) -> Result<(), SchemaError> {
        let n = self.n;
        if n == 0 {
            return Err(SchemaError::new("$.problem.n", "shape", "n must be at least 1"));
        }
        check_eps("$.problem.eps", &self.eps, n)?;
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(SchemaError::new(
                "$.problem.T",
                "invalid",
                format!("T must be positive, got {}", self.t_end),
            ));
        }
        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(SchemaError::new(
                    "$.problem.alpha",
                    "bad_alpha",
                    format!("alpha must be positive, got {alpha}"),
                ));
            }
        }
        let inline = [
            ("A", self.a.is_some()),
            ("f", self.f.is_some()),
            ("left", self.left.is_some()),
            ("right", self.right.is_some()),
            ("initial", self.initial.is_some()),
            ("exact", self.exact.is_some()),
        ];
        match &self.catalog {
            Some(name) => {
                if name != LAYER_CATALOG && name.parse::<CatalogId>().is_err() {
                    let known: Vec<&str> = CatalogId::ALL.iter().map(|c| c.as_str()).chain([LAYER_CATALOG]).collect();
                    return Err(SchemaError::new(
                        "$.problem.catalog",
                        "unknown_catalog",
                        format!("unknown catalog id {name:?}; expected one of {}", known.join(", ")),
                    ));
                }
                if let Some((field, _)) = inline.iter().find(|(_, set)| *set) {
                    return Err(SchemaError::new(
                        format!("$.problem.{field}"),
                        "schema",
                        "expressions are not allowed together with a catalog id",
                    ));
                }
            }
            None => {
                let a = self
                    .a
                    .as_ref()
                    .ok_or_else(|| SchemaError::new("$.problem.A", "schema", "inline problems need A (or set catalog)"))?;
                if a.len() != n {
                    return Err(SchemaError::new(
                        "$.problem.A",
                        "shape",
                        format!("expected {n} rows, found {}", a.len()),
                    ));
                }
                for (i, row) in a.iter().enumerate() {
                    check_list(&format!("$.problem.A[{i}]"), row, n)?;
                }
                let f = self
                    .f
                    .as_ref()
                    .ok_or_else(|| SchemaError::new("$.problem.f", "schema", "inline problems need f"))?;
                check_list("$.problem.f", f, n)?;
                for (name, list) in [
                    ("left", &self.left),
                    ("right", &self.right),
                    ("initial", &self.initial),
                    ("exact", &self.exact),
                ] {
                    if let Some(list) = list {
                        check_list(&format!("$.problem.{name}"), list, n)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Problem data for a parameter vector, with the closed-form solution
    /// when one is known.
    pub fn build(&self, eps: &[f64]) -> Result<(ProblemSpec, Option<Vec<Field>>), SchemaError> {
        let n = self.n;
        if let Some(name) = &self.catalog {
            if name == LAYER_CATALOG {
                let mut spec = layer_problem(n, eps);
                spec.t_end = self.t_end;
                return Ok((spec, None));
            }
            let id: CatalogId = name
                .parse()
                .map_err(|e: shishkin::VerifyError| SchemaError::new("$.problem.catalog", "unknown_catalog", e.to_string()))?;
            let m = catalog_with(id, eps, &reaction_matrix(n), self.t_end);
            return Ok((m.spec, Some(m.exact)));
        }
        let fields = |path: &str, list: Option<&Vec<String>>| -> Result<Vec<Field>, SchemaError> {
            match list {
                None => Ok(vec![Field::constant(0.0); n]),
                Some(list) => list
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        parse_expression(s)
                            .map(ExprTree::into_field)
                            .map_err(|e| SchemaError::new(format!("{path}[{i}]"), "expression", e.to_string()))
                    })
                    .collect(),
            }
        };
        let mut coefficients = Vec::with_capacity(n * n);
        for (i, row) in self.a.iter().flatten().enumerate() {
            coefficients.extend(fields(&format!("$.problem.A[{i}]"), Some(row))?);
        }
        let spec = ProblemSpec {
            eps: eps.to_vec(),
            coefficients,
            source: fields("$.problem.f", self.f.as_ref())?,
            left: fields("$.problem.left", self.left.as_ref())?,
            right: fields("$.problem.right", self.right.as_ref())?,
            initial: fields("$.problem.initial", self.initial.as_ref())?,
            t_end: self.t_end,
        };
        let exact = match &self.exact {
            Some(list) => Some(fields("$.problem.exact", Some(list))?),
            None => None,
        };
        Ok((spec, exact))
    }
}

impl RunConfig {
    fn normalize(&mut self) -> Result<(), SchemaError> {
        if self.sample_density < 2 {
            return Err(SchemaError::new(
                "$.sample_density",
                "bad_sample_density",
                "sample_density must be at least 2",
            ));
        }
        if let Some(problem) = &self.problem {
            problem.normalize()?;
        }
        let n = self.problem.as_ref().map(|p| p.n);
        if let Some(mesh) = &mut self.mesh {
            let n = n.ok_or_else(|| SchemaError::new("$.problem", "schema", "a mesh needs a problem"))?;
            if mesh.m_intervals == 0 {
                return Err(SchemaError::new("$.mesh.M", "invalid", "M must be at least 1"));
            }
            match (mesh.n_intervals, mesh.p) {
                (Some(big_n), p) => {
                    let derived = check_intervals("$.mesh.N", n, big_n)?;
                    if p.is_some_and(|p| p != derived) {
                        return Err(SchemaError::new(
                            "$.mesh.p",
                            "bad_n",
                            format!(
                                "p = {} disagrees with N = {big_n} = 2^(n+p+1), which gives p = {derived}",
                                p.unwrap_or(0)
                            ),
                        ));
                    }
                    mesh.p = Some(derived);
                }
                (None, Some(p)) => {
                    if p < 1 || n as u32 + p + 1 >= usize::BITS {
                        return Err(SchemaError::new(
                            "$.mesh.p",
                            "bad_n",
                            format!("p = {p} must be at least 1 and keep N = 2^(n+p+1) representable"),
                        ));
                    }
                    mesh.n_intervals = Some(1usize << (n as u32 + p + 1));
                }
                (None, None) => return Err(SchemaError::new("$.mesh.N", "schema", "missing field `N` (or `p`)")),
            }
        }
        if let Some(study) = &self.study {
            let n = n.ok_or_else(|| SchemaError::new("$.problem", "schema", "a study needs a problem"))?;
            for (k, &big_n) in study.n_list.iter().enumerate() {
                check_intervals(&format!("$.study.N_list[{k}]"), n, big_n)?;
            }
            if let Some(k) = study.m_list.iter().position(|&m| m == 0) {
                return Err(SchemaError::new(format!("$.study.M_list[{k}]"), "invalid", "M must be at least 1"));
            }
            if study.refinement < 4 || !study.refinement.is_power_of_two() {
                return Err(SchemaError::new(
                    "$.study.refinement",
                    "invalid",
                    format!("refinement must be a power of two >= 4, got {}", study.refinement),
                ));
            }
            if let Some(sweep) = &study.eps_sweep {
                if sweep.is_empty() {
                    return Err(SchemaError::new("$.study.eps_sweep", "invalid", "eps_sweep must not be empty"));
                }
                for (k, eps) in sweep.iter().enumerate() {
                    check_eps(&format!("$.study.eps_sweep[{k}]"), eps, n)?;
                }
            }
            if let Some(fam) = &study.eps_families {
                if study.eps_sweep.is_some() {
                    return Err(SchemaError::new(
                        "$.study.eps_families",
                        "schema",
                        "give either eps_sweep or eps_families, not both",
                    ));
                }
                if fam.count == 0 {
                    return Err(SchemaError::new(
                        "$.study.eps_families.count",
                        "invalid",
                        "count must be at least 1",
                    ));
                }
                if !(fam.eta_min > 0.0 && fam.eta_min.is_finite()) {
                    return Err(SchemaError::new(
                        "$.study.eps_families.eta_min",
                        "invalid",
                        "eta_min must be positive",
                    ));
                }
                if !(fam.ratio > 1.0 && fam.ratio.is_finite()) {
                    return Err(SchemaError::new("$.study.eps_families.ratio", "invalid", "ratio must exceed 1"));
                }
            }
        }
        Ok(())
    }

    /// Checks that the sections a command needs are present.
    pub fn check_for(&self, command: Command) -> Result<(), SchemaError> {
        let need = |present: bool, path: &str| {
            if present {
                Ok(())
            } else {
                Err(SchemaError::new(path, "schema", format!("`{command}` needs {path}")))
            }
        };
        match command {
            Command::Selftest => Ok(()),
            Command::Validate => need(self.problem.is_some(), "$.problem"),
            Command::Solve => {
                need(self.problem.is_some(), "$.problem")?;
                need(self.mesh.is_some(), "$.mesh")
            }
            Command::Convergence => {
                need(self.problem.is_some(), "$.problem")?;
                let study = self.study.as_ref();
                need(study.is_some(), "$.study")?;
                need(study.is_some_and(|s| !s.n_list.is_empty()), "$.study.N_list")?;
                need(study.is_some_and(|s| !s.m_list.is_empty()), "$.study.M_list")
            }
            Command::Sweep => {
                need(self.problem.is_some(), "$.problem")?;
                need(self.mesh.is_some(), "$.mesh")?;
                let study = self.study.as_ref();
                need(
                    study.is_some_and(|s| s.eps_sweep.is_some() || s.eps_families.is_some()),
                    "$.study.eps_sweep",
                )
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_solve_config() {
        let cfg = load_config(
            r#"{"command": "solve",
                "problem": {"catalog": "smooth_trig_t_linear", "n": 1, "eps": [1e-4]},
                "mesh": {"N": 64, "M": 32}}"#,
        )
        .unwrap();
        let mesh = cfg.mesh.as_ref().unwrap();
        assert_eq!(mesh.p, Some(4));
        assert_eq!(cfg.sample_density, 64);
        assert_eq!(cfg.problem.as_ref().unwrap().t_end, 1.0);
    }

    #[test]
    fn bad_n() {
        let err = load_config(r#"{"problem": {"catalog": "smooth_poly", "n": 1, "eps": [1e-4]}, "mesh": {"N": 48, "M": 8}}"#).unwrap_err();
        assert_eq!(err.path, "$.mesh.N");
        assert_eq!(err.kind, "bad_n");
        assert!(err.message.contains("2^(n+p+1)"), "{}", err.message);
    }

    #[test]
    fn missing_eps() {
        let err = load_config(r#"{"problem": {"catalog": "smooth_poly", "n": 1}}"#).unwrap_err();
        assert_eq!(err.path, "$.problem.eps");
    }

    #[test]
    fn p_only() {
        let cfg = load_config(r#"{"problem": {"catalog": "layer", "n": 2, "eps": [1e-6, 1e-4]}, "mesh": {"p": 2, "M": 8}}"#).unwrap();
        assert_eq!(cfg.mesh.unwrap().n_intervals, Some(32));
    }
}
