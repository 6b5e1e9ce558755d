//! Experiment configuration files.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serrin_core::diagnostics::Perturbation;
use serrin_core::geometry::inclusion_margin;
use serrin_core::{DomainSpec, InclusionSpec, Point, SolverConfig};
use thiserror::Error;

/// A validation failure, reported as `field: reason`.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{field}: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { field: field.into(), reason: reason.into() }
    }

    fn required(field: &str) -> Self {
        Self::new(field, "required")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Diagnose,
    SweepSigma,
    SweepInclusion,
    SweepStability,
    FrechetCheck,
    VerifyIdentity,
    Nonexistence,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Solve,
        Command::Diagnose,
        Command::SweepSigma,
        Command::SweepInclusion,
        Command::SweepStability,
        Command::FrechetCheck,
        Command::VerifyIdentity,
        Command::Nonexistence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Diagnose => "diagnose",
            Command::SweepSigma => "sweep-sigma",
            Command::SweepInclusion => "sweep-inclusion",
            Command::SweepStability => "sweep-stability",
            Command::FrechetCheck => "frechet-check",
            Command::VerifyIdentity => "verify-identity",
            Command::Nonexistence => "nonexistence",
        }
    }

    pub fn parse(name: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.name() == name)
    }
}

/// One member of a one-phase stability family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyMember {
    pub parameter: f64,
    pub domain: DomainSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default = "default_tolerance")]
    pub cg_rel_tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cg_max_iterations: Option<usize>,
    #[serde(default = "yes")]
    pub jacobi: bool,
}

fn default_tolerance() -> f64 {
    SolverConfig::default().cg_rel_tolerance
}

fn yes() -> bool {
    true
}

impl From<SolverSettings> for SolverConfig {
    fn from(s: SolverSettings) -> Self {
        SolverConfig { cg_rel_tolerance: s.cg_rel_tolerance, cg_max_iterations: s.cg_max_iterations, jacobi: s.jacobi }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    /// Output subdirectory; defaults to the command name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub domain: DomainSpec,
    #[serde(default)]
    pub inclusion: InclusionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_c: Option<f64>,
    pub target_h: f64,
    /// Uniform refinements applied to the generated mesh (solve, diagnose),
    /// or the number of refinement levels checked (verify-identity).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinements: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub plot: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inclusion_radii: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inclusion_center: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Vec<FamilyMember>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Perturbation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted_c2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted_c3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSettings>,
}

impl RunConfig {
    /// A config with every optional field unset.
    pub fn new(command: Command, domain: DomainSpec, target_h: f64) -> Self {
        RunConfig {
            command,
            name: None,
            domain,
            inclusion: InclusionSpec::None,
            sigma_c: None,
            target_h,
            refinements: None,
            output_dir: None,
            plot: false,
            t_values: None,
            t0: None,
            eps_values: None,
            inclusion_radii: None,
            inclusion_center: None,
            family: None,
            window: None,
            eta: None,
            fitted_c2: None,
            fitted_c3: None,
            solver: None,
        }
    }

    pub fn output_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.command.name().to_string())
    }

    pub fn solver_config(&self) -> SolverConfig {
        self.solver.map(SolverConfig::from).unwrap_or_default()
    }

    /// Parses and validates a JSON config.
    pub fn from_json(text: &str) -> Result<RunConfig, ConfigError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ConfigError::new("config", format!("invalid JSON: {e}")))?;
        let obj = value.as_object().ok_or_else(|| ConfigError::new("config", "expected a JSON object"))?;
        match obj.get("command") {
            None => return Err(ConfigError::required("command")),
            Some(serde_json::Value::String(s)) if Command::parse(s).is_none() => {
                return Err(ConfigError::new("command", format!("unknown command '{s}'")))
            }
            Some(serde_json::Value::String(_)) => {}
            Some(_) => return Err(ConfigError::new("command", "must be a string")),
        }
        for field in ["domain", "target_h"] {
            if !obj.contains_key(field) {
                return Err(ConfigError::required(field));
            }
        }
        let config: RunConfig = serde_json::from_value(value).map_err(|e| ConfigError::new("config", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &str, e: &dyn std::fmt::Display| ConfigError::new(field, e.to_string());
        self.domain.validate().map_err(|e| bad("domain", &e))?;
        if !(self.target_h > 0.0 && self.target_h.is_finite()) {
            return Err(ConfigError::new("target_h", "must be positive"));
        }
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
                return Err(ConfigError::new("name", "must be a plain directory name"));
            }
        }
        if let Some(s) = self.sigma_c {
            if !(s > 0.0 && s.is_finite()) {
                return Err(ConfigError::new("sigma_c", "must be positive"));
            }
        }
        if let Some(w) = self.window {
            if w < 3 {
                return Err(ConfigError::new("window", "must be at least 3"));
            }
        }
        self.solver_config().validate().map_err(|e| bad("solver", &e))?;
        if !matches!(self.inclusion, InclusionSpec::None) {
            inclusion_margin(&self.domain, &self.inclusion).map_err(|e| bad("inclusion", &e))?;
        }
        let needs = |present: bool, field: &str| if present { Ok(()) } else { Err(ConfigError::required(field)) };
        match self.command {
            Command::Solve | Command::Diagnose => {
                if !matches!(self.inclusion, InclusionSpec::None) {
                    needs(self.sigma_c.is_some(), "sigma_c")?;
                }
            }
            Command::SweepSigma => needs(non_empty(&self.t_values), "t_values")?,
            Command::SweepInclusion => {
                needs(self.sigma_c.is_some(), "sigma_c")?;
                needs(non_empty(&self.inclusion_radii), "inclusion_radii")?;
            }
            Command::SweepStability => {
                needs(self.family.as_ref().is_some_and(|f| !f.is_empty()), "family")?;
                for (i, m) in self.family.iter().flatten().enumerate() {
                    m.domain.validate().map_err(|e| bad(&format!("family[{i}].domain"), &e))?;
                }
            }
            Command::FrechetCheck => {
                needs(self.t0.is_some(), "t0")?;
                needs(non_empty(&self.eps_values), "eps_values")?;
            }
            Command::VerifyIdentity => {}
            Command::Nonexistence => needs(self.fitted_c2.is_some() || self.fitted_c3.is_some(), "fitted_c2")?,
        }
        Ok(())
    }
}

fn non_empty(v: &Option<Vec<f64>>) -> bool {
    v.as_ref().is_some_and(|v| !v.is_empty())
}
