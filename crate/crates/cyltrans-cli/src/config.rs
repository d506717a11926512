//! Run configuration: one JSON document plus `key=value` overrides.

use cyltrans::slc::NewtonOptions;
use cyltrans::tolerances::Tolerances;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Configuration errors, with enough position information to fix the file.
#[derive(Debug, Error)]
pub enum ConfigError {
    /// The document is not valid JSON or does not match the schema.
    #[error("{source_name}:{line}:{column}: {message}")]
    Parse {
        /// File name or `<override>`.
        source_name: String,
        /// 1-based line.
        line: usize,
        /// 1-based column.
        column: usize,
        /// Parser message.
        message: String,
    },
    /// A field has an unusable value.
    #[error("field `{field}`: {message}")]
    Field {
        /// Dotted field path.
        field: String,
        /// What is wrong.
        message: String,
    },
    /// The file could not be read.
    #[error("cannot read {path}: {message}")]
    Io {
        /// Path.
        path: String,
        /// OS message.
        message: String,
    },
}

/// Pipelines, one per CLI verb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Integrate the fixture geodesic.
    Generate,
    /// Cut the geodesic into level cylinders.
    Forward,
    /// Reassemble the geodesic from its ring family.
    Inverse,
    /// Forward then inverse, with criteria AC3 to AC6.
    Roundtrip,
    /// Perturb the far boundary and re-solve.
    Perturb,
    /// Elliptic and kernel checks, with criteria AC1, AC2 and AC8.
    Verify,
    /// Draw figures from an earlier run's artifacts.
    Render,
}

impl Pipeline {
    /// Lower-case name.
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Generate => "generate",
            Pipeline::Forward => "forward",
            Pipeline::Inverse => "inverse",
            Pipeline::Roundtrip => "roundtrip",
            Pipeline::Perturb => "perturb",
            Pipeline::Verify => "verify",
            Pipeline::Render => "render",
        }
    }
}

/// Which geodesic to start from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureKind {
    /// The bent-graph disc in C^2.
    Disc,
    /// The closed-form line family in C.
    Line,
}

/// Ambient structure: `Omega = exp(a z_1) dz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmbientSpec {
    /// The coefficient `a`.
    pub density_coefficient: f64,
}

impl Default for AmbientSpec {
    fn default() -> Self {
        AmbientSpec { density_coefficient: 0.1 }
    }
}

/// Fixture selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSpec {
    /// Kind.
    pub kind: FixtureKind,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec { kind: FixtureKind::Disc }
    }
}

/// Grid sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Resolution {
    /// Angles per ring (`M`), also the cylinder circle resolution.
    pub m: usize,
    /// Rings of the polar grid, or intervals of the line grid.
    pub r: usize,
    /// Time steps `T`, also the cylinder resolution `K`.
    pub t: usize,
    /// Number of forward levels.
    pub levels: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution { m: 32, r: 16, t: 32, levels: 8 }
    }
}

/// The boundary perturbation of the `perturb` pipeline: a bump on the
/// parameter disc of `Lambda_1`, scaled to a `C^2` norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbSpec {
    /// Target `C^2` norm.
    pub c2_norm: f64,
    /// Bump center in parameter coordinates.
    pub center: [f64; 2],
    /// Bump radius.
    pub radius: f64,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        PerturbSpec { c2_norm: 1e-2, center: [0.55, 0.0], radius: 0.3 }
    }
}

/// A complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Pipeline to run.
    pub pipeline: Pipeline,
    /// Ambient structure.
    #[serde(default)]
    pub ambient: AmbientSpec,
    /// Fixture.
    #[serde(default)]
    pub fixture: FixtureSpec,
    /// Grid sizes.
    #[serde(default)]
    pub resolution: Resolution,
    /// Named tolerances.
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Newton options.
    #[serde(default)]
    pub newton: NewtonOptions,
    /// Perturbation of the `perturb` pipeline.
    #[serde(default)]
    pub perturbation: PerturbSpec,
    /// Seed of the `ChaCha8` generator used for all sampling.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output directory.
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_seed() -> u64 {
    20_240_917
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// Defaults for a pipeline.
    pub fn new(pipeline: Pipeline) -> Self {
        RunConfig {
            pipeline,
            ambient: AmbientSpec::default(),
            fixture: FixtureSpec::default(),
            resolution: Resolution::default(),
            tolerances: Tolerances::default(),
            newton: NewtonOptions::default(),
            perturbation: PerturbSpec::default(),
            seed: default_seed(),
            output: default_output(),
        }
    }

    /// Parses a JSON document.
    pub fn from_json(text: &str, source_name: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| parse_error(&e, source_name))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and parses a file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Applies `key=value` overrides. Keys are dotted field paths; values
    /// are parsed as JSON and fall back to strings.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, ConfigError> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = serde_json::to_value(self).expect("configuration serializes");
        for item in overrides {
            let (key, raw) = item.split_once('=').ok_or_else(|| ConfigError::Field {
                field: item.clone(),
                message: "override must have the form key=value".into(),
            })?;
            let value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut doc;
            for part in key.split('.') {
                let obj = slot.as_object_mut().ok_or_else(|| ConfigError::Field {
                    field: key.to_string(),
                    message: format!("`{part}` is not inside an object"),
                })?;
                if !obj.contains_key(part) {
                    return Err(ConfigError::Field { field: key.to_string(), message: "unknown field".into() });
                }
                slot = obj.get_mut(part).expect("checked above");
            }
            *slot = value;
        }
        let cfg: RunConfig =
            serde_json::from_value(doc).map_err(|e| ConfigError::Field { field: "<override>".into(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks positivity of tolerances and resolution minimums.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let tol = serde_json::to_value(self.tolerances).expect("tolerances serialize");
        for (name, v) in tol.as_object().expect("tolerances are a record") {
            if !(v.as_f64().unwrap_or(0.0) > 0.0) {
                return Err(ConfigError::Field { field: format!("tolerances.{name}"), message: "must be positive".into() });
            }
        }
        let r = &self.resolution;
        let field = |name: &str, message: String| ConfigError::Field { field: format!("resolution.{name}"), message };
        if r.m < 16 || r.m % 2 != 0 {
            return Err(field("m", format!("{} must be even and at least 16", r.m)));
        }
        if r.t < 8 {
            return Err(field("t", format!("{} must be at least 8", r.t)));
        }
        if r.r < 4 {
            return Err(field("r", format!("{} must be at least 4", r.r)));
        }
        if r.levels < 2 {
            return Err(field("levels", format!("{} must be at least 2", r.levels)));
        }
        if self.fixture.kind == FixtureKind::Line && self.ambient.density_coefficient != 0.0 {
            return Err(ConfigError::Field {
                field: "ambient.density_coefficient".into(),
                message: "the line fixture is closed-form only for the flat structure (use 0)".into(),
            });
        }
        let p = &self.perturbation;
        if !(p.c2_norm >= 0.0) || !(p.radius > 0.0) {
            return Err(ConfigError::Field { field: "perturbation".into(), message: "c2_norm >= 0 and radius > 0".into() });
        }
        if !(self.newton.tol > 0.0) || self.newton.max_iter == 0 {
            return Err(ConfigError::Field { field: "newton".into(), message: "tol > 0 and max_iter >= 1".into() });
        }
        Ok(())
    }
}

fn parse_error(e: &serde_json::Error, source_name: &str) -> ConfigError {
    ConfigError::Parse { source_name: source_name.to_string(), line: e.line(), column: e.column(), message: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = RunConfig::new(Pipeline::Forward);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text, "x").unwrap(), cfg);
        let minimal = RunConfig::from_json(r#"{"pipeline": "forward"}"#, "x").unwrap();
        assert_eq!(minimal, cfg);
    }

    #[test]
    fn malformed_documents_report_positions() {
        let err = RunConfig::from_json("{\n  \"pipeline\": \"forward\",\n  \"resolution\": {\"m\": }\n}", "run.json");
        match err {
            Err(ConfigError::Parse { line, source_name, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(source_name, "run.json");
            }
            other => panic!("{other:?}"),
        }
        let unknown = RunConfig::from_json(r#"{"pipeline": "forward", "resolutoin": {}}"#, "x");
        assert!(matches!(unknown, Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn overrides_and_validation() {
        let cfg = RunConfig::new(Pipeline::Generate);
        let o = cfg.with_overrides(&["resolution.m=64".into(), "tolerances.tol_crit=1e-7".into()]).unwrap();
        assert_eq!(o.resolution.m, 64);
        assert_eq!(o.tolerances.tol_crit, 1e-7);
        assert!(cfg.with_overrides(&["resolution.m=15".into()]).is_err());
        assert!(cfg.with_overrides(&["resolution.q=1".into()]).is_err());
        assert!(cfg.with_overrides(&["tolerances.tol_hess=0".into()]).is_err());
        assert!(cfg.with_overrides(&["fixture.kind=line".into()]).is_err());
        let line = cfg.with_overrides(&["fixture.kind=line".into(), "ambient.density_coefficient=0".into()]).unwrap();
        assert_eq!(line.fixture.kind, FixtureKind::Line);
    }
}
