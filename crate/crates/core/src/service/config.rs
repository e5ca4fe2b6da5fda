//! Service configuration with layered sources.
//!
//! Precedence, highest first: command-line flag, environment variable,
//! config file (TOML), built-in default. The binary maps flags and
//! `CAPWIRE_*` variables onto one [`PartialConfig`] and the file onto
//! another; [`ServiceConfig::from_layers`] merges them.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{load_fixtures, Annotator, FixtureAnnotator, RemoteAnnotator, RemoteAnnotatorConfig};
use crate::caption::DEFAULT_CREDIT_PREFIX;
use crate::pipeline::{backend_from_spec, Backends, Level, PipelineConfig};
use crate::roster::{load_rosters, RosterSet};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config file {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("failed to parse config file {0}: {1}")]
    Parse(PathBuf, String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// What `submit` does when every worker slot is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backpressure {
    /// Wait for a free slot.
    #[default]
    Block,
    /// Return a retriable busy signal immediately.
    Reject,
}

impl std::str::FromStr for Backpressure {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "block" => Ok(Backpressure::Block),
            "reject" => Ok(Backpressure::Reject),
            other => Err(format!("unknown backpressure mode {other:?}")),
        }
    }
}

/// Every field optional; one layer of configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub level1_endpoint: Option<String>,
    pub level2_endpoint: Option<String>,
    pub annotator_fixtures: Option<PathBuf>,
    pub annotator_endpoints: Option<Vec<String>>,
    pub roster_paths: Option<Vec<PathBuf>>,
    pub max_in_flight: Option<usize>,
    pub retries: Option<u32>,
    pub credit_prefix: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub listen: Option<String>,
    pub backpressure: Option<Backpressure>,
    pub result_ttl_secs: Option<u64>,
    pub strict_roster: Option<bool>,
}

impl PartialConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse(path.to_path_buf(), e.to_string()))
    }

    /// Fields set in `self` win over `lower`.
    pub fn over(self, lower: PartialConfig) -> PartialConfig {
        PartialConfig {
            level1_endpoint: self.level1_endpoint.or(lower.level1_endpoint),
            level2_endpoint: self.level2_endpoint.or(lower.level2_endpoint),
            annotator_fixtures: self.annotator_fixtures.or(lower.annotator_fixtures),
            annotator_endpoints: self.annotator_endpoints.or(lower.annotator_endpoints),
            roster_paths: self.roster_paths.or(lower.roster_paths),
            max_in_flight: self.max_in_flight.or(lower.max_in_flight),
            retries: self.retries.or(lower.retries),
            credit_prefix: self.credit_prefix.or(lower.credit_prefix),
            output_dir: self.output_dir.or(lower.output_dir),
            listen: self.listen.or(lower.listen),
            backpressure: self.backpressure.or(lower.backpressure),
            result_ttl_secs: self.result_ttl_secs.or(lower.result_ttl_secs),
            strict_roster: self.strict_roster.or(lower.strict_roster),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    /// `mock:<script path>` or an http(s) base address.
    pub level1_endpoint: String,
    pub level2_endpoint: String,
    pub annotator_fixtures: Option<PathBuf>,
    pub annotator_endpoints: Vec<String>,
    pub roster_paths: Vec<PathBuf>,
    pub max_in_flight: usize,
    pub retries: u32,
    pub credit_prefix: String,
    pub output_dir: PathBuf,
    pub listen: String,
    pub backpressure: Backpressure,
    pub result_ttl_secs: u64,
    pub strict_roster: bool,
}

impl ServiceConfig {
    pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
    pub const DEFAULT_LISTEN: &'static str = "127.0.0.1:8080";

    /// Config with only the backend endpoints set.
    pub fn with_endpoints(level1: impl Into<String>, level2: impl Into<String>) -> Self {
        Self::from_layers(
            PartialConfig {
                level1_endpoint: Some(level1.into()),
                level2_endpoint: Some(level2.into()),
                ..PartialConfig::default()
            },
            PartialConfig::default(),
        )
        .expect("endpoint-only config is valid")
    }

    pub fn from_layers(cli_and_env: PartialConfig, file: PartialConfig) -> Result<Self, ConfigError> {
        let p = cli_and_env.over(file);
        let cfg = ServiceConfig {
            level1_endpoint: p
                .level1_endpoint
                .ok_or_else(|| ConfigError::Invalid("level1 endpoint is required".into()))?,
            level2_endpoint: p
                .level2_endpoint
                .ok_or_else(|| ConfigError::Invalid("level2 endpoint is required".into()))?,
            annotator_fixtures: p.annotator_fixtures,
            annotator_endpoints: p.annotator_endpoints.unwrap_or_default(),
            roster_paths: p.roster_paths.unwrap_or_default(),
            max_in_flight: p.max_in_flight.unwrap_or(Self::DEFAULT_MAX_IN_FLIGHT),
            retries: p.retries.unwrap_or(2),
            credit_prefix: p
                .credit_prefix
                .unwrap_or_else(|| DEFAULT_CREDIT_PREFIX.to_string()),
            output_dir: p.output_dir.unwrap_or_else(|| PathBuf::from("capwire-out")),
            listen: p.listen.unwrap_or_else(|| Self::DEFAULT_LISTEN.to_string()),
            backpressure: p.backpressure.unwrap_or_default(),
            result_ttl_secs: p.result_ttl_secs.unwrap_or(3_600),
            strict_roster: p.strict_roster.unwrap_or(true),
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.max_in_flight == 0 {
            return Err(ConfigError::Invalid("max_in_flight must be at least 1".into()));
        }
        for (name, ep) in [("level1", &self.level1_endpoint), ("level2", &self.level2_endpoint)] {
            let ok = ep.strip_prefix("mock:").is_some_and(|p| !p.is_empty())
                || ep.starts_with("http://")
                || ep.starts_with("https://");
            if !ok {
                return Err(ConfigError::Invalid(format!(
                    "{name} endpoint {ep:?} must be \"mock:<path>\" or an http(s) address"
                )));
            }
        }
        for ep in &self.annotator_endpoints {
            if !(ep.starts_with("http://") || ep.starts_with("https://")) {
                return Err(ConfigError::Invalid(format!(
                    "annotator endpoint {ep:?} must be an http(s) address"
                )));
            }
        }
        Ok(())
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            retries: self.retries,
            strict_roster: self.strict_roster,
            credit_prefix: self.credit_prefix.clone(),
            ..PipelineConfig::default()
        }
    }

    pub fn result_ttl(&self) -> Duration {
        Duration::from_secs(self.result_ttl_secs)
    }

    /// Loads rosters, fixtures and backends named by this config.
    pub fn build_components(&self) -> Result<Components, ConfigError> {
        let rosters = load_rosters(&self.roster_paths).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let backends = Backends {
            level1: backend_from_spec(&self.level1_endpoint, Level::Level1).map_err(ConfigError::Invalid)?,
            level2: backend_from_spec(&self.level2_endpoint, Level::Level2).map_err(ConfigError::Invalid)?,
        };
        let mut annotators: Vec<Arc<dyn Annotator>> = Vec::new();
        if let Some(path) = &self.annotator_fixtures {
            let fixtures = load_fixtures(path).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            annotators.push(Arc::new(FixtureAnnotator::new("fixtures", Arc::new(fixtures))));
        }
        for (i, ep) in self.annotator_endpoints.iter().enumerate() {
            annotators.push(Arc::new(RemoteAnnotator::new(
                format!("remote-{i}"),
                RemoteAnnotatorConfig::new(ep.clone()),
            )));
        }
        Ok(Components {
            rosters: Arc::new(rosters),
            backends,
            annotators,
            pipeline: self.pipeline_config(),
        })
    }
}

/// Everything a pipeline run needs, built once from a config.
#[derive(Clone)]
pub struct Components {
    pub rosters: Arc<RosterSet>,
    pub backends: Backends,
    pub annotators: Vec<Arc<dyn Annotator>>,
    pub pipeline: PipelineConfig,
}
