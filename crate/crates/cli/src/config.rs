//! Experiment configuration file.
//!
//! ```toml
//! seed = 42
//! output_dir = "out"
//! score = "load"            # or "location"
//! mode = "enriched"         # or "raw"
//! planning = "per_category" # or "pooled"
//!
//! [trace.synthetic]
//! base_stations = 1000
//! days = 7
//!
//! [l_max]
//! gaming = 10.0
//! ```
//!
//! See the README for every key.

use std::fmt;
use std::path::{Path, PathBuf};

use mecplan::trace::SyntheticConfig;
use mecplan::{Category, LatencyModel, ScoreKind, TraceMode};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Overrides `output_dir` when set.
pub const OUT_DIR_ENV: &str = "MECPLAN_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Planning {
    /// One independent run per category.
    #[default]
    PerCategory,
    /// One run over the tick-weighted sum of all planned categories.
    Pooled,
}

impl fmt::Display for Planning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Planning::PerCategory => "per_category",
            Planning::Pooled => "pooled",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSource {
    /// CSV with `timestamp,bs_id,app_name,bytes_down`.
    pub path: Option<PathBuf>,
    /// CSV with `bs_id,x,y`; required with `path`.
    pub positions: Option<PathBuf>,
    pub synthetic: Option<SyntheticConfig>,
}

/// Latency limit per category in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyLimits {
    pub video: f64,
    pub gaming: f64,
    pub maps: f64,
    pub other: f64,
}

impl Default for LatencyLimits {
    fn default() -> Self {
        Self {
            video: 50.0,
            gaming: 10.0,
            maps: 50.0,
            other: 50.0,
        }
    }
}

impl LatencyLimits {
    pub fn get(&self, category: Category) -> f64 {
        match category {
            Category::Video => self.video,
            Category::Gaming => self.gaming,
            Category::Maps => self.maps,
            Category::Other => self.other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trace: TraceSource,
    pub seed: u64,
    pub step_seconds: u64,
    /// JSON cost models; built-in constants when absent.
    pub cost_models: Option<PathBuf>,
    pub l_max: LatencyLimits,
    #[serde(deserialize_with = "named_field::score")]
    pub score: ScoreKind,
    #[serde(deserialize_with = "named_field::mode")]
    pub mode: TraceMode,
    #[serde(deserialize_with = "named_field::planning")]
    pub planning: Planning,
    pub exhaustive_pairs: bool,
    pub include_other_raw: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            trace: TraceSource::default(),
            seed: 0,
            step_seconds: 3600,
            cost_models: None,
            l_max: LatencyLimits::default(),
            score: ScoreKind::LoadBased,
            mode: TraceMode::Enriched,
            planning: Planning::PerCategory,
            exhaustive_pairs: false,
            include_other_raw: false,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        match (&self.trace.path, &self.trace.synthetic) {
            (Some(_), Some(_)) => return bad("trace: give either `path` or `synthetic`, not both".into()),
            (None, None) => return bad("trace: one of `path` or `synthetic` is required".into()),
            (Some(_), None) if self.trace.positions.is_none() => {
                return bad("trace.positions: required when trace.path is set".into())
            }
            (None, Some(synthetic)) => {
                if self.trace.positions.is_some() {
                    return bad("trace.positions: only valid with trace.path".into());
                }
                synthetic
                    .validate()
                    .map_err(|e| CliError::Config(format!("trace.synthetic: {e}")))?;
            }
            _ => {}
        }
        if self.step_seconds == 0 {
            return bad("step_seconds: must be positive".into());
        }
        let floor = LatencyModel::default().access_ms;
        for category in Category::ALL {
            let limit = self.l_max.get(category);
            if limit.is_nan() || limit < floor {
                return bad(format!(
                    "l_max.{category} = {limit} ms is below the {floor} ms access-latency floor"
                ));
            }
        }
        Ok(())
    }

    /// Resolves relative paths against `base`, the config file's directory.
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for path in [&mut self.trace.path, &mut self.trace.positions, &mut self.cost_models]
            .into_iter()
            .flatten()
        {
            fix(path);
        }
        fix(&mut self.output_dir);
    }
}

/// Enum keys parsed from strings so errors name the key.
mod named_field {
    use serde::de::{Deserializer, Error};
    use serde::Deserialize;

    use super::Planning;
    use mecplan::{ScoreKind, TraceMode};

    fn parse<'de, D: Deserializer<'de>, T>(
        d: D,
        key: &str,
        parse: impl Fn(&str) -> Option<T>,
        expected: &str,
    ) -> Result<T, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).ok_or_else(|| D::Error::custom(format!("{key}: unknown value `{s}`, expected {expected}")))
    }

    pub fn score<'de, D: Deserializer<'de>>(d: D) -> Result<ScoreKind, D::Error> {
        parse(d, "score", |s| s.parse().ok(), "`location` or `load`")
    }

    pub fn mode<'de, D: Deserializer<'de>>(d: D) -> Result<TraceMode, D::Error> {
        parse(d, "mode", |s| s.parse().ok(), "`enriched` or `raw`")
    }

    pub fn planning<'de, D: Deserializer<'de>>(d: D) -> Result<Planning, D::Error> {
        let known = |s: &str| match s {
            "per_category" => Some(Planning::PerCategory),
            "pooled" => Some(Planning::Pooled),
            _ => None,
        };
        parse(d, "planning", known, "`per_category` or `pooled`")
    }
}

/// Reads and validates a config file. Relative paths are taken from the
/// file's directory; `MECPLAN_OUT` replaces the output directory.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut config = ExperimentConfig::from_toml_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
    config.resolve(path.parent().unwrap_or(Path::new(".")));
    if let Some(dir) = std::env::var_os(OUT_DIR_ENV) {
        config.output_dir = PathBuf::from(dir);
    }
    Ok(config)
}
