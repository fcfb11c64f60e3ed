//! Scenario and engine configuration files.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapt::{FeedbackSteps, MaueTable, QoEConfig};
use crate::composition::{CompositionTable, ExtraFilter, RuleSet};
use crate::director::DirectorConfig;
use crate::events::{ElectionConfig, GlobalDetection, ImportanceWeights};
use crate::psl::SolveMaps;
use crate::world::{BehaviorRates, Bounds, Obstacle, PointOfInterest, WorldConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    /// `field` is the JSON path of the offending value.
    #[error("{path}: {field}: {message}")]
    Invalid {
        path: String,
        field: String,
        message: String,
    },
}

impl ConfigError {
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { field, .. } => Some(field),
            ConfigError::Io { .. } => None,
        }
    }
}

/// Parses JSON text, reporting the path of the first bad field.
pub fn from_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Invalid {
        path: origin.to_string(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn invalid(path: &str, field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.to_string(),
        field: field.into(),
        message: message.into(),
    }
}

/// A world to simulate and how long to run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    pub avatar_count: usize,
    pub bounds: Bounds,
    #[serde(default)]
    pub pois: Vec<PointOfInterest>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default = "default_tick_rate")]
    pub tick_rate: u32,
    #[serde(default)]
    pub rates: BehaviorRates,
}

fn default_duration() -> f64 {
    60.0
}

fn default_tick_rate() -> u32 {
    20
}

impl Scenario {
    /// The campus world with 12 avatars.
    pub fn campus(seed: u64) -> Self {
        let w = WorldConfig::campus(seed, 12);
        Self {
            seed,
            duration_s: 60.0,
            avatar_count: w.avatar_count,
            bounds: w.bounds,
            pois: w.pois,
            obstacles: w.obstacles,
            tick_rate: w.tick_rate,
            rates: w.rates,
        }
    }

    pub fn world(&self) -> WorldConfig {
        WorldConfig {
            bounds: self.bounds,
            pois: self.pois.clone(),
            obstacles: self.obstacles.clone(),
            avatar_count: self.avatar_count,
            tick_rate: self.tick_rate,
            seed: self.seed,
            rates: self.rates.clone(),
        }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let s: Self = from_json(text, origin)?;
        s.validate(origin)?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&read(path)?, &path.display().to_string())
    }

    pub fn validate(&self, origin: &str) -> Result<(), ConfigError> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(invalid(origin, "duration_s", "must be positive"));
        }
        self.world().validate().map_err(|e| match e {
            crate::world::WorldError::InvalidConfig { field, reason } => invalid(origin, field, reason),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EventsSection {
    pub weights: ImportanceWeights,
    pub election: ElectionConfig,
    pub global: GlobalDetection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompositionSection {
    pub rules: RuleSet,
    /// JSON list of table rows layered over the published ones.
    pub table: Option<PathBuf>,
    pub threshold: f64,
}

impl Default for CompositionSection {
    fn default() -> Self {
        Self {
            rules: RuleSet::default(),
            table: None,
            threshold: 3.5,
        }
    }
}

impl CompositionSection {
    pub fn with_filters(filters: &[ExtraFilter]) -> Self {
        let mut s = Self::default();
        s.rules.extra_filters = filters.to_vec();
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptSection {
    pub qoe: QoEConfig,
    pub maue_table: Option<PathBuf>,
    pub steps: FeedbackSteps,
    pub pacing_interval_s: f64,
    pub steering_window: usize,
    pub steering_eta: f64,
    /// Persisted per-session composition preferences.
    pub preferences: Option<PathBuf>,
    /// Session whose preferences shape the director's shot pool.
    pub session: Option<String>,
}

impl Default for AdaptSection {
    fn default() -> Self {
        Self {
            qoe: QoEConfig::default(),
            maue_table: None,
            steps: FeedbackSteps::default(),
            pacing_interval_s: 600.0,
            steering_window: 20,
            steering_eta: 0.05,
            preferences: None,
            session: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub snapshot_hz: f64,
    /// Per-client outbox capacity in messages.
    pub outbox: usize,
    /// Run the simulation this many times faster than the wall clock.
    pub speed: f64,
}

impl Default for ServeSection {
    fn default() -> Self {
        Self {
            snapshot_hz: 10.0,
            outbox: 256,
            speed: 1.0,
        }
    }
}

/// Everything except the world itself, which comes from a scenario (or
/// the optional `world` section when serving).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub world: Option<Scenario>,
    pub events: EventsSection,
    pub psl: SolveMaps<f64>,
    pub composition: CompositionSection,
    pub director: DirectorConfig,
    pub adapt: AdaptSection,
    pub serve: ServeSection,
}

impl EngineConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let c: Self = from_json(text, origin)?;
        c.validate(origin)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&read(path)?, &path.display().to_string())
    }

    pub fn validate(&self, origin: &str) -> Result<(), ConfigError> {
        if let Some(w) = &self.world {
            w.validate(origin)?;
        }
        if !self.events.weights.is_valid() {
            return Err(invalid(origin, "events.weights", "need at least one positive weight and none negative"));
        }
        if self.events.global.cell_size <= 0.0 {
            return Err(invalid(origin, "events.global.cell_size", "must be positive"));
        }
        self.psl
            .validate()
            .map_err(|e| invalid(origin, "psl", e.to_string()))?;
        let th = self.composition.threshold;
        if !(th > 1.0 && th < 5.0) {
            return Err(invalid(origin, "composition.threshold", "must lie in (1, 5)"));
        }
        self.adapt.qoe.validate().map_err(|e| {
            let field = match &e {
                crate::adapt::AdaptError::OutOfBounds { field, .. } => format!("adapt.qoe.{field}"),
                _ => "adapt.qoe".to_string(),
            };
            invalid(origin, field, e.to_string())
        })?;
        let d = &self.director;
        if d.shots_per_event == 0 {
            return Err(invalid(origin, "director.shots_per_event", "must be at least 1"));
        }
        if d.retry_budget == 0 {
            return Err(invalid(origin, "director.retry_budget", "must be at least 1"));
        }
        if d.patrol.speed <= 0.0 {
            return Err(invalid(origin, "director.patrol.speed", "must be positive"));
        }
        if self.serve.snapshot_hz <= 0.0 || self.serve.speed <= 0.0 || self.serve.outbox == 0 {
            return Err(invalid(origin, "serve", "rates and outbox must be positive"));
        }
        Ok(())
    }

    pub fn composition_table(&self) -> Result<CompositionTable, ConfigError> {
        let mut table = match &self.composition.table {
            Some(p) => CompositionTable::load(p).map_err(|e| invalid(&p.display().to_string(), "composition.table", e.to_string()))?,
            None => CompositionTable::default(),
        };
        table.threshold = self.composition.threshold;
        Ok(table)
    }

    pub fn maue_table(&self) -> Result<MaueTable, ConfigError> {
        match &self.adapt.maue_table {
            Some(p) => MaueTable::load(p).map_err(|e| invalid(&p.display().to_string(), "adapt.maue_table", e.to_string())),
            None => Ok(MaueTable::default()),
        }
    }
}
