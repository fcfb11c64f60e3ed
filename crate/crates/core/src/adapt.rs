//! QoE model and the live feedback loop.
//!
//! The defaults here come from offline experiments (the 2:5 transition to
//! shot ratio, three switches per minute, a fetch every ten seconds). At run
//! time the viewer's momentary feedback nudges the pacing parameters and the
//! per-session composition preferences within fixed bounds.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composition::CompositionTable;
use crate::events::EventKind;
use crate::psl::{ShotSpec, ShotTemplate};

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("{kind:?} feedback requires a shot spec context")]
    MissingContext { kind: FeedbackKind },
    #[error("feedback context is not a shot spec: {0}")]
    BadContext(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid QoE config: {0}")]
    InvalidConfig(String),
    #[error("{field}: {reason}")]
    OutOfBounds { field: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QoEBounds {
    pub transition_duration: Range,
    pub shot_duration: Range,
    pub f: Range,
    pub fetch_period: Range,
    pub global_coefficient: Range,
}

impl Default for QoEBounds {
    fn default() -> Self {
        Self {
            transition_duration: Range::new(0.5, 5.0),
            shot_duration: Range::new(1.0, 20.0),
            f: Range::new(0.05, 1.0),
            fetch_period: Range::new(5.0, 30.0),
            global_coefficient: Range::new(0.1, 10.0),
        }
    }
}

/// The live announcer parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QoEConfig {
    pub transition_duration: f64,
    pub shot_duration: f64,
    pub f: f64,
    pub fetch_period: f64,
    pub global_coefficient: f64,
    pub bounds: QoEBounds,
}

impl Default for QoEConfig {
    fn default() -> Self {
        Self {
            transition_duration: 2.0,
            shot_duration: 5.0,
            f: 0.5,
            fetch_period: 10.0,
            global_coefficient: 1.0,
            bounds: QoEBounds::default(),
        }
    }
}

impl QoEConfig {
    /// Expected announcements per minute.
    pub fn switches_per_minute(&self) -> f64 {
        self.f * 60.0 / self.fetch_period
    }

    pub fn validate(&self) -> Result<(), AdaptError> {
        let b = &self.bounds;
        let checks = [
            ("transition_duration", self.transition_duration, b.transition_duration),
            ("shot_duration", self.shot_duration, b.shot_duration),
            ("f", self.f, b.f),
            ("fetch_period", self.fetch_period, b.fetch_period),
            ("global_coefficient", self.global_coefficient, b.global_coefficient),
        ];
        for (name, v, r) in checks {
            if !r.contains(v) {
                return Err(AdaptError::OutOfBounds {
                    field: name,
                    reason: format!("{v} outside [{}, {}]", r.min, r.max),
                });
            }
        }
        if self.transition_duration > self.shot_duration {
            return Err(AdaptError::OutOfBounds {
                field: "transition_duration",
                reason: "must not exceed shot_duration".into(),
            });
        }
        if !(self.f > 0.0 && self.f <= 1.0) {
            return Err(AdaptError::OutOfBounds {
                field: "f",
                reason: "must lie in (0, 1]".into(),
            });
        }
        Ok(())
    }

    /// Clamps every field into its bounds.
    pub fn clamped(mut self) -> Self {
        let b = self.bounds;
        self.shot_duration = b.shot_duration.clamp(self.shot_duration);
        self.transition_duration = b
            .transition_duration
            .clamp(self.transition_duration)
            .min(self.shot_duration);
        self.f = b.f.clamp(self.f);
        self.fetch_period = b.fetch_period.clamp(self.fetch_period);
        self.global_coefficient = b.global_coefficient.clamp(self.global_coefficient);
        self
    }
}

/// Piecewise-linear factor curves of the experience model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaueTable {
    /// (transition seconds, MOS)
    pub transition_curve: Vec<(f64, f64)>,
    /// (switches per minute, MOS)
    pub repetition_curve: Vec<(f64, f64)>,
    /// Weights of (transition, repetition, composition).
    pub weights: [f64; 3],
}

impl Default for MaueTable {
    /// Synthetic knot values that only encode the measured ordering: a peak
    /// at 2 s with 5 s below 0 s, and a peak at three switches per minute
    /// with four above five.
    fn default() -> Self {
        Self {
            transition_curve: vec![
                (0.0, 3.0),
                (1.0, 3.4),
                (2.0, 4.2),
                (3.0, 3.8),
                (4.0, 3.2),
                (5.0, 2.6),
            ],
            repetition_curve: vec![
                (1.0, 3.2),
                (2.0, 3.6),
                (3.0, 4.3),
                (4.0, 3.9),
                (5.0, 3.4),
            ],
            weights: [1.0, 1.0, 1.0],
        }
    }
}

fn interpolate(knots: &[(f64, f64)], x: f64) -> f64 {
    match knots {
        [] => 3.0,
        [only] => only.1,
        _ => {
            if x <= knots[0].0 {
                return knots[0].1;
            }
            for w in knots.windows(2) {
                let ((x0, y0), (x1, y1)) = (w[0], w[1]);
                if x <= x1 {
                    return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
                }
            }
            knots[knots.len() - 1].1
        }
    }
}

impl MaueTable {
    pub fn validate(&self) -> Result<(), AdaptError> {
        for (name, curve) in [
            ("transition_curve", &self.transition_curve),
            ("repetition_curve", &self.repetition_curve),
        ] {
            if curve.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(AdaptError::InvalidConfig(format!(
                    "{name} abscissae must be strictly increasing"
                )));
            }
            if curve.iter().any(|k| !(1.0..=5.0).contains(&k.1)) {
                return Err(AdaptError::InvalidConfig(format!("{name} MOS outside [1, 5]")));
            }
        }
        if self.weights.iter().any(|w| *w < 0.0) || self.weights.iter().sum::<f64>() <= 0.0 {
            return Err(AdaptError::InvalidConfig("weights must be non-negative with a positive sum".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AdaptError> {
        let text = std::fs::read_to_string(path).map_err(|e| AdaptError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let t: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| AdaptError::InvalidConfig(format!("{}: {}", e.path(), e.inner())))?;
        t.validate()?;
        Ok(t)
    }

    pub fn transition_mos(&self, seconds: f64) -> f64 {
        interpolate(&self.transition_curve, seconds)
    }

    pub fn repetition_mos(&self, per_minute: f64) -> f64 {
        interpolate(&self.repetition_curve, per_minute)
    }

    /// Weighted mean of the factor scores, clamped to [1, 5].
    pub fn estimate(&self, transition: f64, per_minute: f64, composition: f64) -> f64 {
        let [wt, wr, wc] = self.weights;
        let v = (wt * self.transition_mos(transition)
            + wr * self.repetition_mos(per_minute)
            + wc * composition)
            / (wt + wr + wc);
        v.clamp(1.0, 5.0)
    }
}

pub fn maue_estimate(config: &QoEConfig, table: &MaueTable, mean_composition_mos: f64) -> f64 {
    table.estimate(
        config.transition_duration,
        config.switches_per_minute(),
        mean_composition_mos,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeedbackKind {
    CompUp,
    CompDown,
    SpeedUp,
    SlowDown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub kind: FeedbackKind,
    pub timestamp: f64,
    /// Shot spec text for composition feedback.
    #[serde(default)]
    pub context: Option<String>,
    pub session: String,
}

impl FeedbackEvent {
    /// Template the composition feedback refers to.
    pub fn template(&self) -> Result<Option<ShotTemplate>, AdaptError> {
        match self.kind {
            FeedbackKind::SpeedUp | FeedbackKind::SlowDown => Ok(None),
            kind => {
                let ctx = self
                    .context
                    .as_deref()
                    .ok_or(AdaptError::MissingContext { kind })?;
                let t = match ctx.parse::<ShotSpec>() {
                    Ok(spec) => spec.template(),
                    Err(_) => ctx
                        .parse::<ShotTemplate>()
                        .map_err(|e| AdaptError::BadContext(e.to_string()))?,
                };
                Ok(Some(t))
            }
        }
    }
}

/// Feedback step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackSteps {
    pub composition: f64,
    pub transition_factor: f64,
    pub fetch_factor: f64,
}

impl Default for FeedbackSteps {
    fn default() -> Self {
        Self {
            composition: 0.25,
            transition_factor: 0.8,
            fetch_factor: 0.9,
        }
    }
}

/// Personal composition score deltas.
pub type SessionPrefs = BTreeMap<ShotTemplate, f64>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreferenceStore {
    pub sessions: BTreeMap<String, SessionPrefs>,
}

impl PreferenceStore {
    pub fn session(&self, id: &str) -> Option<&SessionPrefs> {
        self.sessions.get(id)
    }

    pub fn load(path: &Path) -> Result<Self, AdaptError> {
        let io = |e: std::io::Error| AdaptError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| AdaptError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(io(e)),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), AdaptError> {
        let text = serde_json::to_string_pretty(self).expect("preference store serializes");
        std::fs::write(path, text).map_err(|e| AdaptError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Applies one feedback event. Pacing feedback scales both the transition
/// time and the fetch period; composition feedback shifts the session's
/// personal score for the template, keeping the adjusted score in [1, 5].
pub fn apply_feedback(
    config: &QoEConfig,
    prefs: &PreferenceStore,
    fb: &FeedbackEvent,
    table: &CompositionTable,
    steps: &FeedbackSteps,
) -> Result<(QoEConfig, PreferenceStore), AdaptError> {
    let mut config = *config;
    let mut prefs = prefs.clone();
    match fb.kind {
        FeedbackKind::SpeedUp => {
            config.transition_duration *= steps.transition_factor;
            config.fetch_period *= steps.fetch_factor;
        }
        FeedbackKind::SlowDown => {
            config.transition_duration /= steps.transition_factor;
            config.fetch_period /= steps.fetch_factor;
        }
        FeedbackKind::CompUp | FeedbackKind::CompDown => {
            let t = fb.template()?.expect("composition feedback has a template");
            let base = table.score(&t);
            let sign = if fb.kind == FeedbackKind::CompUp { 1.0 } else { -1.0 };
            let entry = prefs
                .sessions
                .entry(fb.session.clone())
                .or_default()
                .entry(t)
                .or_insert(0.0);
            *entry = (*entry + sign * steps.composition).clamp(1.0 - base, 5.0 - base);
        }
    }
    Ok((config.clamped(), prefs))
}

/// Due EMA prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prompt {
    Composition { t: f64, event_id: u64, spec: Option<String> },
    Pacing { t: f64 },
}

/// Composition prompts at each announced event's end, pacing prompts on a
/// fixed session-time interval.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaScheduler {
    pub pacing_interval: f64,
    next_pacing: f64,
    last_clock: f64,
}

impl Default for EmaScheduler {
    fn default() -> Self {
        Self::new(600.0)
    }
}

/// An announced event that just finished.
#[derive(Debug, Clone, PartialEq)]
pub struct EndedEvent {
    pub event_id: u64,
    pub end: f64,
    pub last_spec: Option<String>,
}

impl EmaScheduler {
    pub fn new(pacing_interval: f64) -> Self {
        Self {
            pacing_interval,
            next_pacing: pacing_interval,
            last_clock: f64::NEG_INFINITY,
        }
    }

    pub fn poll(&mut self, clock: f64, ended: &[EndedEvent]) -> Vec<Prompt> {
        debug_assert!(clock >= self.last_clock, "clock must be monotone");
        self.last_clock = clock;
        let mut out: Vec<Prompt> = ended
            .iter()
            .map(|e| Prompt::Composition {
                t: e.end,
                event_id: e.event_id,
                spec: e.last_spec.clone(),
            })
            .collect();
        while self.pacing_interval > 0.0 && clock + 1e-9 >= self.next_pacing {
            out.push(Prompt::Pacing { t: self.next_pacing });
            self.next_pacing += self.pacing_interval;
        }
        out
    }
}

pub fn ema_schedule(scheduler: &mut EmaScheduler, clock: f64, ended: &[EndedEvent]) -> Vec<Prompt> {
    scheduler.poll(clock, ended)
}

/// One multiplicative step toward an equal local/global share.
pub fn steer_global_coefficient(history: &[EventKind], coefficient: f64, eta: f64, bounds: Range) -> f64 {
    if history.is_empty() {
        return coefficient;
    }
    let globals = history.iter().filter(|k| k.is_global()).count();
    let share = globals as f64 / history.len() as f64;
    let next = if share < 0.5 {
        coefficient * (1.0 + eta)
    } else if share > 0.5 {
        coefficient * (1.0 - eta)
    } else {
        coefficient
    };
    bounds.clamp(next)
}

/// Sliding window of announced kinds driving the global coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSteering {
    pub window: usize,
    pub eta: f64,
    history: VecDeque<EventKind>,
}

impl Default for GlobalSteering {
    fn default() -> Self {
        Self {
            window: 20,
            eta: 0.05,
            history: VecDeque::new(),
        }
    }
}

impl GlobalSteering {
    pub fn new(window: usize, eta: f64) -> Self {
        Self {
            window,
            eta,
            history: VecDeque::new(),
        }
    }

    pub fn record(&mut self, kind: EventKind, coefficient: f64, bounds: Range) -> f64 {
        self.history.push_back(kind);
        while self.history.len() > self.window.max(1) {
            self.history.pop_front();
        }
        let h: Vec<EventKind> = self.history.iter().copied().collect();
        steer_global_coefficient(&h, coefficient, self.eta, bounds)
    }
}
