//! The full pipeline on one simulation loop.

use std::collections::VecDeque;
use std::io::Write;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapt::{apply_feedback, AdaptError, EmaScheduler, FeedbackEvent, FeedbackKind, FeedbackSteps, GlobalSteering, MaueTable, PreferenceStore, Prompt, QoEConfig};
use crate::config::{ConfigError, EngineConfig, Scenario};
use crate::director::{Director, DirectorMode, ShotCatalog, ShotLogRecord};
use crate::events::{Event, EventKind, EventManager, EventsError};
use crate::world::{stream_seed, WorldError, WorldState};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Events(#[from] EventsError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
    #[error("director: {0}")]
    Director(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Partial QoE update; absent fields keep their value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QoEPatch {
    pub transition_duration: Option<f64>,
    pub shot_duration: Option<f64>,
    pub f: Option<f64>,
    pub fetch_period: Option<f64>,
    pub global_coefficient: Option<f64>,
}

impl QoEPatch {
    pub fn apply(&self, base: &QoEConfig) -> Result<QoEConfig, AdaptError> {
        let mut c = *base;
        if let Some(v) = self.transition_duration {
            c.transition_duration = v;
        }
        if let Some(v) = self.shot_duration {
            c.shot_duration = v;
        }
        if let Some(v) = self.f {
            c.f = v;
        }
        if let Some(v) = self.fetch_period {
            c.fetch_period = v;
        }
        if let Some(v) = self.global_coefficient {
            c.global_coefficient = v;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Inbound work queued between ticks.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Feedback(FeedbackEvent),
    SetConfig(QoEPatch),
}

/// Outbound notices produced by a tick, in order.
#[derive(Debug, Clone, PartialEq)]
pub enum Notice {
    Event(Event, DirectorMode),
    Shot { event_id: u64, index: usize, spec: String },
    Prompt(Prompt),
    Config(QoEConfig),
    Skipped { event_id: u64, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickReport {
    pub record: ShotLogRecord,
    pub notices: Vec<Notice>,
}

pub struct Engine {
    world: WorldState,
    events: EventManager,
    director: Director,
    catalog: ShotCatalog,
    qoe: QoEConfig,
    maue: MaueTable,
    steps: FeedbackSteps,
    prefs: PreferenceStore,
    prefs_path: Option<PathBuf>,
    session: Option<String>,
    steering: GlobalSteering,
    ema: EmaScheduler,
    rng: ChaCha8Rng,
    queue: VecDeque<Command>,
    next_fetch: f64,
    announced: Vec<(f64, Event)>,
}

const DIRECTOR_STREAM: u64 = u64::MAX - 1;

impl Engine {
    pub fn new(scenario: &Scenario, config: &EngineConfig) -> Result<Self, EngineError> {
        Self::with_first_fetch(scenario, config, None)
    }

    /// `first_fetch` overrides when the first fetch happens (default: one
    /// fetch period in).
    pub fn with_first_fetch(scenario: &Scenario, config: &EngineConfig, first_fetch: Option<f64>) -> Result<Self, EngineError> {
        config.validate("config")?;
        scenario.validate("scenario")?;
        let world = WorldState::spawn(scenario.world())?;
        let qoe = config.adapt.qoe;
        let mut global = config.events.global;
        global.coefficient = qoe.global_coefficient;
        let events = EventManager::new(config.events.weights, qoe.f, config.events.election, global)?;
        let director = Director::new(config.director.clone(), &world, config.psl.fov).map_err(EngineError::Director)?;
        let prefs = match &config.adapt.preferences {
            Some(p) => PreferenceStore::load(p)?,
            None => PreferenceStore::default(),
        };
        let session = config.adapt.session.clone();
        let catalog = ShotCatalog {
            table: config.composition_table()?,
            rules: config.composition.rules.clone(),
            maps: config.psl,
            prefs: session.as_deref().and_then(|s| prefs.session(s)).cloned(),
        };
        Ok(Self {
            events,
            director,
            catalog,
            qoe,
            maue: config.maue_table()?,
            steps: config.adapt.steps,
            prefs,
            prefs_path: config.adapt.preferences.clone(),
            session,
            steering: GlobalSteering::new(config.adapt.steering_window, config.adapt.steering_eta),
            ema: EmaScheduler::new(config.adapt.pacing_interval_s),
            rng: ChaCha8Rng::seed_from_u64(stream_seed(scenario.seed, DIRECTOR_STREAM)),
            queue: VecDeque::new(),
            next_fetch: first_fetch.unwrap_or(qoe.fetch_period),
            announced: Vec::new(),
            world,
        })
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn director(&self) -> &Director {
        &self.director
    }

    pub fn qoe(&self) -> &QoEConfig {
        &self.qoe
    }

    pub fn maue_table(&self) -> &MaueTable {
        &self.maue
    }

    pub fn catalog(&self) -> &ShotCatalog {
        &self.catalog
    }

    pub fn preferences(&self) -> &PreferenceStore {
        &self.prefs
    }

    pub fn announced(&self) -> &[(f64, Event)] {
        &self.announced
    }

    /// Checks a command and queues it for the next tick.
    pub fn submit(&mut self, cmd: Command) -> Result<(), EngineError> {
        match &cmd {
            Command::Feedback(fb) => {
                fb.template()?;
            }
            Command::SetConfig(p) => {
                p.apply(&self.qoe)?;
            }
        }
        self.queue.push_back(cmd);
        Ok(())
    }

    fn drain_queue(&mut self, notices: &mut Vec<Notice>) -> Result<(), EngineError> {
        let before = self.qoe;
        while let Some(cmd) = self.queue.pop_front() {
            match cmd {
                Command::Feedback(fb) => {
                    let (qoe, prefs) = apply_feedback(&self.qoe, &self.prefs, &fb, &self.catalog.table, &self.steps)?;
                    self.qoe = qoe;
                    self.prefs = prefs;
                    if matches!(fb.kind, FeedbackKind::CompUp | FeedbackKind::CompDown) {
                        let active = self.session.get_or_insert_with(|| fb.session.clone()).clone();
                        self.catalog.prefs = self.prefs.session(&active).cloned();
                        if let Some(p) = &self.prefs_path {
                            self.prefs.save(p)?;
                        }
                    }
                }
                Command::SetConfig(p) => {
                    // Validated on submit, but feedback may have moved things since.
                    if let Ok(c) = p.apply(&self.qoe) {
                        self.qoe = c;
                    }
                }
            }
        }
        if self.qoe != before {
            self.sync_qoe()?;
            notices.push(Notice::Config(self.qoe));
        }
        Ok(())
    }

    fn sync_qoe(&mut self) -> Result<(), EngineError> {
        self.events.set_ratio(self.qoe.f)?;
        self.events.global.coefficient = self.qoe.global_coefficient;
        Ok(())
    }

    /// One simulation tick: queued commands, world, fetch, director, prompts.
    pub fn tick(&mut self) -> Result<TickReport, EngineError> {
        let mut notices = Vec::new();
        self.drain_queue(&mut notices)?;
        let dt = self.world.config().dt();
        self.world.step(dt);
        let t = self.world.time;

        if t + 1e-9 >= self.next_fetch {
            self.next_fetch += self.qoe.fetch_period;
            let outcome = self.events.fetch(&self.world, t)?;
            self.world.reset_windows();
            if let Some(ev) = outcome.elected {
                if self.director.is_patrolling() {
                    match self.director.begin(&ev, &self.world, &self.catalog, &mut self.rng, &self.qoe) {
                        Ok(true) => {
                            self.announced.push((t, ev.clone()));
                            let c = self.steering.record(ev.kind, self.qoe.global_coefficient, self.qoe.bounds.global_coefficient);
                            if c != self.qoe.global_coefficient {
                                self.qoe.global_coefficient = c;
                                self.sync_qoe()?;
                                notices.push(Notice::Config(self.qoe));
                            }
                        }
                        Ok(false) => {}
                        Err(e) => {
                            tracing::info!(event = ev.id, "shot planning failed: {e}");
                            notices.push(Notice::Skipped {
                                event_id: ev.id,
                                reason: e.to_string(),
                            });
                        }
                    }
                } else {
                    tracing::debug!(event = ev.id, "director busy, event ignored");
                }
            }
        }

        let (record, out) = self.director.tick(&self.world, t, dt);
        if let Some((ev, mode)) = out.started {
            notices.push(Notice::Event(ev, mode));
        }
        if let Some((event_id, index, spec)) = out.shot_started {
            notices.push(Notice::Shot {
                event_id,
                index,
                spec: spec.to_string(),
            });
        }
        let ended: Vec<_> = out.ended.into_iter().collect();
        for p in self.ema.poll(t, &ended) {
            notices.push(Notice::Prompt(p));
        }
        Ok(TickReport { record, notices })
    }

    pub fn ticks_for(&self, seconds: f64) -> u64 {
        (seconds * f64::from(self.world.config().tick_rate)).round() as u64
    }

    /// Runs headless for `duration` seconds, writing one JSON line per tick.
    pub fn run<W: Write>(&mut self, duration: f64, out: &mut W) -> Result<RunSummary, EngineError> {
        let mut summary = RunSummary::default();
        for _ in 0..self.ticks_for(duration) {
            let report = self.tick()?;
            crate::shotlog::write_record(out, &report.record)?;
            summary.ticks += 1;
            for n in &report.notices {
                match n {
                    Notice::Skipped { .. } => summary.skipped += 1,
                    Notice::Prompt(_) => summary.prompts += 1,
                    _ => {}
                }
            }
        }
        summary.announcements = self.announced.len();
        summary.global_announcements = self.announced.iter().filter(|(_, e)| e.kind == EventKind::Global).count();
        Ok(summary)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub ticks: u64,
    pub announcements: usize,
    pub global_announcements: usize,
    pub skipped: usize,
    pub prompts: usize,
}

/// Runs a scenario headless and returns the shot log bytes.
pub fn run_to_vec(scenario: &Scenario, config: &EngineConfig, duration: f64) -> Result<(Vec<u8>, RunSummary), EngineError> {
    let mut engine = Engine::new(scenario, config)?;
    let mut buf = Vec::new();
    let summary = engine.run(duration, &mut buf)?;
    Ok((buf, summary))
}
