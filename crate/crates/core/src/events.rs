//! Importance scoring, the dynamic threshold and event election.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::world::{ActionSample, AvatarId, BehaviorPhase, DensityMap, WorldState};

#[derive(Debug, Error, PartialEq)]
pub enum EventsError {
    #[error("online avatar count must be at least 1")]
    NoAvatars,
    #[error("hit-frequency ratio {0} outside [0, 1]")]
    RatioOutOfRange(f64),
}

/// Per-channel weights of the linear importance function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportanceWeights {
    pub move_distance: f64,
    pub move_speed: f64,
    pub spoken_words: f64,
    pub voxel_count: f64,
    pub tx_volume: f64,
}

impl Default for ImportanceWeights {
    fn default() -> Self {
        Self {
            move_distance: 0.1,
            move_speed: 0.2,
            spoken_words: 0.5,
            voxel_count: 2.0,
            tx_volume: 2.0,
        }
    }
}

impl ImportanceWeights {
    pub fn zero() -> Self {
        Self {
            move_distance: 0.0,
            move_speed: 0.0,
            spoken_words: 0.0,
            voxel_count: 0.0,
            tx_volume: 0.0,
        }
    }

    fn as_array(&self) -> [f64; 5] {
        [
            self.move_distance,
            self.move_speed,
            self.spoken_words,
            self.voxel_count,
            self.tx_volume,
        ]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            move_distance: self.move_distance * c,
            move_speed: self.move_speed * c,
            spoken_words: self.spoken_words * c,
            voxel_count: self.voxel_count * c,
            tx_volume: self.tx_volume * c,
        }
    }

    pub fn is_valid(&self) -> bool {
        let w = self.as_array();
        w.iter().all(|x| *x >= 0.0 && x.is_finite()) && w.iter().any(|x| *x > 0.0)
    }
}

/// Weighted sum of the action channels.
pub fn importance(sample: &ActionSample, weights: &ImportanceWeights) -> f64 {
    weights.move_distance * sample.move_distance
        + weights.move_speed * sample.move_speed
        + weights.spoken_words * sample.spoken_words
        + weights.voxel_count * sample.voxel_count
        + weights.tx_volume * sample.tx_volume
}

/// Threshold percentile `1 - f^(1/n)`.
///
/// With a per-avatar exceedance probability of `i`, the probability that none
/// of `n` independent avatars exceeds the cutoff is exactly `f`.
pub fn dynamic_threshold(n: usize, f: f64) -> Result<f64, EventsError> {
    if n == 0 {
        return Err(EventsError::NoAvatars);
    }
    if !(0.0..=1.0).contains(&f) {
        return Err(EventsError::RatioOutOfRange(f));
    }
    Ok(1.0 - f.powf(1.0 / n as f64))
}

/// Running normal model of the importance distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceModel {
    pub mu: f64,
    pub sigma: f64,
}

impl ImportanceModel {
    pub const PRIOR: Self = Self { mu: 0.0, sigma: 1.0 };
    pub const SIGMA_FLOOR: f64 = 1e-6;

    /// Value at the given lower-tail quantile; infinite at 0 and 1.
    pub fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        let normal = Normal::new(self.mu, self.sigma.max(Self::SIGMA_FLOOR))
            .expect("sigma is positive");
        normal.inverse_cdf(p)
    }
}

impl Default for ImportanceModel {
    fn default() -> Self {
        Self::PRIOR
    }
}

/// Sample mean and standard deviation of the last `window` scores.
pub fn calibrate_model(history: &[f64], window: usize) -> ImportanceModel {
    let start = history.len().saturating_sub(window.max(2));
    let recent = &history[start..];
    if recent.len() < 2 {
        return ImportanceModel::PRIOR;
    }
    let n = recent.len() as f64;
    let mu = recent.iter().sum::<f64>() / n;
    let var = recent.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0);
    ImportanceModel {
        mu,
        sigma: var.sqrt().max(ImportanceModel::SIGMA_FLOOR),
    }
}

/// Live threshold: target hit ratio, online count, percentile and cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdState {
    /// Target fraction of fetch cycles that should find a local candidate.
    pub f: f64,
    pub n: usize,
    /// Per-avatar exceedance percentile.
    pub i: f64,
    pub cutoff: f64,
}

impl ThresholdState {
    pub fn new(f: f64, n: usize, model: &ImportanceModel) -> Result<Self, EventsError> {
        let mut s = Self {
            f,
            n,
            i: 0.0,
            cutoff: f64::INFINITY,
        };
        s.update(n, model)?;
        Ok(s)
    }

    /// Recomputes the percentile and cutoff.
    ///
    /// The percentile is taken from the miss ratio `1 - f`, which makes the
    /// probability that at least one of `n` avatars clears the cutoff equal
    /// to `f` for every `f`. At the default `f = 0.5` the two readings agree.
    pub fn update(&mut self, n: usize, model: &ImportanceModel) -> Result<(), EventsError> {
        if !(0.0..=1.0).contains(&self.f) {
            return Err(EventsError::RatioOutOfRange(self.f));
        }
        self.n = n;
        self.i = dynamic_threshold(n, 1.0 - self.f)?;
        self.cutoff = model.quantile(1.0 - self.i);
        Ok(())
    }

    pub fn set_ratio(&mut self, f: f64, model: &ImportanceModel) -> Result<(), EventsError> {
        self.f = f;
        self.update(self.n, model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    LocalSingle,
    LocalMulti,
    Global,
}

impl EventKind {
    pub fn is_global(self) -> bool {
        self == Self::Global
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub id: u64,
    pub kind: EventKind,
    pub subjects: Vec<AvatarId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    pub score: f64,
    pub timestamp: f64,
}

impl Event {
    pub fn is_well_formed(&self) -> bool {
        match self.kind {
            EventKind::LocalSingle => self.subjects.len() == 1,
            EventKind::LocalMulti => self.subjects.len() >= 2,
            EventKind::Global => self.region.is_some(),
        }
    }
}

/// Gathering detection settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalDetection {
    pub cell_size: f64,
    pub gathering_threshold: u32,
    pub coefficient: f64,
}

impl Default for GlobalDetection {
    fn default() -> Self {
        Self {
            cell_size: 10.0,
            gathering_threshold: 4,
            coefficient: 1.0,
        }
    }
}

/// Global event at the densest cell if it holds at least the gathering
/// threshold. Ties go to the lowest cell index.
pub fn detect_global(density: &DensityMap, config: &GlobalDetection, timestamp: f64) -> Option<Event> {
    let (cell, count) = density.densest()?;
    if count == 0 || count < config.gathering_threshold {
        return None;
    }
    Some(Event {
        id: 0,
        kind: EventKind::Global,
        subjects: Vec::new(),
        region: Some(Region {
            center: density.centroid(cell),
            radius: density.cell_size * std::f64::consts::FRAC_1_SQRT_2,
        }),
        score: config.coefficient * f64::from(count),
        timestamp,
    })
}

/// Settings for local-candidate election.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElectionConfig {
    pub grouping_radius: f64,
    pub history_window: usize,
}

impl Default for ElectionConfig {
    fn default() -> Self {
        Self {
            grouping_radius: 3.0,
            history_window: 600,
        }
    }
}

/// Elects at most one event from per-avatar scores and an optional global
/// detection. Conversing avatars above the cutoff that share a conversation
/// or stand within the grouping radius merge into one multi-subject event
/// scored by its best member.
pub fn elect(
    world: &WorldState,
    scores: &[f64],
    cutoff: f64,
    global: Option<Event>,
    grouping_radius: f64,
    timestamp: f64,
) -> Option<Event> {
    let above: Vec<usize> = (0..world.avatars.len())
        .filter(|&i| scores[i] > cutoff)
        .collect();

    // Union-find over above-cutoff conversing avatars.
    let mut parent: Vec<usize> = (0..world.avatars.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (k, &a) in above.iter().enumerate() {
        for &b in &above[k + 1..] {
            let (aa, bb) = (&world.avatars[a], &world.avatars[b]);
            let linked = match (&aa.behavior, &bb.behavior) {
                (
                    BehaviorPhase::Converse { partners: pa, .. },
                    BehaviorPhase::Converse { partners: pb, .. },
                ) => {
                    pa.contains(&bb.id)
                        || pb.contains(&aa.id)
                        || aa.position.distance(bb.position) <= grouping_radius
                }
                _ => false,
            };
            if linked {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot: Vec<Option<usize>> = vec![None; world.avatars.len()];
    for &a in &above {
        let r = find(&mut parent, a);
        match root_slot[r] {
            Some(g) => groups[g].push(a),
            None => {
                root_slot[r] = Some(groups.len());
                groups.push(vec![a]);
            }
        }
    }

    let mut best: Option<Event> = None;
    for g in groups {
        let score = g.iter().map(|&i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
        let subjects: Vec<AvatarId> = g.iter().map(|&i| world.avatars[i].id).collect();
        let ev = Event {
            id: 0,
            kind: if subjects.len() == 1 {
                EventKind::LocalSingle
            } else {
                EventKind::LocalMulti
            },
            subjects,
            region: None,
            score,
            timestamp,
        };
        // Groups come in ascending lowest-member order, so strict `>` keeps the
        // lowest id on ties.
        if best.as_ref().is_none_or(|b| ev.score > b.score) {
            best = Some(ev);
        }
    }
    if let Some(g) = global {
        if best.as_ref().is_none_or(|b| g.score > b.score) {
            best = Some(g);
        }
    }
    best
}

/// Owns the running importance model and threshold between fetch cycles.
#[derive(Debug, Clone)]
pub struct EventManager {
    pub weights: ImportanceWeights,
    pub election: ElectionConfig,
    pub global: GlobalDetection,
    pub model: ImportanceModel,
    pub threshold: ThresholdState,
    history: VecDeque<f64>,
    next_id: u64,
}

/// Outcome of one fetch cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct FetchOutcome {
    pub scores: Vec<f64>,
    pub cutoff: f64,
    pub elected: Option<Event>,
}

impl EventManager {
    pub fn new(
        weights: ImportanceWeights,
        f: f64,
        election: ElectionConfig,
        global: GlobalDetection,
    ) -> Result<Self, EventsError> {
        let model = ImportanceModel::PRIOR;
        Ok(Self {
            weights,
            election,
            global,
            threshold: ThresholdState::new(f, 1, &model)?,
            model,
            history: VecDeque::new(),
            next_id: 1,
        })
    }

    pub fn history(&self) -> impl Iterator<Item = f64> + '_ {
        self.history.iter().copied()
    }

    pub fn set_ratio(&mut self, f: f64) -> Result<(), EventsError> {
        self.threshold.set_ratio(f, &self.model)
    }

    /// Scores every avatar, refreshes the model and threshold, and elects.
    pub fn fetch(&mut self, world: &WorldState, timestamp: f64) -> Result<FetchOutcome, EventsError> {
        let scores: Vec<f64> = world
            .avatars
            .iter()
            .map(|a| importance(&a.metrics, &self.weights))
            .collect();
        for &s in &scores {
            self.history.push_back(s);
        }
        while self.history.len() > self.election.history_window.max(2) {
            self.history.pop_front();
        }
        let hist: Vec<f64> = self.history.iter().copied().collect();
        self.model = calibrate_model(&hist, self.election.history_window);
        self.threshold.update(world.avatars.len(), &self.model)?;

        let density = world.region_density(self.global.cell_size);
        let global = detect_global(&density, &self.global, timestamp);
        let mut elected = elect(
            world,
            &scores,
            self.threshold.cutoff,
            global,
            self.election.grouping_radius,
            timestamp,
        );
        if let Some(ev) = elected.as_mut() {
            ev.id = self.next_id;
            self.next_id += 1;
        }
        Ok(FetchOutcome {
            scores,
            cutoff: self.threshold.cutoff,
            elected,
        })
    }
}
