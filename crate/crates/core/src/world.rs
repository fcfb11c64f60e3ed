//! Deterministic avatar simulation.
//!
//! Every avatar owns a private RNG stream derived from the master seed and its
//! id, so a decision made by one avatar never shifts the random draws of
//! another. Avatars are advanced in id order against a snapshot of the
//! previous tick, and cross-avatar effects (joining a conversation) are
//! resolved afterwards, also in id order.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Aabb, Vec3};
use crate::scalar::wrap_angle;

pub type AvatarId = u32;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("invalid world configuration: `{field}` {reason}")]
    InvalidConfig { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> WorldError {
    WorldError::InvalidConfig {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Axis-aligned world rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn depth(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    pub fn center(&self) -> Vec3<f64> {
        Vec3::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.0,
        )
    }

    fn clamp(&self, x: f64, y: f64) -> (f64, f64) {
        (
            x.clamp(self.min[0], self.max[0]),
            y.clamp(self.min[1], self.max[1]),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointOfInterest {
    pub name: String,
    pub x: f64,
    pub y: f64,
}

/// A box obstacle: `position` is the box center, `extent` its half sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub position: [f64; 3],
    pub extent: [f64; 3],
}

impl Obstacle {
    /// A building standing on the ground with the given footprint half sizes.
    pub fn building(x: f64, y: f64, half_w: f64, half_d: f64, height: f64) -> Self {
        Self {
            position: [x, y, 0.5 * height],
            extent: [half_w, half_d, 0.5 * height],
        }
    }

    pub fn aabb(&self) -> Aabb<f64> {
        Aabb::from_center_half_extent(self.position.into(), self.extent.into())
    }
}

/// Movement, conversation and synthetic-activity rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorRates {
    pub walk_speed: f64,
    pub chase_speed: f64,
    pub chase_probability: f64,
    pub chase_radius: f64,
    pub chase_timeout_s: f64,
    pub contact_distance: f64,
    pub converse_min_s: f64,
    pub converse_max_s: f64,
    pub words_per_second: f64,
    pub wait_max_s: f64,
    pub poi_probability: f64,
    /// Poisson rate (events per second) of voxel edits per avatar.
    pub voxel_rate: f64,
    pub voxel_burst_max: u32,
    /// Poisson rate (events per second) of token transactions per avatar.
    pub tx_rate: f64,
    pub tx_burst_max: u32,
    pub avatar_height: f64,
    pub avatar_radius: f64,
}

impl Default for BehaviorRates {
    fn default() -> Self {
        Self {
            walk_speed: 1.4,
            chase_speed: 3.0,
            chase_probability: 0.6,
            chase_radius: 40.0,
            chase_timeout_s: 30.0,
            contact_distance: 1.5,
            converse_min_s: 5.0,
            converse_max_s: 20.0,
            words_per_second: 2.0,
            wait_max_s: 10.0,
            poi_probability: 0.5,
            voxel_rate: 0.02,
            voxel_burst_max: 8,
            tx_rate: 0.01,
            tx_burst_max: 5,
            avatar_height: 1.7,
            avatar_radius: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub bounds: Bounds,
    #[serde(default)]
    pub pois: Vec<PointOfInterest>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    pub avatar_count: usize,
    #[serde(default = "default_tick_rate")]
    pub tick_rate: u32,
    pub seed: u64,
    #[serde(default)]
    pub rates: BehaviorRates,
}

fn default_tick_rate() -> u32 {
    20
}

impl WorldConfig {
    /// The campus layout used by the default scenario.
    pub fn campus(seed: u64, avatar_count: usize) -> Self {
        let poi = |name: &str, x: f64, y: f64| PointOfInterest {
            name: name.to_string(),
            x,
            y,
        };
        Self {
            bounds: Bounds::new([0.0, 0.0], [120.0, 80.0]),
            pois: vec![
                poi("Start-up Zone", 20.0, 15.0),
                poi("University Gate", 60.0, 5.0),
                poi("Library A", 95.0, 20.0),
                poi("Library B", 105.0, 45.0),
                poi("College A", 20.0, 60.0),
                poi("Student Center", 60.0, 40.0),
                poi("Teaching Buildings", 85.0, 68.0),
                poi("Bus Station", 10.0, 35.0),
            ],
            obstacles: vec![
                Obstacle::building(40.0, 25.0, 6.0, 4.0, 12.0),
                Obstacle::building(78.0, 30.0, 5.0, 7.0, 18.0),
                Obstacle::building(40.0, 62.0, 8.0, 5.0, 9.0),
                Obstacle::building(100.0, 70.0, 6.0, 3.0, 15.0),
            ],
            avatar_count,
            tick_rate: 20,
            seed,
            rates: BehaviorRates::default(),
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / f64::from(self.tick_rate)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let b = &self.bounds;
        if !(b.max[0] > b.min[0] && b.max[1] > b.min[1]) {
            return Err(invalid("bounds", "must have positive width and depth"));
        }
        if self.avatar_count == 0 {
            return Err(invalid("avatar_count", "must be at least 1"));
        }
        if self.tick_rate == 0 {
            return Err(invalid("tick_rate", "must be positive"));
        }
        let mut names = BTreeSet::new();
        for (i, p) in self.pois.iter().enumerate() {
            if !b.contains(p.x, p.y) {
                return Err(invalid(
                    format!("pois[{i}]"),
                    format!("({}, {}) lies outside bounds", p.x, p.y),
                ));
            }
            if !names.insert(p.name.as_str()) {
                return Err(invalid(format!("pois[{i}].name"), "duplicates another POI"));
            }
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            let bx = o.aabb();
            if o.extent.iter().any(|e| *e <= 0.0) {
                return Err(invalid(format!("obstacles[{i}].extent"), "must be positive"));
            }
            if !b.contains(bx.min.x, bx.min.y) || !b.contains(bx.max.x, bx.max.y) {
                return Err(invalid(format!("obstacles[{i}]"), "lies outside bounds"));
            }
        }
        let r = &self.rates;
        if !(r.walk_speed > 0.0 && r.chase_speed > 0.0) {
            return Err(invalid("rates.walk_speed", "speeds must be positive"));
        }
        if !(r.converse_min_s >= 0.0 && r.converse_max_s >= r.converse_min_s) {
            return Err(invalid("rates.converse_max_s", "must be >= converse_min_s >= 0"));
        }
        if r.avatar_height <= 0.0 {
            return Err(invalid("rates.avatar_height", "must be positive"));
        }
        if r.voxel_rate < 0.0 || r.tx_rate < 0.0 || r.wait_max_s < 0.0 {
            return Err(invalid("rates", "rates and durations must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BehaviorPhase {
    Walk { dest: [f64; 2] },
    Chase { target: AvatarId, elapsed: f64 },
    Converse { partners: BTreeSet<AvatarId>, remaining: f64 },
    Wait { remaining: f64 },
}

impl BehaviorPhase {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Walk { .. } => "walk",
            Self::Chase { .. } => "chase",
            Self::Converse { .. } => "converse",
            Self::Wait { .. } => "wait",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            Self::Walk { .. } => 0,
            Self::Chase { .. } => 1,
            Self::Converse { .. } => 2,
            Self::Wait { .. } => 3,
        }
    }
}

/// Action channels accumulated over the current fetch window.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionSample {
    pub move_distance: f64,
    pub move_speed: f64,
    pub spoken_words: f64,
    pub voxel_count: f64,
    pub tx_volume: f64,
    pub window: f64,
}

impl ActionSample {
    fn advance(&mut self, distance: f64, words: f64, voxels: f64, tx: f64, dt: f64) {
        self.move_distance += distance;
        self.spoken_words += words;
        self.voxel_count += voxels;
        self.tx_volume += tx;
        self.window += dt;
        self.move_speed = if self.window > 0.0 {
            self.move_distance / self.window
        } else {
            0.0
        };
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvatarState {
    pub id: AvatarId,
    pub position: Vec3<f64>,
    pub facing: f64,
    pub height: f64,
    pub behavior: BehaviorPhase,
    pub metrics: ActionSample,
    rng: ChaCha8Rng,
}

impl AvatarState {
    /// Lower-abdomen anchor used by the shot solver.
    pub fn base_point(&self) -> Vec3<f64> {
        self.position + Vec3::new(0.0, 0.0, 0.55 * self.height)
    }

    pub fn face_point(&self) -> Vec3<f64> {
        self.position + Vec3::new(0.0, 0.0, 0.93 * self.height)
    }

    pub fn is_conversing(&self) -> bool {
        matches!(self.behavior, BehaviorPhase::Converse { .. })
    }
}

/// Stream seed for one avatar: splitmix64 of the master seed and the id.
fn avatar_stream_seed(seed: u64, id: AvatarId) -> u64 {
    stream_seed(seed, u64::from(id))
}

/// Independent sub-stream seed derived from a master seed.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    config: WorldConfig,
    obstacles: Vec<Aabb<f64>>,
    pub tick: u64,
    pub time: f64,
    pub avatars: Vec<AvatarState>,
}

/// Avatar counts over a regular grid anchored at the world's min corner.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub cols: usize,
    pub rows: usize,
    pub counts: Vec<u32>,
}

impl DensityMap {
    pub fn empty(bounds: &Bounds, cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell_size must be positive");
        let cols = ((bounds.width() / cell_size).ceil() as usize).max(1);
        let rows = ((bounds.depth() / cell_size).ceil() as usize).max(1);
        Self {
            origin: bounds.min,
            cell_size,
            cols,
            rows,
            counts: vec![0; cols * rows],
        }
    }

    pub fn cell_of(&self, x: f64, y: f64) -> usize {
        let c = ((x - self.origin[0]) / self.cell_size).floor();
        let r = ((y - self.origin[1]) / self.cell_size).floor();
        let c = (c.max(0.0) as usize).min(self.cols - 1);
        let r = (r.max(0.0) as usize).min(self.rows - 1);
        r * self.cols + c
    }

    pub fn add(&mut self, x: f64, y: f64) {
        let i = self.cell_of(x, y);
        self.counts[i] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn centroid(&self, index: usize) -> [f64; 2] {
        let (r, c) = (index / self.cols, index % self.cols);
        [
            self.origin[0] + (c as f64 + 0.5) * self.cell_size,
            self.origin[1] + (r as f64 + 0.5) * self.cell_size,
        ]
    }

    /// Densest cell; ties go to the lowest index.
    pub fn densest(&self) -> Option<(usize, u32)> {
        self.counts
            .iter()
            .copied()
            .enumerate()
            .fold(None, |best, (i, c)| match best {
                Some((_, bc)) if bc >= c => best,
                _ => Some((i, c)),
            })
    }
}

impl WorldState {
    /// Places `avatar_count` avatars at seed-derived positions.
    pub fn spawn(config: WorldConfig) -> Result<Self, WorldError> {
        config.validate()?;
        let obstacles: Vec<_> = config.obstacles.iter().map(Obstacle::aabb).collect();
        let mut world = Self {
            obstacles,
            tick: 0,
            time: 0.0,
            avatars: Vec::with_capacity(config.avatar_count),
            config,
        };
        for i in 0..world.config.avatar_count {
            let id = i as AvatarId;
            let mut rng = ChaCha8Rng::seed_from_u64(avatar_stream_seed(world.config.seed, id));
            let (x, y) = world.free_point(&mut rng);
            let facing = wrap_angle(rng.random_range(0.0..std::f64::consts::TAU));
            let dest = world.pick_destination(&mut rng);
            world.avatars.push(AvatarState {
                id,
                position: Vec3::new(x, y, 0.0),
                facing,
                height: world.config.rates.avatar_height,
                behavior: BehaviorPhase::Walk { dest },
                metrics: ActionSample::default(),
                rng,
            });
        }
        Ok(world)
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn obstacle_boxes(&self) -> &[Aabb<f64>] {
        &self.obstacles
    }

    pub fn avatar(&self, id: AvatarId) -> Option<&AvatarState> {
        self.avatars.get(id as usize).filter(|a| a.id == id)
    }

    /// Test hook: overwrite an avatar's behavior phase.
    pub fn set_behavior(&mut self, id: AvatarId, behavior: BehaviorPhase) {
        if let Some(a) = self.avatars.get_mut(id as usize) {
            a.behavior = behavior;
        }
    }

    /// Test hook: teleport an avatar.
    pub fn place(&mut self, id: AvatarId, x: f64, y: f64, facing: f64) {
        if let Some(a) = self.avatars.get_mut(id as usize) {
            a.position = Vec3::new(x, y, 0.0);
            a.facing = wrap_angle(facing);
        }
    }

    /// Test hook: overwrite an avatar's window metrics.
    pub fn set_metrics(&mut self, id: AvatarId, metrics: ActionSample) {
        if let Some(a) = self.avatars.get_mut(id as usize) {
            a.metrics = metrics;
        }
    }

    pub fn blocked(&self, x: f64, y: f64) -> bool {
        let r = self.config.rates.avatar_radius;
        self.obstacles.iter().any(|b| b.inflate(r).contains_xy(x, y))
    }

    fn free_point(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let b = self.config.bounds;
        let mut p = (b.min[0], b.min[1]);
        for _ in 0..64 {
            p = (
                rng.random_range(b.min[0]..=b.max[0]),
                rng.random_range(b.min[1]..=b.max[1]),
            );
            if !self.blocked(p.0, p.1) {
                break;
            }
        }
        p
    }

    fn pick_destination(&self, rng: &mut ChaCha8Rng) -> [f64; 2] {
        let rates = &self.config.rates;
        if !self.config.pois.is_empty() && rng.random_bool(rates.poi_probability.clamp(0.0, 1.0)) {
            let poi = &self.config.pois[rng.random_range(0..self.config.pois.len())];
            for _ in 0..16 {
                let (x, y) = self.config.bounds.clamp(
                    poi.x + rng.random_range(-3.0..=3.0),
                    poi.y + rng.random_range(-3.0..=3.0),
                );
                if !self.blocked(x, y) {
                    return [x, y];
                }
            }
        }
        let (x, y) = self.free_point(rng);
        [x, y]
    }

    /// Moves from `from` toward `target` by at most `step`, sliding along
    /// obstacle faces when the direct move is blocked.
    fn slide_move(&self, from: Vec3<f64>, target: Vec3<f64>, step: f64) -> Vec3<f64> {
        let delta = (target - from).horizontal();
        let dist = delta.norm();
        if dist <= 1e-12 || step <= 0.0 {
            return from;
        }
        let mv = if dist <= step { delta } else { delta * (step / dist) };
        let b = self.config.bounds;
        let candidates = [
            (from.x + mv.x, from.y + mv.y),
            (from.x + mv.x, from.y),
            (from.x, from.y + mv.y),
        ];
        for (x, y) in candidates {
            let (x, y) = b.clamp(x, y);
            if !self.blocked(x, y) {
                return Vec3::new(x, y, 0.0);
            }
        }
        from
    }

    fn chase_candidate(&self, me: usize, rng: &mut ChaCha8Rng) -> Option<AvatarId> {
        let pos = self.avatars[me].position;
        let radius = self.config.rates.chase_radius;
        let nearby: Vec<AvatarId> = self
            .avatars
            .iter()
            .filter(|a| a.id != self.avatars[me].id && a.position.distance(pos) <= radius)
            .map(|a| a.id)
            .collect();
        if !nearby.is_empty() {
            return Some(nearby[rng.random_range(0..nearby.len())]);
        }
        self.avatars
            .iter()
            .filter(|a| a.id != self.avatars[me].id)
            .min_by(|a, b| {
                a.position
                    .distance(pos)
                    .total_cmp(&b.position.distance(pos))
                    .then(a.id.cmp(&b.id))
            })
            .map(|a| a.id)
    }

    /// Advances the simulation by `dt` seconds.
    pub fn step(&mut self, dt: f64) {
        assert!(dt > 0.0, "dt must be positive");
        let prev = self.clone();
        let rates = self.config.rates.clone();
        let mut contacts: Vec<(AvatarId, AvatarId)> = Vec::new();

        for idx in 0..self.avatars.len() {
            let mut rng = self.avatars[idx].rng.clone();
            let id = self.avatars[idx].id;
            let pos = self.avatars[idx].position;
            let mut new_pos = pos;
            let mut words = 0.0;
            let behavior = self.avatars[idx].behavior.clone();
            let next = match behavior {
                BehaviorPhase::Walk { dest } => {
                    let target = Vec3::new(dest[0], dest[1], 0.0);
                    let step = rates.walk_speed * dt;
                    if pos.distance(target) <= step {
                        new_pos = prev.slide_move(pos, target, step);
                        match prev.chase_candidate(idx, &mut rng) {
                            Some(t) if rng.random_bool(rates.chase_probability.clamp(0.0, 1.0)) => {
                                BehaviorPhase::Chase { target: t, elapsed: 0.0 }
                            }
                            _ => BehaviorPhase::Wait {
                                remaining: rng.random_range(0.0..=rates.wait_max_s),
                            },
                        }
                    } else {
                        new_pos = prev.slide_move(pos, target, step);
                        if new_pos.distance(pos) < 1e-9 {
                            BehaviorPhase::Walk {
                                dest: prev.pick_destination(&mut rng),
                            }
                        } else {
                            BehaviorPhase::Walk { dest }
                        }
                    }
                }
                BehaviorPhase::Chase { target, elapsed } => {
                    let tpos = prev.avatars[target as usize].position;
                    let elapsed = elapsed + dt;
                    if pos.distance(tpos) <= rates.contact_distance {
                        contacts.push((id, target));
                        BehaviorPhase::Chase { target, elapsed }
                    } else if elapsed > rates.chase_timeout_s {
                        BehaviorPhase::Wait {
                            remaining: rng.random_range(0.0..=rates.wait_max_s),
                        }
                    } else {
                        new_pos = prev.slide_move(pos, tpos, rates.chase_speed * dt);
                        BehaviorPhase::Chase { target, elapsed }
                    }
                }
                BehaviorPhase::Converse {
                    partners,
                    remaining,
                } => {
                    words = rates.words_per_second * dt.min(remaining);
                    let remaining = (remaining - dt).max(0.0);
                    if remaining <= 0.0 {
                        BehaviorPhase::Wait {
                            remaining: rng.random_range(0.0..=rates.wait_max_s),
                        }
                    } else {
                        BehaviorPhase::Converse {
                            partners,
                            remaining,
                        }
                    }
                }
                BehaviorPhase::Wait { remaining } => {
                    let remaining = (remaining - dt).max(0.0);
                    if remaining <= 0.0 {
                        BehaviorPhase::Walk {
                            dest: prev.pick_destination(&mut rng),
                        }
                    } else {
                        BehaviorPhase::Wait { remaining }
                    }
                }
            };

            let voxels = poisson_burst(&mut rng, rates.voxel_rate * dt, rates.voxel_burst_max);
            let tx = poisson_burst(&mut rng, rates.tx_rate * dt, rates.tx_burst_max);

            let a = &mut self.avatars[idx];
            let moved = (new_pos - pos).horizontal();
            let distance = moved.norm();
            if distance > 1e-12 {
                a.facing = wrap_angle(moved.yaw());
            }
            a.position = new_pos;
            a.behavior = next;
            a.metrics.advance(distance, words, voxels, tx, dt);
            a.rng = rng;
        }

        for (chaser, target) in contacts {
            self.start_conversation(chaser, target);
        }

        self.tick += 1;
        self.time = self.tick as f64 * self.config.dt();
        if (dt - self.config.dt()).abs() > 1e-12 {
            // Off-grid step sizes keep their own clock.
            self.time = prev.time + dt;
        }
    }

    fn start_conversation(&mut self, chaser: AvatarId, target: AvatarId) {
        if chaser == target
            || !matches!(self.avatars[chaser as usize].behavior, BehaviorPhase::Chase { .. })
        {
            return;
        }
        let (min_s, max_s) = (self.config.rates.converse_min_s, self.config.rates.converse_max_s);
        let target_phase = self.avatars[target as usize].behavior.clone();
        let (mut group, remaining) = match target_phase {
            BehaviorPhase::Converse {
                partners,
                remaining,
            } => (partners, remaining.max(min_s)),
            _ => {
                let rng = &mut self.avatars[chaser as usize].rng;
                let r = if max_s > min_s {
                    rng.random_range(min_s..=max_s)
                } else {
                    min_s
                };
                (BTreeSet::new(), r)
            }
        };
        group.insert(target);
        group.insert(chaser);

        let centroid = group
            .iter()
            .map(|&m| self.avatars[m as usize].position)
            .fold(Vec3::zero(), |acc, p| acc + p)
            / group.len() as f64;
        for &m in &group {
            let partners: BTreeSet<AvatarId> = group.iter().copied().filter(|&o| o != m).collect();
            let a = &mut self.avatars[m as usize];
            let keep_remaining = match &a.behavior {
                BehaviorPhase::Converse { remaining, .. } => remaining.max(min_s),
                _ => remaining,
            };
            a.behavior = BehaviorPhase::Converse {
                partners,
                remaining: keep_remaining,
            };
            let to_center = (centroid - a.position).horizontal();
            let look = if to_center.norm() > 1e-6 {
                to_center
            } else {
                (self.avatars[if m == chaser { target } else { chaser } as usize].position
                    - self.avatars[m as usize].position)
                    .horizontal()
            };
            if look.norm() > 1e-6 {
                self.avatars[m as usize].facing = wrap_angle(look.yaw());
            }
        }
    }

    /// Starts a fresh accumulation window for every avatar.
    pub fn reset_windows(&mut self) {
        for a in &mut self.avatars {
            a.metrics = ActionSample::default();
        }
    }

    pub fn region_density(&self, cell_size: f64) -> DensityMap {
        let mut map = DensityMap::empty(&self.config.bounds, cell_size);
        for a in &self.avatars {
            map.add(a.position.x, a.position.y);
        }
        map
    }
}

fn poisson_burst(rng: &mut ChaCha8Rng, lambda: f64, burst_max: u32) -> f64 {
    if lambda <= 0.0 || burst_max == 0 {
        return 0.0;
    }
    let k = Poisson::new(lambda).map(|p| p.sample(rng)).unwrap_or(0.0) as u64;
    (0..k).map(|_| f64::from(rng.random_range(1..=burst_max))).sum()
}
