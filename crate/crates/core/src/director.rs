//! Camera direction: patrol, shot planning and eased transitions.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapt::{EndedEvent, QoEConfig};
use crate::composition::{sample_from, CompositionTable, RuleSet, SampleConstraints};
use crate::adapt::SessionPrefs;
use crate::events::{Event, EventKind};
use crate::geom::{Aabb, Vec3};
use crate::psl::{self, project, solve, CameraPose, ShotSpec, ShotTemplate, Size, SolveMaps, SubjectAnchor, SubjectRef};
use crate::scalar::Scalar;
use crate::world::{AvatarId, AvatarState, Bounds, WorldState};

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("path endpoint lies inside an obstacle")]
    EndpointBlocked,
    #[error("no collision-free detour found")]
    NoDetour,
}

#[derive(Debug, Error)]
pub enum PlanningError {
    #[error("event subject {0} is not in the world")]
    UnknownSubject(AvatarId),
    #[error("event has no subjects to frame")]
    NoSubjects,
    #[error("no valid shot {index} after {attempts} attempts")]
    RetryBudget { index: usize, attempts: usize },
    #[error(transparent)]
    Composition(#[from] crate::composition::CompositionError),
    #[error(transparent)]
    Geometry(#[from] psl::GeometryError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "subjects", rename_all = "snake_case")]
pub enum DirectorMode {
    BirdsEye,
    FirstPerson(AvatarId),
    ThirdPerson(Vec<AvatarId>),
}

impl DirectorMode {
    pub fn label(&self) -> &'static str {
        match self {
            DirectorMode::BirdsEye => "birds_eye",
            DirectorMode::FirstPerson(_) => "first_person",
            DirectorMode::ThirdPerson(_) => "third_person",
        }
    }
}

pub fn mode_for(event: &Event) -> DirectorMode {
    match event.kind {
        EventKind::LocalSingle => DirectorMode::FirstPerson(event.subjects[0]),
        EventKind::LocalMulti => DirectorMode::ThirdPerson(event.subjects.clone()),
        EventKind::Global => DirectorMode::BirdsEye,
    }
}

/// Side of the line of action `a → b` the camera stands on, in the
/// horizontal plane: +1 left of the axis, -1 right, 0 on it.
pub fn line_of_action_side<T: Scalar>(camera: Vec3<T>, a: Vec3<T>, b: Vec3<T>) -> i8 {
    let ab = (b - a).horizontal();
    let ac = (camera - a).horizontal();
    let z = ab.x * ac.y - ab.y * ac.x;
    if z > T::zero() {
        1
    } else if z < T::zero() {
        -1
    } else {
        0
    }
}

/// Smoothstep ease-in-out; input clamped to [0, 1].
pub fn ease<T: Scalar>(t: T) -> T {
    let t = t.max(T::zero()).min(T::one());
    t * t * (T::lit(3.0) - T::lit(2.0) * t)
}

/// Camera travel path between two positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CameraPath<T> {
    Straight { from: Vec3<T>, to: Vec3<T> },
    /// Quadratic Bézier passing through `apex` at s = 0.5.
    Arc { from: Vec3<T>, control: Vec3<T>, to: Vec3<T> },
}

impl<T: Scalar> CameraPath<T> {
    pub fn start(&self) -> Vec3<T> {
        match *self {
            CameraPath::Straight { from, .. } | CameraPath::Arc { from, .. } => from,
        }
    }

    pub fn end(&self) -> Vec3<T> {
        match *self {
            CameraPath::Straight { to, .. } | CameraPath::Arc { to, .. } => to,
        }
    }

    pub fn eval(&self, s: T) -> Vec3<T> {
        if s <= T::zero() {
            return self.start();
        }
        if s >= T::one() {
            return self.end();
        }
        match *self {
            CameraPath::Straight { from, to } => from.lerp(to, s),
            CameraPath::Arc { from, control, to } => {
                let u = T::one() - s;
                from * (u * u) + control * (T::lit(2.0) * u * s) + to * (s * s)
            }
        }
    }

    pub fn samples(&self, n: usize) -> Vec<Vec3<T>> {
        let n = n.max(2);
        (0..n)
            .map(|k| self.eval(T::lit(k as f64 / (n - 1) as f64)))
            .collect()
    }

    pub fn approx_length(&self) -> T {
        self.samples(101)
            .windows(2)
            .fold(T::zero(), |acc, w| acc + w[0].distance(w[1]))
    }
}

/// True when no sample point or chord between consecutive samples touches
/// an obstacle.
pub fn path_is_clear<T: Scalar>(path: &CameraPath<T>, obstacles: &[Aabb<T>], samples: usize) -> bool {
    let pts = path.samples(samples);
    pts.iter().all(|p| obstacles.iter().all(|b| !b.contains(*p)))
        && pts
            .windows(2)
            .all(|w| obstacles.iter().all(|b| !b.intersects_segment(w[0], w[1])))
}

/// Straight segment when it clears every obstacle inflated by `margin`;
/// otherwise a vertical arc whose apex rises above the tallest blocking
/// obstacle by `clearance`.
pub fn plan_path<T: Scalar>(
    from: Vec3<T>,
    to: Vec3<T>,
    obstacles: &[Aabb<T>],
    margin: T,
    clearance: T,
) -> Result<CameraPath<T>, PathError> {
    let inflated: Vec<Aabb<T>> = obstacles.iter().map(|b| b.inflate(margin)).collect();
    if inflated.iter().any(|b| b.contains(from) || b.contains(to)) {
        return Err(PathError::EndpointBlocked);
    }
    let straight = CameraPath::Straight { from, to };
    let blocking: Vec<&Aabb<T>> = inflated
        .iter()
        .filter(|b| b.intersects_segment(from, to))
        .collect();
    if blocking.is_empty() {
        return Ok(straight);
    }
    let tallest = blocking
        .iter()
        .map(|b| b.max.z)
        .fold(T::neg_infinity(), T::max);
    let mid = from.lerp(to, T::lit(0.5));
    let mut apex_z = (tallest + clearance).max(mid.z);
    for _ in 0..24 {
        let apex = mid.with_z(apex_z);
        let control = apex * T::lit(2.0) - (from + to) * T::lit(0.5);
        let arc = CameraPath::Arc { from, control, to };
        if path_is_clear(&arc, &inflated, 100) {
            return Ok(arc);
        }
        apex_z = apex_z + clearance;
    }
    Err(PathError::NoDetour)
}

/// Pose on the way from `from` to `to`: position along `path`, focus and
/// fov interpolated linearly, all at the eased parameter. Exact at both ends.
pub fn blend<T: Scalar>(from: &CameraPose<T>, to: &CameraPose<T>, t: T, path: &CameraPath<T>) -> CameraPose<T> {
    if t <= T::zero() {
        return *from;
    }
    if t >= T::one() {
        return *to;
    }
    let e = ease(t);
    CameraPose {
        position: path.eval(e),
        focus: from.focus.lerp(to.focus, e),
        fov: from.fov + (to.fov - from.fov) * e,
    }
}

/// Closed polyline the bird's-eye camera dollies along.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct PatrolTrace<T> {
    pub points: Vec<Vec3<T>>,
    pub speed: T,
}

impl<T: Scalar> PatrolTrace<T> {
    /// Rectangle inset by `inset` (fraction of each extent) at `altitude`.
    pub fn inset_rectangle(bounds: &Bounds, inset: f64, altitude: f64, speed: f64) -> Self {
        let dx = bounds.width() * inset;
        let dy = bounds.depth() * inset;
        let (x0, y0) = (bounds.min[0] + dx, bounds.min[1] + dy);
        let (x1, y1) = (bounds.max[0] - dx, bounds.max[1] - dy);
        let p = |x: f64, y: f64| Vec3::new(T::lit(x), T::lit(y), T::lit(altitude));
        Self {
            points: vec![p(x0, y0), p(x1, y0), p(x1, y1), p(x0, y1)],
            speed: T::lit(speed),
        }
    }

    pub fn validate(&self, obstacles: &[Aabb<T>]) -> Result<(), String> {
        if self.points.len() < 3 {
            return Err("patrol trace needs at least 3 points".into());
        }
        if self.speed <= T::zero() {
            return Err("patrol speed must be positive".into());
        }
        let top = obstacles.iter().map(|b| b.max.z).fold(T::neg_infinity(), T::max);
        if self.points.iter().any(|p| p.z <= top) {
            return Err("patrol trace must stay above every obstacle".into());
        }
        Ok(())
    }

    fn segments(&self) -> impl Iterator<Item = (Vec3<T>, Vec3<T>)> + '_ {
        let n = self.points.len();
        (0..n).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    pub fn perimeter(&self) -> T {
        self.segments().fold(T::zero(), |acc, (a, b)| acc + a.distance(b))
    }

    /// Point at arc length `s`, wrapped around the loop.
    pub fn point_at(&self, s: T) -> Vec3<T> {
        let total = self.perimeter();
        if total <= T::zero() {
            return self.points[0];
        }
        let mut s = s % total;
        if s < T::zero() {
            s = s + total;
        }
        for (a, b) in self.segments() {
            let len = a.distance(b);
            if s <= len {
                if len <= T::zero() {
                    return a;
                }
                return a.lerp(b, s / len);
            }
            s = s - len;
        }
        self.points[0]
    }

    /// Closest point on the loop and its arc-length parameter. Ties keep the
    /// smallest parameter.
    pub fn nearest(&self, target: Vec3<T>) -> (Vec3<T>, T) {
        let mut best = (self.points[0], T::zero(), T::infinity());
        let mut offset = T::zero();
        for (a, b) in self.segments() {
            let ab = b - a;
            let len2 = ab.dot(ab);
            let u = if len2 > T::zero() {
                ((target - a).dot(ab) / len2).max(T::zero()).min(T::one())
            } else {
                T::zero()
            };
            let p = a + ab * u;
            let d = p.distance(target);
            if d < best.2 {
                best = (p, offset + u * len2.sqrt(), d);
            }
            offset = offset + len2.sqrt();
        }
        (best.0, best.1)
    }
}

pub fn nearest_trace_point<T: Scalar>(trace: &PatrolTrace<T>, target: Vec3<T>) -> Vec3<T> {
    trace.nearest(target).0
}

/// Bird's-eye pose at arc length `s`: looks at a point part of the way from
/// the camera's ground projection to `center`.
pub fn patrol_pose_at<T: Scalar>(trace: &PatrolTrace<T>, s: T, center: Vec3<T>, look_ahead: T, fov: T) -> CameraPose<T> {
    let position = trace.point_at(s);
    let ground = position.with_z(T::zero());
    let mut focus = ground.lerp(center.with_z(T::zero()), look_ahead);
    if focus.distance(position) <= T::epsilon() {
        focus += Vec3::new(T::lit(1e-3), T::zero(), T::zero());
    }
    CameraPose { position, focus, fov }
}

pub fn patrol_pose<T: Scalar>(trace: &PatrolTrace<T>, time: T, center: Vec3<T>, look_ahead: T, fov: T) -> CameraPose<T> {
    patrol_pose_at(trace, trace.speed * time, center, look_ahead, fov)
}

/// Shot anchors for an avatar.
pub fn anchor_of(avatar: &AvatarState) -> SubjectAnchor<f64> {
    SubjectAnchor {
        base_point: avatar.base_point(),
        face_point: avatar.face_point(),
        facing: Vec3::from_yaw(avatar.facing),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatrolConfig {
    pub altitude: f64,
    pub speed: f64,
    pub inset: f64,
    pub look_ahead: f64,
    /// Explicit trace points; overrides the inset rectangle.
    pub trace: Option<Vec<[f64; 3]>>,
}

impl Default for PatrolConfig {
    fn default() -> Self {
        Self {
            altitude: 25.0,
            speed: 4.0,
            inset: 0.1,
            look_ahead: 0.5,
            trace: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirectorConfig {
    pub patrol: PatrolConfig,
    pub shots_per_event: usize,
    pub retry_budget: usize,
    pub obstacle_margin: f64,
    pub detour_clearance: f64,
    pub viewport: [f64; 2],
    /// Global hold lasts this many shot durations.
    pub global_hold_shots: f64,
}

impl Default for DirectorConfig {
    fn default() -> Self {
        Self {
            patrol: PatrolConfig::default(),
            shots_per_event: 3,
            retry_budget: 16,
            obstacle_margin: 0.5,
            detour_clearance: 2.0,
            viewport: [1920.0, 1080.0],
            global_hold_shots: 3.0,
        }
    }
}

/// What the planner samples from.
#[derive(Debug, Clone, Default)]
pub struct ShotCatalog {
    pub table: CompositionTable,
    pub rules: RuleSet,
    pub maps: SolveMaps<f64>,
    pub prefs: Option<SessionPrefs>,
}

impl ShotCatalog {
    pub fn good_group(&self) -> Vec<ShotTemplate> {
        self.table.good_group(&self.rules, self.prefs.as_ref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curve {
    EaseInOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedShot {
    pub spec: ShotSpec,
    pub pose: CameraPose<f64>,
    pub duration: f64,
    /// Subject base point when the pose was solved.
    pub anchor_base: Vec3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub duration: f64,
    pub curve: Curve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotPlan {
    pub event: Event,
    pub shots: Vec<PlannedShot>,
    pub transitions: Vec<Transition>,
}

fn inside_obstacle(p: Vec3<f64>, obstacles: &[Aabb<f64>], margin: f64) -> bool {
    obstacles.iter().any(|b| b.inflate(margin).contains(p))
}

/// Plans the shots for a local event.
///
/// The first shot is wide (LS or ELS) and must show every subject. With two
/// or more subjects every shot stays on the side of the first two subjects'
/// line of action that the first shot picked. Each shot gets
/// `retry_budget` fresh draws, then the same draws mirrored left/right.
pub fn plan_shots<R: Rng + ?Sized>(
    event: &Event,
    world: &WorldState,
    catalog: &ShotCatalog,
    rng: &mut R,
    config: &DirectorConfig,
    qoe: &QoEConfig,
) -> Result<ShotPlan, PlanningError> {
    if event.subjects.is_empty() {
        return Err(PlanningError::NoSubjects);
    }
    let avatars: Vec<&AvatarState> = event
        .subjects
        .iter()
        .map(|&id| world.avatar(id).ok_or(PlanningError::UnknownSubject(id)))
        .collect::<Result<_, _>>()?;
    let anchors: Vec<SubjectAnchor<f64>> = avatars.iter().map(|a| anchor_of(a)).collect();
    let axis = (anchors.len() >= 2).then(|| (anchors[0].base_point, anchors[1].base_point));
    let pool = catalog.good_group();
    let [w, h] = config.viewport;
    let obstacles = world.obstacle_boxes();

    let mut shots: Vec<PlannedShot> = Vec::with_capacity(config.shots_per_event);
    let mut side: i8 = 0;
    for index in 0..config.shots_per_event {
        let subj = index % anchors.len();
        let anchor = &anchors[subj];
        let mut constraints = if index == 0 {
            SampleConstraints::sizes(&[Size::LS, Size::ELS])
        } else {
            SampleConstraints::default()
        };
        constraints.exclude = shots.iter().map(|s| s.spec.template()).collect();

        let accept = |t: &ShotTemplate| -> Option<(CameraPose<f64>, i8)> {
            let pose = solve(t, anchor, &catalog.maps).ok()?;
            if inside_obstacle(pose.position, obstacles, config.obstacle_margin) {
                return None;
            }
            if index == 0
                && !anchors
                    .iter()
                    .all(|a| project(&pose, a.face_point, w, h).visible)
            {
                return None;
            }
            let s = match axis {
                Some((a, b)) => {
                    let s = line_of_action_side(pose.position, a, b);
                    if s == 0 || (index > 0 && s != side) {
                        return None;
                    }
                    s
                }
                None => 0,
            };
            Some((pose, s))
        };

        let mut draws = Vec::with_capacity(config.retry_budget);
        let mut chosen = None;
        for _ in 0..config.retry_budget {
            let t = sample_from(rng, 1, &pool, &constraints)?[0];
            if let Some(ok) = accept(&t) {
                chosen = Some((t, ok));
                break;
            }
            draws.push(t);
        }
        if chosen.is_none() {
            chosen = draws
                .iter()
                .map(|t| t.mirrored())
                .filter(|m| pool.contains(m) && constraints.admits(m))
                .find_map(|m| accept(&m).map(|ok| (m, ok)));
        }
        let Some((template, (pose, s))) = chosen else {
            return Err(PlanningError::RetryBudget {
                index,
                attempts: config.retry_budget,
            });
        };
        if index == 0 {
            side = s;
        }
        shots.push(PlannedShot {
            spec: template.on(SubjectRef::avatar(event.subjects[subj])),
            pose,
            duration: qoe.shot_duration,
            anchor_base: anchor.base_point,
        });
    }
    let transitions = vec![
        Transition {
            duration: qoe.transition_duration,
            curve: Curve::EaseInOut,
        };
        shots.len().saturating_sub(1)
    ];
    Ok(ShotPlan {
        event: event.clone(),
        shots,
        transitions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Patrol,
    Hold,
    Blend,
}

/// Subject anchors recorded alongside event poses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSnapshot {
    pub id: AvatarId,
    pub base: [f64; 3],
    pub face: [f64; 3],
}

/// One line of the shot log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotLogRecord {
    pub t: f64,
    pub mode: String,
    pub phase: Phase,
    pub event_id: Option<u64>,
    pub spec: Option<String>,
    pub pos: [f64; 3],
    pub focus: [f64; 3],
    pub fov: f64,
    /// Present on the tick an event is announced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<Event>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subjects: Vec<SubjectSnapshot>,
}

impl ShotLogRecord {
    pub fn pose(&self) -> CameraPose<f64> {
        CameraPose {
            position: self.pos.into(),
            focus: self.focus.into(),
            fov: self.fov,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Source {
    Patrol,
    Shot(usize),
    Vantage(CameraPose<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Segment {
    Blend { from: Source, to: Source, ticks: u64 },
    Hold { src: Source, ticks: u64 },
}

impl Segment {
    fn ticks(&self) -> u64 {
        match *self {
            Segment::Blend { ticks, .. } | Segment::Hold { ticks, .. } => ticks,
        }
    }
}

#[derive(Debug, Clone)]
struct BlendCtx {
    path: CameraPath<f64>,
    from0: CameraPose<f64>,
    to0: CameraPose<f64>,
}

#[derive(Debug, Clone)]
struct Playback {
    event: Event,
    mode: DirectorMode,
    shots: Vec<PlannedShot>,
    segments: Vec<Segment>,
    seg: usize,
    tick_in_seg: u64,
    blend: Option<BlendCtx>,
    announced: bool,
    last_spec: Option<String>,
}

/// Things that happened during one director tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DirectorOutput {
    pub started: Option<(Event, DirectorMode)>,
    /// (event id, shot index, spec)
    pub shot_started: Option<(u64, usize, ShotSpec)>,
    pub ended: Option<EndedEvent>,
    pub skipped: Option<String>,
}

/// The camera state machine.
#[derive(Debug, Clone)]
pub struct Director {
    config: DirectorConfig,
    trace: PatrolTrace<f64>,
    center: Vec3<f64>,
    obstacles: Vec<Aabb<f64>>,
    tick_rate: u32,
    patrol_s: f64,
    fov: f64,
    playback: Option<Playback>,
    pose: CameraPose<f64>,
}

fn ticks_for(seconds: f64, tick_rate: u32) -> u64 {
    (seconds * f64::from(tick_rate)).round().max(0.0) as u64
}

impl Director {
    pub fn new(config: DirectorConfig, world: &WorldState, fov: f64) -> Result<Self, String> {
        let wc = world.config();
        let trace = match &config.patrol.trace {
            Some(points) => PatrolTrace {
                points: points.iter().map(|p| Vec3::from(*p)).collect(),
                speed: config.patrol.speed,
            },
            None => PatrolTrace::inset_rectangle(
                &wc.bounds,
                config.patrol.inset,
                config.patrol.altitude,
                config.patrol.speed,
            ),
        };
        trace.validate(world.obstacle_boxes())?;
        let center = wc.bounds.center();
        let pose = patrol_pose_at(&trace, 0.0, center, config.patrol.look_ahead, fov);
        Ok(Self {
            trace,
            center,
            obstacles: world.obstacle_boxes().to_vec(),
            tick_rate: wc.tick_rate,
            patrol_s: 0.0,
            fov,
            playback: None,
            pose,
            config,
        })
    }

    pub fn trace(&self) -> &PatrolTrace<f64> {
        &self.trace
    }

    pub fn pose(&self) -> CameraPose<f64> {
        self.pose
    }

    pub fn is_patrolling(&self) -> bool {
        self.playback.is_none()
    }

    pub fn mode(&self) -> DirectorMode {
        self.playback
            .as_ref()
            .map_or(DirectorMode::BirdsEye, |p| p.mode.clone())
    }

    fn patrol_pose(&self) -> CameraPose<f64> {
        patrol_pose_at(
            &self.trace,
            self.patrol_s,
            self.center,
            self.config.patrol.look_ahead,
            self.fov,
        )
    }

    /// Starts announcing `event`. Ignored unless patrolling.
    pub fn begin<R: Rng + ?Sized>(
        &mut self,
        event: &Event,
        world: &WorldState,
        catalog: &ShotCatalog,
        rng: &mut R,
        qoe: &QoEConfig,
    ) -> Result<bool, PlanningError> {
        if self.playback.is_some() {
            return Ok(false);
        }
        let tr = ticks_for(qoe.transition_duration, self.tick_rate);
        let hold = ticks_for(qoe.shot_duration, self.tick_rate);
        let mode = mode_for(event);
        let (shots, segments) = match event.kind {
            EventKind::Global => {
                let region = event.region.expect("global events carry a region");
                let target = Vec3::new(region.center[0], region.center[1], 0.0);
                let (vantage, _) = self.trace.nearest(target);
                let pose = CameraPose {
                    position: vantage,
                    focus: target,
                    fov: self.fov,
                };
                let v = Source::Vantage(pose);
                let hold = ticks_for(qoe.shot_duration * self.config.global_hold_shots, self.tick_rate);
                (
                    Vec::new(),
                    vec![
                        Segment::Blend { from: Source::Patrol, to: v, ticks: tr },
                        Segment::Hold { src: v, ticks: hold },
                        Segment::Blend { from: v, to: Source::Patrol, ticks: tr },
                    ],
                )
            }
            _ => {
                let plan = plan_shots(event, world, catalog, rng, &self.config, qoe)?;
                let mut segs = vec![Segment::Blend {
                    from: Source::Patrol,
                    to: Source::Shot(0),
                    ticks: tr,
                }];
                for i in 0..plan.shots.len() {
                    segs.push(Segment::Hold { src: Source::Shot(i), ticks: hold });
                    let to = if i + 1 < plan.shots.len() {
                        Source::Shot(i + 1)
                    } else {
                        Source::Patrol
                    };
                    segs.push(Segment::Blend { from: Source::Shot(i), to, ticks: tr });
                }
                (plan.shots, segs)
            }
        };
        self.playback = Some(Playback {
            event: event.clone(),
            mode,
            shots,
            segments,
            seg: 0,
            tick_in_seg: 0,
            blend: None,
            announced: false,
            last_spec: None,
        });
        Ok(true)
    }

    fn shot_pose(&self, pb: &Playback, i: usize, world: &WorldState) -> CameraPose<f64> {
        let shot = &pb.shots[i];
        // Follow the subject's translation; orientation stays as planned.
        let id = shot.spec.subject.avatar_id().unwrap_or(u32::MAX);
        let offset = world
            .avatar(id)
            .map_or(Vec3::zero(), |a| a.base_point() - shot.anchor_base);
        CameraPose {
            position: shot.pose.position + offset,
            focus: shot.pose.focus + offset,
            fov: shot.pose.fov,
        }
    }

    fn source_pose(&self, pb: &Playback, src: Source, world: &WorldState) -> CameraPose<f64> {
        match src {
            Source::Patrol => self.patrol_pose(),
            Source::Shot(i) => self.shot_pose(pb, i, world),
            Source::Vantage(p) => p,
        }
    }

    /// Advances one tick and returns the log record for it.
    pub fn tick(&mut self, world: &WorldState, t: f64, dt: f64) -> (ShotLogRecord, DirectorOutput) {
        let mut out = DirectorOutput::default();
        let Some(mut pb) = self.playback.take() else {
            self.patrol_s += self.trace.speed * dt;
            self.pose = self.patrol_pose();
            return (self.record(t, DirectorMode::BirdsEye, Phase::Patrol, None, None, Vec::new()), out);
        };
        if !pb.announced {
            pb.announced = true;
            out.started = Some((pb.event.clone(), pb.mode.clone()));
        }
        // Skip empty segments (zero-length transitions).
        while pb.seg < pb.segments.len() && pb.segments[pb.seg].ticks() == 0 {
            self.enter_segment(&mut pb, world, &mut out, true);
            pb.seg += 1;
        }
        if pb.seg >= pb.segments.len() {
            return self.finish(pb, world, t, dt, out);
        }
        if pb.tick_in_seg == 0 {
            self.enter_segment(&mut pb, world, &mut out, false);
        }
        pb.tick_in_seg += 1;
        let seg = pb.segments[pb.seg];
        let (phase, spec_idx) = match seg {
            Segment::Hold { src, .. } => {
                self.pose = self.source_pose(&pb, src, world);
                (Phase::Hold, if let Source::Shot(i) = src { Some(i) } else { None })
            }
            Segment::Blend { from, to, ticks } => {
                let ctx = pb.blend.as_ref().expect("blend context set on entry");
                let u = pb.tick_in_seg as f64 / ticks as f64;
                let e = ease(u);
                let from_live = self.source_pose(&pb, from, world);
                let to_live = self.source_pose(&pb, to, world);
                let mut pose = blend(&ctx.from0, &ctx.to0, u, &ctx.path);
                pose.position = pose.position
                    + (from_live.position - ctx.from0.position) * (1.0 - e)
                    + (to_live.position - ctx.to0.position) * e;
                pose.focus = from_live.focus.lerp(to_live.focus, e);
                if pb.tick_in_seg >= ticks {
                    pose = to_live;
                }
                self.pose = pose;
                (Phase::Blend, if let Source::Shot(i) = to { Some(i) } else { None })
            }
        };
        let spec = spec_idx.map(|i| pb.shots[i].spec.to_string());
        let subjects = pb
            .event
            .subjects
            .iter()
            .filter_map(|&id| world.avatar(id))
            .map(|a| SubjectSnapshot {
                id: a.id,
                base: a.base_point().into(),
                face: a.face_point().into(),
            })
            .collect();
        let mut rec = self.record(t, pb.mode.clone(), phase, Some(pb.event.id), spec, subjects);
        if out.started.is_some() {
            rec.event = Some(pb.event.clone());
        }
        if pb.tick_in_seg >= seg.ticks() {
            if let Segment::Blend { to: Source::Patrol, .. } = seg {
                // Patrol resumes from where the return blend landed.
            }
            pb.seg += 1;
            pb.tick_in_seg = 0;
            pb.blend = None;
        }
        if pb.seg >= pb.segments.len() {
            out.ended = Some(EndedEvent {
                event_id: pb.event.id,
                end: t,
                last_spec: pb.last_spec.clone(),
            });
        } else {
            self.playback = Some(pb);
        }
        (rec, out)
    }

    fn enter_segment(&mut self, pb: &mut Playback, world: &WorldState, out: &mut DirectorOutput, instant: bool) {
        let seg = pb.segments[pb.seg];
        let target = match seg {
            Segment::Hold { src, .. } => src,
            Segment::Blend { to, .. } => to,
        };
        if let Segment::Blend { from, to, .. } = seg {
            if to == Source::Patrol {
                let (_, s) = self.trace.nearest(self.pose.position);
                self.patrol_s = s;
            }
            if !instant {
                let from0 = self.source_pose(pb, from, world);
                let to0 = self.source_pose(pb, to, world);
                let path = plan_path(
                    from0.position,
                    to0.position,
                    &self.obstacles,
                    self.config.obstacle_margin,
                    self.config.detour_clearance,
                )
                .unwrap_or(CameraPath::Straight {
                    from: from0.position,
                    to: to0.position,
                });
                pb.blend = Some(BlendCtx { path, from0, to0 });
            }
        }
        if let Source::Shot(i) = target {
            let spec = pb.shots[i].spec.clone();
            if pb.last_spec.as_deref() != Some(spec.to_string().as_str()) {
                pb.last_spec = Some(spec.to_string());
                out.shot_started = Some((pb.event.id, i, spec));
            }
        }
    }

    fn finish(
        &mut self,
        pb: Playback,
        _world: &WorldState,
        t: f64,
        dt: f64,
        mut out: DirectorOutput,
    ) -> (ShotLogRecord, DirectorOutput) {
        out.ended = Some(EndedEvent {
            event_id: pb.event.id,
            end: t,
            last_spec: pb.last_spec,
        });
        self.patrol_s += self.trace.speed * dt;
        self.pose = self.patrol_pose();
        let mut rec = self.record(t, DirectorMode::BirdsEye, Phase::Patrol, None, None, Vec::new());
        if out.started.is_some() {
            rec.event = Some(pb.event);
        }
        (rec, out)
    }

    fn record(
        &self,
        t: f64,
        mode: DirectorMode,
        phase: Phase,
        event_id: Option<u64>,
        spec: Option<String>,
        subjects: Vec<SubjectSnapshot>,
    ) -> ShotLogRecord {
        ShotLogRecord {
            t,
            mode: mode.label().to_string(),
            phase,
            event_id,
            spec,
            pos: self.pose.position.into(),
            focus: self.pose.focus.into(),
            fov: self.pose.fov,
            event: None,
            subjects,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn side_test() {
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(2.0, 0.0, 0.0);
        assert_eq!(line_of_action_side(Vec3::new(1.0, 1.0, 0.0), a, b), 1);
        assert_eq!(line_of_action_side(Vec3::new(1.0, -1.0, 0.0), a, b), -1);
        assert_eq!(line_of_action_side(Vec3::new(1.0, 0.0, 5.0), a, b), 0);
    }

    #[test]
    fn ease_endpoints_and_derivative() {
        assert_eq!(ease(0.0), 0.0);
        assert_eq!(ease(1.0), 1.0);
        assert_eq!(ease(0.5), 0.5);
        assert_eq!(ease(-3.0), 0.0);
        assert_eq!(ease(7.0), 1.0);
        let h: f64 = 1e-4;
        assert!(((ease(h) - ease(0.0)) / h).abs() < 1e-3);
        assert!(((ease(1.0) - ease(1.0 - h)) / h).abs() < 1e-3);
        let mut last = 0.0;
        for k in 0..=1000 {
            let v = ease(k as f64 / 1000.0);
            assert!(v >= last);
            last = v;
        }
    }

    fn pose(p: [f64; 3], f: [f64; 3]) -> CameraPose<f64> {
        CameraPose {
            position: p.into(),
            focus: f.into(),
            fov: 0.8,
        }
    }

    #[test]
    fn blend_endpoints() {
        let a = pose([0.0, 0.0, 2.0], [1.0, 0.0, 2.0]);
        let b = pose([10.0, 4.0, 3.0], [10.0, 5.0, 1.0]);
        let path = CameraPath::Straight { from: a.position, to: b.position };
        assert_eq!(blend(&a, &b, 0.0, &path), a);
        assert_eq!(blend(&a, &b, 1.0, &path), b);
        let mid = blend(&a, &b, 0.5, &path);
        assert!((mid.position - Vec3::new(5.0, 2.0, 2.5)).norm() < 1e-12);
        let same = CameraPath::Straight { from: a.position, to: a.position };
        for k in 0..=10 {
            assert_eq!(blend(&a, &a, k as f64 / 10.0, &same), a);
        }
    }

    #[test]
    fn straight_path_when_clear() {
        let p = plan_path(Vec3::new(0.0, 0.0, 1.0), Vec3::new(10.0, 0.0, 1.0), &[], 0.5, 2.0).unwrap();
        assert!(matches!(p, CameraPath::Straight { .. }));
        let z = plan_path(Vec3::new(1.0, 1.0, 1.0), Vec3::new(1.0, 1.0, 1.0), &[], 0.5, 2.0).unwrap();
        assert_eq!(z.approx_length(), 0.0);
    }

    #[test]
    fn arc_clears_blocking_box() {
        let wall = Aabb::new(Vec3::new(4.0, -5.0, 0.0), Vec3::new(6.0, 5.0, 8.0));
        let from = Vec3::new(0.0, 0.0, 1.6);
        let to = Vec3::new(10.0, 0.0, 1.6);
        let p = plan_path(from, to, &[wall], 0.5, 2.0).unwrap();
        let CameraPath::Arc { .. } = p else { panic!("expected arc") };
        assert!(p.eval(0.5).z >= 8.5 + 2.0 - 1e-9);
        // Independent check: 100 samples against the inflated box.
        let inflated = wall.inflate(0.5);
        for k in 0..100 {
            let q = p.eval(k as f64 / 99.0);
            assert!(!inflated.contains(q), "{q:?}");
        }
        assert_eq!(
            plan_path(Vec3::new(5.0, 0.0, 1.0), to, &[wall], 0.5, 2.0),
            Err(PathError::EndpointBlocked)
        );
    }

    fn square() -> PatrolTrace<f64> {
        PatrolTrace {
            points: vec![
                Vec3::new(0.0, 0.0, 25.0),
                Vec3::new(10.0, 0.0, 25.0),
                Vec3::new(10.0, 10.0, 25.0),
                Vec3::new(0.0, 10.0, 25.0),
            ],
            speed: 4.0,
        }
    }

    #[test]
    fn patrol_loop_closure_and_continuity() {
        let tr = square();
        let c = Vec3::new(5.0, 5.0, 0.0);
        let p0 = patrol_pose(&tr, 0.0, c, 0.5, 0.8);
        assert_eq!(p0.position, tr.points[0]);
        let lap = tr.perimeter() / tr.speed;
        let p1 = patrol_pose(&tr, lap, c, 0.5, 0.8);
        assert!(p1.position.distance(tr.points[0]) < 1e-9);
        let dt = 0.05;
        for k in 0..2000 {
            let t = k as f64 * dt;
            let a = patrol_pose(&tr, t, c, 0.5, 0.8).position;
            let b = patrol_pose(&tr, t + dt, c, 0.5, 0.8).position;
            assert!(a.distance(b) <= tr.speed * dt + 1e-9);
        }
    }

    #[test]
    fn nearest_point_on_trace() {
        let tr = square();
        assert_eq!(nearest_trace_point(&tr, Vec3::new(10.0, 10.0, 25.0)), Vec3::new(10.0, 10.0, 25.0));
        assert_eq!(nearest_trace_point(&tr, Vec3::new(4.0, -3.0, 25.0)), Vec3::new(4.0, 0.0, 25.0));
        // Center is equidistant from all four edges: smallest arc wins.
        let (_, s) = tr.nearest(Vec3::new(5.0, 5.0, 25.0));
        assert_eq!(s, 5.0);
    }
}
