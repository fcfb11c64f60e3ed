//! Photographic filters and the composition score table.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::psl::{enumerate_specs, Angle, Profile, Screen, ShotTemplate, Size};

#[derive(Debug, Error)]
pub enum CompositionError {
    #[error("no good shot templates satisfy the constraints")]
    EmptyPool,
    #[error("requested {requested} distinct templates from a pool of {available}")]
    PoolTooSmall { requested: usize, available: usize },
    #[error("composition table {path}: {message}")]
    Table { path: String, message: String },
}

/// Which way the subject appears to face on screen for a given profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Laterality {
    FacesScreenLeft,
    FacesScreenRight,
    Frontal,
}

/// With the camera on the subject's right-hand side the subject faces
/// screen-right, and the mirror for the left family.
pub fn laterality(profile: Profile) -> Laterality {
    match profile {
        Profile::Right | Profile::ThreeQuarterRight | Profile::ThreeQuarterBackRight => {
            Laterality::FacesScreenRight
        }
        Profile::Left | Profile::ThreeQuarterLeft | Profile::ThreeQuarterBackLeft => {
            Laterality::FacesScreenLeft
        }
        Profile::Front | Profile::Back => Laterality::Frontal,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtraFilter {
    /// Rejects high-angle medium shots.
    NoHighMediumShot,
    /// Rejects back-family profiles.
    NoBackProfiles,
}

impl ExtraFilter {
    pub fn keep(self, t: &ShotTemplate) -> bool {
        match self {
            ExtraFilter::NoHighMediumShot => !(t.angle == Angle::High && t.size == Size::MS),
            ExtraFilter::NoBackProfiles => !t.profile.is_back_family(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleSet {
    pub lookroom_enabled: bool,
    /// (laterality, screen) pairs rejected by the look-room rule.
    pub forbidden: Vec<(Laterality, Screen)>,
    pub extra_filters: Vec<ExtraFilter>,
}

impl Default for RuleSet {
    fn default() -> Self {
        Self {
            lookroom_enabled: true,
            forbidden: vec![
                (Laterality::FacesScreenRight, Screen::Right),
                (Laterality::FacesScreenLeft, Screen::Left),
            ],
            extra_filters: Vec::new(),
        }
    }
}

impl RuleSet {
    pub fn disabled() -> Self {
        Self {
            lookroom_enabled: false,
            forbidden: Vec::new(),
            extra_filters: Vec::new(),
        }
    }

    pub fn keep(&self, t: &ShotTemplate) -> bool {
        if self.lookroom_enabled
            && self
                .forbidden
                .iter()
                .any(|&(lat, screen)| laterality(t.profile) == lat && t.screen == screen)
        {
            return false;
        }
        self.extra_filters.iter().all(|f| f.keep(t))
    }
}

/// Look-room rule: keep the empty side of the frame in front of the subject.
pub fn lookroom_filter(t: &ShotTemplate) -> bool {
    match laterality(t.profile) {
        Laterality::FacesScreenRight => t.screen != Screen::Right,
        Laterality::FacesScreenLeft => t.screen != Screen::Left,
        Laterality::Frontal => true,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub kept: Vec<ShotTemplate>,
    pub input: usize,
}

impl FilterReport {
    pub fn surviving(&self) -> usize {
        self.kept.len()
    }

    pub fn removed(&self) -> usize {
        self.input - self.kept.len()
    }
}

/// Order-preserving filter over every enabled rule.
///
/// ```
/// use announcer_core::composition::{filter_all, RuleSet};
/// use announcer_core::psl::enumerate_specs;
///
/// let report = filter_all(&enumerate_specs(), &RuleSet::default());
/// // The look-room predicate depends only on (profile, screen), so it removes
/// // whole 12-template (angle, size) strata: 6 lateral profiles × 1 screen.
/// assert_eq!(report.removed(), 72);
/// assert_eq!(report.surviving(), 216);
/// // A 153-template survivor set would need 135 removals, which no
/// // (profile, screen) predicate can produce.
/// assert_ne!(report.surviving(), 153);
/// assert_ne!(135 % 12, 0);
/// ```
pub fn filter_all(specs: &[ShotTemplate], rules: &RuleSet) -> FilterReport {
    FilterReport {
        kept: specs.iter().copied().filter(|t| rules.keep(t)).collect(),
        input: specs.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Class {
    Good,
    Bad,
}

/// One row of a composition table file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub angle: Angle,
    pub size: Size,
    pub profile: Profile,
    pub screen: Screen,
    pub mos: f64,
}

impl TableRow {
    pub fn template(&self) -> ShotTemplate {
        ShotTemplate::new(self.angle, self.size, self.profile, self.screen)
    }
}

/// Published rows of the composition ranking (rank, row).
pub const PUBLISHED_ROWS: [(u32, TableRow); 9] = {
    const fn row(angle: Angle, size: Size, profile: Profile, screen: Screen, mos: f64) -> TableRow {
        TableRow {
            angle,
            size,
            profile,
            screen,
            mos,
        }
    }
    use Angle::*;
    use Profile::*;
    [
        (1, row(Eye, Size::LS, Right, Screen::Left, 5.0)),
        (2, row(Eye, Size::MCU, ThreeQuarterRight, Screen::Left, 4.83)),
        (3, row(Low, Size::LS, Left, Screen::Right, 4.67)),
        (4, row(Eye, Size::MS, Left, Screen::Right, 4.67)),
        (5, row(Eye, Size::LS, ThreeQuarterRight, Screen::Left, 4.67)),
        (110, row(High, Size::ELS, ThreeQuarterBackLeft, Screen::Right, 3.5)),
        (151, row(High, Size::MS, Back, Screen::Right, 1.83)),
        (152, row(High, Size::MS, Front, Screen::Right, 1.83)),
        (153, row(High, Size::MS, Back, Screen::Left, 1.67)),
    ]
};

/// Synthetic score for templates without a measured row.
pub fn heuristic_prior(t: &ShotTemplate) -> f64 {
    let mut s: f64 = 3.8;
    if t.angle == Angle::High && t.size == Size::MS {
        s -= 1.5;
    } else if t.angle == Angle::High {
        s -= 0.2;
    }
    if t.profile.is_back_family() {
        s -= 0.3;
    }
    if t.angle == Angle::Eye {
        s += 0.2;
    }
    s.clamp(1.0, 5.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionTable {
    pub entries: BTreeMap<ShotTemplate, f64>,
    /// Good iff score >= threshold.
    pub threshold: f64,
}

impl Default for CompositionTable {
    fn default() -> Self {
        Self {
            entries: PUBLISHED_ROWS
                .iter()
                .map(|(_, r)| (r.template(), r.mos))
                .collect(),
            threshold: 3.5,
        }
    }
}

impl CompositionTable {
    /// Default table with `rows` layered on top.
    pub fn with_rows(rows: &[TableRow]) -> Self {
        let mut t = Self::default();
        for r in rows {
            t.entries.insert(r.template(), r.mos.clamp(1.0, 5.0));
        }
        t
    }

    pub fn load(path: &Path) -> Result<Self, CompositionError> {
        let err = |message: String| CompositionError::Table {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let rows: Vec<TableRow> =
            serde_path_to_error::deserialize(de).map_err(|e| err(format!("{}: {}", e.path(), e.inner())))?;
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| !(1.0..=5.0).contains(&r.mos)) {
            return Err(err(format!("[{i}].mos = {} outside [1, 5]", r.mos)));
        }
        Ok(Self::with_rows(&rows))
    }

    pub fn score(&self, t: &ShotTemplate) -> f64 {
        self.entries
            .get(t)
            .copied()
            .unwrap_or_else(|| heuristic_prior(t))
    }

    pub fn classify_score(&self, score: f64) -> Class {
        if score >= self.threshold {
            Class::Good
        } else {
            Class::Bad
        }
    }

    pub fn classify(&self, t: &ShotTemplate) -> Class {
        self.classify_score(self.score(t))
    }

    /// Score shifted by a personal delta, kept within [1, 5].
    pub fn adjusted_score(&self, t: &ShotTemplate, deltas: Option<&BTreeMap<ShotTemplate, f64>>) -> f64 {
        let d = deltas.and_then(|m| m.get(t)).copied().unwrap_or(0.0);
        (self.score(t) + d).clamp(1.0, 5.0)
    }

    /// Filtered templates that classify Good.
    pub fn good_group(
        &self,
        rules: &RuleSet,
        deltas: Option<&BTreeMap<ShotTemplate, f64>>,
    ) -> Vec<ShotTemplate> {
        filter_all(&enumerate_specs(), rules)
            .kept
            .into_iter()
            .filter(|t| self.classify_score(self.adjusted_score(t, deltas)) == Class::Good)
            .collect()
    }
}

pub fn score(t: &ShotTemplate, table: &CompositionTable) -> f64 {
    table.score(t)
}

pub fn classify(t: &ShotTemplate, table: &CompositionTable) -> Class {
    table.classify(t)
}

/// Caller-imposed restrictions on sampled templates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleConstraints {
    pub sizes: Option<Vec<Size>>,
    pub exclude: Vec<ShotTemplate>,
}

impl SampleConstraints {
    pub fn sizes(sizes: &[Size]) -> Self {
        Self {
            sizes: Some(sizes.to_vec()),
            exclude: Vec::new(),
        }
    }

    pub fn admits(&self, t: &ShotTemplate) -> bool {
        self.sizes.as_ref().is_none_or(|s| s.contains(&t.size)) && !self.exclude.contains(t)
    }
}

/// Draws `k` distinct templates uniformly from a pool after constraints.
pub fn sample_from<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    pool: &[ShotTemplate],
    constraints: &SampleConstraints,
) -> Result<Vec<ShotTemplate>, CompositionError> {
    let pool: Vec<ShotTemplate> = pool.iter().copied().filter(|t| constraints.admits(t)).collect();
    if pool.is_empty() {
        return Err(CompositionError::EmptyPool);
    }
    if k > pool.len() {
        return Err(CompositionError::PoolTooSmall {
            requested: k,
            available: pool.len(),
        });
    }
    Ok(rand::seq::index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect())
}

/// Draws `k` distinct Good templates.
pub fn sample_good<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    table: &CompositionTable,
    rules: &RuleSet,
    constraints: &SampleConstraints,
) -> Result<Vec<ShotTemplate>, CompositionError> {
    sample_from(rng, k, &table.good_group(rules, None), constraints)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psl::{project, solve, SolveMaps, SubjectAnchor};
    use crate::geom::Vec3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(a: Angle, s: Size, p: Profile, sc: Screen) -> ShotTemplate {
        ShotTemplate::new(a, s, p, sc)
    }

    #[test]
    fn lookroom_examples() {
        for a in Angle::ALL {
            for s in Size::DIRECTABLE {
                assert!(!lookroom_filter(&t(a, s, Profile::Right, Screen::Right)));
                assert!(lookroom_filter(&t(a, s, Profile::Right, Screen::Left)));
                assert!(lookroom_filter(&t(a, s, Profile::Front, Screen::Right)));
            }
        }
    }

    #[test]
    fn laterality_matches_solve_geometry() {
        // Project a point one meter ahead of the subject's face: it must land
        // on the side the laterality claims.
        let maps = SolveMaps::<f64>::default();
        let anchor = SubjectAnchor {
            base_point: Vec3::new(3.0, -2.0, 0.9),
            face_point: Vec3::new(3.0, -2.0, 1.6),
            facing: Vec3::from_yaw(0.7),
        };
        for p in Profile::ALL {
            let pose = solve(&t(Angle::Eye, Size::MS, p, Screen::Center), &anchor, &maps).unwrap();
            let face = project(&pose, anchor.face_point, 1920.0, 1080.0);
            let ahead = project(&pose, anchor.face_point + anchor.facing * 0.5, 1920.0, 1080.0);
            let dx = ahead.x - face.x;
            match laterality(p) {
                Laterality::FacesScreenRight => assert!(dx > 1.0, "{p:?} {dx}"),
                Laterality::FacesScreenLeft => assert!(dx < -1.0, "{p:?} {dx}"),
                Laterality::Frontal => assert!(dx.abs() < 1e-6, "{p:?} {dx}"),
            }
        }
    }

    #[test]
    fn filter_default_and_disabled() {
        let all = enumerate_specs();
        let r = filter_all(&all, &RuleSet::default());
        assert_eq!(r.surviving(), 216);
        assert!(r.kept.iter().all(lookroom_filter));
        assert!(!r.kept.iter().any(|x| x.profile == Profile::Right && x.screen == Screen::Right));
        let off = filter_all(&all, &RuleSet::disabled());
        assert_eq!(off.kept, all);
    }

    #[test]
    fn extra_filters_apply() {
        let rules = RuleSet {
            extra_filters: vec![ExtraFilter::NoHighMediumShot],
            ..RuleSet::default()
        };
        let r = filter_all(&enumerate_specs(), &rules);
        assert_eq!(r.surviving(), 216 - 18);
    }

    #[test]
    fn published_scores() {
        let table = CompositionTable::default();
        let eye_ls = t(Angle::Eye, Size::LS, Profile::Right, Screen::Left);
        assert_eq!(table.score(&eye_ls), 5.0);
        assert_eq!(table.score(&t(Angle::High, Size::MS, Profile::Back, Screen::Left)), 1.67);
        let r110 = t(Angle::High, Size::ELS, Profile::ThreeQuarterBackLeft, Screen::Right);
        assert_eq!(table.score(&r110), 3.5);
        assert_eq!(table.classify(&r110), Class::Good);
        assert_eq!(
            table.classify(&t(Angle::Eye, Size::MCU, Profile::ThreeQuarterRight, Screen::Left)),
            Class::Good
        );
        assert_eq!(
            table.classify(&t(Angle::High, Size::MS, Profile::Front, Screen::Right)),
            Class::Bad
        );
    }

    #[test]
    fn high_medium_shots_are_bad() {
        let table = CompositionTable::default();
        for x in enumerate_specs() {
            if x.angle == Angle::High && x.size == Size::MS {
                assert_eq!(table.classify(&x), Class::Bad, "{x}");
                assert!(table.score(&x) <= 2.67);
            }
        }
    }

    #[test]
    fn threshold_is_monotone() {
        let mut table = CompositionTable::default();
        let mut last = usize::MAX;
        for th in [1.5, 2.5, 3.5, 3.7, 3.9, 4.5] {
            table.threshold = th;
            let n = table.good_group(&RuleSet::default(), None).len();
            assert!(n <= last);
            last = n;
        }
    }

    #[test]
    fn sampling() {
        let table = CompositionTable::default();
        let rules = RuleSet::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_good(&mut rng, 3, &table, &rules, &SampleConstraints::default()).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s[0] != s[1] && s[1] != s[2] && s[0] != s[2]);
        assert!(s.iter().all(|x| table.classify(x) == Class::Good));

        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        let again = sample_good(&mut rng2, 3, &table, &rules, &SampleConstraints::default()).unwrap();
        assert_eq!(s, again);

        let wide = SampleConstraints::sizes(&[Size::LS, Size::ELS]);
        for _ in 0..50 {
            let s = sample_good(&mut rng, 3, &table, &rules, &wide).unwrap();
            assert!(s.iter().all(|x| x.size.is_wide()));
        }
        let none = SampleConstraints::sizes(&[Size::ECU]);
        assert!(matches!(
            sample_good(&mut rng, 1, &table, &rules, &none),
            Err(CompositionError::EmptyPool)
        ));
    }

    #[test]
    fn sampling_support() {
        let table = CompositionTable::default();
        let rules = RuleSet::default();
        let pool = table.good_group(&rules, None);
        let mut seen = std::collections::BTreeSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10_000 {
            let s = sample_from(&mut rng, 1, &pool, &SampleConstraints::default()).unwrap();
            assert_eq!(table.classify(&s[0]), Class::Good);
            seen.insert(s[0]);
        }
        assert_eq!(seen.len(), pool.len());
    }

    #[test]
    fn table_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.json");
        std::fs::write(
            &path,
            r#"[{"angle":"Low","size":"MS","profile":"3/4 Left","screen":"Left","mos":2.0}]"#,
        )
        .unwrap();
        let table = CompositionTable::load(&path).unwrap();
        let x = t(Angle::Low, Size::MS, Profile::ThreeQuarterLeft, Screen::Left);
        assert_eq!(table.score(&x), 2.0);
        assert_eq!(table.classify(&x), Class::Bad);

        std::fs::write(&path, r#"[{"angle":"Low","size":"XL","profile":"Front","screen":"Left","mos":2}]"#).unwrap();
        let e = CompositionTable::load(&path).unwrap_err().to_string();
        assert!(e.contains("[0].size"), "{e}");
    }
}
