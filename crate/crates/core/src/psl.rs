//! Prose Storyboard Language shot specifications: parsing, canonical
//! formatting and the geometric solve from a spec to a camera pose.
//!
//! Concrete syntax:
//!
//! ```text
//! <Angle>, <Size>, <Profile> on <Subject> [<Screen>]
//! ```
//!
//! Keywords are case-insensitive. Profiles are `Front`, `Back`, `Left`,
//! `Right` or one of the `3/4` variants (`3/4 Right`, `3/4 Back Right`,
//! `3/4 Back Left`, `3/4 Left`). The bracketed screen slot is optional and
//! defaults to `Center`.
//!
//! Geometry conventions: z is up, yaw is counter-clockwise from +x. A profile
//! names where the camera stands relative to the subject's facing: `Front`
//! puts the camera in front of the subject looking back at it, `Right` puts
//! it on the subject's right-hand side (a signed yaw of -90° from the facing
//! direction), and `Back` behind it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::scalar::{wrap_signed, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Angle {
    Low,
    Eye,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Size {
    ECU,
    BCU,
    CU,
    MCU,
    MS,
    LS,
    ELS,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Profile {
    Front,
    #[serde(rename = "3/4 Right")]
    ThreeQuarterRight,
    Right,
    #[serde(rename = "3/4 Back Right")]
    ThreeQuarterBackRight,
    Back,
    #[serde(rename = "3/4 Back Left")]
    ThreeQuarterBackLeft,
    Left,
    #[serde(rename = "3/4 Left")]
    ThreeQuarterLeft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Screen {
    Left,
    Center,
    Right,
}

impl Angle {
    pub const ALL: [Angle; 3] = [Angle::Low, Angle::Eye, Angle::High];
}

impl Size {
    pub const ALL: [Size; 7] = [
        Size::ECU,
        Size::BCU,
        Size::CU,
        Size::MCU,
        Size::MS,
        Size::LS,
        Size::ELS,
    ];
    /// Sizes kept for animated avatars (close-ups truncated).
    pub const DIRECTABLE: [Size; 4] = [Size::MCU, Size::MS, Size::LS, Size::ELS];

    pub fn is_wide(self) -> bool {
        matches!(self, Size::LS | Size::ELS)
    }
}

impl Profile {
    pub const ALL: [Profile; 8] = [
        Profile::Front,
        Profile::ThreeQuarterRight,
        Profile::Right,
        Profile::ThreeQuarterBackRight,
        Profile::Back,
        Profile::ThreeQuarterBackLeft,
        Profile::Left,
        Profile::ThreeQuarterLeft,
    ];

    /// Signed yaw from the subject's facing to the camera bearing, degrees.
    pub fn degrees(self) -> f64 {
        match self {
            Profile::Front => 0.0,
            Profile::ThreeQuarterRight => -45.0,
            Profile::Right => -90.0,
            Profile::ThreeQuarterBackRight => -135.0,
            Profile::Back => 180.0,
            Profile::ThreeQuarterBackLeft => 135.0,
            Profile::Left => 90.0,
            Profile::ThreeQuarterLeft => 45.0,
        }
    }

    pub fn radians<T: Scalar>(self) -> T {
        T::lit(self.degrees().to_radians())
    }

    /// Reflection across the subject's facing axis.
    pub fn mirrored(self) -> Profile {
        match self {
            Profile::ThreeQuarterRight => Profile::ThreeQuarterLeft,
            Profile::Right => Profile::Left,
            Profile::ThreeQuarterBackRight => Profile::ThreeQuarterBackLeft,
            Profile::ThreeQuarterBackLeft => Profile::ThreeQuarterBackRight,
            Profile::Left => Profile::Right,
            Profile::ThreeQuarterLeft => Profile::ThreeQuarterRight,
            p => p,
        }
    }

    pub fn is_back_family(self) -> bool {
        matches!(
            self,
            Profile::Back | Profile::ThreeQuarterBackLeft | Profile::ThreeQuarterBackRight
        )
    }
}

impl Screen {
    pub const ALL: [Screen; 3] = [Screen::Left, Screen::Center, Screen::Right];

    /// Target horizontal NDC coordinate of the subject's face.
    pub fn ndc_x(self) -> f64 {
        match self {
            Screen::Left => -1.0 / 3.0,
            Screen::Center => 0.0,
            Screen::Right => 1.0 / 3.0,
        }
    }

    pub fn mirrored(self) -> Screen {
        match self {
            Screen::Left => Screen::Right,
            Screen::Right => Screen::Left,
            Screen::Center => Screen::Center,
        }
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Angle::Low => "Low",
            Angle::Eye => "Eye",
            Angle::High => "High",
        })
    }
}

impl fmt::Display for Size {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Front => "Front",
            Profile::ThreeQuarterRight => "3/4 Right",
            Profile::Right => "Right",
            Profile::ThreeQuarterBackRight => "3/4 Back Right",
            Profile::Back => "Back",
            Profile::ThreeQuarterBackLeft => "3/4 Back Left",
            Profile::Left => "Left",
            Profile::ThreeQuarterLeft => "3/4 Left",
        })
    }
}

impl fmt::Display for Screen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Screen::Left => "Left",
            Screen::Center => "Center",
            Screen::Right => "Right",
        })
    }
}

/// A shot composition without its subject. Text form: `Eye, LS, Right [Left]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ShotTemplate {
    pub angle: Angle,
    pub size: Size,
    pub profile: Profile,
    pub screen: Screen,
}

impl ShotTemplate {
    pub fn new(angle: Angle, size: Size, profile: Profile, screen: Screen) -> Self {
        Self {
            angle,
            size,
            profile,
            screen,
        }
    }

    pub fn on(self, subject: SubjectRef) -> ShotSpec {
        ShotSpec {
            angle: self.angle,
            size: self.size,
            profile: self.profile,
            screen: self.screen,
            subject,
        }
    }

    /// Swaps left and right in both the profile and the screen slot.
    pub fn mirrored(self) -> Self {
        Self {
            profile: self.profile.mirrored(),
            screen: self.screen.mirrored(),
            ..self
        }
    }
}

impl fmt::Display for ShotTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}, {}, {} [{}]",
            self.angle, self.size, self.profile, self.screen
        )
    }
}

impl FromStr for ShotTemplate {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // Reuse the spec grammar with a placeholder subject.
        let (head, tail) = match s.find('[') {
            Some(i) => (&s[..i], &s[i..]),
            None => (s, ""),
        };
        let text = format!("{head} on _ {tail}");
        parse(&text).map(|spec| spec.template()).map_err(|mut e| {
            if e.position > head.len() {
                e.position = e.position.saturating_sub(5).min(s.len());
            }
            e
        })
    }
}

impl Serialize for ShotTemplate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ShotTemplate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Subject reference, e.g. `npc_3`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectRef(String);

impl SubjectRef {
    pub fn avatar(id: u32) -> Self {
        Self(format!("npc_{id}"))
    }

    pub fn new(name: impl Into<String>) -> Option<Self> {
        let name = name.into();
        let mut chars = name.chars();
        let ok = chars
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
        ok.then_some(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Avatar id for `npc_<n>` references.
    pub fn avatar_id(&self) -> Option<u32> {
        self.0.strip_prefix("npc_")?.parse().ok()
    }
}

impl fmt::Display for SubjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ShotSpec {
    pub angle: Angle,
    pub size: Size,
    pub profile: Profile,
    pub screen: Screen,
    pub subject: SubjectRef,
}

impl ShotSpec {
    pub fn template(&self) -> ShotTemplate {
        ShotTemplate::new(self.angle, self.size, self.profile, self.screen)
    }
}

impl fmt::Display for ShotSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}, {}, {} on {} [{}]",
            self.angle, self.size, self.profile, self.subject, self.screen
        )
    }
}

/// Canonical text form; `parse(&format(s)) == Ok(s)`.
pub fn format(spec: &ShotSpec) -> String {
    spec.to_string()
}

impl Serialize for ShotSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ShotSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("shot spec parse error at byte {position}: found {found}, expected {}", expected.join(" | "))]
pub struct ParseError {
    pub position: usize,
    pub found: String,
    pub expected: Vec<&'static str>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Word(&'a str),
    ThreeQuarter,
    Comma,
    Open,
    Close,
    Bad(&'a str),
}

fn tokenize(text: &str) -> Vec<(usize, Tok<'_>)> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b',' => {
                i += 1;
                Tok::Comma
            }
            b'[' => {
                i += 1;
                Tok::Open
            }
            b']' => {
                i += 1;
                Tok::Close
            }
            b'3' if text[i..].starts_with("3/4") => {
                i += 3;
                Tok::ThreeQuarter
            }
            c if c.is_ascii_alphanumeric() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                Tok::Word(&text[start..i])
            }
            _ => {
                // Consume one full UTF-8 character.
                let ch = text[i..].chars().next().map_or(1, char::len_utf8);
                i += ch;
                Tok::Bad(&text[start..i])
            }
        };
        out.push((start, tok));
    }
    out
}

struct Parser<'a> {
    toks: Vec<(usize, Tok<'a>)>,
    pos: usize,
    end: usize,
}

const ANGLES: &[&str] = &["Low", "Eye", "High"];
const SIZES: &[&str] = &["ECU", "BCU", "CU", "MCU", "MS", "LS", "ELS"];
const PROFILES: &[&str] = &["Front", "Back", "Left", "Right", "3/4"];
const SIDES: &[&str] = &["Left", "Right", "Back"];
const SCREENS: &[&str] = &["Left", "Center", "Right"];

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&(usize, Tok<'a>)> {
        self.toks.get(self.pos)
    }

    fn error(&self, expected: &[&'static str]) -> ParseError {
        let (position, found) = match self.peek() {
            Some((p, t)) => (
                *p,
                match t {
                    Tok::Word(w) | Tok::Bad(w) => format!("\"{w}\""),
                    Tok::ThreeQuarter => "\"3/4\"".into(),
                    Tok::Comma => "\",\"".into(),
                    Tok::Open => "\"[\"".into(),
                    Tok::Close => "\"]\"".into(),
                },
            ),
            None => (self.end, "end of input".into()),
        };
        ParseError {
            position,
            found,
            expected: expected.to_vec(),
        }
    }

    fn word(&mut self, expected: &[&'static str]) -> Result<String, ParseError> {
        match self.peek() {
            Some((_, Tok::Word(w))) => {
                let w = w.to_ascii_lowercase();
                self.pos += 1;
                Ok(w)
            }
            _ => Err(self.error(expected)),
        }
    }

    fn keyword<T>(
        &mut self,
        expected: &[&'static str],
        map: impl Fn(&str) -> Option<T>,
    ) -> Result<T, ParseError> {
        let save = self.pos;
        let w = self.word(expected)?;
        map(&w).ok_or_else(|| {
            self.pos = save;
            self.error(expected)
        })
    }

    fn punct(&mut self, tok: Tok<'static>, expected: &'static str) -> Result<(), ParseError> {
        match self.peek() {
            Some((_, t)) if *t == tok => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.error(&[expected])),
        }
    }

    fn profile(&mut self) -> Result<Profile, ParseError> {
        if matches!(self.peek(), Some((_, Tok::ThreeQuarter))) {
            self.pos += 1;
            let mut back = false;
            let mut side: Option<bool> = None; // true = right
            while let Some((_, Tok::Word(w))) = self.peek() {
                let w = w.to_ascii_lowercase();
                let (b, s) = match w.as_str() {
                    "back" => (true, None),
                    "left" => (false, Some(false)),
                    "right" => (false, Some(true)),
                    "backleft" | "leftback" => (true, Some(false)),
                    "backright" | "rightback" => (true, Some(true)),
                    _ => break,
                };
                if (b && back) || (s.is_some() && side.is_some()) {
                    break;
                }
                back |= b;
                if s.is_some() {
                    side = s;
                }
                self.pos += 1;
            }
            return match (side, back) {
                (Some(true), false) => Ok(Profile::ThreeQuarterRight),
                (Some(true), true) => Ok(Profile::ThreeQuarterBackRight),
                (Some(false), false) => Ok(Profile::ThreeQuarterLeft),
                (Some(false), true) => Ok(Profile::ThreeQuarterBackLeft),
                (None, _) => Err(self.error(SIDES)),
            };
        }
        self.keyword(PROFILES, |w| match w {
            "front" => Some(Profile::Front),
            "back" => Some(Profile::Back),
            "left" => Some(Profile::Left),
            "right" => Some(Profile::Right),
            _ => None,
        })
    }

    fn spec(&mut self) -> Result<ShotSpec, ParseError> {
        let angle = self.keyword(ANGLES, |w| match w {
            "low" => Some(Angle::Low),
            "eye" => Some(Angle::Eye),
            "high" => Some(Angle::High),
            _ => None,
        })?;
        self.punct(Tok::Comma, ",")?;
        let size = self.keyword(SIZES, |w| {
            Size::ALL
                .into_iter()
                .find(|s| s.to_string().eq_ignore_ascii_case(w))
        })?;
        self.punct(Tok::Comma, ",")?;
        let profile = self.profile()?;
        self.keyword(&["on"], |w| (w == "on").then_some(()))?;
        let subject = match self.peek() {
            Some((_, Tok::Word(w))) => {
                let s = SubjectRef::new(*w).ok_or_else(|| self.error(&["<subject>"]))?;
                self.pos += 1;
                s
            }
            _ => return Err(self.error(&["<subject>"])),
        };
        let screen = if matches!(self.peek(), Some((_, Tok::Open))) {
            self.pos += 1;
            let s = self.keyword(SCREENS, |w| match w {
                "left" => Some(Screen::Left),
                "center" | "centre" => Some(Screen::Center),
                "right" => Some(Screen::Right),
                _ => None,
            })?;
            self.punct(Tok::Close, "]")?;
            s
        } else {
            Screen::Center
        };
        if self.peek().is_some() {
            return Err(self.error(&["[", "end of input"]));
        }
        Ok(ShotSpec {
            angle,
            size,
            profile,
            screen,
            subject,
        })
    }
}

/// Parses one shot specification.
pub fn parse(text: &str) -> Result<ShotSpec, ParseError> {
    Parser {
        toks: tokenize(text),
        pos: 0,
        end: text.len(),
    }
    .spec()
}

impl FromStr for ShotSpec {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

/// All directable templates: 3 angles × 4 sizes × 8 profiles × 3 screens.
pub fn enumerate_specs() -> Vec<ShotTemplate> {
    let mut out = Vec::with_capacity(288);
    for angle in Angle::ALL {
        for size in Size::DIRECTABLE {
            for profile in Profile::ALL {
                for screen in Screen::ALL {
                    out.push(ShotTemplate::new(angle, size, profile, screen));
                }
            }
        }
    }
    out
}

/// Camera distances per shot size, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct SizeDistances<T> {
    #[serde(rename = "ECU")]
    pub ecu: T,
    #[serde(rename = "BCU")]
    pub bcu: T,
    #[serde(rename = "CU")]
    pub cu: T,
    #[serde(rename = "MCU")]
    pub mcu: T,
    #[serde(rename = "MS")]
    pub ms: T,
    #[serde(rename = "LS")]
    pub ls: T,
    #[serde(rename = "ELS")]
    pub els: T,
}

impl<T: Scalar> SizeDistances<T> {
    pub fn get(&self, size: Size) -> T {
        match size {
            Size::ECU => self.ecu,
            Size::BCU => self.bcu,
            Size::CU => self.cu,
            Size::MCU => self.mcu,
            Size::MS => self.ms,
            Size::LS => self.ls,
            Size::ELS => self.els,
        }
    }
}

/// Camera height offsets from the face point per angle, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct AngleHeights<T> {
    #[serde(rename = "Low")]
    pub low: T,
    #[serde(rename = "Eye")]
    pub eye: T,
    #[serde(rename = "High")]
    pub high: T,
}

impl<T: Scalar> AngleHeights<T> {
    pub fn get(&self, angle: Angle) -> T {
        match angle {
            Angle::Low => self.low,
            Angle::Eye => self.eye,
            Angle::High => self.high,
        }
    }
}

/// Mapping tables from spec keywords to camera geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
#[serde(default)]
pub struct SolveMaps<T: Scalar> {
    pub size_distance: SizeDistances<T>,
    pub angle_height: AngleHeights<T>,
    /// Vertical field of view, radians.
    pub fov: T,
    /// Width / height.
    pub aspect: T,
}

impl<T: Scalar> Default for SolveMaps<T> {
    fn default() -> Self {
        let l = T::lit;
        Self {
            size_distance: SizeDistances {
                ecu: l(0.35),
                bcu: l(0.55),
                cu: l(0.8),
                mcu: l(1.5),
                ms: l(2.5),
                ls: l(4.5),
                els: l(10.0),
            },
            angle_height: AngleHeights {
                low: l(-0.6),
                eye: l(0.0),
                high: l(1.2),
            },
            fov: l(50f64.to_radians()),
            aspect: l(16.0 / 9.0),
        }
    }
}

impl<T: Scalar> SolveMaps<T> {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let d: Vec<T> = Size::ALL.iter().map(|s| self.size_distance.get(*s)).collect();
        if d[0] <= T::zero() || d.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GeometryError::InvalidMaps(
                "size_distance must be positive and strictly increasing from ECU to ELS",
            ));
        }
        if !(self.fov > T::zero() && self.fov < T::PI()) {
            return Err(GeometryError::InvalidMaps("fov must lie in (0, pi)"));
        }
        if self.aspect <= T::zero() {
            return Err(GeometryError::InvalidMaps("aspect must be positive"));
        }
        Ok(())
    }

    pub fn horizontal_fov(&self) -> T {
        horizontal_fov(self.fov, self.aspect)
    }
}

pub fn horizontal_fov<T: Scalar>(vertical: T, aspect: T) -> T {
    let two = T::lit(2.0);
    two * ((vertical / two).tan() * aspect).atan()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("subject facing vector is zero")]
    ZeroFacing,
    #[error("invalid solve maps: {0}")]
    InvalidMaps(&'static str),
    #[error("camera would coincide with the subject")]
    Degenerate,
}

/// Where a subject stands and looks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct SubjectAnchor<T> {
    /// Lower-abdomen point.
    pub base_point: Vec3<T>,
    /// Midpoint of the face.
    pub face_point: Vec3<T>,
    /// Horizontal facing direction (normalized by `solve`).
    pub facing: Vec3<T>,
}

impl<T: Scalar> SubjectAnchor<T> {
    pub fn rotated(&self, yaw: T) -> Self {
        Self {
            base_point: self.base_point.rotate_z(yaw),
            face_point: self.face_point.rotate_z(yaw),
            facing: self.facing.rotate_z(yaw),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct CameraPose<T> {
    pub position: Vec3<T>,
    pub focus: Vec3<T>,
    /// Vertical field of view, radians. Up is always world +z.
    pub fov: T,
}

/// Orthonormal camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraBasis<T> {
    pub forward: Vec3<T>,
    pub right: Vec3<T>,
    pub up: Vec3<T>,
}

impl<T: Scalar> CameraPose<T> {
    pub fn basis(&self) -> Option<CameraBasis<T>> {
        let forward = (self.focus - self.position).normalized()?;
        let right = forward
            .cross(Vec3::up())
            .normalized()
            .unwrap_or(Vec3::new(T::one(), T::zero(), T::zero()));
        let up = right.cross(forward);
        Some(CameraBasis { forward, right, up })
    }

    pub fn cast<U: Scalar>(&self) -> CameraPose<U> {
        CameraPose {
            position: self.position.cast(),
            focus: self.focus.cast(),
            fov: U::lit(self.fov.to_f64_lossy()),
        }
    }
}

/// Solves a spec against a subject anchor.
///
/// The camera stands `size_distance` away from the base point along the
/// profile bearing, at `angle_height` above the face. The focus is then
/// shifted sideways (horizontally, perpendicular to the view) by exactly the
/// amount that lands the face on the screen slot's vertical line while
/// keeping it on the horizontal centerline.
pub fn solve<T: Scalar>(
    spec: &ShotTemplate,
    anchor: &SubjectAnchor<T>,
    maps: &SolveMaps<T>,
) -> Result<CameraPose<T>, GeometryError> {
    let facing = anchor
        .facing
        .horizontal()
        .normalized()
        .ok_or(GeometryError::ZeroFacing)?;
    let bearing = facing.rotate_z(spec.profile.radians());
    let distance = maps.size_distance.get(spec.size);
    let position = (anchor.base_point + bearing * distance)
        .with_z(anchor.face_point.z + maps.angle_height.get(spec.angle));

    let to_face = anchor.face_point - position;
    let d = to_face.norm();
    let view = to_face.normalized().ok_or(GeometryError::Degenerate)?;
    let half_h = maps.horizontal_fov() / T::lit(2.0);
    let tan_g = T::lit(spec.screen.ndc_x()) * half_h.tan();
    let sin_g = tan_g / (T::one() + tan_g * tan_g).sqrt();

    let horiz = view.horizontal();
    let h = horiz.norm();
    if h <= T::epsilon() {
        return Err(GeometryError::Degenerate);
    }
    let yaw0 = horiz.yaw();
    let c = (sin_g / h).max(-T::one()).min(T::one());
    let right = Vec3::from_yaw(yaw0 - c.acos());
    let focus = anchor.face_point - right * (d * sin_g);
    Ok(CameraPose {
        position,
        focus,
        fov: maps.fov,
    })
}

/// Pixel-space projection result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
    pub visible: bool,
}

/// Perspective projection into a `width × height` viewport; pixel y grows
/// downward. `visible` is false behind the camera or outside the frustum.
pub fn project<T: Scalar>(pose: &CameraPose<T>, point: Vec3<T>, width: f64, height: f64) -> Projection {
    let Some(b) = pose.basis() else {
        return Projection {
            x: f64::NAN,
            y: f64::NAN,
            depth: 0.0,
            visible: false,
        };
    };
    let rel = (point - pose.position).cast::<f64>();
    let (fwd, right, up) = (b.forward.cast::<f64>(), b.right.cast::<f64>(), b.up.cast::<f64>());
    let depth = rel.dot(fwd);
    let aspect = width / height;
    let tan_v = (pose.fov.to_f64_lossy() / 2.0).tan();
    let tan_h = tan_v * aspect;
    if depth <= 1e-9 {
        return Projection {
            x: f64::NAN,
            y: f64::NAN,
            depth,
            visible: false,
        };
    }
    let ndc_x = rel.dot(right) / (depth * tan_h);
    let ndc_y = rel.dot(up) / (depth * tan_v);
    let x = (ndc_x + 1.0) * 0.5 * width;
    let y = (1.0 - ndc_y) * 0.5 * height;
    let eps = 1e-9;
    Projection {
        x,
        y,
        depth,
        visible: ndc_x.abs() <= 1.0 + eps && ndc_y.abs() <= 1.0 + eps,
    }
}

/// Signed horizontal angle from `facing` to `dir`, in `(-π, π]`.
pub fn signed_yaw_between<T: Scalar>(facing: Vec3<T>, dir: Vec3<T>) -> T {
    wrap_signed(dir.yaw() - facing.yaw())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(text: &str) -> ShotSpec {
        parse(text).unwrap()
    }

    #[test]
    fn parses_table_shape() {
        let s = spec("Eye, LS, Right on npc_3 [Left]");
        assert_eq!(
            s,
            ShotTemplate::new(Angle::Eye, Size::LS, Profile::Right, Screen::Left)
                .on(SubjectRef::avatar(3))
        );
        assert_eq!(s.subject.avatar_id(), Some(3));
    }

    #[test]
    fn parses_lowercase_and_default_screen() {
        let s = spec("low, mcu, 3/4 back left on npc_0");
        assert_eq!(
            s.template(),
            ShotTemplate::new(Angle::Low, Size::MCU, Profile::ThreeQuarterBackLeft, Screen::Center)
        );
        assert_eq!(spec("Low, MCU, 3/4BackLeft on npc_0").template(), s.template());
        assert_eq!(spec("Low, MCU, 3/4 left back on npc_0").template(), s.template());
        assert_eq!(
            spec("HIGH,ELS,3/4 right on hero").profile,
            Profile::ThreeQuarterRight
        );
    }

    #[test]
    fn rejects_unknown_size() {
        let e = parse("Eye, XXL, Right on npc_3").unwrap_err();
        assert_eq!(e.position, 5);
        assert_eq!(e.found, "\"XXL\"");
        assert!(e.expected.contains(&"LS"));
    }

    #[test]
    fn rejects_missing_on_and_bad_order() {
        let e = parse("Eye, LS, Right npc_3").unwrap_err();
        assert_eq!(e.expected, vec!["on"]);
        assert_eq!(e.position, 15);
        let e = parse("LS, Eye, Right on npc_3").unwrap_err();
        assert_eq!(e.position, 0);
        let e = parse("Eye, LS, 3/4 on npc_3").unwrap_err();
        assert_eq!(e.found, "\"on\"");
        let e = parse("Eye, LS, Right on npc_3 [Left").unwrap_err();
        assert_eq!(e.found, "end of input");
        let e = parse("Eye, LS, Right on npc_3 [Left] extra").unwrap_err();
        assert_eq!(e.found, "\"extra\"");
        assert!(parse("").is_err());
        assert!(parse("Eye, LS, Right on 3npc").is_err());
        assert!(parse("Eye, LS, Right on ☃").is_err());
    }

    #[test]
    fn canonical_format() {
        let s = ShotTemplate::new(Angle::Eye, Size::LS, Profile::Right, Screen::Left)
            .on(SubjectRef::avatar(3));
        assert_eq!(format(&s), "Eye, LS, Right on npc_3 [Left]");
        let s = ShotTemplate::new(Angle::Low, Size::ELS, Profile::Back, Screen::Center)
            .on(SubjectRef::avatar(1));
        assert_eq!(parse(&format(&s)).unwrap(), s);
    }

    #[test]
    fn round_trip_all_combinations() {
        let mut n = 0;
        for a in Angle::ALL {
            for z in Size::ALL {
                for p in Profile::ALL {
                    for sc in Screen::ALL {
                        let s = ShotTemplate::new(a, z, p, sc).on(SubjectRef::avatar(7));
                        assert_eq!(parse(&format(&s)).unwrap(), s);
                        n += 1;
                    }
                }
            }
        }
        assert_eq!(n, 504);
    }

    #[test]
    fn template_text_round_trip() {
        for t in enumerate_specs() {
            assert_eq!(t.to_string().parse::<ShotTemplate>().unwrap(), t);
        }
        assert!("Eye, XXL, Right".parse::<ShotTemplate>().is_err());
    }

    #[test]
    fn enumeration() {
        let all = enumerate_specs();
        assert_eq!(all.len(), 288);
        let set: std::collections::BTreeSet<_> = all.iter().collect();
        assert_eq!(set.len(), 288);
        assert!(all.contains(&ShotTemplate::new(Angle::Eye, Size::LS, Profile::Right, Screen::Left)));
    }

    fn origin_anchor() -> SubjectAnchor<f64> {
        SubjectAnchor {
            base_point: Vec3::new(0.0, 0.0, 0.935),
            face_point: Vec3::new(0.0, 0.0, 1.581),
            facing: Vec3::new(1.0, 0.0, 0.0),
        }
    }

    #[test]
    fn solve_axis_cases() {
        let maps = SolveMaps::<f64>::default();
        let a = origin_anchor();
        let front = ShotTemplate::new(Angle::Eye, Size::LS, Profile::Front, Screen::Center);
        let p = solve(&front, &a, &maps).unwrap();
        assert!((p.position - Vec3::new(4.5, 0.0, 1.581)).norm() < 1e-12);
        assert!((p.focus - a.face_point).norm() < 1e-12);

        let back = ShotTemplate { profile: Profile::Back, ..front };
        let p = solve(&back, &a, &maps).unwrap();
        assert!((p.position - Vec3::new(-4.5, 0.0, 1.581)).norm() < 1e-12);
    }

    #[test]
    fn three_quarter_right_is_on_subject_right() {
        let maps = SolveMaps::<f64>::default();
        let a = origin_anchor();
        let t = ShotTemplate::new(Angle::Eye, Size::LS, Profile::ThreeQuarterRight, Screen::Center);
        let p = solve(&t, &a, &maps).unwrap();
        let rel = (p.position - a.base_point).horizontal();
        // Independent check: unsigned angle by acos, side by the y sign
        // (facing +x puts the subject's right at -y).
        let ang = (rel.dot(a.facing) / rel.norm()).acos();
        assert!((ang - std::f64::consts::FRAC_PI_4).abs() < 1e-6);
        assert!(rel.y < 0.0);
    }

    #[test]
    fn screen_left_lands_on_third_line() {
        let maps = SolveMaps::<f64>::default();
        let a = origin_anchor();
        for angle in Angle::ALL {
            let t = ShotTemplate::new(angle, Size::MS, Profile::Left, Screen::Left);
            let p = solve(&t, &a, &maps).unwrap();
            let pr = project(&p, a.face_point, 1920.0, 1080.0);
            assert!(pr.visible);
            assert!((pr.x - 640.0).abs() < 0.5, "{angle:?}: {}", pr.x);
            assert!((pr.y - 540.0).abs() < 0.5);
        }
    }

    #[test]
    fn zero_facing_is_an_error() {
        let maps = SolveMaps::<f64>::default();
        let mut a = origin_anchor();
        a.facing = Vec3::zero();
        let t = ShotTemplate::new(Angle::Eye, Size::LS, Profile::Front, Screen::Center);
        assert_eq!(solve(&t, &a, &maps), Err(GeometryError::ZeroFacing));
    }

    #[test]
    fn projection_basics() {
        let pose = CameraPose {
            position: Vec3::new(0.0, 0.0, 0.0),
            focus: Vec3::new(10.0, 0.0, 0.0),
            fov: 50f64.to_radians(),
        };
        let c = project(&pose, pose.focus, 1920.0, 1080.0);
        assert!((c.x - 960.0).abs() < 1e-9 && (c.y - 540.0).abs() < 1e-9 && c.visible);
        assert!(!project(&pose, Vec3::new(-1.0, 0.0, 0.0), 1920.0, 1080.0).visible);

        // A point at half the horizontal fov to the camera's right sits on
        // the right edge.
        let half_h = horizontal_fov(50f64.to_radians(), 1920.0 / 1080.0) / 2.0;
        let edge = Vec3::new(10.0, -10.0 * half_h.tan(), 0.0);
        let e = project(&pose, edge, 1920.0, 1080.0);
        assert!((e.x - 1920.0).abs() < 1.0, "{}", e.x);
        let top = Vec3::new(10.0, 0.0, 10.0 * (25f64.to_radians()).tan());
        assert!(project(&pose, top, 1920.0, 1080.0).y.abs() < 1.0);
    }

    #[test]
    fn solve_works_in_f32() {
        let maps = SolveMaps::<f32>::default();
        let a = origin_anchor().cast_f32();
        let t = ShotTemplate::new(Angle::High, Size::ELS, Profile::ThreeQuarterLeft, Screen::Right);
        let p = solve(&t, &a, &maps).unwrap();
        let pr = project(&p, a.face_point, 1920.0, 1080.0);
        assert!((pr.x - 1280.0).abs() < 1.0, "{}", pr.x);
    }

    impl SubjectAnchor<f64> {
        fn cast_f32(&self) -> SubjectAnchor<f32> {
            SubjectAnchor {
                base_point: self.base_point.cast(),
                face_point: self.face_point.cast(),
                facing: self.facing.cast(),
            }
        }
    }
}
