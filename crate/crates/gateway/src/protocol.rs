//! Wire messages exchanged with viewers, one JSON object per text frame.

use announcer_core::adapt::{FeedbackKind, Prompt, QoEConfig};
use announcer_core::director::{DirectorMode, ShotLogRecord};
use announcer_core::engine::{Notice, QoEPatch};
use announcer_core::events::{Event, EventKind};
use announcer_core::world::{AvatarId, WorldState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvatarView {
    pub id: AvatarId,
    pub pos: [f64; 3],
    pub yaw: f64,
    pub phase: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraView {
    pub pos: [f64; 3],
    pub focus: [f64; 3],
    pub fov: f64,
    pub mode: String,
    pub phase: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WireMessage {
    Snapshot {
        t: f64,
        avatars: Vec<AvatarView>,
        camera: CameraView,
    },
    Event {
        id: u64,
        kind: EventKind,
        subjects: Vec<AvatarId>,
        score: f64,
        mode: String,
    },
    Shot {
        event_id: u64,
        index: usize,
        spec: String,
    },
    Prompt {
        kind: PromptKind,
        t: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        event_id: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spec: Option<String>,
    },
    Feedback {
        kind: FeedbackKind,
        #[serde(default)]
        context: Option<String>,
    },
    Config {
        config: QoEConfig,
    },
    SetConfig {
        patch: QoEPatch,
    },
    Error {
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Composition,
    Pacing,
}

/// A message with its per-connection sequence number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: u64,
    #[serde(flatten)]
    pub message: WireMessage,
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("`{0}` messages are server-to-viewer only")]
    Direction(&'static str),
    #[error("binary frames are not accepted")]
    Binary,
}

impl WireMessage {
    pub fn type_name(&self) -> &'static str {
        match self {
            Self::Snapshot { .. } => "snapshot",
            Self::Event { .. } => "event",
            Self::Shot { .. } => "shot",
            Self::Prompt { .. } => "prompt",
            Self::Feedback { .. } => "feedback",
            Self::Config { .. } => "config",
            Self::SetConfig { .. } => "set_config",
            Self::Error { .. } => "error",
        }
    }

    /// Snapshots and error replies may be dropped for a slow viewer.
    pub fn droppable(&self) -> bool {
        matches!(self, Self::Snapshot { .. } | Self::Error { .. })
    }

    pub fn snapshot(world: &WorldState, rec: &ShotLogRecord) -> Self {
        let avatars = world
            .avatars
            .iter()
            .map(|a| AvatarView {
                id: a.id,
                pos: [a.position.x, a.position.y, a.position.z],
                yaw: a.facing,
                phase: a.behavior.name().to_string(),
            })
            .collect();
        let phase = serde_json::to_value(rec.phase)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        Self::Snapshot {
            t: rec.t,
            avatars,
            camera: CameraView {
                pos: rec.pos,
                focus: rec.focus,
                fov: rec.fov,
                mode: rec.mode.clone(),
                phase,
            },
        }
    }

    pub fn from_notice(notice: &Notice) -> Option<Self> {
        Some(match notice {
            Notice::Event(ev, mode) => event_message(ev, mode),
            Notice::Shot { event_id, index, spec } => Self::Shot {
                event_id: *event_id,
                index: *index,
                spec: spec.clone(),
            },
            Notice::Prompt(Prompt::Composition { t, event_id, spec }) => Self::Prompt {
                kind: PromptKind::Composition,
                t: *t,
                event_id: Some(*event_id),
                spec: spec.clone(),
            },
            Notice::Prompt(Prompt::Pacing { t }) => Self::Prompt {
                kind: PromptKind::Pacing,
                t: *t,
                event_id: None,
                spec: None,
            },
            Notice::Config(c) => Self::Config { config: *c },
            Notice::Skipped { .. } => return None,
        })
    }
}

fn event_message(ev: &Event, mode: &DirectorMode) -> WireMessage {
    WireMessage::Event {
        id: ev.id,
        kind: ev.kind,
        subjects: ev.subjects.clone(),
        score: ev.score,
        mode: mode.label().to_string(),
    }
}

pub fn encode(env: &Envelope) -> String {
    serde_json::to_string(env).expect("wire messages always serialize")
}

/// Parses an inbound text frame; only viewer-to-server types pass.
pub fn decode_inbound(text: &str) -> Result<Envelope, ProtocolError> {
    let env: Envelope = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    match env.message {
        WireMessage::Feedback { .. } | WireMessage::SetConfig { .. } => Ok(env),
        ref other => Err(ProtocolError::Direction(other.type_name())),
    }
}
