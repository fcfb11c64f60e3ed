//! Deterministic virtual-world announcer engine.
//!
//! Geometry, the shot language solver and camera paths are generic over
//! the scalar type; the aliases below fix them to `f64`, which is what the
//! simulation and the engine use.

pub mod adapt;
pub mod composition;
pub mod config;
pub mod director;
pub mod engine;
pub mod events;
pub mod experiments;
pub mod geom;
pub mod psl;
pub mod scalar;
pub mod shotlog;
pub mod storyboard;
pub mod world;

pub use scalar::Scalar;

pub type Vec3 = geom::Vec3<f64>;
pub type Aabb = geom::Aabb<f64>;
pub type CameraPose = psl::CameraPose<f64>;
pub type SubjectAnchor = psl::SubjectAnchor<f64>;
pub type SolveMaps = psl::SolveMaps<f64>;
pub type CameraPath = director::CameraPath<f64>;
pub type PatrolTrace = director::PatrolTrace<f64>;

pub use config::{EngineConfig, Scenario};
pub use engine::Engine;
