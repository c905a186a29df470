//! Movie sound production pipeline: scene detection on frame embeddings,
//! control-signal extraction, decoupled cross-attention reference math,
//! supervised agent planning, deterministic synthesis, LUFS mixing and
//! synchronization metrics.

pub mod agents;
pub mod conditioning;
pub mod control_signals;
pub mod error;
pub mod http;
pub mod media_io;
pub mod metrics;
pub mod mixer;
pub mod plans;
pub mod scene_detect;
pub mod synthesis;

pub use error::{Error, Result};
pub use media_io::{AudioBuffer, ControlSignal, FrameEmbeddingSequence};
