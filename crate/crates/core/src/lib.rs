//! Confidence-guided temporal search over long videos.
//!
//! A video-language model answering a question about a long video cannot look
//! at every frame. This crate treats the problem as a search over temporal
//! intervals: sample a fixed number of frames from an interval, ask the model,
//! and use its generation confidence (geometric-mean token probability) plus a
//! self-evaluation score to decide where to zoom in next.
//!
//! The crate ships:
//!
//! - [`domain`]: the shared value types — intervals, verdicts, search nodes,
//!   the keyframe memory, and the search configuration.
//! - [`sampling`]: deterministic frame selection and interval partitioning.
//! - [`prompts`]: prompt templates and parsers for structured model replies.
//! - [`backend`]: the model abstraction, an OpenAI-compatible HTTP client with
//!   log-probabilities, and a scripted stub for tests.
//! - [`search`]: the two search strategies (sequential zoom-in and best-first
//!   tree search) plus the uniform-sampling and temporal-voting baselines.
//! - [`oracle`]: a seeded synthetic model over videos with a planted relevant
//!   segment, used to verify the search end to end without a GPU.
//! - [`frames`]: frame image resolution and JPEG/base64 encoding for the wire.
//! - [`harness`]: manifest-driven evaluation runs, reports, and the
//!   confidence/accuracy and scaling analyses.

pub mod backend;
pub mod domain;
pub mod error;
pub mod frames;
pub mod harness;
pub mod oracle;
pub mod prompts;
pub mod sampling;
pub mod search;

pub use error::{Error, Result};
