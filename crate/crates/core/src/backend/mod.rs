//! The video-language model abstraction and its implementations.
//!
//! A backend offers four inference capabilities over a set of sampled frames:
//! answer a question, self-evaluate an answer (probability of "yes"), propose
//! promising sub-intervals, and describe keyframes. Implementations must be
//! callable from concurrent tasks; no shared search state lives here.

mod http;
mod stub;

pub use http::{HttpBackend, HttpBackendConfig, InferenceRequest, TimedFrame};
pub use stub::{ProceduralBackend, ScriptedBackend};

use serde::{Deserialize, Serialize};

use crate::domain::{Interval, KeyframeMemory, KeyframeNote, ModelVerdict, Query, VideoSource};
use crate::error::Result;
use crate::sampling::FrameSample;

/// What a backend supports; checked against the run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendCapabilities {
    pub supports_logprobs: bool,
    pub supports_yes_probability: bool,
    pub max_images: u32,
}

/// A video-language model.
///
/// Every call is independent and must be safe to issue from multiple threads
/// at once. Answers are produced at temperature 0 so identical requests yield
/// identical verdicts on deterministic backends.
pub trait VideoLlm: Send + Sync {
    fn capabilities(&self) -> BackendCapabilities;

    /// Answers `query` from the sampled frames. The verdict's confidence is
    /// always recomputed from the returned token log-probabilities, never
    /// trusted from model prose.
    fn answer(
        &self,
        video: &VideoSource,
        frames: &FrameSample,
        query: &Query,
        memory: &KeyframeMemory,
    ) -> Result<ModelVerdict>;

    /// Probability the model assigns to "yes" when asked whether `answer` is
    /// correct, renormalized over the {yes, no} pair. Falls back to a neutral
    /// 0.5 when neither token is available.
    fn evaluate(
        &self,
        video: &VideoSource,
        frames: &FrameSample,
        query: &Query,
        answer: &ModelVerdict,
        memory: &KeyframeMemory,
    ) -> Result<f64>;

    /// Up to `n` sub-intervals of `parent` the model considers promising.
    /// An unparseable reply yields an empty list, never an error.
    fn propose_intervals(
        &self,
        video: &VideoSource,
        frames: &FrameSample,
        query: &Query,
        memory: &KeyframeMemory,
        parent: Interval,
        n: u32,
    ) -> Result<Vec<Interval>>;

    /// Query-relevant descriptions of the sampled frames, timestamped at the
    /// midpoint of the sampled interval. An empty reply yields no notes.
    fn describe_keyframes(
        &self,
        video: &VideoSource,
        frames: &FrameSample,
        query: &Query,
        memory: &KeyframeMemory,
    ) -> Result<Vec<KeyframeNote>>;
}

impl<T: VideoLlm + ?Sized> VideoLlm for std::sync::Arc<T> {
    fn capabilities(&self) -> BackendCapabilities {
        (**self).capabilities()
    }
    fn answer(
        &self,
        video: &VideoSource,
        frames: &FrameSample,
        query: &Query,
        memory: &KeyframeMemory,
    ) -> Result<ModelVerdict> {
        (**self).answer(video, frames, query, memory)
    }
    fn evaluate(
        &self,
        video: &VideoSource,
        frames: &FrameSample,
        query: &Query,
        answer: &ModelVerdict,
        memory: &KeyframeMemory,
    ) -> Result<f64> {
        (**self).evaluate(video, frames, query, answer, memory)
    }
    fn propose_intervals(
        &self,
        video: &VideoSource,
        frames: &FrameSample,
        query: &Query,
        memory: &KeyframeMemory,
        parent: Interval,
        n: u32,
    ) -> Result<Vec<Interval>> {
        (**self).propose_intervals(video, frames, query, memory, parent, n)
    }
    fn describe_keyframes(
        &self,
        video: &VideoSource,
        frames: &FrameSample,
        query: &Query,
        memory: &KeyframeMemory,
    ) -> Result<Vec<KeyframeNote>> {
        (**self).describe_keyframes(video, frames, query, memory)
    }
}

/// Renormalized probability of the affirmative token among the candidates for
/// the first generated position.
///
/// Tokens are matched case-insensitively after trimming whitespace and
/// punctuation, and the mass is renormalized over {yes, no} only, which keeps
/// the score robust to tokenizer differences. Returns `(0.5, true)` when
/// neither token appears; callers log the degradation.
pub(crate) fn yes_probability(top_logprobs: &[(String, f64)]) -> (f64, bool) {
    let mut p_yes: Option<f64> = None;
    let mut p_no: Option<f64> = None;
    for (token, logprob) in top_logprobs {
        let norm = token
            .trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
            .to_ascii_lowercase();
        let slot = match norm.as_str() {
            "yes" => &mut p_yes,
            "no" => &mut p_no,
            _ => continue,
        };
        let p = logprob.exp();
        if slot.is_none_or(|prev| p > prev) {
            *slot = Some(p);
        }
    }
    match (p_yes, p_no) {
        (Some(y), Some(n)) => (y / (y + n), false),
        (Some(y), None) => (y, false),
        (None, Some(n)) => (1.0 - n, false),
        (None, None) => (0.5, true),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yes_probability_renormalizes() {
        let top = vec![
            ("yes".to_string(), 0.7f64.ln()),
            ("no".to_string(), 0.3f64.ln()),
        ];
        let (p, degraded) = yes_probability(&top);
        assert!((p - 0.7).abs() < 1e-12);
        assert!(!degraded);
    }

    #[test]
    fn yes_probability_symmetric_case_insensitive() {
        let top = vec![
            ("Yes".to_string(), 0.5f64.ln()),
            (" No.".to_string(), 0.5f64.ln()),
        ];
        let (p, degraded) = yes_probability(&top);
        assert!((p - 0.5).abs() < 1e-12);
        assert!(!degraded);
    }

    #[test]
    fn yes_probability_falls_back_neutral() {
        let top = vec![("maybe".to_string(), 0.9f64.ln())];
        let (p, degraded) = yes_probability(&top);
        assert_eq!(p, 0.5);
        assert!(degraded);
    }

    #[test]
    fn yes_probability_single_sided() {
        let top = vec![("yes".to_string(), 0.8f64.ln())];
        let (p, degraded) = yes_probability(&top);
        assert!((p - 0.8).abs() < 1e-12);
        assert!(!degraded);
    }
}
