//! A scripted backend for trace tests.
//!
//! Replies are queued per capability ahead of the run and consumed in FIFO
//! order; the cursors sit behind a mutex so the stub is safe to share, though
//! scripts only line up with calls when sibling evaluation runs with
//! `parallel_width = 1`.

use std::collections::VecDeque;
use std::sync::Mutex;

use rand::Rng;

use crate::backend::{yes_probability, BackendCapabilities, VideoLlm};
use crate::domain::{Interval, KeyframeMemory, KeyframeNote, ModelVerdict, Query, VideoSource};
use crate::error::{Error, Result};
use crate::prompts::{parse_choice, parse_intervals};
use crate::sampling::FrameSample;

type Scripted<T> = Mutex<VecDeque<std::result::Result<T, String>>>;

#[derive(Debug, Clone)]
struct AnswerScript {
    text: String,
    token_probs: Vec<f64>,
}

/// Backend whose every reply was queued by the test.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    answers: Scripted<AnswerScript>,
    evaluations: Scripted<Vec<(String, f64)>>,
    proposals: Scripted<String>,
    descriptions: Scripted<String>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues an answer reply with the given per-token probabilities.
    pub fn push_answer(&self, text: impl Into<String>, token_probs: &[f64]) {
        self.answers.lock().unwrap().push_back(Ok(AnswerScript {
            text: text.into(),
            token_probs: token_probs.to_vec(),
        }));
    }

    pub fn push_answer_error(&self, message: impl Into<String>) {
        self.answers.lock().unwrap().push_back(Err(message.into()));
    }

    /// Queues an evaluation reply as `(token, probability)` candidates for
    /// the first generated position.
    pub fn push_evaluation(&self, top: &[(&str, f64)]) {
        self.evaluations.lock().unwrap().push_back(Ok(top
            .iter()
            .map(|(t, p)| (t.to_string(), p.ln()))
            .collect()));
    }

    pub fn push_evaluation_error(&self, message: impl Into<String>) {
        self.evaluations
            .lock()
            .unwrap()
            .push_back(Err(message.into()));
    }

    /// Queues a raw proposal reply; parsed like a real model reply.
    pub fn push_proposal(&self, text: impl Into<String>) {
        self.proposals.lock().unwrap().push_back(Ok(text.into()));
    }

    pub fn push_proposal_error(&self, message: impl Into<String>) {
        self.proposals
            .lock()
            .unwrap()
            .push_back(Err(message.into()));
    }

    /// Queues a description reply; one note per non-empty line.
    pub fn push_description(&self, text: impl Into<String>) {
        self.descriptions.lock().unwrap().push_back(Ok(text.into()));
    }

    pub fn push_description_error(&self, message: impl Into<String>) {
        self.descriptions
            .lock()
            .unwrap()
            .push_back(Err(message.into()));
    }

    fn pop<T>(queue: &Scripted<T>, what: &'static str) -> Result<T> {
        match queue.lock().unwrap().pop_front() {
            Some(Ok(reply)) => Ok(reply),
            Some(Err(message)) => Err(Error::Transport(message)),
            None => Err(Error::ScriptExhausted(what)),
        }
    }
}

impl VideoLlm for ScriptedBackend {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            supports_logprobs: true,
            supports_yes_probability: true,
            max_images: u32::MAX,
        }
    }

    fn answer(
        &self,
        _video: &VideoSource,
        _frames: &FrameSample,
        query: &Query,
        _memory: &KeyframeMemory,
    ) -> Result<ModelVerdict> {
        let script = Self::pop(&self.answers, "answer")?;
        let logprobs: Vec<f64> = script.token_probs.iter().map(|p| p.ln()).collect();
        let choice = parse_choice(&script.text, &query.options);
        ModelVerdict::from_logprobs(script.text, choice, logprobs)
    }

    fn evaluate(
        &self,
        _video: &VideoSource,
        _frames: &FrameSample,
        _query: &Query,
        _answer: &ModelVerdict,
        _memory: &KeyframeMemory,
    ) -> Result<f64> {
        let top = Self::pop(&self.evaluations, "evaluate")?;
        let (p, degraded) = yes_probability(&top);
        if degraded {
            log::warn!("scripted evaluation had no yes/no candidate; using neutral 0.5");
        }
        Ok(p)
    }

    fn propose_intervals(
        &self,
        video: &VideoSource,
        _frames: &FrameSample,
        _query: &Query,
        _memory: &KeyframeMemory,
        parent: Interval,
        n: u32,
    ) -> Result<Vec<Interval>> {
        let text = Self::pop(&self.proposals, "propose")?;
        let mut intervals = parse_intervals(&text, video.fps, parent);
        intervals.truncate(n as usize);
        Ok(intervals)
    }

    fn describe_keyframes(
        &self,
        video: &VideoSource,
        frames: &FrameSample,
        _query: &Query,
        _memory: &KeyframeMemory,
    ) -> Result<Vec<KeyframeNote>> {
        let text = Self::pop(&self.descriptions, "describe")?;
        let timestamp_s = frames.interval.midpoint_s(video.fps);
        Ok(text
            .lines()
            .map(str::trim)
            .filter(|line| !line.is_empty())
            .map(|line| KeyframeNote {
                timestamp_s,
                source_interval: frames.interval,
                text: line.to_string(),
            })
            .collect())
    }
}

/// Backend serving seeded procedural replies.
///
/// Unlike [`ScriptedBackend`] it never runs out of replies and derives every
/// reply from its inputs (seed, frame indices, parent bounds) rather than
/// from call order, so it stays deterministic under concurrent sibling
/// evaluation. Used for smoke runs and randomized robustness tests; its
/// confidences carry no signal about any ground truth.
#[derive(Debug, Clone)]
pub struct ProceduralBackend {
    seed: u64,
}

impl ProceduralBackend {
    pub fn new(seed: u64) -> Self {
        ProceduralBackend { seed }
    }
}

impl VideoLlm for ProceduralBackend {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            supports_logprobs: true,
            supports_yes_probability: true,
            max_images: u32::MAX,
        }
    }

    fn answer(
        &self,
        _video: &VideoSource,
        frames: &FrameSample,
        query: &Query,
        _memory: &KeyframeMemory,
    ) -> Result<ModelVerdict> {
        let mut rng = crate::sampling::derive_rng(self.seed ^ 0x616e_7377, &frames.indices);
        let confidence: f64 = 0.05 + 0.9 * rng.random::<f64>();
        let text = if !query.options.is_empty() && rng.random::<f64>() < 0.85 {
            let pick = rng.random_range(0..query.options.len());
            query.options[pick].label.to_string()
        } else {
            "unclear".to_string()
        };
        let choice = parse_choice(&text, &query.options);
        ModelVerdict::from_logprobs(text, choice, vec![confidence.ln(); 3])
    }

    fn evaluate(
        &self,
        _video: &VideoSource,
        frames: &FrameSample,
        _query: &Query,
        _answer: &ModelVerdict,
        _memory: &KeyframeMemory,
    ) -> Result<f64> {
        let mut rng = crate::sampling::derive_rng(self.seed ^ 0x6576_616c, &frames.indices);
        Ok(rng.random::<f64>())
    }

    fn propose_intervals(
        &self,
        _video: &VideoSource,
        frames: &FrameSample,
        _query: &Query,
        _memory: &KeyframeMemory,
        parent: Interval,
        n: u32,
    ) -> Result<Vec<Interval>> {
        let mut parts = vec![parent.start(), parent.end()];
        parts.extend_from_slice(&frames.indices);
        let mut rng = crate::sampling::derive_rng(self.seed ^ 0x7072_6f70, &parts);
        if rng.random::<f64>() < 0.3 {
            return Ok(Vec::new());
        }
        let count = rng.random_range(1..=n.max(1));
        let len = parent.len();
        Ok((0..count)
            .map(|_| {
                let a = rng.random_range(0..len);
                let b = rng.random_range(0..len);
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                Interval::new(parent.start() + lo, parent.start() + hi + 1).expect("lo <= hi")
            })
            .collect())
    }

    fn describe_keyframes(
        &self,
        video: &VideoSource,
        frames: &FrameSample,
        _query: &Query,
        _memory: &KeyframeMemory,
    ) -> Result<Vec<KeyframeNote>> {
        let mut rng = crate::sampling::derive_rng(self.seed ^ 0x6465_7363, &frames.indices);
        if rng.random::<f64>() < 0.5 {
            return Ok(Vec::new());
        }
        let timestamp_s = frames.interval.midpoint_s(video.fps);
        Ok(vec![KeyframeNote {
            timestamp_s,
            source_interval: frames.interval,
            text: format!("frames near {timestamp_s:.1}s"),
        }])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::uniform_sample;

    fn fixtures() -> (VideoSource, Query, KeyframeMemory) {
        let video = VideoSource::new("v", 1600, 2.0).unwrap();
        let query = Query::multiple_choice("q", ["w", "x", "y", "z"], None).unwrap();
        (video, query, KeyframeMemory::new(8))
    }

    #[test]
    fn scripted_answer_builds_verdict() {
        let (video, query, memory) = fixtures();
        let stub = ScriptedBackend::new();
        stub.push_answer("A", &[0.9]);
        let frames = uniform_sample(video.full_interval(), 8);
        let verdict = stub.answer(&video, &frames, &query, &memory).unwrap();
        assert_eq!(verdict.parsed_choice, Some('A'));
        assert!((verdict.confidence - 0.9).abs() < 1e-12);
    }

    #[test]
    fn scripted_answer_geometric_mean_and_parser() {
        let (video, query, memory) = fixtures();
        let stub = ScriptedBackend::new();
        stub.push_answer("The answer is B", &[0.8, 0.8, 0.8, 0.8]);
        let frames = uniform_sample(video.full_interval(), 8);
        let verdict = stub.answer(&video, &frames, &query, &memory).unwrap();
        assert_eq!(verdict.parsed_choice, Some('B'));
        assert!((verdict.confidence - 0.8).abs() < 1e-12);
    }

    #[test]
    fn scripted_proposal_converts_seconds() {
        let (video, query, memory) = fixtures();
        let stub = ScriptedBackend::new();
        stub.push_proposal("[[10.0, 20.0]]");
        let parent = Interval::new(0, 200).unwrap();
        let frames = uniform_sample(parent, 8);
        let got = stub
            .propose_intervals(&video, &frames, &query, &memory, parent, 6)
            .unwrap();
        assert_eq!(got, vec![Interval::new(20, 40).unwrap()]);
    }

    #[test]
    fn scripted_proposal_garbage_is_empty() {
        let (video, query, memory) = fixtures();
        let stub = ScriptedBackend::new();
        stub.push_proposal("no ranges here");
        let parent = video.full_interval();
        let frames = uniform_sample(parent, 8);
        let got = stub
            .propose_intervals(&video, &frames, &query, &memory, parent, 6)
            .unwrap();
        assert!(got.is_empty());
    }

    #[test]
    fn scripted_describe_timestamps_midpoint() {
        let (video, query, memory) = fixtures();
        let stub = ScriptedBackend::new();
        stub.push_description("a red kite in the sky");
        let interval = Interval::new(700, 730).unwrap();
        let frames = uniform_sample(interval, 8);
        let notes = stub
            .describe_keyframes(&video, &frames, &query, &memory)
            .unwrap();
        assert_eq!(notes.len(), 1);
        assert!((notes[0].timestamp_s - 357.5).abs() < 1e-12);
        assert_eq!(notes[0].source_interval, interval);
    }

    #[test]
    fn scripted_describe_empty_reply() {
        let (video, query, memory) = fixtures();
        let stub = ScriptedBackend::new();
        stub.push_description("");
        let frames = uniform_sample(video.full_interval(), 8);
        let notes = stub
            .describe_keyframes(&video, &frames, &query, &memory)
            .unwrap();
        assert!(notes.is_empty());
    }

    #[test]
    fn exhausted_script_and_injected_errors() {
        let (video, query, memory) = fixtures();
        let stub = ScriptedBackend::new();
        let frames = uniform_sample(video.full_interval(), 8);
        assert!(matches!(
            stub.answer(&video, &frames, &query, &memory),
            Err(Error::ScriptExhausted("answer"))
        ));
        stub.push_answer_error("connection reset");
        assert!(matches!(
            stub.answer(&video, &frames, &query, &memory),
            Err(Error::Transport(_))
        ));
    }
}
