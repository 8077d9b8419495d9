//! Core value types shared by every other module.
//!
//! Everything here is an immutable value object: cheap to clone, safe to send
//! across threads, and validated at construction so downstream code can rely
//! on the invariants instead of re-checking them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of a node inside one search run's arena.
pub type NodeId = u32;

// ---------------------------------------------------------------------------
// Interval
// ---------------------------------------------------------------------------

/// A half-open range of frame indices `[start, end)`.
///
/// Half-open ranges make uniform splits partition their parent exactly and
/// avoid off-by-one handling at split boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawInterval", into = "RawInterval")]
pub struct Interval {
    start: u64,
    end: u64,
}

#[derive(Serialize, Deserialize)]
struct RawInterval {
    start: u64,
    end: u64,
}

impl TryFrom<RawInterval> for Interval {
    type Error = Error;
    fn try_from(raw: RawInterval) -> Result<Self> {
        Interval::new(raw.start, raw.end)
    }
}

impl From<Interval> for RawInterval {
    fn from(iv: Interval) -> Self {
        RawInterval {
            start: iv.start,
            end: iv.end,
        }
    }
}

// Intervals are non-empty by construction, so there is no `is_empty` to pair
// with `len`.
#[allow(clippy::len_without_is_empty)]
impl Interval {
    /// Builds `[start, end)`; fails unless `start < end`.
    pub fn new(start: u64, end: u64) -> Result<Self> {
        if start >= end {
            return Err(Error::InvalidInterval { start, end });
        }
        Ok(Interval { start, end })
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn end(&self) -> u64 {
        self.end
    }

    /// Number of frames covered; always ≥ 1.
    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn contains_index(&self, index: u64) -> bool {
        index >= self.start && index < self.end
    }

    /// Whether `other` lies fully inside `self`.
    pub fn contains(&self, other: &Interval) -> bool {
        other.start >= self.start && other.end <= self.end
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start < end).then_some(Interval { start, end })
    }

    /// Clamps `self` into `bound`, returning `None` when nothing remains.
    pub fn clamp_to(&self, bound: &Interval) -> Option<Interval> {
        self.intersect(bound)
    }

    /// Midpoint expressed as a (possibly fractional) frame position.
    pub fn midpoint_frame(&self) -> f64 {
        (self.start + self.end) as f64 / 2.0
    }

    /// Midpoint expressed in seconds at the given frame rate.
    pub fn midpoint_s(&self, fps: f64) -> f64 {
        self.midpoint_frame() / fps
    }

    /// The centered half of this interval (same midpoint, half the length,
    /// never shorter than one frame).
    pub fn centered_half(&self) -> Interval {
        let len = self.len();
        let keep = (len / 2).max(1);
        let start = self.start + (len - keep) / 2;
        Interval {
            start,
            end: start + keep,
        }
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Intersection-over-union of two intervals under frame-count measure.
///
/// Symmetric, in `[0, 1]`, and `1.0` exactly when the intervals are identical.
pub fn interval_iou(a: &Interval, b: &Interval) -> f64 {
    let inter = a.intersect(b).map_or(0, |iv| iv.len());
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

// ---------------------------------------------------------------------------
// Video and query
// ---------------------------------------------------------------------------

/// A video identified by id, with its frame count and frame rate.
///
/// Frame images themselves are resolved through [`crate::frames::FrameStore`];
/// the search only ever reasons about indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSource {
    pub id: String,
    pub total_frames: u64,
    pub fps: f64,
}

impl VideoSource {
    pub fn new(id: impl Into<String>, total_frames: u64, fps: f64) -> Result<Self> {
        if total_frames < 1 {
            return Err(Error::Config("video must have at least one frame".into()));
        }
        if fps <= 0.0 || !fps.is_finite() {
            return Err(Error::Config(format!("fps must be positive, got {fps}")));
        }
        Ok(VideoSource {
            id: id.into(),
            total_frames,
            fps,
        })
    }

    /// The whole timeline `[0, total_frames)`.
    pub fn full_interval(&self) -> Interval {
        Interval {
            start: 0,
            end: self.total_frames,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.total_frames as f64 / self.fps
    }

    pub fn timestamp_s(&self, index: u64) -> f64 {
        index as f64 / self.fps
    }
}

/// One answer option of a multiple-choice question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryOption {
    pub label: char,
    pub text: String,
}

/// A natural-language question, optionally multiple-choice.
///
/// Option labels are uppercase and consecutive from `A`. An empty option list
/// means a free-form question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub question: String,
    #[serde(default)]
    pub options: Vec<QueryOption>,
    /// Ground-truth label, used only for evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<char>,
}

impl Query {
    pub fn free_form(question: impl Into<String>) -> Self {
        Query {
            question: question.into(),
            options: Vec::new(),
            ground_truth: None,
        }
    }

    /// Builds a multiple-choice query, assigning labels `A`, `B`, ... in order.
    pub fn multiple_choice<S: Into<String>>(
        question: impl Into<String>,
        option_texts: impl IntoIterator<Item = S>,
        ground_truth: Option<char>,
    ) -> Result<Self> {
        let options = option_texts
            .into_iter()
            .enumerate()
            .map(|(i, text)| QueryOption {
                label: (b'A' + i as u8) as char,
                text: text.into(),
            })
            .collect();
        let query = Query {
            question: question.into(),
            options,
            ground_truth,
        };
        query.validate()?;
        Ok(query)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.options.is_empty() {
            if self.options.len() < 2 || self.options.len() > 26 {
                return Err(Error::InvalidQuery(format!(
                    "expected 2..=26 options, got {}",
                    self.options.len()
                )));
            }
            for (i, opt) in self.options.iter().enumerate() {
                let expected = (b'A' + i as u8) as char;
                if opt.label != expected {
                    return Err(Error::InvalidQuery(format!(
                        "option {i} labeled '{}', expected '{expected}'",
                        opt.label
                    )));
                }
            }
        }
        if let Some(gt) = self.ground_truth {
            if !self.options.iter().any(|o| o.label == gt) {
                return Err(Error::InvalidQuery(format!(
                    "ground truth '{gt}' not in options"
                )));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> impl Iterator<Item = char> + '_ {
        self.options.iter().map(|o| o.label)
    }
}

// ---------------------------------------------------------------------------
// Verdicts and confidence
// ---------------------------------------------------------------------------

/// Geometric-mean token probability of a generated reply.
///
/// `exp` of the average log-probability of the generated tokens. Strictly in
/// `(0, 1]` and invariant under permutation of the token list.
pub fn compute_confidence(token_logprobs: &[f64]) -> Result<f64> {
    if token_logprobs.is_empty() {
        return Err(Error::NoTokens);
    }
    let mut sum = 0.0;
    for &lp in token_logprobs {
        if lp > 0.0 || lp.is_nan() {
            return Err(Error::InvalidLogProb(lp));
        }
        sum += lp;
    }
    Ok((sum / token_logprobs.len() as f64).exp())
}

/// Combined node priority: `w_conf * confidence + w_eval * self_eval`.
///
/// A missing self-evaluation contributes 0, which keeps strategies that never
/// self-evaluate on the same scoring path. Weights are validated non-negative
/// at [`SearchConfig`] load.
pub fn node_value(confidence: f64, self_eval: Option<f64>, w_conf: f64, w_eval: f64) -> f64 {
    debug_assert!(w_conf >= 0.0 && w_eval >= 0.0);
    w_conf * confidence + w_eval * self_eval.unwrap_or(0.0)
}

/// One model inference outcome: the generated answer plus the signals the
/// search steers by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVerdict {
    /// Raw generated reply.
    pub answer_text: String,
    /// Option label recovered from the reply, when one could be parsed.
    pub parsed_choice: Option<char>,
    /// Per-token log-probabilities of the generated tokens (each ≤ 0).
    pub token_logprobs: Vec<f64>,
    /// Geometric-mean token probability; equals
    /// [`compute_confidence`]`(token_logprobs)` whenever those are non-empty.
    pub confidence: f64,
    /// Probability the model assigns to "yes" when asked whether its own
    /// answer is correct. Absent for strategies that never self-evaluate.
    pub self_eval: Option<f64>,
}

impl ModelVerdict {
    /// Builds a verdict, deriving `confidence` from the log-probabilities.
    pub fn from_logprobs(
        answer_text: impl Into<String>,
        parsed_choice: Option<char>,
        token_logprobs: Vec<f64>,
    ) -> Result<Self> {
        let confidence = compute_confidence(&token_logprobs)?;
        Ok(ModelVerdict {
            answer_text: answer_text.into(),
            parsed_choice,
            token_logprobs,
            confidence,
            self_eval: None,
        })
    }

    pub fn with_self_eval(mut self, self_eval: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&self_eval));
        self.self_eval = Some(self_eval);
        self
    }
}

// ---------------------------------------------------------------------------
// Search nodes
// ---------------------------------------------------------------------------

/// How a node's interval was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeOrigin {
    Root,
    /// Proposed by the model itself.
    Heuristic,
    /// Produced by uniform partitioning (or a deterministic zoom fallback).
    UniformSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Frontier,
    Expanded,
    Terminal,
}

/// One evaluated interval in a search run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub id: NodeId,
    pub interval: Interval,
    pub verdict: ModelVerdict,
    /// Combined priority; see [`node_value`].
    pub value: f64,
    pub parent_id: Option<NodeId>,
    pub depth: u32,
    pub origin: NodeOrigin,
    pub status: NodeStatus,
}

// ---------------------------------------------------------------------------
// Keyframe memory
// ---------------------------------------------------------------------------

/// A model-written description of what some sampled frames show.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeNote {
    /// Seconds into the video; the midpoint of the source interval.
    pub timestamp_s: f64,
    pub source_interval: Interval,
    pub text: String,
}

#[derive(Debug, Clone)]
struct MemoryEntry {
    note: KeyframeNote,
    /// Value of the node whose inspection produced the note; eviction keeps
    /// the highest-value notes when the cap is exceeded.
    priority: f64,
    seq: u64,
}

/// Global store of keyframe notes shared across a whole search run.
///
/// Notes stay sorted by timestamp so rendering is chronological and
/// deterministic. When the cap is exceeded, the lowest-priority notes are
/// evicted (latest-inserted first among equals).
#[derive(Debug, Clone)]
pub struct KeyframeMemory {
    entries: Vec<MemoryEntry>,
    cap: usize,
    next_seq: u64,
}

impl KeyframeMemory {
    pub fn new(cap: usize) -> Self {
        KeyframeMemory {
            entries: Vec::new(),
            cap,
            next_seq: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn notes(&self) -> impl Iterator<Item = &KeyframeNote> {
        self.entries.iter().map(|e| &e.note)
    }

    /// Inserts a note, re-sorts by timestamp, and evicts down to the cap.
    pub fn insert(&mut self, note: KeyframeNote, priority: f64) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.entries.push(MemoryEntry {
            note,
            priority,
            seq,
        });
        self.entries.sort_by(|a, b| {
            a.note
                .timestamp_s
                .total_cmp(&b.note.timestamp_s)
                .then_with(|| a.seq.cmp(&b.seq))
        });
        while self.entries.len() > self.cap {
            let evict = self
                .entries
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    a.priority
                        .total_cmp(&b.priority)
                        .then_with(|| b.seq.cmp(&a.seq))
                })
                .map(|(i, _)| i)
                .expect("non-empty");
            self.entries.remove(evict);
        }
    }

    pub fn extend(&mut self, notes: impl IntoIterator<Item = KeyframeNote>, priority: f64) {
        for note in notes {
            self.insert(note, priority);
        }
    }

    /// Chronological text rendering, one `[t=<seconds>s] <description>` line
    /// per note. Deterministic given the contents.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&format!(
                "[t={:.1}s] {}\n",
                entry.note.timestamp_s, entry.note.text
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Search configuration
// ---------------------------------------------------------------------------

/// Which set of nodes the final answer is selected from after the budget is
/// exhausted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalSelection {
    /// Highest-value node among everything evaluated (root included). The
    /// default: the best node may already have been popped off the frontier.
    AllVisited,
    /// Highest-value node still sitting in the frontier.
    FrontierOnly,
}

/// All tunables of a search run. Loads from JSON with per-field defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Maximum search iterations.
    pub k: u32,
    /// Candidate expansions per step.
    pub n: u32,
    /// Frames sampled per inference call.
    pub n_f: u32,
    /// Early-stop confidence threshold.
    pub c1: f64,
    /// Keyframe-memory confidence threshold.
    pub c2: f64,
    /// Weight of confidence in the node value.
    pub w_conf: f64,
    /// Weight of self-evaluation in the node value.
    pub w_eval: f64,
    /// Maximum concurrent sibling evaluations (1 = sequential).
    pub parallel_width: usize,
    /// Seed for every stochastic tie-breaker in the run.
    pub seed: u64,
    pub final_selection: FinalSelection,
    /// Shortest interval worth proposing; `None` means "one frame per sampled
    /// slot", i.e. `n_f`.
    pub min_interval_frames: Option<u64>,
    /// Maximum keyframe notes retained.
    pub memory_cap: usize,
    /// Number of pieces the temporal-voting baseline splits the video into.
    pub utv_intervals: u32,
    /// Candidate pairs with IoU above this are deduplicated.
    pub dedup_iou: f64,
    /// Sample frames at seeded-random positions instead of the deterministic
    /// midpoint grid.
    pub random_frame_sampling: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            k: 5,
            n: 6,
            n_f: 8,
            c1: 0.9,
            c2: 0.7,
            w_conf: 1.0,
            w_eval: 1.0,
            parallel_width: 1,
            seed: 0,
            final_selection: FinalSelection::AllVisited,
            min_interval_frames: None,
            memory_cap: 64,
            utv_intervals: 8,
            dedup_iou: 0.9,
            random_frame_sampling: false,
        }
    }
}

impl SearchConfig {
    /// Parses a config from JSON and validates it.
    pub fn from_json(json: &str) -> Result<Self> {
        let config: SearchConfig = serde_json::from_str(json)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.n < 1 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.n_f < 1 {
            return Err(Error::Config("n_f must be at least 1".into()));
        }
        for (name, v) in [("c1", self.c1), ("c2", self.c2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if self.c2 > self.c1 {
            return Err(Error::Config(format!(
                "thresholds must be ordered c2 <= c1, got c2={} > c1={}",
                self.c2, self.c1
            )));
        }
        if self.w_conf < 0.0 || self.w_eval < 0.0 {
            return Err(Error::Config("value weights must be non-negative".into()));
        }
        if self.parallel_width < 1 {
            return Err(Error::Config("parallel_width must be at least 1".into()));
        }
        if self.utv_intervals < 1 {
            return Err(Error::Config("utv_intervals must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.dedup_iou) {
            return Err(Error::Config("dedup_iou must be in [0, 1]".into()));
        }
        if self.memory_cap < 1 {
            return Err(Error::Config("memory_cap must be at least 1".into()));
        }
        Ok(())
    }

    /// Effective minimum candidate length in frames.
    pub fn min_interval_frames(&self) -> u64 {
        self.min_interval_frames.unwrap_or(self.n_f as u64)
    }
}
