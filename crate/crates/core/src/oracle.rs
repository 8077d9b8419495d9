//! A deterministic simulated video-language model over synthetic videos with
//! a planted relevant segment.
//!
//! The simulated model's confidence rises as sampled frames cover the planted
//! target and as the inspected interval shrinks toward a perceivable length:
//! `signal = coverage * zoom`. Its answer is correct exactly when the noised
//! confidence clears 0.5, so confidence and correctness stay coupled by
//! construction and a search that chases confidence is chasing accuracy.
//! Every output is a pure function of `(world, inputs, seed)` — noise is
//! seeded by the sampled frame indices, not call order — which makes runs
//! replayable and safe under concurrent sibling evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendCapabilities, VideoLlm};
use crate::domain::{Interval, KeyframeMemory, KeyframeNote, ModelVerdict, Query, VideoSource};
use crate::error::{Error, Result};
use crate::harness::{DurationGroup, ManifestRecord};
use crate::sampling::FrameSample;

/// Confidence never clamps all the way to zero so synthesized token logs stay
/// finite.
const MIN_CONFIDENCE: f64 = 1e-9;
/// Hint proposals extend the target by at most this fraction of its length on
/// each side, so a hinted proposal always keeps IoU > 0.5 with the target.
const HINT_JITTER: f64 = 0.5;
/// Token count synthesized per verdict; equal logs make the geometric mean
/// reproduce the intended confidence exactly.
const SYNTH_TOKENS: usize = 4;

/// A synthetic video world with one planted answer-bearing segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub total_frames: u64,
    pub fps: f64,
    /// The planted relevant segment.
    pub target: Interval,
    /// The answer-bearing description revealed by keyframe inspection.
    pub fact: String,
    pub correct_choice: char,
    /// Interval length (frames) at which sampled frames fully resolve the
    /// content; longer intervals are perceived proportionally more coarsely.
    pub resolution_frames: u64,
    /// Confidence when nothing relevant is visible.
    pub conf_floor: f64,
    /// Confidence when the target is fully resolved.
    pub conf_ceil: f64,
    /// Standard deviation of the seeded gaussian confidence noise.
    pub noise_sigma: f64,
    /// Probability that a proposal is a genuine hint at the target rather
    /// than a random sub-interval.
    pub p_hint: f64,
    pub seed: u64,
}

impl SyntheticWorld {
    pub fn validate(&self) -> Result<()> {
        if self.target.end() > self.total_frames {
            return Err(Error::World(format!(
                "target {} extends past total_frames {}",
                self.target, self.total_frames
            )));
        }
        if self.fps <= 0.0 || self.fps.is_nan() {
            return Err(Error::World("fps must be positive".into()));
        }
        if self.resolution_frames < 1 {
            return Err(Error::World("resolution_frames must be at least 1".into()));
        }
        // Correctness thresholds on confidence at 0.5, so the floor must sit
        // below it and the ceiling above it for the world to be meaningful.
        if !(0.0 < self.conf_floor && self.conf_floor < 0.5) {
            return Err(Error::World(format!(
                "conf_floor must be in (0, 0.5), got {}",
                self.conf_floor
            )));
        }
        if !(0.5 < self.conf_ceil && self.conf_ceil <= 1.0) {
            return Err(Error::World(format!(
                "conf_ceil must be in (0.5, 1], got {}",
                self.conf_ceil
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::World("noise_sigma must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.p_hint) {
            return Err(Error::World("p_hint must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn video(&self, id: impl Into<String>) -> VideoSource {
        VideoSource {
            id: id.into(),
            total_frames: self.total_frames,
            fps: self.fps,
        }
    }

    /// Fraction of sampled frames (with repeats) inside the target.
    pub fn coverage(&self, frames: &FrameSample) -> f64 {
        let inside = frames
            .indices
            .iter()
            .filter(|&&i| self.target.contains_index(i))
            .count();
        inside as f64 / frames.indices.len() as f64
    }

    /// How finely the interval is perceived: 1 at or below the resolution
    /// length, shrinking proportionally above it.
    pub fn zoom(&self, interval: Interval) -> f64 {
        (self.resolution_frames as f64 / interval.len() as f64).min(1.0)
    }

    pub fn signal(&self, frames: &FrameSample) -> f64 {
        self.coverage(frames) * self.zoom(frames.interval)
    }

    /// Noised confidence for a frame sample. Deterministic: the gaussian is
    /// seeded by the sampled indices.
    pub fn confidence(&self, frames: &FrameSample) -> f64 {
        let base = self.conf_floor + (self.conf_ceil - self.conf_floor) * self.signal(frames);
        let noised = if self.noise_sigma > 0.0 {
            let mut rng = self.rng_for(0x6e6f697365, &frames.indices);
            base + self.noise_sigma * gaussian(&mut rng)
        } else {
            base
        };
        noised.clamp(MIN_CONFIDENCE, 1.0)
    }

    fn rng_for(&self, stream: u64, parts: &[u64]) -> ChaCha8Rng {
        crate::sampling::derive_rng(self.seed ^ stream, parts)
    }
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Backend simulated from a [`SyntheticWorld`].
#[derive(Debug, Clone)]
pub struct OracleBackend {
    world: SyntheticWorld,
}

impl OracleBackend {
    pub fn new(world: SyntheticWorld) -> Result<Self> {
        world.validate()?;
        Ok(OracleBackend { world })
    }

    pub fn world(&self) -> &SyntheticWorld {
        &self.world
    }

    fn wrong_choice(&self, query: &Query, rng: &mut impl Rng) -> Option<char> {
        let wrong: Vec<char> = query
            .labels()
            .filter(|&l| l != self.world.correct_choice)
            .collect();
        if wrong.is_empty() {
            return None;
        }
        Some(wrong[rng.random_range(0..wrong.len())])
    }
}

impl VideoLlm for OracleBackend {
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
        let world = &self.world;
        let confidence = world.confidence(frames);
        let correct = confidence > 0.5;
        let choice = if correct {
            Some(world.correct_choice)
        } else {
            let mut rng = self.world.rng_for(0x63686f696365, &frames.indices);
            self.wrong_choice(query, &mut rng)
        };
        let answer_text = match choice {
            Some(label) => match query.options.iter().find(|o| o.label == label) {
                Some(opt) => format!("{}. {}", label, opt.text),
                None => label.to_string(),
            },
            None if correct => world.fact.clone(),
            None => "nothing notable".to_string(),
        };
        let parsed_choice = choice.filter(|l| query.labels().any(|q| q == *l));
        ModelVerdict::from_logprobs(
            answer_text,
            parsed_choice,
            vec![confidence.ln(); SYNTH_TOKENS],
        )
    }

    fn evaluate(
        &self,
        _video: &VideoSource,
        frames: &FrameSample,
        _query: &Query,
        _answer: &ModelVerdict,
        _memory: &KeyframeMemory,
    ) -> Result<f64> {
        // Consistent with the answer confidence (same noise seed), so the
        // combined node value preserves the confidence ordering.
        Ok(self.world.confidence(frames))
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
        let world = &self.world;
        // Seeded by the conditioning frames as well as the parent, so
        // repeated proposals over the same bounds still differ once the
        // inspected frames differ.
        let mut seed_parts = vec![parent.start(), parent.end()];
        seed_parts.extend_from_slice(&frames.indices);
        let mut proposals = Vec::with_capacity(n as usize);
        for i in 0..n as u64 {
            seed_parts.push(i);
            let mut rng = world.rng_for(0x70726f70, &seed_parts);
            seed_parts.pop();
            let hinted = rng.random::<f64>() < world.p_hint;
            let visible_target = world.target.clamp_to(&parent);
            let proposal = match (hinted, visible_target) {
                (true, Some(t)) => {
                    let len = t.len() as f64;
                    let before = (rng.random::<f64>() * HINT_JITTER * len) as u64;
                    let after = (rng.random::<f64>() * HINT_JITTER * len) as u64;
                    let start = t.start().saturating_sub(before);
                    let end = t.end().saturating_add(after).max(start + 1);
                    Interval::new(start, end)
                        .ok()
                        .and_then(|iv| iv.clamp_to(&parent))
                        .unwrap_or(t)
                }
                _ => {
                    let len = parent.len();
                    let a = rng.random_range(0..len);
                    let b = rng.random_range(0..len);
                    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                    Interval::new(parent.start() + lo, parent.start() + hi + 1).expect("lo <= hi")
                }
            };
            proposals.push(proposal);
        }
        Ok(proposals)
    }

    fn describe_keyframes(
        &self,
        video: &VideoSource,
        frames: &FrameSample,
        _query: &Query,
        _memory: &KeyframeMemory,
    ) -> Result<Vec<KeyframeNote>> {
        if self.world.coverage(frames) > 0.5 {
            Ok(vec![KeyframeNote {
                timestamp_s: frames.interval.midpoint_s(video.fps),
                source_interval: frames.interval,
                text: self.world.fact.clone(),
            }])
        } else {
            Ok(Vec::new())
        }
    }
}

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

/// Specification for one duration group of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusGroup {
    pub group: DurationGroup,
    pub count: usize,
    /// Video duration range in seconds, inclusive-exclusive.
    pub duration_s: (f64, f64),
    /// Target length as a fraction of the duration, inclusive-exclusive.
    pub target_fraction: (f64, f64),
}

/// Specification for a whole synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub fps: f64,
    pub options_per_question: usize,
    pub resolution_frames: u64,
    pub conf_floor: f64,
    pub conf_ceil: f64,
    pub noise_sigma: f64,
    pub p_hint: f64,
    pub groups: Vec<CorpusGroup>,
}

impl CorpusSpec {
    /// The fixed corpus the campaign checks run against: 200 long videos
    /// whose target covers at most 2% of the timeline. Hints are rare enough
    /// that finding the target usually takes several zoom-in steps.
    pub fn canonical() -> Self {
        CorpusSpec {
            seed: 7,
            fps: 1.0,
            options_per_question: 4,
            resolution_frames: 240,
            conf_floor: 0.1,
            conf_ceil: 0.95,
            noise_sigma: 0.25,
            p_hint: 0.15,
            groups: vec![CorpusGroup {
                group: DurationGroup::Long,
                count: 200,
                duration_s: (1800.0, 3600.0),
                target_fraction: (0.005, 0.02),
            }],
        }
    }

    /// A twelve-record corpus across all duration groups, handy for smoke
    /// runs and examples.
    pub fn smoke() -> Self {
        CorpusSpec {
            seed: 11,
            fps: 1.0,
            options_per_question: 4,
            resolution_frames: 120,
            conf_floor: 0.1,
            conf_ceil: 0.95,
            noise_sigma: 0.1,
            p_hint: 0.6,
            groups: vec![
                CorpusGroup {
                    group: DurationGroup::Short,
                    count: 4,
                    duration_s: (60.0, 600.0),
                    target_fraction: (0.02, 0.1),
                },
                CorpusGroup {
                    group: DurationGroup::Medium,
                    count: 4,
                    duration_s: (600.0, 1800.0),
                    target_fraction: (0.01, 0.05),
                },
                CorpusGroup {
                    group: DurationGroup::Long,
                    count: 4,
                    duration_s: (1800.0, 3600.0),
                    target_fraction: (0.005, 0.02),
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() || self.groups.iter().all(|g| g.count == 0) {
            return Err(Error::World("corpus spec produces no records".into()));
        }
        if !(2..=26).contains(&self.options_per_question) {
            return Err(Error::World(
                "options_per_question must be in 2..=26".into(),
            ));
        }
        for g in &self.groups {
            if g.duration_s.0 <= 0.0 || g.duration_s.1 < g.duration_s.0 {
                return Err(Error::World("bad duration range".into()));
            }
            if g.target_fraction.0 <= 0.0
                || g.target_fraction.1 < g.target_fraction.0
                || g.target_fraction.1 > 1.0
            {
                return Err(Error::World("bad target fraction range".into()));
            }
        }
        Ok(())
    }
}

const COLORS: [&str; 8] = [
    "red", "blue", "green", "yellow", "purple", "orange", "black", "white",
];
const OBJECTS: [&str; 8] = [
    "backpack", "umbrella", "bicycle", "lantern", "kite", "scarf", "guitar", "balloon",
];

/// Generates a deterministic corpus of manifest records with embedded
/// synthetic worlds.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<ManifestRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::new();
    for group in &spec.groups {
        for j in 0..group.count {
            let duration_s = sample_range(&mut rng, group.duration_s.0, group.duration_s.1);
            let total_frames = ((duration_s * spec.fps).round() as u64).max(8);
            let fraction = sample_range(&mut rng, group.target_fraction.0, group.target_fraction.1);
            let target_len =
                ((total_frames as f64 * fraction).round() as u64).clamp(2, total_frames);
            let target_start = rng.random_range(0..=total_frames - target_len);
            let target =
                Interval::new(target_start, target_start + target_len).expect("target_len >= 1");

            let option_texts = distinct_option_texts(&mut rng, spec.options_per_question);
            let correct_idx = rng.random_range(0..option_texts.len());
            let correct_choice = (b'A' + correct_idx as u8) as char;
            let fact = format!(
                "around {:.0}s: {}",
                target.midpoint_s(spec.fps),
                option_texts[correct_idx]
            );

            let world = SyntheticWorld {
                total_frames,
                fps: spec.fps,
                target,
                fact,
                correct_choice,
                resolution_frames: spec.resolution_frames,
                conf_floor: spec.conf_floor,
                conf_ceil: spec.conf_ceil,
                noise_sigma: spec.noise_sigma,
                p_hint: spec.p_hint,
                seed: rng.random(),
            };
            world.validate()?;

            records.push(ManifestRecord {
                video_id: format!("{}-{j:04}", group.group.as_str()),
                frames_root: None,
                world: Some(world),
                total_frames,
                fps: spec.fps,
                question: "Which object appears briefly in this video?".to_string(),
                options: option_texts,
                answer: Some(correct_choice),
                duration_group: group.group,
            });
        }
    }
    Ok(records)
}

fn sample_range(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    lo + rng.random::<f64>() * (hi - lo)
}

fn distinct_option_texts(rng: &mut impl Rng, count: usize) -> Vec<String> {
    let mut picked: Vec<usize> = Vec::with_capacity(count);
    while picked.len() < count {
        let combo = rng.random_range(0..COLORS.len() * OBJECTS.len());
        if !picked.contains(&combo) {
            picked.push(combo);
        }
    }
    picked
        .into_iter()
        .map(|c| {
            format!(
                "a {} {}",
                COLORS[c / OBJECTS.len()],
                OBJECTS[c % OBJECTS.len()]
            )
        })
        .collect()
}
