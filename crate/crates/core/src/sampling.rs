//! Frame selection within intervals and candidate-pool assembly for
//! expansion.
//!
//! Everything here is a pure function of its arguments (plus an explicit RNG
//! where stated), so outputs are byte-identical across runs and safe to call
//! from concurrent tasks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{interval_iou, Interval};

/// Deterministic RNG derived from a seed and a few distinguishing values, so
/// stochastic tie-breakers depend on *what* is being decided rather than on
/// call order.
pub(crate) fn derive_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    ChaCha8Rng::seed_from_u64(h)
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// A fixed-size selection of frame indices inside one interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSample {
    pub interval: Interval,
    /// Exactly `n_f` indices, nondecreasing, all inside `interval`. Indices
    /// repeat when the interval is shorter than the requested count.
    pub indices: Vec<u64>,
}

impl FrameSample {
    pub fn timestamps_s(&self, fps: f64) -> Vec<f64> {
        self.indices.iter().map(|&i| i as f64 / fps).collect()
    }
}

/// Samples `n_f` frames on the midpoint grid of `interval`.
///
/// Index `i` is `start + floor((i + 0.5) * len / n_f)`. The midpoint rule
/// keeps sibling splits from re-sampling their shared boundary frames, so
/// siblings see disjoint evidence.
pub fn uniform_sample(interval: Interval, n_f: u32) -> FrameSample {
    debug_assert!(n_f >= 1);
    let len = interval.len() as u128;
    let indices = (0..n_f as u128)
        .map(|i| interval.start() + ((2 * i + 1) * len / (2 * n_f as u128)) as u64)
        .collect();
    FrameSample { interval, indices }
}

/// Samples `n_f` frames at seeded-random positions (sorted).
pub fn random_sample(interval: Interval, n_f: u32, rng: &mut impl Rng) -> FrameSample {
    let mut indices: Vec<u64> = (0..n_f)
        .map(|_| rng.random_range(interval.start()..interval.end()))
        .collect();
    indices.sort_unstable();
    FrameSample { interval, indices }
}

/// Splits `interval` into up to `n` contiguous pieces that partition it.
///
/// Boundary `j` sits at `start + round(j * len / n)`; degenerate pieces are
/// dropped, so fewer than `n` pieces come back when `len < n`.
pub fn uniform_split(interval: Interval, n: u32) -> Vec<Interval> {
    debug_assert!(n >= 1);
    let len = interval.len() as u128;
    let n = n as u128;
    let boundary = |j: u128| interval.start() + ((2 * j * len + n) / (2 * n)) as u64;
    let mut pieces = Vec::new();
    let mut prev = interval.start();
    for j in 1..=n {
        let next = boundary(j);
        if next > prev {
            pieces.push(Interval::new(prev, next).expect("non-degenerate piece"));
            prev = next;
        }
    }
    debug_assert_eq!(prev, interval.end());
    pieces
}

/// Where a candidate interval came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateOrigin {
    Heuristic,
    UniformSplit,
}

/// A candidate child interval together with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub interval: Interval,
    pub origin: CandidateOrigin,
}

/// Assembles at most `n` expansion candidates from model proposals and
/// uniform splits.
///
/// Pipeline: clamp everything to `parent`, drop pieces shorter than
/// `min_len`, deduplicate pairs with IoU above `dedup_iou` (the
/// earlier-listed candidate wins, heuristics listed first), then fill up to
/// `n` slots with heuristics taking priority. When either side still
/// overflows its remaining slots, a seeded sample without replacement picks
/// which survive, preserving list order. An empty pool after filtering falls
/// back to `uniform_split(parent, n)`.
#[allow(clippy::too_many_arguments)]
pub fn select_candidates(
    heuristic: &[Interval],
    uniform: &[Interval],
    n: u32,
    parent: Interval,
    min_len: u64,
    dedup_iou: f64,
    rng: &mut impl Rng,
) -> Vec<Candidate> {
    let n = n as usize;
    let clamp_filter = |list: &[Interval], origin: CandidateOrigin| -> Vec<Candidate> {
        list.iter()
            .filter_map(|iv| iv.clamp_to(&parent))
            .filter(|iv| iv.len() >= min_len.max(1))
            .map(|interval| Candidate { interval, origin })
            .collect()
    };

    let mut pool = clamp_filter(heuristic, CandidateOrigin::Heuristic);
    pool.extend(clamp_filter(uniform, CandidateOrigin::UniformSplit));

    let mut deduped: Vec<Candidate> = Vec::new();
    for cand in pool {
        if deduped
            .iter()
            .all(|kept| interval_iou(&kept.interval, &cand.interval) <= dedup_iou)
        {
            deduped.push(cand);
        }
    }

    if deduped.is_empty() {
        return uniform_split(parent, n as u32)
            .into_iter()
            .map(|interval| Candidate {
                interval,
                origin: CandidateOrigin::UniformSplit,
            })
            .collect();
    }

    let (heur, unif): (Vec<Candidate>, Vec<Candidate>) = deduped
        .into_iter()
        .partition(|c| c.origin == CandidateOrigin::Heuristic);

    let mut selected = take_up_to(heur, n, rng);
    let remaining = n - selected.len();
    selected.extend(take_up_to(unif, remaining, rng));
    selected
}

/// Keeps at most `slots` candidates; a seeded draw without replacement
/// decides which, and survivors keep their original relative order.
fn take_up_to(candidates: Vec<Candidate>, slots: usize, rng: &mut impl Rng) -> Vec<Candidate> {
    if candidates.len() <= slots {
        return candidates;
    }
    if slots == 0 {
        return Vec::new();
    }
    let mut picks: Vec<usize> = (0..candidates.len()).collect();
    picks.shuffle(rng);
    picks.truncate(slots);
    picks.sort_unstable();
    picks.into_iter().map(|i| candidates[i]).collect()
}
