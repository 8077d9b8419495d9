//! The search strategies and their shared machinery.
//!
//! Four runners share one node arena, trace, and keyframe memory:
//!
//! - [`run_uniform_sampling`]: single-pass inference over the whole timeline.
//! - [`run_uniform_temporal_voting`]: independent inference per uniform piece,
//!   majority vote over the above-mean-confidence verdicts.
//! - [`run_sequential_ts`]: iterative zoom-in, one proposed interval per step.
//! - [`run_ts_bfs`]: best-first tree search over intervals with dual
//!   expansion (model proposals plus uniform splits).
//!
//! # Concurrency
//!
//! The `n` children of one expansion (and the pieces of a voting run) may be
//! evaluated concurrently up to `parallel_width`. The batch is the atomic
//! unit in every mode: all sibling calls are issued, then verdicts are merged
//! in child-index order — pushes, early returns (lowest qualifying index
//! wins), and memory writes all happen in the merge. Traces are therefore
//! identical regardless of width. The search loop itself is sequential.

mod baselines;
mod bfs;
mod frontier;
mod sequential;
mod trace;

pub use baselines::{run_uniform_sampling, run_uniform_temporal_voting};
pub use bfs::run_ts_bfs;
pub use frontier::{Frontier, ScanQueue};
pub use sequential::run_sequential_ts;
pub use trace::{SearchTrace, StopReason, TraceEvent};

use serde::{Deserialize, Serialize};

use crate::backend::VideoLlm;
use crate::domain::{
    node_value, Interval, KeyframeMemory, KeyframeNote, ModelVerdict, NodeId, NodeOrigin,
    NodeStatus, Query, SearchConfig, SearchNode, VideoSource,
};
use crate::error::Result;
use crate::sampling::{self, FrameSample};
pub(crate) use crate::sampling::{derive_rng, splitmix64};

/// Outcome of one search run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// The verdict backing the returned answer.
    pub answer: ModelVerdict,
    pub chosen_interval: Interval,
    pub chosen_node: NodeId,
    /// Combined value of the chosen node.
    pub value: f64,
    pub stop_reason: StopReason,
    /// Total backend calls issued.
    pub calls_used: u32,
    pub trace: SearchTrace,
}

/// Frame selection for one interval under the run configuration.
pub(crate) fn sample_frames(interval: Interval, config: &SearchConfig) -> FrameSample {
    if config.random_frame_sampling {
        let mut rng = derive_rng(
            config.seed,
            &[0x7361_6d70, interval.start(), interval.end()],
        );
        sampling::random_sample(interval, config.n_f, &mut rng)
    } else {
        sampling::uniform_sample(interval, config.n_f)
    }
}

/// Result of evaluating one sibling in a batch.
pub(crate) struct ChildOutcome {
    pub answer: Result<ModelVerdict>,
    pub self_eval: Option<f64>,
    pub eval_error: Option<String>,
}

/// Mutable state threaded through one run.
pub(crate) struct Ctx<'a> {
    pub video: &'a VideoSource,
    pub query: &'a Query,
    pub backend: &'a dyn VideoLlm,
    pub config: &'a SearchConfig,
    pub trace: SearchTrace,
    pub nodes: Vec<SearchNode>,
    pub memory: KeyframeMemory,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Ctx<'a> {
    pub fn new(
        video: &'a VideoSource,
        query: &'a Query,
        backend: &'a dyn VideoLlm,
        config: &'a SearchConfig,
    ) -> Result<Self> {
        config.validate()?;
        query.validate()?;
        let capabilities = backend.capabilities();
        if capabilities.max_images < config.n_f {
            return Err(crate::error::Error::Config(format!(
                "backend accepts at most {} images per call, but n_f is {}",
                capabilities.max_images, config.n_f
            )));
        }
        #[cfg(feature = "parallel")]
        let pool = if config.parallel_width > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.parallel_width)
                    .build()
                    .map_err(|e| {
                        crate::error::Error::Config(format!("cannot build thread pool: {e}"))
                    })?,
            )
        } else {
            None
        };
        Ok(Ctx {
            video,
            query,
            backend,
            config,
            trace: SearchTrace::default(),
            nodes: Vec::new(),
            memory: KeyframeMemory::new(config.memory_cap),
            #[cfg(feature = "parallel")]
            pool,
        })
    }

    pub fn sample(&self, interval: Interval) -> FrameSample {
        sample_frames(interval, self.config)
    }

    /// One counted answer call.
    pub fn answer_call(&mut self, frames: &FrameSample) -> Result<ModelVerdict> {
        self.trace.answer_calls += 1;
        self.backend
            .answer(self.video, frames, self.query, &self.memory)
    }

    /// One counted evaluate call; failures degrade to `None` with a trace
    /// event rather than aborting.
    pub fn evaluate_call(&mut self, frames: &FrameSample, answer: &ModelVerdict) -> Option<f64> {
        self.trace.evaluate_calls += 1;
        match self
            .backend
            .evaluate(self.video, frames, self.query, answer, &self.memory)
        {
            Ok(score) => Some(score),
            Err(err) => {
                self.trace.push(TraceEvent::BackendDegraded {
                    scope: "evaluate".into(),
                    detail: err.to_string(),
                });
                None
            }
        }
    }

    /// One counted propose call; failures degrade to an empty list. Returned
    /// intervals are defensively clamped to `parent`.
    pub fn propose_call(
        &mut self,
        frames: &FrameSample,
        parent: Interval,
        n: u32,
    ) -> Vec<Interval> {
        self.trace.propose_calls += 1;
        match self.backend.propose_intervals(
            self.video,
            frames,
            self.query,
            &self.memory,
            parent,
            n,
        ) {
            Ok(intervals) => intervals
                .into_iter()
                .filter_map(|iv| iv.clamp_to(&parent))
                .collect(),
            Err(err) => {
                self.trace.push(TraceEvent::BackendDegraded {
                    scope: "propose".into(),
                    detail: err.to_string(),
                });
                Vec::new()
            }
        }
    }

    /// One counted describe call; failures degrade to no notes.
    pub fn describe_call(&mut self, frames: &FrameSample) -> Vec<KeyframeNote> {
        self.trace.describe_calls += 1;
        match self
            .backend
            .describe_keyframes(self.video, frames, self.query, &self.memory)
        {
            Ok(notes) => notes,
            Err(err) => {
                self.trace.push(TraceEvent::BackendDegraded {
                    scope: "describe".into(),
                    detail: err.to_string(),
                });
                Vec::new()
            }
        }
    }

    /// Issues answer (+ optional evaluate) calls for a whole sibling batch,
    /// concurrently up to `parallel_width`, returning outcomes in child-index
    /// order. Counters reflect every call issued.
    pub fn evaluate_batch(&mut self, intervals: &[Interval], with_eval: bool) -> Vec<ChildOutcome> {
        let outcomes: Vec<ChildOutcome> = {
            let backend = self.backend;
            let video = self.video;
            let query = self.query;
            let config = self.config;
            let memory = &self.memory;
            let job = move |j: usize| -> ChildOutcome {
                let frames = sample_frames(intervals[j], config);
                let answer = backend.answer(video, &frames, query, memory);
                let (self_eval, eval_error) = match (&answer, with_eval) {
                    (Ok(verdict), true) => {
                        match backend.evaluate(video, &frames, query, verdict, memory) {
                            Ok(score) => (Some(score), None),
                            Err(err) => (None, Some(err.to_string())),
                        }
                    }
                    _ => (None, None),
                };
                ChildOutcome {
                    answer,
                    self_eval,
                    eval_error,
                }
            };
            self.map_indexed(intervals.len(), job)
        };
        self.trace.answer_calls += intervals.len() as u32;
        if with_eval {
            self.trace.evaluate_calls +=
                outcomes.iter().filter(|o| o.answer.is_ok()).count() as u32;
        }
        outcomes
    }

    #[cfg(feature = "parallel")]
    fn map_indexed<R: Send>(&self, count: usize, job: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
        use rayon::prelude::*;
        match &self.pool {
            Some(pool) if count > 1 => {
                pool.install(|| (0..count).into_par_iter().map(job).collect())
            }
            _ => (0..count).map(job).collect(),
        }
    }

    #[cfg(not(feature = "parallel"))]
    fn map_indexed<R>(&self, count: usize, job: impl Fn(usize) -> R) -> Vec<R> {
        (0..count).map(job).collect()
    }

    /// Registers an evaluated node and records its verdict event.
    pub fn add_node(
        &mut self,
        interval: Interval,
        verdict: ModelVerdict,
        parent_id: Option<NodeId>,
        depth: u32,
        origin: NodeOrigin,
    ) -> NodeId {
        let value = node_value(
            verdict.confidence,
            verdict.self_eval,
            self.config.w_conf,
            self.config.w_eval,
        );
        let id = self.nodes.len() as NodeId;
        self.trace.push(TraceEvent::Verdict {
            node: id,
            parent: parent_id,
            interval,
            origin,
            confidence: verdict.confidence,
            self_eval: verdict.self_eval,
            value,
            choice: verdict.parsed_choice,
        });
        self.nodes.push(SearchNode {
            id,
            interval,
            verdict,
            value,
            parent_id,
            depth,
            origin,
            status: NodeStatus::Frontier,
        });
        id
    }

    pub fn node(&self, id: NodeId) -> &SearchNode {
        &self.nodes[id as usize]
    }

    /// Intervals of `id` and all its ancestors up to the root.
    pub fn ancestor_intervals(&self, id: NodeId) -> Vec<Interval> {
        let mut out = Vec::new();
        let mut cursor = Some(id);
        while let Some(c) = cursor {
            let node = self.node(c);
            out.push(node.interval);
            cursor = node.parent_id;
        }
        out
    }

    /// Highest-value node over everything evaluated. Nodes with a parsed
    /// choice always outrank nodes without one; ties keep the earliest id.
    pub fn best_all_visited(&self) -> NodeId {
        debug_assert!(!self.nodes.is_empty());
        let mut best: usize = 0;
        for node in &self.nodes[1..] {
            let candidate = (node.verdict.parsed_choice.is_some(), node.value);
            let incumbent = {
                let b = &self.nodes[best];
                (b.verdict.parsed_choice.is_some(), b.value)
            };
            if candidate.0 != incumbent.0 {
                if candidate.0 {
                    best = node.id as usize;
                }
            } else if candidate.1 > incumbent.1 {
                best = node.id as usize;
            }
        }
        best as NodeId
    }

    /// Finalizes a run on the given node.
    pub fn finish(self, chosen: NodeId, stop_reason: StopReason) -> SearchResult {
        let node = &self.nodes[chosen as usize];
        SearchResult {
            answer: node.verdict.clone(),
            chosen_interval: node.interval,
            chosen_node: chosen,
            value: node.value,
            stop_reason,
            calls_used: self.trace.calls_used(),
            trace: self.trace,
        }
    }
}
