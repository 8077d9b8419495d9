//! Sequential temporal search: propose one interval per step, re-answer, and
//! stop as soon as confidence clears the early-stop threshold.

use crate::backend::VideoLlm;
use crate::domain::{NodeOrigin, NodeStatus, Query, SearchConfig, VideoSource};
use crate::error::Result;
use crate::search::{Ctx, SearchResult, StopReason, TraceEvent};

/// Iterative zoom-in with a single proposed interval per step.
///
/// Starts from the whole timeline; each step asks the model for one promising
/// interval (anywhere on the timeline, conditioned on frames from the current
/// one), answers on it, and either returns early (`confidence > c1`), records
/// keyframe notes (`confidence > c2`), or just moves on. After `k` steps the
/// *latest* verdict is returned; the best-by-value node is recorded in the
/// trace for comparison. A proposal step that yields nothing falls back to
/// the centered half of the current interval so zooming continues. An answer
/// call failing after the root returns the best node seen so far.
pub fn run_sequential_ts(
    video: &VideoSource,
    query: &Query,
    backend: &dyn VideoLlm,
    config: &SearchConfig,
) -> Result<SearchResult> {
    let mut ctx = Ctx::new(video, query, backend, config)?;
    let full = video.full_interval();
    ctx.trace.push(TraceEvent::RootInit {
        node: 0,
        interval: full,
    });
    let frames = ctx.sample(full);
    let verdict = ctx.answer_call(&frames)?;
    let root = ctx.add_node(full, verdict, None, 0, NodeOrigin::Root);
    let confidence = ctx.node(root).verdict.confidence;
    if confidence > config.c1 {
        ctx.trace.push(TraceEvent::EarlyReturn {
            node: root,
            confidence,
        });
        ctx.nodes[root as usize].status = NodeStatus::Terminal;
        return Ok(ctx.finish(root, StopReason::ConfidenceExceededC1));
    }

    let mut current = full;
    let mut latest = root;
    for step in 1..=config.k {
        let prev_frames = ctx.sample(current);
        let proposals = ctx.propose_call(&prev_frames, full, 1);
        let (interval, origin) = match proposals.first() {
            Some(interval) => (*interval, NodeOrigin::Heuristic),
            None => {
                let fallback = current.centered_half();
                ctx.trace.push(TraceEvent::ProposeFallback {
                    parent: latest,
                    interval: fallback,
                });
                (fallback, NodeOrigin::UniformSplit)
            }
        };

        let frames = ctx.sample(interval);
        let verdict = match ctx.answer_call(&frames) {
            Ok(verdict) => verdict,
            Err(err) => {
                ctx.trace.push(TraceEvent::BackendFailure {
                    scope: "answer".into(),
                    detail: err.to_string(),
                });
                let best = ctx.best_all_visited();
                ctx.trace.push(TraceEvent::BudgetExhausted {
                    returned: best,
                    best_by_value: best,
                });
                return Ok(ctx.finish(best, StopReason::BudgetExhausted));
            }
        };
        // Step nodes hang off the root: proposals range over the whole
        // timeline, not just the previous interval.
        let id = ctx.add_node(interval, verdict, Some(root), step, origin);
        latest = id;
        current = interval;

        let confidence = ctx.node(id).verdict.confidence;
        if confidence > config.c1 {
            ctx.trace.push(TraceEvent::EarlyReturn {
                node: id,
                confidence,
            });
            ctx.nodes[id as usize].status = NodeStatus::Terminal;
            return Ok(ctx.finish(id, StopReason::ConfidenceExceededC1));
        } else if confidence > config.c2 {
            let notes = ctx.describe_call(&frames);
            if !notes.is_empty() {
                let count = notes.len();
                let priority = ctx.node(id).value;
                ctx.memory.extend(notes, priority);
                ctx.trace.push(TraceEvent::MemoryWrite {
                    node: id,
                    notes: count,
                });
            }
        }
    }

    let best = ctx.best_all_visited();
    ctx.trace.push(TraceEvent::BudgetExhausted {
        returned: latest,
        best_by_value: best,
    });
    Ok(ctx.finish(latest, StopReason::BudgetExhausted))
}
