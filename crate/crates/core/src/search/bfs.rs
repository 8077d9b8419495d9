//! Best-first tree search over temporal intervals.
//!
//! Each node is an interval scored by `w_conf * confidence + w_eval *
//! self_eval`. The highest-value frontier node is expanded into up to `n`
//! children drawn from model proposals and uniform splits; children are
//! answered and self-evaluated (concurrently up to `parallel_width`), then
//! merged in child-index order. A child clearing `c1` ends the run
//! immediately; one clearing `c2` contributes keyframe notes to the shared
//! memory. After the budget, the answer comes from the configured final
//! selection set.

use crate::backend::VideoLlm;
use crate::domain::{
    interval_iou, FinalSelection, Interval, NodeOrigin, NodeStatus, Query, SearchConfig,
    VideoSource,
};
use crate::error::Result;
use crate::sampling::{uniform_split, CandidateOrigin};
use crate::search::{derive_rng, Ctx, Frontier, SearchResult, StopReason, TraceEvent};

/// Children this similar to an ancestor interval are not re-expanded.
const VISITED_IOU: f64 = 0.95;

/// Runs the best-first tree search.
pub fn run_ts_bfs(
    video: &VideoSource,
    query: &Query,
    backend: &dyn VideoLlm,
    config: &SearchConfig,
) -> Result<SearchResult> {
    let mut ctx = Ctx::new(video, query, backend, config)?;
    let mut frontier = Frontier::new();

    let full = video.full_interval();
    ctx.trace.push(TraceEvent::RootInit {
        node: 0,
        interval: full,
    });
    let frames = ctx.sample(full);
    let verdict = ctx.answer_call(&frames)?;
    let self_eval = ctx.evaluate_call(&frames, &verdict);
    let verdict = match self_eval {
        Some(score) => verdict.with_self_eval(score),
        None => verdict,
    };
    let root = ctx.add_node(full, verdict, None, 0, NodeOrigin::Root);
    let root_value = ctx.node(root).value;
    frontier.push(root, root_value);
    ctx.trace.push(TraceEvent::Pushed {
        node: root,
        value: root_value,
    });
    let confidence = ctx.node(root).verdict.confidence;
    if confidence > config.c1 {
        ctx.trace.push(TraceEvent::EarlyReturn {
            node: root,
            confidence,
        });
        ctx.nodes[root as usize].status = NodeStatus::Terminal;
        return Ok(ctx.finish(root, StopReason::ConfidenceExceededC1));
    }

    for step in 1..=config.k {
        let Some((popped, pop_value)) = frontier.pop() else {
            break;
        };
        ctx.trace.push(TraceEvent::Pop {
            node: popped,
            value: pop_value,
        });
        ctx.nodes[popped as usize].status = NodeStatus::Expanded;
        let parent_iv = ctx.node(popped).interval;

        let parent_frames = ctx.sample(parent_iv);
        let heuristic = ctx.propose_call(&parent_frames, parent_iv, config.n);
        let uniform = uniform_split(parent_iv, config.n);

        // Candidates nearly identical to an ancestor would re-inspect ground
        // already covered on this path.
        let ancestors = ctx.ancestor_intervals(popped);
        let near_ancestor =
            |iv: &Interval| ancestors.iter().any(|a| interval_iou(a, iv) > VISITED_IOU);
        let heur_kept: Vec<Interval> = heuristic
            .iter()
            .copied()
            .filter(|iv| !near_ancestor(iv))
            .collect();
        let unif_kept: Vec<Interval> = uniform
            .iter()
            .copied()
            .filter(|iv| !near_ancestor(iv))
            .collect();

        let mut rng = derive_rng(
            config.seed,
            &[0x7365_6c65, parent_iv.start(), parent_iv.end(), step as u64],
        );
        let mut selected = crate::sampling::select_candidates(
            &heur_kept,
            &unif_kept,
            config.n,
            parent_iv,
            config.min_interval_frames(),
            config.dedup_iou,
            &mut rng,
        );
        // The empty-pool fallback may resurrect an ancestor-sized piece.
        selected.retain(|c| !near_ancestor(&c.interval));

        ctx.trace.push(TraceEvent::Expand {
            parent: popped,
            heuristic,
            uniform,
            selected: selected.clone(),
        });
        if selected.is_empty() {
            continue;
        }

        let intervals: Vec<Interval> = selected.iter().map(|c| c.interval).collect();
        let outcomes = ctx.evaluate_batch(&intervals, true);

        let child_depth = ctx.node(popped).depth + 1;
        for (candidate, outcome) in selected.iter().zip(outcomes) {
            let verdict = match outcome.answer {
                Ok(verdict) => verdict,
                Err(err) => {
                    ctx.trace.push(TraceEvent::BackendFailure {
                        scope: "answer".into(),
                        detail: err.to_string(),
                    });
                    let best = ctx.best_all_visited();
                    let value = ctx.node(best).value;
                    ctx.trace.push(TraceEvent::FinalSelection {
                        node: best,
                        value,
                        mode: FinalSelection::AllVisited,
                    });
                    return Ok(ctx.finish(best, StopReason::BudgetExhausted));
                }
            };
            if let Some(detail) = outcome.eval_error {
                ctx.trace.push(TraceEvent::BackendDegraded {
                    scope: "evaluate".into(),
                    detail,
                });
            }
            let verdict = match outcome.self_eval {
                Some(score) => verdict.with_self_eval(score),
                None => verdict,
            };
            let origin = match candidate.origin {
                CandidateOrigin::Heuristic => NodeOrigin::Heuristic,
                CandidateOrigin::UniformSplit => NodeOrigin::UniformSplit,
            };
            let id = ctx.add_node(
                candidate.interval,
                verdict,
                Some(popped),
                child_depth,
                origin,
            );
            let value = ctx.node(id).value;
            frontier.push(id, value);
            ctx.trace.push(TraceEvent::Pushed { node: id, value });

            let confidence = ctx.node(id).verdict.confidence;
            if confidence > config.c1 {
                ctx.trace.push(TraceEvent::EarlyReturn {
                    node: id,
                    confidence,
                });
                ctx.nodes[id as usize].status = NodeStatus::Terminal;
                return Ok(ctx.finish(id, StopReason::ConfidenceExceededC1));
            } else if confidence > config.c2 {
                let frames = ctx.sample(candidate.interval);
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
    }

    let chosen = match config.final_selection {
        FinalSelection::AllVisited => ctx.best_all_visited(),
        FinalSelection::FrontierOnly => {
            // Residual frontier in pop order; prefer nodes with a parsed
            // choice, fall back to all visited when the frontier drained.
            let residual = frontier.into_sorted();
            residual
                .iter()
                .find(|(id, _)| ctx.node(*id).verdict.parsed_choice.is_some())
                .or_else(|| residual.first())
                .map(|(id, _)| *id)
                .unwrap_or_else(|| ctx.best_all_visited())
        }
    };
    let value = ctx.node(chosen).value;
    ctx.trace.push(TraceEvent::FinalSelection {
        node: chosen,
        value,
        mode: config.final_selection,
    });
    Ok(ctx.finish(chosen, StopReason::BudgetExhausted))
}
