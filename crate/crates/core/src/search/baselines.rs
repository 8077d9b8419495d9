//! The two non-iterative baselines: single-pass uniform sampling and uniform
//! temporal voting.

use crate::backend::VideoLlm;
use crate::domain::{NodeId, NodeOrigin, NodeStatus, Query, SearchConfig, VideoSource};
use crate::error::Result;
use crate::sampling::uniform_split;
use crate::search::{Ctx, SearchResult, StopReason, TraceEvent};

/// Uniformly samples `n_f` frames from the whole video and answers in a
/// single pass. Exactly one backend call.
pub fn run_uniform_sampling(
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
    let stop_reason = if confidence > config.c1 {
        ctx.trace.push(TraceEvent::EarlyReturn {
            node: root,
            confidence,
        });
        StopReason::ConfidenceExceededC1
    } else {
        StopReason::BudgetExhausted
    };
    Ok(ctx.finish(root, stop_reason))
}

/// Splits the timeline into `num_intervals` pieces, answers each
/// independently, keeps the verdicts whose confidence exceeds the mean, and
/// majority-votes over their parsed choices.
///
/// Vote ties break toward the choice with the highest single confidence, then
/// toward the earlier piece. When no verdict clears the mean (or none of the
/// kept ones parsed), the highest-confidence verdict overall is returned
/// as-is, which makes the one-piece case identical to uniform sampling.
pub fn run_uniform_temporal_voting(
    video: &VideoSource,
    query: &Query,
    backend: &dyn VideoLlm,
    config: &SearchConfig,
    num_intervals: u32,
) -> Result<SearchResult> {
    let mut ctx = Ctx::new(video, query, backend, config)?;
    let pieces = uniform_split(video.full_interval(), num_intervals.max(1));
    let outcomes = ctx.evaluate_batch(&pieces, false);
    for (piece, outcome) in pieces.iter().zip(outcomes) {
        let verdict = outcome.answer?;
        let id = ctx.add_node(*piece, verdict, None, 0, NodeOrigin::UniformSplit);
        ctx.nodes[id as usize].status = NodeStatus::Terminal;
    }

    let mean_confidence =
        ctx.nodes.iter().map(|n| n.verdict.confidence).sum::<f64>() / ctx.nodes.len() as f64;
    let kept: Vec<NodeId> = ctx
        .nodes
        .iter()
        .filter(|n| n.verdict.confidence > mean_confidence)
        .map(|n| n.id)
        .collect();

    // Per distinct choice among the kept verdicts: vote count, best single
    // confidence, and the earliest piece holding that best confidence.
    let mut tallies: Vec<(char, usize, f64, NodeId)> = Vec::new();
    for &id in &kept {
        let node = ctx.node(id);
        let Some(choice) = node.verdict.parsed_choice else {
            continue;
        };
        match tallies.iter_mut().find(|t| t.0 == choice) {
            Some(t) => {
                t.1 += 1;
                if node.verdict.confidence > t.2 {
                    t.2 = node.verdict.confidence;
                    t.3 = id;
                }
            }
            None => tallies.push((choice, 1, node.verdict.confidence, id)),
        }
    }
    tallies.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then_with(|| b.2.total_cmp(&a.2))
            .then_with(|| a.3.cmp(&b.3))
    });

    let winner_node = match tallies.first() {
        Some(&(_, _, _, node)) => node,
        // Nothing votable: fall back to the highest-confidence verdict,
        // earlier piece first.
        None => {
            let mut best: NodeId = 0;
            for node in &ctx.nodes[1..] {
                if node.verdict.confidence > ctx.nodes[best as usize].verdict.confidence {
                    best = node.id;
                }
            }
            best
        }
    };
    ctx.trace.push(TraceEvent::VoteTally {
        mean_confidence,
        kept,
        winner: ctx.node(winner_node).verdict.parsed_choice,
    });
    Ok(ctx.finish(winner_node, StopReason::BudgetExhausted))
}
