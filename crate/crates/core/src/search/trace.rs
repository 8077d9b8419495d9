//! Replayable event log of a search run.
//!
//! The trace fully determines a run's outputs given the same backend replies:
//! every pop, expansion (with candidate provenance), verdict, memory write,
//! and the final selection are recorded in order, along with per-capability
//! backend call counts. Serialization is deterministic, so equal runs yield
//! byte-identical traces.

use serde::{Deserialize, Serialize};

use crate::domain::{FinalSelection, Interval, NodeId, NodeOrigin};
use crate::sampling::Candidate;

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// A verdict's confidence exceeded the early-stop threshold.
    ConfidenceExceededC1,
    /// The iteration budget ran out (or a backend failure cut the run short;
    /// the trace records which).
    BudgetExhausted,
}

/// One event of a search run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    RootInit {
        node: NodeId,
        interval: Interval,
    },
    /// A node was evaluated. For sibling batches these appear in child-index
    /// order regardless of completion order.
    Verdict {
        node: NodeId,
        parent: Option<NodeId>,
        interval: Interval,
        origin: NodeOrigin,
        confidence: f64,
        self_eval: Option<f64>,
        value: f64,
        choice: Option<char>,
    },
    Pop {
        node: NodeId,
        value: f64,
    },
    Expand {
        parent: NodeId,
        heuristic: Vec<Interval>,
        uniform: Vec<Interval>,
        selected: Vec<Candidate>,
    },
    Pushed {
        node: NodeId,
        value: f64,
    },
    MemoryWrite {
        node: NodeId,
        notes: usize,
    },
    /// A proposal step produced nothing usable; the deterministic zoom
    /// fallback supplies `interval` instead.
    ProposeFallback {
        parent: NodeId,
        interval: Interval,
    },
    EarlyReturn {
        node: NodeId,
        confidence: f64,
    },
    /// A recoverable backend problem was absorbed (missing self-eval,
    /// unusable proposal or description).
    BackendDegraded {
        scope: String,
        detail: String,
    },
    /// An answer call failed after retries; the run returns its best node so
    /// far.
    BackendFailure {
        scope: String,
        detail: String,
    },
    /// Sequential-search budget end: the latest verdict is returned, the best
    /// by value is recorded for comparison.
    BudgetExhausted {
        returned: NodeId,
        best_by_value: NodeId,
    },
    /// Tree-search budget end: the node chosen by the configured selection
    /// mode.
    FinalSelection {
        node: NodeId,
        value: f64,
        mode: FinalSelection,
    },
    /// Voting summary of the temporal-voting baseline.
    VoteTally {
        mean_confidence: f64,
        kept: Vec<NodeId>,
        winner: Option<char>,
    },
}

/// Ordered event log plus per-capability call counters.
///
/// Counters reflect calls actually issued. When sibling evaluations run as a
/// batch, the whole batch is counted even if an early return means events are
/// only recorded up to the returning child.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchTrace {
    pub events: Vec<TraceEvent>,
    pub answer_calls: u32,
    pub evaluate_calls: u32,
    pub propose_calls: u32,
    pub describe_calls: u32,
}

impl SearchTrace {
    pub fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    /// Total backend calls of all kinds.
    pub fn calls_used(&self) -> u32 {
        self.answer_calls + self.evaluate_calls + self.propose_calls + self.describe_calls
    }

    /// Verdict events in evaluation order.
    pub fn verdicts(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Verdict { .. }))
    }
}
