//! Run reports: per-record outcomes, aggregates, and trace persistence.
//!
//! Everything round-trips: re-loading persisted trace rows and recomputing
//! the aggregates reproduces the report exactly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::{DurationGroup, Strategy};
use crate::search::{SearchTrace, StopReason};

/// One record's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub id: String,
    pub strategy: Strategy,
    pub duration_group: DurationGroup,
    pub choice: Option<char>,
    pub ground_truth: Option<char>,
    /// `None` when the record has no ground truth or failed.
    pub correct: Option<bool>,
    pub confidence: f64,
    pub value: f64,
    pub calls_used: u32,
    /// Informational only; excluded from determinism comparisons.
    pub wall_ms: f64,
    pub stop_reason: Option<StopReason>,
    /// Present when the record aborted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One persisted line of `traces.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub outcome: RecordOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<SearchTrace>,
}

/// Accuracy of predictions whose confidence clears a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub threshold: f64,
    /// Records with confidence at or above the threshold.
    pub support: usize,
    /// `None` when the bin is empty.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub group: DurationGroup,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Accuracy at one actual-call budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassesPoint {
    pub calls_used: u32,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub total: usize,
    /// Records that completed and carry ground truth.
    pub evaluated: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub per_group: Vec<GroupAccuracy>,
    pub mean_confidence_correct: Option<f64>,
    pub mean_confidence_incorrect: Option<f64>,
    pub threshold_curve: Vec<ThresholdPoint>,
    pub passes_curve: Vec<PassesPoint>,
}

/// Full report of one manifest run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub strategy: Strategy,
    pub incomplete: bool,
    pub aggregates: Aggregates,
    pub records: Vec<RecordOutcome>,
}

/// Default threshold grid: 0.0 to 1.0 in steps of 0.05.
pub fn default_thresholds() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.05).collect()
}

/// Accuracy-vs-threshold curve over `(confidence, correct)` pairs.
pub fn threshold_curve(points: &[(f64, bool)], thresholds: &[f64]) -> Vec<ThresholdPoint> {
    thresholds
        .iter()
        .map(|&threshold| {
            let kept: Vec<&(f64, bool)> = points.iter().filter(|(c, _)| *c >= threshold).collect();
            let support = kept.len();
            let accuracy = (support > 0)
                .then(|| kept.iter().filter(|(_, ok)| *ok).count() as f64 / support as f64);
            ThresholdPoint {
                threshold,
                support,
                accuracy,
            }
        })
        .collect()
}

/// Builds a report from per-record outcomes.
pub fn build_report(strategy: Strategy, records: Vec<RecordOutcome>) -> RunReport {
    let incomplete = records.iter().any(|r| r.error.is_some());
    let scored: Vec<&RecordOutcome> = records.iter().filter(|r| r.correct.is_some()).collect();
    let evaluated = scored.len();
    let correct = scored.iter().filter(|r| r.correct == Some(true)).count();
    let accuracy = if evaluated > 0 {
        correct as f64 / evaluated as f64
    } else {
        0.0
    };

    let mut per_group: Vec<GroupAccuracy> = Vec::new();
    for group in [
        DurationGroup::Short,
        DurationGroup::Medium,
        DurationGroup::Long,
    ] {
        let rows: Vec<&&RecordOutcome> = scored
            .iter()
            .filter(|r| r.duration_group == group)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let correct = rows.iter().filter(|r| r.correct == Some(true)).count();
        per_group.push(GroupAccuracy {
            group,
            total: rows.len(),
            correct,
            accuracy: correct as f64 / rows.len() as f64,
        });
    }

    let mean = |want: bool| -> Option<f64> {
        let confs: Vec<f64> = scored
            .iter()
            .filter(|r| r.correct == Some(want))
            .map(|r| r.confidence)
            .collect();
        (!confs.is_empty()).then(|| confs.iter().sum::<f64>() / confs.len() as f64)
    };

    let pairs: Vec<(f64, bool)> = scored
        .iter()
        .map(|r| (r.confidence, r.correct == Some(true)))
        .collect();

    let mut by_calls: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for r in &scored {
        let entry = by_calls.entry(r.calls_used).or_default();
        entry.0 += 1;
        if r.correct == Some(true) {
            entry.1 += 1;
        }
    }
    let passes_curve = by_calls
        .into_iter()
        .map(|(calls_used, (total, correct))| PassesPoint {
            calls_used,
            total,
            correct,
            accuracy: correct as f64 / total as f64,
        })
        .collect();

    RunReport {
        strategy,
        incomplete,
        aggregates: Aggregates {
            total: records.len(),
            evaluated,
            correct,
            accuracy,
            per_group,
            mean_confidence_correct: mean(true),
            mean_confidence_incorrect: mean(false),
            threshold_curve: threshold_curve(&pairs, &default_thresholds()),
            passes_curve,
        },
        records,
    }
}

/// Writes one trace row per line.
pub fn write_trace_rows(rows: &[TraceRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

pub fn load_trace_rows(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Rebuilds the report from persisted rows; equals the original exactly.
pub fn recompute_report(strategy: Strategy, rows: &[TraceRow]) -> RunReport {
    build_report(strategy, rows.iter().map(|r| r.outcome.clone()).collect())
}

pub fn write_report_json(report: &RunReport, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), serde_json::to_string_pretty(report)?)?;
    Ok(())
}

pub fn write_report_csv(report: &RunReport, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record([
        "id",
        "strategy",
        "duration_group",
        "choice",
        "ground_truth",
        "correct",
        "confidence",
        "value",
        "calls_used",
        "wall_ms",
        "stop_reason",
        "error",
    ])?;
    for r in &report.records {
        writer.write_record([
            r.id.clone(),
            r.strategy.as_str().to_string(),
            r.duration_group.as_str().to_string(),
            r.choice.map(String::from).unwrap_or_default(),
            r.ground_truth.map(String::from).unwrap_or_default(),
            r.correct.map(|c| c.to_string()).unwrap_or_default(),
            format!("{:.6}", r.confidence),
            format!("{:.6}", r.value),
            r.calls_used.to_string(),
            format!("{:.3}", r.wall_ms),
            r.stop_reason
                .map(|s| {
                    serde_json::to_string(&s)
                        .unwrap_or_default()
                        .replace('"', "")
                })
                .unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    writer.flush().map_err(crate::error::Error::Io)?;
    Ok(())
}
