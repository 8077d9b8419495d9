//! Confidence-accuracy analysis over persisted runs.
//!
//! Video-level rows come from single-pass (us) runs: one confidence and one
//! correctness flag per record. Interval-level rows come from the per-piece
//! verdicts persisted in temporal-voting (utv) traces. Both levels report
//! mean confidence for correct vs incorrect predictions and an
//! accuracy-vs-threshold curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::report::{threshold_curve, ThresholdPoint, TraceRow};
use crate::harness::Strategy;
use crate::search::TraceEvent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub rows: usize,
    pub correct: usize,
    pub mean_confidence_correct: Option<f64>,
    pub mean_confidence_incorrect: Option<f64>,
    pub curve: Vec<ThresholdPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceAnalysis {
    /// From single-pass runs; absent when none were supplied.
    pub video_level: Option<LevelStats>,
    /// From temporal-voting per-interval verdicts; absent when none were
    /// supplied.
    pub interval_level: Option<LevelStats>,
}

fn level_stats(points: &[(f64, bool)], thresholds: &[f64]) -> LevelStats {
    let mean = |want: bool| -> Option<f64> {
        let confs: Vec<f64> = points
            .iter()
            .filter(|(_, ok)| *ok == want)
            .map(|(c, _)| *c)
            .collect();
        (!confs.is_empty()).then(|| confs.iter().sum::<f64>() / confs.len() as f64)
    };
    LevelStats {
        rows: points.len(),
        correct: points.iter().filter(|(_, ok)| *ok).count(),
        mean_confidence_correct: mean(true),
        mean_confidence_incorrect: mean(false),
        curve: threshold_curve(points, thresholds),
    }
}

/// Runs the analysis over persisted trace rows.
///
/// `thresholds` defaults to 0.0..=1.0 in steps of 0.05; custom grids must
/// stay within [0, 1].
pub fn confidence_analysis(
    rows: &[TraceRow],
    thresholds: Option<&[f64]>,
) -> Result<ConfidenceAnalysis> {
    let thresholds: Vec<f64> = match thresholds {
        Some(custom) => {
            for &t in custom {
                if !(0.0..=1.0).contains(&t) {
                    return Err(Error::Config(format!(
                        "threshold {t} outside [0, 1]; thresholds are capped at 1.0"
                    )));
                }
            }
            custom.to_vec()
        }
        None => crate::harness::report::default_thresholds(),
    };

    let mut video_points: Vec<(f64, bool)> = Vec::new();
    let mut interval_points: Vec<(f64, bool)> = Vec::new();
    for row in rows {
        if row.outcome.error.is_some() {
            continue;
        }
        let Some(truth) = row.outcome.ground_truth else {
            continue;
        };
        match row.outcome.strategy {
            Strategy::Us => {
                video_points.push((row.outcome.confidence, row.outcome.choice == Some(truth)));
            }
            Strategy::Utv => {
                let Some(trace) = &row.trace else { continue };
                for event in trace.verdicts() {
                    if let TraceEvent::Verdict {
                        confidence, choice, ..
                    } = event
                    {
                        interval_points.push((*confidence, *choice == Some(truth)));
                    }
                }
            }
            _ => {}
        }
    }

    Ok(ConfidenceAnalysis {
        video_level: (!video_points.is_empty()).then(|| level_stats(&video_points, &thresholds)),
        interval_level: (!interval_points.is_empty())
            .then(|| level_stats(&interval_points, &thresholds)),
    })
}

/// Plain-text table of the analysis, one line per threshold bin.
pub fn render_analysis_table(analysis: &ConfidenceAnalysis) -> String {
    let mut out = String::new();
    for (name, stats) in [
        ("video-level", &analysis.video_level),
        ("interval-level", &analysis.interval_level),
    ] {
        let Some(stats) = stats else { continue };
        out.push_str(&format!(
            "{name}: {} rows, mean confidence correct={} incorrect={}\n",
            stats.rows,
            stats
                .mean_confidence_correct
                .map_or("n/a".to_string(), |v| format!("{v:.4}")),
            stats
                .mean_confidence_incorrect
                .map_or("n/a".to_string(), |v| format!("{v:.4}")),
        ));
        out.push_str("  threshold  support  accuracy\n");
        for point in &stats.curve {
            out.push_str(&format!(
                "  {:>9.2}  {:>7}  {}\n",
                point.threshold,
                point.support,
                point
                    .accuracy
                    .map_or("null".to_string(), |a| format!("{a:.4}")),
            ));
        }
    }
    out
}
