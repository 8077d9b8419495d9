//! Manifest-driven evaluation runs and the analyses over them.
//!
//! The harness maps dataset records to search runs (any strategy against any
//! backend), persists one trace row per record, and aggregates accuracy,
//! confidence/correctness means, threshold curves, and scaling curves.
//! Records are isolated: one record failing marks the report incomplete but
//! never corrupts the others.

pub mod analysis;
pub mod manifest;
pub mod report;

pub use analysis::{confidence_analysis, render_analysis_table, ConfidenceAnalysis, LevelStats};
pub use manifest::{load_manifest, parse_manifest, save_manifest, DurationGroup, ManifestRecord};
pub use report::{
    build_report, default_thresholds, load_trace_rows, recompute_report, write_report_csv,
    write_report_json, write_trace_rows, Aggregates, GroupAccuracy, PassesPoint, RecordOutcome,
    RunReport, ThresholdPoint, TraceRow,
};

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backend::{ProceduralBackend, VideoLlm};
use crate::domain::SearchConfig;
use crate::error::{Error, Result};
use crate::oracle::OracleBackend;
use crate::search::{
    run_sequential_ts, run_ts_bfs, run_uniform_sampling, run_uniform_temporal_voting, SearchResult,
};

/// Which search strategy a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "us")]
    Us,
    #[serde(rename = "utv")]
    Utv,
    #[serde(rename = "ts")]
    Ts,
    #[serde(rename = "ts-bfs")]
    TsBfs,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Us => "us",
            Strategy::Utv => "utv",
            Strategy::Ts => "ts",
            Strategy::TsBfs => "ts-bfs",
        }
    }

    pub const ALL: [Strategy; 4] = [Strategy::Us, Strategy::Utv, Strategy::Ts, Strategy::TsBfs];
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "us" => Ok(Strategy::Us),
            "utv" => Ok(Strategy::Utv),
            "ts" => Ok(Strategy::Ts),
            "ts-bfs" | "ts_bfs" => Ok(Strategy::TsBfs),
            other => Err(Error::Config(format!("unknown strategy '{other}'"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Produces the backend for one record.
pub type BackendFactory<'a> = dyn Fn(&ManifestRecord) -> Result<Arc<dyn VideoLlm>> + Sync + 'a;

/// Backend factory for records with embedded synthetic worlds.
pub fn oracle_factory() -> impl Fn(&ManifestRecord) -> Result<Arc<dyn VideoLlm>> + Sync {
    |record: &ManifestRecord| {
        let world = record.world.clone().ok_or_else(|| {
            Error::Config(format!(
                "{}: record has no synthetic world",
                record.video_id
            ))
        })?;
        Ok(Arc::new(OracleBackend::new(world)?) as Arc<dyn VideoLlm>)
    }
}

/// Backend factory serving seeded procedural replies; useful for smoke runs
/// and randomized robustness tests.
pub fn procedural_factory(
    seed: u64,
) -> impl Fn(&ManifestRecord) -> Result<Arc<dyn VideoLlm>> + Sync {
    move |record: &ManifestRecord| {
        let record_seed = record
            .video_id
            .bytes()
            .fold(seed, |h, b| crate::search::splitmix64(h ^ b as u64));
        Ok(Arc::new(ProceduralBackend::new(record_seed)) as Arc<dyn VideoLlm>)
    }
}

/// Factory returning one shared backend for every record.
pub fn shared_backend_factory(
    backend: Arc<dyn VideoLlm>,
) -> impl Fn(&ManifestRecord) -> Result<Arc<dyn VideoLlm>> + Sync {
    move |_record: &ManifestRecord| Ok(backend.clone())
}

/// Options of one manifest run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub strategy: Strategy,
    pub config: SearchConfig,
    /// Concurrent records; 1 runs them sequentially.
    pub workers: usize,
    /// When set, `traces.jsonl`, `report.json`, and `report.csv` are written
    /// here.
    pub out_dir: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(strategy: Strategy, config: SearchConfig) -> Self {
        RunOptions {
            strategy,
            config,
            workers: 1,
            out_dir: None,
        }
    }
}

/// Runs one record with the given strategy.
pub fn execute_record(
    record: &ManifestRecord,
    backend: &dyn VideoLlm,
    strategy: Strategy,
    config: &SearchConfig,
) -> Result<SearchResult> {
    let video = record.video()?;
    let query = record.query()?;
    match strategy {
        Strategy::Us => run_uniform_sampling(&video, &query, backend, config),
        Strategy::Utv => {
            run_uniform_temporal_voting(&video, &query, backend, config, config.utv_intervals)
        }
        Strategy::Ts => run_sequential_ts(&video, &query, backend, config),
        Strategy::TsBfs => run_ts_bfs(&video, &query, backend, config),
    }
}

/// Runs every record of a manifest and builds the report.
///
/// Records run concurrently up to `options.workers`; outcomes keep manifest
/// order regardless of completion order, so reports are deterministic given
/// the manifest, config, and backend.
pub fn run_manifest(
    records: &[ManifestRecord],
    backend_for: &BackendFactory<'_>,
    options: &RunOptions,
) -> Result<(RunReport, Vec<TraceRow>)> {
    if records.is_empty() {
        return Err(Error::Manifest {
            line: 0,
            message: "no records".into(),
        });
    }
    options.config.validate()?;

    let strategy = options.strategy;
    let config = &options.config;
    let rows: Vec<TraceRow> = map_records(options.workers, records.len(), |i| {
        let record = &records[i];
        let started = Instant::now();
        let result = backend_for(record)
            .and_then(|backend| execute_record(record, backend.as_ref(), strategy, config));
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        match result {
            Ok(result) => TraceRow {
                outcome: RecordOutcome {
                    id: record.video_id.clone(),
                    strategy,
                    duration_group: record.duration_group,
                    choice: result.answer.parsed_choice,
                    ground_truth: record.answer,
                    correct: record
                        .answer
                        .map(|gt| result.answer.parsed_choice == Some(gt)),
                    confidence: result.answer.confidence,
                    value: result.value,
                    calls_used: result.calls_used,
                    wall_ms,
                    stop_reason: Some(result.stop_reason),
                    error: None,
                },
                trace: Some(result.trace),
            },
            Err(err) => TraceRow {
                outcome: RecordOutcome {
                    id: record.video_id.clone(),
                    strategy,
                    duration_group: record.duration_group,
                    choice: None,
                    ground_truth: record.answer,
                    correct: None,
                    confidence: 0.0,
                    value: 0.0,
                    calls_used: 0,
                    wall_ms,
                    stop_reason: None,
                    error: Some(err.to_string()),
                },
                trace: None,
            },
        }
    });

    let report = build_report(strategy, rows.iter().map(|r| r.outcome.clone()).collect());
    if let Some(dir) = &options.out_dir {
        std::fs::create_dir_all(dir)?;
        write_trace_rows(&rows, dir.join("traces.jsonl"))?;
        write_report_json(&report, dir.join("report.json"))?;
        write_report_csv(&report, dir.join("report.csv"))?;
    }
    Ok((report, rows))
}

#[cfg(feature = "parallel")]
fn map_records<R: Send>(
    workers: usize,
    count: usize,
    job: impl Fn(usize) -> R + Sync + Send,
) -> Vec<R> {
    use rayon::prelude::*;
    if workers > 1 && count > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("worker pool");
        pool.install(|| (0..count).into_par_iter().map(job).collect())
    } else {
        (0..count).map(job).collect()
    }
}

#[cfg(not(feature = "parallel"))]
fn map_records<R>(_workers: usize, count: usize, job: impl Fn(usize) -> R) -> Vec<R> {
    (0..count).map(job).collect()
}

/// One point of an accuracy-vs-compute curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub strategy: Strategy,
    /// The requested budget knob (k for the searches, pieces for voting,
    /// frames for single-pass).
    pub requested: u32,
    /// Actual backend calls per record, averaged.
    pub mean_calls_used: f64,
    pub accuracy: f64,
    pub evaluated: usize,
}

/// Varies the compute budget along `grid` and reruns the manifest per point.
///
/// The knob depends on the strategy: iteration budget `k` for ts/ts-bfs,
/// piece count for utv, frames per call for us. The x-axis of the resulting
/// curve is the *actual* mean call count, not the nominal knob.
pub fn scaling_experiment(
    records: &[ManifestRecord],
    backend_for: &BackendFactory<'_>,
    strategy: Strategy,
    base_config: &SearchConfig,
    grid: &[u32],
    workers: usize,
) -> Result<Vec<ScalingPoint>> {
    if grid.is_empty() {
        return Err(Error::Config("scaling grid is empty".into()));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &requested in grid {
        if requested < 1 {
            return Err(Error::Config("scaling grid values must be >= 1".into()));
        }
        let mut config = base_config.clone();
        match strategy {
            Strategy::Ts | Strategy::TsBfs => config.k = requested,
            Strategy::Utv => config.utv_intervals = requested,
            Strategy::Us => config.n_f = requested,
        }
        let options = RunOptions {
            strategy,
            config,
            workers,
            out_dir: None,
        };
        let (report, _) = run_manifest(records, backend_for, &options)?;
        let scored: Vec<&RecordOutcome> = report
            .records
            .iter()
            .filter(|r| r.correct.is_some())
            .collect();
        let mean_calls_used = if scored.is_empty() {
            0.0
        } else {
            scored.iter().map(|r| r.calls_used as f64).sum::<f64>() / scored.len() as f64
        };
        points.push(ScalingPoint {
            strategy,
            requested,
            mean_calls_used,
            accuracy: report.aggregates.accuracy,
            evaluated: scored.len(),
        });
    }
    Ok(points)
}

/// Writes scaling points as JSONL.
pub fn write_scaling_points(
    points: &[ScalingPoint],
    path: impl AsRef<std::path::Path>,
) -> Result<()> {
    let mut out = String::new();
    for point in points {
        out.push_str(&serde_json::to_string(point)?);
        out.push('\n');
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{generate_corpus, CorpusSpec};

    #[test]
    fn strategy_parses() {
        assert_eq!("ts-bfs".parse::<Strategy>().unwrap(), Strategy::TsBfs);
        assert_eq!("us".parse::<Strategy>().unwrap(), Strategy::Us);
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn us_run_uses_one_call_per_record() {
        let records = generate_corpus(&CorpusSpec::smoke()).unwrap();
        let options = RunOptions::new(Strategy::Us, SearchConfig::default());
        let (report, rows) = run_manifest(&records, &oracle_factory(), &options).unwrap();
        assert_eq!(report.aggregates.total, records.len());
        assert!(report.records.iter().all(|r| r.calls_used == 1));
        assert!(!report.incomplete);
        assert_eq!(rows.len(), records.len());
    }

    #[test]
    fn empty_manifest_is_rejected() {
        let options = RunOptions::new(Strategy::Us, SearchConfig::default());
        match run_manifest(&[], &oracle_factory(), &options) {
            Err(Error::Manifest { message, .. }) => assert_eq!(message, "no records"),
            other => panic!("expected manifest error, got {other:?}"),
        }
    }

    #[test]
    fn reports_are_deterministic_apart_from_wall_time() {
        let records = generate_corpus(&CorpusSpec::smoke()).unwrap();
        let options = RunOptions::new(Strategy::TsBfs, SearchConfig::default());
        let (a, rows_a) = run_manifest(&records, &oracle_factory(), &options).unwrap();
        let (b, rows_b) = run_manifest(&records, &oracle_factory(), &options).unwrap();
        let strip = |mut r: RunReport| {
            for rec in &mut r.records {
                rec.wall_ms = 0.0;
            }
            r
        };
        assert_eq!(strip(a), strip(b));
        let traces_a: Vec<_> = rows_a.iter().map(|r| &r.trace).collect();
        let traces_b: Vec<_> = rows_b.iter().map(|r| &r.trace).collect();
        assert_eq!(traces_a, traces_b);
    }

    #[test]
    fn run_writes_artifacts_that_round_trip() {
        let records = generate_corpus(&CorpusSpec::smoke()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut options = RunOptions::new(Strategy::Utv, SearchConfig::default());
        options.out_dir = Some(dir.path().to_path_buf());
        let (report, _) = run_manifest(&records, &oracle_factory(), &options).unwrap();
        let rows = load_trace_rows(dir.path().join("traces.jsonl")).unwrap();
        let recomputed = recompute_report(Strategy::Utv, &rows);
        assert_eq!(report, recomputed);
        assert!(dir.path().join("report.csv").exists());
    }

    #[test]
    fn failed_records_do_not_corrupt_others() {
        let mut records = generate_corpus(&CorpusSpec::smoke()).unwrap();
        // Strip the world from one record so the oracle factory fails it.
        records[2].world = None;
        let options = RunOptions::new(Strategy::Us, SearchConfig::default());
        let (report, _) = run_manifest(&records, &oracle_factory(), &options).unwrap();
        assert!(report.incomplete);
        assert!(report.records[2].error.is_some());
        assert_eq!(report.aggregates.evaluated, records.len() - 1);
    }

    #[test]
    fn scaling_single_point_grid() {
        let records = generate_corpus(&CorpusSpec::smoke()).unwrap();
        let points = scaling_experiment(
            &records,
            &oracle_factory(),
            Strategy::Us,
            &SearchConfig::default(),
            &[8],
            1,
        )
        .unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].requested, 8);
        assert_eq!(points[0].mean_calls_used, 1.0);
        assert!(scaling_experiment(
            &records,
            &oracle_factory(),
            Strategy::Us,
            &SearchConfig::default(),
            &[],
            1,
        )
        .is_err());
    }

    #[test]
    fn procedural_backend_smoke_run() {
        let records = generate_corpus(&CorpusSpec::smoke()).unwrap();
        let config = SearchConfig {
            k: 2,
            n: 3,
            ..SearchConfig::default()
        };
        let options = RunOptions::new(Strategy::TsBfs, config);
        let (report, _) = run_manifest(&records, &procedural_factory(5), &options).unwrap();
        assert!(!report.incomplete);
        // Procedural runs are deterministic too.
        let (report2, _) = run_manifest(&records, &procedural_factory(5), &options).unwrap();
        let strip = |mut r: RunReport| {
            for rec in &mut r.records {
                rec.wall_ms = 0.0;
            }
            r
        };
        assert_eq!(strip(report), strip(report2));
    }
}
