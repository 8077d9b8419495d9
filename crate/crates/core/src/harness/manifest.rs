//! JSONL dataset manifests: one record per line, each binding a video (real
//! frames directory or embedded synthetic world) to a multiple-choice
//! question.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{Query, VideoSource};
use crate::error::{Error, Result};
use crate::oracle::SyntheticWorld;

/// Coarse video-length bucket used for per-duration accuracy breakdowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationGroup {
    Short,
    Medium,
    Long,
}

impl DurationGroup {
    pub fn as_str(&self) -> &'static str {
        match self {
            DurationGroup::Short => "short",
            DurationGroup::Medium => "medium",
            DurationGroup::Long => "long",
        }
    }
}

/// One evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub video_id: String,
    /// Root of a pre-extracted frame directory for real-backend runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames_root: Option<PathBuf>,
    /// Embedded synthetic world for oracle runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<SyntheticWorld>,
    pub total_frames: u64,
    pub fps: f64,
    pub question: String,
    #[serde(default)]
    pub options: Vec<String>,
    /// Ground-truth option label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<char>,
    pub duration_group: DurationGroup,
}

impl ManifestRecord {
    pub fn validate(&self) -> Result<()> {
        if self.total_frames < 1 {
            return Err(Error::Config(format!(
                "{}: total_frames must be >= 1",
                self.video_id
            )));
        }
        if self.fps <= 0.0 || self.fps.is_nan() {
            return Err(Error::Config(format!(
                "{}: fps must be positive",
                self.video_id
            )));
        }
        if let Some(answer) = self.answer {
            let max = (b'A' + self.options.len().max(1) as u8 - 1) as char;
            if self.options.is_empty() || answer < 'A' || answer > max {
                return Err(Error::Config(format!(
                    "{}: answer '{answer}' outside the option labels",
                    self.video_id
                )));
            }
        }
        if let Some(world) = &self.world {
            world.validate()?;
            if world.total_frames != self.total_frames {
                return Err(Error::Config(format!(
                    "{}: world frame count {} disagrees with record {}",
                    self.video_id, world.total_frames, self.total_frames
                )));
            }
        }
        Ok(())
    }

    pub fn video(&self) -> Result<VideoSource> {
        VideoSource::new(self.video_id.clone(), self.total_frames, self.fps)
    }

    pub fn query(&self) -> Result<Query> {
        if self.options.is_empty() {
            Ok(Query::free_form(self.question.clone()))
        } else {
            Query::multiple_choice(self.question.clone(), self.options.clone(), self.answer)
        }
    }
}

/// Loads a JSONL manifest, reporting the offending line on parse failures.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_manifest(&text)
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(line).map_err(|e| Error::Manifest {
            line: i + 1,
            message: e.to_string(),
        })?;
        record.validate().map_err(|e| Error::Manifest {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::Manifest {
            line: 0,
            message: "no records".into(),
        });
    }
    Ok(records)
}

/// Writes records as JSONL.
pub fn save_manifest(records: &[ManifestRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record_line() -> String {
        r#"{"video_id":"vid-1","total_frames":600,"fps":1.0,"question":"q","options":["a","b"],"answer":"B","duration_group":"short"}"#.to_string()
    }

    #[test]
    fn parses_minimal_record() {
        let records = parse_manifest(&record_line()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].answer, Some('B'));
        let q = records[0].query().unwrap();
        assert_eq!(q.options.len(), 2);
    }

    #[test]
    fn reports_line_numbers() {
        let text = format!("{}\nnot json\n", record_line());
        match parse_manifest(&text) {
            Err(Error::Manifest { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected manifest error, got {other:?}"),
        }
    }

    #[test]
    fn empty_manifest_is_an_error() {
        match parse_manifest("\n\n") {
            Err(Error::Manifest { message, .. }) => assert_eq!(message, "no records"),
            other => panic!("expected manifest error, got {other:?}"),
        }
    }

    #[test]
    fn answer_must_match_an_option_label() {
        let bad = r#"{"video_id":"v","total_frames":10,"fps":1.0,"question":"q","options":["a","b"],"answer":"C","duration_group":"short"}"#;
        assert!(parse_manifest(bad).is_err());
    }

    #[test]
    fn manifest_round_trips() {
        let records = parse_manifest(&record_line()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        save_manifest(&records, &path).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), records);
    }
}
