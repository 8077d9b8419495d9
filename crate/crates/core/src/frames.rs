//! Frame sourcing for real backends: resolve frame indices to wire-ready
//! images.
//!
//! The primary path is a directory of pre-extracted frames
//! (`<root>/<video_id>/frame_%06d.jpg` plus `meta.json`), which keeps the
//! crate free of video-codec dependencies. An external-command hook lets
//! users plug any decoder; synthetic stores serve a placeholder without
//! touching disk.

use std::collections::HashMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use image::imageops::FilterType;
use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::domain::VideoSource;
use crate::error::{Error, Result};

/// JPEG quality for re-encoded frames.
const JPEG_QUALITY: u8 = 85;
/// Frames are downscaled so their long edge never exceeds this, bounding the
/// request size at eight images per call.
const MAX_LONG_EDGE: u32 = 768;

/// Where frames come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrameStoreKind {
    /// Pre-extracted `frame_%06d.jpg` files under `<root>/<video_id>/`.
    Directory { root: PathBuf },
    /// Command template producing JPEG bytes on stdout; `{video}` and
    /// `{index}` are substituted, invoked once per missing index.
    ExternalCommand { template: String },
    /// In-memory placeholder frames; never touches disk.
    Synthetic,
}

/// A frame encoded for the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedFrame {
    pub index: u64,
    /// Base64 of the JPEG bytes.
    pub jpeg_base64: String,
}

impl EncodedFrame {
    pub fn timestamp_s(&self, fps: f64) -> f64 {
        self.index as f64 / fps
    }
}

struct CacheEntry {
    frame: EncodedFrame,
    bytes: usize,
    stamp: u64,
}

#[derive(Default)]
struct CacheState {
    entries: HashMap<(String, u64), CacheEntry>,
    total_bytes: usize,
    clock: u64,
}

/// Thread-safe frame resolver with an LRU byte-budget cache.
pub struct FrameStore {
    kind: FrameStoreKind,
    cache_budget: usize,
    cache: Mutex<CacheState>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl FrameStore {
    pub fn new(kind: FrameStoreKind, cache_budget: usize) -> Self {
        FrameStore {
            kind,
            cache_budget,
            cache: Mutex::new(CacheState::default()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn synthetic() -> Self {
        FrameStore::new(FrameStoreKind::Synthetic, 16 << 20)
    }

    pub fn cache_hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn cache_misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// Resolves frame indices to encoded images. Idempotent: the cache never
    /// changes returned bytes.
    pub fn resolve(&self, video: &VideoSource, indices: &[u64]) -> Result<Vec<EncodedFrame>> {
        let mut out = Vec::with_capacity(indices.len());
        for &index in indices {
            if index >= video.total_frames {
                return Err(Error::Frame {
                    index,
                    message: format!("index beyond total_frames {}", video.total_frames),
                });
            }
            out.push(self.resolve_one(video, index)?);
        }
        Ok(out)
    }

    fn resolve_one(&self, video: &VideoSource, index: u64) -> Result<EncodedFrame> {
        let key = (video.id.clone(), index);
        // Decoding happens under the lock, which also coalesces duplicate
        // in-flight resolves of the same index.
        let mut cache = self.cache.lock().unwrap();
        cache.clock += 1;
        let clock = cache.clock;
        if let Some(entry) = cache.entries.get_mut(&key) {
            entry.stamp = clock;
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(entry.frame.clone());
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let jpeg = self.fetch_jpeg(video, index)?;
        let frame = EncodedFrame {
            index,
            jpeg_base64: BASE64.encode(&jpeg),
        };
        let bytes = frame.jpeg_base64.len();
        cache.entries.insert(
            key,
            CacheEntry {
                frame: frame.clone(),
                bytes,
                stamp: clock,
            },
        );
        cache.total_bytes += bytes;
        while cache.total_bytes > self.cache_budget && cache.entries.len() > 1 {
            let oldest = cache
                .entries
                .iter()
                .min_by_key(|(_, e)| e.stamp)
                .map(|(k, _)| k.clone())
                .expect("non-empty");
            if let Some(evicted) = cache.entries.remove(&oldest) {
                cache.total_bytes -= evicted.bytes;
            }
        }
        Ok(frame)
    }

    fn fetch_jpeg(&self, video: &VideoSource, index: u64) -> Result<Vec<u8>> {
        match &self.kind {
            FrameStoreKind::Directory { root } => {
                let path = frame_path(root, &video.id, index);
                let raw = std::fs::read(&path).map_err(|e| Error::Frame {
                    index,
                    message: format!("cannot read {}: {e}", path.display()),
                })?;
                reencode(&raw, index)
            }
            FrameStoreKind::ExternalCommand { template } => {
                let raw = run_frame_command(template, &video.id, index)?;
                reencode(&raw, index)
            }
            FrameStoreKind::Synthetic => Ok(placeholder_jpeg()),
        }
    }
}

/// `<root>/<video_id>/frame_%06d.jpg`, zero-based.
pub fn frame_path(root: &Path, video_id: &str, index: u64) -> PathBuf {
    root.join(video_id).join(format!("frame_{index:06}.jpg"))
}

/// Sidecar metadata for a pre-extracted frame directory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub total_frames: u64,
    pub fps: f64,
}

/// Reads `<root>/<video_id>/meta.json`.
pub fn load_video_meta(root: &Path, video_id: &str) -> Result<VideoMeta> {
    let path = root.join(video_id).join("meta.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn reencode(raw: &[u8], index: u64) -> Result<Vec<u8>> {
    let img = image::load_from_memory(raw).map_err(|e| Error::Frame {
        index,
        message: format!("cannot decode image: {e}"),
    })?;
    encode_jpeg(&downscale(img))
}

fn downscale(img: DynamicImage) -> DynamicImage {
    let long_edge = img.width().max(img.height());
    if long_edge <= MAX_LONG_EDGE {
        return img;
    }
    let scale = MAX_LONG_EDGE as f64 / long_edge as f64;
    let w = ((img.width() as f64 * scale).round() as u32).max(1);
    let h = ((img.height() as f64 * scale).round() as u32).max(1);
    img.resize_exact(w, h, FilterType::Triangle)
}

fn encode_jpeg(img: &DynamicImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    let encoder = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut buf, JPEG_QUALITY);
    img.write_with_encoder(encoder)
        .map_err(|e| Error::Protocol(format!("jpeg encode failed: {e}")))?;
    Ok(buf.into_inner())
}

fn run_frame_command(template: &str, video_id: &str, index: u64) -> Result<Vec<u8>> {
    let rendered = template
        .replace("{video}", video_id)
        .replace("{index}", &index.to_string());
    let mut parts = rendered.split_whitespace();
    let program = parts.next().ok_or_else(|| Error::Frame {
        index,
        message: "empty frame command template".into(),
    })?;
    let output = Command::new(program)
        .args(parts)
        .output()
        .map_err(|e| Error::Frame {
            index,
            message: format!("cannot spawn '{program}': {e}"),
        })?;
    if !output.status.success() {
        return Err(Error::Frame {
            index,
            message: format!("frame command exited with {}", output.status),
        });
    }
    Ok(output.stdout)
}

/// Deterministic gray 16x16 placeholder used by synthetic stores.
fn placeholder_jpeg() -> Vec<u8> {
    static PLACEHOLDER: std::sync::OnceLock<Vec<u8>> = std::sync::OnceLock::new();
    PLACEHOLDER
        .get_or_init(|| {
            let img = DynamicImage::ImageLuma8(image::GrayImage::from_pixel(
                16,
                16,
                image::Luma([128u8]),
            ));
            encode_jpeg(&img).expect("placeholder encodes")
        })
        .clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_fixture_frames(dir: &Path, video_id: &str, count: u64) {
        let video_dir = dir.join(video_id);
        std::fs::create_dir_all(&video_dir).unwrap();
        for i in 0..count {
            let img = DynamicImage::ImageLuma8(image::GrayImage::from_pixel(
                8,
                8,
                image::Luma([(i % 250) as u8]),
            ));
            let jpeg = encode_jpeg(&img).unwrap();
            std::fs::write(video_dir.join(format!("frame_{i:06}.jpg")), jpeg).unwrap();
        }
        std::fs::write(
            video_dir.join("meta.json"),
            format!(r#"{{"total_frames": {count}, "fps": 2.0}}"#),
        )
        .unwrap();
    }

    #[test]
    fn directory_store_resolves_and_timestamps() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture_frames(dir.path(), "vid", 50);
        let meta = load_video_meta(dir.path(), "vid").unwrap();
        assert_eq!(meta.total_frames, 50);
        let video = VideoSource::new("vid", meta.total_frames, meta.fps).unwrap();
        let store = FrameStore::new(
            FrameStoreKind::Directory {
                root: dir.path().into(),
            },
            1 << 20,
        );
        let frames = store.resolve(&video, &[42, 43]).unwrap();
        assert_eq!(frames[0].index, 42);
        assert!((frames[0].timestamp_s(video.fps) - 21.0).abs() < 1e-12);
        assert!(frames[1].timestamp_s(video.fps) > frames[0].timestamp_s(video.fps));
        assert!(!frames[0].jpeg_base64.is_empty());
    }

    #[test]
    fn missing_frame_identifies_index() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture_frames(dir.path(), "vid", 3);
        let video = VideoSource::new("vid", 10, 2.0).unwrap();
        let store = FrameStore::new(
            FrameStoreKind::Directory {
                root: dir.path().into(),
            },
            1 << 20,
        );
        match store.resolve(&video, &[7]) {
            Err(Error::Frame { index, .. }) => assert_eq!(index, 7),
            other => panic!("expected frame error, got {other:?}"),
        }
    }

    #[test]
    fn repeated_resolve_hits_cache_and_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture_frames(dir.path(), "vid", 5);
        let video = VideoSource::new("vid", 5, 1.0).unwrap();
        let store = FrameStore::new(
            FrameStoreKind::Directory {
                root: dir.path().into(),
            },
            1 << 20,
        );
        let first = store.resolve(&video, &[2]).unwrap();
        assert_eq!(store.cache_hits(), 0);
        let second = store.resolve(&video, &[2]).unwrap();
        assert_eq!(store.cache_hits(), 1);
        assert_eq!(first, second);
    }

    #[test]
    fn cache_evicts_within_budget() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture_frames(dir.path(), "vid", 20);
        let video = VideoSource::new("vid", 20, 1.0).unwrap();
        // Budget fits roughly two encoded frames.
        let store = FrameStore::new(
            FrameStoreKind::Directory {
                root: dir.path().into(),
            },
            1300,
        );
        for i in 0..10 {
            store.resolve(&video, &[i]).unwrap();
        }
        let state = store.cache.lock().unwrap();
        assert!(state.entries.len() < 10);
    }

    #[test]
    fn synthetic_store_never_touches_disk() {
        let video = VideoSource::new("ghost", 1000, 1.0).unwrap();
        let store = FrameStore::synthetic();
        let frames = store.resolve(&video, &[0, 999]).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].jpeg_base64, frames[1].jpeg_base64);
    }

    #[test]
    fn external_command_substitutes_and_captures_stdout() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture_frames(dir.path(), "vid", 3);
        let template = format!(
            "cat {}/{{video}}/frame_00000{{index}}.jpg",
            dir.path().display()
        );
        let video = VideoSource::new("vid", 3, 1.0).unwrap();
        let store = FrameStore::new(FrameStoreKind::ExternalCommand { template }, 1 << 20);
        let frames = store.resolve(&video, &[1]).unwrap();
        assert_eq!(frames[0].index, 1);
        assert!(!frames[0].jpeg_base64.is_empty());
    }

    #[test]
    fn external_command_failure_is_per_index() {
        let video = VideoSource::new("vid", 3, 1.0).unwrap();
        let store = FrameStore::new(
            FrameStoreKind::ExternalCommand {
                template: "false {video} {index}".into(),
            },
            1 << 20,
        );
        assert!(matches!(
            store.resolve(&video, &[2]),
            Err(Error::Frame { index: 2, .. })
        ));
    }
}
