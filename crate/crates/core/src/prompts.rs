//! Prompt templates and parsers for structured model replies.
//!
//! Templates ship as plain text files with named `{placeholder}` slots and
//! can be overridden from a directory (`prompts/{answer,expand,evaluate,
//! keyinfo}.txt`). Rendering is total: optional context renders as an empty
//! section rather than failing.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Interval, KeyframeMemory, QueryOption};
use crate::error::{Error, Result};

/// The four prompt roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptName {
    Answer,
    Expand,
    Evaluate,
    Keyinfo,
}

impl PromptName {
    pub fn file_name(&self) -> &'static str {
        match self {
            PromptName::Answer => "answer.txt",
            PromptName::Expand => "expand.txt",
            PromptName::Evaluate => "evaluate.txt",
            PromptName::Keyinfo => "keyinfo.txt",
        }
    }
}

const PLACEHOLDERS: &[&str] = &[
    "question",
    "options",
    "interval_start_s",
    "interval_end_s",
    "video_duration_s",
    "memory",
    "n",
    "prior_answer",
];

/// One template with validated placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub name: PromptName,
    text: String,
}

impl PromptTemplate {
    /// Validates that every `{word}` slot in `text` is a known placeholder.
    pub fn new(name: PromptName, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        for slot in scan_placeholders(&text) {
            if !PLACEHOLDERS.contains(&slot.as_str()) {
                return Err(Error::Prompt(format!(
                    "unknown placeholder {{{slot}}} in {} template",
                    name.file_name()
                )));
            }
        }
        Ok(PromptTemplate { name, text })
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

fn scan_placeholders(text: &str) -> Vec<String> {
    let mut found = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(close) = text[i + 1..].find(['}', '{']) {
                let inner = &text[i + 1..i + 1 + close];
                if text.as_bytes()[i + 1 + close] == b'}'
                    && !inner.is_empty()
                    && inner.chars().all(|c| c.is_ascii_lowercase() || c == '_')
                {
                    found.push(inner.to_string());
                    i += close + 2;
                    continue;
                }
            }
        }
        i += 1;
    }
    found
}

/// The full set of templates a backend renders from.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    pub answer: PromptTemplate,
    pub expand: PromptTemplate,
    pub evaluate: PromptTemplate,
    pub keyinfo: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            answer: PromptTemplate::new(PromptName::Answer, include_str!("../prompts/answer.txt"))
                .expect("bundled template"),
            expand: PromptTemplate::new(PromptName::Expand, include_str!("../prompts/expand.txt"))
                .expect("bundled template"),
            evaluate: PromptTemplate::new(
                PromptName::Evaluate,
                include_str!("../prompts/evaluate.txt"),
            )
            .expect("bundled template"),
            keyinfo: PromptTemplate::new(
                PromptName::Keyinfo,
                include_str!("../prompts/keyinfo.txt"),
            )
            .expect("bundled template"),
        }
    }
}

impl PromptSet {
    /// Loads all four templates from a directory.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let load = |name: PromptName| -> Result<PromptTemplate> {
            let path = dir.join(name.file_name());
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Prompt(format!("cannot read {}: {e}", path.display())))?;
            PromptTemplate::new(name, text)
        };
        Ok(PromptSet {
            answer: load(PromptName::Answer)?,
            expand: load(PromptName::Expand)?,
            evaluate: load(PromptName::Evaluate)?,
            keyinfo: load(PromptName::Keyinfo)?,
        })
    }

    pub fn get(&self, name: PromptName) -> &PromptTemplate {
        match name {
            PromptName::Answer => &self.answer,
            PromptName::Expand => &self.expand,
            PromptName::Evaluate => &self.evaluate,
            PromptName::Keyinfo => &self.keyinfo,
        }
    }
}

/// Everything a template may reference.
pub struct RenderContext<'a> {
    pub question: &'a str,
    pub options: &'a [QueryOption],
    pub interval_start_s: f64,
    pub interval_end_s: f64,
    pub video_duration_s: f64,
    pub memory: &'a KeyframeMemory,
    pub n: u32,
    pub prior_answer: Option<&'a str>,
}

/// Renders a template against a context. Deterministic; empty optional
/// sections (memory, options, prior answer) vanish entirely.
pub fn render(template: &PromptTemplate, ctx: &RenderContext<'_>) -> String {
    let memory_block = if ctx.memory.is_empty() {
        String::new()
    } else {
        format!("Notes from other segments:\n{}", ctx.memory.render())
    };
    let options_block = if ctx.options.is_empty() {
        String::new()
    } else {
        let mut out = String::from("Options:\n");
        for opt in ctx.options {
            out.push_str(&format!("{}. {}\n", opt.label, opt.text));
        }
        out
    };
    let mut out = template.text().to_string();
    for (slot, value) in [
        ("{question}", ctx.question.to_string()),
        ("{options}", options_block),
        ("{interval_start_s}", fmt_seconds(ctx.interval_start_s)),
        ("{interval_end_s}", fmt_seconds(ctx.interval_end_s)),
        ("{video_duration_s}", fmt_seconds(ctx.video_duration_s)),
        ("{memory}", memory_block),
        ("{n}", ctx.n.to_string()),
        ("{prior_answer}", ctx.prior_answer.unwrap_or("").to_string()),
    ] {
        out = out.replace(slot, &value);
    }
    // Collapse the blank lines left behind by empty sections.
    while out.contains("\n\n\n") {
        out = out.replace("\n\n\n", "\n\n");
    }
    out
}

fn fmt_seconds(s: f64) -> String {
    if (s - s.round()).abs() < 1e-9 {
        format!("{}", s.round() as i64)
    } else {
        format!("{s:.1}")
    }
}

// ---------------------------------------------------------------------------
// Reply parsing
// ---------------------------------------------------------------------------

/// Recovers an option label from a free-text reply.
///
/// Tried in priority order: a standalone option letter at the start of the
/// reply, an "answer is X" pattern, and finally a unique option whose full
/// text appears verbatim (case-insensitive). Returns `None` when nothing
/// matches; never returns a label outside the option set.
pub fn parse_choice(answer_text: &str, options: &[QueryOption]) -> Option<char> {
    if options.is_empty() {
        return None;
    }
    if let Some(label) = leading_label(answer_text, options) {
        return Some(label);
    }
    if let Some(label) = answer_is_label(answer_text, options) {
        return Some(label);
    }
    let lower = answer_text.to_lowercase();
    let mut matches = options.iter().filter(|opt| {
        !opt.text.trim().is_empty() && lower.contains(&opt.text.trim().to_lowercase())
    });
    match (matches.next(), matches.next()) {
        (Some(opt), None) => Some(opt.label),
        _ => None,
    }
}

fn is_valid_label(c: char, options: &[QueryOption]) -> bool {
    options.iter().any(|o| o.label == c)
}

/// A standalone letter at the start of the reply, optionally wrapped in
/// parentheses or followed by punctuation.
fn leading_label(text: &str, options: &[QueryOption]) -> Option<char> {
    let mut chars = text
        .trim_start()
        .chars()
        .skip_while(|&c| c == '(' || c == '*' || c == '"');
    let first = chars.next()?;
    let label = first.to_ascii_uppercase();
    if !first.is_ascii_alphabetic() || !is_valid_label(label, options) {
        return None;
    }
    match chars.next() {
        None => Some(label),
        Some(next) if !next.is_alphanumeric() => Some(label),
        _ => None,
    }
}

fn answer_is_label(text: &str, options: &[QueryOption]) -> Option<char> {
    // ASCII lowering keeps byte offsets aligned with `text`.
    let lower = text.to_ascii_lowercase();
    let mut search_from = 0;
    while let Some(pos) = lower[search_from..].find("answer is") {
        let tail_start = search_from + pos + "answer is".len();
        let tail = &text[tail_start..];
        let mut chars = tail
            .chars()
            .skip_while(|&c| c.is_whitespace() || "(*\"':".contains(c));
        if let Some(first) = chars.next() {
            let label = first.to_ascii_uppercase();
            let boundary = chars.next().is_none_or(|c| !c.is_alphanumeric());
            if first.is_ascii_alphabetic() && boundary && is_valid_label(label, options) {
                return Some(label);
            }
        }
        search_from = tail_start;
    }
    None
}

/// Extracts proposed time ranges from a model reply and converts them to
/// frame intervals.
///
/// A JSON array of `[start_seconds, end_seconds]` pairs is preferred; failing
/// that, a lexical scan pairs up second-marked numbers ("between 30s and
/// 60s", "120-180s"). Seconds map to frames with floor/ceil so a range widens
/// rather than narrows, reversed pairs are swapped, everything is clamped to
/// `parent`, and empty results are dropped. Garbage input yields an empty
/// list.
pub fn parse_intervals(reply: &str, fps: f64, parent: Interval) -> Vec<Interval> {
    let pairs = json_second_pairs(reply).unwrap_or_else(|| scanned_second_pairs(reply));
    pairs
        .into_iter()
        .filter_map(|(a, b)| seconds_to_interval(a, b, fps, parent))
        .collect()
}

fn seconds_to_interval(a: f64, b: f64, fps: f64, parent: Interval) -> Option<Interval> {
    if !a.is_finite() || !b.is_finite() {
        return None;
    }
    let (lo_s, hi_s) = if a <= b { (a, b) } else { (b, a) };
    let start = (lo_s * fps).floor().max(0.0).min(u64::MAX as f64) as u64;
    let end = (hi_s * fps).ceil().max(0.0).min(u64::MAX as f64) as u64;
    if end <= start {
        return None;
    }
    Interval::new(start, end).ok()?.clamp_to(&parent)
}

/// Finds the first balanced `[...]` block that parses as second pairs.
fn json_second_pairs(reply: &str) -> Option<Vec<(f64, f64)>> {
    let bytes = reply.as_bytes();
    for (open, &b) in bytes.iter().enumerate() {
        if b != b'[' {
            continue;
        }
        let mut depth = 0usize;
        for (off, &c) in bytes[open..].iter().enumerate() {
            match c {
                b'[' => depth += 1,
                b']' => {
                    depth -= 1;
                    if depth == 0 {
                        let block = &reply[open..=open + off];
                        if let Ok(nested) = serde_json::from_str::<Vec<Vec<f64>>>(block) {
                            if !nested.is_empty() && nested.iter().all(|p| p.len() >= 2) {
                                return Some(nested.into_iter().map(|p| (p[0], p[1])).collect());
                            }
                        }
                        if let Ok(flat) = serde_json::from_str::<Vec<f64>>(block) {
                            if flat.len() == 2 {
                                return Some(vec![(flat[0], flat[1])]);
                            }
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    None
}

/// Collects numbers marked as seconds ("30s", "30 s", "30sec", the members of
/// "120-180s") and pairs them up in order of appearance.
fn scanned_second_pairs(reply: &str) -> Vec<(f64, f64)> {
    let mut seconds: Vec<f64> = Vec::new();
    let bytes = reply.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            let Ok(value) = reply[start..i].parse::<f64>() else {
                continue;
            };
            let tail = reply[i..].trim_start();
            let marked = tail.starts_with('s') || tail.starts_with("sec");
            // In "120-180s" the first number inherits the unit of the second.
            let range_tail = tail.strip_prefix('-').or_else(|| tail.strip_prefix("–"));
            let feeds_range = range_tail
                .is_some_and(|t| t.trim_start().starts_with(|c: char| c.is_ascii_digit()));
            if marked || feeds_range {
                seconds.push(value);
            }
        } else {
            i += 1;
        }
    }
    seconds
        .chunks_exact(2)
        .map(|pair| (pair[0], pair[1]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::KeyframeNote;
    use proptest::prelude::*;

    fn options(texts: &[&str]) -> Vec<QueryOption> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| QueryOption {
                label: (b'A' + i as u8) as char,
                text: (*t).into(),
            })
            .collect()
    }

    fn ctx<'a>(memory: &'a KeyframeMemory, options: &'a [QueryOption]) -> RenderContext<'a> {
        RenderContext {
            question: "What happens?",
            options,
            interval_start_s: 0.0,
            interval_end_s: 1200.0,
            video_duration_s: 1200.0,
            memory,
            n: 6,
            prior_answer: None,
        }
    }

    #[test]
    fn empty_memory_renders_no_memory_section() {
        let set = PromptSet::default();
        let memory = KeyframeMemory::new(8);
        let opts = options(&["red", "blue"]);
        let out = render(&set.answer, &ctx(&memory, &opts));
        assert!(!out.contains("Notes from other segments"));
        assert!(out.contains("What happens?"));
        assert!(out.contains("A. red"));
    }

    #[test]
    fn expand_contains_n_and_bounds() {
        let set = PromptSet::default();
        let memory = KeyframeMemory::new(8);
        let out = render(&set.expand, &ctx(&memory, &[]));
        assert!(out.contains('6'));
        assert!(out.contains("0s"));
        assert!(out.contains("1200s"));
        assert!(!out.contains("Options:"));
    }

    #[test]
    fn memory_renders_in_timestamp_order() {
        let set = PromptSet::default();
        let iv = Interval::new(0, 100).unwrap();
        let mut memory = KeyframeMemory::new(8);
        memory.insert(
            KeyframeNote {
                timestamp_s: 12.0,
                source_interval: iv,
                text: "second".into(),
            },
            1.0,
        );
        memory.insert(
            KeyframeNote {
                timestamp_s: 5.0,
                source_interval: iv,
                text: "first".into(),
            },
            1.0,
        );
        let out = render(&set.answer, &ctx(&memory, &[]));
        assert!(out.find("[t=5.0s] first").unwrap() < out.find("[t=12.0s] second").unwrap());
    }

    #[test]
    fn unknown_placeholder_is_a_load_error() {
        let err = PromptTemplate::new(PromptName::Answer, "hello {bogus_slot}").unwrap_err();
        assert!(err.to_string().contains("bogus_slot"));
    }

    #[test]
    fn load_dir_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["answer", "expand", "evaluate", "keyinfo"] {
            std::fs::write(dir.path().join(format!("{name}.txt")), "Q: {question}").unwrap();
        }
        let set = PromptSet::load_dir(dir.path()).unwrap();
        let memory = KeyframeMemory::new(4);
        let a = render(&set.answer, &ctx(&memory, &[]));
        let b = render(&set.answer, &ctx(&memory, &[]));
        assert_eq!(a, b);
        assert_eq!(a.trim(), "Q: What happens?");
    }

    #[test]
    fn choice_standalone_letter() {
        let opts = options(&["w", "x", "y", "z"]);
        assert_eq!(parse_choice("A", &opts), Some('A'));
        assert_eq!(parse_choice("  (b)", &opts), Some('B'));
        assert_eq!(parse_choice("D.", &opts), Some('D'));
        assert_eq!(parse_choice("E", &opts), None);
        assert_eq!(parse_choice("Dog", &opts), None);
    }

    #[test]
    fn choice_answer_is_pattern() {
        let opts = options(&["walnut", "xylophone", "yarn", "zeppelin"]);
        assert_eq!(parse_choice("The answer is (C).", &opts), Some('C'));
        assert_eq!(parse_choice("I think the ANSWER IS b", &opts), Some('B'));
        assert_eq!(parse_choice("the answer is not visible", &opts), None);
    }

    #[test]
    fn choice_unique_option_text() {
        let opts = options(&[
            "blue jacket",
            "red long sleeves",
            "green hat",
            "white shoes",
        ]);
        assert_eq!(
            parse_choice("She is wearing red long sleeves.", &opts),
            Some('B')
        );
        // Text matching two options at once stays unparsed.
        let opts = options(&["red hat", "red"]);
        assert_eq!(parse_choice("wearing a red hat", &opts), None);
    }

    #[test]
    fn intervals_json_array() {
        let parent = Interval::new(0, 600).unwrap();
        let got = parse_intervals("[[30, 60], [90, 120]]", 1.0, parent);
        assert_eq!(
            got,
            vec![
                Interval::new(30, 60).unwrap(),
                Interval::new(90, 120).unwrap()
            ]
        );
    }

    #[test]
    fn intervals_lexical_scan() {
        let parent = Interval::new(0, 1200).unwrap();
        let got = parse_intervals("look between 30s and 60s", 2.0, parent);
        assert_eq!(got, vec![Interval::new(60, 120).unwrap()]);
        let got = parse_intervals("try 120-180s first", 1.0, parent);
        assert_eq!(got, vec![Interval::new(120, 180).unwrap()]);
    }

    #[test]
    fn intervals_garbage_is_empty() {
        let parent = Interval::new(0, 600).unwrap();
        assert!(parse_intervals("I cannot determine this.", 1.0, parent).is_empty());
    }

    #[test]
    fn intervals_clamp_and_swap() {
        let parent = Interval::new(0, 200).unwrap();
        let got = parse_intervals("[[-5, 30], [90, 400]]", 1.0, parent);
        assert_eq!(
            got,
            vec![
                Interval::new(0, 30).unwrap(),
                Interval::new(90, 200).unwrap()
            ]
        );
        let got = parse_intervals("[[60, 20]]", 1.0, parent);
        assert_eq!(got, vec![Interval::new(20, 60).unwrap()]);
    }

    proptest! {
        #[test]
        fn parse_choice_stays_in_option_set(text in ".{0,100}") {
            let opts = options(&["alpha", "beta"]);
            if let Some(label) = parse_choice(&text, &opts) {
                prop_assert!(label == 'A' || label == 'B');
            }
        }

        #[test]
        fn parse_intervals_respects_parent(text in ".{0,200}", fps in 0.5f64..30.0) {
            let parent = Interval::new(10, 500).unwrap();
            for iv in parse_intervals(&text, fps, parent) {
                prop_assert!(parent.contains(&iv));
                prop_assert!(iv.len() >= 1);
            }
        }
    }
}
