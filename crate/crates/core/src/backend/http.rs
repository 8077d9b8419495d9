//! OpenAI-compatible chat-completions client with log-probabilities and
//! image inputs.
//!
//! Mainstream inference servers expose video-language models behind this
//! protocol, which keeps the search model-agnostic: frames travel as base64
//! JPEG parts, `logprobs` is always requested, and confidence is recomputed
//! client-side from the returned per-token log-probabilities rather than
//! parsed from model prose.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::backend::{yes_probability, BackendCapabilities, VideoLlm};
use crate::domain::{Interval, KeyframeMemory, KeyframeNote, ModelVerdict, Query, VideoSource};
use crate::error::{Error, Result};
use crate::frames::FrameStore;
use crate::prompts::{parse_choice, parse_intervals, render, PromptName, PromptSet, RenderContext};
use crate::sampling::FrameSample;

const SYSTEM_TEXT: &str =
    "You are a careful assistant answering questions about a video from sampled frames.";

/// Connection and protocol settings for [`HttpBackend`].
#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    /// Base URL up to and including the API prefix, e.g.
    /// `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Per-call timeout.
    pub timeout: Duration,
    /// Total attempts per call for transport-level failures.
    pub max_attempts: u32,
    /// Initial backoff between retries; doubles per attempt.
    pub retry_backoff: Duration,
    /// Alternatives requested per generated position.
    pub top_logprobs: u8,
    pub max_answer_tokens: u32,
    pub max_evaluate_tokens: u32,
    pub max_propose_tokens: u32,
    pub max_describe_tokens: u32,
}

impl HttpBackendConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpBackendConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_attempts: 3,
            retry_backoff: Duration::from_millis(200),
            top_logprobs: 5,
            max_answer_tokens: 64,
            max_evaluate_tokens: 4,
            max_propose_tokens: 256,
            max_describe_tokens: 256,
        }
    }
}

/// One frame image ready for the wire.
#[derive(Debug, Clone)]
pub struct TimedFrame {
    pub jpeg_base64: String,
    pub timestamp_s: f64,
}

/// A fully rendered inference request, independent of the wire encoding.
#[derive(Debug, Clone)]
pub struct InferenceRequest {
    /// Exactly the sampled frames, timestamps ascending.
    pub frames: Vec<TimedFrame>,
    pub system_text: String,
    pub user_text: String,
    pub max_tokens: u32,
    pub want_logprobs: bool,
    pub temperature: f64,
}

/// Backend speaking the chat-completions protocol.
pub struct HttpBackend {
    config: HttpBackendConfig,
    prompts: PromptSet,
    store: Arc<FrameStore>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig, prompts: PromptSet, store: Arc<FrameStore>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        HttpBackend {
            config,
            prompts,
            store,
            agent,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn render_prompt(
        &self,
        name: PromptName,
        video: &VideoSource,
        frames: &FrameSample,
        query: &Query,
        memory: &KeyframeMemory,
        n: u32,
        prior_answer: Option<&str>,
    ) -> String {
        let ctx = RenderContext {
            question: &query.question,
            options: &query.options,
            interval_start_s: frames.interval.start() as f64 / video.fps,
            interval_end_s: frames.interval.end() as f64 / video.fps,
            video_duration_s: video.duration_s(),
            memory,
            n,
            prior_answer,
        };
        render(self.prompts.get(name), &ctx)
    }

    fn build_request(
        &self,
        video: &VideoSource,
        frames: &FrameSample,
        user_text: String,
        max_tokens: u32,
    ) -> Result<InferenceRequest> {
        let encoded = self.store.resolve(video, &frames.indices)?;
        let frames = encoded
            .into_iter()
            .map(|f| TimedFrame {
                timestamp_s: f.timestamp_s(video.fps),
                jpeg_base64: f.jpeg_base64,
            })
            .collect();
        Ok(InferenceRequest {
            frames,
            system_text: SYSTEM_TEXT.to_string(),
            user_text,
            max_tokens,
            want_logprobs: true,
            temperature: 0.0,
        })
    }

    /// Sends a request, retrying transport failures and 5xx with exponential
    /// backoff. 4xx statuses surface immediately.
    fn send(&self, request: &InferenceRequest) -> Result<WireChoice> {
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let body = WireRequest::from_inference(request, &self.config);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.send_once(&url, &body) {
                Ok(choice) => return Ok(choice),
                Err(err) if err.is_retriable() && attempt < self.config.max_attempts => {
                    let backoff = self.config.retry_backoff * 2u32.pow(attempt - 1);
                    log::warn!("backend attempt {attempt} failed ({err}); retrying in {backoff:?}");
                    std::thread::sleep(backoff);
                }
                Err(err) => return Err(err),
            }
        }
    }

    fn send_once(&self, url: &str, body: &WireRequest) -> Result<WireChoice> {
        let mut builder = self.agent.post(url);
        if let Some(key) = &self.config.api_key {
            builder = builder.header("authorization", format!("Bearer {key}"));
        }
        let mut response = builder
            .send_json(body)
            .map_err(|e| Error::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        if (500..600).contains(&status) {
            let text = response.body_mut().read_to_string().unwrap_or_default();
            return Err(Error::Transport(format!("server error {status}: {text}")));
        }
        if !(200..300).contains(&status) {
            let text = response.body_mut().read_to_string().unwrap_or_default();
            return Err(Error::HttpStatus { status, body: text });
        }
        let parsed: WireResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| Error::Protocol(format!("malformed response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Error::Protocol("response carried no choices".into()))
    }
}

impl VideoLlm for HttpBackend {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            supports_logprobs: true,
            supports_yes_probability: true,
            max_images: 64,
        }
    }

    fn answer(
        &self,
        video: &VideoSource,
        frames: &FrameSample,
        query: &Query,
        memory: &KeyframeMemory,
    ) -> Result<ModelVerdict> {
        let text = self.render_prompt(PromptName::Answer, video, frames, query, memory, 0, None);
        let request = self.build_request(video, frames, text, self.config.max_answer_tokens)?;
        let choice = self.send(&request)?;
        let content = choice.content();
        let logprobs = choice.token_logprobs().ok_or_else(|| {
            // This backend declares logprob support, so absence is a
            // contract violation rather than a degradation.
            Error::Protocol("response missing logprobs".into())
        })?;
        let parsed = parse_choice(&content, &query.options);
        ModelVerdict::from_logprobs(content, parsed, logprobs)
    }

    fn evaluate(
        &self,
        video: &VideoSource,
        frames: &FrameSample,
        query: &Query,
        answer: &ModelVerdict,
        memory: &KeyframeMemory,
    ) -> Result<f64> {
        let text = self.render_prompt(
            PromptName::Evaluate,
            video,
            frames,
            query,
            memory,
            0,
            Some(&answer.answer_text),
        );
        let request = self.build_request(video, frames, text, self.config.max_evaluate_tokens)?;
        let choice = self.send(&request)?;
        let top = choice.first_position_candidates();
        let (p, degraded) = yes_probability(&top);
        if degraded {
            log::warn!("evaluation reply had no yes/no candidate; using neutral 0.5");
        }
        Ok(p)
    }

    fn propose_intervals(
        &self,
        video: &VideoSource,
        frames: &FrameSample,
        query: &Query,
        memory: &KeyframeMemory,
        parent: Interval,
        n: u32,
    ) -> Result<Vec<Interval>> {
        let text = self.render_prompt(PromptName::Expand, video, frames, query, memory, n, None);
        let request = self.build_request(video, frames, text, self.config.max_propose_tokens)?;
        let choice = self.send(&request)?;
        let mut intervals = parse_intervals(&choice.content(), video.fps, parent);
        intervals.truncate(n as usize);
        Ok(intervals)
    }

    fn describe_keyframes(
        &self,
        video: &VideoSource,
        frames: &FrameSample,
        query: &Query,
        memory: &KeyframeMemory,
    ) -> Result<Vec<KeyframeNote>> {
        let text = self.render_prompt(PromptName::Keyinfo, video, frames, query, memory, 0, None);
        let request = self.build_request(video, frames, text, self.config.max_describe_tokens)?;
        let choice = self.send(&request)?;
        let timestamp_s = frames.interval.midpoint_s(video.fps);
        Ok(choice
            .content()
            .lines()
            .map(str::trim)
            .filter(|line| !line.is_empty())
            .map(|line| KeyframeNote {
                timestamp_s,
                source_interval: frames.interval,
                text: line.to_string(),
            })
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct WireRequest {
    model: String,
    messages: Vec<WireMessage>,
    temperature: f64,
    max_tokens: u32,
    logprobs: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_logprobs: Option<u8>,
}

impl WireRequest {
    fn from_inference(request: &InferenceRequest, config: &HttpBackendConfig) -> Self {
        let mut parts = Vec::with_capacity(request.frames.len() * 2 + 1);
        for frame in &request.frames {
            parts.push(WirePart::Text {
                text: format!("frame at {:.1}s:", frame.timestamp_s),
            });
            parts.push(WirePart::ImageUrl {
                image_url: WireImageUrl {
                    url: format!("data:image/jpeg;base64,{}", frame.jpeg_base64),
                },
            });
        }
        parts.push(WirePart::Text {
            text: request.user_text.clone(),
        });
        WireRequest {
            model: config.model.clone(),
            messages: vec![
                WireMessage {
                    role: "system",
                    content: WireContent::Text(request.system_text.clone()),
                },
                WireMessage {
                    role: "user",
                    content: WireContent::Parts(parts),
                },
            ],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            logprobs: request.want_logprobs,
            top_logprobs: request.want_logprobs.then_some(config.top_logprobs),
        }
    }
}

#[derive(Debug, Serialize)]
struct WireMessage {
    role: &'static str,
    content: WireContent,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum WireContent {
    Text(String),
    Parts(Vec<WirePart>),
}

#[derive(Debug, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum WirePart {
    Text { text: String },
    ImageUrl { image_url: WireImageUrl },
}

#[derive(Debug, Serialize)]
struct WireImageUrl {
    url: String,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Debug, Deserialize)]
pub(crate) struct WireChoice {
    message: WireReplyMessage,
    #[serde(default)]
    logprobs: Option<WireLogprobs>,
}

#[derive(Debug, Deserialize)]
struct WireReplyMessage {
    #[serde(default)]
    content: Option<WireReplyContent>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum WireReplyContent {
    Text(String),
    Parts(Vec<WireReplyPart>),
}

#[derive(Debug, Deserialize)]
struct WireReplyPart {
    #[serde(default)]
    text: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WireLogprobs {
    #[serde(default)]
    content: Vec<WireTokenLogprob>,
}

#[derive(Debug, Deserialize)]
struct WireTokenLogprob {
    #[serde(default)]
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Option<Vec<WireTopToken>>,
}

#[derive(Debug, Deserialize)]
struct WireTopToken {
    token: String,
    logprob: f64,
}

impl WireChoice {
    fn content(&self) -> String {
        match &self.message.content {
            Some(WireReplyContent::Text(text)) => text.clone(),
            Some(WireReplyContent::Parts(parts)) => parts
                .iter()
                .filter_map(|p| p.text.as_deref())
                .collect::<Vec<_>>()
                .join(""),
            None => String::new(),
        }
    }

    /// Per-token log-probabilities, `None` when the server sent none.
    fn token_logprobs(&self) -> Option<Vec<f64>> {
        let lp = self.logprobs.as_ref()?;
        if lp.content.is_empty() {
            return None;
        }
        Some(lp.content.iter().map(|t| t.logprob).collect())
    }

    /// Candidates for the first generated position; the generated token
    /// itself joins them so an absent `top_logprobs` list still yields one
    /// candidate.
    fn first_position_candidates(&self) -> Vec<(String, f64)> {
        let Some(lp) = self.logprobs.as_ref() else {
            return Vec::new();
        };
        let Some(first) = lp.content.first() else {
            return Vec::new();
        };
        let mut out = vec![(first.token.clone(), first.logprob)];
        if let Some(top) = &first.top_logprobs {
            out.extend(top.iter().map(|t| (t.token.clone(), t.logprob)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_response_parses_with_and_without_top_logprobs() {
        let body = r#"{
            "choices": [{
                "message": {"content": "A"},
                "logprobs": {"content": [
                    {"token": "A", "logprob": -0.1,
                     "top_logprobs": [{"token": "A", "logprob": -0.1}, {"token": "B", "logprob": -2.3}]}
                ]}
            }]
        }"#;
        let parsed: WireResponse = serde_json::from_str(body).unwrap();
        let choice = &parsed.choices[0];
        assert_eq!(choice.content(), "A");
        assert_eq!(choice.token_logprobs().unwrap(), vec![-0.1]);
        assert_eq!(choice.first_position_candidates().len(), 3);

        let body = r#"{
            "choices": [{
                "message": {"content": "hello"},
                "logprobs": {"content": [{"token": "hello", "logprob": -0.5}]}
            }]
        }"#;
        let parsed: WireResponse = serde_json::from_str(body).unwrap();
        assert_eq!(parsed.choices[0].token_logprobs().unwrap(), vec![-0.5]);
        assert_eq!(parsed.choices[0].first_position_candidates().len(), 1);
    }

    #[test]
    fn wire_response_tolerates_missing_logprobs_and_part_content() {
        let body = r#"{
            "choices": [{"message": {"content": [{"type": "text", "text": "B"}]}}]
        }"#;
        let parsed: WireResponse = serde_json::from_str(body).unwrap();
        assert_eq!(parsed.choices[0].content(), "B");
        assert!(parsed.choices[0].token_logprobs().is_none());
    }

    #[test]
    fn wire_request_shape() {
        let request = InferenceRequest {
            frames: vec![TimedFrame {
                jpeg_base64: "Zm9v".into(),
                timestamp_s: 21.0,
            }],
            system_text: "sys".into(),
            user_text: "user".into(),
            max_tokens: 32,
            want_logprobs: true,
            temperature: 0.0,
        };
        let config = HttpBackendConfig::new("http://localhost:1", "m");
        let wire = WireRequest::from_inference(&request, &config);
        let json = serde_json::to_value(&wire).unwrap();
        assert_eq!(json["model"], "m");
        assert_eq!(json["temperature"], 0.0);
        assert_eq!(json["logprobs"], true);
        assert_eq!(json["top_logprobs"], 5);
        let parts = json["messages"][1]["content"].as_array().unwrap();
        assert_eq!(parts[1]["type"], "image_url");
        assert!(parts[1]["image_url"]["url"]
            .as_str()
            .unwrap()
            .starts_with("data:image/jpeg;base64,"));
        assert_eq!(parts[2]["text"], "user");
    }
}
