//! Client for chat-completion style vision-language endpoints.
//!
//! The prompt asks the model to answer a semicolon-separated batch of yes/no
//! questions about a single image with `yes`, `no` or `skip`. Transport runs
//! over a blocking HTTP client with bounded retries. [`VlmAnswerer`] plugs the
//! client into the monitor in place of the simulated oracle.

use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::perception::{Answer, PredicateClass, Query, QuestionAnswerer, Visibility};
use crate::world::WorldState;

/// System message sent verbatim with every request.
pub const SYSTEM_PROMPT: &str = include_str!("../data/prompt_system.txt");
const SYSTEM_PROMPT_GOLDEN: &str = include_str!("../data/prompt_system.sha256");

/// Label prefixed to a textual scene digest so a reply is never mistaken for
/// a visual judgement.
pub const DIGEST_LABEL: &str =
    "[non-faithful mode: symbolic scene digest in place of the camera image]";

#[derive(Debug, thiserror::Error)]
pub enum VlmError {
    #[error("prompt needs at least one question")]
    EmptyQuestions,
    #[error("malformed response ({reason}): {raw:?}")]
    Malformed { reason: String, raw: String },
    #[error("authentication rejected with HTTP {0}")]
    Auth(u16),
    #[error("credential variable `{0}` is not set")]
    MissingCredential(String),
    #[error("endpoint returned HTTP {status}")]
    Status { status: u16 },
    #[error("transport error: {0}")]
    Transport(String),
}

impl VlmError {
    fn transient(&self) -> bool {
        match self {
            VlmError::Transport(_) => true,
            VlmError::Status { status } => *status >= 500 || *status == 429,
            _ => false,
        }
    }
}

/// SHA-256 of [`SYSTEM_PROMPT`], hex encoded.
pub fn system_prompt_sha256() -> String {
    hex::encode(Sha256::digest(SYSTEM_PROMPT.as_bytes()))
}

/// Hash the bundled system text is pinned to.
pub fn golden_system_prompt_sha256() -> &'static str {
    SYSTEM_PROMPT_GOLDEN.trim()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub bytes: Vec<u8>,
    pub media_type: String,
}

impl Image {
    pub fn png(bytes: Vec<u8>) -> Self {
        Image {
            bytes,
            media_type: "image/png".into(),
        }
    }

    pub fn data_url(&self) -> String {
        format!(
            "data:{};base64,{}",
            self.media_type,
            base64::engine::general_purpose::STANDARD.encode(&self.bytes)
        )
    }
}

/// What the model looks at. The digest variant exists for smoke tests
/// against symbolic worlds that have no renderer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum View {
    Image(Image),
    SceneDigest(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPayload {
    pub system_text: String,
    pub questions: Vec<String>,
    pub view: Option<View>,
}

impl PromptPayload {
    pub fn user_text(&self) -> String {
        self.questions.join(";")
    }

    /// Request body for an OpenAI-compatible `/chat/completions` endpoint.
    pub fn request_body(&self, model: &str) -> Value {
        let mut content = vec![json!({ "type": "text", "text": self.user_text() })];
        match &self.view {
            Some(View::Image(img)) => content.push(json!({
                "type": "image_url",
                "image_url": { "url": img.data_url() },
            })),
            Some(View::SceneDigest(d)) => content.push(json!({
                "type": "text",
                "text": format!("{DIGEST_LABEL}\n{d}"),
            })),
            None => {}
        }
        json!({
            "model": model,
            "temperature": 0,
            "messages": [
                { "role": "system", "content": self.system_text },
                { "role": "user", "content": content },
            ],
        })
    }
}

pub fn build_prompt(questions: &[String], view: Option<View>) -> Result<PromptPayload, VlmError> {
    if questions.is_empty() {
        return Err(VlmError::EmptyQuestions);
    }
    Ok(PromptPayload {
        system_text: SYSTEM_PROMPT.to_string(),
        questions: questions.to_vec(),
        view,
    })
}

/// Parses a `yes;no;skip` style reply. Tokens are trimmed and matched
/// case-insensitively; the count must equal `expected`.
pub fn parse_answers(text: &str, expected: usize) -> Result<Vec<Answer>, VlmError> {
    let malformed = |reason: String| VlmError::Malformed {
        reason,
        raw: text.to_string(),
    };
    let mut out = Vec::with_capacity(expected);
    for token in text.trim().split(';') {
        let a = token
            .parse::<Answer>()
            .map_err(|_| malformed(format!("unrecognized token `{}`", token.trim())))?;
        out.push(a);
    }
    if out.len() != expected {
        return Err(malformed(format!(
            "expected {expected} answers, got {}",
            out.len()
        )));
    }
    Ok(out)
}

pub fn render_answers(answers: &[Answer]) -> String {
    answers
        .iter()
        .map(|a| a.as_str())
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token. `None`
    /// sends no authorization header (local servers).
    pub api_key_env: Option<String>,
    pub timeout_ms: u64,
    /// Extra attempts after the first on transient failures.
    pub retries: u32,
    pub backoff_ms: u64,
    /// Minimum spacing between requests from all clones of one client.
    pub min_interval_ms: u64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4-turbo".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            timeout_ms: 60_000,
            retries: 3,
            backoff_ms: 500,
            min_interval_ms: 0,
        }
    }
}

/// Blocking client. Clones share the connection pool and the rate limiter.
#[derive(Clone)]
pub struct VlmClient {
    config: ClientConfig,
    http: reqwest::blocking::Client,
    last_request: Arc<Mutex<Option<Instant>>>,
}

impl std::fmt::Debug for VlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VlmClient")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl VlmClient {
    pub fn new(config: ClientConfig) -> Result<Self, VlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| VlmError::Transport(e.to_string()))?;
        Ok(VlmClient {
            config,
            http,
            last_request: Arc::new(Mutex::new(None)),
        })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    /// Sends one query round and parses the reply. Transport errors, 429 and
    /// 5xx responses are retried with exponential backoff; authentication
    /// failures and malformed replies are not.
    pub fn query(&self, payload: &PromptPayload) -> Result<Vec<Answer>, VlmError> {
        let token = match &self.config.api_key_env {
            Some(var) => {
                Some(std::env::var(var).map_err(|_| VlmError::MissingCredential(var.clone()))?)
            }
            None => None,
        };
        let body = payload.request_body(&self.config.model);
        log::debug!("vlm request to {}: {}", self.config.endpoint, redact(&body));

        let mut attempt = 0;
        loop {
            self.pace();
            let result = self.send_once(&body, token.as_deref(), payload.questions.len());
            match result {
                Err(e) if e.transient() && attempt < self.config.retries => {
                    let wait = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!(
                        "vlm attempt {} failed ({e}); retrying in {wait} ms",
                        attempt + 1
                    );
                    thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn pace(&self) {
        if self.config.min_interval_ms == 0 {
            return;
        }
        let gap = Duration::from_millis(self.config.min_interval_ms);
        let mut last = self.last_request.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(prev) = *last {
            let since = prev.elapsed();
            if since < gap {
                thread::sleep(gap - since);
            }
        }
        *last = Some(Instant::now());
    }

    fn send_once(
        &self,
        body: &Value,
        token: Option<&str>,
        n: usize,
    ) -> Result<Vec<Answer>, VlmError> {
        let mut req = self.http.post(&self.config.endpoint).json(body);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| VlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .text()
            .map_err(|e| VlmError::Transport(e.to_string()))?;
        log::debug!("vlm response {status}: {}", truncate(&text, 512));
        match status {
            401 | 403 => return Err(VlmError::Auth(status)),
            200..=299 => {}
            _ => return Err(VlmError::Status { status }),
        }
        let content = extract_content(&text)?;
        parse_answers(&content, n)
    }
}

fn extract_content(raw: &str) -> Result<String, VlmError> {
    let malformed = |reason: &str| VlmError::Malformed {
        reason: reason.into(),
        raw: raw.into(),
    };
    let v: Value = serde_json::from_str(raw).map_err(|_| malformed("response is not JSON"))?;
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        // Some servers return content as a list of typed parts.
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err(malformed("no choices[0].message.content")),
    }
}

fn redact(body: &Value) -> String {
    let mut b = body.clone();
    if let Some(msgs) = b["messages"].as_array_mut() {
        for m in msgs {
            if let Some(parts) = m["content"].as_array_mut() {
                for p in parts {
                    if let Some(url) = p["image_url"]["url"].as_str() {
                        p["image_url"]["url"] = Value::String(format!("<{} bytes>", url.len()));
                    }
                }
            }
        }
    }
    b.to_string()
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Lists the vision-class atoms that hold in the world, one per line.
pub fn scene_digest(world: &WorldState, visibility: &Visibility) -> String {
    world
        .truth
        .iter()
        .filter(|a| visibility.classify(&a.predicate) == PredicateClass::Vision)
        .map(|a| a.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Produces the view sent with a query round.
pub type ViewSource = Box<dyn FnMut(&WorldState) -> Option<View> + Send>;

/// Answers monitor queries through a live endpoint. Any failure left after
/// retries turns the whole batch into Skip, which leaves the belief alone.
pub struct VlmAnswerer {
    client: VlmClient,
    view: ViewSource,
    failures: usize,
}

impl VlmAnswerer {
    pub fn new(client: VlmClient, view: ViewSource) -> Self {
        VlmAnswerer {
            client,
            view,
            failures: 0,
        }
    }

    /// Sends a labeled symbolic digest of the world instead of an image.
    pub fn with_scene_digest(client: VlmClient, visibility: Visibility) -> Self {
        let view: ViewSource =
            Box::new(move |w| Some(View::SceneDigest(scene_digest(w, &visibility))));
        Self::new(client, view)
    }

    /// Number of batches that fell back to Skip.
    pub fn failures(&self) -> usize {
        self.failures
    }
}

impl QuestionAnswerer for VlmAnswerer {
    fn answer_batch(&mut self, world: &WorldState, queries: &[Query]) -> Vec<Answer> {
        if queries.is_empty() {
            return Vec::new();
        }
        let questions: Vec<String> = queries.iter().map(|q| q.text.clone()).collect();
        let result =
            build_prompt(&questions, (self.view)(world)).and_then(|p| self.client.query(&p));
        match result {
            Ok(a) => a,
            Err(e) => {
                log::warn!(
                    "vlm batch of {} questions answered as skip: {e}",
                    queries.len()
                );
                self.failures += 1;
                vec![Answer::Skip; queries.len()]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_view_is_labeled() {
        let p = build_prompt(
            &["Is cup open?".into()],
            Some(View::SceneDigest("inview(a, b)".into())),
        )
        .unwrap();
        let body = p.request_body("m");
        let text = body["messages"][1]["content"][1]["text"].as_str().unwrap();
        assert!(text.starts_with(DIGEST_LABEL));
    }

    #[test]
    fn image_is_sent_as_data_url_and_redacted_in_logs() {
        let p = build_prompt(&["q".into()], Some(View::Image(Image::png(vec![1, 2, 3])))).unwrap();
        let body = p.request_body("m");
        assert_eq!(
            body["messages"][1]["content"][1]["image_url"]["url"],
            "data:image/png;base64,AQID"
        );
        assert!(!redact(&body).contains("AQID"));
    }

    #[test]
    fn content_parts_are_concatenated() {
        let raw = r#"{"choices":[{"message":{"content":[{"type":"text","text":"yes;"},{"type":"text","text":"no"}]}}]}"#;
        assert_eq!(extract_content(raw).unwrap(), "yes;no");
        assert!(matches!(
            extract_content("{}"),
            Err(VlmError::Malformed { .. })
        ));
    }

    #[test]
    fn missing_credential_is_reported_without_a_request() {
        let cfg = ClientConfig {
            endpoint: "http://127.0.0.1:9/unused".into(),
            api_key_env: Some("GROUNDPLAN_TEST_UNSET_KEY".into()),
            ..ClientConfig::default()
        };
        let c = VlmClient::new(cfg).unwrap();
        let p = build_prompt(&["q".into()], None).unwrap();
        assert!(matches!(c.query(&p), Err(VlmError::MissingCredential(_))));
    }
}
