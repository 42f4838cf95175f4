//! Scoring oracles, LLM backends, and chat endpoints.
//!
//! Every trainable mechanism in this crate talks to its model through one of
//! the traits here, so mocks make the whole pipeline runnable offline while
//! the HTTP variants preserve the same wire contracts for real models:
//!
//! * scoring: `{"text": ...}` -> `{"logits": [l0, l1]}`
//! * likelihood: `{"prompt": ..., "target": ...}` -> `{"nll": ...}`
//! * chat: `{"messages": [...], "temperature": ..., "max_tokens": ...}` ->
//!   `{"choices": [{"message": {"content": ...}}]}`

use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{edge_homophily, LabelAssignment, NodeId};
use crate::serialize::{identity_ordering, parse, parse_detailed, serialize, sniff_kind};

/// Name of the environment variable whose value is injected as a bearer
/// token on HTTP backends.
pub const BACKEND_TOKEN_ENV: &str = "GRAPHSOS_BACKEND_TOKEN";

/// A subgraph quality score: the probability assigned to label 1, plus the
/// raw two logits when the oracle exposes them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreResult {
    pub p1: f64,
    pub logits: Option<(f64, f64)>,
}

/// `p1 = e^{l1} / (e^{l0} + e^{l1})`, stabilized by max-subtraction.
pub fn score_from_logits(l0: f64, l1: f64) -> ScoreResult {
    let m = l0.max(l1);
    let e0 = (l0 - m).exp();
    let e1 = (l1 - m).exp();
    ScoreResult { p1: e1 / (e0 + e1), logits: Some((l0, l1)) }
}

/// Scores a serialized subgraph with two first-token logits.
pub trait ScoringOracle: Send + Sync {
    fn score(&self, serialized_text: &str) -> Result<ScoreResult>;
}

/// Built-in oracle: parses the serialized subgraph, looks endpoint labels up
/// in its label assignment, and maps edge homophily `h` (clamped to
/// `[0.01, 0.99]`) through logits `(0, logit(h))`, so `p1` equals the
/// clamped homophily.
#[derive(Debug, Clone)]
pub struct HomophilyOracle {
    labels: LabelAssignment,
}

impl HomophilyOracle {
    pub fn new(labels: LabelAssignment) -> Self {
        Self { labels }
    }
}

impl ScoringOracle for HomophilyOracle {
    fn score(&self, serialized_text: &str) -> Result<ScoreResult> {
        let kind = sniff_kind(serialized_text)?;
        let graph = parse(serialized_text, kind)?;
        let h = edge_homophily(&graph, &self.labels)?;
        let clamped = h.clamp(0.01, 0.99);
        let l1 = (clamped / (1.0 - clamped)).ln();
        Ok(score_from_logits(0.0, l1))
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    logits: [f64; 2],
}

/// Remote scoring oracle speaking the `{"text"} -> {"logits"}` contract.
pub struct HttpOracle {
    http: HttpClient,
}

impl HttpOracle {
    pub fn new(url: impl Into<String>) -> Self {
        Self { http: HttpClient::new(url) }
    }
}

impl ScoringOracle for HttpOracle {
    fn score(&self, serialized_text: &str) -> Result<ScoreResult> {
        let body = serde_json::to_string(&ScoreRequest { text: serialized_text })?;
        let response = self.http.post_json(&body)?;
        let parsed: ScoreResponse = serde_json::from_str(&response)?;
        Ok(score_from_logits(parsed.logits[0], parsed.logits[1]))
    }
}

/// An answering/scoring language model.
pub trait LlmBackend: Send + Sync {
    /// Generate an answer for a prompt.
    fn complete(&self, prompt: &str) -> Result<String>;
    /// Negative log-likelihood of `target` given `prompt` under the frozen
    /// model.
    fn score_nll(&self, prompt: &str, target: &str) -> Result<f64>;
}

/// Deterministic mock that actually solves degree questions by parsing the
/// serialized graph out of the prompt. With `identity_only` set it answers
/// correctly only when the graph is rendered in its identity order,
/// reproducing an order-sensitive model.
#[derive(Debug, Clone, Copy)]
pub struct SolverMock {
    pub identity_only: bool,
}

impl SolverMock {
    pub fn order_insensitive() -> Self {
        Self { identity_only: false }
    }

    pub fn identity_only() -> Self {
        Self { identity_only: true }
    }
}

/// Find the serialized graph line inside a prompt.
pub fn serialized_line(prompt: &str) -> Option<&str> {
    prompt.lines().find(|line| {
        line.starts_with("Feature List: [")
            || line.starts_with("Edge List: [")
            || line.starts_with("Triple List: [")
    })
}

fn question_line(prompt: &str) -> Option<&str> {
    prompt
        .lines()
        .find_map(|line| line.strip_prefix("Question: "))
}

/// True when `text` is the identity rendering of the graph it describes,
/// i.e. re-serializing the parsed graph under the identity ordering
/// reproduces the exact bytes.
pub fn is_identity_rendering(text: &str) -> Result<bool> {
    let kind = sniff_kind(text)?;
    let graph = parse(text, kind)?;
    let canonical = serialize(&graph, &identity_ordering(&graph), kind)?;
    Ok(canonical.text == text)
}

impl LlmBackend for SolverMock {
    fn complete(&self, prompt: &str) -> Result<String> {
        let Some(line) = serialized_line(prompt) else {
            return Ok("unknown".into());
        };
        if self.identity_only && !is_identity_rendering(line).unwrap_or(false) {
            return Ok("unknown".into());
        }
        let Some(question) = question_line(prompt) else {
            return Ok("unknown".into());
        };
        let Some(target) = question
            .strip_prefix("What is the degree of node ")
            .and_then(|rest| rest.trim_end_matches('?').parse::<NodeId>().ok())
        else {
            return Ok("unknown".into());
        };
        let kind = sniff_kind(line)?;
        let graph = parse(line, kind)?;
        if !graph.contains_node(target) {
            return Ok("unknown".into());
        }
        let degree = graph.neighbors(target).len();
        Ok(format!("The degree of node {target} is {degree}."))
    }

    fn score_nll(&self, _prompt: &str, _target: &str) -> Result<f64> {
        Err(Error::Backend("solver mock does not score likelihoods".into()))
    }
}

/// Normalized Kendall tau distance of a sequence from its sorted order:
/// discordant pairs over total pairs, 0 for length < 2.
pub fn normalized_kendall_tau<T: Ord>(sequence: &[T]) -> f64 {
    let n = sequence.len();
    if n < 2 {
        return 0.0;
    }
    let mut inversions = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if sequence[i] > sequence[j] {
                inversions += 1;
            }
        }
    }
    inversions as f64 / (n * (n - 1) / 2) as f64
}

/// Distance of a rendering's node permutation from the identity order
/// (triples fall back to the triple sequence itself).
pub fn order_distance(serialized_text: &str) -> Result<f64> {
    let kind = sniff_kind(serialized_text)?;
    let parsed = parse_detailed(serialized_text, kind)?;
    if parsed.triple_order.is_empty() {
        Ok(normalized_kendall_tau(&parsed.node_order))
    } else {
        Ok(normalized_kendall_tau(&parsed.triple_order))
    }
}

/// Scoring mock whose NLL prefers orderings close to identity:
/// `nll = alpha * kendall_tau_distance + beta`.
#[derive(Debug, Clone, Copy)]
pub struct KtauMock {
    pub alpha: f64,
    pub beta: f64,
}

impl KtauMock {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }
}

impl LlmBackend for KtauMock {
    fn complete(&self, _prompt: &str) -> Result<String> {
        Err(Error::Backend("ktau mock does not generate text".into()))
    }

    fn score_nll(&self, prompt: &str, _target: &str) -> Result<f64> {
        let line = serialized_line(prompt)
            .ok_or_else(|| Error::Backend("prompt contains no serialized graph".into()))?;
        Ok(self.alpha * order_distance(line)? + self.beta)
    }
}

/// Fixed-response mock.
#[derive(Debug, Clone)]
pub struct ConstMock {
    pub text: String,
}

impl LlmBackend for ConstMock {
    fn complete(&self, _prompt: &str) -> Result<String> {
        Ok(self.text.clone())
    }

    fn score_nll(&self, _prompt: &str, _target: &str) -> Result<f64> {
        Err(Error::Backend("const mock does not score likelihoods".into()))
    }
}

#[derive(Serialize)]
struct NllRequest<'a> {
    prompt: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct NllResponse {
    nll: f64,
}

/// Remote LLM backend: `{"prompt", "target"} -> {"nll"}` for scoring, the
/// chat-completion contract for answering.
pub struct HttpLlm {
    http: HttpClient,
}

impl HttpLlm {
    pub fn new(url: impl Into<String>) -> Self {
        Self { http: HttpClient::new(url) }
    }
}

impl LlmBackend for HttpLlm {
    fn complete(&self, prompt: &str) -> Result<String> {
        let body = serde_json::to_string(&ChatRequest::user(prompt, 0.0, 512))?;
        extract_chat_content(&self.http.post_json(&body)?)
    }

    fn score_nll(&self, prompt: &str, target: &str) -> Result<f64> {
        let body = serde_json::to_string(&NllRequest { prompt, target })?;
        let response = self.http.post_json(&body)?;
        let parsed: NllResponse = serde_json::from_str(&response)?;
        Ok(parsed.nll)
    }
}

#[derive(Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Chat-completion request body.
#[derive(Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn user(content: &str, temperature: f64, max_tokens: u32) -> Self {
        Self {
            messages: vec![ChatMessage { role: "user".into(), content: content.into() }],
            temperature,
            max_tokens,
        }
    }
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatContent,
}

#[derive(Deserialize)]
struct ChatContent {
    content: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

/// Pull the first choice's message content out of a chat-completion reply.
pub fn extract_chat_content(response_body: &str) -> Result<String> {
    let parsed: ChatResponse = serde_json::from_str(response_body)?;
    parsed
        .choices
        .into_iter()
        .next()
        .map(|c| c.message.content)
        .ok_or_else(|| Error::Backend("chat response has no choices".into()))
}

/// Transport for chat-completion requests: takes the serialized request
/// body, returns the raw response body.
pub trait ChatBackend: Send + Sync {
    fn send(&self, body_json: &str) -> Result<String>;
}

/// Chat endpoint over HTTP.
pub struct HttpChat {
    http: HttpClient,
}

impl HttpChat {
    pub fn new(url: impl Into<String>) -> Self {
        Self { http: HttpClient::new(url) }
    }

    pub fn with_retry_base(url: impl Into<String>, base: Duration) -> Self {
        Self { http: HttpClient::new(url).retry_base(base) }
    }
}

impl ChatBackend for HttpChat {
    fn send(&self, body_json: &str) -> Result<String> {
        self.http.post_json(body_json)
    }
}

/// In-process chat mock: echoes a well-formed two-step answer derived from
/// the request and records every request body it sees.
pub struct MockChat {
    /// When set, every response omits the reasoning marker (for exercising
    /// validation paths).
    pub malformed: bool,
    captured: Mutex<Vec<String>>,
}

impl MockChat {
    pub fn new() -> Self {
        Self { malformed: false, captured: Mutex::new(Vec::new()) }
    }

    pub fn malformed() -> Self {
        Self { malformed: true, captured: Mutex::new(Vec::new()) }
    }

    /// Request bodies captured so far.
    pub fn requests(&self) -> Vec<String> {
        self.captured.lock().expect("mock lock").clone()
    }
}

impl Default for MockChat {
    fn default() -> Self {
        Self::new()
    }
}

impl ChatBackend for MockChat {
    fn send(&self, body_json: &str) -> Result<String> {
        self.captured.lock().expect("mock lock").push(body_json.to_string());
        let request: ChatRequest = serde_json::from_str(body_json)?;
        let prompt = request
            .messages
            .first()
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        let gist: String = prompt.chars().take(48).collect();
        let content = if self.malformed {
            format!("Analysis: {gist}\nAnswer: unknown")
        } else {
            format!(
                "Analysis: the graph lists its nodes and edges ({gist}...).\n\
                 Reasoning: reading the listed structure leads to the answer.\n\
                 Answer: see reasoning"
            )
        };
        let response = serde_json::json!({
            "choices": [{ "message": { "role": "assistant", "content": content } }]
        });
        Ok(response.to_string())
    }
}

/// Parse a `mock:<spec>` or `http:<url>` backend description.
///
/// Mock specs: `mock:solver`, `mock:identity-only`, `mock:ktau:<alpha>,<beta>`,
/// `mock:const:<text>`.
pub fn parse_backend_spec(spec: &str) -> Result<Box<dyn LlmBackend>> {
    if let Some(url) = spec.strip_prefix("http:") {
        return Ok(Box::new(HttpLlm::new(restore_url(url))));
    }
    let Some(mock) = spec.strip_prefix("mock:") else {
        return Err(Error::Config(format!(
            "backend spec {spec:?} must start with mock: or http:"
        )));
    };
    match mock {
        "solver" => Ok(Box::new(SolverMock::order_insensitive())),
        "identity-only" => Ok(Box::new(SolverMock::identity_only())),
        other => {
            if let Some(args) = other.strip_prefix("ktau:") {
                let (alpha, beta) = args.split_once(',').ok_or_else(|| {
                    Error::Config("mock:ktau takes <alpha>,<beta>".into())
                })?;
                let alpha: f64 = alpha
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad alpha {alpha:?}")))?;
                let beta: f64 = beta
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad beta {beta:?}")))?;
                Ok(Box::new(KtauMock::new(alpha, beta)))
            } else if let Some(text) = other.strip_prefix("const:") {
                Ok(Box::new(ConstMock { text: text.to_string() }))
            } else {
                Err(Error::Config(format!("unknown mock backend {other:?}")))
            }
        }
    }
}

/// Parse an `builtin` / `http:<url>` oracle description. The builtin
/// homophily oracle needs the label assignment of the graphs being scored.
pub fn parse_oracle_spec(
    spec: &str,
    labels: Option<LabelAssignment>,
) -> Result<Box<dyn ScoringOracle>> {
    if spec == "builtin" {
        let labels = labels.ok_or_else(|| {
            Error::Config("builtin oracle requires labeled input graphs".into())
        })?;
        Ok(Box::new(HomophilyOracle::new(labels)))
    } else if let Some(url) = spec.strip_prefix("http:") {
        Ok(Box::new(HttpOracle::new(restore_url(url))))
    } else {
        Err(Error::Config(format!(
            "oracle spec {spec:?} must be builtin or http:<url>"
        )))
    }
}

/// `http://...` survives the `http:` prefix strip; other forms (e.g. a bare
/// host) are passed through.
fn restore_url(rest: &str) -> String {
    if rest.starts_with("//") {
        format!("http:{rest}")
    } else {
        rest.to_string()
    }
}

/// Small blocking HTTP client with bounded retries, exponential backoff,
/// and the bearer token from [`BACKEND_TOKEN_ENV`].
pub struct HttpClient {
    url: String,
    token: Option<String>,
    max_attempts: u32,
    retry_base: Duration,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            token: std::env::var(BACKEND_TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            max_attempts: 3,
            retry_base: Duration::from_millis(250),
            agent: ureq::AgentBuilder::new()
                .timeout_connect(Duration::from_secs(5))
                .timeout(Duration::from_secs(60))
                .build(),
        }
    }

    pub fn retry_base(mut self, base: Duration) -> Self {
        self.retry_base = base;
        self
    }

    pub fn max_attempts(mut self, attempts: u32) -> Self {
        self.max_attempts = attempts.max(1);
        self
    }

    /// POST a JSON body; retries transport failures and 5xx responses.
    pub fn post_json(&self, body: &str) -> Result<String> {
        let mut delay = self.retry_base;
        let mut last_error = String::new();
        for attempt in 1..=self.max_attempts {
            let mut request = self
                .agent
                .post(&self.url)
                .set("content-type", "application/json");
            if let Some(token) = &self.token {
                request = request.set("authorization", &format!("Bearer {token}"));
            }
            match request.send_string(body) {
                Ok(response) => {
                    return response
                        .into_string()
                        .map_err(|e| Error::Http { message: e.to_string(), retries: attempt });
                }
                Err(ureq::Error::Status(code, response)) => {
                    let text = response.into_string().unwrap_or_default();
                    last_error = format!("status {code}: {text}");
                    if code < 500 {
                        return Err(Error::Http { message: last_error, retries: attempt });
                    }
                }
                Err(ureq::Error::Transport(t)) => {
                    last_error = t.to_string();
                }
            }
            if attempt < self.max_attempts {
                std::thread::sleep(delay);
                delay *= 2;
            }
        }
        Err(Error::Http { message: last_error, retries: self.max_attempts })
    }
}
