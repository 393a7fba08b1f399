//! Conversion between narrative text and graphs.
//!
//! [`MockCodec`] reads and writes a line-oriented markup:
//!
//! ```text
//! persona: persona-01
//! node f1 F: Graduated from [Harvard University]{ORGANIZATION}
//! node s1 S: Harvard University
//! quote s1: It was the proudest day of my life
//! edge f1 FS ORGANIZATION s1
//! ```
//!
//! Inside labels and quotes, `\\`, `\[`, `\]`, `\{`, `\}` and `\n` are escapes.
//! [`RemoteCodec`] sends chat-completion requests to an external service.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use synonymix_core::graph::{load_persona, Edge, EdgeKind, EntitySpan, Node, NodeKind, PersonaGraph};
use synonymix_core::sampler::{franken_json, render_narrative, FrankenGraph};

use crate::config::CodecConfig;

pub const ENDPOINT_VAR: &str = "SYNONYMIX_CODEC_ENDPOINT";
pub const API_KEY_VAR: &str = "SYNONYMIX_CODEC_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("line {line}: {message}")]
    Markup { line: usize, message: String },
    #[error("extracted graph is invalid: {0}")]
    Invalid(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("service rejected the request with HTTP {0}")]
    Rejected(u16),
    #[error("reply does not match the expected schema: {0}")]
    SchemaMismatch(String),
    #[error("remote codec not configured: set {ENDPOINT_VAR}")]
    NotConfigured,
}

pub trait Codec {
    fn extract(&self, persona_id: &str, narrative: &str) -> Result<PersonaGraph, CodecError>;
    fn reconstruct(&self, graph: &FrankenGraph) -> Result<String, CodecError>;
}

/// Deterministic codec over the markup format.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockCodec;

impl Codec for MockCodec {
    fn extract(&self, persona_id: &str, narrative: &str) -> Result<PersonaGraph, CodecError> {
        parse_markup(persona_id, narrative)
    }

    fn reconstruct(&self, graph: &FrankenGraph) -> Result<String, CodecError> {
        Ok(render_narrative(graph))
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' | '[' | ']' | '{' | '}' => {
                out.push('\\');
                out.push(c);
            }
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out
}

/// Writes a persona graph as markup. Spans become `[text]{ROLE}`.
pub fn encode_markup(g: &PersonaGraph) -> String {
    let mut out = format!("persona: {}\n", g.persona_id);
    for n in g.nodes.values() {
        let chars: Vec<char> = n.label.chars().collect();
        let mut spans = n.entity_spans.clone();
        spans.sort_by_key(|s| s.start);
        let mut label = String::new();
        let mut cursor = 0;
        for s in &spans {
            label.push_str(&escape(&chars[cursor..s.start].iter().collect::<String>()));
            label.push_str(&format!("[{}]{{{}}}", escape(&s.text), s.role));
            cursor = s.end;
        }
        label.push_str(&escape(&chars[cursor..].iter().collect::<String>()));
        out.push_str(&format!("node {} {}: {}\n", n.id, n.kind.code(), label));
        for q in &n.quotes {
            out.push_str(&format!("quote {}: {}\n", n.id, escape(q)));
        }
    }
    for e in &g.edges {
        out.push_str(&format!("edge {} {} {} {}\n", e.src, e.kind.code(), e.label, e.dst));
    }
    out
}

fn unescape_into(out: &mut String, c: char) {
    out.push(if c == 'n' { '\n' } else { c });
}

/// Parses a marked-up label into plain text and spans.
fn parse_label(raw: &str) -> Result<(String, Vec<EntitySpan>), String> {
    let mut label = String::new();
    let mut spans = Vec::new();
    let mut chars = raw.chars();
    let mut len = 0usize;
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                let next = chars.next().ok_or("dangling escape")?;
                unescape_into(&mut label, next);
                len += 1;
            }
            '[' => {
                let start = len;
                let mut text = String::new();
                loop {
                    match chars.next().ok_or("unterminated [")? {
                        '\\' => unescape_into(&mut text, chars.next().ok_or("dangling escape")?),
                        ']' => break,
                        '[' => return Err("nested [".into()),
                        c => text.push(c),
                    }
                }
                if chars.next() != Some('{') {
                    return Err("span must be followed by {ROLE}".into());
                }
                let role: String = chars.by_ref().take_while(|c| *c != '}').collect();
                len += text.chars().count();
                label.push_str(&text);
                spans.push(EntitySpan::new(start, len, role, text));
            }
            ']' | '{' | '}' => return Err(format!("unescaped {c:?}")),
            c => {
                label.push(c);
                len += 1;
            }
        }
    }
    Ok((label, spans))
}

fn parse_text(raw: &str) -> Result<String, String> {
    let mut out = String::new();
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            unescape_into(&mut out, chars.next().ok_or("dangling escape")?);
        } else {
            out.push(c);
        }
    }
    Ok(out)
}

/// Parses markup into a validated persona graph. A `persona:` line overrides `persona_id`.
pub fn parse_markup(persona_id: &str, text: &str) -> Result<PersonaGraph, CodecError> {
    let mut g = PersonaGraph::new(persona_id);
    let mut quotes: Vec<(String, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| CodecError::Markup { line: i + 1, message };
        let line = line.trim_end();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (head, rest) = line.split_once(':').map(|(h, r)| (h, r.strip_prefix(' ').unwrap_or(r))).unwrap_or((line, ""));
        let words: Vec<&str> = head.split_whitespace().collect();
        match words.as_slice() {
            ["persona"] => {
                if !g.nodes.is_empty() {
                    return Err(err("persona line must come first".into()));
                }
                g = PersonaGraph::new(rest.trim());
            }
            ["node", id, kind] => {
                let kind = NodeKind::from_code(kind).ok_or_else(|| err(format!("unknown node kind {kind}")))?;
                let (label, spans) = parse_label(rest).map_err(err)?;
                let mut node = Node::new(*id, kind, label);
                node.entity_spans = spans;
                g.add_node(node);
            }
            ["quote", id] => quotes.push((id.to_string(), parse_text(rest).map_err(err)?)),
            _ => match line.split_whitespace().collect::<Vec<_>>().as_slice() {
                ["edge", src, kind, label, dst] => {
                    let kind = EdgeKind::from_code(kind).ok_or_else(|| err(format!("unknown edge kind {kind}")))?;
                    g.add_edge(Edge::new(*src, *dst, kind, *label));
                }
                _ => return Err(err(format!("unrecognized line {line:?}"))),
            },
        }
    }
    for (id, q) in quotes {
        let node = g
            .nodes
            .get_mut(&id.as_str().into())
            .ok_or_else(|| CodecError::Invalid(format!("quote for unknown node {id}")))?;
        node.quotes.push(q);
    }
    g.canonicalize();
    let report = g.validate();
    if report.is_valid() {
        Ok(g)
    } else {
        Err(CodecError::Invalid(report.to_string()))
    }
}

/// Chat-completion client. Endpoint and key come from the environment.
#[derive(Debug, Clone)]
pub struct RemoteCodec {
    endpoint: String,
    api_key: Option<String>,
    model: String,
    max_retries: u32,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage>,
}

#[derive(Serialize, Deserialize)]
struct ChatMessage {
    role: String,
    content: String,
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

const EXTRACT_INSTRUCTIONS: &str =
    "Extract a persona graph from the narrative. Reply with JSON only: {persona_id, nodes, edges}.";
const RECONSTRUCT_INSTRUCTIONS: &str = "Write a first-person life-story narrative from this graph.";

impl RemoteCodec {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, config: &CodecConfig) -> Result<Self, CodecError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| CodecError::Transport(e.to_string()))?;
        Ok(RemoteCodec {
            endpoint: endpoint.into(),
            api_key,
            model: config.model.clone(),
            max_retries: config.max_retries,
            client,
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Result<Self, CodecError> {
        self.client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| CodecError::Transport(e.to_string()))?;
        Ok(self)
    }

    pub fn from_env(config: &CodecConfig) -> Result<Self, CodecError> {
        let endpoint = std::env::var(ENDPOINT_VAR).map_err(|_| CodecError::NotConfigured)?;
        RemoteCodec::new(endpoint, std::env::var(API_KEY_VAR).ok(), config)
    }

    /// Sends one exchange, retrying transport failures, timeouts and non-4xx error replies.
    fn complete(&self, instructions: &str, content: String) -> Result<String, CodecError> {
        let body = ChatRequest {
            model: &self.model,
            messages: vec![
                ChatMessage { role: "system".into(), content: instructions.into() },
                ChatMessage { role: "user".into(), content },
            ],
        };
        let mut attempt = 0;
        loop {
            match self.send(&body) {
                Err(CodecError::Transport(_) | CodecError::Timeout) if attempt < self.max_retries => attempt += 1,
                other => return other,
            }
        }
    }

    fn send(&self, body: &ChatRequest<'_>) -> Result<String, CodecError> {
        let mut req = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let classify = |e: reqwest::Error| if e.is_timeout() { CodecError::Timeout } else { CodecError::Transport(e.to_string()) };
        let resp = req.send().map_err(classify)?;
        let status = resp.status();
        if status.is_client_error() {
            return Err(CodecError::Rejected(status.as_u16()));
        }
        if !status.is_success() {
            return Err(CodecError::Transport(format!("HTTP {status}")));
        }
        let bytes = resp.bytes().map_err(classify)?;
        let reply: ChatReply =
            serde_json::from_slice(&bytes).map_err(|e| CodecError::SchemaMismatch(e.to_string()))?;
        let choice = reply.choices.into_iter().next().ok_or_else(|| CodecError::SchemaMismatch("no choices".into()))?;
        if choice.message.content.trim().is_empty() {
            return Err(CodecError::SchemaMismatch("empty content".into()));
        }
        Ok(choice.message.content)
    }
}

impl Codec for RemoteCodec {
    fn extract(&self, persona_id: &str, narrative: &str) -> Result<PersonaGraph, CodecError> {
        let content = json!({ "persona_id": persona_id, "narrative": narrative }).to_string();
        let reply = self.complete(EXTRACT_INSTRUCTIONS, content)?;
        load_persona(reply.as_bytes()).map_err(|e| CodecError::SchemaMismatch(e.to_string()))
    }

    fn reconstruct(&self, graph: &FrankenGraph) -> Result<String, CodecError> {
        self.complete(RECONSTRUCT_INSTRUCTIONS, franken_json(graph).to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use synonymix_core::fixture::{gen_fixture, FixtureSpec};
    use synonymix_core::graph::Role;

    #[test]
    fn markup_round_trip_on_fixture() {
        for g in gen_fixture(&FixtureSpec::new(3, 6, 0.5, 2)).unwrap() {
            let text = encode_markup(&g);
            assert_eq!(parse_markup("ignored", &text).unwrap(), g);
        }
    }

    #[test]
    fn escapes_and_quotes() {
        let mut g = PersonaGraph::new("p");
        let label = "Paid {rent} at [Acme] Corp\\East";
        let span = EntitySpan::locate(label, "Acme", Role::Organization, 0).unwrap();
        g.add_node(Node::new("f", NodeKind::Factual, label).with_span(span))
            .add_node(Node::new("s", NodeKind::Subject, "Acme").with_quote("line one\nline [two]"))
            .add_edge(Edge::role("f", "s", Role::Organization));
        g.canonicalize();
        let text = encode_markup(&g);
        assert_eq!(parse_markup("p", &text).unwrap(), g);
    }

    #[test]
    fn markup_errors() {
        assert!(matches!(parse_markup("p", "node a X: hi\n"), Err(CodecError::Markup { line: 1, .. })));
        assert!(matches!(parse_markup("p", "node a F: [open\n"), Err(CodecError::Markup { .. })));
        assert!(matches!(parse_markup("p", "garbage\n"), Err(CodecError::Markup { .. })));
        let bad_edge = "node a I: x\nnode b I: y\nedge a FF precedes b\n";
        assert!(matches!(parse_markup("p", bad_edge), Err(CodecError::Invalid(_))));
    }
}
