use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{parse_label, Judge, JudgeError, JudgeRequest, JudgeScores, JudgeVerdict, Judgment};
use crate::label::RelevanceLabel;

/// Version tag of [`PROMPT_TEMPLATE`]; bump whenever the text changes so
/// cached verdicts are invalidated.
pub const PROMPT_TEMPLATE_VERSION: &str = "relevance-prompt-v1";

/// System instruction sent to chat-completions endpoints. The rendered QIP
/// text is sent as the user message.
pub const PROMPT_TEMPLATE: &str =
    "You judge how relevant a product is to an online shopping search query.\n\
Use this scale:\n\
2 = Relevant: the item exactly matches what the query asks for.\n\
1 = Related: the item is close to the query intent but not an exact match.\n\
0 = Irrelevant: the item does not match the query intent.\n\
The query and the item attributes follow, one per line.\n\
Answer with exactly one digit: 0, 1 or 2.";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransportError {
    /// Connection failures, timeouts, HTTP 429 and 5xx are retryable.
    pub retryable: bool,
    pub status: Option<u16>,
    pub message: String,
}

impl TransportError {
    pub fn from_status(status: u16, body: &str) -> Self {
        TransportError {
            retryable: status == 429 || (500..600).contains(&status),
            status: Some(status),
            message: format!(
                "HTTP {status}: {}",
                body.chars().take(200).collect::<String>()
            ),
        }
    }
}

/// Posts a JSON body to `{endpoint}{path}` and returns the JSON response.
pub trait Transport: Send + Sync {
    fn post_json(&self, path: &str, body: &Value) -> Result<Value, TransportError>;
}

/// Blocking HTTP transport with bearer-token auth.
pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    token: Option<String>,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, token: Option<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        HttpTransport {
            agent: ureq::Agent::new_with_config(config),
            endpoint: endpoint.into().trim_end_matches('/').to_owned(),
            token,
        }
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, path: &str, body: &Value) -> Result<Value, TransportError> {
        let url = format!("{}{}", self.endpoint, path);
        let mut request = self.agent.post(&url);
        if let Some(token) = &self.token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(|e| TransportError {
            retryable: true,
            status: None,
            message: e.to_string(),
        })?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError {
                retryable: true,
                status: Some(status),
                message: e.to_string(),
            })?;
        if !(200..300).contains(&status) {
            return Err(TransportError::from_status(status, &text));
        }
        serde_json::from_str(&text).map_err(|e| TransportError {
            retryable: false,
            status: Some(status),
            message: format!("response is not JSON: {e}"),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RemoteProtocol {
    /// `POST {endpoint}/judge` with `{"query", "item_text", "template_version"}`;
    /// response `{"label": 0|1|2, "scores": [p0, p1, p2]?}`.
    Native,
    /// `POST {endpoint}/chat/completions` with [`PROMPT_TEMPLATE`] as the
    /// system message; the assistant content goes through [`parse_label`].
    ChatCompletions { model: String },
}

pub struct RemoteJudge {
    id: String,
    protocol: RemoteProtocol,
    transport: Arc<dyn Transport>,
}

impl RemoteJudge {
    pub fn new(
        id: impl Into<String>,
        protocol: RemoteProtocol,
        transport: Arc<dyn Transport>,
    ) -> Self {
        RemoteJudge {
            id: id.into(),
            protocol,
            transport,
        }
    }

    fn call(
        &self,
        request: &JudgeRequest,
    ) -> Result<(RelevanceLabel, Option<JudgeScores>, Option<String>), JudgeError> {
        let transport_err = |e: TransportError| JudgeError::Transport {
            retryable: e.retryable,
            attempts: 1,
            message: e.message,
        };
        match &self.protocol {
            RemoteProtocol::Native => {
                let body = json!({
                    "query": request.query,
                    "item_text": request.item_text(),
                    "template_version": PROMPT_TEMPLATE_VERSION,
                });
                let response = self
                    .transport
                    .post_json("/judge", &body)
                    .map_err(transport_err)?;
                parse_native_response(&response)
            }
            RemoteProtocol::ChatCompletions { model } => {
                let body = json!({
                    "model": model,
                    "temperature": 0,
                    "messages": [
                        {"role": "system", "content": PROMPT_TEMPLATE},
                        {"role": "user", "content": request.rendered},
                    ],
                });
                let response = self
                    .transport
                    .post_json("/chat/completions", &body)
                    .map_err(transport_err)?;
                let content = response
                    .pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .ok_or_else(|| {
                        JudgeError::InvalidResponse("missing choices[0].message.content".into())
                    })?;
                let label = parse_label(content)?;
                Ok((label, None, Some(content.to_owned())))
            }
        }
    }
}

fn parse_native_response(
    response: &Value,
) -> Result<(RelevanceLabel, Option<JudgeScores>, Option<String>), JudgeError> {
    let label = response
        .get("label")
        .and_then(Value::as_i64)
        .ok_or_else(|| {
            JudgeError::InvalidResponse(format!("missing integer label in {response}"))
        })?;
    let label =
        RelevanceLabel::new(label).map_err(|e| JudgeError::InvalidResponse(e.to_string()))?;
    let scores = match response.get("scores") {
        None | Some(Value::Null) => None,
        Some(value) => {
            let p: [f64; 3] = serde_json::from_value(value.clone())
                .map_err(|e| JudgeError::InvalidResponse(format!("scores: {e}")))?;
            let scores = JudgeScores::new(p).map_err(JudgeError::InvalidResponse)?;
            if scores.argmax() != label {
                return Err(JudgeError::InvalidResponse(format!(
                    "label {label} disagrees with scores {p:?}"
                )));
            }
            Some(scores)
        }
    };
    Ok((label, scores, None))
}

impl Judge for RemoteJudge {
    fn id(&self) -> &str {
        &self.id
    }

    fn template_version(&self) -> &str {
        PROMPT_TEMPLATE_VERSION
    }

    fn judge(&self, request: &JudgeRequest) -> Result<Judgment, JudgeError> {
        let started = Instant::now();
        let (label, scores, raw) = self.call(request)?;
        Ok(Judgment {
            verdict: JudgeVerdict {
                query_id: request.query_id.clone(),
                item_id: request.item_id.clone(),
                judge_id: self.id.clone(),
                label,
                scores,
                raw,
                latency_ms: started.elapsed().as_millis() as u64,
            },
            cached: false,
        })
    }
}
