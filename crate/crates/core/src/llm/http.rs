//! Chat-completions over HTTP with bounded exponential-backoff retries.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ChatBackend, ChatRequest, LlmError};

fn default_timeout_secs() -> f64 {
    60.0
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

pub struct HttpBackend {
    cfg: HttpConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

enum Attempt {
    Retry(LlmError),
    Fatal(LlmError),
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Result<Self, LlmError> {
        // rejects NaN too
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(cfg.timeout_secs > 0.0) {
            return Err(LlmError::Config("timeout_secs must be positive".into()));
        }
        let api_key = std::env::var(&cfg.api_key_env)
            .map_err(|_| LlmError::MissingCredential(cfg.api_key_env.clone()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self {
            cfg,
            api_key,
            client,
        })
    }

    fn attempt(&self, req: &ChatRequest) -> Result<String, Attempt> {
        let body = json!({
            "model": req.model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let response = self
            .client
            .post(&self.cfg.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    Attempt::Retry(LlmError::Timeout(Duration::from_secs_f64(
                        self.cfg.timeout_secs,
                    )))
                } else {
                    Attempt::Retry(LlmError::MalformedResponse(format!("transport error: {e}")))
                }
            })?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| Attempt::Retry(LlmError::MalformedResponse(e.to_string())))?;
        if status >= 500 || status == 429 || status == 408 {
            return Err(Attempt::Retry(LlmError::Status { status, body: text }));
        }
        if status >= 400 {
            return Err(Attempt::Fatal(LlmError::Status { status, body: text }));
        }
        extract_content(&text).map_err(Attempt::Fatal)
    }
}

/// Pulls `choices[0].message.content` out of a completion response body.
pub(crate) fn extract_content(body: &str) -> Result<String, LlmError> {
    #[derive(Deserialize)]
    struct Message {
        content: Option<String>,
    }
    #[derive(Deserialize)]
    struct Choice {
        message: Message,
    }
    #[derive(Deserialize)]
    struct Completion {
        choices: Vec<Choice>,
    }
    let parsed: Completion =
        serde_json::from_str(body).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| LlmError::MalformedResponse("response has no message content".into()))
}

impl ChatBackend for HttpBackend {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, LlmError> {
        let attempts = self.cfg.max_retries + 1;
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self
                    .cfg
                    .backoff_ms
                    .saturating_mul(1u64 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(req) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    tracing::debug!(attempt, error = %e, "chat completion attempt failed");
                    last = Some(e);
                }
            }
        }
        let last = last.expect("at least one attempt ran");
        if attempts == 1 {
            if let LlmError::Timeout(_) = last {
                return Err(last);
            }
        }
        Err(LlmError::RetriesExhausted {
            attempts,
            last: last.to_string(),
        })
    }

    fn records_latency(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Role;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Arc;

    fn config(endpoint: String, var: &str, max_retries: u32) -> HttpConfig {
        std::env::set_var(var, "test-key");
        HttpConfig {
            endpoint,
            api_key_env: var.into(),
            timeout_secs: 5.0,
            max_retries,
            backoff_ms: 1,
        }
    }

    /// Serves canned HTTP responses, one per connection, and counts requests.
    fn serve(responses: Vec<(u16, String)>) -> (String, Arc<AtomicU32>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicU32::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let Ok((mut stream, _)) = listener.accept() else {
                    return;
                };
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                loop {
                    let n = stream.read(&mut chunk).unwrap_or(0);
                    if n == 0 {
                        break;
                    }
                    buf.extend_from_slice(&chunk[..n]);
                    let text = String::from_utf8_lossy(&buf);
                    if let Some(head_end) = text.find("\r\n\r\n") {
                        let len = text[..head_end]
                            .lines()
                            .find_map(|l| {
                                let l = l.to_ascii_lowercase();
                                l.strip_prefix("content-length:")
                                    .map(|v| v.trim().parse::<usize>().unwrap())
                            })
                            .unwrap_or(0);
                        if buf.len() >= head_end + 4 + len {
                            break;
                        }
                    }
                }
                counter.fetch_add(1, Ordering::SeqCst);
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(reply.as_bytes());
            }
        });
        (format!("http://{addr}/v1/chat/completions"), hits)
    }

    fn ok_body(text: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
    }

    #[test]
    fn unreachable_endpoint_exhausts_after_three_attempts() {
        // Bind then drop to get a port with nothing listening.
        let port = TcpListener::bind("127.0.0.1:0")
            .unwrap()
            .local_addr()
            .unwrap()
            .port();
        let cfg = config(
            format!("http://127.0.0.1:{port}/v1/chat/completions"),
            "GRIDPLAN_TEST_KEY_A",
            2,
        );
        let mut backend = HttpBackend::new(cfg).unwrap();
        let req = ChatRequest::new(Role::Actor, "s", "u").unwrap();
        match backend.complete(&req) {
            Err(LlmError::RetriesExhausted { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("expected exhausted retries, got {other:?}"),
        }
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let (url, hits) = serve(vec![
            (500, "{}".into()),
            (503, "{}".into()),
            (200, ok_body("PlanA<a,b,c>")),
        ]);
        let mut backend = HttpBackend::new(config(url, "GRIDPLAN_TEST_KEY_B", 2)).unwrap();
        let req = ChatRequest::new(Role::Actor, "s", "u").unwrap();
        assert_eq!(backend.complete(&req).unwrap(), "PlanA<a,b,c>");
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, hits) = serve(vec![
            (401, "{\"error\":\"bad key\"}".into()),
            (200, ok_body("late")),
        ]);
        let mut backend = HttpBackend::new(config(url, "GRIDPLAN_TEST_KEY_C", 3)).unwrap();
        let req = ChatRequest::new(Role::Critic, "s", "u").unwrap();
        assert!(matches!(
            backend.complete(&req),
            Err(LlmError::Status { status: 401, .. })
        ));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn missing_credential_is_reported() {
        let cfg = HttpConfig {
            endpoint: "http://127.0.0.1:1".into(),
            api_key_env: "GRIDPLAN_TEST_KEY_UNSET".into(),
            timeout_secs: 1.0,
            max_retries: 0,
            backoff_ms: 1,
        };
        assert!(matches!(
            HttpBackend::new(cfg),
            Err(LlmError::MissingCredential(_))
        ));
    }

    #[test]
    fn extracts_first_choice_content() {
        assert_eq!(extract_content(&ok_body("hi")).unwrap(), "hi");
        assert!(extract_content("{\"choices\": []}").is_err());
        assert!(extract_content("not json").is_err());
    }
}
