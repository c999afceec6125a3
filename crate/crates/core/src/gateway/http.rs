use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, CompletionBackend, CompletionRequest, GatewayError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Chat-completions endpoint, e.g. `https://api.openai.com/v1/chat/completions`.
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    60
}

/// Generic JSON-over-HTTP chat-completions backend.
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpBackend {
    /// Reads the API key from the configured environment variable. An empty
    /// variable name means no key is sent.
    pub fn from_config(config: &HttpConfig) -> Result<Self, GatewayError> {
        let api_key = if config.api_key_env.is_empty() {
            None
        } else {
            Some(std::env::var(&config.api_key_env).map_err(|_| {
                GatewayError::Configuration(format!(
                    "environment variable {} is not set",
                    config.api_key_env
                ))
            })?)
        };
        Ok(Self::new(&config.endpoint, api_key, Duration::from_secs(config.timeout_secs)))
    }

    pub fn new(endpoint: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            endpoint: endpoint.to_string(),
            api_key,
        }
    }
}

/// Request body: one user message, no history.
pub fn request_body(request: &CompletionRequest) -> Value {
    let s = &request.sampling;
    json!({
        "model": s.model_id,
        "temperature": s.temperature,
        "top_p": s.top_p,
        "frequency_penalty": s.frequency_penalty,
        "presence_penalty": s.presence_penalty,
        "messages": [{"role": "user", "content": request.prompt_text}],
    })
}

fn extract_content(body: &Value) -> Option<String> {
    body.get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

impl CompletionBackend for HttpBackend {
    fn send(&self, request: &CompletionRequest, _attempt: u32) -> Result<String, BackendError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(request_body(request))
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 {
            let retry_after = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            return Err(BackendError::RateLimited { retry_after });
        }
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if status >= 500 || status == 408 {
            return Err(BackendError::Transport(format!("http status {status}")));
        }
        if status >= 400 {
            return Err(BackendError::Rejected(format!("http status {status}: {text}")));
        }
        let body: Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::Transport(format!("invalid json response: {e}")))?;
        extract_content(&body)
            .ok_or_else(|| BackendError::Transport("response has no choices[0].message.content".into()))
    }

    fn name(&self) -> &str {
        "http"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{CompletionStatus, Gateway, RetryPolicy, SamplingConfig};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    /// Minimal HTTP/1.1 server answering each connection with the next canned
    /// `(status, body)` and recording request bodies.
    fn serve(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let seen2 = seen.clone();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).unwrap();
                seen2.lock().unwrap().push(String::from_utf8(buf).unwrap());
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/v1/chat/completions"), seen)
    }

    fn request() -> CompletionRequest {
        CompletionRequest {
            persona_id: "p-1".into(),
            template_id: 2,
            prompt_text: "Impersonate a/an Asian Male of 30 years of age.".into(),
            sampling: SamplingConfig::default(),
        }
    }

    #[test]
    fn body_has_single_user_message_and_sampling() {
        let body = request_body(&request());
        assert_eq!(body["temperature"], 1.0);
        assert_eq!(body["top_p"], 1.0);
        assert_eq!(body["frequency_penalty"], 0.0);
        assert_eq!(body["presence_penalty"], 0.0);
        let msgs = body["messages"].as_array().unwrap();
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0]["role"], "user");
    }

    #[test]
    fn retries_429_then_succeeds() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"3,4,2"}}]}"#;
        let (url, seen) = serve(vec![
            (429, "{}".into()),
            (503, "{}".into()),
            (200, ok.into()),
        ]);
        let backend = HttpBackend::new(&url, Some("k".into()), Duration::from_secs(5));
        let gw = Gateway::new(
            Arc::new(backend),
            RetryPolicy {
                max_retries: 2,
                ..RetryPolicy::immediate()
            },
        );
        let r = gw.complete(&request()).unwrap();
        assert_eq!(r.status, CompletionStatus::Ok);
        assert_eq!(r.raw_text, "3,4,2");
        assert_eq!(r.attempt_count, 3);
        let bodies = seen.lock().unwrap();
        assert_eq!(bodies.len(), 3);
        let sent: Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent["messages"][0]["content"], request().prompt_text);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, seen) = serve(vec![(400, r#"{"error":"bad"}"#.into())]);
        let gw = Gateway::new(
            Arc::new(HttpBackend::new(&url, None, Duration::from_secs(5))),
            RetryPolicy::immediate(),
        );
        let r = gw.complete(&request()).unwrap();
        assert_eq!(r.status, CompletionStatus::TransportError);
        assert_eq!(r.attempt_count, 1);
        assert_eq!(seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn missing_key_variable_is_a_configuration_error() {
        let cfg = HttpConfig {
            endpoint: "http://127.0.0.1:1/".into(),
            api_key_env: "INSILICO_TEST_KEY_THAT_IS_NOT_SET".into(),
            timeout_secs: 1,
        };
        assert!(matches!(
            HttpBackend::from_config(&cfg),
            Err(GatewayError::Configuration(_))
        ));
    }
}
