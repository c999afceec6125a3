//! Stateless completion dispatch.
//!
//! Every rendered prompt becomes one [`CompletionRequest`] carrying a single
//! user message and nothing else. A [`Gateway`] sends requests through a
//! [`CompletionBackend`], retrying only transport and rate-limit failures.
//! Malformed-but-delivered text is a successful completion: it is kept verbatim
//! and handled later by the parser.

mod audit;
mod http;
mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{read_audit_log, AuditLog, AuditRecord};
pub use http::{HttpBackend, HttpConfig};
pub use mock::{FlakyBackend, MockBackend, MockProfile};

use crate::prompt::RenderedPrompt;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("audit log: {0}")]
    Audit(String),
}

/// Failure reported by a backend for a single attempt.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendError {
    /// Connection, timeout or 5xx-class failure. Retried.
    Transport(String),
    /// 429-class throttling. Retried.
    RateLimited { retry_after: Option<Duration> },
    /// Request refused for a reason retrying will not fix.
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            model_id: "gpt-4o-mini-2024-07-18".to_string(),
            temperature: 1.0,
            top_p: 1.0,
            frequency_penalty: 0.0,
            presence_penalty: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub persona_id: String,
    pub template_id: u8,
    pub prompt_text: String,
    pub sampling: SamplingConfig,
}

impl CompletionRequest {
    pub fn from_prompt(prompt: &RenderedPrompt, sampling: &SamplingConfig) -> Self {
        Self {
            persona_id: prompt.persona_id.clone(),
            template_id: prompt.template_id,
            prompt_text: prompt.text.clone(),
            sampling: sampling.clone(),
        }
    }

    pub fn key(&self) -> (String, u8) {
        (self.persona_id.clone(), self.template_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionStatus {
    Ok,
    TransportError,
    RateLimited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub persona_id: String,
    pub template_id: u8,
    pub raw_text: String,
    pub status: CompletionStatus,
    pub attempt_count: u32,
}

pub trait CompletionBackend: Send + Sync {
    /// Sends one request. `attempt` starts at 0.
    fn send(&self, request: &CompletionRequest, attempt: u32) -> Result<String, BackendError>;

    fn name(&self) -> &str;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Retries after the first attempt; total attempts are `max_retries + 1`.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    /// Policy with the default attempt budget and no sleeping, for offline backends.
    pub fn immediate() -> Self {
        Self {
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
            ..Self::default()
        }
    }

    /// Delay before retry number `retry` (0-based): `base * 2^retry`, capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.min(16)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Clone)]
pub struct Gateway {
    backend: Option<Arc<dyn CompletionBackend>>,
    retry: RetryPolicy,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.as_ref().map(|b| b.name().to_string()))
            .field("retry", &self.retry)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn CompletionBackend>, retry: RetryPolicy) -> Self {
        Self {
            backend: Some(backend),
            retry,
        }
    }

    pub fn unconfigured() -> Self {
        Self {
            backend: None,
            retry: RetryPolicy::default(),
        }
    }

    pub fn retry_policy(&self) -> &RetryPolicy {
        &self.retry
    }

    fn backend(&self) -> Result<&Arc<dyn CompletionBackend>, GatewayError> {
        self.backend
            .as_ref()
            .ok_or_else(|| GatewayError::Configuration("no completion backend configured".into()))
    }

    /// Sends one request, retrying transport and rate-limit failures with
    /// exponential backoff. Always yields exactly one result.
    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        let backend = self.backend()?;
        Ok(self.complete_with(backend.as_ref(), request))
    }

    fn complete_with(
        &self,
        backend: &dyn CompletionBackend,
        request: &CompletionRequest,
    ) -> CompletionResult {
        let mut attempt = 0u32;
        loop {
            let outcome = backend.send(request, attempt);
            let (status, text, wait) = match outcome {
                Ok(text) => {
                    return CompletionResult {
                        persona_id: request.persona_id.clone(),
                        template_id: request.template_id,
                        raw_text: text,
                        status: CompletionStatus::Ok,
                        attempt_count: attempt + 1,
                    }
                }
                Err(BackendError::Transport(msg)) => {
                    (CompletionStatus::TransportError, msg, None)
                }
                Err(BackendError::RateLimited { retry_after }) => {
                    (CompletionStatus::RateLimited, String::new(), retry_after)
                }
                Err(BackendError::Rejected(msg)) => {
                    return CompletionResult {
                        persona_id: request.persona_id.clone(),
                        template_id: request.template_id,
                        raw_text: msg,
                        status: CompletionStatus::TransportError,
                        attempt_count: attempt + 1,
                    }
                }
            };
            if attempt >= self.retry.max_retries {
                log::warn!(
                    "{}/{}: giving up after {} attempts",
                    request.persona_id,
                    request.template_id,
                    attempt + 1
                );
                return CompletionResult {
                    persona_id: request.persona_id.clone(),
                    template_id: request.template_id,
                    raw_text: text,
                    status,
                    attempt_count: attempt + 1,
                };
            }
            let delay = self.retry.delay(attempt).max(wait.unwrap_or(Duration::ZERO));
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
            attempt += 1;
        }
    }

    /// Runs a batch with at most `max_in_flight` concurrent requests.
    /// Results come back in request order.
    pub fn run_batch(
        &self,
        requests: &[CompletionRequest],
        max_in_flight: usize,
    ) -> Result<Vec<CompletionResult>, GatewayError> {
        self.run_batch_with(requests, max_in_flight, &|_| Ok(()))
    }

    /// As [`Gateway::run_batch`], invoking `on_result` for each result as soon
    /// as it arrives (used to persist raw completions before parsing).
    pub fn run_batch_with(
        &self,
        requests: &[CompletionRequest],
        max_in_flight: usize,
        on_result: &(dyn Fn(&CompletionResult) -> Result<(), GatewayError> + Sync),
    ) -> Result<Vec<CompletionResult>, GatewayError> {
        let backend = self.backend()?;
        if max_in_flight == 0 {
            return Err(GatewayError::Configuration("max_in_flight must be >= 1".into()));
        }
        if requests.is_empty() {
            return Ok(Vec::new());
        }
        let next = AtomicUsize::new(0);
        let workers = max_in_flight.min(requests.len());
        let collected: Vec<Result<Vec<(usize, CompletionResult)>, GatewayError>> =
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..workers)
                    .map(|_| {
                        scope.spawn(|| {
                            let mut local = Vec::new();
                            loop {
                                let i = next.fetch_add(1, Ordering::Relaxed);
                                if i >= requests.len() {
                                    break;
                                }
                                let result = self.complete_with(backend.as_ref(), &requests[i]);
                                on_result(&result)?;
                                local.push((i, result));
                            }
                            Ok(local)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("gateway worker panicked"))
                    .collect()
            });
        let mut slots: Vec<Option<CompletionResult>> = vec![None; requests.len()];
        for batch in collected {
            for (i, r) in batch? {
                slots[i] = Some(r);
            }
        }
        Ok(slots.into_iter().map(|r| r.expect("every slot filled")).collect())
    }
}
