//! Chat-completions client with a record/replay cassette.
//!
//! ```no_run
//! use codecal_core::model::CallMode;
//! use codecal_gateway::{Cassette, ChatRequest, Gateway};
//!
//! let cassette = Cassette::open_read_only("calls.jsonl").unwrap();
//! let gateway = Gateway::replay(cassette);
//! let completion = gateway.complete(&ChatRequest::new("model", vec![], "v1")).unwrap();
//! assert_eq!(gateway.mode(), CallMode::Replay);
//! println!("{}", completion.text);
//! ```

mod cassette;
mod request;
mod transport;

use std::sync::Mutex;
use std::time::Duration;

use codecal_core::model::CallMode;
use thiserror::Error;

pub use cassette::{Cassette, CassetteEntry, CassetteError};
pub use request::ChatRequest;
pub use transport::{HttpTransport, Transport, TransportError};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("cassette has no response for request {key}")]
    CassetteMiss { key: String },
    #[error("{mode:?} mode needs {what}")]
    NotConfigured { mode: CallMode, what: &'static str },
    #[error("transport failed after {attempts} attempt(s): {source}")]
    Transport {
        attempts: u32,
        #[source]
        source: TransportError,
    },
    #[error(transparent)]
    Cassette(#[from] CassetteError),
}

/// Exponential backoff for retryable transport failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Wait before attempt `attempt + 1`, for `attempt ≥ 1`.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.saturating_sub(1));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub request_key: String,
    /// Cassette timestamp on a hit, otherwise the time of the call.
    pub recorded_at: String,
    pub from_cassette: bool,
}

/// Shareable across worker threads; cassette writes are serialized.
pub struct Gateway {
    mode: CallMode,
    transport: Option<Box<dyn Transport>>,
    cassette: Option<Mutex<Cassette>>,
    retry: RetryPolicy,
}

impl Gateway {
    pub fn live(transport: Box<dyn Transport>) -> Self {
        Self {
            mode: CallMode::Live,
            transport: Some(transport),
            cassette: None,
            retry: RetryPolicy::default(),
        }
    }

    /// Serves hits from `cassette` and records misses from `transport`.
    pub fn record(transport: Box<dyn Transport>, cassette: Cassette) -> Self {
        Self {
            mode: CallMode::Record,
            transport: Some(transport),
            cassette: Some(Mutex::new(cassette)),
            retry: RetryPolicy::default(),
        }
    }

    pub fn replay(cassette: Cassette) -> Self {
        Self {
            mode: CallMode::Replay,
            transport: None,
            cassette: Some(Mutex::new(cassette)),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn mode(&self) -> CallMode {
        self.mode
    }

    /// Digest of the cassette file as opened, if any.
    pub fn cassette_digest(&self) -> Option<String> {
        self.cassette
            .as_ref()
            .map(|c| c.lock().expect("cassette lock").digest().to_string())
    }

    fn lookup(&self, key: &str) -> Option<Completion> {
        let cassette = self.cassette.as_ref()?.lock().expect("cassette lock");
        cassette.get(key).map(|e| Completion {
            text: e.response.clone(),
            request_key: key.to_string(),
            recorded_at: e.recorded_at.clone(),
            from_cassette: true,
        })
    }

    fn call(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let transport = self.transport.as_ref().ok_or(GatewayError::NotConfigured {
            mode: self.mode,
            what: "a transport",
        })?;
        let mut attempt = 1;
        loop {
            match transport.send(request) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < self.retry.max_attempts => {
                    let wait = self.retry.delay(attempt);
                    log::warn!("attempt {attempt} failed ({e}); retrying in {wait:?}");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err(source) => {
                    return Err(GatewayError::Transport {
                        attempts: attempt,
                        source,
                    })
                }
            }
        }
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let key = request.request_key();
        match self.mode {
            CallMode::Replay => self.lookup(&key).ok_or(GatewayError::CassetteMiss { key }),
            CallMode::Record => {
                if let Some(hit) = self.lookup(&key) {
                    return Ok(hit);
                }
                let text = self.call(request)?;
                let recorded_at = now();
                let cassette = self.cassette.as_ref().ok_or(GatewayError::NotConfigured {
                    mode: self.mode,
                    what: "a cassette",
                })?;
                cassette
                    .lock()
                    .expect("cassette lock")
                    .insert(CassetteEntry {
                        request_key: key.clone(),
                        request_canonical: request.canonical(),
                        response: text.clone(),
                        status: 200,
                        recorded_at: recorded_at.clone(),
                    })?;
                Ok(Completion {
                    text,
                    request_key: key,
                    recorded_at,
                    from_cassette: false,
                })
            }
            CallMode::Live => Ok(Completion {
                text: self.call(request)?,
                request_key: key,
                recorded_at: now(),
                from_cassette: false,
            }),
        }
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(500),
        };
        let waits: Vec<_> = (1..=4).map(|a| p.delay(a).as_millis()).collect();
        assert_eq!(waits, [100, 200, 400, 500]);
    }

    #[test]
    fn retryable_statuses() {
        let status = |s| TransportError::Status {
            status: s,
            body: String::new(),
        };
        assert!(status(429).is_retryable());
        assert!(status(503).is_retryable());
        assert!(!status(400).is_retryable());
        assert!(!status(401).is_retryable());
        assert!(TransportError::Timeout.is_retryable());
    }
}
