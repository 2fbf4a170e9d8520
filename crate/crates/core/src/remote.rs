//! Blocking JSON-over-HTTP client shared by the remote embedder and classifier.
//!
//! Each call makes at most `retries + 1` attempts of at most `timeout` each, and
//! never more than `max_in_flight` requests run at once per client.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub url: String,
    pub timeout_ms: u64,
    pub retries: u32,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            url: String::new(),
            timeout_ms: 10_000,
            retries: 2,
            max_in_flight: 4,
        }
    }
}

impl RemoteConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    /// Upper bound on the wall time of one call, excluding time queued behind the in-flight limit.
    pub fn call_budget(&self) -> Duration {
        self.timeout() * (self.retries + 1)
    }
}

struct Gate {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.0.freed.notify_one();
    }
}

pub struct JsonClient {
    agent: ureq::Agent,
    config: RemoteConfig,
    gate: Gate,
}

impl std::fmt::Debug for JsonClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JsonClient")
            .field("config", &self.config)
            .finish()
    }
}

enum Attempt {
    Fatal(String),
    Retry(String),
}

impl JsonClient {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        if config.url.is_empty() {
            return Err(Error::Config("remote endpoint url is empty".into()));
        }
        if config.timeout_ms == 0 {
            return Err(Error::Config("remote timeout must be positive".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        let gate = Gate::new(config.max_in_flight);
        Ok(Self {
            agent,
            config,
            gate,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    pub fn post<B: Serialize, T: DeserializeOwned>(&self, body: &B) -> Result<T> {
        let _permit = self.gate.acquire();
        let deadline = Instant::now() + self.config.call_budget();
        let mut last = String::new();
        let mut attempts = 0;
        while attempts <= self.config.retries && Instant::now() < deadline {
            attempts += 1;
            match self.attempt(body) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(message)) => {
                    return Err(Error::Remote {
                        message: format!("{}: {message}", self.config.url),
                        attempts,
                        retryable: false,
                    })
                }
                Err(Attempt::Retry(message)) => last = message,
            }
        }
        Err(Error::Remote {
            message: format!("{}: {last}", self.config.url),
            attempts,
            retryable: true,
        })
    }

    fn attempt<B: Serialize, T: DeserializeOwned>(
        &self,
        body: &B,
    ) -> std::result::Result<T, Attempt> {
        let mut resp = self
            .agent
            .post(&self.config.url)
            .send_json(body)
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if status >= 400 {
            return Err(Attempt::Fatal(format!("HTTP {status}")));
        }
        resp.body_mut()
            .read_json::<T>()
            .map_err(|e| Attempt::Fatal(format!("bad response body: {e}")))
    }
}
