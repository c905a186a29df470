//! Blocking JSON-over-HTTP with retries, shared by the chat and generator
//! clients.

use std::thread;
use std::time::Duration;

use log::warn;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(120),
        }
    }
}

/// Posts `body` and returns the raw response bytes. Transport failures and
/// 5xx/429 responses are retried with exponential backoff; other non-2xx
/// statuses fail immediately.
pub(crate) fn post_json(
    url: &str,
    body: &serde_json::Value,
    bearer: Option<&str>,
    policy: &RetryPolicy,
) -> Result<Vec<u8>> {
    let client = reqwest::blocking::Client::builder()
        .timeout(policy.timeout)
        .build()
        .map_err(|e| Error::Backend(format!("cannot build http client: {e}")))?;
    let mut backoff = policy.initial_backoff;
    let mut last = String::new();
    for attempt in 1..=policy.attempts.max(1) {
        let mut req = client.post(url).json(body);
        if let Some(key) = bearer {
            req = req.bearer_auth(key);
        }
        match req.send() {
            Ok(resp) => {
                let status = resp.status();
                let bytes = resp
                    .bytes()
                    .map_err(|e| Error::Backend(format!("{url}: reading response failed: {e}")))?;
                if status.is_success() {
                    return Ok(bytes.to_vec());
                }
                last = format!("HTTP {status}: {}", String::from_utf8_lossy(&bytes).chars().take(200).collect::<String>());
                if !(status.is_server_error() || status.as_u16() == 429) {
                    return Err(Error::Backend(format!("{url}: {last}")));
                }
            }
            Err(e) => last = e.to_string(),
        }
        if attempt < policy.attempts {
            warn!("{url}: attempt {attempt} failed ({last}), retrying in {backoff:?}");
            thread::sleep(backoff);
            backoff *= 2;
        }
    }
    Err(Error::Backend(format!(
        "{url}: giving up after {} attempts: {last}",
        policy.attempts
    )))
}
