//! JSON-over-HTTP transport shared by the expert gateway and the LLM client.

use std::time::Duration;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::limiter::{InFlightLimiter, RetryPolicy};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("{url}: unreachable after {attempts} attempt(s): {message}")]
    Unreachable {
        url: String,
        attempts: u32,
        message: String,
    },
    #[error("{url}: HTTP {status} after {attempts} attempt(s): {message}")]
    Status {
        url: String,
        status: u16,
        attempts: u32,
        message: String,
    },
    #[error("{url}: malformed response: {message}")]
    Malformed { url: String, message: String },
}

pub fn build_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(timeout))
        .build()
        .into()
}

pub fn join_url(base: &str, path: &str) -> String {
    format!("{}{}", base.trim_end_matches('/'), path)
}

fn retryable(status: u16) -> bool {
    status == 429 || status >= 500
}

fn error_message(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| v.get("error").and_then(Value::as_str).map(str::to_owned))
        .unwrap_or_else(|| body.chars().take(200).collect())
}

enum Method<'a, B> {
    Get,
    Post(&'a B),
}

fn request<B: Serialize>(
    agent: &ureq::Agent,
    url: &str,
    method: Method<'_, B>,
    limiter: &InFlightLimiter,
    retry: &RetryPolicy,
) -> Result<Value, TransportError> {
    let mut attempt = 0u32;
    loop {
        let outcome = {
            let _slot = limiter.acquire();
            match method {
                Method::Get => agent.get(url).call(),
                Method::Post(body) => agent.post(url).send_json(body),
            }
        };
        let attempts = attempt + 1;
        let failure = match outcome {
            Ok(resp) => {
                let status = resp.status().as_u16();
                let text = resp
                    .into_body()
                    .read_to_string()
                    .map_err(|e| TransportError::Malformed {
                        url: url.to_owned(),
                        message: e.to_string(),
                    })?;
                if status == 200 {
                    return serde_json::from_str(&text).map_err(|e| TransportError::Malformed {
                        url: url.to_owned(),
                        message: e.to_string(),
                    });
                }
                let err = TransportError::Status {
                    url: url.to_owned(),
                    status,
                    attempts,
                    message: error_message(&text),
                };
                if !retryable(status) {
                    return Err(err);
                }
                err
            }
            Err(e) => TransportError::Unreachable {
                url: url.to_owned(),
                attempts,
                message: e.to_string(),
            },
        };
        if attempt >= retry.retries {
            return Err(failure);
        }
        log::debug!("retrying {url} after: {failure}");
        std::thread::sleep(retry.delay(attempt));
        attempt += 1;
    }
}

pub fn post_json<B: Serialize>(
    agent: &ureq::Agent,
    url: &str,
    body: &B,
    limiter: &InFlightLimiter,
    retry: &RetryPolicy,
) -> Result<Value, TransportError> {
    request(agent, url, Method::Post(body), limiter, retry)
}

pub fn get_json(
    agent: &ureq::Agent,
    url: &str,
    limiter: &InFlightLimiter,
    retry: &RetryPolicy,
) -> Result<Value, TransportError> {
    request::<()>(agent, url, Method::Get, limiter, retry)
}

/// Pull a string field out of a response object.
pub fn string_field(url: &str, value: &Value, field: &str) -> Result<String, TransportError> {
    value
        .get(field)
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| TransportError::Malformed {
            url: url.to_owned(),
            message: format!("missing string field {field:?}"),
        })
}
