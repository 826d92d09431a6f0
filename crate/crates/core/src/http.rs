//! Minimal JSON-over-HTTP plumbing shared by the remote embedder and the
//! remote chat backend.

use std::time::Duration;

use thiserror::Error;

use crate::retry::Failure;

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("unexpected response body: {0}")]
    Decode(String),
}

pub fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

/// Reads a bearer token from the environment; empty values count as unset.
pub fn api_key_from_env(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|v| !v.trim().is_empty())
}

/// 429, 5xx and transport errors are transient; 401/403 are auth failures;
/// any other non-2xx status is permanent.
pub fn classify_status(status: u16) -> Option<Failure<HttpError>> {
    match status {
        200..=299 => None,
        401 | 403 => Some(Failure::Permanent(HttpError::Auth(status))),
        408 | 429 | 500..=599 => Some(Failure::Transient(HttpError::Status {
            status,
            body: String::new(),
        })),
        _ => Some(Failure::Permanent(HttpError::Status {
            status,
            body: String::new(),
        })),
    }
}

pub fn post_json(
    agent: &ureq::Agent,
    url: &str,
    bearer: Option<&str>,
    body: &serde_json::Value,
) -> Result<serde_json::Value, Failure<HttpError>> {
    let mut req = agent.post(url).header("Content-Type", "application/json");
    if let Some(token) = bearer {
        req = req.header("Authorization", &format!("Bearer {token}"));
    }
    let mut resp = req
        .send_json(body)
        .map_err(|e| Failure::Transient(HttpError::Transport(e.to_string())))?;
    let status = resp.status().as_u16();
    if let Some(failure) = classify_status(status) {
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        return Err(match failure {
            Failure::Transient(HttpError::Status { .. }) => {
                Failure::Transient(HttpError::Status { status, body: text })
            }
            Failure::Permanent(HttpError::Status { .. }) => {
                Failure::Permanent(HttpError::Status { status, body: text })
            }
            other => other,
        });
    }
    resp.body_mut()
        .read_json::<serde_json::Value>()
        .map_err(|e| Failure::Transient(HttpError::Decode(e.to_string())))
}
