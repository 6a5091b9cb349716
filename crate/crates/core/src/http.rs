// SPDX-License-Identifier: MIT OR Apache-2.0

//! Blocking JSON-over-HTTP POST shared by the external caption generator and
//! the remote judge.

use std::time::Duration;

use serde::{de::DeserializeOwned, Serialize};

use crate::error::{Error, Result};

/// POSTs `body` as JSON and decodes a 200 response as `R`.
pub(crate) fn post_json<B: Serialize, R: DeserializeOwned>(
    endpoint: &str,
    body: &B,
    timeout: Duration,
) -> Result<R> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let mut response = agent.post(endpoint).send_json(body).map_err(|e| map_err(e, timeout))?;
    let status = response.status().as_u16();
    let text = response
        .body_mut()
        .read_to_string()
        .map_err(|e| map_err(e, timeout))?;
    if status != 200 {
        return Err(Error::Protocol(format!("status {status}: {}", text.trim())));
    }
    serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("malformed body: {e}")))
}

fn map_err(e: ureq::Error, timeout: Duration) -> Error {
    match e {
        ureq::Error::Timeout(_) => Error::Timeout(timeout),
        ureq::Error::Io(io)
            if matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) =>
        {
            Error::Timeout(timeout)
        }
        ureq::Error::Json(j) => Error::Protocol(format!("malformed body: {j}")),
        ureq::Error::Protocol(p) => Error::Protocol(p.to_string()),
        other => Error::Network(other.to_string()),
    }
}
