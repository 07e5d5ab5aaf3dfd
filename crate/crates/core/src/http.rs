use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Blocking JSON POST. Network and status failures map to `Transport`;
/// a body that does not decode into `R` maps to `Contract`.
pub(crate) fn post_json<B: Serialize, R: DeserializeOwned>(
    url: &str,
    body: &B,
    bearer: Option<&str>,
    timeout: Duration,
) -> Result<R> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into();
    let mut req = agent.post(url);
    if let Some(token) = bearer {
        req = req.header("Authorization", &format!("Bearer {token}"));
    }
    let mut resp = req
        .send_json(body)
        .map_err(|e| Error::Transport(format!("POST {url}: {e}")))?;
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| Error::Transport(format!("reading {url}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| Error::Contract(format!("unexpected response from {url}: {e}")))
}

pub(crate) fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}
