use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub(crate) fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into()
}

/// POST a JSON body and decode a JSON response. Transport failures and
/// non-2xx statuses both surface as [`Error::Upstream`].
pub(crate) fn post_json<Req: Serialize, Resp: DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    body: &Req,
    service: &'static str,
) -> Result<Resp> {
    let mut response = agent
        .post(url)
        .send_json(body)
        .map_err(|e| Error::upstream(service, format!("{url}: {e}")))?;
    response
        .body_mut()
        .read_json::<Resp>()
        .map_err(|e| Error::upstream(service, format!("{url}: bad response body: {e}")))
}
