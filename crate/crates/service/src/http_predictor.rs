//! A [`Predictor`] that talks to a remote server over the JSON protocol.

use std::time::Duration;

use boxal_core::predictors::protocol::ErrorResponse;
use boxal_core::predictors::{
    HealthResponse, PredictRequest, PredictResponse, Predictor, TrainRequest, TrainResponse,
};
use boxal_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::http::Response;
use ureq::{Agent, Body};

/// Prediction responses for a whole pool at T passes get large.
const BODY_LIMIT: u64 = 1 << 30;

#[derive(Debug, Clone)]
pub struct HttpPredictor {
    base: String,
    agent: Agent,
}

impl HttpPredictor {
    pub fn new(base_url: &str) -> Self {
        Self::with_timeout(base_url, Duration::from_secs(600))
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Self {
        let agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            base: base_url.trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let url = self.url(path);
        let resp = self
            .agent
            .post(&url)
            .send_json(body)
            .map_err(|e| Error::PredictorUnavailable(format!("POST {url}: {e}")))?;
        decode(&url, resp)
    }
}

fn decode<T: DeserializeOwned>(url: &str, mut resp: Response<Body>) -> Result<T> {
    let status = resp.status();
    let text = resp
        .body_mut()
        .with_config()
        .limit(BODY_LIMIT)
        .read_to_string()
        .map_err(|e| Error::PredictorUnavailable(format!("{url}: reading body: {e}")))?;
    if !status.is_success() {
        let detail = match serde_json::from_str::<ErrorResponse>(&text) {
            Ok(e) => format!("{} ({})", e.error, e.kind),
            Err(_) => text.chars().take(200).collect(),
        };
        return Err(Error::Protocol(format!("{url}: HTTP {}: {detail}", status.as_u16())));
    }
    serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("{url}: bad response: {e}")))
}

impl Predictor for HttpPredictor {
    fn health(&self) -> Result<HealthResponse> {
        let url = self.url("/v1/health");
        let resp = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| Error::PredictorUnavailable(format!("GET {url}: {e}")))?;
        decode(&url, resp)
    }

    fn train(&mut self, request: &TrainRequest) -> Result<TrainResponse> {
        self.post("/v1/train", request)
    }

    fn predict(&self, request: &PredictRequest) -> Result<PredictResponse> {
        self.post("/v1/predict", request)
    }
}
