//! Protocol conformance checks for a predictor server.
//!
//! The checks train on ground-truth boxes from a dataset the server also
//! knows, so both sides must be pointed at the same manifest.

use std::time::Duration;

use boxal_core::data_io::Dataset;
use boxal_core::predictors::protocol::ErrorResponse;
use boxal_core::predictors::{
    HealthResponse, LabeledImage, PredictRequest, PredictResponse, TrainRequest, TrainResponse,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::Agent;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.outcome.is_ok()
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.outcome {
            Ok(()) => write!(f, "PASS {}", self.name),
            Err(why) => write!(f, "FAIL {}: {why}", self.name),
        }
    }
}

struct Client {
    base: String,
    agent: Agent,
}

type Reply = Result<(u16, String), String>;

impl Client {
    fn get(&self, path: &str) -> Reply {
        let mut resp = self
            .agent
            .get(format!("{}{path}", self.base))
            .call()
            .map_err(|e| format!("transport: {e}"))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(1 << 30)
            .read_to_string()
            .map_err(|e| format!("reading body: {e}"))?;
        Ok((status, body))
    }

    fn post_raw(&self, path: &str, body: &str) -> Reply {
        let mut resp = self
            .agent
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| format!("transport: {e}"))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(1 << 30)
            .read_to_string()
            .map_err(|e| format!("reading body: {e}"))?;
        Ok((status, body))
    }

    fn post<B: Serialize>(&self, path: &str, body: &B) -> Reply {
        let text = serde_json::to_string(body).map_err(|e| e.to_string())?;
        self.post_raw(path, &text)
    }
}

fn ok<T: DeserializeOwned>(reply: Reply) -> Result<T, String> {
    let (status, body) = reply?;
    if status != 200 {
        return Err(format!("expected 200, got {status}: {}", snippet(&body)));
    }
    serde_json::from_str(&body).map_err(|e| format!("undecodable body: {e}"))
}

fn client_error(reply: Reply) -> Result<(), String> {
    let (status, body) = reply?;
    if !(400..500).contains(&status) {
        return Err(format!("expected a 4xx status, got {status}"));
    }
    serde_json::from_str::<ErrorResponse>(&body)
        .map(|_| ())
        .map_err(|e| format!("error body lacks {{error, kind}}: {e}"))
}

fn snippet(s: &str) -> String {
    s.chars().take(160).collect()
}

fn labeled(ds: &Dataset, ids: &[u64]) -> Vec<LabeledImage> {
    let category = ds.default_category();
    ids.iter()
        .map(|&id| {
            let boxes = ds.boxes(id);
            LabeledImage {
                image_id: id,
                category_ids: vec![category; boxes.len()],
                boxes,
            }
        })
        .collect()
}

/// Runs every check against `base_url`; later checks that depend on a
/// failed train step are reported as failed too.
pub fn run(base_url: &str, dataset: &Dataset) -> Vec<Check> {
    let agent: Agent = Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(300)))
        .build()
        .into();
    let c = Client {
        base: base_url.trim_end_matches('/').to_string(),
        agent,
    };
    let mut checks = Vec::new();
    let mut record = |name, outcome| checks.push(Check { name, outcome });

    let train_ids = dataset.train_ids();
    let test_ids = dataset.test_ids();
    if train_ids.len() < 2 || test_ids.is_empty() {
        record(
            "dataset",
            Err("need at least 2 training and 1 test image".to_string()),
        );
        return checks;
    }

    record(
        "health",
        ok::<HealthResponse>(c.get("/v1/health")).and_then(|h| {
            if !h.ok {
                Err("ok is false".into())
            } else if h.mechanism.trim().is_empty() {
                Err("mechanism is empty".into())
            } else {
                Ok(())
            }
        }),
    );

    let half = (train_ids.len() / 2).clamp(1, 4);
    let first = TrainRequest {
        parent_tag: None,
        labeled: labeled(dataset, &train_ids[..half]),
    };
    let tag = ok::<TrainResponse>(c.post("/v1/train", &first)).and_then(|t| {
        if t.model_tag.is_empty() {
            Err("empty model_tag".into())
        } else {
            Ok(t.model_tag)
        }
    });
    record("train", tag.clone().map(|_| ()));

    let warm = tag.clone().and_then(|parent| {
        let req = TrainRequest {
            parent_tag: Some(parent.clone()),
            labeled: labeled(dataset, &train_ids[..(half * 2).min(train_ids.len())]),
        };
        let t = ok::<TrainResponse>(c.post("/v1/train", &req))?;
        if t.model_tag == parent {
            return Err("warm start returned the parent tag".into());
        }
        Ok(t.model_tag)
    });
    record("train warm start", warm.clone().map(|_| ()));

    let unknown_parent = TrainRequest {
        parent_tag: Some("no-such-model-tag".into()),
        labeled: first.labeled.clone(),
    };
    record("train unknown parent", client_error(c.post("/v1/train", &unknown_parent)));
    let empty = TrainRequest {
        parent_tag: None,
        labeled: Vec::new(),
    };
    record("train empty labeled", client_error(c.post("/v1/train", &empty)));
    record("train malformed body", client_error(c.post_raw("/v1/train", "{\"labeled\": [")));

    let mut ids: Vec<u64> = test_ids.iter().take(3).copied().collect();
    ids.extend(train_ids.iter().rev().take(2));
    let dims = |id: u64| dataset.image(id).map(|i| (i.height, i.width));
    let model = warm.or(tag);
    let request = |tag: &str, stochastic: bool| PredictRequest {
        model_tag: tag.to_string(),
        image_ids: ids.clone(),
        passes: 4,
        stochastic,
        seed: 12345,
    };
    let shape = |req: &PredictRequest, resp: &PredictResponse| -> Result<(), String> {
        if resp.results.len() != req.image_ids.len() {
            return Err(format!(
                "{} results for {} images",
                resp.results.len(),
                req.image_ids.len()
            ));
        }
        resp.check_against(req, dims).map_err(|e| e.to_string())
    };

    let stochastic = model.clone().and_then(|t| {
        let req = request(&t, true);
        let resp = ok::<PredictResponse>(c.post("/v1/predict", &req))?;
        shape(&req, &resp)?;
        Ok((req, resp))
    });
    record("predict stochastic passes", stochastic.clone().map(|_| ()));

    record(
        "predict deterministic single pass",
        model.clone().and_then(|t| {
            let req = request(&t, false);
            let resp = ok::<PredictResponse>(c.post("/v1/predict", &req))?;
            shape(&req, &resp)
        }),
    );

    record(
        "predict reproducible",
        stochastic.and_then(|(req, first)| {
            let again = ok::<PredictResponse>(c.post("/v1/predict", &req))?;
            if again == first {
                Ok(())
            } else {
                Err("same request and seed gave different results".into())
            }
        }),
    );

    let bogus_tag = request("no-such-model-tag", true);
    record("predict unknown tag", client_error(c.post("/v1/predict", &bogus_tag)));
    record(
        "predict unknown image",
        model.and_then(|t| {
            let mut req = request(&t, true);
            let max = dataset.manifest().images.iter().map(|i| i.id).max().unwrap_or(0);
            req.image_ids = vec![max.saturating_add(1000)];
            client_error(c.post("/v1/predict", &req))
        }),
    );
    record("predict malformed body", client_error(c.post_raw("/v1/predict", "not json")));
    checks
}
