use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use boxal_core::data_io::{write_synthetic, Dataset, SyntheticSpec};
use boxal_core::engine::{ExperimentConfig, OracleMode};
use boxal_core::predictors::SyntheticPredictor;
use boxal_core::sampling::{StrategyConfig, StrategyKind};
use boxal_service::{api, Background, Session, SessionOptions};
use serde_json::{json, Value};
use ureq::Agent;

pub fn dataset(dir: &Path, train: usize, test: usize, seed: u64) -> PathBuf {
    let spec = SyntheticSpec {
        train_images: train,
        test_images: test,
        image_size: 48,
        seed,
        ..Default::default()
    };
    write_synthetic(dir, &spec).unwrap()
}

pub fn config(kind: StrategyKind, rounds: usize, sample: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        strategy: StrategyConfig {
            kind,
            sample_size: sample,
            seed,
        },
        rounds,
        initial_size: sample,
        passes: 4,
        ..Default::default()
    }
}

/// Starts a queued-oracle service with the builtin predictor.
pub fn serve(
    manifest: &Path,
    mut config: ExperimentConfig,
    journal: Option<PathBuf>,
    out: Option<PathBuf>,
) -> (Background, Arc<Dataset>) {
    config.oracle = OracleMode::Queued;
    let ds = Arc::new(Dataset::open(manifest).unwrap());
    let predictor = SyntheticPredictor::new(ds.clone(), Default::default()).unwrap();
    let session = Session::open(SessionOptions {
        config,
        dataset: ds.clone(),
        dataset_label: "manifest.json".into(),
        predictor: Box::new(predictor),
        journal,
        out,
    })
    .unwrap();
    let server = Background::spawn(api::router(Arc::new(session)), "127.0.0.1:0".parse().unwrap())
        .unwrap();
    (server, ds)
}

#[derive(Clone)]
pub struct Http {
    base: String,
    agent: Agent,
}

impl Http {
    pub fn new(base: impl Into<String>) -> Self {
        let agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self {
            base: base.into(),
            agent,
        }
    }

    fn finish(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> (u16, Value) {
        let mut resp = resp.unwrap();
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(1 << 30)
            .read_to_string()
            .unwrap();
        let value = serde_json::from_str(&text).unwrap_or(Value::String(text));
        (status, value)
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        Self::finish(self.agent.get(format!("{}{path}", self.base)).call())
    }

    pub fn get_bytes(&self, path: &str) -> (u16, String, Vec<u8>) {
        let mut resp = self.agent.get(format!("{}{path}", self.base)).call().unwrap();
        let ct = resp
            .headers()
            .get("content-type")
            .map(|v| v.to_str().unwrap().to_string())
            .unwrap_or_default();
        let status = resp.status().as_u16();
        (status, ct, resp.body_mut().read_to_vec().unwrap())
    }

    pub fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        Self::finish(self.agent.post(format!("{}{path}", self.base)).send_json(body))
    }

    pub fn post_raw(&self, path: &str, body: &str) -> (u16, Value) {
        Self::finish(
            self.agent
                .post(format!("{}{path}", self.base))
                .header("content-type", "application/json")
                .send(body),
        )
    }

    pub fn post_empty(&self, path: &str) -> (u16, Value) {
        Self::finish(self.agent.post(format!("{}{path}", self.base)).send_empty())
    }
}

pub fn gt_boxes(ds: &Dataset, id: u64) -> Value {
    Value::Array(ds.boxes(id).iter().map(|b| json!(b.to_array())).collect())
}

/// Annotates every queued image with its ground-truth boxes and advances,
/// until the experiment finishes. Returns the number of rounds driven.
pub fn drive_with_ground_truth(http: &Http, ds: &Dataset) -> usize {
    let mut rounds = 0;
    loop {
        let (status, exp) = http.get("/api/experiment");
        assert_eq!(status, 200);
        if exp["state"] == "finished" {
            return rounds;
        }
        let round = exp["round"].as_u64().unwrap();
        let (_, queue) = http.get("/api/queue");
        for task in queue.as_array().unwrap() {
            let id = task["image_id"].as_u64().unwrap();
            let body = json!({ "image_id": id, "boxes": gt_boxes(ds, id) });
            let (status, resp) = http.post("/api/annotations", &body);
            assert_eq!(status, 200, "{resp}");
        }
        let (status, resp) = http.post("/api/rounds/advance", &json!({ "round": round }));
        assert_eq!(status, 200, "{resp}");
        rounds += 1;
    }
}
