use std::sync::Arc;

use boxal_core::data_io::Dataset;
use boxal_core::engine::{run_experiment, SimulatedOracle};
use boxal_core::predictors::{
    HealthResponse, PredictRequest, PredictResponse, Predictor, SyntheticPredictor, TrainRequest,
    TrainResponse,
};
use boxal_core::sampling::StrategyKind;
use boxal_core::Result;
use boxal_service::{conformance, predictor_api, Background, HttpPredictor};
use boxal_testkit::{self as common, config, Http};
use serde_json::json;

fn mount(predictor: impl Predictor + 'static) -> Background {
    Background::spawn(predictor_api::router(Box::new(predictor)), "127.0.0.1:0".parse().unwrap())
        .unwrap()
}

fn builtin(ds: &Arc<Dataset>) -> SyntheticPredictor {
    SyntheticPredictor::new(ds.clone(), Default::default()).unwrap()
}

fn open(dir: &std::path::Path, train: usize, seed: u64) -> Arc<Dataset> {
    Arc::new(Dataset::open(common::dataset(dir, train, 6, seed)).unwrap())
}

#[test]
fn builtin_predictor_passes_conformance_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let ds = open(dir.path(), 16, 1);
    let server = mount(builtin(&ds));
    let checks = conformance::run(&server.url(), &ds);
    assert!(checks.len() >= 12);
    for c in &checks {
        assert!(c.passed(), "{c}");
    }
}

/// Ignores `stochastic: false` and always returns every pass.
struct AlwaysStochastic(SyntheticPredictor);

impl Predictor for AlwaysStochastic {
    fn health(&self) -> Result<HealthResponse> {
        self.0.health()
    }

    fn train(&mut self, request: &TrainRequest) -> Result<TrainResponse> {
        self.0.train(request)
    }

    fn predict(&self, request: &PredictRequest) -> Result<PredictResponse> {
        let mut r = request.clone();
        r.stochastic = true;
        self.0.predict(&r)
    }
}

#[test]
fn conformance_flags_a_protocol_violation() {
    let dir = tempfile::tempdir().unwrap();
    let ds = open(dir.path(), 16, 2);
    let server = mount(AlwaysStochastic(builtin(&ds)));
    let failed: Vec<_> = conformance::run(&server.url(), &ds)
        .into_iter()
        .filter(|c| !c.passed())
        .map(|c| c.name)
        .collect();
    assert_eq!(failed, ["predict deterministic single pass"]);

    let checks = conformance::run("http://127.0.0.1:9", &ds);
    assert!(checks.iter().all(|c| !c.passed()));
}

#[test]
fn http_predictor_reproduces_the_in_process_run() {
    let dir = tempfile::tempdir().unwrap();
    let ds = open(dir.path(), 30, 3);
    let server = mount(builtin(&ds));
    let cfg = config(StrategyKind::McUncertainty, 3, 5, 11);
    let local = run_experiment(
        cfg.clone(),
        ds.clone(),
        "m",
        builtin(&ds),
        &mut SimulatedOracle::new(ds.clone()),
    )
    .unwrap();
    let remote = run_experiment(
        cfg,
        ds.clone(),
        "m",
        HttpPredictor::new(&server.url()),
        &mut SimulatedOracle::new(ds.clone()),
    )
    .unwrap();
    assert_eq!(local.rows, remote.rows);
}

/// Takes the server down before the third training call.
struct Vanishing {
    inner: HttpPredictor,
    server: Option<Background>,
    trains: usize,
}

impl Predictor for Vanishing {
    fn health(&self) -> Result<HealthResponse> {
        self.inner.health()
    }

    fn train(&mut self, request: &TrainRequest) -> Result<TrainResponse> {
        self.trains += 1;
        if self.trains == 3 {
            if let Some(s) = self.server.take() {
                s.stop().unwrap();
            }
        }
        self.inner.train(request)
    }

    fn predict(&self, request: &PredictRequest) -> Result<PredictResponse> {
        self.inner.predict(request)
    }
}

#[test]
fn an_unreachable_predictor_aborts_with_partial_records() {
    let dir = tempfile::tempdir().unwrap();
    let ds = open(dir.path(), 30, 4);
    let server = mount(builtin(&ds));
    let predictor = Vanishing {
        inner: HttpPredictor::new(&server.url()),
        server: Some(server),
        trains: 0,
    };
    let cfg = config(StrategyKind::Random, 4, 5, 1);
    let aborted = run_experiment(cfg, ds.clone(), "m", predictor, &mut SimulatedOracle::new(ds))
        .unwrap_err();
    assert_eq!(aborted.error.kind(), "predictor_unavailable");
    assert_eq!(aborted.report.rows.len(), 2);
}

#[test]
fn errors_map_to_statuses_with_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let ds = open(dir.path(), 10, 5);
    let server = mount(builtin(&ds));
    let http = Http::new(server.url());
    let id = ds.train_ids()[0];

    let (s, health) = http.get("/v1/health");
    assert_eq!(s, 200);
    assert_eq!(health["ok"], true);

    let predict = json!({ "model_tag": "nope", "image_ids": [id], "passes": 2, "stochastic": true, "seed": 1 });
    let (s, body) = http.post("/v1/predict", &predict);
    assert_eq!(s, 404);
    assert_eq!(body["kind"], "unknown_tag");
    assert!(body["error"].as_str().unwrap().contains("nope"));

    let bad_box = json!({ "parent_tag": null, "labeled": [{ "image_id": id, "boxes": [[5, 5, 1, 1]], "category_ids": [1] }] });
    assert_eq!(http.post("/v1/train", &bad_box).0, 422);
    let (s, body) = http.post_raw("/v1/train", "{");
    assert_eq!(s, 400);
    assert_eq!(body["kind"], "malformed_json");

    let train = json!({ "parent_tag": null, "labeled": [{ "image_id": id, "boxes": [], "category_ids": [] }] });
    let (s, tag) = http.post("/v1/train", &train);
    assert_eq!(s, 200);
    let tag = tag["model_tag"].as_str().unwrap();
    let zero = json!({ "model_tag": tag, "image_ids": [id], "passes": 0, "stochastic": true, "seed": 1 });
    assert_eq!(http.post("/v1/predict", &zero).0, 422);
    let (s, body) = http.post(
        "/v1/predict",
        &json!({ "model_tag": tag, "image_ids": [id], "passes": 3, "stochastic": false, "seed": 1 }),
    );
    assert_eq!(s, 200);
    assert_eq!(body["results"][id.to_string()].as_array().unwrap().len(), 1);
}
