//! HTTP service, predictor protocol client/server and CLI plumbing around
//! `boxal-core`.

pub mod api;
pub mod conformance;
pub mod http_predictor;
pub mod journal;
pub mod predictor_api;
pub mod server;
pub mod session;

pub use http_predictor::HttpPredictor;
pub use server::Background;
pub use session::{Session, SessionOptions};
