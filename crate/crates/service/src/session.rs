//! A queued-oracle experiment shared by the HTTP handlers.
//!
//! Every mutation goes through one writer lock; handlers that only read
//! use a snapshot refreshed after each mutation, so they never wait on
//! training.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use boxal_core::data_io::{write_report, Dataset, ExperimentReport, ReportFormat, RoundRecord};
use boxal_core::engine::{Annotations, Experiment, ExperimentConfig};
use boxal_core::geometry::BoundingBox;
use boxal_core::predictors::Predictor;
use boxal_core::sampling::StrategyKind;
use boxal_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::journal::{Event, Journal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskState {
    Pending,
    Submitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub image_id: u64,
    pub round: usize,
    pub state: TaskState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<BoundingBox>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    /// Tasks of the current round are waiting for annotations.
    Annotating,
    /// Every task is submitted; the round waits for an explicit advance.
    Ready,
    /// The next batch could not be drawn; advance retries.
    Stalled,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentStatus {
    pub round: usize,
    pub labeled_count: usize,
    pub pool_size: usize,
    pub strategy: StrategyKind,
    pub state: SessionState,
    pub rounds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub reason: String,
}

#[derive(Debug)]
pub enum SessionError {
    NotFound(String),
    Conflict(String),
    Invalid(Vec<FieldError>),
    Core(Error),
}

impl From<Error> for SessionError {
    fn from(e: Error) -> Self {
        SessionError::Core(e)
    }
}

impl std::fmt::Display for SessionError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SessionError::NotFound(m) | SessionError::Conflict(m) => f.write_str(m),
            SessionError::Invalid(fields) => {
                let parts: Vec<String> =
                    fields.iter().map(|e| format!("{}: {}", e.field, e.reason)).collect();
                write!(f, "invalid annotation: {}", parts.join("; "))
            }
            SessionError::Core(e) => e.fmt(f),
        }
    }
}

pub type SessionResult<T> = std::result::Result<T, SessionError>;

pub struct SessionOptions {
    pub config: ExperimentConfig,
    pub dataset: Arc<Dataset>,
    /// Recorded in reports and the journal (usually the manifest path).
    pub dataset_label: String,
    pub predictor: Box<dyn Predictor>,
    pub journal: Option<PathBuf>,
    /// Directory that receives the report after every round.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct Snapshot {
    status: ExperimentStatus,
    records: Vec<RoundRecord>,
    tasks: Vec<AnnotationTask>,
}

struct Writer {
    experiment: Experiment<Box<dyn Predictor>>,
    tasks: BTreeMap<u64, AnnotationTask>,
    journal: Option<Journal>,
    label: String,
    out: Option<PathBuf>,
    last_error: Option<String>,
}

pub struct Session {
    dataset: Arc<Dataset>,
    writer: Mutex<Writer>,
    snapshot: RwLock<Snapshot>,
}

impl Session {
    /// Starts a session, replaying the journal first if it has entries.
    pub fn open(options: SessionOptions) -> Result<Self, Error> {
        let SessionOptions {
            config,
            dataset,
            dataset_label,
            predictor,
            journal,
            out,
        } = options;
        let experiment = Experiment::new(config.clone(), dataset.clone(), predictor)?;
        let mut writer = Writer {
            experiment,
            tasks: BTreeMap::new(),
            journal: None,
            label: dataset_label.clone(),
            out,
            last_error: None,
        };
        if let Some(path) = journal {
            let (mut j, events) = Journal::open(&path)?;
            if events.is_empty() {
                j.append(&Event::Start {
                    dataset: dataset_label,
                    config,
                })?;
            } else {
                writer.replay(&events, &dataset_label, &config)?;
            }
            writer.journal = Some(j);
        }
        writer.ensure_batch()?;
        let snapshot = writer.snapshot();
        Ok(Self {
            dataset,
            writer: Mutex::new(writer),
            snapshot: RwLock::new(snapshot),
        })
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn status(&self) -> ExperimentStatus {
        self.read().status.clone()
    }

    pub fn records(&self) -> Vec<RoundRecord> {
        self.read().records.clone()
    }

    /// Tasks of the current round; submitted ones only when `all` is set.
    pub fn queue(&self, all: bool) -> Vec<AnnotationTask> {
        self.read()
            .tasks
            .iter()
            .filter(|t| all || t.state == TaskState::Pending)
            .cloned()
            .collect()
    }

    pub fn report(&self) -> ExperimentReport {
        let w = self.lock();
        w.experiment.report(w.label.clone())
    }

    /// Accepts a submission body `{image_id, boxes}` for the current round.
    pub fn submit(&self, body: &Value) -> SessionResult<AnnotationTask> {
        let image_id = match body.get("image_id").and_then(Value::as_u64) {
            Some(id) => id,
            None => {
                return Err(SessionError::Invalid(vec![FieldError {
                    field: "image_id".into(),
                    reason: "required non-negative integer".into(),
                }]))
            }
        };
        let mut w = self.lock();
        let img = self
            .dataset
            .image(image_id)
            .ok_or_else(|| SessionError::NotFound(format!("unknown image id {image_id}")))?;
        let round = w.experiment.round();
        let state = w.tasks.get(&image_id).map(|t| t.state).ok_or_else(|| {
            SessionError::NotFound(format!("image {image_id} is not queued for round {round}"))
        })?;
        if state == TaskState::Submitted {
            return Err(SessionError::Conflict(format!(
                "image {image_id} was already submitted for round {round}"
            )));
        }
        let boxes = parse_boxes(body.get("boxes"), img.width, img.height)?;
        if let Some(j) = w.journal.as_mut() {
            j.append(&Event::Submit {
                round,
                image_id,
                boxes: boxes.clone(),
            })?;
        }
        let task = w.mark_submitted(image_id, boxes)?;
        self.refresh(&w);
        Ok(task)
    }

    /// Completes the current round once its queue is fully submitted.
    ///
    /// `round` makes retries safe: asking to advance a round that already
    /// completed returns its stored record instead of failing.
    pub fn advance(&self, round: Option<usize>) -> SessionResult<RoundRecord> {
        let mut w = self.lock();
        let current = w.experiment.round();
        if let Some(r) = round {
            if r < current {
                return Ok(w.experiment.records()[r].clone());
            }
            if r > current {
                return Err(SessionError::Conflict(format!(
                    "round {r} is not open; the current round is {current}"
                )));
            }
        }
        if w.experiment.is_finished() {
            return Err(SessionError::Conflict("experiment is finished".into()));
        }
        if w.tasks.is_empty() {
            let drawn = w.ensure_batch();
            self.refresh(&w);
            drawn?;
        }
        let pending = w
            .tasks
            .values()
            .filter(|t| t.state == TaskState::Pending)
            .count();
        if pending > 0 {
            return Err(SessionError::Conflict(format!(
                "{pending} task(s) of round {current} are still pending"
            )));
        }
        let record = w.complete()?;
        if let Some(j) = w.journal.as_mut() {
            j.append(&Event::Advance {
                round: record.round,
                record: record.clone(),
            })?;
        }
        if let Some(out) = w.out.clone() {
            let report = w.experiment.report(w.label.clone());
            write_report(&report, out, &[ReportFormat::Csv, ReportFormat::Json])?;
        }
        if let Err(e) = w.ensure_batch() {
            eprintln!("drawing round {} failed: {e}", current + 1);
        }
        self.refresh(&w);
        Ok(record)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Writer> {
        self.writer.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Snapshot> {
        self.snapshot.read().unwrap_or_else(|p| p.into_inner())
    }

    fn refresh(&self, w: &Writer) {
        let snap = w.snapshot();
        *self.snapshot.write().unwrap_or_else(|p| p.into_inner()) = snap;
    }
}

impl Writer {
    fn replay(&mut self, events: &[Event], label: &str, config: &ExperimentConfig) -> Result<(), Error> {
        match events.first() {
            Some(Event::Start { dataset, config: c }) => {
                if dataset != label || c != config {
                    return Err(Error::InvalidArgument(
                        "journal was started for a different dataset or configuration".into(),
                    ));
                }
            }
            _ => return Err(Error::Report("journal does not begin with a start event".into())),
        }
        for (i, ev) in events.iter().enumerate().skip(1) {
            let diverged = |what: String| Error::Invariant(format!("journal line {}: {what}", i + 1));
            match ev {
                Event::Start { .. } => return Err(diverged("repeated start event".into())),
                Event::Submit {
                    round,
                    image_id,
                    boxes,
                } => {
                    self.ensure_batch()?;
                    if *round != self.experiment.round() {
                        return Err(diverged(format!("submission for round {round}")));
                    }
                    match self.tasks.get(image_id).map(|t| t.state) {
                        Some(TaskState::Pending) => {}
                        _ => return Err(diverged(format!("image {image_id} was not pending"))),
                    }
                    self.mark_submitted(*image_id, boxes.clone())?;
                }
                Event::Advance { round, record } => {
                    self.ensure_batch()?;
                    if *round != self.experiment.round() {
                        return Err(diverged(format!("advance of round {round}")));
                    }
                    let replayed = self.complete()?;
                    if &replayed != record {
                        return Err(diverged(format!(
                            "round {round} replays to a different record"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Draws the current round's batch and queues its tasks if needed.
    fn ensure_batch(&mut self) -> Result<(), Error> {
        if self.experiment.is_finished() || !self.tasks.is_empty() {
            return Ok(());
        }
        let round = self.experiment.round();
        match self.experiment.draw_batch() {
            Ok(batch) => {
                self.last_error = None;
                self.tasks = batch
                    .into_iter()
                    .map(|image_id| {
                        let task = AnnotationTask {
                            task_id: format!("{round}-{image_id}"),
                            image_id,
                            round,
                            state: TaskState::Pending,
                            boxes: None,
                        };
                        (image_id, task)
                    })
                    .collect();
                Ok(())
            }
            Err(e) => {
                self.last_error = Some(e.to_string());
                Err(e)
            }
        }
    }

    fn mark_submitted(&mut self, image_id: u64, boxes: Vec<BoundingBox>) -> Result<AnnotationTask, Error> {
        boxal_core::engine::validate_boxes(self.experiment.dataset(), image_id, &boxes)?;
        let task = self
            .tasks
            .get_mut(&image_id)
            .ok_or(Error::UnknownImage(image_id))?;
        task.state = TaskState::Submitted;
        task.boxes = Some(boxes);
        Ok(task.clone())
    }

    fn complete(&mut self) -> Result<RoundRecord, Error> {
        let annotations: Annotations = self
            .tasks
            .values()
            .map(|t| (t.image_id, t.boxes.clone().unwrap_or_default()))
            .collect();
        let record = self.experiment.complete_round(annotations)?;
        self.tasks.clear();
        Ok(record)
    }

    fn snapshot(&self) -> Snapshot {
        let e = &self.experiment;
        let state = if e.is_finished() {
            SessionState::Finished
        } else if self.tasks.is_empty() {
            SessionState::Stalled
        } else if self.tasks.values().any(|t| t.state == TaskState::Pending) {
            SessionState::Annotating
        } else {
            SessionState::Ready
        };
        Snapshot {
            status: ExperimentStatus {
                round: e.round(),
                labeled_count: e.pool().labeled().len(),
                pool_size: e.pool().size(),
                strategy: e.config().strategy.kind,
                state,
                rounds: e.config().rounds,
                last_error: self.last_error.clone(),
            },
            records: e.records().to_vec(),
            tasks: self.tasks.values().cloned().collect(),
        }
    }
}

/// Parses `boxes` as `[[x1,y1,x2,y2],…]` inside a `width`×`height` image,
/// collecting a reason for every offending entry.
pub fn parse_boxes(value: Option<&Value>, width: u32, height: u32) -> SessionResult<Vec<BoundingBox>> {
    let field = |field: String, reason: &str| FieldError {
        field,
        reason: reason.to_string(),
    };
    let items = match value {
        Some(Value::Array(items)) => items,
        Some(_) => return Err(SessionError::Invalid(vec![field("boxes".into(), "must be an array")])),
        None => return Err(SessionError::Invalid(vec![field("boxes".into(), "required")])),
    };
    let mut boxes = Vec::with_capacity(items.len());
    let mut errors = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let name = format!("boxes[{i}]");
        let coords: Option<Vec<f64>> = item
            .as_array()
            .filter(|a| a.len() == 4)
            .and_then(|a| a.iter().map(Value::as_f64).collect());
        let Some(c) = coords else {
            errors.push(field(name, "expected [x1, y1, x2, y2] with 4 numbers"));
            continue;
        };
        match BoundingBox::new(c[0], c[1], c[2], c[3]) {
            Err(Error::InvalidBox { reason, .. }) => errors.push(field(name, reason)),
            Err(e) => errors.push(field(name, &e.to_string())),
            Ok(b) if !b.within(width as f64, height as f64) => {
                errors.push(field(name, &format!("outside the {width}x{height} image")))
            }
            Ok(b) => boxes.push(b),
        }
    }
    if errors.is_empty() {
        Ok(boxes)
    } else {
        Err(SessionError::Invalid(errors))
    }
}
