//! Labeling sessions and their append-only logs.
//!
//! Each session is one JSON-lines file `<id>.jsonl`: a `created` event
//! followed by `label` and `propagated` events. Replaying the file rebuilds
//! the session exactly, including the last propagated map.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hsal_core::experiment::overall_accuracy;
use hsal_core::land::LabelState;
use hsal_core::Model;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::ApiError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        id: String,
        dataset: String,
        t: u32,
        num_classes: Option<usize>,
    },
    Label {
        index: usize,
        class: u32,
    },
    Propagated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    AwaitingLabels,
    Propagated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub class: u32,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationSummary {
    pub status: Status,
    pub answered: usize,
    pub counts: Vec<ClassCount>,
    /// Overall accuracy against the dataset's ground truth, when attached.
    pub accuracy: Option<f64>,
}

pub struct Session {
    pub id: String,
    pub dataset: Arc<Dataset>,
    pub model: Arc<Model>,
    pub t: u32,
    pub requested_classes: Option<usize>,
    /// Answers in first-submission order; resubmissions overwrite in place.
    answers: Vec<(usize, u32)>,
    positions: HashMap<usize, usize>,
    pub status: Status,
    pub map: Option<Vec<u32>>,
    pub summary: Option<PropagationSummary>,
    pub propagations: usize,
    log: Option<File>,
}

impl Session {
    pub fn new(id: String, dataset: Arc<Dataset>, model: Arc<Model>, t: u32, requested_classes: Option<usize>) -> Self {
        Self {
            id,
            dataset,
            model,
            t,
            requested_classes,
            answers: Vec::new(),
            positions: HashMap::new(),
            status: Status::AwaitingLabels,
            map: None,
            summary: None,
            propagations: 0,
            log: None,
        }
    }

    pub fn created_event(&self) -> Event {
        Event::Created {
            id: self.id.clone(),
            dataset: self.dataset.name.clone(),
            t: self.t,
            num_classes: self.requested_classes,
        }
    }

    /// Opens the log for appending and, for a new session, writes the `created` event.
    pub fn attach_log(&mut self, path: &Path, fresh: bool) -> Result<(), ApiError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ApiError::internal(format!("cannot open session log {}: {e}", path.display())))?;
        self.log = Some(file);
        if fresh {
            self.append(&self.created_event())?;
        }
        Ok(())
    }

    fn append(&mut self, event: &Event) -> Result<(), ApiError> {
        let Some(file) = self.log.as_mut() else { return Ok(()) };
        let mut line = serde_json::to_string(event).map_err(|e| ApiError::internal(e.to_string()))?;
        line.push('\n');
        file.write_all(line.as_bytes())
            .and_then(|_| file.sync_data())
            .map_err(|e| ApiError::internal(format!("session log write failed: {e}")))
    }

    pub fn answers(&self) -> &[(usize, u32)] {
        &self.answers
    }

    pub fn answer_of(&self, index: usize) -> Option<u32> {
        self.positions.get(&index).map(|&p| self.answers[p].1)
    }

    /// Records an answer. Returns `false` when it repeats the stored answer, which changes nothing.
    pub fn submit(&mut self, index: usize, class: u32) -> Result<bool, ApiError> {
        let n = self.dataset.n();
        if index >= n {
            return Err(ApiError::not_found(format!("index {index} is not in the query order (n = {n})")));
        }
        let c = self.dataset.num_classes();
        if class == 0 || class as usize > c {
            return Err(ApiError::unprocessable(format!("class must be in 1..={c}, got {class}")));
        }
        if self.answer_of(index) == Some(class) {
            return Ok(false);
        }
        self.append(&Event::Label { index, class })?;
        self.apply_label(index, class);
        Ok(true)
    }

    fn apply_label(&mut self, index: usize, class: u32) {
        match self.positions.get(&index) {
            Some(&p) => self.answers[p].1 = class,
            None => {
                self.positions.insert(index, self.answers.len());
                self.answers.push((index, class));
            }
        }
        self.status = Status::AwaitingLabels;
    }

    /// Propagates the current answers. Repeating it with unchanged answers is a no-op.
    pub fn propagate(&mut self) -> Result<PropagationSummary, ApiError> {
        if self.answers.is_empty() {
            return Err(ApiError::conflict("no answers yet; submit at least one label before propagating"));
        }
        if self.status == Status::Propagated {
            if let Some(summary) = &self.summary {
                return Ok(summary.clone());
            }
        }
        let summary = self.compute()?;
        self.append(&Event::Propagated)?;
        Ok(summary)
    }

    fn compute(&mut self) -> Result<PropagationSummary, ApiError> {
        let state = LabelState::from_answers(self.dataset.n(), &self.answers).map_err(|e| ApiError::unprocessable(e.to_string()))?;
        let labels = self.model.propagate(&state).map_err(|e| ApiError::internal(e.to_string()))?;
        let c = self.dataset.num_classes();
        let mut counts = vec![0usize; c + 1];
        for &l in &labels.y {
            counts[(l as usize).min(c)] += 1;
        }
        let accuracy = match &self.dataset.truth {
            Some(truth) => Some(overall_accuracy(&labels.y, truth).map_err(|e| ApiError::internal(e.to_string()))?),
            None => None,
        };
        let summary = PropagationSummary {
            status: Status::Propagated,
            answered: self.answers.len(),
            counts: (1..=c).map(|k| ClassCount { class: k as u32, count: counts[k] }).collect(),
            accuracy,
        };
        self.map = Some(labels.y);
        self.status = Status::Propagated;
        self.summary = Some(summary.clone());
        self.propagations += 1;
        Ok(summary)
    }

    /// Re-applies logged events after the `created` event.
    pub fn replay(&mut self, events: &[Event]) -> Result<(), ApiError> {
        for event in events {
            match *event {
                Event::Created { .. } => return Err(ApiError::internal("duplicate created event")),
                Event::Label { index, class } => self.apply_label(index, class),
                Event::Propagated => {
                    self.compute()?;
                }
            }
        }
        Ok(())
    }
}

pub fn log_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.jsonl"))
}

/// Reads a session log. A torn final line (crash mid-write) is ignored.
pub fn read_log(path: &Path) -> Result<Vec<Event>, String> {
    let file = File::open(path).map_err(|e| e.to_string())?;
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let mut events = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(event) => events.push(event),
            Err(_) if i + 1 == lines.len() => log::warn!("{}: ignoring torn last line", path.display()),
            Err(e) => return Err(format!("line {}: {e}", i + 1)),
        }
    }
    Ok(events)
}
