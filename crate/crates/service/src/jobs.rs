//! The job table.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use kratt_core::corpus::BookRecord;
use kratt_core::pipeline::{IndexingConfig, IndexingOutcome, Step};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

/// What a queued job will index.
#[derive(Debug)]
pub enum JobSource {
    /// An upload, already parsed into pages.
    Book(BookRecord),
    /// A remote resource, fetched by the worker.
    Url(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobEvent {
    pub state: JobState,
    pub step: Step,
    pub at_ms: u64,
}

#[derive(Debug, Clone)]
pub struct Job {
    pub id: String,
    pub state: JobState,
    pub step: Step,
    pub submitted_at: u64,
    pub started_at: Option<u64>,
    pub finished_at: Option<u64>,
    pub cfg: IndexingConfig,
    /// File name or URL.
    pub source: String,
    /// Unthresholded; present iff `state == Done`.
    pub outcome: Option<Arc<IndexingOutcome>>,
    /// Present iff `state == Failed`.
    pub error: Option<String>,
    pub events: Vec<JobEvent>,
}

/// `Job` without the outcome payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: String,
    pub state: JobState,
    pub step: Step,
    pub step_label: String,
    pub submitted_at: u64,
    pub started_at: Option<u64>,
    pub finished_at: Option<u64>,
    pub cfg: IndexingConfig,
    pub source: String,
    pub error: Option<String>,
    pub pages_used: Option<usize>,
    pub events: Vec<JobEvent>,
}

impl Job {
    pub fn new(id: String, cfg: IndexingConfig, source: String) -> Job {
        let now = now_ms();
        Job {
            id,
            state: JobState::Queued,
            step: Step::Converting,
            submitted_at: now,
            started_at: None,
            finished_at: None,
            cfg,
            source,
            outcome: None,
            error: None,
            events: vec![JobEvent {
                state: JobState::Queued,
                step: Step::Converting,
                at_ms: now,
            }],
        }
    }

    pub fn status(&self) -> JobStatus {
        JobStatus {
            id: self.id.clone(),
            state: self.state,
            step: self.step,
            step_label: self.step.label().to_string(),
            submitted_at: self.submitted_at,
            started_at: self.started_at,
            finished_at: self.finished_at,
            cfg: self.cfg,
            source: self.source.clone(),
            error: self.error.clone(),
            pages_used: self.outcome.as_ref().map(|o| o.pages_used),
            events: self.events.clone(),
        }
    }

    fn record(&mut self) {
        self.events.push(JobEvent {
            state: self.state,
            step: self.step,
            at_ms: now_ms(),
        });
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Jobs by id; safe for concurrent readers and writers.
#[derive(Debug, Default)]
pub struct JobStore {
    jobs: RwLock<HashMap<String, Job>>,
}

impl JobStore {
    pub fn insert(&self, job: Job) {
        self.jobs.write().unwrap().insert(job.id.clone(), job);
    }

    pub fn remove(&self, id: &str) -> Option<Job> {
        self.jobs.write().unwrap().remove(id)
    }

    pub fn get(&self, id: &str) -> Option<Job> {
        self.jobs.read().unwrap().get(id).cloned()
    }

    pub fn status(&self, id: &str) -> Option<JobStatus> {
        self.jobs.read().unwrap().get(id).map(Job::status)
    }

    pub fn len(&self) -> usize {
        self.jobs.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count(&self, state: JobState) -> usize {
        self.jobs.read().unwrap().values().filter(|j| j.state == state).count()
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut Job)) {
        if let Some(job) = self.jobs.write().unwrap().get_mut(id) {
            f(job);
        }
    }

    pub fn mark_running(&self, id: &str) {
        self.update(id, |job| {
            if job.state == JobState::Queued {
                job.state = JobState::Running;
                job.started_at = Some(now_ms());
                job.record();
            }
        });
    }

    /// Moves a running job to `step`; earlier steps are ignored.
    pub fn advance(&self, id: &str, step: Step) {
        self.update(id, |job| {
            if job.state == JobState::Running && step > job.step {
                job.step = step;
                job.record();
            }
        });
    }

    pub fn finish(&self, id: &str, outcome: IndexingOutcome) {
        self.update(id, |job| {
            if job.state == JobState::Running {
                job.state = JobState::Done;
                job.step = Step::Finished;
                job.outcome = Some(Arc::new(outcome));
                job.finished_at = Some(now_ms());
                job.record();
            }
        });
    }

    /// Fails a queued or running job; the step stays where it stopped.
    pub fn fail(&self, id: &str, error: String) {
        self.update(id, |job| {
            if matches!(job.state, JobState::Queued | JobState::Running) {
                job.state = JobState::Failed;
                job.error = Some(error);
                job.finished_at = Some(now_ms());
                job.record();
            }
        });
    }

    /// Drops finished jobs older than `retention` at time `now_ms`; returns
    /// how many were removed.
    pub fn purge_expired(&self, now_ms: u64, retention: Duration) -> usize {
        let cutoff = now_ms.saturating_sub(retention.as_millis() as u64);
        let mut jobs = self.jobs.write().unwrap();
        let before = jobs.len();
        jobs.retain(|_, j| j.finished_at.is_none_or(|t| t >= cutoff));
        before - jobs.len()
    }
}
