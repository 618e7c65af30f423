//! Live experiment sessions.
//!
//! A session walks a subject through the comprehension questions and every
//! task step in a fixed order. Each change is first appended to the
//! session's JSON-lines event log and then applied with the same fold that
//! replays the log, so a restarted service resumes exactly where it stopped.
//! Step tokens are the step's sequence number: resending an answered token
//! returns the original receipt, a token ahead of the cursor is refused.

mod clock;
mod plan;
mod state;

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use belieflab_core::elicitation::ElicitationError;
use belieflab_core::ResponseRecord;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

pub use clock::{Clock, ManualClock, SystemClock};
pub use plan::{
    default_questions, ComprehensionQuestion, PlannedTask, SessionConfig, SessionPlan, COMPREHENSION_ID_BASE,
    PRACTICE_ID_BASE,
};
pub use state::{
    step_list, Event, EventRecord, GridView, PaymentSummary, Receipt, SessionState, Step, StepKind, StepView, TaskView,
    SHOW_UP_FEE,
};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session {0} is already finalized")]
    Finalized(String),
    #[error("expected step token {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("invalid response: {0}")]
    Invalid(String),
    #[error("the grid must stay up for {required_ms} ms; proceeded after {elapsed_ms} ms")]
    TooEarly { elapsed_ms: u64, required_ms: u64 },
    #[error("the grid for step {0} has not been served yet")]
    GridNotShown(u64),
    #[error("session still has {remaining} unanswered steps")]
    Incomplete { remaining: usize },
    #[error("invalid session config: {0}")]
    Config(String),
    #[error("corrupt event log: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Payment(#[from] ElicitationError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A response to the step identified by `token`. Grid steps take no value
/// and may report how long the client actually showed the grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub token: u64,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub client_shown_ms: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub session_id: String,
    pub subject_id: String,
    pub seed: u64,
    pub accuracy: u8,
    pub total_steps: usize,
    pub n_tasks: usize,
}

struct Live {
    state: SessionState,
    log: Option<File>,
}

/// Thread-safe registry of sessions. Requests to one session are
/// serialised by that session's lock; different sessions proceed in
/// parallel.
pub struct SessionService {
    data_dir: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Live>>>>,
}

impl SessionService {
    /// Sessions are persisted under `data_dir` when given, else kept only
    /// in memory.
    pub fn new(data_dir: Option<PathBuf>, clock: Arc<dyn Clock>) -> io::Result<Self> {
        if let Some(dir) = &data_dir {
            fs::create_dir_all(dir)?;
        }
        Ok(Self { data_dir, clock, sessions: Mutex::new(HashMap::new()) })
    }

    pub fn log_path(&self, session_id: &str) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join(format!("{session_id}.jsonl")))
    }

    pub fn create(&self, config: &SessionConfig) -> Result<SessionDescriptor, SessionError> {
        let id = Uuid::new_v4();
        let bytes = id.as_bytes();
        let default_seed = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
        let session_id = id.to_string();
        let plan = SessionPlan::build(&session_id, default_seed, config)?;
        let now = self.clock.now_ms();
        let record = EventRecord { timestamp_ms: now, session_id: session_id.clone(), event: Event::Created { plan: plan.clone() } };
        let log = match self.log_path(&session_id) {
            Some(path) => {
                let mut file = OpenOptions::new().create_new(true).append(true).open(path)?;
                write_event(&mut file, &record)?;
                Some(file)
            }
            None => None,
        };
        let state = SessionState::new(plan, now);
        let descriptor = SessionDescriptor {
            session_id: session_id.clone(),
            subject_id: state.plan.subject_id.clone(),
            seed: state.plan.seed,
            accuracy: state.plan.accuracy,
            total_steps: state.steps.len(),
            n_tasks: state.plan.tasks.len(),
        };
        self.sessions.lock().expect("registry lock").insert(session_id, Arc::new(Mutex::new(Live { state, log })));
        Ok(descriptor)
    }

    fn live(&self, session_id: &str) -> Result<Arc<Mutex<Live>>, SessionError> {
        let mut sessions = self.sessions.lock().expect("registry lock");
        if let Some(live) = sessions.get(session_id) {
            return Ok(live.clone());
        }
        // Ids are UUIDs; anything else never reaches the file system.
        let unknown = || SessionError::UnknownSession(session_id.to_string());
        Uuid::parse_str(session_id).map_err(|_| unknown())?;
        let path = self.log_path(session_id).ok_or_else(unknown)?;
        if !path.exists() {
            return Err(unknown());
        }
        let state = SessionState::replay(&read_events(&path)?)?;
        let log = OpenOptions::new().append(true).open(&path)?;
        let live = Arc::new(Mutex::new(Live { state, log: Some(log) }));
        sessions.insert(session_id.to_string(), live.clone());
        Ok(live)
    }

    fn with_session<T>(
        &self,
        session_id: &str,
        f: impl FnOnce(&mut Live, u64) -> Result<T, SessionError>,
    ) -> Result<T, SessionError> {
        let live = self.live(session_id)?;
        let mut guard = live.lock().expect("session lock");
        // Event times never decrease, even if the wall clock does.
        let now = self.clock.now_ms().max(guard.state.last_timestamp);
        f(&mut guard, now)
    }

    /// What the client must render next. Serving a grid for the first time
    /// records the moment it was shown.
    pub fn next_step(&self, session_id: &str) -> Result<StepView, SessionError> {
        self.with_session(session_id, |live, now| {
            if live.state.finalized.is_some() {
                return Err(SessionError::Finalized(session_id.to_string()));
            }
            if let Some(step) = live.state.current_step() {
                let i = live.state.cursor;
                if step.kind == StepKind::Grid && live.state.grid_shown_at[i].is_none() {
                    live.commit(now, Event::GridShown { token: i as u64 })?;
                }
            }
            Ok(live.state.view())
        })
    }

    pub fn submit(&self, session_id: &str, submission: &Submission) -> Result<Receipt, SessionError> {
        self.with_session(session_id, |live, now| {
            let state = &live.state;
            let cursor = state.cursor as u64;
            if submission.token < cursor {
                return Ok(state.receipts[submission.token as usize].clone());
            }
            if state.finalized.is_some() {
                return Err(SessionError::Finalized(session_id.to_string()));
            }
            let step = match state.current_step() {
                Some(step) if submission.token == cursor => step,
                _ => return Err(SessionError::OutOfOrder { expected: cursor, got: submission.token }),
            };
            let value = if step.kind == StepKind::Grid {
                let shown = state.grid_shown_at[state.cursor].ok_or(SessionError::GridNotShown(cursor))?;
                let task = &state.plan.tasks[step.task.expect("grid steps belong to a task")];
                let required = u64::from(state.min_view_ms(task.treatment));
                let elapsed = now - shown;
                if elapsed < required {
                    return Err(SessionError::TooEarly { elapsed_ms: elapsed, required_ms: required });
                }
                None
            } else {
                Some(integer_percent(submission.value)?)
            };
            let client_shown_ms = if step.kind == StepKind::Grid { submission.client_shown_ms } else { None };
            live.commit(now, Event::Response { token: cursor, value, client_shown_ms })?;
            Ok(live.state.receipts.last().expect("just recorded").clone())
        })
    }

    /// Draws payments once; later calls return the same summary. The draw
    /// uses `payment_seed`, or one derived from the session seed.
    pub fn finalize(&self, session_id: &str, payment_seed: Option<u64>) -> Result<PaymentSummary, SessionError> {
        self.with_session(session_id, |live, now| {
            if let Some(summary) = &live.state.finalized {
                return Ok(summary.clone());
            }
            if !live.state.is_complete() {
                return Err(SessionError::Incomplete { remaining: live.state.steps.len() - live.state.cursor });
            }
            let seed = payment_seed.unwrap_or(live.state.plan.seed ^ 0x9e37_79b9_7f4a_7c15);
            let summary = live.state.payment_summary(seed)?;
            live.commit(now, Event::Finalized { summary: summary.clone() })?;
            Ok(summary)
        })
    }

    /// Rows of every fully answered task so far.
    pub fn export(&self, session_id: &str) -> Result<Vec<ResponseRecord>, SessionError> {
        self.with_session(session_id, |live, _| Ok(live.state.records()))
    }

    /// A copy of the current state.
    pub fn snapshot(&self, session_id: &str) -> Result<SessionState, SessionError> {
        self.with_session(session_id, |live, _| Ok(live.state.clone()))
    }
}

impl Live {
    fn commit(&mut self, now: u64, event: Event) -> Result<(), SessionError> {
        let record = EventRecord { timestamp_ms: now, session_id: self.state.plan.session_id.clone(), event };
        if let Some(file) = &mut self.log {
            write_event(file, &record)?;
        }
        self.state.apply(&record)
    }
}

fn write_event(file: &mut File, record: &EventRecord) -> io::Result<()> {
    let mut line = serde_json::to_string(record).map_err(io::Error::other)?;
    line.push('\n');
    file.write_all(line.as_bytes())?;
    file.flush()
}

pub fn read_events(path: &Path) -> Result<Vec<EventRecord>, SessionError> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line)
            .map_err(|e| SessionError::Corrupt(format!("{} line {}: {e}", path.display(), i + 1)))?;
        events.push(event);
    }
    Ok(events)
}

fn integer_percent(value: Option<f64>) -> Result<u8, SessionError> {
    let v = value.ok_or_else(|| SessionError::Invalid("a value is required".into()))?;
    if v.fract() != 0.0 || !(0.0..=100.0).contains(&v) {
        return Err(SessionError::Invalid(format!("{v} is not an integer between 0 and 100")));
    }
    Ok(v as u8)
}
