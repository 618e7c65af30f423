use belieflab_core::elicitation::{payment_draw, PaymentDraw};
use belieflab_core::{ResponseRecord, Signal, Treatment};
use serde::{Deserialize, Serialize};

use super::plan::{SessionPlan, COMPREHENSION_ID_BASE};
use super::SessionError;

/// Show-up fee added to every payment summary, in dollars.
pub const SHOW_UP_FEE: f64 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Comprehension,
    Grid,
    Prior,
    PriorConfidence,
    Update,
    UpdateConfidence,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub kind: StepKind,
    pub task: Option<usize>,
    pub question: Option<usize>,
    pub signal: Option<Signal>,
}

/// Every step of a session in order. Within a task: grid, prior, prior
/// confidence, the update for each signal branch, then the confidence for
/// each branch. The all-failure grid only has the positive branch.
pub fn step_list(plan: &SessionPlan) -> Vec<Step> {
    let mut steps: Vec<Step> = (0..plan.comprehension.len())
        .map(|q| Step { kind: StepKind::Comprehension, task: None, question: Some(q), signal: None })
        .collect();
    for (i, task) in plan.tasks.iter().enumerate() {
        let step = |kind, signal| Step { kind, task: Some(i), question: None, signal };
        steps.push(step(StepKind::Grid, None));
        steps.push(step(StepKind::Prior, None));
        steps.push(step(StepKind::PriorConfidence, None));
        let branches: &[Signal] = if task.actual_prior == 0 { &[Signal::Positive] } else { &Signal::ALL };
        for &s in branches {
            steps.push(step(StepKind::Update, Some(s)));
        }
        for &s in branches {
            steps.push(step(StepKind::UpdateConfidence, Some(s)));
        }
    }
    steps
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaymentSummary {
    pub payment_seed: u64,
    pub draws: Vec<PaymentDraw>,
    pub earnings: f64,
    pub show_up_fee: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Created { plan: SessionPlan },
    GridShown { token: u64 },
    Response {
        token: u64,
        value: Option<u8>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client_shown_ms: Option<u32>,
    },
    Finalized { summary: PaymentSummary },
}

/// One line of a session's event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub timestamp_ms: u64,
    pub session_id: String,
    #[serde(flatten)]
    pub event: Event,
}

/// Result of an accepted submission. Re-sending the same token returns the
/// original receipt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub token: u64,
    pub kind: StepKind,
    pub value: Option<u8>,
    pub next_token: u64,
    pub complete: bool,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridView {
    pub side: usize,
    pub cells: Vec<bool>,
}

/// Task metadata the client may see. The white count is deliberately
/// absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: u32,
    pub treatment: Treatment,
    pub is_practice: bool,
    pub accuracy: u8,
    pub display_ms: u32,
    pub min_view_ms: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepView {
    pub session_id: String,
    pub token: u64,
    pub kind: StepKind,
    /// Zero-based position and number of steps.
    pub index: usize,
    pub total: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signal: Option<Signal>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
}

/// Session state, obtained by folding the event log.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub plan: SessionPlan,
    pub steps: Vec<Step>,
    pub answers: Vec<Option<u8>>,
    pub grid_shown_at: Vec<Option<u64>>,
    pub client_shown_ms: Vec<Option<u32>>,
    pub receipts: Vec<Receipt>,
    pub cursor: usize,
    pub finalized: Option<PaymentSummary>,
    pub last_timestamp: u64,
    pub n_events: usize,
}

impl SessionState {
    pub fn new(plan: SessionPlan, timestamp_ms: u64) -> Self {
        let steps = step_list(&plan);
        let n = steps.len();
        Self {
            plan,
            steps,
            answers: vec![None; n],
            grid_shown_at: vec![None; n],
            client_shown_ms: vec![None; n],
            receipts: Vec::with_capacity(n),
            cursor: 0,
            finalized: None,
            last_timestamp: timestamp_ms,
            n_events: 1,
        }
    }

    /// Rebuilds a session from its full event log.
    pub fn replay(events: &[EventRecord]) -> Result<Self, SessionError> {
        let corrupt = |m: &str| SessionError::Corrupt(m.to_string());
        let (first, rest) = events.split_first().ok_or_else(|| corrupt("empty event log"))?;
        let Event::Created { plan } = &first.event else {
            return Err(corrupt("log does not start with a creation event"));
        };
        let mut state = Self::new(plan.clone(), first.timestamp_ms);
        for e in rest {
            if e.session_id != state.plan.session_id {
                return Err(corrupt("event for another session"));
            }
            state.apply(e)?;
        }
        Ok(state)
    }

    /// Applies one event. Live sessions and replay both go through here.
    pub fn apply(&mut self, record: &EventRecord) -> Result<(), SessionError> {
        if record.timestamp_ms < self.last_timestamp {
            return Err(SessionError::Corrupt("timestamps go backwards".into()));
        }
        match &record.event {
            Event::Created { .. } => return Err(SessionError::Corrupt("second creation event".into())),
            Event::GridShown { token } => {
                let i = self.check_cursor(*token)?;
                if self.steps[i].kind != StepKind::Grid || self.grid_shown_at[i].is_some() {
                    return Err(SessionError::Corrupt(format!("unexpected grid event at step {token}")));
                }
                self.grid_shown_at[i] = Some(record.timestamp_ms);
            }
            Event::Response { token, value, client_shown_ms } => {
                let i = self.check_cursor(*token)?;
                self.answers[i] = *value;
                self.client_shown_ms[i] = *client_shown_ms;
                self.cursor += 1;
                self.receipts.push(Receipt {
                    token: *token,
                    kind: self.steps[i].kind,
                    value: *value,
                    next_token: self.cursor as u64,
                    complete: self.is_complete(),
                    timestamp_ms: record.timestamp_ms,
                });
            }
            Event::Finalized { summary } => {
                if !self.is_complete() || self.finalized.is_some() {
                    return Err(SessionError::Corrupt("finalization out of place".into()));
                }
                self.finalized = Some(summary.clone());
            }
        }
        self.last_timestamp = record.timestamp_ms;
        self.n_events += 1;
        Ok(())
    }

    fn check_cursor(&self, token: u64) -> Result<usize, SessionError> {
        if token != self.cursor as u64 || self.cursor >= self.steps.len() {
            return Err(SessionError::Corrupt(format!("event for step {token} while at {}", self.cursor)));
        }
        Ok(self.cursor)
    }

    pub fn is_complete(&self) -> bool {
        self.cursor == self.steps.len()
    }

    pub fn current_step(&self) -> Option<Step> {
        self.steps.get(self.cursor).copied()
    }

    pub fn view(&self) -> StepView {
        let base = StepView {
            session_id: self.plan.session_id.clone(),
            token: self.cursor as u64,
            kind: StepKind::Done,
            index: self.cursor,
            total: self.steps.len(),
            task: None,
            grid: None,
            signal: None,
            question: None,
        };
        let Some(step) = self.current_step() else { return base };
        let design = &self.plan.design;
        let task = step.task.map(|i| {
            let t = &self.plan.tasks[i];
            TaskView {
                task_id: t.task_id,
                treatment: t.treatment,
                is_practice: t.is_practice,
                accuracy: self.plan.accuracy,
                display_ms: design.display_ms(t.treatment),
                min_view_ms: self.min_view_ms(t.treatment),
            }
        });
        let grid = match (step.kind, step.task) {
            (StepKind::Grid, Some(i)) => {
                Some(GridView { side: 10, cells: self.plan.tasks[i].grid.cells.clone() })
            }
            _ => None,
        };
        StepView {
            kind: step.kind,
            task,
            grid,
            signal: step.signal,
            question: step.question.map(|q| self.plan.comprehension[q].prompt.clone()),
            ..base
        }
    }

    /// Earliest time after display at which a grid may be dismissed.
    pub fn min_view_ms(&self, treatment: Treatment) -> u32 {
        match treatment {
            Treatment::Low => 0,
            Treatment::High => self.plan.design.high_min_view_ms,
        }
    }

    fn answer(&self, task: usize, kind: StepKind, signal: Option<Signal>) -> Option<u8> {
        let i = self.steps.iter().position(|s| s.task == Some(task) && s.kind == kind && s.signal == signal)?;
        self.answers[i]
    }

    /// Rows for every fully answered task and comprehension question, in
    /// presentation order.
    pub fn records(&self) -> Vec<ResponseRecord> {
        let plan = &self.plan;
        let mut out = Vec::new();
        for (q, question) in plan.comprehension.iter().enumerate() {
            let Some(i) = self.steps.iter().position(|s| s.question == Some(q)) else { continue };
            let Some(given) = self.answers[i] else { continue };
            out.push(ResponseRecord {
                subject_id: plan.subject_id.clone(),
                treatment: Treatment::Low,
                task_id: COMPREHENSION_ID_BASE + q as u32,
                actual_prior: question.answer,
                reported_prior: f64::from(given),
                prior_confidence: 0.0,
                signal_accuracy: plan.accuracy,
                signal: Signal::Positive,
                reported_update: 0.0,
                update_confidence: 0.0,
                is_practice: false,
                is_comprehension: true,
            });
        }
        for (i, task) in plan.tasks.iter().enumerate() {
            let branches: &[Signal] = if task.actual_prior == 0 { &[Signal::Positive] } else { &Signal::ALL };
            let (Some(prior), Some(prior_conf)) =
                (self.answer(i, StepKind::Prior, None), self.answer(i, StepKind::PriorConfidence, None))
            else {
                continue;
            };
            let mut rows = Vec::new();
            for &s in branches {
                let (Some(update), Some(conf)) =
                    (self.answer(i, StepKind::Update, Some(s)), self.answer(i, StepKind::UpdateConfidence, Some(s)))
                else {
                    break;
                };
                rows.push(ResponseRecord {
                    subject_id: plan.subject_id.clone(),
                    treatment: task.treatment,
                    task_id: task.task_id,
                    actual_prior: task.actual_prior,
                    reported_prior: f64::from(prior),
                    prior_confidence: f64::from(prior_conf),
                    signal_accuracy: plan.accuracy,
                    signal: s,
                    reported_update: f64::from(update),
                    update_confidence: f64::from(conf),
                    is_practice: task.is_practice,
                    is_comprehension: false,
                });
            }
            if rows.len() == branches.len() {
                out.extend(rows);
            }
        }
        out
    }

    /// Draws the four payments for a completed session.
    pub fn payment_summary(&self, payment_seed: u64) -> Result<PaymentSummary, SessionError> {
        let payments = payment_draw(&self.records(), payment_seed)?;
        let earnings = payments.total();
        Ok(PaymentSummary {
            payment_seed,
            draws: payments.draws,
            earnings,
            show_up_fee: SHOW_UP_FEE,
            total: earnings + SHOW_UP_FEE,
        })
    }
}
