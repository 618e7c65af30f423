use belieflab_core::simulation::{make_grid, ExperimentDesign, Grid};
use belieflab_core::Treatment;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SessionError;

/// Task ids: main tasks are numbered from 1 in presentation order,
/// practice tasks from 101 and comprehension questions from 201.
pub const PRACTICE_ID_BASE: u32 = 101;
pub const COMPREHENSION_ID_BASE: u32 = 201;

/// A comprehension question answered with an integer in `0..=100`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComprehensionQuestion {
    pub prompt: String,
    pub answer: u8,
}

pub fn default_questions() -> Vec<ComprehensionQuestion> {
    let q = |prompt: &str, answer| ComprehensionQuestion { prompt: prompt.into(), answer };
    vec![
        q("A grid has 30 white squares out of 100. What is the chance, in percent, that a randomly selected project is a success?", 30),
        q("The computer test is 80% reliable. If the selected project is a success, what is the chance, in percent, that the test is positive?", 80),
        q("With the same test, if the selected project is a failure, what is the chance, in percent, that the test is positive?", 20),
        q("You report 45 and the correct answer is 47. Are you paid for this report? Enter 1 for yes or 0 for no.", 1),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Master seed for task order, grids and payments; derived from the
    /// session id when absent.
    pub seed: Option<u64>,
    /// Signal accuracy for the whole session; drawn from the design's two
    /// levels when absent.
    pub accuracy: Option<u8>,
    pub subject_id: Option<String>,
    pub design: ExperimentDesign,
    pub practice_low: usize,
    pub practice_high: usize,
    pub comprehension: Vec<ComprehensionQuestion>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            seed: None,
            accuracy: None,
            subject_id: None,
            design: ExperimentDesign::default(),
            practice_low: 3,
            practice_high: 1,
            comprehension: default_questions(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTask {
    pub task_id: u32,
    pub treatment: Treatment,
    pub actual_prior: u8,
    pub is_practice: bool,
    pub grid: Grid,
}

/// Everything fixed at creation. Stored in the first log event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub session_id: String,
    pub subject_id: String,
    pub seed: u64,
    pub accuracy: u8,
    pub design: ExperimentDesign,
    pub comprehension: Vec<ComprehensionQuestion>,
    /// Presentation order: Low practice, Low block, High practice, High block.
    pub tasks: Vec<PlannedTask>,
}

impl SessionPlan {
    pub fn build(session_id: &str, default_seed: u64, config: &SessionConfig) -> Result<Self, SessionError> {
        let design = &config.design;
        design.validate().map_err(|e| SessionError::Config(e.to_string()))?;
        if config.comprehension.iter().any(|q| q.answer > 100) {
            return Err(SessionError::Config("comprehension answers must lie in 0..=100".into()));
        }
        let seed = config.seed.unwrap_or(default_seed);
        let accuracy = match config.accuracy {
            Some(a) if design.accuracies.contains(&a) => a,
            Some(a) => return Err(SessionError::Config(format!("accuracy {a} is not one of {:?}", design.accuracies))),
            None => {
                let mut pick = ChaCha8Rng::seed_from_u64(seed);
                pick.set_stream(1);
                design.accuracies[pick.random_range(0..2)]
            }
        };
        let subject_id = match &config.subject_id {
            Some(s) if s.trim().is_empty() => return Err(SessionError::Config("subject_id is empty".into())),
            Some(s) => s.clone(),
            None => session_id.to_string(),
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let main = design.task_sequence(&mut rng);
        // Practice grids avoid the all-black comprehension grid.
        let practice_priors: Vec<u8> = design.priors.iter().copied().filter(|p| *p != 0).collect();
        if practice_priors.is_empty() && config.practice_low + config.practice_high > 0 {
            return Err(SessionError::Config("practice tasks need a nonzero prior".into()));
        }
        let mut next_practice = PRACTICE_ID_BASE;
        let mut practice = |rng: &mut ChaCha8Rng, treatment, n: usize| -> Vec<(u32, Treatment, u8, bool)> {
            (0..n)
                .map(|_| {
                    let id = next_practice;
                    next_practice += 1;
                    (id, treatment, practice_priors[rng.random_range(0..practice_priors.len())], true)
                })
                .collect()
        };
        let mut order = practice(&mut rng, Treatment::Low, config.practice_low);
        order.extend(main.iter().filter(|t| t.treatment == Treatment::Low).map(|t| (t.task_id, t.treatment, t.actual_prior, false)));
        order.extend(practice(&mut rng, Treatment::High, config.practice_high));
        order.extend(main.iter().filter(|t| t.treatment == Treatment::High).map(|t| (t.task_id, t.treatment, t.actual_prior, false)));

        let tasks = order
            .into_iter()
            .map(|(task_id, treatment, actual_prior, is_practice)| {
                let grid = make_grid(u32::from(actual_prior), &mut rng).map_err(|e| SessionError::Config(e.to_string()))?;
                Ok(PlannedTask { task_id, treatment, actual_prior, is_practice, grid })
            })
            .collect::<Result<_, SessionError>>()?;
        Ok(Self {
            session_id: session_id.to_string(),
            subject_id,
            seed,
            accuracy,
            design: design.clone(),
            comprehension: config.comprehension.clone(),
            tasks,
        })
    }
}
