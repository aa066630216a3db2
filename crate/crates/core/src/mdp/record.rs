//! Line-delimited JSON record form of trajectories and states.

use serde::{Deserialize, Serialize};

use super::{State, Trajectory};

/// Wire record for one trajectory (or state prefix). Field order is fixed;
/// files of these records must survive read -> write byte-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub question_id: String,
    pub prompt: String,
    pub steps: Vec<String>,
    pub rewards: Vec<f64>,
    pub total_return: f64,
    pub final_answer: Option<String>,
    pub terminal_reason: Option<String>,
}

impl TrajectoryRecord {
    pub fn from_trajectory(t: &Trajectory) -> Self {
        TrajectoryRecord {
            question_id: t.question.id.clone(),
            prompt: t.question.prompt.clone(),
            steps: t.steps.iter().map(|s| s.text.clone()).collect(),
            rewards: t.rewards.clone(),
            total_return: t.total_return,
            final_answer: Some(t.final_answer.clone()),
            terminal_reason: Some(t.terminal_reason.as_str().to_string()),
        }
    }

    /// A state renders as a trajectory prefix without rewards or an answer.
    pub fn from_state(s: &State) -> Self {
        TrajectoryRecord {
            question_id: s.question().id.clone(),
            prompt: s.question().prompt.clone(),
            steps: s.steps().iter().map(|st| st.text.clone()).collect(),
            rewards: Vec::new(),
            total_return: 0.0,
            final_answer: None,
            terminal_reason: s.terminal_reason().map(|r| r.as_str().to_string()),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}
