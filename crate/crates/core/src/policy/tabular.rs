//! Map-backed tabular policy: an explicit action distribution per state.

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;

use crate::mdp::{SegmentMode, State, Step};

use super::{sample_index, top_k_indices, AdapterKind, PolicyAdapter, PolicyError, StepCandidate};

#[derive(Debug, Clone)]
pub struct TabularAction {
    pub text: String,
    pub prob: f64,
    pub eos: bool,
}

impl TabularAction {
    pub fn new(text: impl Into<String>, prob: f64) -> Self {
        TabularAction { text: text.into(), prob, eos: false }
    }

    pub fn eos(prob: f64) -> Self {
        TabularAction { text: String::new(), prob, eos: true }
    }
}

/// Policy with explicit per-state action probabilities, keyed by the rendered
/// state text. Scores are log-probabilities of the untempered distribution.
pub struct TabularPolicy {
    table: HashMap<String, Vec<TabularAction>>,
    mode: SegmentMode,
}

impl TabularPolicy {
    pub fn new(mode: SegmentMode) -> Self {
        TabularPolicy { table: HashMap::new(), mode }
    }

    pub fn insert(&mut self, state_text: impl Into<String>, actions: Vec<TabularAction>) {
        self.table.insert(state_text.into(), actions);
    }

    fn support(&self, state: &State) -> Result<&[TabularAction], PolicyError> {
        match self.table.get(state.text()) {
            Some(actions) if !actions.is_empty() => Ok(actions),
            _ => Err(PolicyError::ExhaustedSupport),
        }
    }

    fn candidate(&self, action: &TabularAction) -> StepCandidate {
        let step = if action.eos {
            Step::end_of_sequence(self.mode)
        } else {
            Step { text: action.text.clone(), mode: self.mode, eos: false }
        };
        StepCandidate { step, score: action.prob.ln(), rank: 0 }
    }
}

impl PolicyAdapter for TabularPolicy {
    fn kind(&self) -> AdapterKind {
        AdapterKind::Tabular
    }

    fn propose(
        &self,
        state: &State,
        k: usize,
        _temperature: f64,
    ) -> Result<Vec<StepCandidate>, PolicyError> {
        let actions = self.support(state)?;
        let weighted: Vec<(String, f64)> =
            actions.iter().map(|a| (a.text.clone(), a.prob)).collect();
        Ok(top_k_indices(&weighted, k)
            .into_iter()
            .map(|i| self.candidate(&actions[i]))
            .collect())
    }

    fn sample_step(
        &self,
        state: &State,
        temperature: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<StepCandidate, PolicyError> {
        let actions = self.support(state)?;
        let weighted: Vec<(String, f64)> =
            actions.iter().map(|a| (a.text.clone(), a.prob)).collect();
        let idx = sample_index(&weighted, temperature, rng)?;
        Ok(self.candidate(&actions[idx]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{AnswerChecker, Question};
    use std::sync::Arc;

    fn state_with(prompt: &str) -> State {
        State::initial(Arc::new(
            Question::new("q", prompt, AnswerChecker::EnvOracle { expected: "x".into() }).unwrap(),
        ))
    }

    #[test]
    fn top_k_is_argmax_of_known_distribution() {
        let mut p = TabularPolicy::new(SegmentMode::Line);
        p.insert(
            "s",
            vec![
                TabularAction::new("x", 0.5),
                TabularAction::new("y", 0.3),
                TabularAction::new("z", 0.2),
            ],
        );
        let cands = p.propose(&state_with("s"), 2, 1.0).unwrap();
        let texts: Vec<&str> = cands.iter().map(|c| c.step.text.as_str()).collect();
        assert_eq!(texts, ["x", "y"]);
        assert!((cands[0].score - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ties_break_lexicographically() {
        let mut p = TabularPolicy::new(SegmentMode::Line);
        p.insert(
            "s",
            vec![
                TabularAction::new("beta", 0.5),
                TabularAction::new("alpha", 0.5),
            ],
        );
        let cands = p.propose(&state_with("s"), 1, 1.0).unwrap();
        assert_eq!(cands[0].step.text, "alpha");
    }

    #[test]
    fn missing_state_is_exhausted_support() {
        let p = TabularPolicy::new(SegmentMode::Line);
        let err = p.propose(&state_with("nowhere"), 2, 1.0).unwrap_err();
        assert!(matches!(err, PolicyError::ExhaustedSupport));
    }
}
