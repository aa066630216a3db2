//! Toy bigram generator over whole steps, fit from a trajectory corpus.
//!
//! Useful as a cheap stochastic generator with end-of-sequence behaviour in
//! tests; not a serious language model.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use crate::mdp::{SegmentMode, State, Step};

use super::{sample_index, top_k_indices, AdapterKind, PolicyAdapter, PolicyError, StepCandidate};

const EOS_TOKEN: &str = "";

pub struct NGramPolicy {
    /// successor-step counts keyed by previous step text; the empty key is
    /// the start distribution and the empty successor is end-of-sequence.
    counts: BTreeMap<String, BTreeMap<String, f64>>,
    mode: SegmentMode,
}

impl NGramPolicy {
    /// Fits bigram step counts from sequences of step texts. Every sequence
    /// contributes an end-of-sequence transition after its last step.
    pub fn fit<S: AsRef<str>>(corpus: &[Vec<S>], mode: SegmentMode) -> Self {
        let mut counts: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for seq in corpus {
            let mut prev = String::new();
            for step in seq {
                let step = step.as_ref();
                if step.is_empty() {
                    continue;
                }
                *counts.entry(prev.clone()).or_default().entry(step.to_string()).or_insert(0.0) +=
                    1.0;
                prev = step.to_string();
            }
            *counts.entry(prev).or_default().entry(EOS_TOKEN.to_string()).or_insert(0.0) += 1.0;
        }
        NGramPolicy { counts, mode }
    }

    fn successors(&self, state: &State) -> Result<Vec<(String, f64)>, PolicyError> {
        let key = state.last_step().map(|s| s.text.clone()).unwrap_or_default();
        let dist = self.counts.get(&key).ok_or(PolicyError::ExhaustedSupport)?;
        let total: f64 = dist.values().sum();
        Ok(dist.iter().map(|(text, c)| (text.clone(), c / total)).collect())
    }

    fn candidate(&self, text: &str, prob: f64) -> StepCandidate {
        let step = if text == EOS_TOKEN {
            Step::end_of_sequence(self.mode)
        } else {
            Step { text: text.to_string(), mode: self.mode, eos: false }
        };
        StepCandidate { step, score: prob.ln(), rank: 0 }
    }
}

impl PolicyAdapter for NGramPolicy {
    fn kind(&self) -> AdapterKind {
        AdapterKind::NGram
    }

    fn propose(
        &self,
        state: &State,
        k: usize,
        _temperature: f64,
    ) -> Result<Vec<StepCandidate>, PolicyError> {
        let succ = self.successors(state)?;
        Ok(top_k_indices(&succ, k)
            .into_iter()
            .map(|i| self.candidate(&succ[i].0, succ[i].1))
            .collect())
    }

    fn sample_step(
        &self,
        state: &State,
        temperature: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<StepCandidate, PolicyError> {
        let succ = self.successors(state)?;
        let idx = sample_index(&succ, temperature, rng)?;
        Ok(self.candidate(&succ[idx].0, succ[idx].1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{AnswerChecker, Question, StepRules, TerminalReason};
    use crate::policy::PolicyHandle;
    use std::sync::Arc;

    fn corpus() -> Vec<Vec<&'static str>> {
        vec![
            vec!["think", "#### 1"],
            vec!["think", "check", "#### 1"],
            vec!["check", "#### 1"],
        ]
    }

    #[test]
    fn greedy_follows_majority_counts() {
        let p = NGramPolicy::fit(&corpus(), SegmentMode::Line);
        let q = Arc::new(
            Question::new("q", "p", AnswerChecker::EnvOracle { expected: "1".into() }).unwrap(),
        );
        let handle = PolicyHandle::new(Arc::new(p), 0.0, StepRules::numeric(6));
        let t = handle.greedy_trajectory(&q).unwrap();
        assert_eq!(t.steps[0].text, "think");
        assert_eq!(t.terminal_reason, TerminalReason::AnswerMarker);
    }

    #[test]
    fn eos_transition_terminates_generation() {
        // A corpus whose only sequences end after "done": the step after
        // "done" must be end-of-sequence.
        let p = NGramPolicy::fit(&[vec!["done"]], SegmentMode::Line);
        let q = Arc::new(
            Question::new("q", "p", AnswerChecker::EnvOracle { expected: "1".into() }).unwrap(),
        );
        let handle = PolicyHandle::new(Arc::new(p), 0.0, StepRules::numeric(6));
        let t = handle.greedy_trajectory(&q).unwrap();
        assert_eq!(t.terminal_reason, TerminalReason::EndOfSequence);
        assert_eq!(t.steps.last().unwrap().text, "");
    }
}
