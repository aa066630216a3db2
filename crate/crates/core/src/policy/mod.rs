//! Generator abstraction: proposes top-K next-step candidates and samples
//! complete rollout trajectories.
//!
//! Three adapters ship with the crate: a map-backed tabular policy, a toy
//! bigram generator, and a remote HTTP completion client. Synthetic
//! environments provide a fourth (env-derived tabular support) in `envs`.

mod ngram;
mod remote;
mod tabular;

pub use ngram::NGramPolicy;
pub use remote::{RemoteConfig, RemotePolicy};
pub use tabular::{TabularAction, TabularPolicy};

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{MdpError, Question, State, Step, StepRules, Trajectory};

#[derive(Debug, Error)]
pub enum PolicyError {
    /// Transport or backend failure after retries; retriable at a higher level.
    #[error("policy unavailable: {0}")]
    Unavailable(String),
    /// The tabular adapter has no actions at this state.
    #[error("no actions available at this state")]
    ExhaustedSupport,
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    Tabular,
    NGram,
    Remote,
}

/// One proposed next step with its generation confidence.
#[derive(Debug, Clone)]
pub struct StepCandidate {
    pub step: Step,
    /// Log-probability (or synthetic log-weight) under the policy.
    pub score: f64,
    /// Position among the returned candidates, 0-based.
    pub rank: usize,
}

/// A next-step generator. Adapters are stateless between calls and safe for
/// concurrent use; all sampling randomness comes from the caller's RNG.
pub trait PolicyAdapter: Send + Sync {
    fn kind(&self) -> AdapterKind;

    /// Up to `k` distinct candidates, scores non-increasing. Temperature
    /// does not change the ranking (weights are monotone under tempering);
    /// it is forwarded so sampling backends can honour it server-side.
    fn propose(
        &self,
        state: &State,
        k: usize,
        temperature: f64,
    ) -> Result<Vec<StepCandidate>, PolicyError>;

    /// One sampled step; temperature 0 means greedy argmax.
    fn sample_step(
        &self,
        state: &State,
        temperature: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<StepCandidate, PolicyError>;
}

/// An adapter bound to its decoding settings and segmentation rules.
#[derive(Clone)]
pub struct PolicyHandle {
    adapter: Arc<dyn PolicyAdapter>,
    pub temperature: f64,
    pub rules: StepRules,
}

impl PolicyHandle {
    pub fn new(adapter: Arc<dyn PolicyAdapter>, temperature: f64, rules: StepRules) -> Self {
        PolicyHandle { adapter, temperature, rules }
    }

    pub fn kind(&self) -> AdapterKind {
        self.adapter.kind()
    }

    /// Top-k distinct next-step candidates for a non-terminal state.
    pub fn top_k_candidates(
        &self,
        state: &State,
        k: usize,
    ) -> Result<Vec<StepCandidate>, PolicyError> {
        if state.is_terminal() {
            return Err(PolicyError::Mdp(MdpError::TerminalExpansion));
        }
        if k == 0 {
            return Err(PolicyError::Mdp(MdpError::InvalidConfig("k must be >= 1".into())));
        }
        let mut cands = self.adapter.propose(state, k, self.temperature)?;
        cands.truncate(k);
        debug_assert!(
            cands.windows(2).all(|w| w[0].score >= w[1].score),
            "candidate scores must be non-increasing"
        );
        debug_assert!(
            {
                let mut texts: Vec<&str> = cands.iter().map(|c| c.step.text.as_str()).collect();
                texts.sort_unstable();
                texts.windows(2).all(|w| w[0] != w[1])
            },
            "candidates must be distinct by text"
        );
        for (rank, c) in cands.iter_mut().enumerate() {
            c.rank = rank;
        }
        Ok(cands)
    }

    /// Samples a complete trajectory for the question at `temperature`.
    ///
    /// Always terminates: the depth budget in the rules cuts rollouts that
    /// never produce an answer marker or end-of-sequence.
    pub fn sample_trajectory(
        &self,
        question: &Arc<Question>,
        temperature: f64,
        seed: u64,
    ) -> Result<Trajectory, PolicyError> {
        let start = State::initial(question.clone());
        let (state, rewards) = self.rollout_from(&start, temperature, seed)?;
        Ok(Trajectory::from_state(&state, rewards, &self.rules))
    }

    /// Greedy (temperature 0) trajectory.
    pub fn greedy_trajectory(&self, question: &Arc<Question>) -> Result<Trajectory, PolicyError> {
        self.sample_trajectory(question, 0.0, 0)
    }

    /// Continues generation from an arbitrary state until terminal,
    /// returning the final state and the rewards of the appended suffix.
    pub fn complete_from(
        &self,
        start: &State,
        temperature: f64,
        seed: u64,
    ) -> Result<(State, Vec<f64>), PolicyError> {
        self.rollout_from(start, temperature, seed)
    }

    fn rollout_from(
        &self,
        start: &State,
        temperature: f64,
        seed: u64,
    ) -> Result<(State, Vec<f64>), PolicyError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = start.clone();
        let mut rewards = Vec::new();
        while !state.is_terminal() {
            let cand = self.adapter.sample_step(&state, temperature, &mut rng)?;
            let next = state.apply(cand.step, cand.score, &self.rules)?;
            rewards.push(terminal_step_reward(&next, &self.rules)?);
            state = next;
        }
        Ok((state, rewards))
    }
}

/// Reward earned by the step that produced `state`: the checker verdict on
/// terminal states, 0 elsewhere.
pub(crate) fn terminal_step_reward(state: &State, rules: &StepRules) -> Result<f64, MdpError> {
    if !state.is_terminal() {
        return Ok(0.0);
    }
    let answer = state.extract_answer(rules);
    Ok(if state.question().checker.check(&answer)? { 1.0 } else { 0.0 })
}

/// Selects the indices of the k highest-weight items, ties broken
/// lexicographically by text.
pub(crate) fn top_k_indices(items: &[(String, f64)], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        items[b]
            .1
            .partial_cmp(&items[a].1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| items[a].0.cmp(&items[b].0))
    });
    order.truncate(k);
    order
}

/// Samples an index from weighted items. Temperature 0 is greedy argmax
/// (lexicographic tie-break); otherwise weights are tempered as w^(1/t).
pub(crate) fn sample_index(
    items: &[(String, f64)],
    temperature: f64,
    rng: &mut ChaCha8Rng,
) -> Result<usize, PolicyError> {
    if items.is_empty() {
        return Err(PolicyError::ExhaustedSupport);
    }
    if temperature <= 0.0 {
        return Ok(top_k_indices(items, 1)[0]);
    }
    let weights: Vec<f64> = items.iter().map(|(_, w)| w.powf(1.0 / temperature)).collect();
    let dist = WeightedIndex::new(&weights)
        .map_err(|e| PolicyError::Unavailable(format!("degenerate weights: {e}")))?;
    Ok(dist.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{AnswerChecker, SegmentMode};

    fn question() -> Arc<Question> {
        Arc::new(
            Question::new("q0", "2+2?", AnswerChecker::ExactNumericMatch { expected: "4".into() })
                .unwrap(),
        )
    }

    fn two_action_policy() -> TabularPolicy {
        let mut p = TabularPolicy::new(SegmentMode::Line);
        p.insert(
            "2+2?",
            vec![
                TabularAction::new("#### 4", 0.7),
                TabularAction::new("#### 5", 0.3),
            ],
        );
        p
    }

    #[test]
    fn greedy_trajectory_takes_argmax() {
        let handle =
            PolicyHandle::new(Arc::new(two_action_policy()), 0.0, StepRules::numeric(4));
        let t = handle.greedy_trajectory(&question()).unwrap();
        assert_eq!(t.steps[0].text, "#### 4");
        assert_eq!(t.total_return, 1.0);
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let handle =
            PolicyHandle::new(Arc::new(two_action_policy()), 1.0, StepRules::numeric(4));
        let a = handle.sample_trajectory(&question(), 1.0, 99).unwrap();
        let b = handle.sample_trajectory(&question(), 1.0, 99).unwrap();
        assert_eq!(a.steps[0].text, b.steps[0].text);
        assert_eq!(a.step_scores, b.step_scores);
    }

    #[test]
    fn temperature_one_frequencies_match_binomial_bound() {
        // Empirical frequency over 10_000 samples within 3 sigma of p=0.7.
        let handle =
            PolicyHandle::new(Arc::new(two_action_policy()), 1.0, StepRules::numeric(4));
        let q = question();
        let n = 10_000usize;
        let mut hits = 0usize;
        for i in 0..n {
            let t = handle.sample_trajectory(&q, 1.0, i as u64).unwrap();
            if t.steps[0].text == "#### 4" {
                hits += 1;
            }
        }
        let p = 0.7f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let freq = hits as f64 / n as f64;
        assert!(
            (freq - p).abs() <= 3.0 * sigma,
            "freq {freq} outside 3 sigma of {p} (sigma {sigma})"
        );
    }

    #[test]
    fn trajectory_log_prob_factorizes() {
        // Sum of stored per-step scores equals the sum of the tabular
        // policy's per-step log-probabilities, recomputed independently.
        let mut p = TabularPolicy::new(SegmentMode::Line);
        p.insert("2+2?", vec![TabularAction::new("a", 0.6), TabularAction::new("b", 0.4)]);
        p.insert("2+2?\na", vec![TabularAction::new("#### 4", 1.0)]);
        p.insert("2+2?\nb", vec![TabularAction::new("#### 5", 1.0)]);
        let handle = PolicyHandle::new(Arc::new(p), 1.0, StepRules::numeric(4));
        let t = handle.sample_trajectory(&question(), 1.0, 3).unwrap();
        let expected: f64 = match t.steps[0].text.as_str() {
            "a" => 0.6f64.ln() + 1.0f64.ln(),
            _ => 0.4f64.ln() + 1.0f64.ln(),
        };
        assert!((t.log_prob() - expected).abs() < 1e-12);
    }

    #[test]
    fn top_k_truncates_and_ranks() {
        let handle =
            PolicyHandle::new(Arc::new(two_action_policy()), 1.0, StepRules::numeric(4));
        let s = State::initial(question());
        let top1 = handle.top_k_candidates(&s, 1).unwrap();
        assert_eq!(top1.len(), 1);
        assert_eq!(top1[0].step.text, "#### 4");
        assert_eq!(top1[0].rank, 0);
        // k larger than support returns the whole support.
        let all = handle.top_k_candidates(&s, 10).unwrap();
        assert_eq!(all.len(), 2);
    }
}
