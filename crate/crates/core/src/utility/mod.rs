//! Process rewards and their aggregation over path prefixes.
//!
//! The aggregated utility of a state is `Agg(R_P(s_1), ..., R_P(s_t))` where
//! `R_P` encodes prior knowledge about intermediate steps: a constant, the
//! generator's step confidence, a code-delimiter penalty, or an external
//! scoring service.

mod code_scan;
mod scorer;

pub use code_scan::code_has_violation;
pub use scorer::{ExternalScorer, ScorerConfig};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::State;

#[derive(Debug, Error)]
pub enum UtilityError {
    #[error("cannot aggregate an empty reward path")]
    EmptyPath,
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),
}

/// Aggregation over the rewards of the path from the initial state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggKind {
    Min,
    Max,
    Sum,
    /// The reward of the last state alone; cancels earlier penalties.
    Last,
}

/// Penalty assigned when the code-so-far fails the delimiter/indent scan.
pub const CODE_PENALTY: f64 = -0.5;

/// A per-state process reward function. Deterministic given the state text;
/// the external scorer caches responses to stay reproducible.
#[derive(Clone)]
pub enum ProcessRewardFn {
    Constant(f64),
    /// The stored log-probability of the state's last step (0 at the root).
    Confidence,
    /// `-0.5` when the generated code has mismatched delimiters or invalid
    /// indentation, else 0.
    CodeDelimiterPenalty,
    ExternalScorer(Arc<ExternalScorer>),
}

impl ProcessRewardFn {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ProcessRewardFn::Constant(_) => "constant",
            ProcessRewardFn::Confidence => "confidence",
            ProcessRewardFn::CodeDelimiterPenalty => "code_delimiter_penalty",
            ProcessRewardFn::ExternalScorer(_) => "external_scorer",
        }
    }
}

/// Process reward of a single state.
pub fn process_reward(reward: &ProcessRewardFn, state: &State) -> Result<f64, UtilityError> {
    match reward {
        ProcessRewardFn::Constant(c) => Ok(*c),
        ProcessRewardFn::Confidence => Ok(state.last_score().unwrap_or(0.0)),
        ProcessRewardFn::CodeDelimiterPenalty => {
            Ok(if code_has_violation(state.generated_body()) { CODE_PENALTY } else { 0.0 })
        }
        ProcessRewardFn::ExternalScorer(scorer) => scorer.score(state.text()),
    }
}

/// Combines a reward path with the chosen aggregation.
pub fn aggregate(rewards: &[f64], agg: AggKind) -> Result<f64, UtilityError> {
    if rewards.is_empty() {
        return Err(UtilityError::EmptyPath);
    }
    Ok(match agg {
        AggKind::Min => rewards.iter().copied().fold(f64::INFINITY, f64::min),
        AggKind::Max => rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        AggKind::Sum => rewards.iter().sum(),
        AggKind::Last => *rewards.last().unwrap(),
    })
}

/// Aggregated utility of `state`: the aggregation over the process rewards
/// of every prefix state from the root. Recomputes the whole prefix chain;
/// searches use [`GAccumulator`] incrementally, which must agree exactly.
pub fn g_value(
    reward: &ProcessRewardFn,
    agg: AggKind,
    state: &State,
) -> Result<f64, UtilityError> {
    let rewards: Vec<f64> = state
        .prefixes()
        .iter()
        .map(|s| process_reward(reward, s))
        .collect::<Result<_, _>>()?;
    aggregate(&rewards, agg)
}

/// Incrementally maintained aggregated utility along one path.
#[derive(Debug, Clone, Copy)]
pub struct GAccumulator {
    agg: AggKind,
    value: f64,
}

impl GAccumulator {
    /// Accumulator for the initial state.
    pub fn start(
        reward: &ProcessRewardFn,
        agg: AggKind,
        root: &State,
    ) -> Result<Self, UtilityError> {
        Ok(GAccumulator { agg, value: process_reward(reward, root)? })
    }

    /// Folds in the next state along the path.
    pub fn extend(
        &self,
        reward: &ProcessRewardFn,
        state: &State,
    ) -> Result<Self, UtilityError> {
        let r = process_reward(reward, state)?;
        let value = match self.agg {
            AggKind::Min => self.value.min(r),
            AggKind::Max => self.value.max(r),
            AggKind::Sum => self.value + r,
            AggKind::Last => r,
        };
        Ok(GAccumulator { agg: self.agg, value })
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

/// Process-reward function plus aggregation: everything the search needs to
/// compute g-values.
#[derive(Clone)]
pub struct UtilityConfig {
    pub reward: ProcessRewardFn,
    pub agg: AggKind,
}

impl UtilityConfig {
    /// The neutral utility: g identically 0.
    pub fn zero() -> Self {
        UtilityConfig { reward: ProcessRewardFn::Constant(0.0), agg: AggKind::Last }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{AnswerChecker, Question, State, Step, StepRules};
    use std::sync::Arc;

    fn chain(scores: &[f64]) -> State {
        let q = Arc::new(
            Question::new("q", "p", AnswerChecker::EnvOracle { expected: "x".into() }).unwrap(),
        );
        let rules = StepRules::numeric(16);
        let mut s = State::initial(q);
        for (i, score) in scores.iter().enumerate() {
            s = s.apply(Step::line(format!("s{i}")), *score, &rules).unwrap();
        }
        s
    }

    #[test]
    fn aggregate_matches_direct_formulas() {
        let r = [0.2, -0.5, 0.9];
        assert!((aggregate(&r, AggKind::Sum).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(aggregate(&r, AggKind::Min).unwrap(), -0.5);
        assert_eq!(aggregate(&r, AggKind::Max).unwrap(), 0.9);
        assert_eq!(aggregate(&r, AggKind::Last).unwrap(), 0.9);
    }

    #[test]
    fn last_cancels_earlier_penalties() {
        assert_eq!(aggregate(&[-0.5, -0.5, 0.0], AggKind::Last).unwrap(), 0.0);
    }

    #[test]
    fn empty_path_is_an_error() {
        assert!(matches!(aggregate(&[], AggKind::Sum), Err(UtilityError::EmptyPath)));
    }

    #[test]
    fn confidence_passes_through_stored_score() {
        let s = chain(&[-1.25]);
        let r = process_reward(&ProcessRewardFn::Confidence, &s).unwrap();
        assert_eq!(r, -1.25);
    }

    #[test]
    fn sum_confidence_equals_cumulative_log_prob() {
        let scores = [-0.3, -0.7, -0.1];
        let s = chain(&scores);
        let g = g_value(&ProcessRewardFn::Confidence, AggKind::Sum, &s).unwrap();
        // Root contributes 0; the rest is the cumulative log-probability.
        assert!((g - scores.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn min_over_prefix_chain() {
        // PRM-style scores [0.9, 0.4, 0.7] over a 3-prefix chain.
        let s = chain(&[0.9, 0.4, 0.7]).prefix(3);
        let rewards: Vec<f64> = s.prefixes()[1..]
            .iter()
            .map(|p| process_reward(&ProcessRewardFn::Confidence, p).unwrap())
            .collect();
        assert_eq!(aggregate(&rewards, AggKind::Min).unwrap(), 0.4);
    }

    #[test]
    fn accumulator_matches_recomputation() {
        let reward = ProcessRewardFn::Confidence;
        for agg in [AggKind::Min, AggKind::Max, AggKind::Sum, AggKind::Last] {
            let full = chain(&[0.5, -0.2, 0.8, -0.9]);
            let mut acc = GAccumulator::start(&reward, agg, &full.prefix(0)).unwrap();
            for d in 1..=full.depth() {
                let state = full.prefix(d);
                acc = acc.extend(&reward, &state).unwrap();
                let recomputed = g_value(&reward, agg, &state).unwrap();
                assert_eq!(acc.value(), recomputed, "agg {agg:?} depth {d}");
            }
        }
    }

    #[test]
    fn constant_zero_everywhere() {
        let s = chain(&[0.1, 0.2]);
        for agg in [AggKind::Min, AggKind::Max, AggKind::Sum, AggKind::Last] {
            assert_eq!(g_value(&ProcessRewardFn::Constant(0.0), agg, &s).unwrap(), 0.0);
        }
    }
}
