//! Reasoning-as-MDP data model.
//!
//! A state is the question prompt plus the partial step trace generated so
//! far; an action is the next step; the transition is string concatenation.
//! The outcome reward is 1 exactly when a terminal step's extracted answer
//! passes the question's checker, otherwise 0.

mod checker;
mod record;
mod segment;

pub use checker::{AnswerChecker, TestCase};
pub use record::TrajectoryRecord;
pub use segment::{split_into_steps, Tokenizer, WhitespaceTokenizer};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::sha256_hex;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("cannot expand a terminal state")]
    TerminalExpansion,
    #[error("checker could not execute: {0}")]
    CheckerFailure(String),
    #[error("cannot segment empty input")]
    EmptyInput,
    #[error("invalid step: {0}")]
    InvalidStep(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// How raw generations are cut into steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentMode {
    /// One step per line; steps never contain interior newlines.
    Line,
    /// Steps of at most `n` tokens under the adapter's tokenizer.
    FixedTokens { n: usize },
}

impl SegmentMode {
    /// Delimiter that joins steps back into the rendered text.
    pub fn delimiter(&self) -> &'static str {
        match self {
            SegmentMode::Line => "\n",
            SegmentMode::FixedTokens { .. } => " ",
        }
    }
}

/// One reasoning increment: a text line or a fixed-length token span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub text: String,
    pub mode: SegmentMode,
    /// Set when the generator signalled end-of-sequence at this step.
    pub eos: bool,
}

impl Step {
    pub fn new(text: impl Into<String>, mode: SegmentMode) -> Result<Self, MdpError> {
        let text = text.into();
        if matches!(mode, SegmentMode::Line) && text.contains('\n') {
            return Err(MdpError::InvalidStep(format!(
                "line step contains interior newline: {text:?}"
            )));
        }
        Ok(Step { text, mode, eos: false })
    }

    /// A line-mode step; panics on interior newlines, so callers must have
    /// segmented the text already.
    pub fn line(text: impl Into<String>) -> Self {
        Step::new(text, SegmentMode::Line).expect("line step")
    }

    /// An explicit end-of-sequence step with empty text.
    pub fn end_of_sequence(mode: SegmentMode) -> Self {
        Step { text: String::new(), mode, eos: true }
    }

    pub fn with_eos(mut self) -> Self {
        self.eos = true;
        self
    }
}

/// Why a state counts as terminal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    /// The last step contains the environment's answer marker.
    AnswerMarker,
    /// The generator emitted an end-of-sequence signal.
    EndOfSequence,
    /// The depth budget was reached without an answer.
    DepthBudget,
    /// A search gave up before reaching any terminal state (partial result).
    SearchBudget,
}

impl TerminalReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminalReason::AnswerMarker => "answer_marker",
            TerminalReason::EndOfSequence => "end_of_sequence",
            TerminalReason::DepthBudget => "depth_budget",
            TerminalReason::SearchBudget => "search_budget",
        }
    }
}

/// How the final answer is read out of a terminal state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerExtraction {
    /// Text after the final answer marker, up to end of line.
    AfterMarker,
    /// The whole generated body (all steps joined), e.g. for code tasks.
    FullBody,
}

/// Immutable segmentation/terminality rules shared by one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRules {
    pub mode: SegmentMode,
    /// Depth at which generation is cut off unconditionally.
    pub max_depth: usize,
    /// Answer marker convention, e.g. `####`.
    pub marker: String,
    pub extraction: AnswerExtraction,
}

impl StepRules {
    /// Line-segmented numeric-answer rules with the `####` marker.
    pub fn numeric(max_depth: usize) -> Self {
        StepRules {
            mode: SegmentMode::Line,
            max_depth,
            marker: "####".to_string(),
            extraction: AnswerExtraction::AfterMarker,
        }
    }

    /// Fixed-token code rules: no marker, generation ends on EOS or budget.
    pub fn code(tokens_per_step: usize, max_depth: usize) -> Self {
        StepRules {
            mode: SegmentMode::FixedTokens { n: tokens_per_step },
            max_depth,
            marker: String::new(),
            extraction: AnswerExtraction::FullBody,
        }
    }
}

/// One problem instance with its ground-truth predicate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub prompt: String,
    pub checker: AnswerChecker,
}

impl Question {
    pub fn new(
        id: impl Into<String>,
        prompt: impl Into<String>,
        checker: AnswerChecker,
    ) -> Result<Self, MdpError> {
        let prompt = prompt.into();
        if prompt.is_empty() {
            return Err(MdpError::InvalidConfig("question prompt is empty".into()));
        }
        Ok(Question { id: id.into(), prompt, checker })
    }
}

/// The prompt concatenated with the steps generated so far.
///
/// States are immutable; `apply` produces the successor. The rendered text
/// is cached and is the identity of the state (transitions are deterministic
/// concatenation, so text equality is state equality).
#[derive(Debug, Clone)]
pub struct State {
    question: Arc<Question>,
    steps: Vec<Step>,
    scores: Vec<f64>,
    terminal: Option<TerminalReason>,
    text: String,
}

impl State {
    /// The initial state: the bare question.
    pub fn initial(question: Arc<Question>) -> Self {
        let text = question.prompt.clone();
        State { question, steps: Vec::new(), scores: Vec::new(), terminal: None, text }
    }

    pub fn question(&self) -> &Arc<Question> {
        &self.question
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Stored generation log-probabilities, one per step.
    pub fn step_scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn depth(&self) -> usize {
        self.steps.len()
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal.is_some()
    }

    pub fn terminal_reason(&self) -> Option<TerminalReason> {
        self.terminal
    }

    /// The rendered text: prompt plus steps joined by the mode delimiter.
    pub fn text(&self) -> &str {
        &self.text
    }

    /// Text of the generated body only (steps joined, prompt excluded).
    pub fn body(&self, rules: &StepRules) -> String {
        let delim = rules.mode.delimiter();
        self.steps.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(delim)
    }

    /// The generated body derived from the cached text, without needing the
    /// rules: everything after the prompt and its leading delimiter.
    pub fn generated_body(&self) -> &str {
        if self.steps.is_empty() {
            return "";
        }
        let delim = self.steps[0].mode.delimiter();
        &self.text[self.question.prompt.len() + delim.len()..]
    }

    /// Content hash of the rendered text; the canonical state key.
    pub fn key(&self) -> String {
        sha256_hex(&self.text)
    }

    pub fn last_step(&self) -> Option<&Step> {
        self.steps.last()
    }

    pub fn last_score(&self) -> Option<f64> {
        self.scores.last().copied()
    }

    /// Appends a step, recording its generation score and evaluating
    /// terminality under `rules`.
    pub fn apply(&self, step: Step, score: f64, rules: &StepRules) -> Result<State, MdpError> {
        if self.is_terminal() {
            return Err(MdpError::TerminalExpansion);
        }
        let mut text = self.text.clone();
        text.push_str(rules.mode.delimiter());
        text.push_str(&step.text);
        let mut steps = self.steps.clone();
        let mut scores = self.scores.clone();
        scores.push(score);
        let depth = steps.len() + 1;
        let terminal = evaluate_terminal(&step, depth, rules);
        steps.push(step);
        Ok(State { question: self.question.clone(), steps, scores, terminal, text })
    }

    /// The prefix state with the first `depth` steps.
    ///
    /// Prefixes of a state built through `apply` are non-terminal by
    /// construction (terminal states are never extended), so no terminality
    /// flag is carried except on the full-depth prefix.
    pub fn prefix(&self, depth: usize) -> State {
        assert!(depth <= self.depth(), "prefix depth out of range");
        if depth == self.depth() {
            return self.clone();
        }
        let steps: Vec<Step> = self.steps[..depth].to_vec();
        let scores: Vec<f64> = self.scores[..depth].to_vec();
        let delim = self.steps[0].mode.delimiter();
        let mut text = self.question.prompt.clone();
        for s in &steps {
            text.push_str(delim);
            text.push_str(&s.text);
        }
        State { question: self.question.clone(), steps, scores, terminal: None, text }
    }

    /// All prefix states from the initial state up to and including `self`.
    pub fn prefixes(&self) -> Vec<State> {
        (0..=self.depth()).map(|d| self.prefix(d)).collect()
    }

    /// Extracts the answer text according to the rules.
    pub fn extract_answer(&self, rules: &StepRules) -> String {
        match rules.extraction {
            AnswerExtraction::AfterMarker => {
                if rules.marker.is_empty() {
                    return String::new();
                }
                match self.text.rfind(&rules.marker) {
                    Some(pos) => {
                        let after = &self.text[pos + rules.marker.len()..];
                        let line = after.split('\n').next().unwrap_or("");
                        line.trim().to_string()
                    }
                    None => String::new(),
                }
            }
            AnswerExtraction::FullBody => self.body(rules),
        }
    }
}

fn evaluate_terminal(step: &Step, depth: usize, rules: &StepRules) -> Option<TerminalReason> {
    if !rules.marker.is_empty() && step.text.contains(&rules.marker) {
        Some(TerminalReason::AnswerMarker)
    } else if step.eos {
        Some(TerminalReason::EndOfSequence)
    } else if depth >= rules.max_depth {
        Some(TerminalReason::DepthBudget)
    } else {
        None
    }
}

/// Deterministic concatenation transition.
///
/// Errors with `TerminalExpansion` when `state` is already terminal.
pub fn transition(state: &State, step: Step, rules: &StepRules) -> Result<State, MdpError> {
    state.apply(step, 0.0, rules)
}

/// Whether a state is terminal; the triggering condition is recorded on the
/// state at construction time.
pub fn is_terminal(state: &State) -> bool {
    state.is_terminal()
}

/// Outcome reward: 1 iff appending `step` yields a terminal state whose
/// extracted answer the checker accepts, 0 otherwise (including when `state`
/// is already terminal and no transition exists).
///
/// A checker that cannot execute is an error, never a 0 verdict.
pub fn outcome_reward(
    state: &State,
    step: &Step,
    checker: &AnswerChecker,
    rules: &StepRules,
) -> Result<f64, MdpError> {
    if state.is_terminal() {
        return Ok(0.0);
    }
    let next = state.apply(step.clone(), 0.0, rules)?;
    if !next.is_terminal() {
        return Ok(0.0);
    }
    let answer = next.extract_answer(rules);
    Ok(if checker.check(&answer)? { 1.0 } else { 0.0 })
}

/// A complete state/action/reward sequence ending in a terminal state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub question: Arc<Question>,
    pub steps: Vec<Step>,
    pub step_scores: Vec<f64>,
    /// Per-step outcome rewards; nonzero on at most the final step.
    pub rewards: Vec<f64>,
    pub total_return: f64,
    pub final_answer: String,
    pub terminal_reason: TerminalReason,
}

impl Trajectory {
    /// Builds a trajectory from a terminal (or budget-cut) state and the
    /// per-step rewards collected along the way.
    pub fn from_state(state: &State, rewards: Vec<f64>, rules: &StepRules) -> Self {
        assert_eq!(rewards.len(), state.depth(), "one reward per step");
        let terminal_reason = state.terminal_reason().unwrap_or(TerminalReason::SearchBudget);
        let final_answer = if state.is_terminal() {
            state.extract_answer(rules)
        } else {
            String::new()
        };
        Trajectory {
            question: state.question().clone(),
            steps: state.steps().to_vec(),
            step_scores: state.step_scores().to_vec(),
            total_return: rewards.iter().sum(),
            rewards,
            final_answer,
            terminal_reason,
        }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Joint log-probability: the sum of per-step scores.
    pub fn log_prob(&self) -> f64 {
        self.step_scores.iter().sum()
    }

    /// Replays the steps from the initial state, reproducing every prefix
    /// state `s_1..s_{T+1}` (the last entry is the terminal state).
    pub fn replay(&self, rules: &StepRules) -> Result<Vec<State>, MdpError> {
        let mut states = vec![State::initial(self.question.clone())];
        for (step, score) in self.steps.iter().zip(&self.step_scores) {
            let next = states.last().unwrap().apply(step.clone(), *score, rules)?;
            states.push(next);
        }
        Ok(states)
    }

    pub fn final_state(&self, rules: &StepRules) -> Result<State, MdpError> {
        Ok(self.replay(rules)?.pop().unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rules() -> StepRules {
        StepRules::numeric(8)
    }

    fn question() -> Arc<Question> {
        Arc::new(
            Question::new(
                "q0",
                "What is 6*7?",
                AnswerChecker::ExactNumericMatch { expected: "42".into() },
            )
            .unwrap(),
        )
    }

    #[test]
    fn transition_concatenates_and_increments_depth() {
        let r = rules();
        let s1 = State::initial(question());
        let s2 = transition(&s1, Step::line("a1"), &r).unwrap();
        let s3 = transition(&s2, Step::line("a2"), &r).unwrap();
        assert_eq!(s3.depth(), 2);
        assert_eq!(s3.text(), "What is 6*7?\na1\na2");
    }

    #[test]
    fn initial_state_is_bare_prompt() {
        let s1 = State::initial(question());
        assert_eq!(s1.depth(), 0);
        assert_eq!(s1.text(), "What is 6*7?");
        let s2 = transition(&s1, Step::line("a1"), &rules()).unwrap();
        assert_eq!(s2.text(), "What is 6*7?\na1");
    }

    #[test]
    fn terminal_expansion_is_an_error() {
        let r = rules();
        let s1 = State::initial(question());
        let s2 = transition(&s1, Step::line("#### 42"), &r).unwrap();
        assert_eq!(s2.terminal_reason(), Some(TerminalReason::AnswerMarker));
        let err = transition(&s2, Step::line("more"), &r).unwrap_err();
        assert!(matches!(err, MdpError::TerminalExpansion));
    }

    #[test]
    fn terminal_reasons_marker_budget_eos() {
        let r = StepRules::numeric(2);
        let s1 = State::initial(question());

        let marker = transition(&s1, Step::line("#### 42"), &r).unwrap();
        assert_eq!(marker.terminal_reason(), Some(TerminalReason::AnswerMarker));

        let mid = transition(&s1, Step::line("thinking"), &r).unwrap();
        assert!(!mid.is_terminal());
        let budget = transition(&mid, Step::line("still thinking"), &r).unwrap();
        assert_eq!(budget.terminal_reason(), Some(TerminalReason::DepthBudget));

        let eos = transition(&s1, Step::end_of_sequence(SegmentMode::Line), &r).unwrap();
        assert_eq!(eos.terminal_reason(), Some(TerminalReason::EndOfSequence));
    }

    #[test]
    fn outcome_reward_cases() {
        let r = rules();
        let q = question();
        let s1 = State::initial(q.clone());
        // Terminal step with the right numeral.
        let reward = outcome_reward(&s1, &Step::line("#### 42"), &q.checker, &r).unwrap();
        assert_eq!(reward, 1.0);
        // Non-terminal step.
        let reward = outcome_reward(&s1, &Step::line("6*7 is"), &q.checker, &r).unwrap();
        assert_eq!(reward, 0.0);
        // Terminal step with the wrong numeral.
        let reward = outcome_reward(&s1, &Step::line("#### 41"), &q.checker, &r).unwrap();
        assert_eq!(reward, 0.0);
    }

    #[test]
    fn answer_extraction_after_marker() {
        let r = rules();
        let s1 = State::initial(question());
        let s2 = transition(&s1, Step::line("so #### 42"), &r).unwrap();
        assert_eq!(s2.extract_answer(&r), "42");
    }

    #[test]
    fn prefixes_reproduce_chain() {
        let r = rules();
        let s1 = State::initial(question());
        let s2 = s1.apply(Step::line("a"), -0.5, &r).unwrap();
        let s3 = s2.apply(Step::line("b"), -0.25, &r).unwrap();
        let prefixes = s3.prefixes();
        assert_eq!(prefixes.len(), 3);
        assert_eq!(prefixes[0].text(), s1.text());
        assert_eq!(prefixes[1].text(), s2.text());
        assert_eq!(prefixes[2].text(), s3.text());
        assert_eq!(prefixes[1].step_scores(), &[-0.5]);
    }

    #[test]
    fn trajectory_replay_matches_final_text() {
        let r = rules();
        let q = question();
        let s1 = State::initial(q.clone());
        let s2 = s1.apply(Step::line("6*7 = 42"), -0.1, &r).unwrap();
        let s3 = s2.apply(Step::line("#### 42"), -0.2, &r).unwrap();
        let traj = Trajectory::from_state(&s3, vec![0.0, 1.0], &r);
        assert_eq!(traj.total_return, 1.0);
        assert_eq!(traj.final_answer, "42");
        let replayed = traj.final_state(&r).unwrap();
        assert_eq!(replayed.text(), s3.text());
        assert_eq!(traj.log_prob(), -0.1 + -0.2);
    }
}
