//! Desk-scale synthetic reasoning environments with exact oracles.
//!
//! Each environment is a complete b-ary tree of text steps: a chain of
//! transform operations followed by one final answer declaration. Leaf
//! values are injective in the chosen path, so exactly one reachable
//! declaration matches the ground truth. The `trap_tree` kind additionally
//! rigs the policy probabilities so the greedy path is always wrong while
//! the correct path stays reachable.
//!
//! Step texts are plain lines ("step 3: add 7") so the same segmentation,
//! hashing and serialization paths used for real generator output are
//! exercised end to end.

mod evaluate;
mod oracle;

pub use evaluate::{evaluate_strategy, QuestionVerdict, Strategy, StrategyReport};
pub use oracle::{brute_force_optimal_q, discounted_suffix_return, DiscountConvention, OracleQTable};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::{derive_seed, sha256_hex};
use crate::mdp::{
    AnswerChecker, MdpError, Question, SegmentMode, State, Step, StepRules, Trajectory,
};
use crate::policy::{
    sample_index, top_k_indices, AdapterKind, PolicyAdapter, PolicyError, PolicyHandle,
    StepCandidate,
};

/// Trajectory-count cap that keeps exhaustive oracles tractable.
pub const TRAJECTORY_CAP: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment exceeds the size bound: {0} trajectories (cap {TRAJECTORY_CAP})")]
    SizeBound(u64),
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
    #[error("state does not belong to this environment: {0}")]
    ForeignState(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    ArithmeticChain,
    StringRewrite,
    TrapTree,
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EnvKind::ArithmeticChain => "arithmetic_chain",
            EnvKind::StringRewrite => "string_rewrite",
            EnvKind::TrapTree => "trap_tree",
        };
        f.write_str(s)
    }
}

/// Generation parameters; the environment is a pure function of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    /// Horizon T: total steps per trajectory (T-1 transforms + 1 answer).
    pub horizon: usize,
    /// Branching factor b at every depth.
    pub branching: usize,
    pub seed: u64,
    pub n_questions: usize,
    /// Policy probability gap between the boosted and demoted branch.
    pub margin: f64,
}

impl EnvSpec {
    pub fn new(kind: EnvKind, horizon: usize, branching: usize, seed: u64) -> Self {
        EnvSpec { kind, horizon, branching, seed, n_questions: 1, margin: 0.2 }
    }

    pub fn with_questions(mut self, n: usize) -> Self {
        self.n_questions = n;
        self
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }
}

/// A path value: integers for arithmetic kinds, strings for rewrites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum Value {
    Int(i64),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Text(v) => f.write_str(v),
        }
    }
}

/// One transform action available at some depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Transform {
    Add { value: i64 },
    Append { token: String },
}

impl Transform {
    fn apply(&self, value: &Value) -> Value {
        match (self, value) {
            (Transform::Add { value: k }, Value::Int(v)) => Value::Int(v + k),
            (Transform::Append { token }, Value::Text(v)) => Value::Text(format!("{v}-{token}")),
            _ => unreachable!("transform kind matches value kind by construction"),
        }
    }

    fn step_text(&self, step_number: usize) -> String {
        match self {
            Transform::Add { value } => format!("step {step_number}: add {value}"),
            Transform::Append { token } => format!("step {step_number}: append {token}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EnvQuestion {
    id: String,
    prompt: String,
    start: Value,
    /// Correct transform index at each of the T-1 transform depths; the
    /// correct declaration is always the truthful one (index 0).
    golden: Vec<usize>,
    /// Deceptive transform index per depth (trap_tree only).
    trap: Vec<usize>,
    answer: String,
}

/// Serialized form: the full transition/answer specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EnvFile {
    format_version: u32,
    spec: EnvSpec,
    /// `transforms[d][j]`: action j at transform depth d.
    transforms: Vec<Vec<Transform>>,
    /// Declaration decoy offsets, one per non-truthful final action.
    decoys: Vec<Value>,
    questions: Vec<EnvQuestion>,
}

pub struct SyntheticEnv {
    file: EnvFile,
    fingerprint: String,
    /// Step text -> action index, per transform depth, for state parsing.
    transform_index: Vec<BTreeMap<String, usize>>,
}

impl SyntheticEnv {
    /// Deterministically generates an environment and its questions.
    pub fn generate(spec: &EnvSpec) -> Result<(Arc<SyntheticEnv>, Vec<Arc<Question>>), EnvError> {
        validate_spec(spec)?;
        let b = spec.branching;
        let t_transforms = spec.horizon - 1;

        // Transform values are position-weighted digits so every path sum
        // (or string) is distinct; a per-depth offset adds texture without
        // breaking injectivity.
        let mut transforms = Vec::with_capacity(t_transforms);
        for depth in 0..t_transforms {
            let mut rng = rng_for(spec.seed, &[1, depth as u64]);
            let offset = rng.random_range(-9i64..=9);
            let row: Vec<Transform> = (0..b)
                .map(|j| match spec.kind {
                    EnvKind::StringRewrite => Transform::Append {
                        token: format!("{}{}", (b'a' + j as u8) as char, depth),
                    },
                    _ => Transform::Add {
                        value: offset + 3 * (j as i64) * pow_i64(b as i64, depth as u32),
                    },
                })
                .collect();
            transforms.push(row);
        }

        // Decoy offsets exceed any cross-path difference, so no wrong path
        // can declare the golden answer.
        let decoy_base = 3 * pow_i64(b as i64, spec.horizon as u32 + 1);
        let decoys: Vec<Value> = (1..b)
            .map(|j| match spec.kind {
                EnvKind::StringRewrite => Value::Text(format!("~{j}")),
                _ => Value::Int(decoy_base * j as i64),
            })
            .collect();

        let mut questions = Vec::with_capacity(spec.n_questions);
        for qi in 0..spec.n_questions {
            let mut rng = rng_for(spec.seed, &[2, qi as u64]);
            let start = match spec.kind {
                EnvKind::StringRewrite => Value::Text(format!("w{qi}")),
                _ => Value::Int(rng.random_range(10i64..100)),
            };
            let golden: Vec<usize> =
                (0..t_transforms).map(|_| rng.random_range(0..b)).collect();
            let trap: Vec<usize> = golden
                .iter()
                .map(|&g| if b < 2 { g } else { (g + 1 + rng.random_range(0..b - 1)) % b })
                .collect();

            let mut value = start.clone();
            for (d, &j) in golden.iter().enumerate() {
                value = transforms[d][j].apply(&value);
            }
            let answer = value.to_string();
            let id = format!("{}-{:03}-q{:03}", spec.kind, spec.seed % 1000, qi);
            let prompt = format!(
                "[{id}] start with {start}; apply {t_transforms} updates, \
                 then state the result after '####'."
            );
            questions.push(EnvQuestion { id, prompt, start, golden, trap, answer });
        }

        let file = EnvFile { format_version: 1, spec: spec.clone(), transforms, decoys, questions };
        let env = Arc::new(SyntheticEnv::from_file(file));
        let qs = env.questions();
        Ok((env, qs))
    }

    fn from_file(file: EnvFile) -> Self {
        let fingerprint =
            sha256_hex(&serde_json::to_string(&file).expect("env file serializes"));
        let transform_index = file
            .transforms
            .iter()
            .enumerate()
            .map(|(d, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, tr)| (tr.step_text(d + 1), j))
                    .collect::<BTreeMap<String, usize>>()
            })
            .collect();
        SyntheticEnv { file, fingerprint, transform_index }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.file.spec
    }

    /// Content hash of the full environment specification.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Segmentation/terminality rules every run on this environment uses.
    pub fn rules(&self) -> StepRules {
        StepRules::numeric(self.file.spec.horizon)
    }

    pub fn questions(&self) -> Vec<Arc<Question>> {
        self.file
            .questions
            .iter()
            .map(|q| {
                Arc::new(
                    Question::new(
                        q.id.clone(),
                        q.prompt.clone(),
                        AnswerChecker::EnvOracle { expected: q.answer.clone() },
                    )
                    .expect("env question is valid"),
                )
            })
            .collect()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("env file serializes")
    }

    pub fn from_json_str(json: &str) -> Result<Arc<Self>, EnvError> {
        let file: EnvFile = serde_json::from_str(json)
            .map_err(|e| EnvError::InvalidSpec(format!("env file: {e}")))?;
        Ok(Arc::new(SyntheticEnv::from_file(file)))
    }

    fn question_index(&self, id: &str) -> Result<usize, EnvError> {
        self.file
            .questions
            .iter()
            .position(|q| q.id == id)
            .ok_or_else(|| EnvError::ForeignState(format!("unknown question {id}")))
    }

    /// Recovers the path value at a state by matching its step texts against
    /// the transform tables.
    fn value_at(&self, qi: usize, state: &State) -> Result<Value, EnvError> {
        let q = &self.file.questions[qi];
        let mut value = q.start.clone();
        let t_transforms = self.file.spec.horizon - 1;
        for (d, step) in state.steps().iter().take(t_transforms).enumerate() {
            let j = self.transform_index[d].get(&step.text).ok_or_else(|| {
                EnvError::ForeignState(format!("unrecognized step at depth {d}: {:?}", step.text))
            })?;
            value = self.file.transforms[d][*j].apply(&value);
        }
        Ok(value)
    }

    /// Action support with policy probabilities at a non-terminal state.
    pub fn candidate_actions(&self, state: &State) -> Result<Vec<(String, f64)>, EnvError> {
        let qi = self.question_index(&state.question().id)?;
        let depth = state.depth();
        let t_transforms = self.file.spec.horizon - 1;
        let probs = self.action_probs(qi, depth);
        if depth < t_transforms {
            Ok(self.file.transforms[depth]
                .iter()
                .zip(probs)
                .map(|(tr, p)| (tr.step_text(depth + 1), p))
                .collect())
        } else if depth == t_transforms {
            let value = self.value_at(qi, state)?;
            let mut actions = vec![(format!("#### {value}"), probs[0])];
            for (j, decoy) in self.file.decoys.iter().enumerate() {
                let decoyed = match (&value, decoy) {
                    (Value::Int(v), Value::Int(d)) => Value::Int(v + d),
                    (Value::Text(v), Value::Text(d)) => Value::Text(format!("{v}{d}")),
                    _ => unreachable!("decoy kind matches value kind"),
                };
                actions.push((format!("#### {decoyed}"), probs[j + 1]));
            }
            Ok(actions)
        } else {
            Err(EnvError::ForeignState(format!("state beyond horizon at depth {depth}")))
        }
    }

    /// Policy probabilities over the b actions at (question, depth).
    ///
    /// arithmetic_chain boosts the correct branch (greedy solves it);
    /// trap_tree boosts a deceptive branch and demotes the correct one by
    /// the margin; string_rewrite uses seeded arbitrary weights. The final
    /// depth always boosts the truthful declaration.
    fn action_probs(&self, qi: usize, depth: usize) -> Vec<f64> {
        let spec = &self.file.spec;
        let b = spec.branching;
        let q = &self.file.questions[qi];
        let t_transforms = spec.horizon - 1;
        if b == 1 {
            return vec![1.0];
        }
        match spec.kind {
            EnvKind::StringRewrite => {
                let mut rng = rng_for(spec.seed, &[3, qi as u64, depth as u64]);
                let weights: Vec<f64> = (0..b).map(|_| rng.random_range(0.6..1.4)).collect();
                let total: f64 = weights.iter().sum();
                weights.into_iter().map(|w| w / total).collect()
            }
            EnvKind::ArithmeticChain => {
                if depth < t_transforms {
                    let g = q.golden[depth];
                    boosted_probs(b, g, (g + 1) % b, spec.margin)
                } else {
                    boosted_probs(b, 0, 1, spec.margin)
                }
            }
            EnvKind::TrapTree => {
                if depth < t_transforms {
                    boosted_probs(b, q.trap[depth], q.golden[depth], spec.margin)
                } else {
                    boosted_probs(b, 0, 1, spec.margin)
                }
            }
        }
    }

    /// The environment's tabular policy adapter.
    pub fn policy(self: &Arc<Self>) -> SyntheticPolicy {
        SyntheticPolicy { env: self.clone() }
    }

    /// Handle over the environment policy with its native rules.
    pub fn policy_handle(self: &Arc<Self>, temperature: f64) -> PolicyHandle {
        PolicyHandle::new(Arc::new(self.policy()), temperature, self.rules())
    }

    /// All trajectories of a question under an expander (full support or a
    /// top-k-restricted handle). Rewards are the outcome rewards.
    pub fn enumerate_trajectories(
        &self,
        question: &Arc<Question>,
        expander: &dyn Fn(&State) -> Result<Vec<StepCandidate>, EnvError>,
    ) -> Result<Vec<Trajectory>, EnvError> {
        let rules = self.rules();
        let mut out = Vec::new();
        let mut count = 0u64;
        let mut stack = vec![(State::initial(question.clone()), Vec::<f64>::new())];
        while let Some((state, rewards)) = stack.pop() {
            if state.is_terminal() {
                count += 1;
                if count > TRAJECTORY_CAP {
                    return Err(EnvError::SizeBound(count));
                }
                out.push(Trajectory::from_state(&state, rewards, &rules));
                continue;
            }
            for cand in expander(&state)? {
                let next = state.apply(cand.step, cand.score, &rules)?;
                let mut next_rewards = rewards.clone();
                next_rewards.push(crate::policy::terminal_step_reward(&next, &rules)?);
                stack.push((next, next_rewards));
            }
        }
        out.sort_by(|a, b| {
            let ta = a.steps.iter().map(|s| s.text.clone()).collect::<Vec<_>>();
            let tb = b.steps.iter().map(|s| s.text.clone()).collect::<Vec<_>>();
            ta.cmp(&tb)
        });
        Ok(out)
    }

    /// Full-support expander for [`Self::enumerate_trajectories`].
    pub fn full_expander(
        self: &Arc<Self>,
    ) -> impl Fn(&State) -> Result<Vec<StepCandidate>, EnvError> + '_ {
        let env = self.clone();
        move |state: &State| {
            let actions = env.candidate_actions(state)?;
            Ok(actions
                .into_iter()
                .enumerate()
                .map(|(rank, (text, prob))| StepCandidate {
                    step: Step { text, mode: SegmentMode::Line, eos: false },
                    score: prob.ln(),
                    rank,
                })
                .collect())
        }
    }

    /// Top-k-restricted expander backed by a policy handle.
    pub fn restricted_expander(
        handle: &PolicyHandle,
        k: usize,
    ) -> impl Fn(&State) -> Result<Vec<StepCandidate>, EnvError> + '_ {
        move |state: &State| Ok(handle.top_k_candidates(state, k)?)
    }

    /// All terminal completions reachable from `state`, with the suffix
    /// rewards of each; the exhaustive rollout pool.
    pub fn enumerate_completions(
        &self,
        state: &State,
    ) -> Result<Vec<(State, Vec<f64>)>, EnvError> {
        let rules = self.rules();
        let mut out = Vec::new();
        let mut stack = vec![(state.clone(), Vec::<f64>::new())];
        while let Some((s, rewards)) = stack.pop() {
            if s.is_terminal() {
                out.push((s, rewards));
                continue;
            }
            for (text, prob) in self.candidate_actions(&s)? {
                let step = Step { text, mode: SegmentMode::Line, eos: false };
                let next = s.apply(step, prob.ln(), &rules)?;
                let mut next_rewards = rewards.clone();
                next_rewards.push(crate::policy::terminal_step_reward(&next, &rules)?);
                stack.push((next, next_rewards));
            }
        }
        Ok(out)
    }
}

/// Tabular policy derived on the fly from the environment tables.
pub struct SyntheticPolicy {
    env: Arc<SyntheticEnv>,
}

impl SyntheticPolicy {
    fn weighted(&self, state: &State) -> Result<Vec<(String, f64)>, PolicyError> {
        self.env.candidate_actions(state).map_err(|e| match e {
            EnvError::Policy(p) => p,
            EnvError::Mdp(m) => PolicyError::Mdp(m),
            other => PolicyError::Unavailable(other.to_string()),
        })
    }
}

impl PolicyAdapter for SyntheticPolicy {
    fn kind(&self) -> AdapterKind {
        AdapterKind::Tabular
    }

    fn propose(
        &self,
        state: &State,
        k: usize,
        _temperature: f64,
    ) -> Result<Vec<StepCandidate>, PolicyError> {
        let weighted = self.weighted(state)?;
        Ok(top_k_indices(&weighted, k)
            .into_iter()
            .map(|i| StepCandidate {
                step: Step { text: weighted[i].0.clone(), mode: SegmentMode::Line, eos: false },
                score: weighted[i].1.ln(),
                rank: 0,
            })
            .collect())
    }

    fn sample_step(
        &self,
        state: &State,
        temperature: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<StepCandidate, PolicyError> {
        let weighted = self.weighted(state)?;
        let i = sample_index(&weighted, temperature, rng)?;
        Ok(StepCandidate {
            step: Step { text: weighted[i].0.clone(), mode: SegmentMode::Line, eos: false },
            score: weighted[i].1.ln(),
            rank: 0,
        })
    }
}

fn validate_spec(spec: &EnvSpec) -> Result<(), EnvError> {
    if spec.horizon < 1 {
        return Err(EnvError::InvalidSpec("horizon must be >= 1".into()));
    }
    if spec.branching < 1 {
        return Err(EnvError::InvalidSpec("branching must be >= 1".into()));
    }
    if spec.n_questions < 1 {
        return Err(EnvError::InvalidSpec("n_questions must be >= 1".into()));
    }
    let trajectories = (spec.branching as u64).checked_pow(spec.horizon as u32);
    match trajectories {
        Some(n) if n <= TRAJECTORY_CAP => {}
        Some(n) => return Err(EnvError::SizeBound(n)),
        None => return Err(EnvError::SizeBound(u64::MAX)),
    }
    if spec.kind == EnvKind::TrapTree && (spec.horizon < 2 || spec.branching < 2) {
        return Err(EnvError::InvalidSpec(
            "trap_tree requires horizon >= 2 and branching >= 2".into(),
        ));
    }
    if spec.branching >= 2 && !(0.0..2.0 / spec.branching as f64).contains(&spec.margin) {
        return Err(EnvError::InvalidSpec(format!(
            "margin must lie in [0, 2/b) = [0, {})",
            2.0 / spec.branching as f64
        )));
    }
    Ok(())
}

/// Uniform probabilities shifted so `boosted` exceeds `demoted` by exactly
/// `margin`; other entries keep 1/b.
fn boosted_probs(b: usize, boosted: usize, demoted: usize, margin: f64) -> Vec<f64> {
    let mut probs = vec![1.0 / b as f64; b];
    if boosted != demoted {
        probs[boosted] += margin / 2.0;
        probs[demoted] -= margin / 2.0;
    }
    probs
}

fn pow_i64(base: i64, exp: u32) -> i64 {
    base.checked_pow(exp).expect("within size cap")
}

fn rng_for(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::TerminalReason;

    #[test]
    fn generation_is_deterministic() {
        let spec = EnvSpec::new(EnvKind::TrapTree, 3, 2, 11).with_questions(3);
        let (a, _) = SyntheticEnv::generate(&spec).unwrap();
        let (b, _) = SyntheticEnv::generate(&spec).unwrap();
        assert_eq!(a.to_json_string(), b.to_json_string());
        assert_eq!(a.fingerprint(), b.fingerprint());
        let (c, _) =
            SyntheticEnv::generate(&EnvSpec::new(EnvKind::TrapTree, 3, 2, 12).with_questions(3))
                .unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn env_file_round_trips() {
        let spec = EnvSpec::new(EnvKind::StringRewrite, 3, 3, 5).with_questions(2);
        let (env, _) = SyntheticEnv::generate(&spec).unwrap();
        let json = env.to_json_string();
        let back = SyntheticEnv::from_json_str(&json).unwrap();
        assert_eq!(back.to_json_string(), json);
        assert_eq!(back.fingerprint(), env.fingerprint());
    }

    #[test]
    fn degenerate_env_has_one_correct_trajectory() {
        let spec = EnvSpec::new(EnvKind::ArithmeticChain, 1, 1, 0);
        let (env, questions) = SyntheticEnv::generate(&spec).unwrap();
        let trajs = env
            .enumerate_trajectories(&questions[0], &env.full_expander())
            .unwrap();
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].total_return, 1.0);
        assert_eq!(trajs[0].terminal_reason, TerminalReason::AnswerMarker);
    }

    #[test]
    fn exactly_one_answer_is_correct() {
        for kind in [EnvKind::ArithmeticChain, EnvKind::StringRewrite, EnvKind::TrapTree] {
            let spec = EnvSpec::new(kind, 3, 3, 7).with_questions(2);
            let (env, questions) = SyntheticEnv::generate(&spec).unwrap();
            for q in &questions {
                let trajs = env.enumerate_trajectories(q, &env.full_expander()).unwrap();
                assert_eq!(trajs.len(), 27, "b^T trajectories");
                let correct: Vec<_> = trajs.iter().filter(|t| t.total_return == 1.0).collect();
                assert_eq!(correct.len(), 1, "{kind} must have one correct leaf");
            }
        }
    }

    #[test]
    fn size_bound_is_enforced() {
        let spec = EnvSpec::new(EnvKind::ArithmeticChain, 21, 2, 0);
        let err = SyntheticEnv::generate(&spec).unwrap_err();
        assert!(matches!(err, EnvError::SizeBound(_)));
    }

    #[test]
    fn trap_tree_requires_branching() {
        let err = SyntheticEnv::generate(&EnvSpec::new(EnvKind::TrapTree, 3, 1, 0)).unwrap_err();
        assert!(matches!(err, EnvError::InvalidSpec(_)));
    }

    #[test]
    fn trap_tree_greedy_fails_everywhere() {
        let spec = EnvSpec::new(EnvKind::TrapTree, 3, 2, 42).with_questions(4);
        let (env, questions) = SyntheticEnv::generate(&spec).unwrap();
        let handle = env.policy_handle(0.0);
        for q in &questions {
            let t = handle.greedy_trajectory(q).unwrap();
            assert_eq!(t.total_return, 0.0, "greedy must fail on {id}", id = q.id);
        }
    }

    #[test]
    fn arithmetic_chain_greedy_succeeds() {
        let spec = EnvSpec::new(EnvKind::ArithmeticChain, 4, 3, 9).with_questions(3);
        let (env, questions) = SyntheticEnv::generate(&spec).unwrap();
        let handle = env.policy_handle(0.0);
        for q in &questions {
            let t = handle.greedy_trajectory(q).unwrap();
            assert_eq!(t.total_return, 1.0);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let spec = EnvSpec::new(EnvKind::TrapTree, 4, 4, 3).with_questions(2);
        let (env, questions) = SyntheticEnv::generate(&spec).unwrap();
        let s = State::initial(questions[0].clone());
        let actions = env.candidate_actions(&s).unwrap();
        let total: f64 = actions.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(actions.iter().all(|(_, p)| *p > 0.0));
    }
}
