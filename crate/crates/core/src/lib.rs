//! Deliberative planning engine for step-wise sequence generation.
//!
//! The crate models text generation as a deterministic MDP over reasoning
//! steps, learns proxy Q-value models from offline rollouts, and guides
//! decoding with best-first A* search over an f = g + λ·h frontier. It ships
//! desk-scale synthetic environments with exact brute-force oracles so every
//! stage of the pipeline can be verified without a live generator.

pub mod envs;
pub mod hashing;
pub mod mdp;
pub mod pipeline;
pub mod policy;
pub mod qvalue;
pub mod search;
pub mod utility;

pub use mdp::{
    AnswerChecker, MdpError, Question, SegmentMode, State, Step, StepRules, TerminalReason,
    Trajectory, TrajectoryRecord,
};
pub use policy::{AdapterKind, PolicyError, PolicyHandle, StepCandidate};


pub use utility::{AggKind, ProcessRewardFn, UtilityConfig};
