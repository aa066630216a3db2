//! Proxy Q-value models and the regression fit over label records.
//!
//! Models predict the expected best achievable return of a (state, action)
//! pair. Tabular models key on content hashes of the state and action texts
//! (transitions are deterministic concatenation, so text equality is state
//! equality); linear models regress onto a pluggable feature set.

mod labels;
mod linear;

pub use labels::{
    build_rollout_dataset, completion_labels, fitted_q_iteration, rollout_labels,
    DatasetMeta, DiscountConvention, FittedQOptions, IterationStats, LabeledPair,
    RolloutDataset, RolloutLabelOptions, SampledPool, TrajectoryPool,
    discounted_suffix_return,
};
pub use linear::{FeatureRegistry, FeatureSet, HashedFeatures};

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::sha256_hex;
use crate::mdp::{MdpError, State, Step};
use crate::policy::PolicyError;

#[derive(Debug, Error)]
pub enum QError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("labels contain non-finite values")]
    NonFiniteLabel,
    #[error("linear system is singular even with ridge regularization")]
    SingularFit,
    #[error("unknown feature set: {0}")]
    UnknownFeatureSet(String),
    #[error("malformed model file: {0}")]
    MalformedModel(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// One (state, action, label) training record with full provenance.
/// This struct is the JSON-lines wire form; states are carried as their
/// rendered texts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QLabelRecord {
    pub state_text: String,
    pub action_text: String,
    pub label: f64,
    /// `fitted_q`, `rollout` or `completion`.
    pub method: String,
    pub gamma: f64,
    pub seed: Option<u64>,
    pub pool_size: Option<usize>,
    /// Method-specific detail: iteration number or completer id.
    pub provenance: Option<String>,
}

impl QLabelRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("label record serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

/// Which model family `fit_q` produces.
#[derive(Clone)]
pub enum FitModelKind {
    Tabular,
    Linear(Arc<dyn FeatureSet>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub mse: f64,
    pub iterations: usize,
    /// Whether ridge regularization had to be applied to a rank-deficient
    /// linear system.
    pub ridged: bool,
}

/// A fitted proxy Q-value model. Prediction is deterministic; unseen tabular
/// pairs return the configured default (0).
#[derive(Debug, Clone)]
pub enum QModel {
    Tabular(TabularQ),
    Linear(LinearQ),
}

#[derive(Debug, Clone)]
pub struct TabularQ {
    cells: BTreeMap<(String, String), f64>,
    default: f64,
    clamp: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct LinearQ {
    features: Arc<dyn FeatureSet>,
    weights: Vec<f64>,
    clamp: Option<(f64, f64)>,
}

impl std::fmt::Debug for dyn FeatureSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FeatureSet({})", self.id())
    }
}

impl TabularQ {
    pub fn empty() -> Self {
        TabularQ { cells: BTreeMap::new(), default: 0.0, clamp: None }
    }

    pub fn insert_text(&mut self, state_text: &str, action_text: &str, value: f64) {
        self.cells.insert((sha256_hex(state_text), sha256_hex(action_text)), value);
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

impl QModel {
    /// The all-zero model: an empty table with default 0.
    pub fn zero() -> Self {
        QModel::Tabular(TabularQ::empty())
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            QModel::Tabular(_) => "tabular",
            QModel::Linear(_) => "linear",
        }
    }

    pub fn with_clamp(mut self, lo: f64, hi: f64) -> Self {
        match &mut self {
            QModel::Tabular(t) => t.clamp = Some((lo, hi)),
            QModel::Linear(l) => l.clamp = Some((lo, hi)),
        }
        self
    }

    pub fn predict(&self, state: &State, action: &Step) -> f64 {
        self.predict_text(state.text(), &action.text)
    }

    pub fn predict_text(&self, state_text: &str, action_text: &str) -> f64 {
        let (raw, clamp) = match self {
            QModel::Tabular(t) => (
                t.cells
                    .get(&(sha256_hex(state_text), sha256_hex(action_text)))
                    .copied()
                    .unwrap_or(t.default),
                t.clamp,
            ),
            QModel::Linear(l) => {
                let x = l.features.features(state_text, action_text);
                let raw = x.iter().zip(&l.weights).map(|(a, b)| a * b).sum();
                (raw, l.clamp)
            }
        };
        match clamp {
            Some((lo, hi)) => raw.clamp(lo, hi),
            None => raw,
        }
    }

    pub fn to_json_string(&self) -> String {
        let file = match self {
            QModel::Tabular(t) => ModelFile {
                format_version: 1,
                kind: "tabular".into(),
                clamp: t.clamp,
                default: Some(t.default),
                entries: Some(
                    t.cells
                        .iter()
                        .map(|((s, a), v)| ModelEntry {
                            state_hash: s.clone(),
                            action_hash: a.clone(),
                            value: *v,
                        })
                        .collect(),
                ),
                feature_set_id: None,
                weights: None,
            },
            QModel::Linear(l) => ModelFile {
                format_version: 1,
                kind: "linear".into(),
                clamp: l.clamp,
                default: None,
                entries: None,
                feature_set_id: Some(l.features.id().to_string()),
                weights: Some(l.weights.clone()),
            },
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json_str(json: &str, registry: &FeatureRegistry) -> Result<Self, QError> {
        let file: ModelFile =
            serde_json::from_str(json).map_err(|e| QError::MalformedModel(e.to_string()))?;
        match file.kind.as_str() {
            "tabular" => {
                let mut cells = BTreeMap::new();
                for e in file.entries.unwrap_or_default() {
                    cells.insert((e.state_hash, e.action_hash), e.value);
                }
                Ok(QModel::Tabular(TabularQ {
                    cells,
                    default: file.default.unwrap_or(0.0),
                    clamp: file.clamp,
                }))
            }
            "linear" => {
                let id = file
                    .feature_set_id
                    .ok_or_else(|| QError::MalformedModel("missing feature_set_id".into()))?;
                let features = registry.resolve(&id)?;
                let weights = file
                    .weights
                    .ok_or_else(|| QError::MalformedModel("missing weights".into()))?;
                if weights.len() != features.dim() {
                    return Err(QError::MalformedModel(format!(
                        "weight count {} does not match feature dim {}",
                        weights.len(),
                        features.dim()
                    )));
                }
                Ok(QModel::Linear(LinearQ { features, weights, clamp: file.clamp }))
            }
            other => Err(QError::MalformedModel(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    clamp: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    default: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    entries: Option<Vec<ModelEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    feature_set_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelEntry {
    state_hash: String,
    action_hash: String,
    value: f64,
}

/// Least-squares fit of a Q-model to label records.
///
/// Tabular: every cell becomes the mean of its labels (the exact minimizer).
/// Linear: iterative least squares (conjugate gradient on the normal
/// equations) with a ridge fallback of 1e-6 on rank-deficient systems.
pub fn fit_q(records: &[QLabelRecord], kind: &FitModelKind) -> Result<(QModel, FitDiagnostics), QError> {
    if records.is_empty() {
        return Err(QError::InvalidDataset("no label records".into()));
    }
    if records.iter().any(|r| !r.label.is_finite()) {
        return Err(QError::NonFiniteLabel);
    }
    match kind {
        FitModelKind::Tabular => {
            let mut sums: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
            for r in records {
                let key = (sha256_hex(&r.state_text), sha256_hex(&r.action_text));
                let entry = sums.entry(key).or_insert((0.0, 0));
                entry.0 += r.label;
                entry.1 += 1;
            }
            let cells: BTreeMap<(String, String), f64> =
                sums.into_iter().map(|(k, (sum, n))| (k, sum / n as f64)).collect();
            let model = QModel::Tabular(TabularQ { cells, default: 0.0, clamp: None });
            let mse = records
                .iter()
                .map(|r| {
                    let p = model.predict_text(&r.state_text, &r.action_text);
                    (p - r.label) * (p - r.label)
                })
                .sum::<f64>()
                / records.len() as f64;
            Ok((model, FitDiagnostics { mse, iterations: 1, ridged: false }))
        }
        FitModelKind::Linear(features) => linear::fit_linear(records, features.clone()),
    }
}
