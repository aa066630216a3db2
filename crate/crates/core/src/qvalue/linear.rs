//! Linear Q-models: feature sets and the iterative least-squares fit.

use std::collections::HashMap;
use std::sync::Arc;

use tracing::warn;

use super::{FitDiagnostics, LinearQ, QError, QLabelRecord, QModel};

const RIDGE_EPSILON: f64 = 1e-6;
const CG_TOLERANCE: f64 = 1e-14;

/// Extracts a fixed-length feature vector from (state text, action text).
/// Implementations must be reconstructable from their id so serialized
/// models can be reloaded.
pub trait FeatureSet: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn features(&self, state_text: &str, action_text: &str) -> Vec<f64>;
}

/// Environment-independent features: a bias, the step count of the state
/// (newline count, line segmentation), and a hashed one-hot of the action
/// text. Id form: `hashed_v1:<buckets>`.
pub struct HashedFeatures {
    id: String,
    buckets: usize,
}

impl HashedFeatures {
    pub fn new(buckets: usize) -> Self {
        HashedFeatures { id: format!("hashed_v1:{buckets}"), buckets }
    }

    pub fn parse_id(id: &str) -> Option<Self> {
        let rest = id.strip_prefix("hashed_v1:")?;
        let buckets: usize = rest.parse().ok()?;
        (buckets > 0).then(|| HashedFeatures::new(buckets))
    }
}

impl FeatureSet for HashedFeatures {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        2 + self.buckets
    }

    fn features(&self, state_text: &str, action_text: &str) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        x[0] = 1.0;
        x[1] = state_text.matches('\n').count() as f64;
        let h = crate::hashing::sha256_hex(action_text);
        let bucket = usize::from_str_radix(&h[..8], 16).unwrap_or(0) % self.buckets;
        x[2 + bucket] = 1.0;
        x
    }
}

/// Resolves feature-set ids when loading serialized linear models. Callers
/// register environment-bound sets on top of the built-ins.
#[derive(Default)]
pub struct FeatureRegistry {
    custom: HashMap<String, Arc<dyn FeatureSet>>,
}

impl FeatureRegistry {
    pub fn with_builtins() -> Self {
        FeatureRegistry::default()
    }

    pub fn register(&mut self, set: Arc<dyn FeatureSet>) {
        self.custom.insert(set.id().to_string(), set);
    }

    pub fn resolve(&self, id: &str) -> Result<Arc<dyn FeatureSet>, QError> {
        if let Some(set) = self.custom.get(id) {
            return Ok(set.clone());
        }
        if let Some(set) = HashedFeatures::parse_id(id) {
            return Ok(Arc::new(set));
        }
        Err(QError::UnknownFeatureSet(id.to_string()))
    }
}

/// Minimizes mean squared error by conjugate gradient on the normal
/// equations. Rank-deficient systems get a ridge of `1e-6` and a warning
/// instead of failing.
pub(super) fn fit_linear(
    records: &[QLabelRecord],
    features: Arc<dyn FeatureSet>,
) -> Result<(QModel, FitDiagnostics), QError> {
    let d = features.dim();
    let n = records.len();
    let xs: Vec<Vec<f64>> =
        records.iter().map(|r| features.features(&r.state_text, &r.action_text)).collect();
    for x in &xs {
        if x.len() != d {
            return Err(QError::InvalidDataset(format!(
                "feature vector of length {} from set of dim {d}",
                x.len()
            )));
        }
    }
    let ys: Vec<f64> = records.iter().map(|r| r.label).collect();

    // Normal equations A w = b with A = X'X / n, b = X'y / n.
    let mut a = vec![vec![0.0; d]; d];
    let mut b = vec![0.0; d];
    for (x, y) in xs.iter().zip(&ys) {
        for i in 0..d {
            b[i] += x[i] * y / n as f64;
            for j in 0..d {
                a[i][j] += x[i] * x[j] / n as f64;
            }
        }
    }

    let (weights, iterations, ridged) = match conjugate_gradient(&a, &b) {
        Some((w, it)) => (w, it, false),
        None => {
            warn!("linear fit is rank-deficient; applying ridge {RIDGE_EPSILON}");
            let mut a_ridge = a.clone();
            for (i, row) in a_ridge.iter_mut().enumerate() {
                row[i] += RIDGE_EPSILON;
            }
            let (w, it) = conjugate_gradient(&a_ridge, &b).ok_or(QError::SingularFit)?;
            (w, it, true)
        }
    };

    let mse = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let p: f64 = x.iter().zip(&weights).map(|(a, b)| a * b).sum();
            (p - y) * (p - y)
        })
        .sum::<f64>()
        / n as f64;

    let model = QModel::Linear(LinearQ { features, weights, clamp: None });
    Ok((model, FitDiagnostics { mse, iterations, ridged }))
}

/// CG for symmetric positive semi-definite systems. Returns None when the
/// system stalls on a rank-deficient direction.
fn conjugate_gradient(a: &[Vec<f64>], b: &[f64]) -> Option<(Vec<f64>, usize)> {
    let d = b.len();
    let mut w = vec![0.0; d];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs: f64 = dot(&r, &r);
    let scale = rs.max(1.0);
    if rs <= CG_TOLERANCE {
        return Some((w, 0));
    }
    for iter in 1..=(4 * d + 8) {
        let ap = matvec(a, &p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return None;
        }
        let alpha = rs / pap;
        for i in 0..d {
            w[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_next = dot(&r, &r);
        if rs_next <= CG_TOLERANCE * scale {
            return Some((w, iter));
        }
        let beta = rs_next / rs;
        for i in 0..d {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_next;
    }
    // Did not converge within the iteration budget: treat as deficient so
    // the caller retries with ridge.
    None
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| dot(row, x)).collect()
}
