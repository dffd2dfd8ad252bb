//! Standardized-feature logistic regression trained by full-batch gradient descent.

use std::path::Path;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::features::{extract_features, FEATURE_NAMES};
use crate::calibration::JdmTrainingSet;
use crate::error::{Error, Result};
use crate::fsutil::{read_json, write_json};
use crate::ngram::LanguageModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingProvenance {
    pub positives: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    pub final_loss: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate_features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDecider {
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub scaling: Vec<FeatureScaling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingProvenance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.5,
            l2: 1e-4,
            seed: 0,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy plus `l2/2 * |w|^2`, with gradients for the
/// weights and the (unpenalized) bias. `xs` must already be standardized.
pub fn logistic_loss_and_grad(
    weights: &[f64],
    bias: f64,
    xs: &[Vec<f64>],
    ys: &[f64],
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = xs.len().max(1) as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = bias + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, v) in gw.iter_mut().zip(x) {
            *g += r * v;
        }
        gb += r;
    }
    loss /= n;
    gb /= n;
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    loss += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    (loss, gw, gb)
}

/// Fits per-feature standardization and a logistic model on raw feature rows.
/// Zero-variance features get std 1 and are reported in the provenance.
pub fn fit_logistic(
    feature_names: &[&str],
    xs: &[Vec<f64>],
    ys: &[f64],
    opts: &TrainOptions,
) -> Result<LinearDecider> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::invalid("training rows and labels must be non-empty and aligned"));
    }
    if !ys.contains(&1.0) || !ys.contains(&0.0) {
        return Err(Error::invalid("training needs both positive and negative samples"));
    }
    let dim = feature_names.len();
    if let Some(row) = xs.iter().find(|r| r.len() != dim || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid(format!(
            "feature row {row:?} is not {dim} finite values"
        )));
    }
    if !(opts.learning_rate > 0.0 && opts.l2 >= 0.0) {
        return Err(Error::invalid("learning rate must be positive and l2 non-negative"));
    }

    let n = xs.len() as f64;
    let mut degenerate = Vec::new();
    let scaling: Vec<FeatureScaling> = (0..dim)
        .map(|j| {
            let mean = xs.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = xs.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let mut std = var.sqrt();
            if !(std > 1e-12) {
                tracing::warn!(feature = feature_names[j], "zero-variance feature; std clamped to 1");
                degenerate.push(feature_names[j].to_owned());
                std = 1.0;
            }
            FeatureScaling { mean, std }
        })
        .collect();
    let standardized: Vec<Vec<f64>> = xs
        .iter()
        .map(|r| {
            r.iter()
                .zip(&scaling)
                .map(|(v, s)| (v - s.mean) / s.std)
                .collect()
        })
        .collect();

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let mut weights: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.01..0.01)).collect();
    let mut bias = 0.0;
    let mut loss = f64::NAN;
    for _ in 0..opts.epochs {
        let (l, gw, gb) = logistic_loss_and_grad(&weights, bias, &standardized, ys, opts.l2);
        loss = l;
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w -= opts.learning_rate * g;
        }
        bias -= opts.learning_rate * gb;
    }
    if opts.epochs > 0 {
        loss = logistic_loss_and_grad(&weights, bias, &standardized, ys, opts.l2).0;
    }

    let positives = ys.iter().filter(|&&y| y == 1.0).count();
    Ok(LinearDecider {
        feature_names: feature_names.iter().map(|s| (*s).to_owned()).collect(),
        weights,
        bias,
        scaling,
        training: Some(TrainingProvenance {
            positives,
            negatives: ys.len() - positives,
            epochs: opts.epochs,
            learning_rate: opts.learning_rate,
            l2: opts.l2,
            seed: opts.seed,
            final_loss: loss,
            degenerate_features: degenerate,
        }),
    })
}

/// Trains on selected positives (label 1) and sampled negatives (label 0)
/// using source-side features only.
pub fn train_linear_decider(
    set: &JdmTrainingSet,
    lm: &dyn LanguageModel,
    opts: &TrainOptions,
) -> Result<LinearDecider> {
    if set.positives.is_empty() || set.negatives.is_empty() {
        return Err(Error::Empty("JDM training set needs positives and negatives"));
    }
    let mut xs = Vec::with_capacity(set.positives.len() + set.negatives.len());
    let mut ys = Vec::with_capacity(xs.capacity());
    for (records, label) in [(&set.positives, 1.0), (&set.negatives, 0.0)] {
        for r in records {
            xs.push(extract_features(&r.segment.text, lm)?.values);
            ys.push(label);
        }
    }
    fit_logistic(&FEATURE_NAMES, &xs, &ys, opts)
}

impl LinearDecider {
    pub fn validate(&self) -> Result<()> {
        let dim = self.feature_names.len();
        if self.weights.len() != dim || self.scaling.len() != dim {
            return Err(Error::invalid(format!(
                "classifier has {} names, {} weights and {} scalings",
                dim,
                self.weights.len(),
                self.scaling.len()
            )));
        }
        if self.scaling.iter().any(|s| !(s.std > 0.0) || !s.mean.is_finite()) {
            return Err(Error::invalid("classifier scaling std entries must be positive"));
        }
        if self.weights.iter().chain([&self.bias]).any(|w| !w.is_finite()) {
            return Err(Error::invalid("classifier weights must be finite"));
        }
        Ok(())
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.bias
            + x.iter()
                .zip(&self.scaling)
                .zip(&self.weights)
                .map(|((v, s), w)| w * (v - s.mean) / s.std)
                .sum::<f64>()
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let d: Self = read_json(path)?;
        d.validate()?;
        Ok(d)
    }
}
