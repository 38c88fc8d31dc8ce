//! Logistic-regression clause classifier with accuracy-balancing boosting.
//!
//! Training is deterministic full-batch gradient descent on the mean
//! logistic loss with L2 regularization (bias unregularized). If a step
//! would increase the loss, it is retried with a halved step size, so the
//! loss is non-increasing across epochs by construction.
//!
//! [`boost_balance`] repeatedly duplicates misclassified positive examples
//! and retrains until the true-positive rate reaches the true-negative rate
//! (measured on the original, unduplicated examples), or an iteration cap.

use crate::features::{FeatureSpace, FeatureVector, Featurizer, FeatureBag};
use crate::prover::{ClauseEvaluator, EvalError, WeightModel};
use crate::termbank::{Clause, Problem, TermBank};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct LinearParams {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: u32,
    pub max_boost_iters: u32,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams { learning_rate: 0.1, l2: 1e-4, epochs: 200, max_boost_iters: 20 }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum TrainError {
    #[error("cannot train on zero examples")]
    Empty,
    #[error("vector dimension {found} does not match the space dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("balancing requires both labels, got only {0} examples")]
    SingleLabel(&'static str),
}

/// Outcome statistics of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainMeta {
    /// Number of boosting rounds performed (0 = plain training sufficed).
    pub iterations: u32,
    /// True if the iteration cap was hit before the stop condition.
    pub flagged: bool,
    /// Training-set rates on the original examples; None when undefined.
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    /// Total positive multiplicity before each training round.
    pub positive_counts: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct LinearModel {
    pub space: FeatureSpace,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub meta: TrainMeta,
}

fn sparse_dot(weights: &[f64], v: &FeatureVector) -> f64 {
    v.entries.iter().map(|&(i, x)| weights[i as usize] * x as f64).sum()
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean weighted logistic loss plus L2 penalty, and its gradient.
/// `counts[i]` is the multiplicity of example `i`. Exposed for gradient
/// verification.
pub fn loss_and_gradient(
    weights: &[f64],
    bias: f64,
    data: &[(FeatureVector, bool)],
    counts: &[u64],
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let total: u64 = counts.iter().sum();
    let scale = 1.0 / total as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_bias = 0.0;
    for ((v, positive), &count) in data.iter().zip(counts) {
        if count == 0 {
            continue;
        }
        let y = if *positive { 1.0 } else { -1.0 };
        let s = sparse_dot(weights, v) + bias;
        let c = count as f64 * scale;
        loss += c * softplus(-y * s);
        // d/ds softplus(-y s) = -y * sigmoid(-y s)
        let err = c * -y * sigmoid(-y * s);
        for &(i, x) in &v.entries {
            grad[i as usize] += err * x as f64;
        }
        grad_bias += err;
    }
    let mut penalty = 0.0;
    for (g, &w) in grad.iter_mut().zip(weights) {
        *g += l2 * w;
        penalty += w * w;
    }
    loss += 0.5 * l2 * penalty;
    (loss, grad, grad_bias)
}

fn check_dimensions(space: &FeatureSpace, data: &[(FeatureVector, bool)]) -> Result<(), TrainError> {
    let expected = space.dimension();
    for (v, _) in data {
        if v.dimension != expected {
            return Err(TrainError::DimensionMismatch { expected, found: v.dimension });
        }
    }
    Ok(())
}

fn descend(
    space: &FeatureSpace,
    data: &[(FeatureVector, bool)],
    counts: &[u64],
    params: &LinearParams,
) -> (Vec<f64>, f64) {
    let dim = space.dimension();
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut lr = params.learning_rate;
    let (mut loss, mut grad, mut grad_bias) = loss_and_gradient(&weights, bias, data, counts, params.l2);
    for _ in 0..params.epochs {
        // Try the step; on a loss increase shrink the step and retry, which
        // keeps the loss non-increasing across epochs.
        let mut accepted = false;
        while lr > 1e-18 {
            let cand_w: Vec<f64> = weights.iter().zip(&grad).map(|(w, g)| w - lr * g).collect();
            let cand_b = bias - lr * grad_bias;
            let (cand_loss, cand_grad, cand_grad_bias) =
                loss_and_gradient(&cand_w, cand_b, data, counts, params.l2);
            if cand_loss.is_finite() && cand_loss <= loss {
                weights = cand_w;
                bias = cand_b;
                loss = cand_loss;
                grad = cand_grad;
                grad_bias = cand_grad_bias;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if !accepted {
            break;
        }
        let gnorm: f64 = grad.iter().map(|g| g * g).sum::<f64>() + grad_bias * grad_bias;
        if gnorm < 1e-24 {
            break;
        }
    }
    (weights, bias)
}

/// Rates on the original examples; None where a class is absent.
pub fn classification_rates(
    score: impl Fn(&FeatureVector) -> bool,
    data: &[(FeatureVector, bool)],
) -> (Option<f64>, Option<f64>) {
    let mut tp = 0u64;
    let mut fn_ = 0u64;
    let mut tn = 0u64;
    let mut fp = 0u64;
    for (v, positive) in data {
        match (positive, score(v)) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    let tpr = if tp + fn_ > 0 { Some(tp as f64 / (tp + fn_) as f64) } else { None };
    let tnr = if tn + fp > 0 { Some(tn as f64 / (tn + fp) as f64) } else { None };
    (tpr, tnr)
}

/// Fit a logistic-regression model once, without balancing.
pub fn train_linear(
    space: FeatureSpace,
    data: &[(FeatureVector, bool)],
    params: &LinearParams,
) -> Result<LinearModel, TrainError> {
    if data.is_empty() {
        return Err(TrainError::Empty);
    }
    check_dimensions(&space, data)?;
    let counts = vec![1u64; data.len()];
    let (weights, bias) = descend(&space, data, &counts, params);
    let (tpr, tnr) = classification_rates(|v| sparse_dot(&weights, v) + bias > 0.0, data);
    Ok(LinearModel {
        space,
        weights,
        bias,
        meta: TrainMeta { iterations: 0, flagged: false, tpr, tnr, positive_counts: Vec::new() },
    })
}

/// Train with accuracy balancing: repeatedly duplicate misclassified
/// positives and retrain until TPR >= TNR on the original examples, or the
/// iteration cap (then the best model so far is returned, flagged).
pub fn boost_balance(
    space: FeatureSpace,
    data: &[(FeatureVector, bool)],
    params: &LinearParams,
) -> Result<LinearModel, TrainError> {
    if data.is_empty() {
        return Err(TrainError::Empty);
    }
    check_dimensions(&space, data)?;
    let n_pos = data.iter().filter(|(_, p)| *p).count();
    if n_pos == 0 {
        return Err(TrainError::SingleLabel("negative"));
    }
    if n_pos == data.len() {
        return Err(TrainError::SingleLabel("positive"));
    }
    let mut counts = vec![1u64; data.len()];
    let mut positive_counts = Vec::new();
    // Fallback if the cap hits: (gap, weights, bias, tpr, tnr, iteration).
    type BestRound = (f64, Vec<f64>, f64, Option<f64>, Option<f64>, u32);
    let mut best: Option<BestRound> = None;
    for iteration in 0..=params.max_boost_iters {
        positive_counts.push(
            data.iter()
                .zip(&counts)
                .filter(|((_, p), _)| *p)
                .map(|(_, &c)| c)
                .sum(),
        );
        let (weights, bias) = descend(&space, data, &counts, params);
        let classify = |v: &FeatureVector| sparse_dot(&weights, v) + bias > 0.0;
        let (tpr, tnr) = classification_rates(classify, data);
        let (t_pos, t_neg) = (tpr.unwrap_or(0.0), tnr.unwrap_or(0.0));
        if t_pos >= t_neg {
            return Ok(LinearModel {
                space,
                weights,
                bias,
                meta: TrainMeta { iterations: iteration, flagged: false, tpr, tnr, positive_counts },
            });
        }
        let gap = t_neg - t_pos;
        if best.as_ref().is_none_or(|(g, ..)| gap < *g) {
            best = Some((gap, weights.clone(), bias, tpr, tnr, iteration));
        }
        if iteration == params.max_boost_iters {
            break;
        }
        for ((v, positive), count) in data.iter().zip(counts.iter_mut()) {
            if *positive && !classify(v) {
                *count += 1;
            }
        }
    }
    let (_, weights, bias, tpr, tnr, iterations) = best.expect("at least one round ran");
    Ok(LinearModel {
        space,
        weights,
        bias,
        meta: TrainMeta { iterations, flagged: true, tpr, tnr, positive_counts },
    })
}

impl LinearModel {
    pub fn score(&self, v: &FeatureVector) -> f64 {
        sparse_dot(&self.weights, v) + self.bias
    }

    /// Positive iff the raw score is strictly above zero (ties negative).
    pub fn classify(&self, v: &FeatureVector) -> bool {
        self.score(v) > 0.0
    }

    /// Clause weight for search guidance.
    pub fn weight_of(&self, v: &FeatureVector) -> f64 {
        if self.classify(v) {
            1.0
        } else {
            10.0
        }
    }

    pub fn into_weight_model(self) -> Arc<dyn WeightModel> {
        Arc::new(SharedLinear(Arc::new(self)))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("linear-model v1\n");
        out.push_str(&format!("dimension {}\n", self.weights.len()));
        out.push_str(&format!("bias {}\n", self.bias));
        out.push_str(&format!("iterations {}\n", self.meta.iterations));
        out.push_str(&format!("flagged {}\n", if self.meta.flagged { 1 } else { 0 }));
        out.push_str(&format!("tpr {}\n", opt_to_text(self.meta.tpr)));
        out.push_str(&format!("tnr {}\n", opt_to_text(self.meta.tnr)));
        let growth: Vec<String> = self.meta.positive_counts.iter().map(u64::to_string).collect();
        out.push_str(&format!("growth {}\n", growth.join(" ")));
        write_space(&mut out, &self.space);
        out.push_str("weights\n");
        for (i, &w) in self.weights.iter().enumerate() {
            if w != 0.0 {
                out.push_str(&format!("{i}:{w}\n"));
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<LinearModel, ModelFileError> {
        let mut lines = text.lines().enumerate();
        expect_line(&mut lines, "linear-model v1")?;
        let dimension: usize = parse_field(&mut lines, "dimension")?;
        let bias: f64 = parse_field(&mut lines, "bias")?;
        let iterations: u32 = parse_field(&mut lines, "iterations")?;
        let flagged: u8 = parse_field(&mut lines, "flagged")?;
        let tpr = parse_opt_field(&mut lines, "tpr")?;
        let tnr = parse_opt_field(&mut lines, "tnr")?;
        let growth_line = field_text(&mut lines, "growth")?;
        let positive_counts = growth_line
            .split_whitespace()
            .map(|t| t.parse::<u64>().map_err(|_| ModelFileError::bad(0, "growth")))
            .collect::<Result<Vec<u64>, _>>()?;
        let space = read_space(&mut lines)?;
        if space.dimension() != dimension {
            return Err(ModelFileError::Inconsistent {
                what: format!("dimension {} vs space dimension {}", dimension, space.dimension()),
            });
        }
        expect_line(&mut lines, "weights")?;
        let mut weights = vec![0.0; dimension];
        for (lineno, line) in lines {
            if line == "end" {
                return Ok(LinearModel {
                    space,
                    weights,
                    bias,
                    meta: TrainMeta { iterations, flagged: flagged != 0, tpr, tnr, positive_counts },
                });
            }
            let (idx, w) = line.split_once(':').ok_or_else(|| ModelFileError::bad(lineno, line))?;
            let idx: usize = idx.parse().map_err(|_| ModelFileError::bad(lineno, line))?;
            if idx >= dimension {
                return Err(ModelFileError::bad(lineno, line));
            }
            weights[idx] = w.parse().map_err(|_| ModelFileError::bad(lineno, line))?;
        }
        Err(ModelFileError::Truncated)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelFileError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<LinearModel, ModelFileError> {
        let mut text = String::new();
        std::io::BufReader::new(std::fs::File::open(path)?).read_to_string(&mut text)?;
        LinearModel::from_text(&text)
    }
}

struct SharedLinear(Arc<LinearModel>);

impl WeightModel for SharedLinear {
    fn model_name(&self) -> &str {
        "linear"
    }

    fn evaluator(&self) -> Box<dyn ClauseEvaluator> {
        Box::new(LinearEvaluator {
            model: Arc::clone(&self.0),
            featurizer: Featurizer::new(),
            conjecture: FeatureBag::new(),
        })
    }
}

struct LinearEvaluator {
    model: Arc<LinearModel>,
    featurizer: Featurizer,
    conjecture: FeatureBag,
}

impl ClauseEvaluator for LinearEvaluator {
    fn begin_problem(&mut self, problem: &Problem, bank: &TermBank) {
        self.conjecture = self.featurizer.conjecture_bag(bank, &problem.conjecture);
    }

    fn weight(&mut self, clause: &Clause, bank: &TermBank) -> Result<f64, EvalError> {
        let bag = self.featurizer.clause_bag(bank, clause);
        let v = self.model.space.vectorize(&bag, &self.conjecture);
        Ok(self.model.weight_of(&v))
    }
}

// ---- model file plumbing shared across model kinds ----

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("model file line {line}: cannot parse '{text}'")]
    Parse { line: usize, text: String },
    #[error("model file ended early")]
    Truncated,
    #[error("inconsistent model file: {what}")]
    Inconsistent { what: String },
}

impl ModelFileError {
    pub(crate) fn bad(line: usize, text: &str) -> Self {
        ModelFileError::Parse { line: line + 1, text: text.to_string() }
    }
}

pub(crate) fn opt_to_text(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "-".to_string(),
    }
}

type Lines<'a> = std::iter::Enumerate<std::str::Lines<'a>>;

pub(crate) fn expect_line(lines: &mut Lines, expected: &str) -> Result<(), ModelFileError> {
    match lines.next() {
        Some((_, line)) if line == expected => Ok(()),
        Some((lineno, line)) => Err(ModelFileError::bad(lineno, line)),
        None => Err(ModelFileError::Truncated),
    }
}

pub(crate) fn field_text<'a>(lines: &mut Lines<'a>, name: &str) -> Result<&'a str, ModelFileError> {
    match lines.next() {
        Some((lineno, line)) => match line.strip_prefix(name) {
            Some(rest) => Ok(rest.trim_start()),
            None => Err(ModelFileError::bad(lineno, line)),
        },
        None => Err(ModelFileError::Truncated),
    }
}

pub(crate) fn parse_field<T: std::str::FromStr>(lines: &mut Lines, name: &str) -> Result<T, ModelFileError> {
    let text = field_text(lines, name)?;
    text.parse().map_err(|_| ModelFileError::Parse { line: 0, text: format!("{name} {text}") })
}

pub(crate) fn parse_opt_field(lines: &mut Lines, name: &str) -> Result<Option<f64>, ModelFileError> {
    let text = field_text(lines, name)?;
    if text == "-" {
        return Ok(None);
    }
    text.parse()
        .map(Some)
        .map_err(|_| ModelFileError::Parse { line: 0, text: format!("{name} {text}") })
}

pub(crate) fn write_space(out: &mut String, space: &FeatureSpace) {
    match space {
        FeatureSpace::Indexed(s) => {
            out.push_str(&format!("space indexed {}\n", s.key_count()));
            for (key, _) in s.keys() {
                out.push_str("key ");
                out.push_str(&key.serialize());
                out.push('\n');
            }
        }
        FeatureSpace::Hashed(cfg) => {
            out.push_str(&format!("space hashed {}\n", cfg.base));
        }
    }
}

pub(crate) fn read_space(lines: &mut Lines) -> Result<FeatureSpace, ModelFileError> {
    use crate::features::{FeatureKey, IndexedSpace};
    let text = field_text(lines, "space")?.to_string();
    if let Some(count) = text.strip_prefix("indexed ") {
        let count: usize = count
            .parse()
            .map_err(|_| ModelFileError::Parse { line: 0, text: format!("space {text}") })?;
        let mut keys = Vec::with_capacity(count);
        for _ in 0..count {
            let key_text = field_text(lines, "key")?;
            let key = FeatureKey::parse(key_text)
                .map_err(|e| ModelFileError::Parse { line: 0, text: e.text })?;
            keys.push(key);
        }
        let space = IndexedSpace::from_keys(keys);
        if space.key_count() != count {
            return Err(ModelFileError::Inconsistent { what: "duplicate space keys".into() });
        }
        Ok(FeatureSpace::Indexed(space))
    } else if let Some(base) = text.strip_prefix("hashed ") {
        let base: u32 = base
            .parse()
            .map_err(|_| ModelFileError::Parse { line: 0, text: format!("space {text}") })?;
        let cfg = crate::hashing::HashConfig::new(base)
            .map_err(|_| ModelFileError::Inconsistent { what: format!("hash base {base}") })?;
        Ok(FeatureSpace::hashed(cfg))
    } else {
        Err(ModelFileError::Parse { line: 0, text: format!("space {text}") })
    }
}
