//! Consistency training of a logistic surrogate scorer.
//!
//! Each text is represented by a fixed feature vector, and the scorer is
//! `sigmoid(w . x + b)`. Training pulls every member of a paraphrase set
//! toward a per-set target computed from the current predictions by an
//! [`AggregationStrategy`]. The target is treated as a constant when
//! differentiating, and the loss is the mean absolute deviation from it.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregate::{aggregate_target, AggregationStrategy};
use crate::error::{Error, Result};
use crate::io::{read_jsonl, write_atomic, write_jsonl};
use crate::metrics::{
    binned_lfr, classification_metrics, dispersion_summary, ece, safety_predictions,
    threshold_split_lfr, BinnedLfrReport, ConfusionCounts, DispersionSummary, ThresholdSplitLfr,
};
use crate::model::{label_of, sigmoid, Label, ParaphraseSet, SafetyScore};

/// Key under which a text's feature vector is stored: lowercase hex SHA-256
/// of its UTF-8 bytes.
pub fn text_key(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub text_sha256: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStore {
    dim: Option<usize>,
    vectors: HashMap<String, Vec<f64>>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert_keyed(&mut self, key: String, vector: Vec<f64>) -> Result<()> {
        if let Some(bad) = vector.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "feature vector for {key} has non-finite entry {bad}"
            )));
        }
        match self.dim {
            Some(d) if d != vector.len() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: vector.len(),
                })
            }
            None => self.dim = Some(vector.len()),
            _ => {}
        }
        self.vectors.insert(key, vector);
        Ok(())
    }

    pub fn insert(&mut self, text: &str, vector: Vec<f64>) -> Result<()> {
        self.insert_keyed(text_key(text), vector)
    }

    pub fn get(&self, text: &str) -> Result<&[f64]> {
        self.vectors
            .get(&text_key(text))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingFeature { text: text.to_owned() })
    }

    pub fn from_records(records: Vec<FeatureRecord>) -> Result<Self> {
        let mut store = FeatureStore::new();
        for r in records {
            store.insert_keyed(r.text_sha256, r.vector)?;
        }
        Ok(store)
    }

    /// Records sorted by key, so saved files are byte-stable.
    pub fn records(&self) -> Vec<FeatureRecord> {
        let mut out: Vec<FeatureRecord> = self
            .vectors
            .iter()
            .map(|(k, v)| FeatureRecord {
                text_sha256: k.clone(),
                vector: v.clone(),
            })
            .collect();
        out.sort_by(|a, b| a.text_sha256.cmp(&b.text_sha256));
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_records(read_jsonl(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_jsonl(&self.records(), path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScorerFile", into = "ScorerFile")]
pub struct LinearScorer {
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Serialize, Deserialize)]
struct ScorerFile {
    d: usize,
    weights: Vec<f64>,
    bias: f64,
}

impl TryFrom<ScorerFile> for LinearScorer {
    type Error = Error;

    fn try_from(f: ScorerFile) -> Result<Self> {
        if f.d != f.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: f.d,
                found: f.weights.len(),
            });
        }
        if !f.bias.is_finite() || f.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter("scorer parameters must be finite".into()));
        }
        Ok(LinearScorer {
            weights: f.weights,
            bias: f.bias,
        })
    }
}

impl From<LinearScorer> for ScorerFile {
    fn from(s: LinearScorer) -> Self {
        ScorerFile {
            d: s.weights.len(),
            weights: s.weights,
            bias: s.bias,
        }
    }
}

impl LinearScorer {
    pub fn zeros(d: usize) -> Self {
        LinearScorer {
            weights: vec![0.0; d],
            bias: 0.0,
        }
    }

    /// Small random weights drawn from `N(0, 0.01^2)`, zero bias.
    pub fn random(d: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        LinearScorer {
            weights: (0..d).map(|_| normal.sample(rng)).collect(),
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.logit_unchecked(x))
    }

    fn logit_unchecked(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let body = serde_json::to_vec_pretty(self).map_err(|e| Error::Report(e.to_string()))?;
        write_atomic(path, |w| {
            use std::io::Write;
            w.write_all(&body)?;
            w.write_all(b"\n")
        })
    }
}

pub fn forward(scorer: &LinearScorer, x: &[f64]) -> Result<SafetyScore> {
    SafetyScore::new(sigmoid(scorer.logit(x)?))
}

/// Mean absolute deviation of `ps` from `target`.
pub fn anchor_loss(ps: &[f64], target: f64) -> Result<f64> {
    if ps.is_empty() {
        return Err(Error::EmptyInput("anchor_loss"));
    }
    Ok(ps.iter().map(|p| (p - target).abs()).sum::<f64>() / ps.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Gradient {
    pub fn zeros(d: usize) -> Self {
        Gradient {
            weights: vec![0.0; d],
            bias: 0.0,
        }
    }

    fn add_scaled(&mut self, other: &Gradient, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += scale * b;
        }
        self.bias += scale * other.bias;
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gradient of [`anchor_loss`] with respect to the scorer parameters, the
/// target held fixed. The subgradient at `p_i == target` is taken as zero.
pub fn anchor_loss_gradient(scorer: &LinearScorer, xs: &[&[f64]], target: f64) -> Result<Gradient> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("anchor_loss_gradient"));
    }
    let mut g = Gradient::zeros(scorer.dim());
    let n = xs.len() as f64;
    for x in xs {
        let p = sigmoid(scorer.logit(x)?);
        let s = sign(p - target) * p * (1.0 - p) / n;
        for (gw, v) in g.weights.iter_mut().zip(x.iter()) {
            *gw += s * v;
        }
        g.bias += s;
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceFilter {
    /// Keep sets whose paraphrase-score std is at least `min_std`.
    #[default]
    KeepHigh,
    /// Keep sets whose paraphrase-score std is below `min_std`.
    KeepLow,
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size_sets: usize,
    pub strategy: AggregationStrategy,
    pub min_set_size: usize,
    pub min_std: f64,
    pub variance_filter: VarianceFilter,
    /// Whether the original's prediction joins the paraphrases, both when the
    /// target is computed and in the loss.
    pub include_original: bool,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-3,
            epochs: 4,
            batch_size_sets: 4,
            strategy: AggregationStrategy::skew_aware(),
            min_set_size: 3,
            min_std: 0.01,
            variance_filter: VarianceFilter::KeepHigh,
            include_original: true,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size_sets == 0 {
            return Err(Error::InvalidParameter(
                "epochs and batch size must be at least 1".into(),
            ));
        }
        if self.min_std.is_nan() || self.min_std < 0.0 {
            return Err(Error::InvalidParameter(format!("min_std must be non-negative, got {}", self.min_std)));
        }
        self.strategy.validate()
    }
}

fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn keep_set(paraphrase_scores: &[f64], config: &TrainingConfig) -> bool {
    if paraphrase_scores.len() < config.min_set_size || paraphrase_scores.is_empty() {
        return false;
    }
    let std = population_std(paraphrase_scores);
    match config.variance_filter {
        VarianceFilter::KeepHigh => std >= config.min_std,
        VarianceFilter::KeepLow => std < config.min_std,
        VarianceFilter::Disabled => true,
    }
}

/// Sets with enough paraphrases whose score spread passes the variance
/// filter, in input order.
pub fn filter_training_sets<'a>(
    sets: &'a [ParaphraseSet],
    config: &TrainingConfig,
) -> Result<Vec<&'a ParaphraseSet>> {
    let mut out = Vec::new();
    for set in sets {
        if keep_set(&set.scores()?.paraphrases, config) {
            out.push(set);
        }
    }
    Ok(out)
}

/// Feature rows of one set, original first.
fn set_matrix<'f>(set: &ParaphraseSet, features: &'f FeatureStore, d: usize) -> Result<Vec<&'f [f64]>> {
    set.members()
        .map(|m| {
            let v = features.get(&m.text)?;
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: v.len(),
                });
            }
            Ok(v)
        })
        .collect()
}

fn predict(scorer: &LinearScorer, rows: &[&[f64]]) -> Vec<f64> {
    rows.iter().map(|x| sigmoid(scorer.logit_unchecked(x))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingOutcome {
    pub scorer: LinearScorer,
    /// Mean per-set loss for each epoch.
    pub history: Vec<f64>,
    pub sets_used: usize,
    pub sets_filtered: usize,
}

/// Loss and gradient for one set under the current scorer.
fn set_step(
    scorer: &LinearScorer,
    rows: &[&[f64]],
    config: &TrainingConfig,
) -> Result<(f64, Gradient)> {
    let rows = if config.include_original { rows } else { &rows[1..] };
    let ps = predict(scorer, rows);
    let target = aggregate_target(&ps, &config.strategy)?.target;
    Ok((anchor_loss(&ps, target)?, anchor_loss_gradient(scorer, rows, target)?))
}

pub fn train(
    sets: &[ParaphraseSet],
    features: &FeatureStore,
    config: &TrainingConfig,
    init: Option<LinearScorer>,
) -> Result<TrainingOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = match (&init, features.dim()) {
        (Some(s), _) => s.dim(),
        (None, Some(d)) => d,
        (None, None) => return Err(Error::EmptyInput("feature store")),
    };
    let mut scorer = match init {
        Some(s) => s,
        None => LinearScorer::random(d, &mut rng),
    };

    let mut matrices = Vec::new();
    for set in sets {
        if set.paraphrases.is_empty() {
            return Err(Error::NoParaphrases { id: set.id.clone() });
        }
        let rows = set_matrix(set, features, d)?;
        if keep_set(&predict(&scorer, &rows[1..]), config) {
            matrices.push(rows);
        }
    }
    if matrices.is_empty() {
        return Err(Error::EmptyAfterFilter);
    }

    let mut order: Vec<usize> = (0..matrices.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size_sets) {
            let mut grad = Gradient::zeros(d);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (loss, g) = set_step(&scorer, &matrices[i], config)?;
                epoch_loss += loss;
                grad.add_scaled(&g, scale);
            }
            for (w, g) in scorer.weights.iter_mut().zip(&grad.weights) {
                *w -= config.learning_rate * g;
            }
            scorer.bias -= config.learning_rate * grad.bias;
        }
        history.push(epoch_loss / matrices.len() as f64);
    }
    Ok(TrainingOutcome {
        scorer,
        history,
        sets_used: matrices.len(),
        sets_filtered: sets.len() - matrices.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub vector: Vec<f64>,
    pub label: Label,
}

/// Full-batch gradient descent on binary cross-entropy from zero weights,
/// with Safe as the positive class.
pub fn fit_logistic_regression(
    data: &[LabeledExample],
    learning_rate: f64,
    iterations: usize,
) -> Result<LinearScorer> {
    let d = data.first().ok_or(Error::EmptyInput("fit_logistic_regression"))?.vector.len();
    if let Some(bad) = data.iter().find(|e| e.vector.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.vector.len(),
        });
    }
    let mut scorer = LinearScorer::zeros(d);
    let n = data.len() as f64;
    for _ in 0..iterations {
        let mut g = Gradient::zeros(d);
        for ex in data {
            let r = sigmoid(scorer.logit_unchecked(&ex.vector)) - ex.label.as_target();
            for (gw, v) in g.weights.iter_mut().zip(&ex.vector) {
                *gw += r * v;
            }
            g.bias += r;
        }
        for (w, gw) in scorer.weights.iter_mut().zip(&g.weights) {
            *w -= learning_rate * gw / n;
        }
        scorer.bias -= learning_rate * g.bias / n;
    }
    Ok(scorer)
}

/// Copies of `sets` with every member scored by `scorer`.
pub fn score_sets(scorer: &LinearScorer, sets: &[ParaphraseSet], features: &FeatureStore) -> Result<Vec<ParaphraseSet>> {
    sets.iter()
        .map(|set| {
            let mut out = set.clone();
            for m in out.members_mut() {
                let x = features.get(&m.text)?;
                m.score = Some(forward(scorer, x)?);
                m.error = None;
            }
            Ok(out)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub lfr: BinnedLfrReport,
    pub threshold_split: ThresholdSplitLfr,
    pub dispersion: DispersionSummary,
    pub labeled_examples: usize,
    pub accuracy: Option<f64>,
    /// F1 with Unsafe as the positive class.
    pub f1: Option<f64>,
    pub ece: Option<f64>,
}

pub fn evaluate(
    scorer: &LinearScorer,
    eval_sets: &[ParaphraseSet],
    features: &FeatureStore,
    labeled: &[LabeledExample],
    ece_bins: usize,
) -> Result<EvaluationReport> {
    let scored = score_sets(scorer, eval_sets, features)?;
    let scores = labeled
        .iter()
        .map(|ex| forward(scorer, &ex.vector).map(SafetyScore::value))
        .collect::<Result<Vec<_>>>()?;
    let gold: Vec<Label> = labeled.iter().map(|ex| ex.label).collect();
    let counts = ConfusionCounts::from_pairs(
        scores
            .iter()
            .zip(&gold)
            .map(|(&p, &g)| (label_of(p) == Label::Unsafe, g == Label::Unsafe)),
    );
    let m = classification_metrics(&counts);
    let ece = if labeled.is_empty() {
        None
    } else {
        Some(ece(&safety_predictions(&scores, &gold)?, ece_bins)?)
    };
    Ok(EvaluationReport {
        lfr: binned_lfr(&scored)?,
        threshold_split: threshold_split_lfr(&scored)?,
        dispersion: dispersion_summary(&scored)?,
        labeled_examples: labeled.len(),
        accuracy: m.accuracy,
        f1: m.f1,
        ece,
    })
}
