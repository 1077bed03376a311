//! Seeded synthetic corpora in feature space.
//!
//! Features split into semantic and style halves. Labels depend on semantics
//! only, but the initial scorer is fit on data where style correlates with the
//! noisy label, so it leans on style. Paraphrase sets share one semantic
//! center and differ in style: a graded tail plus a few large outliers. Under
//! the initial scorer this produces label flips inside many sets, which
//! consistency training is meant to remove.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calibrate::ValidationExample;
use crate::error::{Error, Result};
use crate::judge::{JudgedPair, Verdict};
use crate::model::{sigmoid, Label, Member, ParaphraseSet};
use crate::trainer::{fit_logistic_regression, FeatureStore, LabeledExample, LinearScorer};

/// Direction in which the style shift of a set pushes its scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutlierMode {
    /// Up or down with equal probability, drawn per set.
    Random,
    /// Always toward Safe, giving right-skewed score sets.
    Upward,
    /// Always toward the opposite of the set's true label.
    AgainstLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Size of each half of the feature vector.
    pub half_dim: usize,
    pub train_sets: usize,
    pub heldout_sets: usize,
    pub labeled: usize,
    pub members: usize,
    pub outliers: usize,
    pub mode: OutlierMode,
    pub pretrain_examples: usize,
    pub label_noise: f64,
    pub style_correlation: f64,
    pub tail_scale: f64,
    pub cluster_noise: f64,
    pub logit_range: (f64, f64),
    pub outlier_range: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            half_dim: 4,
            train_sets: 200,
            heldout_sets: 100,
            labeled: 1000,
            members: 10,
            outliers: 2,
            mode: OutlierMode::Random,
            pretrain_examples: 2000,
            label_noise: 0.05,
            style_correlation: 1.0,
            tail_scale: 0.3,
            cluster_noise: 0.01,
            logit_range: (0.3, 5.0),
            outlier_range: (0.6, 1.8),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub initial_scorer: LinearScorer,
    pub train_sets: Vec<ParaphraseSet>,
    pub heldout_sets: Vec<ParaphraseSet>,
    pub labeled: Vec<LabeledExample>,
    pub features: FeatureStore,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    /// Semantic and style weights of the initial scorer, each divided by its
    /// squared norm so that a step along them moves the logit by one unit.
    sem_unit: Vec<f64>,
    style_unit: Vec<f64>,
    sem_w: Vec<f64>,
    bias: f64,
}

impl Generator<'_> {
    /// Semantic center whose initial-scorer logit (style at zero) is `logit`.
    fn center(&mut self, logit: f64) -> Vec<f64> {
        let h = self.cfg.half_dim;
        let mut r: Vec<f64> = (0..h).map(|_| normal(&mut self.rng)).collect();
        let proj = dot(&r, &self.sem_w) / dot(&self.sem_w, &self.sem_w);
        for (ri, wi) in r.iter_mut().zip(&self.sem_w) {
            *ri -= proj * wi;
        }
        for (ri, ui) in r.iter_mut().zip(&self.sem_unit) {
            *ri += (logit - self.bias) * ui;
        }
        r
    }

    fn jitter(&mut self, base: &[f64]) -> Vec<f64> {
        let s = self.cfg.cluster_noise;
        base.iter().map(|v| v + s * normal(&mut self.rng)).collect()
    }

    fn signed_logit(&mut self, k: usize) -> (Label, f64) {
        let (lo, hi) = self.cfg.logit_range;
        let magnitude = self.rng.gen_range(lo..hi);
        if k.is_multiple_of(2) {
            (Label::Safe, magnitude)
        } else {
            (Label::Unsafe, -magnitude)
        }
    }

    fn set_vectors(&mut self, k: usize) -> (Label, Vec<Vec<f64>>) {
        let cfg = self.cfg;
        let (label, logit) = self.signed_logit(k);
        let c = self.center(logit);
        let direction = match cfg.mode {
            OutlierMode::Random => {
                if self.rng.gen_bool(0.5) {
                    1.0
                } else {
                    -1.0
                }
            }
            OutlierMode::Upward => 1.0,
            OutlierMode::AgainstLabel => match label {
                Label::Safe => -1.0,
                Label::Unsafe => 1.0,
            },
        };
        let (olo, ohi) = cfg.outlier_range;
        let outlier_shift = logit.abs() * self.rng.gen_range(olo..ohi);
        let paraphrases = cfg.members - 1;
        let mut rows = Vec::with_capacity(cfg.members);
        for i in 0..cfg.members {
            let sem = self.jitter(&c);
            let mut style = self.jitter(&vec![0.0; cfg.half_dim]);
            let mut shift = 0.0;
            if i > 0 {
                // Deterministic exponential quantiles give every set a skewed
                // style tail of the same shape.
                let u = (i as f64 - 0.5) / paraphrases as f64;
                let spread = 1.0 + 0.1 * normal(&mut self.rng);
                shift += -(1.0 - u).ln() * cfg.tail_scale * spread * logit.abs();
            }
            if i >= cfg.members - cfg.outliers {
                shift += outlier_shift;
            }
            for (s, u) in style.iter_mut().zip(&self.style_unit) {
                *s += direction * shift * u;
            }
            rows.push(sem.into_iter().chain(style).collect());
        }
        (label, rows)
    }

    fn sets(&mut self, prefix: &str, n: usize, store: &mut FeatureStore) -> Result<Vec<ParaphraseSet>> {
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let (label, rows) = self.set_vectors(k);
            let id = format!("{prefix}-{k:04}");
            let mut members = Vec::with_capacity(rows.len());
            for (i, row) in rows.into_iter().enumerate() {
                let m = Member::new(format!("{id}/{i}"));
                store.insert(&m.text, row)?;
                members.push(m);
            }
            let mut it = members.into_iter();
            let original = it.next().expect("at least one member");
            let mut set = ParaphraseSet::new(id, original, it.collect());
            set.gold_label = Some(label);
            out.push(set);
        }
        Ok(out)
    }

    fn labeled(&mut self, n: usize) -> Vec<LabeledExample> {
        (0..n)
            .map(|k| {
                let (label, logit) = self.signed_logit(k);
                let c = self.center(logit);
                let sem = self.jitter(&c);
                let style = self.jitter(&vec![0.0; self.cfg.half_dim]);
                LabeledExample {
                    vector: sem.into_iter().chain(style).collect(),
                    label,
                }
            })
            .collect()
    }
}

/// Fits the initial scorer on noisy labels where style tracks the label.
fn pretrain(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<LinearScorer> {
    let h = cfg.half_dim;
    let data: Vec<LabeledExample> = (0..cfg.pretrain_examples)
        .map(|_| {
            let sem: Vec<f64> = (0..h).map(|_| normal(rng)).collect();
            let truth = sem.iter().sum::<f64>() > 0.0;
            let noisy = truth ^ rng.gen_bool(cfg.label_noise);
            let sign = if noisy { 1.0 } else { -1.0 };
            let style: Vec<f64> = (0..h).map(|_| normal(rng) + sign * cfg.style_correlation).collect();
            LabeledExample {
                vector: sem.into_iter().chain(style).collect(),
                label: if noisy { Label::Safe } else { Label::Unsafe },
            }
        })
        .collect();
    fit_logistic_regression(&data, 0.5, 300)
}

pub fn generate(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    if cfg.members < 2 || cfg.outliers >= cfg.members || cfg.half_dim == 0 {
        return Err(Error::InvalidParameter(
            "need at least two members per set, fewer outliers than members, and a positive dimension".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let initial_scorer = pretrain(cfg, &mut rng)?;
    let h = cfg.half_dim;
    let sem_w = initial_scorer.weights[..h].to_vec();
    let style_w = &initial_scorer.weights[h..];
    let unit = |w: &[f64]| {
        let n2 = dot(w, w);
        w.iter().map(|v| v / n2).collect::<Vec<f64>>()
    };
    let mut g = Generator {
        cfg,
        rng,
        sem_unit: unit(&sem_w),
        style_unit: unit(style_w),
        sem_w,
        bias: initial_scorer.bias,
    };
    let mut features = FeatureStore::new();
    let train_sets = g.sets("train", cfg.train_sets, &mut features)?;
    let heldout_sets = g.sets("heldout", cfg.heldout_sets, &mut features)?;
    let labeled = g.labeled(cfg.labeled);
    Ok(SyntheticCorpus {
        initial_scorer,
        train_sets,
        heldout_sets,
        labeled,
        features,
    })
}

/// Validation examples whose scores are `sigmoid(sharpen * z)` while the gold
/// label is drawn with probability `sigmoid(z)`: calibrated at `sharpen = 1`,
/// overconfident above it.
pub fn validation_stream(n: usize, sharpen: f64, seed: u64) -> Vec<ValidationExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z = 2.0 * normal(&mut rng);
            let gold = if rng.gen::<f64>() < sigmoid(z) { Label::Safe } else { Label::Unsafe };
            ValidationExample {
                score: sigmoid(sharpen * z),
                gold,
            }
        })
        .collect()
}

/// Judged pairs from a noisy judge. The verdict is the sign of a latent
/// margin that grows with gold similarity, and the reported probability is
/// the sigmoid of the margin's magnitude, so confident Yes answers are more
/// often right.
pub fn judged_pairs(n: usize, seed: u64) -> Vec<JudgedPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let gold: f64 = (rng.gen_range(0.0..=1.0f64) * 100.0).round() / 100.0;
            let margin = 10.0 * (gold - 0.75) + 1.5 * normal(&mut rng);
            JudgedPair {
                a: format!("pair-{i:04}/a"),
                b: format!("pair-{i:04}/b"),
                verdict: if margin > 0.0 { Verdict::Yes } else { Verdict::No },
                prob: sigmoid(margin.abs()),
                gold_similarity: Some(gold),
            }
        })
        .collect()
}
