//! Two-stage acceptance of judged paraphrase pairs and the threshold sweeps
//! used to evaluate the judge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{classification_metrics, ClassificationMetrics, ConfusionCounts};

/// System prompt sent to the semantic-equivalence judge.
pub const JUDGE_PROMPT: &str = "You are a semantic judge. For each sentence pair, decide if they express the same meaning, regardless of style. Be wary of negations in the sentences. Respond with 'No' if sentences are different, otherwise 'Yes' only. Be strict.";

/// Instruction used when generating paraphrases.
pub const PARAPHRASE_PROMPT: &str =
    "Rephrase the following sentence while preserving its original meaning and tone";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
}

impl std::str::FromStr for Verdict {
    type Err = Error;

    /// Accepts the judge's raw reply; only a leading "yes" or "no" counts.
    fn from_str(s: &str) -> Result<Self> {
        let word: String = s
            .trim()
            .chars()
            .take_while(|c| c.is_alphabetic())
            .collect::<String>()
            .to_ascii_lowercase();
        match word.as_str() {
            "yes" => Ok(Verdict::Yes),
            "no" => Ok(Verdict::No),
            _ => Err(Error::InvalidParameter(format!("unrecognized verdict {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgedPair {
    pub a: String,
    pub b: String,
    pub verdict: Verdict,
    #[serde(deserialize_with = "unit_interval")]
    pub prob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_similarity: Option<f64>,
}

fn unit_interval<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let v = f64::deserialize(d)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(serde::de::Error::custom(format!("probability {v} is outside [0, 1]")))
    }
}

impl JudgedPair {
    pub fn accepted(&self, prob_threshold: f64) -> bool {
        self.verdict == Verdict::Yes && self.prob >= prob_threshold
    }
}

/// Keeps pairs judged equivalent with probability at least `prob_threshold`,
/// in input order. "No" verdicts are dropped whatever their probability.
pub fn two_stage_filter(pairs: &[JudgedPair], prob_threshold: f64) -> Result<Vec<&JudgedPair>> {
    check_threshold(prob_threshold)?;
    Ok(pairs.iter().filter(|p| p.accepted(prob_threshold)).collect())
}

fn check_threshold(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("threshold {t} is outside [0, 1]")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub metrics: ClassificationMetrics,
}

fn golds(pairs: &[JudgedPair]) -> Result<Vec<f64>> {
    pairs
        .iter()
        .enumerate()
        .map(|(index, p)| p.gold_similarity.ok_or(Error::MissingGold { index }))
        .collect()
}

fn row(threshold: f64, pairs: impl IntoIterator<Item = (bool, bool)>) -> SweepRow {
    let counts = ConfusionCounts::from_pairs(pairs);
    SweepRow {
        threshold,
        counts,
        metrics: classification_metrics(&counts),
    }
}

/// One row per similarity threshold `s`: gold positive when
/// `gold_similarity >= s`, predicted positive when the verdict is Yes.
pub fn sweep_similarity_thresholds(pairs: &[JudgedPair], thresholds: &[f64]) -> Result<Vec<SweepRow>> {
    let gold = golds(pairs)?;
    thresholds
        .iter()
        .map(|&s| {
            check_threshold(s)?;
            Ok(row(
                s,
                pairs.iter().zip(&gold).map(|(p, &g)| (p.verdict == Verdict::Yes, g >= s)),
            ))
        })
        .collect()
}

/// Gold fixed at `sim_threshold`; predicted positive when the pair passes the
/// two-stage filter at each probability threshold.
pub fn sweep_probability_thresholds(
    pairs: &[JudgedPair],
    sim_threshold: f64,
    prob_thresholds: &[f64],
) -> Result<Vec<SweepRow>> {
    check_threshold(sim_threshold)?;
    let gold = golds(pairs)?;
    prob_thresholds
        .iter()
        .map(|&t| {
            check_threshold(t)?;
            Ok(row(
                t,
                pairs.iter().zip(&gold).map(|(p, &g)| (p.accepted(t), g >= sim_threshold)),
            ))
        })
        .collect()
}
