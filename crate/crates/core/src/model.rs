//! Domain types shared by every stage: safety scores, labels, confidence
//! bins, log-odds helpers and the paraphrase-set record.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decision threshold separating safe from unsafe scores.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Default clamp applied before taking log-odds.
pub const DEFAULT_EPS: f64 = 1e-6;

/// Upper edge of the confidently-unsafe bin (inclusive).
pub const UNSAFE_BIN_UPPER: f64 = 0.25;

/// Lower edge of the confidently-safe bin (inclusive).
pub const SAFE_BIN_LOWER: f64 = 0.75;

/// Probability that a response is safe, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SafetyScore(f64);

impl SafetyScore {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(SafetyScore(value))
        } else {
            Err(Error::InvalidScore(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn label(self) -> Label {
        label_of(self.0)
    }

    pub fn bin(self) -> ConfidenceBin {
        bin_of(self.0)
    }
}

impl TryFrom<f64> for SafetyScore {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        SafetyScore::new(value)
    }
}

impl From<SafetyScore> for f64 {
    fn from(score: SafetyScore) -> f64 {
        score.0
    }
}

impl fmt::Display for SafetyScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Safe,
    Unsafe,
}

impl Label {
    /// `1.0` for safe, `0.0` for unsafe: the target of a safety probability.
    pub fn as_target(self) -> f64 {
        match self {
            Label::Safe => 1.0,
            Label::Unsafe => 0.0,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Safe => "safe",
            Label::Unsafe => "unsafe",
        })
    }
}

/// Safe iff `p >= 0.5`; a score of exactly one half counts as safe.
pub fn label_of(p: f64) -> Label {
    if p >= DECISION_THRESHOLD {
        Label::Safe
    } else {
        Label::Unsafe
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceBin {
    /// `[0, 0.25]`
    ConfidentlyUnsafe,
    /// `(0.25, 0.75)`
    Ambiguous,
    /// `[0.75, 1]`
    ConfidentlySafe,
}

impl ConfidenceBin {
    pub const ALL: [ConfidenceBin; 3] = [
        ConfidenceBin::ConfidentlyUnsafe,
        ConfidenceBin::Ambiguous,
        ConfidenceBin::ConfidentlySafe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConfidenceBin::ConfidentlyUnsafe => "confidently_unsafe",
            ConfidenceBin::Ambiguous => "ambiguous",
            ConfidenceBin::ConfidentlySafe => "confidently_safe",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Both edges are closed on the outer bins: 0.25 is confidently unsafe and
/// 0.75 is confidently safe.
pub fn bin_of(p: f64) -> ConfidenceBin {
    if p <= UNSAFE_BIN_UPPER {
        ConfidenceBin::ConfidentlyUnsafe
    } else if p >= SAFE_BIN_LOWER {
        ConfidenceBin::ConfidentlySafe
    } else {
        ConfidenceBin::Ambiguous
    }
}

/// Log-odds of `p` after clamping it into `[eps, 1 - eps]`.
pub fn logit(p: f64, eps: f64) -> f64 {
    let p = p.clamp(eps, 1.0 - eps);
    (p / (1.0 - p)).ln()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One response inside a paraphrase set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<SafetyScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<String>,
    /// Annotation left by the scoring client when this member could not be scored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Member {
    pub fn new(text: impl Into<String>) -> Self {
        Member {
            text: text.into(),
            score: None,
            style: None,
            error: None,
        }
    }

    pub fn scored(text: impl Into<String>, score: f64) -> Result<Self> {
        let mut member = Member::new(text);
        member.score = Some(SafetyScore::new(score)?);
        Ok(member)
    }

    pub fn with_style(mut self, style: impl Into<String>) -> Self {
        self.style = Some(style.into());
        self
    }
}

/// An original response plus meaning-preserving rewrites of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseSet {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub original: Member,
    pub paraphrases: Vec<Member>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<Label>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreState {
    Unscored,
    Partial,
    Scored,
}

/// Scores of a fully scored set, original first.
#[derive(Debug, Clone, PartialEq)]
pub struct SetScores {
    pub original: f64,
    pub paraphrases: Vec<f64>,
}

impl SetScores {
    /// Original followed by every paraphrase.
    pub fn all(&self) -> Vec<f64> {
        let mut all = Vec::with_capacity(self.paraphrases.len() + 1);
        all.push(self.original);
        all.extend_from_slice(&self.paraphrases);
        all
    }
}

impl ParaphraseSet {
    pub fn new(id: impl Into<String>, original: Member, paraphrases: Vec<Member>) -> Self {
        ParaphraseSet {
            id: id.into(),
            prompt: None,
            original,
            paraphrases,
            gold_label: None,
        }
    }

    /// Convenience constructor for tests and synthetic data.
    pub fn from_scores(id: impl Into<String>, original: f64, paraphrases: &[f64]) -> Result<Self> {
        let id = id.into();
        let original = Member::scored(format!("{id}/0"), original)?;
        let paraphrases = paraphrases
            .iter()
            .enumerate()
            .map(|(i, &p)| Member::scored(format!("{id}/{}", i + 1), p))
            .collect::<Result<Vec<_>>>()?;
        Ok(ParaphraseSet::new(id, original, paraphrases))
    }

    /// Original first, then paraphrases in file order.
    pub fn members(&self) -> impl Iterator<Item = &Member> {
        std::iter::once(&self.original).chain(self.paraphrases.iter())
    }

    pub fn members_mut(&mut self) -> impl Iterator<Item = &mut Member> {
        std::iter::once(&mut self.original).chain(self.paraphrases.iter_mut())
    }

    pub fn len(&self) -> usize {
        self.paraphrases.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn score_state(&self) -> ScoreState {
        let scored = self.members().filter(|m| m.score.is_some()).count();
        if scored == 0 {
            ScoreState::Unscored
        } else if scored == self.len() {
            ScoreState::Scored
        } else {
            ScoreState::Partial
        }
    }

    /// Scores of every member; fails unless the set is fully scored and has
    /// at least one paraphrase.
    pub fn scores(&self) -> Result<SetScores> {
        if self.paraphrases.is_empty() {
            return Err(Error::NoParaphrases { id: self.id.clone() });
        }
        match self.score_state() {
            ScoreState::Unscored => Err(Error::Unscored { id: self.id.clone() }),
            ScoreState::Partial => Err(Error::PartialScores { id: self.id.clone() }),
            ScoreState::Scored => Ok(SetScores {
                original: self.original.score.map(f64::from).unwrap_or_default(),
                paraphrases: self
                    .paraphrases
                    .iter()
                    .map(|m| m.score.map(f64::from).unwrap_or_default())
                    .collect(),
            }),
        }
    }
}
