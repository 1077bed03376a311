//! Set-level consistency targets.
//!
//! Three strategies turn the scores of one paraphrase set into a single
//! target: the arithmetic mean, the median, and a skew-aware percentile that
//! leans conservative. The skew-aware rule measures quartile (Bowley) skewness
//! of the log-odds and picks a percentile of the scores accordingly:
//!
//! | detected skew | percentile |
//! |---------------|------------|
//! | right (`B > threshold`)  | 25th |
//! | left (`B < -threshold`)  | 75th |
//! | otherwise                | 40th |
//!
//! Quantiles use linear interpolation between order statistics
//! (`h = q * (n - 1)`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{logit, sigmoid, DEFAULT_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    #[serde(rename = "mean")]
    Mean,
    #[serde(rename = "median")]
    Median,
    #[serde(rename = "skew")]
    SkewAware,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Mean => "mean",
            StrategyKind::Median => "median",
            StrategyKind::SkewAware => "skew",
        }
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(StrategyKind::Mean),
            "median" => Ok(StrategyKind::Median),
            "skew" | "skew-aware" | "skew_aware" => Ok(StrategyKind::SkewAware),
            other => Err(Error::InvalidParameter(format!(
                "unknown strategy {other:?} (expected mean, median or skew)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub right_skew: f64,
    pub symmetric: f64,
    pub left_skew: f64,
}

impl Default for Percentiles {
    fn default() -> Self {
        Percentiles {
            right_skew: 0.25,
            symmetric: 0.40,
            left_skew: 0.75,
        }
    }
}

/// Scale on which the chosen percentile is interpolated. Skew detection always
/// runs on log-odds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantileScale {
    #[default]
    Probability,
    Logit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationStrategy {
    pub kind: StrategyKind,
    pub skew_threshold: f64,
    pub percentiles: Percentiles,
    pub scale: QuantileScale,
    pub eps: f64,
}

impl Default for AggregationStrategy {
    fn default() -> Self {
        AggregationStrategy::skew_aware()
    }
}

impl AggregationStrategy {
    pub fn new(kind: StrategyKind) -> Self {
        AggregationStrategy {
            kind,
            skew_threshold: 0.1,
            percentiles: Percentiles::default(),
            scale: QuantileScale::Probability,
            eps: DEFAULT_EPS,
        }
    }

    pub fn mean() -> Self {
        Self::new(StrategyKind::Mean)
    }

    pub fn median() -> Self {
        Self::new(StrategyKind::Median)
    }

    pub fn skew_aware() -> Self {
        Self::new(StrategyKind::SkewAware)
    }

    pub fn with_skew_threshold(mut self, threshold: f64) -> Self {
        self.skew_threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let Percentiles {
            right_skew,
            symmetric,
            left_skew,
        } = self.percentiles;
        if !(0.0 <= right_skew && right_skew <= symmetric && symmetric <= left_skew && left_skew <= 1.0)
        {
            return Err(Error::InvalidParameter(format!(
                "percentiles must satisfy 0 <= right ({right_skew}) <= symmetric ({symmetric}) <= left ({left_skew}) <= 1"
            )));
        }
        if self.skew_threshold.is_nan() || self.skew_threshold <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "skew threshold must be positive, got {}",
                self.skew_threshold
            )));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "logit clamp eps must lie in (0, 0.5), got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Skew {
    Right,
    Left,
    Symmetric,
}

pub fn classify_skew(bowley: f64, threshold: f64) -> Skew {
    if bowley > threshold {
        Skew::Right
    } else if bowley < -threshold {
        Skew::Left
    } else {
        Skew::Symmetric
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationTarget {
    pub target: f64,
    pub strategy: StrategyKind,
    pub skewness: Option<f64>,
    pub skew: Option<Skew>,
    pub chosen_percentile: Option<f64>,
}

/// Linear-interpolation quantile of an already sorted, non-empty slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let (a, b) = (sorted[lo], sorted[hi.min(sorted.len() - 1)]);
    if lo == hi {
        a
    } else {
        a + (h - lo as f64) * (b - a)
    }
}

pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("quantile"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!(
            "quantile level must lie in [0, 1], got {q}"
        )));
    }
    Ok(quantile_sorted(&sorted(values), q))
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Quartile skewness `(Q3 + Q1 - 2 Q2) / (Q3 - Q1)`, zero when the
/// interquartile range vanishes.
pub fn bowley_skewness(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("bowley_skewness"));
    }
    Ok(bowley_sorted(&sorted(values)))
}

fn bowley_sorted(sorted: &[f64]) -> f64 {
    let q1 = quantile_sorted(sorted, 0.25);
    let q2 = quantile_sorted(sorted, 0.5);
    let q3 = quantile_sorted(sorted, 0.75);
    let iqr = q3 - q1;
    if iqr <= 0.0 {
        return 0.0;
    }
    ((q3 + q1 - 2.0 * q2) / iqr).clamp(-1.0, 1.0)
}

pub fn aggregate_target(scores: &[f64], strategy: &AggregationStrategy) -> Result<AggregationTarget> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("aggregate_target"));
    }
    if let Some(&bad) = scores.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidScore(bad));
    }
    let ps = sorted(scores);

    match strategy.kind {
        StrategyKind::Mean => {
            // Summing in sorted order keeps the result independent of input order.
            let mean = ps.iter().sum::<f64>() / ps.len() as f64;
            Ok(AggregationTarget {
                target: mean.clamp(ps[0], ps[ps.len() - 1]),
                strategy: StrategyKind::Mean,
                skewness: None,
                skew: None,
                chosen_percentile: None,
            })
        }
        StrategyKind::Median => Ok(AggregationTarget {
            target: quantile_sorted(&ps, 0.5),
            strategy: StrategyKind::Median,
            skewness: None,
            skew: None,
            chosen_percentile: Some(0.5),
        }),
        StrategyKind::SkewAware => {
            let zs: Vec<f64> = ps.iter().map(|&p| logit(p, strategy.eps)).collect();
            let b = if zs.len() < 3 { 0.0 } else { bowley_sorted(&zs) };
            let skew = classify_skew(b, strategy.skew_threshold);
            let q = match skew {
                Skew::Right => strategy.percentiles.right_skew,
                Skew::Left => strategy.percentiles.left_skew,
                Skew::Symmetric => strategy.percentiles.symmetric,
            };
            let target = match strategy.scale {
                QuantileScale::Probability => quantile_sorted(&ps, q),
                QuantileScale::Logit => {
                    sigmoid(quantile_sorted(&zs, q)).clamp(ps[0], ps[ps.len() - 1])
                }
            };
            Ok(AggregationTarget {
                target,
                strategy: StrategyKind::SkewAware,
                skewness: Some(b),
                skew: Some(skew),
                chosen_percentile: Some(q),
            })
        }
    }
}
