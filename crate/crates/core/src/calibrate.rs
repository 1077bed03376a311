//! Temperature scaling of safety probabilities.
//!
//! A temperature divides the log-odds: `p_t = sigmoid(logit(p) / t)`. Because
//! the sign of the log-odds never changes, no score crosses the decision
//! threshold, while scores can still move between confidence bins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{ece, safety_predictions};
use crate::model::{label_of, logit, sigmoid, Label, DEFAULT_EPS};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub const IDENTITY: Temperature = Temperature(1.0);

    pub fn new(t: f64) -> Result<Self> {
        if t.is_finite() && t > 0.0 {
            Ok(Temperature(t))
        } else {
            Err(Error::InvalidParameter(format!(
                "temperature must be positive and finite, got {t}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Temperature {
    type Error = Error;

    fn try_from(t: f64) -> Result<Self> {
        Temperature::new(t)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

pub fn apply_temperature(p: f64, t: Temperature) -> f64 {
    apply_temperature_eps(p, t, DEFAULT_EPS)
}

pub fn apply_temperature_eps(p: f64, t: Temperature, eps: f64) -> f64 {
    sigmoid(logit(p, eps) / t.0)
}

/// Counts scores whose label changes under `t`. Always zero; exposed so that
/// the property can be checked on real data.
pub fn verify_label_invariance(scores: &[f64], t: Temperature) -> usize {
    scores
        .iter()
        .filter(|&&p| label_of(p) != label_of(apply_temperature(p, t)))
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationExample {
    pub score: f64,
    pub gold: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub eps: f64,
    pub ece_bins: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            t_min: 0.05,
            t_max: 5.0,
            eps: DEFAULT_EPS,
            ece_bins: 10,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min > 0.0 && self.t_min < self.t_max && self.t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "temperature bounds must satisfy 0 < t_min < t_max, got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        if self.ece_bins == 0 {
            return Err(Error::InvalidParameter("ece_bins must be at least 1".into()));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::InvalidParameter(format!("eps must lie in (0, 0.5), got {}", self.eps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub temperature: Temperature,
    pub ece_before: f64,
    pub ece_after: f64,
    pub bce_before: f64,
    pub bce_after: f64,
    pub n_validation: usize,
}

/// Mean binary cross-entropy of the tempered scores, probabilities clamped
/// to `[eps, 1 - eps]`.
pub fn mean_bce(val: &[ValidationExample], t: f64, eps: f64) -> f64 {
    let total: f64 = val
        .iter()
        .map(|ex| {
            let q = sigmoid(logit(ex.score, eps) / t).clamp(eps, 1.0 - eps);
            match ex.gold {
                Label::Safe => -q.ln(),
                Label::Unsafe => -(1.0 - q).ln(),
            }
        })
        .sum();
    total / val.len() as f64
}

fn check_validation(val: &[ValidationExample]) -> Result<()> {
    if val.is_empty() {
        return Err(Error::EmptyInput("fit_temperature"));
    }
    if let Some(ex) = val.iter().find(|ex| !(0.0..=1.0).contains(&ex.score)) {
        return Err(Error::InvalidScore(ex.score));
    }
    let safe = val.iter().filter(|ex| ex.gold == Label::Safe).count();
    if safe == 0 || safe == val.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Minimizes mean BCE over `[t_min, t_max]` by golden-section search on
/// `ln t`. The objective is unimodal in `t` (it is convex in `1/t`), so the
/// search converges to the bounded minimizer; the bounds themselves are
/// compared at the end so a capped fit lands exactly on the bound.
pub fn fit_temperature(val: &[ValidationExample], config: &CalibrationConfig) -> Result<CalibrationResult> {
    config.validate()?;
    check_validation(val)?;
    let eps = config.eps;
    let f = |u: f64| mean_bce(val, u.exp(), eps);

    let (mut a, mut b) = (config.t_min.ln(), config.t_max.ln());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-10 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let mut best = (mid.exp().clamp(config.t_min, config.t_max), f(mid));
    for bound in [config.t_min, config.t_max] {
        let v = mean_bce(val, bound, eps);
        if v <= best.1 {
            best = (bound, v);
        }
    }
    let t = Temperature::new(best.0)?;

    let scores: Vec<f64> = val.iter().map(|ex| ex.score).collect();
    let gold: Vec<Label> = val.iter().map(|ex| ex.gold).collect();
    let tempered: Vec<f64> = scores.iter().map(|&p| apply_temperature_eps(p, t, eps)).collect();
    Ok(CalibrationResult {
        temperature: t,
        ece_before: ece(&safety_predictions(&scores, &gold)?, config.ece_bins)?,
        ece_after: ece(&safety_predictions(&tempered, &gold)?, config.ece_bins)?,
        bce_before: mean_bce(val, 1.0, eps),
        bce_after: best.1,
        n_validation: val.len(),
    })
}
