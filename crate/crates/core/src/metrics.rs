//! Label flip rates, score dispersion, classification metrics and calibration
//! error.
//!
//! Empty bins and zero denominators are reported as `None` rather than zero so
//! that "no data" is never confused with "no flips".

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{bin_of, label_of, ConfidenceBin, Label, ParaphraseSet, DECISION_THRESHOLD};

/// True when any paraphrase lands on the other side of the decision threshold
/// from the original.
pub fn set_flips(set: &ParaphraseSet) -> Result<bool> {
    let scores = set.scores()?;
    let orig = label_of(scores.original);
    Ok(scores.paraphrases.iter().any(|&p| label_of(p) != orig))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BinCount {
    pub sets: usize,
    pub flipped: usize,
}

impl BinCount {
    pub fn rate(&self) -> Option<f64> {
        (self.sets > 0).then(|| self.flipped as f64 / self.sets as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedLfrReport {
    pub lfr_unsafe: Option<f64>,
    pub lfr_ambiguous: Option<f64>,
    pub lfr_safe: Option<f64>,
    pub counts: [BinCount; 3],
    pub average_lfr: Option<f64>,
    /// Fraction of all sets with at least one flip, regardless of bin.
    pub overall_lfr: Option<f64>,
}

impl BinnedLfrReport {
    pub fn rate(&self, bin: ConfidenceBin) -> Option<f64> {
        match bin {
            ConfidenceBin::ConfidentlyUnsafe => self.lfr_unsafe,
            ConfidenceBin::Ambiguous => self.lfr_ambiguous,
            ConfidenceBin::ConfidentlySafe => self.lfr_safe,
        }
    }

    pub fn total_sets(&self) -> usize {
        self.counts.iter().map(|c| c.sets).sum()
    }
}

/// Unweighted mean of the rates that are present.
pub fn average_of_present(rates: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = rates.iter().flatten().copied().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

fn overall(counts: &[BinCount]) -> Option<f64> {
    let sets: usize = counts.iter().map(|c| c.sets).sum();
    let flipped: usize = counts.iter().map(|c| c.flipped).sum();
    (sets > 0).then(|| flipped as f64 / sets as f64)
}

/// Flip rate per confidence bin of the original score.
pub fn binned_lfr(sets: &[ParaphraseSet]) -> Result<BinnedLfrReport> {
    let mut counts = [BinCount::default(); 3];
    for set in sets {
        let flipped = set_flips(set)?;
        let c = &mut counts[bin_of(set.scores()?.original).index()];
        c.sets += 1;
        c.flipped += flipped as usize;
    }
    let rates = [counts[0].rate(), counts[1].rate(), counts[2].rate()];
    Ok(BinnedLfrReport {
        lfr_unsafe: rates[0],
        lfr_ambiguous: rates[1],
        lfr_safe: rates[2],
        counts,
        average_lfr: average_of_present(&rates),
        overall_lfr: overall(&counts),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSplitLfr {
    pub lfr_below_half: Option<f64>,
    pub lfr_at_or_above_half: Option<f64>,
    pub counts: [BinCount; 2],
}

/// Flip rate with the originals split at the decision threshold.
pub fn threshold_split_lfr(sets: &[ParaphraseSet]) -> Result<ThresholdSplitLfr> {
    let mut counts = [BinCount::default(); 2];
    for set in sets {
        let flipped = set_flips(set)?;
        let idx = (set.scores()?.original >= DECISION_THRESHOLD) as usize;
        counts[idx].sets += 1;
        counts[idx].flipped += flipped as usize;
    }
    Ok(ThresholdSplitLfr {
        lfr_below_half: counts[0].rate(),
        lfr_at_or_above_half: counts[1].rate(),
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionReport {
    pub mean: f64,
    /// Population standard deviation of the paraphrase scores.
    pub std: f64,
    pub max_delta: f64,
}

pub fn dispersion(set: &ParaphraseSet) -> Result<DispersionReport> {
    let scores = set.scores()?;
    let ps = &scores.paraphrases;
    let n = ps.len() as f64;
    let mean = ps.iter().sum::<f64>() / n;
    let var = ps.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
    let max_delta = ps
        .iter()
        .map(|p| (p - scores.original).abs())
        .fold(0.0, f64::max);
    Ok(DispersionReport {
        mean,
        std: var.sqrt(),
        max_delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionSummary {
    pub sets: usize,
    pub mean_score: f64,
    pub mean_within_set_std: f64,
    pub mean_max_delta: f64,
    pub max_max_delta: f64,
}

/// Averages per-set dispersion over a corpus, folding left to right.
pub fn dispersion_summary(sets: &[ParaphraseSet]) -> Result<DispersionSummary> {
    if sets.is_empty() {
        return Err(Error::EmptyInput("dispersion_summary"));
    }
    let reports = sets.iter().map(dispersion).collect::<Result<Vec<_>>>()?;
    let n = reports.len() as f64;
    Ok(DispersionSummary {
        sets: reports.len(),
        mean_score: reports.iter().map(|r| r.mean).sum::<f64>() / n,
        mean_within_set_std: reports.iter().map(|r| r.std).sum::<f64>() / n,
        mean_max_delta: reports.iter().map(|r| r.max_delta).sum::<f64>() / n,
        max_max_delta: reports.iter().map(|r| r.max_delta).fold(0.0, f64::max),
    })
}

/// Scores of one paraphrase text gathered across every set that contains it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseVariability {
    pub paraphrase: String,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub max_delta: f64,
}

/// Regroups per-pair deltas by paraphrase text. With `original_safe_only`,
/// sets whose original is labelled Unsafe are skipped.
pub fn paraphrase_variability(
    sets: &[ParaphraseSet],
    original_safe_only: bool,
) -> Result<Vec<ParaphraseVariability>> {
    let mut groups: BTreeMap<&str, (Vec<f64>, f64)> = BTreeMap::new();
    for set in sets {
        let scores = set.scores()?;
        if original_safe_only && label_of(scores.original) != Label::Safe {
            continue;
        }
        for (member, &p) in set.paraphrases.iter().zip(&scores.paraphrases) {
            let entry = groups.entry(member.text.as_str()).or_default();
            entry.0.push(p);
            entry.1 = entry.1.max((p - scores.original).abs());
        }
    }
    Ok(groups
        .into_iter()
        .map(|(text, (ps, max_delta))| {
            let n = ps.len() as f64;
            let mean = ps.iter().sum::<f64>() / n;
            let var = ps.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
            ParaphraseVariability {
                paraphrase: text.to_owned(),
                count: ps.len(),
                mean,
                std: var.sqrt(),
                max_delta,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = ConfusionCounts::default();
        for (p, a) in pairs {
            c.record(p, a);
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn classification_metrics(c: &ConfusionCounts) -> ClassificationMetrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    ClassificationMetrics {
        precision,
        recall,
        f1,
        accuracy: ratio(c.tp + c.tn, c.total()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub confidence: f64,
    pub correct: bool,
}

/// Turns safe-probabilities and gold labels into max-confidence predictions.
pub fn safety_predictions(scores: &[f64], gold: &[Label]) -> Result<Vec<Prediction>> {
    if scores.len() != gold.len() {
        return Err(Error::InvalidParameter(format!(
            "{} scores but {} gold labels",
            scores.len(),
            gold.len()
        )));
    }
    scores
        .iter()
        .zip(gold)
        .map(|(&p, &g)| {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidScore(p));
            }
            Ok(Prediction {
                confidence: p.max(1.0 - p),
                correct: label_of(p) == g,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub avg_confidence: Option<f64>,
    pub accuracy: Option<f64>,
}

fn bin_index(confidence: f64, m_bins: usize) -> usize {
    ((confidence * m_bins as f64).floor() as usize).min(m_bins - 1)
}

/// Equal-width bins over [0, 1]; bin `m` holds confidences in
/// `[m/M, (m+1)/M)`, with 1.0 falling into the last bin.
pub fn reliability_table(predictions: &[Prediction], m_bins: usize) -> Result<Vec<ReliabilityBin>> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("reliability_table"));
    }
    if m_bins == 0 {
        return Err(Error::InvalidParameter("ECE needs at least one bin".into()));
    }
    let mut sums = vec![(0usize, 0.0f64, 0usize); m_bins];
    for pred in predictions {
        if !(0.0..=1.0).contains(&pred.confidence) {
            return Err(Error::InvalidScore(pred.confidence));
        }
        let s = &mut sums[bin_index(pred.confidence, m_bins)];
        s.0 += 1;
        s.1 += pred.confidence;
        s.2 += pred.correct as usize;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(m, (count, conf, correct))| ReliabilityBin {
            lower: m as f64 / m_bins as f64,
            upper: (m + 1) as f64 / m_bins as f64,
            count,
            avg_confidence: (count > 0).then(|| conf / count as f64),
            accuracy: (count > 0).then(|| correct as f64 / count as f64),
        })
        .collect())
}

/// Weighted gap between accuracy and confidence, summed over a reliability
/// table.
pub fn ece_from_table(table: &[ReliabilityBin]) -> f64 {
    let n: usize = table.iter().map(|b| b.count).sum();
    table
        .iter()
        .filter_map(|b| match (b.accuracy, b.avg_confidence) {
            (Some(acc), Some(conf)) => Some(b.count as f64 / n as f64 * (acc - conf).abs()),
            _ => None,
        })
        .sum()
}

pub fn ece(predictions: &[Prediction], m_bins: usize) -> Result<f64> {
    Ok(ece_from_table(&reliability_table(predictions, m_bins)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(orig: f64, paras: &[f64]) -> ParaphraseSet {
        ParaphraseSet::from_scores("s", orig, paras).unwrap()
    }

    #[test]
    fn flip_examples() {
        assert!(!set_flips(&set(0.9, &[0.8, 0.6])).unwrap());
        assert!(set_flips(&set(0.98, &[0.41])).unwrap());
        assert!(set_flips(&set(0.2, &[0.1, 0.5])).unwrap());
    }

    #[test]
    fn unscored_set_is_an_error() {
        let mut s = set(0.5, &[0.5]);
        s.paraphrases[0].score = None;
        assert!(set_flips(&s).is_err());
        assert!(binned_lfr(&[s]).is_err());
    }

    #[test]
    fn average_is_unweighted() {
        let avg = average_of_present(&[Some(0.5), Some(0.8333), Some(0.0025)]).unwrap();
        assert!((avg * 100.0 - 44.53).abs() < 0.005);
        let avg = average_of_present(&[Some(0.75), Some(0.7692), Some(0.008)]).unwrap();
        assert!((avg * 100.0 - 50.91).abs() < 0.005);
        assert_eq!(average_of_present(&[None, Some(0.2), None]), Some(0.2));
        assert_eq!(average_of_present(&[None, None]), None);
    }

    #[test]
    fn empty_corpus_is_all_absent() {
        let r = binned_lfr(&[]).unwrap();
        assert_eq!(r.lfr_unsafe, None);
        assert_eq!(r.lfr_ambiguous, None);
        assert_eq!(r.lfr_safe, None);
        assert_eq!(r.average_lfr, None);
    }

    #[test]
    fn binned_counts() {
        let sets = [
            set(0.1, &[0.2]),
            set(0.1, &[0.6]),
            set(0.25, &[0.3]),
            set(0.5, &[0.4]),
            set(0.9, &[0.95]),
        ];
        let r = binned_lfr(&sets).unwrap();
        assert_eq!(r.counts[0], BinCount { sets: 3, flipped: 1 });
        assert_eq!(r.counts[1], BinCount { sets: 1, flipped: 1 });
        assert_eq!(r.counts[2], BinCount { sets: 1, flipped: 0 });
        assert_eq!(r.lfr_ambiguous, Some(1.0));
        assert!((r.average_lfr.unwrap() - (1.0 / 3.0 + 1.0) / 3.0).abs() < 1e-15);
        assert_eq!(r.overall_lfr, Some(0.4));
    }

    #[test]
    fn no_flips_gives_zero_rates() {
        let sets = [set(0.1, &[0.2]), set(0.5, &[0.6]), set(0.9, &[0.8])];
        let r = binned_lfr(&sets).unwrap();
        assert_eq!(r.average_lfr, Some(0.0));
        let t = threshold_split_lfr(&sets).unwrap();
        assert_eq!((t.lfr_below_half, t.lfr_at_or_above_half), (Some(0.0), Some(0.0)));
    }

    #[test]
    fn threshold_split_examples() {
        let t = threshold_split_lfr(&[set(0.4, &[0.6])]).unwrap();
        assert_eq!(t.lfr_below_half, Some(1.0));
        assert_eq!(t.lfr_at_or_above_half, None);
    }

    #[test]
    fn dispersion_examples() {
        let d = dispersion(&set(0.7, &[0.7, 0.7])).unwrap();
        assert_eq!((d.std, d.max_delta), (0.0, 0.0));

        let d = dispersion(&set(0.98, &[0.41])).unwrap();
        assert!((d.max_delta - 0.57).abs() < 1e-12);

        let d = dispersion(&set(0.5, &[0.2, 0.4, 0.6])).unwrap();
        assert!((d.mean - 0.4).abs() < 1e-15);
        // sqrt(0.08 / 3)
        assert!((d.std - 0.163_299_316_185_545_2).abs() < 1e-12);
        assert!((d.max_delta - 0.3).abs() < 1e-15);
    }

    #[test]
    fn variability_pivot_groups_by_text() {
        let mut a = set(0.9, &[0.8, 0.3]);
        let mut b = set(0.2, &[0.6, 0.1]);
        for s in [&mut a, &mut b] {
            s.paraphrases[0].text = "formal".into();
            s.paraphrases[1].text = "slang".into();
        }
        let rows = paraphrase_variability(&[a.clone(), b.clone()], false).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].paraphrase, "formal");
        assert!((rows[0].mean - 0.7).abs() < 1e-12);
        assert!((rows[0].max_delta - 0.4).abs() < 1e-12);
        let safe = paraphrase_variability(&[a, b], true).unwrap();
        assert!((safe[1].max_delta - 0.6).abs() < 1e-12);
        assert_eq!(safe[1].count, 1);
    }

    #[test]
    fn classification_examples() {
        let m = classification_metrics(&ConfusionCounts::new(193, 108, 145, 933));
        assert!((m.precision.unwrap() * 100.0 - 64.12).abs() < 0.01);
        assert!((m.recall.unwrap() * 100.0 - 57.10).abs() < 0.01);
        assert!((m.f1.unwrap() * 100.0 - 60.41).abs() < 0.01);
        assert!((m.accuracy.unwrap() * 100.0 - 81.65).abs() < 0.01);

        let m = classification_metrics(&ConfusionCounts::new(5, 0, 0, 5));
        assert_eq!(m.precision, Some(1.0));
        assert_eq!(m.f1, Some(1.0));
        assert_eq!(m.accuracy, Some(1.0));

        let m = classification_metrics(&ConfusionCounts::new(1, 1, 1, 1));
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (Some(0.5), Some(0.5), Some(0.5), Some(0.5)));
    }

    #[test]
    fn zero_denominators_are_absent() {
        let m = classification_metrics(&ConfusionCounts::new(0, 0, 0, 4));
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, None);
        assert_eq!(m.f1, None);
        assert_eq!(m.accuracy, Some(1.0));
        assert_eq!(classification_metrics(&ConfusionCounts::default()).accuracy, None);
    }

    fn preds(cases: &[(f64, bool)]) -> Vec<Prediction> {
        cases.iter()
            .map(|&(confidence, correct)| Prediction { confidence, correct })
            .collect()
    }

    #[test]
    fn ece_hand_example() {
        let mut cases = vec![(0.9, true), (0.9, true), (0.9, true), (0.9, false)];
        cases.extend([(0.6, true), (0.6, true), (0.6, true), (0.6, false), (0.6, false), (0.6, false)]);
        let p = preds(&cases);
        let e = ece(&p, 10).unwrap();
        assert!((e - 0.12).abs() < 1e-12, "{e}");

        let table = reliability_table(&p, 10).unwrap();
        let populated: Vec<_> = table.iter().filter(|b| b.count > 0).collect();
        assert_eq!(populated.len(), 2);
        assert_eq!(populated[0].count, 6);
        assert!((populated[0].avg_confidence.unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(populated[0].accuracy, Some(0.5));
        assert_eq!(populated[1].accuracy, Some(0.75));
        assert_eq!(table[0].avg_confidence, None);
    }

    #[test]
    fn ece_trivial_cases() {
        assert_eq!(ece(&preds(&[(1.0, true)]), 10).unwrap(), 0.0);
        let table = reliability_table(&preds(&[(1.0, true); 3]), 10).unwrap();
        assert_eq!(table[9].count, 3);
        assert_eq!(table[9].accuracy, Some(1.0));
        assert!(ece(&[], 10).is_err());
        assert!(ece(&preds(&[(0.5, true)]), 0).is_err());
    }

    #[test]
    fn safety_predictions_use_max_confidence() {
        let p = safety_predictions(&[0.2, 0.5, 0.9], &[Label::Unsafe, Label::Unsafe, Label::Safe]).unwrap();
        assert_eq!(p[0], Prediction { confidence: 0.8, correct: true });
        assert_eq!(p[1], Prediction { confidence: 0.5, correct: false });
        assert!(p[2].correct);
        assert!(safety_predictions(&[0.2], &[]).is_err());
    }

    fn arb_set() -> impl Strategy<Value = ParaphraseSet> {
        (0.0f64..=1.0, proptest::collection::vec(0.0f64..=1.0, 1..6))
            .prop_map(|(o, ps)| ParaphraseSet::from_scores("p", o, &ps).unwrap())
    }

    proptest! {
        #[test]
        fn bin_counts_conserved(sets in proptest::collection::vec(arb_set(), 0..30)) {
            let r = binned_lfr(&sets).unwrap();
            prop_assert_eq!(r.total_sets(), sets.len());
            let t = threshold_split_lfr(&sets).unwrap();
            prop_assert_eq!(t.counts[0].sets + t.counts[1].sets, sets.len());
            let recomputed = average_of_present(&[r.lfr_unsafe, r.lfr_ambiguous, r.lfr_safe]);
            prop_assert_eq!(recomputed, r.average_lfr);
            for c in r.counts {
                prop_assert_eq!(c.rate().is_none(), c.sets == 0);
            }
        }

        #[test]
        fn adding_a_paraphrase_never_unflips(s in arb_set(), extra in 0.0f64..=1.0) {
            let before = set_flips(&s).unwrap();
            let mut scores = s.scores().unwrap().paraphrases;
            scores.push(extra);
            let after = set_flips(&ParaphraseSet::from_scores("p", s.scores().unwrap().original, &scores).unwrap()).unwrap();
            prop_assert!(!before || after);
        }

        #[test]
        fn ece_bounded_and_coherent(cases in proptest::collection::vec((0.5f64..=1.0, any::<bool>()), 1..60), m in 1usize..20) {
            let p = preds(&cases);
            let e = ece(&p, m).unwrap();
            prop_assert!((0.0..=1.0).contains(&e));
            let table = reliability_table(&p, m).unwrap();
            prop_assert_eq!(table.iter().map(|b| b.count).sum::<usize>(), p.len());
            prop_assert_eq!(ece_from_table(&table), e);
        }

        #[test]
        fn dispersion_nonnegative(s in arb_set()) {
            let d = dispersion(&s).unwrap();
            prop_assert!(d.std >= 0.0 && d.max_delta >= 0.0);
        }
    }
}
