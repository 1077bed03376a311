//! Report emission: pretty JSON, flat CSV tables and fixed-layout SVG plots.
//!
//! Everything here is deterministic for a given input so that reports can be
//! diffed between runs.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::judge::SweepRow;
use crate::metrics::{BinnedLfrReport, ReliabilityBin, ThresholdSplitLfr};
use crate::model::{ConfidenceBin, ParaphraseSet, SAFE_BIN_LOWER, UNSAFE_BIN_UPPER};

/// Text used for absent rates and undefined metrics.
pub const NOT_AVAILABLE: &str = "N/A";

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| NOT_AVAILABLE.to_owned(), |v| format!("{v}"))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut body = serde_json::to_vec_pretty(value).map_err(|e| Error::Report(e.to_string()))?;
    body.push(b'\n');
    Ok(body)
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let body = to_json(value)?;
    write_atomic(path, |w| w.write_all(&body))
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::Report(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Report(e.to_string()))
}

pub fn write_csv<T: Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<()> {
    let body = to_csv(rows)?;
    write_atomic(path, |w| w.write_all(&body))
}

pub fn write_text(text: &str, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, |w| w.write_all(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LfrRow {
    pub model: String,
    pub strategy: String,
    pub bin: String,
    pub sets: usize,
    pub flipped: usize,
    pub lfr: String,
}

/// One row per confidence bin, per threshold half, plus the average.
pub fn lfr_rows(model: &str, strategy: &str, binned: &BinnedLfrReport, split: &ThresholdSplitLfr) -> Vec<LfrRow> {
    let row = |bin: &str, sets, flipped, lfr| LfrRow {
        model: model.to_owned(),
        strategy: strategy.to_owned(),
        bin: bin.to_owned(),
        sets,
        flipped,
        lfr: fmt_opt(lfr),
    };
    let mut rows: Vec<LfrRow> = ConfidenceBin::ALL
        .iter()
        .map(|&b| {
            let c = binned.counts[b.index()];
            row(b.name(), c.sets, c.flipped, binned.rate(b))
        })
        .collect();
    let total_sets = binned.total_sets();
    let total_flipped = binned.counts.iter().map(|c| c.flipped).sum();
    rows.push(row("average", total_sets, total_flipped, binned.average_lfr));
    rows.push(row("below_half", split.counts[0].sets, split.counts[0].flipped, split.lfr_below_half));
    rows.push(row(
        "at_or_above_half",
        split.counts[1].sets,
        split.counts[1].flipped,
        split.lfr_at_or_above_half,
    ));
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCsvRow {
    pub threshold: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: String,
    pub recall: String,
    pub f1: String,
    pub accuracy: String,
}

pub fn sweep_rows(rows: &[SweepRow]) -> Vec<SweepCsvRow> {
    rows.iter()
        .map(|r| SweepCsvRow {
            threshold: r.threshold,
            tp: r.counts.tp,
            fp: r.counts.fp,
            fn_: r.counts.fn_,
            tn: r.counts.tn,
            precision: fmt_opt(r.metrics.precision),
            recall: fmt_opt(r.metrics.recall),
            f1: fmt_opt(r.metrics.f1),
            accuracy: fmt_opt(r.metrics.accuracy),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityCsvRow {
    pub stage: String,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub avg_confidence: String,
    pub accuracy: String,
}

pub fn reliability_rows(stage: &str, table: &[ReliabilityBin]) -> Vec<ReliabilityCsvRow> {
    table
        .iter()
        .map(|b| ReliabilityCsvRow {
            stage: stage.to_owned(),
            lower: b.lower,
            upper: b.upper,
            count: b.count,
            avg_confidence: fmt_opt(b.avg_confidence),
            accuracy: fmt_opt(b.accuracy),
        })
        .collect()
}

const SIZE: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn px(v: f64) -> f64 {
    MARGIN + v * SIZE
}

fn py(v: f64) -> f64 {
    MARGIN + (1.0 - v) * SIZE
}

fn svg_open(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let full = SIZE + 2.0 * MARGIN;
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full}" height="{full}" viewBox="0 0 {full} {full}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{full}" height="{full}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="25" text-anchor="middle" font-size="14">{}</text>"#,
        full / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.2}</text>"#,
            px(v),
            py(0.0) + 16.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            px(0.0) - 6.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        px(0.5),
        full - 8.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        py(0.5),
        py(0.5),
        escape(y_label)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn diagonal(out: &mut String) {
    let _ = writeln!(
        out,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#999" stroke-dasharray="4 4"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
}

/// Paraphrase score against original score for every member pair. Points in
/// the off-diagonal quadrants are label flips.
pub fn sensitivity_svg(sets: &[ParaphraseSet], title: &str) -> Result<String> {
    let mut out = String::new();
    svg_open(&mut out, title, "original score", "paraphrase score");
    for (v, color) in [(UNSAFE_BIN_UPPER, "#ccc"), (0.5, "#c33"), (SAFE_BIN_LOWER, "#ccc")] {
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{MARGIN}" x2="{:.1}" y2="{:.1}" stroke="{color}"/>"#,
            px(v),
            px(v),
            py(0.0)
        );
    }
    let _ = writeln!(
        out,
        r##"<line x1="{MARGIN}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#c33"/>"##,
        py(0.5),
        px(1.0),
        py(0.5)
    );
    diagonal(&mut out);
    for set in sets {
        let s = set.scores()?;
        for p in &s.paraphrases {
            let flipped = (s.original >= 0.5) != (*p >= 0.5);
            let fill = if flipped { "#d62728" } else { "#1f77b4" };
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{fill}" fill-opacity="0.6"/>"#,
                px(s.original),
                py(*p)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Accuracy per confidence bin as bars, with the identity line for
/// reference. Up to two tables are overlaid side by side.
pub fn reliability_svg(tables: &[(&str, &[ReliabilityBin])], title: &str) -> String {
    const COLORS: [&str; 2] = ["#1f77b4", "#ff7f0e"];
    let mut out = String::new();
    svg_open(&mut out, title, "confidence", "accuracy");
    let lanes = tables.len().max(1) as f64;
    for (k, (name, table)) in tables.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        for b in table.iter() {
            let Some(acc) = b.accuracy else { continue };
            let width = (b.upper - b.lower) * SIZE / lanes;
            let x = px(b.lower) + k as f64 * width;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{:.2}" width="{width:.2}" height="{:.2}" fill="{color}" fill-opacity="0.7" stroke="white"/>"#,
                py(acc),
                acc * SIZE
            );
        }
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{color}"/>"#,
            px(0.02),
            py(0.97) + k as f64 * 16.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            px(0.02) + 14.0,
            py(0.97) + k as f64 * 16.0 + 9.0,
            escape(name)
        );
    }
    diagonal(&mut out);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::{sweep_similarity_thresholds, JudgedPair, Verdict};
    use crate::metrics::{binned_lfr, reliability_table, threshold_split_lfr, Prediction};

    fn corpus() -> Vec<ParaphraseSet> {
        vec![
            ParaphraseSet::from_scores("a", 0.9, &[0.95, 0.4]).unwrap(),
            ParaphraseSet::from_scores("b", 0.1, &[0.2, 0.15]).unwrap(),
        ]
    }

    #[test]
    fn lfr_rows_mark_absent_bins() {
        let sets = corpus();
        let rows = lfr_rows("m", "skew", &binned_lfr(&sets).unwrap(), &threshold_split_lfr(&sets).unwrap());
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[1].bin, "ambiguous");
        assert_eq!(rows[1].lfr, "N/A");
        assert_eq!(rows[2].lfr, "1");
        assert_eq!(rows[3].lfr, "0.5");
        let csv = String::from_utf8(to_csv(&rows).unwrap()).unwrap();
        assert!(csv.starts_with("model,strategy,bin,sets,flipped,lfr\n"));
        assert!(csv.contains("m,skew,ambiguous,0,0,N/A\n"));
    }

    #[test]
    fn csv_quotes_awkward_fields() {
        let rows = [LfrRow {
            model: "guard, \"v2\"".into(),
            strategy: "mean".into(),
            bin: "average".into(),
            sets: 1,
            flipped: 0,
            lfr: "0".into(),
        }];
        let csv = String::from_utf8(to_csv(&rows).unwrap()).unwrap();
        assert!(csv.contains("\"guard, \"\"v2\"\"\",mean"));
    }

    #[test]
    fn sweep_csv_header() {
        let pairs = vec![JudgedPair {
            a: "x".into(),
            b: "y".into(),
            verdict: Verdict::Yes,
            prob: 0.9,
            gold_similarity: Some(0.9),
        }];
        let rows = sweep_rows(&sweep_similarity_thresholds(&pairs, &[0.8]).unwrap());
        let csv = String::from_utf8(to_csv(&rows).unwrap()).unwrap();
        assert!(csv.starts_with("threshold,tp,fp,fn,tn,precision,recall,f1,accuracy\n0.8,1,0,0,0,1,1,1,1\n"));
    }

    #[test]
    fn svg_is_deterministic_and_well_formed() {
        let sets = corpus();
        let a = sensitivity_svg(&sets, "before <training>").unwrap();
        assert_eq!(a, sensitivity_svg(&sets, "before <training>").unwrap());
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<circle").count(), 4);
        assert_eq!(a.matches("#d62728").count(), 1);
        assert!(a.contains("before &lt;training&gt;"));

        let preds = [Prediction { confidence: 0.9, correct: true }];
        let table = reliability_table(&preds, 10).unwrap();
        let r = reliability_svg(&[("before", &table), ("after", &table)], "reliability");
        assert_eq!(r.matches(r#"fill-opacity="0.7""#).count(), 2);
    }
}
