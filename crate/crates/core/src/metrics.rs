//! Overlap criteria between a predicted and a reference mask, and the
//! alpha sweep that scores the fused threshold over a labelled dataset.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::raster::RgbImage;
use crate::threshold::{analyze, check_alpha, BinaryMask, ThresholdError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(u32, u32, u32, u32),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{images} images but {truths} ground-truth masks")]
    LengthMismatch { images: usize, truths: usize },
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error("invalid alpha grid {spec:?}: {reason}")]
    InvalidGrid { spec: String, reason: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion_counts(pred: &BinaryMask, truth: &BinaryMask) -> Result<ConfusionCounts, MetricsError> {
    if (pred.width(), pred.height()) != (truth.width(), truth.height()) {
        return Err(MetricsError::ShapeMismatch(pred.width(), pred.height(), truth.width(), truth.height()));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.bits().iter().zip(truth.bits()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvalResult {
    pub sensitivity: f64,
    pub precision: f64,
    pub dsc: f64,
}

/// `num / den`, or the agreement convention when `den` is zero: 1.0 if both
/// masks are empty, otherwise 0.0.
fn ratio(num: u64, den: u64, both_empty: bool) -> f64 {
    if den == 0 {
        if both_empty {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

/// Sensitivity `TP/(TP+FN)`, precision `TP/(TP+FP)` and Dice
/// `2TP/(2TP+FP+FN)`.
pub fn evaluate(c: &ConfusionCounts) -> EvalResult {
    let both_empty = c.tp == 0 && c.fp == 0 && c.fn_ == 0;
    EvalResult {
        sensitivity: ratio(c.tp, c.tp + c.fn_, both_empty),
        precision: ratio(c.tp, c.tp + c.fp, both_empty),
        dsc: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_, both_empty),
    }
}

pub fn evaluate_masks(pred: &BinaryMask, truth: &BinaryMask) -> Result<EvalResult, MetricsError> {
    confusion_counts(pred, truth).map(|c| evaluate(&c))
}

/// Arithmetic mean of each criterion, in input order.
pub fn macro_mean(results: &[EvalResult]) -> Option<EvalResult> {
    if results.is_empty() {
        return None;
    }
    let n = results.len() as f64;
    let (mut s, mut p, mut d) = (0.0, 0.0, 0.0);
    for r in results {
        s += r.sensitivity;
        p += r.precision;
        d += r.dsc;
    }
    Some(EvalResult { sensitivity: s / n, precision: p / n, dsc: d / n })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub sensitivity: f64,
    pub precision: f64,
    pub dsc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub best_alpha: f64,
    /// Number of input images, failures included.
    pub dataset_size: usize,
    /// Indices of images that could not be segmented.
    pub failed: Vec<usize>,
}

impl SweepReport {
    pub fn best_row(&self) -> &SweepRow {
        self.rows.iter().find(|r| r.alpha == self.best_alpha).expect("best alpha comes from a row")
    }

    /// `alpha,sensitivity_pct,precision_pct,dsc_pct` with two-decimal percentages.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,sensitivity_pct,precision_pct,dsc_pct\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.2},{:.2},{:.2}\n",
                r.alpha,
                r.sensitivity * 100.0,
                r.precision * 100.0,
                r.dsc * 100.0
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            best_alpha: f64,
            dataset_size: usize,
            failures: usize,
            rows: &'a [SweepRow],
        }
        let doc = Doc { best_alpha: self.best_alpha, dataset_size: self.dataset_size, failures: self.failed.len(), rows: &self.rows };
        let mut s = serde_json::to_string_pretty(&doc).expect("plain data serializes");
        s.push('\n');
        s
    }
}

/// Scores every alpha in `alphas` over the dataset.
///
/// Each image is analyzed once; images whose histogram is degenerate are
/// excluded from the means and listed in [`SweepReport::failed`]. Per-image
/// criteria are macro-averaged in index order, so the report does not depend
/// on thread scheduling.
pub fn alpha_sweep(images: &[RgbImage], truths: &[BinaryMask], alphas: &[f64]) -> Result<SweepReport, MetricsError> {
    if images.len() != truths.len() {
        return Err(MetricsError::LengthMismatch { images: images.len(), truths: truths.len() });
    }
    if images.is_empty() || alphas.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    for (img, truth) in images.iter().zip(truths) {
        if (img.width(), img.height()) != (truth.width(), truth.height()) {
            return Err(MetricsError::ShapeMismatch(img.width(), img.height(), truth.width(), truth.height()));
        }
    }

    let per_image: Vec<Option<Vec<EvalResult>>> = images
        .par_iter()
        .zip(truths)
        .map(|(img, truth)| {
            let analysis = analyze(img).ok()?;
            let scores = alphas
                .iter()
                .map(|&a| {
                    let t = analysis.thresholds(a, 0).expect("alpha validated");
                    evaluate_masks(&analysis.mask(&t), truth).expect("dimensions validated")
                })
                .collect();
            Some(scores)
        })
        .collect();

    let failed: Vec<usize> = per_image.iter().enumerate().filter(|(_, r)| r.is_none()).map(|(i, _)| i).collect();
    let ok: Vec<&Vec<EvalResult>> = per_image.iter().flatten().collect();
    if ok.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }

    let rows: Vec<SweepRow> = alphas
        .iter()
        .enumerate()
        .map(|(j, &alpha)| {
            let column: Vec<EvalResult> = ok.iter().map(|r| r[j]).collect();
            let m = macro_mean(&column).expect("non-empty");
            SweepRow { alpha, sensitivity: m.sensitivity, precision: m.precision, dsc: m.dsc }
        })
        .collect();

    let mut best = rows[0];
    for r in &rows[1..] {
        if r.dsc > best.dsc || (r.dsc == best.dsc && r.alpha < best.alpha) {
            best = *r;
        }
    }

    Ok(SweepReport { rows, best_alpha: best.alpha, dataset_size: images.len(), failed })
}

/// The grid `0.0, 0.1, ..., 1.0`.
pub fn default_alpha_grid() -> Vec<f64> {
    parse_alpha_grid("0:1:0.1").expect("valid literal")
}

/// Parses `start:stop:step`. The stop value is included when it lies within
/// 1e-9 of a grid point; grid points are snapped to 1e-9 so `0:1:0.1`
/// yields exactly `0.3` rather than `0.30000000000000004`.
pub fn parse_alpha_grid(spec: &str) -> Result<Vec<f64>, MetricsError> {
    let bad = |reason: &str| MetricsError::InvalidGrid { spec: spec.to_string(), reason: reason.to_string() };
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, stop, step] = parts.as_slice() else {
        return Err(bad("expected start:stop:step"));
    };
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let (start, stop, step) = (parse(start)?, parse(stop)?, parse(step)?);
    if step.is_nan() || step <= 0.0 || step.is_infinite() {
        return Err(bad("step must be > 0"));
    }
    if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&stop) {
        return Err(bad("alpha must be in [0,1]"));
    }
    if stop < start {
        return Err(bad("stop is below start"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|i| {
            let v = start + i as f64 * step;
            ((v * 1e9).round() / 1e9).min(1.0)
        })
        .collect())
}
