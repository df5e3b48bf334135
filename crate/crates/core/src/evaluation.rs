//! Scoring of predicted series against ground truth: slotwise detection
//! confusion, precision/recall/F1, paired t-tests over per-image metrics,
//! true-positive error statistics, false-negative imputation, variance
//! F-tests, regression metrics and the Dice coefficient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Symbol, TimeSeries};
use crate::raster::BinaryMask;
use crate::stats::{f_upper_p, mean, sample_std_dev, sample_variance, student_t_upper_p};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl DetectionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }
}

impl std::ops::Add for DetectionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl std::iter::Sum for DetectionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

fn check_pair(pred: &TimeSeries, truth: &TimeSeries) -> Result<()> {
    if pred.symbol != truth.symbol {
        return Err(Error::Validation(format!(
            "cannot compare {} predictions with {} truth",
            pred.symbol, truth.symbol
        )));
    }
    if pred.len() != truth.len() {
        return Err(Error::Validation(format!(
            "{} series lengths differ: {} predicted vs {} truth slots",
            pred.symbol,
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

pub fn detection_confusion(pred: &TimeSeries, truth: &TimeSeries) -> Result<DetectionCounts> {
    check_pair(pred, truth)?;
    let mut c = DetectionCounts::default();
    for (p, t) in pred.slots.iter().zip(&truth.slots) {
        match (p.is_some(), t.is_some()) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Precision, recall and F1. A 0/0 ratio is reported as 1.0 and sets `degenerate`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

pub fn precision_recall_f1(c: &DetectionCounts) -> DetectionMetrics {
    let mut degenerate = false;
    let mut ratio = |num: usize, den: usize| {
        if den == 0 {
            degenerate = true;
            1.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    DetectionMetrics {
        precision,
        recall,
        f1,
        degenerate,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub mean_diff: f64,
    pub std_dev: f64,
    pub n: usize,
    pub standard_error: f64,
    pub null_value: f64,
    pub t_statistic: f64,
    pub df: usize,
    /// One-tailed, upper alternative.
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
}

/// t-test from summary statistics; `df = n - 1`.
pub fn t_test_from_summary(
    mean_diff: f64,
    standard_error: f64,
    n: usize,
    null_value: f64,
    alpha: f64,
) -> Result<TTestResult> {
    if n < 2 {
        return Err(Error::DegenerateSample(format!(
            "t-test needs at least 2 samples, got {n}"
        )));
    }
    if !(standard_error > 0.0 && standard_error.is_finite()) {
        return Err(Error::DegenerateSample(format!(
            "standard error {standard_error} must be positive"
        )));
    }
    let t = (mean_diff - null_value) / standard_error;
    let df = n - 1;
    let p_value = student_t_upper_p(t, df as f64)?;
    Ok(TTestResult {
        mean_diff,
        std_dev: standard_error * (n as f64).sqrt(),
        n,
        standard_error,
        null_value,
        t_statistic: t,
        df,
        p_value,
        alpha,
        reject: p_value < alpha,
    })
}

/// Paired, one-tailed (upper) t-test on per-sample differences.
pub fn paired_t_test(diffs: &[f64], alpha: f64, null_value: f64) -> Result<TTestResult> {
    let n = diffs.len();
    let sd = sample_std_dev(diffs).ok_or_else(|| {
        Error::DegenerateSample(format!("t-test needs at least 2 samples, got {n}"))
    })?;
    if sd == 0.0 {
        return Err(Error::DegenerateSample(
            "all differences are identical".into(),
        ));
    }
    t_test_from_summary(mean(diffs), sd / (n as f64).sqrt(), n, null_value, alpha)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FTestResult {
    pub var_numerator: f64,
    pub var_denominator: f64,
    pub df_num: usize,
    pub df_den: usize,
    pub f_statistic: f64,
    /// Upper-tailed.
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
}

pub fn f_test_from_variances(
    var_numerator: f64,
    var_denominator: f64,
    df_num: usize,
    df_den: usize,
    alpha: f64,
) -> Result<FTestResult> {
    if var_denominator.is_nan() || var_denominator <= 0.0 {
        return Err(Error::DegenerateSample(
            "denominator variance is zero".into(),
        ));
    }
    if var_numerator.is_nan() || var_numerator < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "variance {var_numerator} is negative"
        )));
    }
    let f = var_numerator / var_denominator;
    let p_value = f_upper_p(f, df_num as f64, df_den as f64)?;
    Ok(FTestResult {
        var_numerator,
        var_denominator,
        df_num,
        df_den,
        f_statistic: f,
        p_value,
        alpha,
        reject: p_value < alpha,
    })
}

/// Upper-tailed test of `H_A: var(numerator) > var(denominator)`.
pub fn f_test_variances(numerator: &[f64], denominator: &[f64], alpha: f64) -> Result<FTestResult> {
    let too_small =
        |n: usize| Error::DegenerateSample(format!("F-test needs at least 2 samples, got {n}"));
    let vn = sample_variance(numerator).ok_or_else(|| too_small(numerator.len()))?;
    let vd = sample_variance(denominator).ok_or_else(|| too_small(denominator.len()))?;
    f_test_from_variances(vn, vd, numerator.len() - 1, denominator.len() - 1, alpha)
}

/// Error statistics; `None` marks a statistic undefined for the sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub n: usize,
    pub mean_error: Option<f64>,
    pub std_dev: Option<f64>,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub r_squared: Option<f64>,
    /// Set when any statistic above is undefined.
    pub degenerate: bool,
}

impl ErrorSummary {
    fn from_errors(errors: &[f64]) -> Self {
        let n = errors.len();
        let nonempty = |f: &dyn Fn() -> f64| (n > 0).then(f);
        let mean_error = nonempty(&|| mean(errors));
        let std_dev = sample_std_dev(errors);
        let mse = nonempty(&|| errors.iter().map(|e| e * e).sum::<f64>() / n as f64);
        let mae = nonempty(&|| errors.iter().map(|e| e.abs()).sum::<f64>() / n as f64);
        Self {
            n,
            mean_error,
            std_dev,
            mse,
            mae,
            r_squared: None,
            degenerate: std_dev.is_none(),
        }
    }
}

/// `pred - truth` at every slot where both are present, with their summary.
pub fn true_positive_errors(
    pred: &TimeSeries,
    truth: &TimeSeries,
) -> Result<(Vec<i32>, ErrorSummary)> {
    check_pair(pred, truth)?;
    let errors: Vec<i32> = pred
        .slots
        .iter()
        .zip(&truth.slots)
        .filter_map(|(p, t)| Some((*p)? - (*t)?))
        .collect();
    let as_f64: Vec<f64> = errors.iter().map(|&e| f64::from(e)).collect();
    Ok((errors, ErrorSummary::from_errors(&as_f64)))
}

/// Fills every truth-present slot the prediction left blank. A slot whose two
/// direct neighbours both hold predictions gets their rounded mean; any other
/// gets the nearest prediction, the earlier one on a tie. Only original
/// predictions are used as sources, and they are never changed.
pub fn impute_false_negatives(pred: &TimeSeries, truth: &TimeSeries) -> Result<TimeSeries> {
    check_pair(pred, truth)?;
    let src = &pred.slots;
    let present: Vec<usize> = (0..src.len()).filter(|&i| src[i].is_some()).collect();
    let mut out = pred.clone();
    for (i, t) in truth.slots.iter().enumerate() {
        if t.is_none() || src[i].is_some() {
            continue;
        }
        if present.is_empty() {
            return Err(Error::CannotImpute(format!(
                "{} prediction is entirely blank but truth has values",
                pred.symbol
            )));
        }
        let neighbours = (
            i.checked_sub(1).and_then(|j| src[j]),
            src.get(i + 1).copied().flatten(),
        );
        out.slots[i] = Some(match neighbours {
            (Some(a), Some(b)) => (f64::from(a + b) / 2.0).round() as i32,
            _ => {
                let j = *present
                    .iter()
                    .min_by_key(|&&j| (j.abs_diff(i), j))
                    .expect("nonempty");
                src[j].expect("present")
            }
        });
    }
    Ok(out)
}

/// MSE, MAE and R² over the truth-present slots; every such slot must be predicted.
pub fn regression_metrics(pred: &TimeSeries, truth: &TimeSeries) -> Result<ErrorSummary> {
    check_pair(pred, truth)?;
    let mut pairs = Vec::new();
    for (i, (p, t)) in pred.slots.iter().zip(&truth.slots).enumerate() {
        if let Some(t) = t {
            let p = p.ok_or_else(|| {
                Error::Validation(format!(
                    "{} slot {i} has truth but no prediction",
                    pred.symbol
                ))
            })?;
            pairs.push((f64::from(p), f64::from(*t)));
        }
    }
    Ok(regression_summary(&pairs))
}

/// Summary of `(pred, truth)` pairs, including R² about the truth mean.
pub fn regression_summary(pairs: &[(f64, f64)]) -> ErrorSummary {
    let errors: Vec<f64> = pairs.iter().map(|(p, t)| p - t).collect();
    let mut s = ErrorSummary::from_errors(&errors);
    if !pairs.is_empty() {
        let truth_mean = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
        let ss_tot: f64 = pairs.iter().map(|(_, t)| (t - truth_mean).powi(2)).sum();
        let ss_res: f64 = errors.iter().map(|e| e * e).sum();
        if ss_tot > 0.0 {
            s.r_squared = Some(1.0 - ss_res / ss_tot);
        }
    }
    s.degenerate = s.degenerate || s.r_squared.is_none();
    s
}

/// `2|a ∩ b| / (|a| + |b|)`; two empty masks score 1.
pub fn dice_coefficient(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Validation(format!(
            "mask dimensions differ: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let (na, nb) = (a.count(), b.count());
    if na + nb == 0 {
        return Ok(1.0);
    }
    let both = a
        .bits()
        .iter()
        .zip(b.bits())
        .filter(|(x, y)| **x && **y)
        .count();
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

// --- suite reports -----------------------------------------------------------------

/// One image's predicted and true series for a symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair {
    pub image: String,
    pub pred: TimeSeries,
    pub truth: TimeSeries,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub image: String,
    pub counts: DetectionCounts,
    pub metrics: DetectionMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotPair {
    pub image: String,
    pub slot: usize,
    pub time_min: u32,
    pub pred: Option<i32>,
    pub truth: Option<i32>,
    /// Prediction after false-negative imputation.
    pub imputed: Option<i32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub counts: DetectionCounts,
    pub metrics: DetectionMetrics,
    pub per_image: Vec<ImageScore>,
    pub true_positive_errors: ErrorSummary,
    /// Errors over all truth-present slots after imputation, with R².
    pub imputed_errors: ErrorSummary,
    /// Images left out of `imputed_errors` because nothing could be imputed.
    pub imputation_skipped: Vec<String>,
    pub pairs: Vec<SlotPair>,
}

impl MethodReport {
    /// Pooled `pred - truth` after imputation, in image then slot order.
    pub fn imputed_error_sample(&self) -> Vec<f64> {
        self.pairs
            .iter()
            .filter_map(|p| Some(f64::from(p.imputed? - p.truth?)))
            .collect()
    }
}

pub fn evaluate_method(images: &[ImagePair]) -> Result<MethodReport> {
    let mut per_image = Vec::with_capacity(images.len());
    let mut tp_errors = Vec::new();
    let mut imputed_pairs = Vec::new();
    let mut skipped = Vec::new();
    let mut pairs = Vec::new();
    for img in images {
        let counts = detection_confusion(&img.pred, &img.truth)?;
        per_image.push(ImageScore {
            image: img.image.clone(),
            counts,
            metrics: precision_recall_f1(&counts),
        });
        let (errs, _) = true_positive_errors(&img.pred, &img.truth)?;
        tp_errors.extend(errs.into_iter().map(f64::from));
        let imputed = match impute_false_negatives(&img.pred, &img.truth) {
            Ok(s) => Some(s),
            Err(Error::CannotImpute(_)) => {
                skipped.push(img.image.clone());
                None
            }
            Err(e) => return Err(e),
        };
        for (slot, (p, t)) in img.pred.slots.iter().zip(&img.truth.slots).enumerate() {
            let imp = imputed.as_ref().and_then(|s| s.slots[slot]);
            if let (Some(t), Some(v)) = (t, imp) {
                imputed_pairs.push((f64::from(v), f64::from(*t)));
            }
            if p.is_some() || t.is_some() {
                pairs.push(SlotPair {
                    image: img.image.clone(),
                    slot,
                    time_min: img.truth.time_of(slot),
                    pred: *p,
                    truth: *t,
                    imputed: imp,
                });
            }
        }
    }
    let counts: DetectionCounts = per_image.iter().map(|s| s.counts).sum();
    Ok(MethodReport {
        counts,
        metrics: precision_recall_f1(&counts),
        per_image,
        true_positive_errors: ErrorSummary::from_errors(&tp_errors),
        imputed_errors: regression_summary(&imputed_pairs),
        imputation_skipped: skipped,
        pairs,
    })
}

/// A statistical test that may be undefined for the data at hand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TestOutcome<T> {
    Computed(T),
    Degenerate { reason: String },
}

impl<T> TestOutcome<T> {
    fn from_result(r: Result<T>) -> Result<Self> {
        match r {
            Ok(v) => Ok(Self::Computed(v)),
            Err(Error::DegenerateSample(reason)) => Ok(Self::Degenerate { reason }),
            Err(e) => Err(e),
        }
    }

    pub fn computed(&self) -> Option<&T> {
        match self {
            Self::Computed(v) => Some(v),
            Self::Degenerate { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Paired tests on per-image `candidate - baseline` metric differences.
    pub precision: TestOutcome<TTestResult>,
    pub recall: TestOutcome<TTestResult>,
    pub f1: TestOutcome<TTestResult>,
    /// Baseline error variance over candidate error variance, after imputation.
    pub variance: TestOutcome<FTestResult>,
}

pub fn compare_methods(
    candidate: &MethodReport,
    baseline: &MethodReport,
    alpha: f64,
) -> Result<Comparison> {
    if candidate.per_image.len() != baseline.per_image.len()
        || candidate
            .per_image
            .iter()
            .zip(&baseline.per_image)
            .any(|(a, b)| a.image != b.image)
    {
        return Err(Error::Validation(
            "candidate and baseline must cover the same images in the same order".into(),
        ));
    }
    let diffs = |f: fn(&DetectionMetrics) -> f64| -> Vec<f64> {
        candidate
            .per_image
            .iter()
            .zip(&baseline.per_image)
            .map(|(a, b)| f(&a.metrics) - f(&b.metrics))
            .collect()
    };
    let t = |f| TestOutcome::from_result(paired_t_test(&diffs(f), alpha, 0.0));
    Ok(Comparison {
        precision: t(|m| m.precision)?,
        recall: t(|m| m.recall)?,
        f1: t(|m| m.f1)?,
        variance: TestOutcome::from_result(f_test_variances(
            &baseline.imputed_error_sample(),
            &candidate.imputed_error_sample(),
            alpha,
        ))?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolReport {
    pub symbol: Symbol,
    pub candidate: MethodReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<MethodReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub candidate: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    pub alpha: f64,
    pub images: Vec<String>,
    pub symbols: Vec<SymbolReport>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
