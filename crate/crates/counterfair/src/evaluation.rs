//! Prediction-quality and fairness-utility metrics for model comparison.
//!
//! Two predictors trained on the same data are compared on a single scalar
//! that trades prediction performance against *worst-case* unfairness:
//!
//! ```text
//! 𝒰 = ω·R − (1−ω)·F,   F = ⅓·(max|DE±| + max|IE±| + max|SE±|),
//! ```
//!
//! where `R` is the performance score (ROC AUC for classification; the
//! negated MSE for regression, so larger is always better) and the three
//! maxima are taken over the endpoints of the predictor-substituted
//! expectation bounds at the audit budget. Using bound endpoints rather than
//! point estimates makes `F` a certificate: no confounding scenario inside
//! the budget can make the model less fair than `F` reports. The utility is
//! at most `1` for `R ≤ 1` but has no lower bound — arbitrarily unfair
//! models score arbitrarily badly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EffectBounds;

/// Rank-based ROC AUC with tie-averaging.
///
/// Computes the Mann–Whitney statistic via average ranks: tied scores share
/// the mean of the rank positions they occupy, so a score carrying both a
/// positive and a negative label contributes ½ — the probability that a
/// uniformly drawn positive/negative pair is ordered correctly, counting
/// ties as half-correct. The result is invariant under any strictly
/// increasing transform of the scores.
///
/// Errors if the slices are empty or mismatched, any score is non-finite,
/// a label is outside `{0, 1}`, or only one class is present (the AUC is
/// undefined without at least one positive and one negative).
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::validation(format!(
            "scores and labels differ in length: {} vs {}",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::validation("ROC AUC needs at least one observation"));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::validation(format!("non-finite score {s}")));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::validation(format!("labels must be 0 or 1, got {l}")));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::validation(
            "ROC AUC needs both classes present in the labels",
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // Average 1-based ranks over each tie group.
    let mut rank = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            rank[k] = mean_rank;
        }
        i = j + 1;
    }

    let pos_rank_sum: f64 = labels
        .iter()
        .zip(&rank)
        .filter_map(|(&l, &r)| (l == 1).then_some(r))
        .sum();
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Mean squared error `⅟n·Σ (p_k − t_k)²`.
///
/// Errors on empty or mismatched inputs.
pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::validation(format!(
            "predictions and targets differ in length: {} vs {}",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::validation("MSE needs at least one observation"));
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// Fairness score `F`: the mean of the three per-effect worst-case bound
/// magnitudes, `⅓·(max{|DE⁻|,|DE⁺|} + max{|IE⁻|,|IE⁺|} + max{|SE⁻|,|SE⁺|})`.
///
/// `F = 0` exactly when every endpoint of every effect interval is zero —
/// the model is certifiably fair under the audit budget.
pub fn fairness_score(bounds: &EffectBounds) -> f64 {
    (bounds.de.max_abs() + bounds.ie.max_abs() + bounds.se.max_abs()) / 3.0
}

/// Fairness-weighted utility `𝒰 = ω·R − (1−ω)·F` for performance score `r`
/// and the expectation bounds of the model under audit.
///
/// Monotone increasing in `r`, monotone decreasing in each bound magnitude.
/// `ω = 1` ignores fairness entirely; `ω = 0` ignores performance. Errors
/// unless `ω ∈ [0, 1]` and `r` is finite.
pub fn fairness_utility(r: f64, bounds: &EffectBounds, omega: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::validation(format!("omega must lie in [0, 1], got {omega}")));
    }
    if !r.is_finite() {
        return Err(Error::validation(format!("performance score must be finite, got {r}")));
    }
    Ok(omega * r - (1.0 - omega) * fairness_score(bounds))
}

/// One model's audited scorecard: performance, certified unfairness, and
/// their weighted combination, ready for cross-seed aggregation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// ROC AUC, present for classification outcomes.
    pub roc_auc: Option<f64>,
    /// Mean squared error, present for regression outcomes.
    pub mse: Option<f64>,
    /// Fairness score `F` (mean per-effect worst-case magnitude).
    pub fairness: f64,
    /// Utility `𝒰 = ω·R − (1−ω)·F`.
    pub utility: f64,
    /// Performance weight `ω`.
    pub omega: f64,
    /// `max{|DE⁻|, |DE⁺|}` of the audited expectation bounds.
    pub de_max_abs: f64,
    /// `max{|IE⁻|, |IE⁺|}`.
    pub ie_max_abs: f64,
    /// `max{|SE⁻|, |SE⁺|}`.
    pub se_max_abs: f64,
}

impl EvalReport {
    /// Column names matching [`EvalReport::csv_row`], for the aggregation
    /// header line.
    pub const CSV_HEADER: &'static str =
        "roc_auc,mse,fairness,utility,omega,de_max_abs,ie_max_abs,se_max_abs";

    /// Scorecard for a classifier: `R` is the ROC AUC (must lie in `[0, 1]`).
    pub fn classification(roc_auc: f64, bounds: &EffectBounds, omega: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&roc_auc) {
            return Err(Error::validation(format!(
                "ROC AUC must lie in [0, 1], got {roc_auc}"
            )));
        }
        Ok(EvalReport {
            roc_auc: Some(roc_auc),
            mse: None,
            fairness: fairness_score(bounds),
            utility: fairness_utility(roc_auc, bounds, omega)?,
            omega,
            de_max_abs: bounds.de.max_abs(),
            ie_max_abs: bounds.ie.max_abs(),
            se_max_abs: bounds.se.max_abs(),
        })
    }

    /// Scorecard for a regressor: the performance score entering the utility
    /// is the *negated* MSE, keeping "larger is better" so the same weighting
    /// applies (`mse` must be finite and ≥ 0).
    pub fn regression(mse: f64, bounds: &EffectBounds, omega: f64) -> Result<Self> {
        if !mse.is_finite() || mse < 0.0 {
            return Err(Error::validation(format!(
                "MSE must be finite and non-negative, got {mse}"
            )));
        }
        Ok(EvalReport {
            roc_auc: None,
            mse: Some(mse),
            fairness: fairness_score(bounds),
            utility: fairness_utility(-mse, bounds, omega)?,
            omega,
            de_max_abs: bounds.de.max_abs(),
            ie_max_abs: bounds.ie.max_abs(),
            se_max_abs: bounds.se.max_abs(),
        })
    }

    /// JSON object mirroring the struct fields (absent metric → `null`).
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("EvalReport is always serializable")
    }

    /// One CSV data row in [`EvalReport::CSV_HEADER`] order; absent metrics
    /// serialize as empty cells.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            opt(self.roc_auc),
            opt(self.mse),
            self.fairness,
            self.utility,
            self.omega,
            self.de_max_abs,
            self.ie_max_abs,
            self.se_max_abs
        )
    }
}
