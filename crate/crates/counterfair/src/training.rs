//! Constrained predictor training.
//!
//! Three seeded, deterministic training loops over the [`crate::neural`]
//! network share one feature convention (`[a, z…, m]`):
//!
//! - [`train_standard`]: minibatch Adam on the task loss alone — the
//!   unconstrained baseline.
//! - [`train_fair`]: augmented-Lagrangian training. Each outer iteration
//!   minimizes `loss(f_θ) − λ·(γ − c) − Σ (λ−λ_prev)²/(2μ)` over θ for a few
//!   nested epochs, where the constraint vector `c` holds the worst-case
//!   effect magnitudes `max{|CF⁻|, |CF⁺|}` of the predictor's expected score
//!   under the mediator budget, then updates the multipliers. Run with
//!   `gamma_m = 1` this degenerates to constraining the unconfounded plug-in
//!   effects — the naive-fair baseline.
//! - [`train_penalized`]: full-batch descent on
//!   `loss + w·Σ max{0, c_k − γ_k}`, the fixed-penalty variant used with
//!   continuous confounders, where the constraint grid is rebuilt from every
//!   training row and one evaluation per epoch is affordable.
//!
//! Constraint endpoints come from [`crate::bounds::bound_effects_expected`],
//! whose endpoint gradients with respect to the grid scores are exact;
//! chaining them through the score map and the network's backward pass gives
//! the Lagrangian gradient checked by [`lagrangian_value_and_grad`]. At the
//! `max{|·⁻|,|·⁺|}` kinks the attaining branch is differentiated, ties
//! resolved toward the upper endpoint (the conservative side for worst-case
//! fairness).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{bound_effects_expected, BoundGrads, EvalGrid};
use crate::error::{Error, Result};
use crate::estimation::{DensityEstimator, DensityTarget, ZQuery};
use crate::model::{Dataset, Interval};
use crate::neural::{
    sigmoid, sigmoid_bce, softmax_ce, softmax_probs, squared, Grads, MlpConfig, MlpParams,
};

/// Salt separating the minibatch shuffle stream from the weight-init stream
/// derived from the same user seed.
const SHUFFLE_SALT: u64 = 0xD1B5_4A32_D192_ED03;

/// Prediction task, inferred from the outcome column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    /// Two outcome classes; one logit, sigmoid cross-entropy.
    Binary,
    /// `k > 2` outcome classes; `k` logits, softmax cross-entropy.
    MultiClass(usize),
    /// Real-valued outcome; one linear output, squared loss.
    Regression,
}

impl TaskKind {
    /// Task implied by the dataset's outcome column.
    pub fn infer(data: &Dataset) -> TaskKind {
        match data.y_labels() {
            Some(_) => match data.y_domain().cardinality() {
                Some(2) | None => TaskKind::Binary,
                Some(k) => TaskKind::MultiClass(k),
            },
            None => TaskKind::Regression,
        }
    }

    /// Output width the network must end in.
    pub fn output_dim(&self) -> usize {
        match self {
            TaskKind::MultiClass(k) => *k,
            _ => 1,
        }
    }
}

/// Feature encoding shared by every predictor in this module: the attribute
/// first, then the confounder features, then the mediator as its category
/// index — `[a, z…, m]`.
pub fn encode_input(a: usize, z_feats: &[f64], m: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(2 + z_feats.len());
    v.push(a as f64);
    v.extend_from_slice(z_feats);
    v.push(m as f64);
    v
}

/// A trained predictor together with its task, scoring `(a, z, m)` queries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FairPredictor {
    /// Network parameters.
    pub net: MlpParams,
    /// Task the network was trained for.
    pub task: TaskKind,
}

impl FairPredictor {
    /// Scalar score `f(a, z, m)`: the class-1 probability for binary tasks,
    /// the raw output for regression. Errors for multi-class predictors,
    /// whose scores are per class ([`FairPredictor::class_score`]).
    pub fn score(&self, a: usize, z_feats: &[f64], m: usize) -> Result<f64> {
        let out = self.net.infer(&encode_input(a, z_feats, m))?;
        scalar_score(self.task, &out)
    }

    /// Probability of outcome class `y` at `(a, z, m)`.
    pub fn class_score(&self, a: usize, z_feats: &[f64], m: usize, y: usize) -> Result<f64> {
        let out = self.net.infer(&encode_input(a, z_feats, m))?;
        match self.task {
            TaskKind::Binary => {
                if y > 1 {
                    return Err(Error::validation(format!("binary outcome has no class {y}")));
                }
                let p1 = sigmoid(out[0]);
                Ok(if y == 1 { p1 } else { 1.0 - p1 })
            }
            TaskKind::MultiClass(k) => {
                if y >= k {
                    return Err(Error::validation(format!("class {y} out of range ({k} classes)")));
                }
                Ok(softmax_probs(&out)[y])
            }
            TaskKind::Regression => {
                Err(Error::validation("regression predictors have no class probabilities"))
            }
        }
    }

    /// Scalar scores at every record's own `(a, z, m)` — the inputs to ROC
    /// AUC (binary) or MSE (regression).
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        (0..data.n())
            .map(|i| self.score(data.a()[i] as usize, &data.z_features_row(i), data.m()[i]))
            .collect()
    }
}

fn scalar_score(task: TaskKind, out: &[f64]) -> Result<f64> {
    match task {
        TaskKind::Binary => Ok(sigmoid(out[0])),
        TaskKind::Regression => Ok(out[0]),
        TaskKind::MultiClass(_) => Err(Error::validation(
            "scalar expectation scores need a binary or regression predictor",
        )),
    }
}

// ---------------------------------------------------------------------------
// Constraint evaluation
// ---------------------------------------------------------------------------

/// Which constrained functionals the fairness constraints track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintMode {
    /// Three constraints on the expected scalar score `E[f]` (binary and
    /// regression tasks).
    ScalarExpectation,
    /// Three constraints per outcome class on `E[f_y]`, the predicted class
    /// probability (multi-class tasks).
    PerClass,
}

/// Confounder support for constraint evaluation: the full training split's
/// distinct discrete cells with their empirical weights, or every continuous
/// row weighted `1/n`.
#[derive(Debug, Clone)]
pub struct ZSupport {
    k_m: usize,
    points: Vec<SupportPoint>,
    weights: Vec<f64>,
}

#[derive(Debug, Clone)]
enum SupportPoint {
    Cell { cell: usize, feats: Vec<f64> },
    Row(Vec<f64>),
}

impl SupportPoint {
    fn feats(&self) -> &[f64] {
        match self {
            SupportPoint::Cell { feats, .. } => feats,
            SupportPoint::Row(r) => r,
        }
    }
}

impl ZSupport {
    /// Collect the support of a training split.
    pub fn from_dataset(data: &Dataset) -> Result<ZSupport> {
        let n = data.n();
        if n == 0 {
            return Err(Error::validation("empty dataset has no confounder support"));
        }
        let k_m = data.m_cardinality();
        match data.z_cells() {
            Some((cells, cardinality)) => {
                let mut counts = vec![0usize; cardinality];
                let mut feats: Vec<Option<Vec<f64>>> = vec![None; cardinality];
                for (i, &c) in cells.iter().enumerate() {
                    counts[c] += 1;
                    if feats[c].is_none() {
                        feats[c] = Some(data.z_features_row(i));
                    }
                }
                let mut points = Vec::new();
                let mut weights = Vec::new();
                for c in 0..cardinality {
                    if counts[c] > 0 {
                        points.push(SupportPoint::Cell {
                            cell: c,
                            feats: feats[c].take().expect("seen cell has features"),
                        });
                        weights.push(counts[c] as f64 / n as f64);
                    }
                }
                Ok(ZSupport { k_m, points, weights })
            }
            None => {
                let rows = data.z_rows().expect("continuous data has rows");
                Ok(ZSupport {
                    k_m,
                    points: rows.iter().map(|r| SupportPoint::Row(r.clone())).collect(),
                    weights: vec![1.0 / n as f64; n],
                })
            }
        }
    }

    /// Number of support points.
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    /// Mediator cardinality of the underlying data.
    pub fn k_m(&self) -> usize {
        self.k_m
    }

    fn query<'a>(&self, point: &'a SupportPoint, est: &DensityEstimator) -> ZQuery<'a> {
        if est.is_neural() {
            ZQuery::Row(point.feats())
        } else {
            match point {
                SupportPoint::Cell { cell, .. } => ZQuery::Cell(*cell),
                SupportPoint::Row(r) => ZQuery::Row(r),
            }
        }
    }
}

/// Worst-case effect triplet of a predictor's expected score, oriented as
/// the total-variation companions: the direct effect queried at
/// `(a_i, a_j) = (0, 1)`, the indirect and spurious effects at `(1, 0)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectAudit {
    /// Direct-effect interval.
    pub de: Interval,
    /// Indirect-effect interval.
    pub ie: Interval,
    /// Spurious-effect interval.
    pub se: Interval,
    /// Γ=1 plug-in direct effect.
    pub de_naive: f64,
    /// Γ=1 plug-in indirect effect.
    pub ie_naive: f64,
    /// Γ=1 plug-in spurious effect.
    pub se_naive: f64,
}

impl EffectAudit {
    /// The constraint triplet `[max{|DE⁻|,|DE⁺|}, …]` in DE, IE, SE order.
    pub fn constraint_values(&self) -> [f64; 3] {
        [self.de.max_abs(), self.ie.max_abs(), self.se.max_abs()]
    }
}

/// One constraint group's audit plus `∂c/∂f` over the grid cells, already
/// multiplied by the attaining endpoint's sign (ties toward the upper).
struct GroupAudit {
    audit: EffectAudit,
    dcdf: [Vec<f64>; 3],
}

fn attaining_grad(interval: &Interval, grads: &BoundGrads) -> Vec<f64> {
    let (endpoint, grad) = if interval.hi.abs() >= interval.lo.abs() {
        (interval.hi, &grads.hi)
    } else {
        (interval.lo, &grads.lo)
    };
    let sign = if endpoint < 0.0 { -1.0 } else { 1.0 };
    grad.iter().map(|g| sign * g).collect()
}

/// Densities shared by every constraint group's grid.
struct GridParts {
    z_weights: Vec<f64>,
    g_a: Vec<f64>,
    g_m: Vec<f64>,
}

fn density_parts(
    support: &ZSupport,
    g_a: &DensityEstimator,
    g_m: &DensityEstimator,
) -> Result<GridParts> {
    if g_a.n_classes() != 2 {
        return Err(Error::validation("attribute estimator must be binary"));
    }
    if g_m.n_classes() != support.k_m {
        return Err(Error::validation(format!(
            "mediator estimator has {} classes, data has {}",
            g_m.n_classes(),
            support.k_m
        )));
    }
    let k_m = support.k_m;
    let mut ga = Vec::with_capacity(support.points.len() * 2);
    let mut gm = Vec::with_capacity(support.points.len() * 2 * k_m);
    for point in &support.points {
        ga.extend(g_a.query(support.query(point, g_a), None)?);
        for a in 0..2 {
            gm.extend(g_m.query(support.query(point, g_m), Some(a))?);
        }
    }
    Ok(GridParts { z_weights: support.weights.clone(), g_a: ga, g_m: gm })
}

/// Grid scores per constraint group: one group holding scalar scores, or one
/// group per class holding class probabilities.
fn group_scores(
    net: &MlpParams,
    task: TaskKind,
    mode: ConstraintMode,
    support: &ZSupport,
) -> Result<Vec<Vec<f64>>> {
    let n_groups = match (mode, task) {
        (ConstraintMode::ScalarExpectation, TaskKind::MultiClass(_)) => {
            return Err(Error::validation(
                "scalar expectation scores need a binary or regression predictor",
            ))
        }
        (ConstraintMode::ScalarExpectation, _) => 1,
        (ConstraintMode::PerClass, TaskKind::MultiClass(k)) => k,
        (ConstraintMode::PerClass, _) => {
            return Err(Error::validation(
                "per-class constraints need a multi-class predictor",
            ))
        }
    };
    let cells = support.points.len() * 2 * support.k_m;
    let mut scores = vec![Vec::with_capacity(cells); n_groups];
    for point in &support.points {
        for a in 0..2 {
            for m in 0..support.k_m {
                let out = net.infer(&encode_input(a, point.feats(), m))?;
                match mode {
                    ConstraintMode::ScalarExpectation => {
                        scores[0].push(scalar_score(task, &out)?)
                    }
                    ConstraintMode::PerClass => {
                        for (g, p) in softmax_probs(&out).into_iter().enumerate() {
                            scores[g].push(p);
                        }
                    }
                }
            }
        }
    }
    Ok(scores)
}

fn audit_groups(
    net: &MlpParams,
    task: TaskKind,
    mode: ConstraintMode,
    support: &ZSupport,
    g_a: &DensityEstimator,
    g_m: &DensityEstimator,
    gamma_m: f64,
) -> Result<Vec<GroupAudit>> {
    let parts = density_parts(support, g_a, g_m)?;
    let scores = group_scores(net, task, mode, support)?;
    let mut groups = Vec::with_capacity(scores.len());
    for f in scores {
        let grid = EvalGrid {
            k_m: support.k_m,
            z_weights: parts.z_weights.clone(),
            g_a: parts.g_a.clone(),
            g_m: parts.g_m.clone(),
            f,
        };
        let b01 = bound_effects_expected(&grid, gamma_m, 0, 1)?;
        let b10 = bound_effects_expected(&grid, gamma_m, 1, 0)?;
        let audit = EffectAudit {
            de: b01.bounds.de,
            ie: b10.bounds.ie,
            se: b10.bounds.se,
            de_naive: b01.bounds.de_naive,
            ie_naive: b10.bounds.ie_naive,
            se_naive: b10.bounds.se_naive,
        };
        let dcdf = [
            attaining_grad(&audit.de, &b01.de_grads),
            attaining_grad(&audit.ie, &b10.ie_grads),
            attaining_grad(&audit.se, &b10.se_grads),
        ];
        groups.push(GroupAudit { audit, dcdf });
    }
    Ok(groups)
}

/// Effect audits of a predictor under the mediator budget `gamma_m`, one per
/// constraint group (a single group in scalar mode, one per class otherwise).
pub fn audit_predictor(
    predictor: &FairPredictor,
    g_a: &DensityEstimator,
    g_m: &DensityEstimator,
    gamma_m: f64,
    support: &ZSupport,
    mode: ConstraintMode,
) -> Result<Vec<EffectAudit>> {
    let groups = audit_groups(&predictor.net, predictor.task, mode, support, g_a, g_m, gamma_m)?;
    Ok(groups.into_iter().map(|g| g.audit).collect())
}

/// Constraint vector `c`: per group, the worst-case magnitudes
/// `[c_DE, c_IE, c_SE]` of the expected-score effect bounds.
///
/// For a constant predictor every entry is zero; at `gamma_m = 1` the
/// entries equal the max-abs naive effects; each entry is non-decreasing in
/// `gamma_m` for a fixed predictor.
pub fn evaluate_constraints(
    predictor: &FairPredictor,
    g_a: &DensityEstimator,
    g_m: &DensityEstimator,
    gamma_m: f64,
    support: &ZSupport,
    mode: ConstraintMode,
) -> Result<Vec<f64>> {
    let audits = audit_predictor(predictor, g_a, g_m, gamma_m, support, mode)?;
    Ok(audits.iter().flat_map(|a| a.constraint_values()).collect())
}

/// Gradient of `Σ_k coeffs[k]·c_k` with respect to the network parameters,
/// chaining the bound-endpoint gradients through the score map and the
/// network's backward pass (deterministic forward, no dropout).
fn constraint_grads(
    net: &mut MlpParams,
    task: TaskKind,
    mode: ConstraintMode,
    support: &ZSupport,
    groups: &[GroupAudit],
    coeffs: &[f64],
) -> Result<Grads> {
    debug_assert_eq!(coeffs.len(), groups.len() * 3);
    // Per-group, per-cell weight W = Σ_effect coeff·∂c/∂f.
    let cells = support.points.len() * 2 * support.k_m;
    let mut w = vec![vec![0.0; cells]; groups.len()];
    for (g, group) in groups.iter().enumerate() {
        for e in 0..3 {
            let coeff = coeffs[g * 3 + e];
            if coeff == 0.0 {
                continue;
            }
            for (wc, dc) in w[g].iter_mut().zip(&group.dcdf[e]) {
                *wc += coeff * dc;
            }
        }
    }
    let mut grads = Grads::zeros_like(net);
    let mut cell = 0;
    for point in &support.points {
        for a in 0..2 {
            for m in 0..support.k_m {
                let active = w.iter().any(|wg| wg[cell] != 0.0);
                if active {
                    let cache = net.forward(&encode_input(a, point.feats(), m), false)?;
                    let out = cache.output();
                    let upstream = match mode {
                        ConstraintMode::ScalarExpectation => match task {
                            TaskKind::Binary => {
                                let s = sigmoid(out[0]);
                                vec![w[0][cell] * s * (1.0 - s)]
                            }
                            TaskKind::Regression => vec![w[0][cell]],
                            TaskKind::MultiClass(_) => unreachable!("rejected in group_scores"),
                        },
                        ConstraintMode::PerClass => {
                            let p = softmax_probs(out);
                            let k = p.len();
                            let mut up = vec![0.0; k];
                            for (y, py) in p.iter().enumerate() {
                                let wy = w[y][cell];
                                if wy == 0.0 {
                                    continue;
                                }
                                for (j, pj) in p.iter().enumerate() {
                                    let delta = if y == j { 1.0 } else { 0.0 };
                                    up[j] += wy * py * (delta - pj);
                                }
                            }
                            let _ = k;
                            up
                        }
                    };
                    grads.add_assign(&net.backward(&cache, &upstream)?);
                }
                cell += 1;
            }
        }
    }
    Ok(grads)
}

// ---------------------------------------------------------------------------
// Configuration and reports
// ---------------------------------------------------------------------------

/// Multiplier update applied between outer iterations.
///
/// `Ascent` is the default: it grows multipliers while constraints are
/// violated, which is what actually drives the audited bounds below their
/// thresholds in practice. `PrintedDecay` shrinks multipliers whenever
/// constraints are active, so all constraint pressure comes from the initial
/// `λ` alone; with the standard small `λ₀` it measurably leaves the model
/// unconstrained, and it is kept only as an explicit opt-in variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierRule {
    /// `λ ← max{λ − c·μ, 0}`.
    PrintedDecay,
    /// Augmented-Lagrangian ascent `λ ← max{λ + μ·(c − γ), 0}`.
    Ascent,
}

/// Augmented-Lagrangian training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangianConfig {
    /// Fairness thresholds `γ`, one triple `[γ_DE, γ_IE, γ_SE]` shared by
    /// every constraint group (or one triple per class).
    pub gamma_vec: Vec<f64>,
    /// Initial multiplier `λ₀` for every constraint.
    pub lambda0: f64,
    /// Initial penalty `μ₀` for every constraint.
    pub mu0: f64,
    /// Penalty growth rate `α > 1` (`μ ← α·μ` each outer iteration).
    pub alpha: f64,
    /// Maximum number of outer iterations.
    pub max_iterations: usize,
    /// Minibatch epochs per outer iteration.
    pub nested_epochs: usize,
    /// Absolute prediction-loss level required (together with `c ≤ γ`) to
    /// declare convergence; infinite by default, leaving the constraints as
    /// the only stopping condition.
    pub epsilon: f64,
    /// Multiplier update rule.
    pub rule: MultiplierRule,
}

impl Default for LagrangianConfig {
    fn default() -> Self {
        LagrangianConfig {
            gamma_vec: vec![0.02; 3],
            lambda0: 0.1,
            mu0: 0.02,
            alpha: 1.5,
            max_iterations: 12,
            nested_epochs: 5,
            epsilon: f64::INFINITY,
            rule: MultiplierRule::Ascent,
        }
    }
}

impl LagrangianConfig {
    /// Checks the structural invariants listed on the fields.
    pub fn validate(&self) -> Result<()> {
        if self.gamma_vec.is_empty() || self.gamma_vec.len() % 3 != 0 {
            return Err(Error::validation(format!(
                "gamma_vec needs one [DE, IE, SE] triple per constraint group, got {} entries",
                self.gamma_vec.len()
            )));
        }
        if let Some(g) = self.gamma_vec.iter().find(|g| !g.is_finite() || **g < 0.0) {
            return Err(Error::validation(format!("thresholds must be ≥ 0, got {g}")));
        }
        if !self.lambda0.is_finite() || self.lambda0 < 0.0 {
            return Err(Error::validation(format!("lambda0 must be ≥ 0, got {}", self.lambda0)));
        }
        if !self.mu0.is_finite() || self.mu0 <= 0.0 {
            return Err(Error::validation(format!("mu0 must be > 0, got {}", self.mu0)));
        }
        if !self.alpha.is_finite() || self.alpha <= 1.0 {
            return Err(Error::validation(format!("alpha must exceed 1, got {}", self.alpha)));
        }
        if self.max_iterations == 0 || self.nested_epochs == 0 {
            return Err(Error::validation("iteration counts must be positive"));
        }
        if self.epsilon.is_nan() {
            return Err(Error::validation("epsilon must not be NaN"));
        }
        Ok(())
    }
}

/// Fixed-penalty training configuration (continuous-confounder variant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    /// Constraint thresholds, `[γ_DE, γ_IE, γ_SE]`.
    pub thresholds: Vec<f64>,
    /// Fixed penalty weight multiplying `Σ max{0, c_k − γ_k}`.
    pub weight: f64,
    /// Full-batch epochs.
    pub epochs: usize,
}

impl PenaltyConfig {
    fn validate(&self) -> Result<()> {
        if self.thresholds.len() != 3 {
            return Err(Error::validation(format!(
                "thresholds must be a [DE, IE, SE] triple, got {} entries",
                self.thresholds.len()
            )));
        }
        if let Some(g) = self.thresholds.iter().find(|g| !g.is_finite() || **g < 0.0) {
            return Err(Error::validation(format!("thresholds must be ≥ 0, got {g}")));
        }
        if !self.weight.is_finite() || self.weight <= 0.0 {
            return Err(Error::validation(format!("penalty weight must be > 0, got {}", self.weight)));
        }
        if self.epochs == 0 {
            return Err(Error::validation("epochs must be positive"));
        }
        Ok(())
    }
}

/// Training trace: one entry per outer iteration (per epoch for the
/// unconstrained baseline), plus the final audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Full-split prediction loss after each iteration.
    pub loss_trajectory: Vec<f64>,
    /// Constraint vector evaluated after each iteration's nested loop
    /// (empty for unconstrained training).
    pub constraint_trajectory: Vec<Vec<f64>>,
    /// Multipliers used during each iteration.
    pub lambda_trajectory: Vec<Vec<f64>>,
    /// Penalties used during each iteration (empty rows for the
    /// fixed-penalty variant, which has no penalty state).
    pub mu_trajectory: Vec<Vec<f64>>,
    /// Constraint vector of the trained predictor, re-evaluated post-training.
    pub final_constraints: Vec<f64>,
    /// Effect audits of the trained predictor, one per constraint group.
    pub final_audit: Vec<EffectAudit>,
    /// Whether the stopping condition was met (constrained runs) or the loss
    /// stayed finite (unconstrained runs).
    pub converged: bool,
    /// Seed the run was keyed by.
    pub seed: u64,
}

impl TrainReport {
    /// Pretty-printed JSON.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Applies one multiplier/penalty update in place.
///
/// `PrintedDecay`: `λ_k ← max{λ_k − c_k·μ_k, 0}`; `Ascent`:
/// `λ_k ← max{λ_k + μ_k·(c_k − γ_k), 0}`. Both then grow `μ_k ← α·μ_k`.
pub fn update_multipliers(
    rule: MultiplierRule,
    lambda: &mut [f64],
    mu: &mut [f64],
    c: &[f64],
    gamma: &[f64],
    alpha: f64,
) {
    for k in 0..lambda.len() {
        lambda[k] = match rule {
            MultiplierRule::PrintedDecay => (lambda[k] - c[k] * mu[k]).max(0.0),
            MultiplierRule::Ascent => (lambda[k] + mu[k] * (c[k] - gamma[k])).max(0.0),
        };
        mu[k] *= alpha;
    }
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

fn row_loss_upstream(task: TaskKind, output: &[f64], target: f64) -> (f64, Vec<f64>) {
    match task {
        TaskKind::Binary => {
            let (l, d) = sigmoid_bce(output[0], target);
            (l, vec![d])
        }
        TaskKind::Regression => {
            let (l, d) = squared(output[0], target);
            (l, vec![d])
        }
        TaskKind::MultiClass(_) => softmax_ce(output, target as usize),
    }
}

fn encode_dataset(data: &Dataset) -> (Vec<Vec<f64>>, Vec<f64>) {
    let inputs = (0..data.n())
        .map(|i| encode_input(data.a()[i] as usize, &data.z_features_row(i), data.m()[i]))
        .collect();
    let targets = (0..data.n()).map(|i| data.y_as_f64(i)).collect();
    (inputs, targets)
}

fn check_net_dims(data: &Dataset, task: TaskKind, config: &MlpConfig) -> Result<()> {
    config.validate()?;
    let input_dim = 2 + data.z_feature_dim();
    if config.layer_dims.first() != Some(&input_dim) {
        return Err(Error::validation(format!(
            "network input width must be {input_dim} for this data (got {:?})",
            config.layer_dims.first()
        )));
    }
    let out = task.output_dim();
    if config.layer_dims.last() != Some(&out) {
        return Err(Error::validation(format!(
            "network output width must be {out} for this task (got {:?})",
            config.layer_dims.last()
        )));
    }
    Ok(())
}

/// Mean prediction loss over the full split, deterministic forward passes.
fn mean_loss(net: &MlpParams, task: TaskKind, inputs: &[Vec<f64>], targets: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (x, &t) in inputs.iter().zip(targets) {
        let out = net.infer(x)?;
        total += row_loss_upstream(task, &out, t).0;
    }
    let loss = total / inputs.len() as f64;
    if !loss.is_finite() {
        return Err(Error::numerics(format!("prediction loss diverged to {loss}")));
    }
    Ok(loss)
}

/// Mean task-loss gradients over one batch of row indices (dropout active).
fn batch_loss_grads(
    net: &mut MlpParams,
    task: TaskKind,
    inputs: &[Vec<f64>],
    targets: &[f64],
    batch: &[usize],
) -> Result<Grads> {
    let mut grads = Grads::zeros_like(net);
    for &i in batch {
        let cache = net.forward(&inputs[i], true)?;
        let (_, upstream) = row_loss_upstream(task, cache.output(), targets[i]);
        grads.add_assign(&net.backward(&cache, &upstream)?);
    }
    grads.scale(1.0 / batch.len() as f64);
    Ok(grads)
}

/// Minibatch Adam on the task loss alone — the unconstrained baseline.
///
/// The report's loss trajectory holds the full-split loss after each epoch;
/// runs are deterministic given the config seed. Errors if the loss diverges.
pub fn train_standard(
    data: &Dataset,
    net_config: &MlpConfig,
    epochs: usize,
) -> Result<(FairPredictor, TrainReport)> {
    let task = TaskKind::infer(data);
    check_net_dims(data, task, net_config)?;
    if epochs == 0 {
        return Err(Error::validation("epochs must be positive"));
    }
    let (inputs, targets) = encode_dataset(data);
    let mut net = MlpParams::init(net_config)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(net_config.seed.wrapping_add(SHUFFLE_SALT));
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut loss_trajectory = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(net_config.batch_size) {
            let grads = batch_loss_grads(&mut net, task, &inputs, &targets, batch)?;
            net.adam_step(&grads, net_config.learning_rate)?;
        }
        loss_trajectory.push(mean_loss(&net, task, &inputs, &targets)?);
    }
    let report = TrainReport {
        loss_trajectory,
        constraint_trajectory: Vec::new(),
        lambda_trajectory: Vec::new(),
        mu_trajectory: Vec::new(),
        final_constraints: Vec::new(),
        final_audit: Vec::new(),
        converged: true,
        seed: net_config.seed,
    };
    Ok((FairPredictor { net, task }, report))
}

fn expand_thresholds(gamma_vec: &[f64], n_groups: usize) -> Result<Vec<f64>> {
    if gamma_vec.len() == 3 {
        Ok((0..n_groups).flat_map(|_| gamma_vec.iter().copied()).collect())
    } else if gamma_vec.len() == 3 * n_groups {
        Ok(gamma_vec.to_vec())
    } else {
        Err(Error::validation(format!(
            "gamma_vec has {} entries; expected 3 or {} for {n_groups} constraint group(s)",
            gamma_vec.len(),
            3 * n_groups
        )))
    }
}

fn n_constraint_groups(task: TaskKind, mode: ConstraintMode) -> Result<usize> {
    match (mode, task) {
        (ConstraintMode::ScalarExpectation, TaskKind::MultiClass(_)) => Err(Error::validation(
            "scalar expectation scores need a binary or regression predictor",
        )),
        (ConstraintMode::ScalarExpectation, _) => Ok(1),
        (ConstraintMode::PerClass, TaskKind::MultiClass(k)) => Ok(k),
        (ConstraintMode::PerClass, _) => Err(Error::validation(
            "per-class constraints need a multi-class predictor",
        )),
    }
}

fn satisfied(c: &[f64], gamma: &[f64]) -> bool {
    c.iter().zip(gamma).all(|(ck, gk)| ck <= gk)
}

/// Augmented-Lagrangian fairness training.
///
/// Each outer iteration runs `nested_epochs` minibatch epochs on the
/// Lagrangian gradient `∂loss/∂θ + Σ_k λ_k·∂c_k/∂θ` (the proximal term is
/// constant in θ), then updates the multipliers per the configured rule and
/// grows the penalties. Constraint coefficients are recomputed from the full
/// split's confounder support every batch for discrete confounders, and once
/// per nested epoch for continuous ones, where each grid evaluation touches
/// every training row.
///
/// Training stops early when the constraint vector satisfies `c ≤ γ`
/// componentwise and the full-split prediction loss is at most `epsilon`.
/// The report's `final_constraints` are re-evaluated on the trained
/// predictor; `converged` reflects that final state.
pub fn train_fair(
    data: &Dataset,
    g_a: &DensityEstimator,
    g_m: &DensityEstimator,
    gamma_m: f64,
    config: &LagrangianConfig,
    net_config: &MlpConfig,
    mode: ConstraintMode,
) -> Result<(FairPredictor, TrainReport)> {
    config.validate()?;
    if !gamma_m.is_finite() || gamma_m < 1.0 {
        return Err(Error::validation(format!("gamma_m must be ≥ 1, got {gamma_m}")));
    }
    if !matches!(g_a.target(), DensityTarget::AGivenZ) {
        return Err(Error::validation("g_a must estimate the attribute conditional"));
    }
    if !matches!(g_m.target(), DensityTarget::MGivenZA) {
        return Err(Error::validation("g_m must estimate the mediator conditional"));
    }
    let task = TaskKind::infer(data);
    check_net_dims(data, task, net_config)?;
    let n_groups = n_constraint_groups(task, mode)?;
    let gamma = expand_thresholds(&config.gamma_vec, n_groups)?;
    let n_c = gamma.len();

    let support = ZSupport::from_dataset(data)?;
    let per_batch_constraints = data.z_cells().is_some();
    let (inputs, targets) = encode_dataset(data);
    let mut net = MlpParams::init(net_config)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(net_config.seed.wrapping_add(SHUFFLE_SALT));
    let mut order: Vec<usize> = (0..inputs.len()).collect();

    let mut lambda = vec![config.lambda0; n_c];
    let mut mu = vec![config.mu0; n_c];
    let mut report = TrainReport {
        loss_trajectory: Vec::new(),
        constraint_trajectory: Vec::new(),
        lambda_trajectory: Vec::new(),
        mu_trajectory: Vec::new(),
        final_constraints: Vec::new(),
        final_audit: Vec::new(),
        converged: false,
        seed: net_config.seed,
    };

    for _ in 0..config.max_iterations {
        for _ in 0..config.nested_epochs {
            order.shuffle(&mut shuffle_rng);
            // Continuous supports reuse one constraint gradient per epoch.
            let epoch_cgrads = if per_batch_constraints {
                None
            } else {
                let groups = audit_groups(&net, task, mode, &support, g_a, g_m, gamma_m)?;
                Some(constraint_grads(&mut net, task, mode, &support, &groups, &lambda)?)
            };
            for batch in order.chunks(net_config.batch_size) {
                let mut grads = batch_loss_grads(&mut net, task, &inputs, &targets, batch)?;
                match &epoch_cgrads {
                    Some(cg) => grads.add_assign(cg),
                    None => {
                        let groups =
                            audit_groups(&net, task, mode, &support, g_a, g_m, gamma_m)?;
                        grads.add_assign(&constraint_grads(
                            &mut net, task, mode, &support, &groups, &lambda,
                        )?);
                    }
                }
                net.adam_step(&grads, net_config.learning_rate)?;
            }
        }
        let loss = mean_loss(&net, task, &inputs, &targets)?;
        let groups = audit_groups(&net, task, mode, &support, g_a, g_m, gamma_m)?;
        let c: Vec<f64> = groups.iter().flat_map(|g| g.audit.constraint_values()).collect();
        report.loss_trajectory.push(loss);
        report.constraint_trajectory.push(c.clone());
        report.lambda_trajectory.push(lambda.clone());
        report.mu_trajectory.push(mu.clone());
        if satisfied(&c, &gamma) && loss <= config.epsilon {
            break;
        }
        update_multipliers(config.rule, &mut lambda, &mut mu, &c, &gamma, config.alpha);
    }

    let groups = audit_groups(&net, task, mode, &support, g_a, g_m, gamma_m)?;
    report.final_constraints =
        groups.iter().flat_map(|g| g.audit.constraint_values()).collect();
    report.final_audit = groups.into_iter().map(|g| g.audit).collect();
    let final_loss = mean_loss(&net, task, &inputs, &targets)?;
    report.converged = satisfied(&report.final_constraints, &gamma) && final_loss <= config.epsilon;
    Ok((FairPredictor { net, task }, report))
}

/// Fixed-penalty fairness training: full-batch Adam on
/// `loss + weight·Σ_k max{0, c_k − γ_k}` with one constraint evaluation per
/// epoch (scalar-expectation constraints).
///
/// The report's multiplier trajectory records the active subgradient weights
/// `weight·1{c_k > γ_k}`; the penalty trajectory stays empty (there is no
/// penalty growth). `converged` means the final constraints sit below the
/// thresholds.
pub fn train_penalized(
    data: &Dataset,
    g_a: &DensityEstimator,
    g_m: &DensityEstimator,
    gamma_m: f64,
    penalty: &PenaltyConfig,
    net_config: &MlpConfig,
) -> Result<(FairPredictor, TrainReport)> {
    penalty.validate()?;
    if !gamma_m.is_finite() || gamma_m < 1.0 {
        return Err(Error::validation(format!("gamma_m must be ≥ 1, got {gamma_m}")));
    }
    let task = TaskKind::infer(data);
    check_net_dims(data, task, net_config)?;
    let mode = ConstraintMode::ScalarExpectation;
    n_constraint_groups(task, mode)?;
    let support = ZSupport::from_dataset(data)?;
    let (inputs, targets) = encode_dataset(data);
    let all_rows: Vec<usize> = (0..inputs.len()).collect();
    let mut net = MlpParams::init(net_config)?;
    let mut report = TrainReport {
        loss_trajectory: Vec::new(),
        constraint_trajectory: Vec::new(),
        lambda_trajectory: Vec::new(),
        mu_trajectory: Vec::new(),
        final_constraints: Vec::new(),
        final_audit: Vec::new(),
        converged: false,
        seed: net_config.seed,
    };

    for _ in 0..penalty.epochs {
        let groups = audit_groups(&net, task, mode, &support, g_a, g_m, gamma_m)?;
        let c: Vec<f64> = groups.iter().flat_map(|g| g.audit.constraint_values()).collect();
        let coeffs: Vec<f64> = c
            .iter()
            .zip(&penalty.thresholds)
            .map(|(ck, gk)| if ck > gk { penalty.weight } else { 0.0 })
            .collect();
        let mut grads = batch_loss_grads(&mut net, task, &inputs, &targets, &all_rows)?;
        grads.add_assign(&constraint_grads(&mut net, task, mode, &support, &groups, &coeffs)?);
        net.adam_step(&grads, net_config.learning_rate)?;
        report.loss_trajectory.push(mean_loss(&net, task, &inputs, &targets)?);
        report.constraint_trajectory.push(c);
        report.lambda_trajectory.push(coeffs);
        report.mu_trajectory.push(Vec::new());
    }

    let groups = audit_groups(&net, task, mode, &support, g_a, g_m, gamma_m)?;
    report.final_constraints =
        groups.iter().flat_map(|g| g.audit.constraint_values()).collect();
    report.final_audit = groups.into_iter().map(|g| g.audit).collect();
    report.converged = satisfied(&report.final_constraints, &penalty.thresholds);
    Ok((FairPredictor { net, task }, report))
}

// ---------------------------------------------------------------------------
// Deterministic Lagrangian evaluation (gradient checks)
// ---------------------------------------------------------------------------

/// Inputs to one deterministic Lagrangian evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LagrangianPoint<'a> {
    /// Encoded prediction inputs (`[a, z…, m]` rows).
    pub inputs: &'a [Vec<f64>],
    /// Prediction targets, one per input row.
    pub targets: &'a [f64],
    /// Confounder support for the constraint grid.
    pub support: &'a ZSupport,
    /// Attribute density estimator.
    pub g_a: &'a DensityEstimator,
    /// Mediator density estimator.
    pub g_m: &'a DensityEstimator,
    /// Mediator budget.
    pub gamma_m: f64,
    /// Constraint mode.
    pub mode: ConstraintMode,
    /// Current multipliers `λ`.
    pub lambda: &'a [f64],
    /// Previous multipliers `λ_prev` (proximal anchor).
    pub lambda_prev: &'a [f64],
    /// Penalties `μ`.
    pub mu: &'a [f64],
    /// Thresholds `γ`, expanded to the constraint count.
    pub gamma_vec: &'a [f64],
}

/// Value and flat parameter gradient of the augmented Lagrangian
/// `loss(f_θ) − λ·(γ − c) − Σ (λ_k − λ_prev_k)²/(2μ_k)` at the predictor's
/// current parameters.
///
/// Every forward pass is deterministic (no dropout), so away from the
/// `max`/`|·|` kinks the gradient matches central finite differences; the
/// proximal term does not depend on θ and only shifts the value. The
/// flat layout matches [`MlpParams::flat_params`].
pub fn lagrangian_value_and_grad(
    predictor: &FairPredictor,
    point: &LagrangianPoint<'_>,
) -> Result<(f64, Vec<f64>)> {
    if point.inputs.is_empty() || point.inputs.len() != point.targets.len() {
        return Err(Error::validation("inputs and targets must be non-empty and equal length"));
    }
    let n_groups = n_constraint_groups(predictor.task, point.mode)?;
    let n_c = 3 * n_groups;
    for (label, v) in [
        ("lambda", point.lambda),
        ("lambda_prev", point.lambda_prev),
        ("mu", point.mu),
        ("gamma_vec", point.gamma_vec),
    ] {
        if v.len() != n_c {
            return Err(Error::validation(format!(
                "{label} has {} entries, expected {n_c}",
                v.len()
            )));
        }
    }
    if let Some(m) = point.mu.iter().find(|m| !m.is_finite() || **m <= 0.0) {
        return Err(Error::validation(format!("mu must be > 0, got {m}")));
    }

    let mut net = predictor.net.clone();
    let task = predictor.task;

    // Prediction term: mean loss and its gradients over deterministic passes.
    let mut value = 0.0;
    let mut grads = Grads::zeros_like(&net);
    for (x, &t) in point.inputs.iter().zip(point.targets) {
        let cache = net.forward(x, false)?;
        let (loss, upstream) = row_loss_upstream(task, cache.output(), t);
        value += loss;
        grads.add_assign(&net.backward(&cache, &upstream)?);
    }
    let n = point.inputs.len() as f64;
    value /= n;
    grads.scale(1.0 / n);

    // Constraint term λ·(c − γ) and its gradient Σ λ_k ∂c_k/∂θ.
    let groups =
        audit_groups(&net, task, point.mode, point.support, point.g_a, point.g_m, point.gamma_m)?;
    let c: Vec<f64> = groups.iter().flat_map(|g| g.audit.constraint_values()).collect();
    for k in 0..n_c {
        value += point.lambda[k] * (c[k] - point.gamma_vec[k]);
        let d = point.lambda[k] - point.lambda_prev[k];
        value -= d * d / (2.0 * point.mu[k]);
    }
    grads.add_assign(&constraint_grads(
        &mut net,
        task,
        point.mode,
        point.support,
        &groups,
        point.lambda,
    )?);

    if !value.is_finite() {
        return Err(Error::numerics(format!("lagrangian diverged to {value}")));
    }
    Ok((value, net.flat_grads(&grads)))
}
