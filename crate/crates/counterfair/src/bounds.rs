//! Sharp sensitivity shifts and partial-identification bounds for the three
//! path-specific fairness effects.
//!
//! Under a marginal sensitivity budget `Γ ≥ 1` the odds of receiving
//! treatment may deviate from the observed propensity by at most a factor
//! `Γ` once an unobserved confounder is conditioned on. Every distribution
//! compatible with that budget is a reweighting of the observed conditional
//! whose density ratio lies in `[w_lo, w_hi]` with
//!
//! ```text
//! w_lo = (1 − Γ⁻¹)·P(a|z) + Γ⁻¹  ≤ 1,
//! w_hi = (1 − Γ)·P(a|z)  + Γ     ≥ 1.
//! ```
//!
//! The extremal reweighting concentrates `w_hi` on the tail of the outcome
//! ordering and `w_lo` on the head (or vice versa), switching at the CDF
//! quantile `τ = Γ/(1+Γ)` for the upper shift and `τ′ = 1/(1+Γ)` for the
//! lower; a category straddling the quantile splits its mass across the two
//! factors, so the shifted vector is again a probability distribution.
//!
//! On top of the shifts this module assembles closed-form interval bounds
//! `[CF⁻, CF⁺]` for the direct (DE), indirect (IE), and spurious (SE) effects
//! of a binary attribute, both for observed-outcome queries on fitted tables
//! ([`bound_effects`]) and for a substituted predictor score evaluated over a
//! grid of `(a, z, m)` points ([`bound_effects_expected`], which also returns
//! the exact gradient of every endpoint with respect to the scores). The
//! factual-average contrast ([`bound_face`]) and per-confounder-cell path
//! contrast ([`bound_individual_path`]) cover outcome-level audits, including
//! continuous outcomes via per-cell empirical sample weights.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::estimation::ObsTables;
use crate::model::{EffectBounds, Interval, SensitivityParams, TargetY};

/// Direction of an extremal sensitivity shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShiftDirection {
    /// Maximize the target functional (`P⁺` / `E⁺`).
    Upper,
    /// Minimize the target functional (`P⁻` / `E⁻`).
    Lower,
}

/// Category ordering used when a shift is composed with an integrand.
///
/// The extremal reweighting is a fractional-knapsack solution: it is only
/// guaranteed to bound `Σ_m q(m)·P′(m)` when categories are sorted ascending
/// by the integrand `q`. `ValueSorted` performs that sort internally and is
/// the default everywhere bounds are assembled. `Natural` keeps the raw label
/// order (the classical CDF convention); it can produce inverted endpoints on
/// anti-monotone integrands, which surfaces as a numerics error rather than a
/// silently wrong interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MOrdering {
    /// Sort categories ascending by the integrand before shifting (sharp).
    #[default]
    ValueSorted,
    /// Keep the raw label order; errors if the endpoints invert.
    Natural,
}

impl MOrdering {
    /// Permutation to hand to [`shift_discrete`] for integrand `q`.
    fn permutation(&self, q: &[f64]) -> Option<Vec<usize>> {
        match self {
            MOrdering::ValueSorted => Some(argsort_ascending(q)),
            MOrdering::Natural => None,
        }
    }
}

/// Result of a discrete extremal shift: the shifted probability vector (in
/// the original category order) plus the quantile and weight pair that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftedPmf {
    /// Shifted probabilities, indexed like the input pmf; sums to one.
    pub weights: Vec<f64>,
    /// CDF quantile where the reweighting factor switches.
    pub tau: f64,
    /// Low factor `(1 − Γ⁻¹)·p + Γ⁻¹`.
    pub w_lo: f64,
    /// High factor `(1 − Γ)·p + Γ`.
    pub w_hi: f64,
}

/// Stable argsort, ascending.
fn argsort_ascending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal)
    });
    idx
}

fn validate_gamma(gamma: f64) -> Result<()> {
    if !gamma.is_finite() || gamma < 1.0 {
        return Err(Error::validation(format!("gamma must be a finite value ≥ 1, got {gamma}")));
    }
    Ok(())
}

fn validate_treat_prob(p: f64) -> Result<()> {
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!("treatment probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Reweighting factors for one shift: `(below, above)` are the density-ratio
/// factors applied below and above the switching quantile `tau`.
fn shift_factors(treat_prob: f64, gamma: f64, dir: ShiftDirection) -> (f64, f64, f64, f64, f64) {
    let w_lo = (1.0 - 1.0 / gamma) * treat_prob + 1.0 / gamma;
    let w_hi = (1.0 - gamma) * treat_prob + gamma;
    match dir {
        ShiftDirection::Upper => (w_lo, w_hi, gamma / (1.0 + gamma), w_lo, w_hi),
        ShiftDirection::Lower => (w_lo, w_hi, 1.0 / (1.0 + gamma), w_hi, w_lo),
    }
}

/// Extremal shift of a discrete probability vector under budget `gamma`.
///
/// `pmf` must be non-negative and sum to one (tolerance `1e-6`); `treat_prob`
/// is the observed propensity `P(a|z)` of the conditioning attribute;
/// `ordering`, when given, is a permutation listing categories in the CDF
/// order the shift should walk (defaults to the natural label order). The
/// category straddling the switching quantile splits its mass between the
/// two factors, so the output sums to one exactly (up to float error) for
/// every `gamma` and `treat_prob`.
///
/// `gamma = 1` or `treat_prob = 1` collapse both directions to the identity.
pub fn shift_discrete(
    pmf: &[f64],
    treat_prob: f64,
    gamma: f64,
    dir: ShiftDirection,
    ordering: Option<&[usize]>,
) -> Result<ShiftedPmf> {
    validate_treat_prob(treat_prob)?;
    validate_gamma(gamma)?;
    if pmf.is_empty() {
        return Err(Error::validation("pmf must have at least one category"));
    }
    let mut total = 0.0;
    for (i, &v) in pmf.iter().enumerate() {
        if !v.is_finite() || v < -1e-9 {
            return Err(Error::validation(format!("pmf[{i}] = {v} is not a probability")));
        }
        total += v.max(0.0);
    }
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::validation(format!("pmf is not normalized: sums to {total}")));
    }
    let order: Vec<usize> = match ordering {
        Some(ord) => {
            if ord.len() != pmf.len() {
                return Err(Error::validation(format!(
                    "ordering has {} entries for a pmf of {} categories",
                    ord.len(),
                    pmf.len()
                )));
            }
            let mut seen = vec![false; pmf.len()];
            for &i in ord {
                if i >= pmf.len() || seen[i] {
                    return Err(Error::validation("ordering is not a permutation of the categories"));
                }
                seen[i] = true;
            }
            ord.to_vec()
        }
        None => (0..pmf.len()).collect(),
    };
    let (w_lo, w_hi, tau, below, above) = shift_factors(treat_prob, gamma, dir);
    let mut weights = vec![0.0; pmf.len()];
    if gamma == 1.0 || treat_prob == 1.0 {
        for (w, &v) in weights.iter_mut().zip(pmf) {
            *w = v.max(0.0);
        }
        return Ok(ShiftedPmf { weights, tau, w_lo, w_hi });
    }
    let mut cdf_prev = 0.0;
    for (pos, &cat) in order.iter().enumerate() {
        let mass = pmf[cat].max(0.0);
        // Pin the final CDF point to the measured total so float drift in the
        // partial sums cannot leave the last category marginally short.
        let cdf = if pos + 1 == order.len() { total } else { cdf_prev + mass };
        weights[cat] = if cdf <= tau {
            below * mass
        } else if cdf_prev >= tau {
            above * mass
        } else {
            below * (tau - cdf_prev) + above * (cdf - tau)
        };
        cdf_prev = cdf;
    }
    Ok(ShiftedPmf { weights, tau, w_lo, w_hi })
}

/// Sharp extremal shift of a single class probability `q`.
///
/// Equivalent to [`shift_discrete`] on the two-point vector `{1−q, q}` with
/// the target class last in the CDF order (the order that makes the single
/// class extremal), read off at the target class:
///
/// ```text
/// P⁺(q) = w_hi·q                          if q ≤ 1/(1+Γ)
///       = w_lo·(q − 1/(1+Γ)) + w_hi/(1+Γ) otherwise,
/// P⁻(q) = w_lo·q                          if q ≤ Γ/(1+Γ)
///       = w_hi·(q − Γ/(1+Γ)) + w_lo·Γ/(1+Γ) otherwise.
/// ```
///
/// Fixes `q = 0` and `q = 1` for every budget.
pub fn shift_class_prob(q: f64, treat_prob: f64, gamma: f64, dir: ShiftDirection) -> Result<f64> {
    validate_treat_prob(treat_prob)?;
    validate_gamma(gamma)?;
    if !q.is_finite() || !(-1e-9..=1.0 + 1e-9).contains(&q) {
        return Err(Error::validation(format!("class probability must lie in [0, 1], got {q}")));
    }
    let q = q.clamp(0.0, 1.0);
    if gamma == 1.0 || treat_prob == 1.0 || q == 0.0 || q == 1.0 {
        return Ok(q);
    }
    let w_lo = (1.0 - 1.0 / gamma) * treat_prob + 1.0 / gamma;
    let w_hi = (1.0 - gamma) * treat_prob + gamma;
    let shifted = match dir {
        ShiftDirection::Upper => {
            let head = 1.0 / (1.0 + gamma);
            if q <= head {
                w_hi * q
            } else {
                w_lo * (q - head) + w_hi * head
            }
        }
        ShiftDirection::Lower => {
            let head = gamma / (1.0 + gamma);
            if q <= head {
                w_lo * q
            } else {
                w_hi * (q - head) + w_lo * head
            }
        }
    };
    Ok(shifted.clamp(0.0, 1.0))
}

/// Extremal per-sample weights for a continuous outcome cell.
///
/// `samples` must be sorted ascending; sample `i` of `n` represents the
/// empirical CDF block `[i/n, (i+1)/n]`, and its weight is the average
/// reweighting factor over that block (so a block straddling the switching
/// quantile mixes the two factors). Weights average to one, and the weighted
/// mean `Σ wᵢ·yᵢ / n` is the extremal conditional expectation.
pub fn shift_continuous_weights(
    samples: &[f64],
    treat_prob: f64,
    gamma: f64,
    dir: ShiftDirection,
) -> Result<Vec<f64>> {
    validate_treat_prob(treat_prob)?;
    validate_gamma(gamma)?;
    if samples.is_empty() {
        return Err(Error::validation("cannot shift an empty sample cell"));
    }
    for w in samples.windows(2) {
        if !(w[0] <= w[1]) {
            return Err(Error::validation("samples must be sorted ascending"));
        }
    }
    if !samples.iter().all(|v| v.is_finite()) {
        return Err(Error::validation("samples must be finite"));
    }
    let n = samples.len();
    if gamma == 1.0 || treat_prob == 1.0 {
        return Ok(vec![1.0; n]);
    }
    let (_, _, tau, below, above) = shift_factors(treat_prob, gamma, dir);
    let nf = n as f64;
    let weights = (0..n)
        .map(|i| {
            let lo = i as f64 / nf;
            let hi = (i + 1) as f64 / nf;
            let below_mass = (tau.min(hi) - lo).max(0.0);
            let above_mass = (hi - tau.max(lo)).max(0.0);
            (below * below_mass + above * above_mass) * nf
        })
        .collect();
    Ok(weights)
}

// ---------------------------------------------------------------------------
// Table-based effect bounds (observed discrete outcome).
// ---------------------------------------------------------------------------

/// Shifted/unshifted outcome factors `q(m) = P(y|m,z,a)` for one `(z, a)`.
struct YFactors {
    flat: Vec<f64>,
    up: Vec<f64>,
    down: Vec<f64>,
}

fn y_factors(tables: &ObsTables, z: usize, a: usize, y: usize, gamma_y: f64) -> Result<YFactors> {
    let treat = tables.p_a_given_z(z, a);
    let k_m = tables.k_m();
    let mut flat = Vec::with_capacity(k_m);
    let mut up = Vec::with_capacity(k_m);
    let mut down = Vec::with_capacity(k_m);
    for m in 0..k_m {
        let q = tables.p_y_given_mza(y, m, z, a);
        flat.push(q);
        up.push(shift_class_prob(q, treat, gamma_y, ShiftDirection::Upper)?);
        down.push(shift_class_prob(q, treat, gamma_y, ShiftDirection::Lower)?);
    }
    Ok(YFactors { flat, up, down })
}

/// `Σ_m q(m)·P±(m|z,a_m)` with the mediator pmf shifted in `dir` under
/// `gamma_m`, walking the CDF in `ordering` order of `q`.
fn shifted_msum(
    tables: &ObsTables,
    z: usize,
    a_m: usize,
    q: &[f64],
    gamma_m: f64,
    dir: ShiftDirection,
    ordering: MOrdering,
) -> Result<f64> {
    let pmf: Vec<f64> = (0..tables.k_m()).map(|m| tables.p_m_given_za(z, a_m, m)).collect();
    let treat = tables.p_a_given_z(z, a_m);
    let perm = ordering.permutation(q);
    let shifted = shift_discrete(&pmf, treat, gamma_m, dir, perm.as_deref())?;
    Ok(dot(q, &shifted.weights))
}

/// Plain `Σ_m q(m)·P(m|z,a_m)`.
fn flat_msum(tables: &ObsTables, z: usize, a_m: usize, q: &[f64]) -> f64 {
    (0..tables.k_m()).map(|m| q[m] * tables.p_m_given_za(z, a_m, m)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn validate_attr_pair(a_i: u8, a_j: u8) -> Result<()> {
    for (label, a) in [("a_i", a_i), ("a_j", a_j)] {
        if a > 1 {
            return Err(Error::validation(format!("{label} must be 0 or 1, got {a}")));
        }
    }
    Ok(())
}

fn validate_attr_masses(tables: &ObsTables, a_i: u8, a_j: u8) -> Result<()> {
    for a in [a_i, a_j] {
        let p = tables.p_a(a as usize);
        if p < 1e-6 {
            return Err(Error::numerics(format!(
                "attribute arm a={a} has probability {p} < 1e-6; bounds would divide by it"
            )));
        }
    }
    Ok(())
}

fn validate_class_target(tables: &ObsTables, y: usize) -> Result<usize> {
    let k_y = tables.k_y().ok_or_else(|| {
        Error::validation("class-probability bounds need a discrete outcome; this dataset has a continuous Y")
    })?;
    if y >= k_y {
        return Err(Error::validation(format!("outcome class {y} out of range for {k_y} classes")));
    }
    Ok(k_y)
}

/// Build an interval, attributing an inversion to the natural ordering when
/// that mode was requested.
fn make_interval(lo: f64, hi: f64, ordering: MOrdering) -> Result<Interval> {
    // Absorb sub-epsilon inversions left over from float accumulation.
    let tol = 1e-9 * lo.abs().max(hi.abs()).max(1.0);
    if lo > hi && lo - hi <= tol {
        return Interval::new(hi, lo);
    }
    match Interval::new(lo, hi) {
        Ok(iv) => Ok(iv),
        Err(e) if ordering == MOrdering::Natural => Err(Error::numerics(format!(
            "natural category ordering produced inverted endpoints ({e}); \
             the natural CDF walk is not extremal for this integrand — use value-sorted ordering"
        ))),
        Err(e) => Err(e),
    }
}

/// Bounds on the single-intervention counterfactual `P(y_{a_i} | a_j)`: the
/// probability that the outcome takes class `y` had everyone received
/// attribute `a_i`, among the group observed with `a_j`.
///
/// Closed form: `(1/P(a_j)) Σ_{z,m} P±(y|m,z,a_i)·P±(m|z,a_i)·P(z) −
/// (P(a_i)/P(a_j))·P(y|a_i)`. With `a_i = a_j` the quantity is observed
/// directly (consistency) and the plug-in `P(y|a_i)` is returned for either
/// direction.
pub fn bound_counterfactual_single(
    tables: &ObsTables,
    params: &SensitivityParams,
    y: usize,
    a_i: u8,
    a_j: u8,
    dir: ShiftDirection,
) -> Result<f64> {
    bound_counterfactual_single_with(tables, params, y, a_i, a_j, dir, MOrdering::ValueSorted)
}

/// [`bound_counterfactual_single`] with an explicit mediator ordering.
pub fn bound_counterfactual_single_with(
    tables: &ObsTables,
    params: &SensitivityParams,
    y: usize,
    a_i: u8,
    a_j: u8,
    dir: ShiftDirection,
    ordering: MOrdering,
) -> Result<f64> {
    validate_attr_pair(a_i, a_j)?;
    validate_class_target(tables, y)?;
    tables.require_overlap()?;
    tables.require_y_cells()?;
    validate_attr_masses(tables, a_i, a_j)?;
    if a_i == a_j {
        return Ok(tables.p_y_given_a(y, a_i as usize));
    }
    let (ai, aj) = (a_i as usize, a_j as usize);
    let (p_i, p_j) = (tables.p_a(ai), tables.p_a(aj));
    let mut shifted = 0.0;
    for z in 0..tables.n_z() {
        let w = tables.p_z(z);
        if w == 0.0 {
            continue;
        }
        let yf = y_factors(tables, z, ai, y, params.gamma_y())?;
        let q = match dir {
            ShiftDirection::Upper => &yf.up,
            ShiftDirection::Lower => &yf.down,
        };
        shifted += w * shifted_msum(tables, z, ai, q, params.gamma_m(), dir, ordering)?;
    }
    Ok(shifted / p_j - (p_i / p_j) * tables.p_y_given_a(y, ai))
}

/// Bounds on the nested counterfactual `P(y_{a_i, m_{a_j}} | a_j)`: the
/// probability the outcome takes class `y` had the attribute been `a_i`
/// while the mediator followed its `a_j` response, among the `a_j` group.
///
/// Closed form: `(1/P(a_j)) Σ_{z,m} P±(y|m,z,a_i)·P±(m|z,a_j)·P(z) −
/// (P(a_i)/P(a_j)) Σ_{z,m} P(y|m,z,a_i)·P(m|z,a_j)·P(z|a_i)`. The identified
/// correction is weighted by the confounder law of the arm its outcome factor
/// conditions on; that is what makes the expression collapse to the exact
/// adjustment `Σ_z P(z|a_j) Σ_m P(y|m,z,a_i)P(m|z,a_j)` at Γ = 1. With
/// `a_i = a_j` the nesting is trivial (`m_{a_j}` is the observed mediator)
/// and the plug-in `P(y|a_i)` is returned.
pub fn bound_counterfactual_nested(
    tables: &ObsTables,
    params: &SensitivityParams,
    y: usize,
    a_i: u8,
    a_j: u8,
    dir: ShiftDirection,
) -> Result<f64> {
    bound_counterfactual_nested_with(tables, params, y, a_i, a_j, dir, MOrdering::ValueSorted)
}

/// [`bound_counterfactual_nested`] with an explicit mediator ordering.
pub fn bound_counterfactual_nested_with(
    tables: &ObsTables,
    params: &SensitivityParams,
    y: usize,
    a_i: u8,
    a_j: u8,
    dir: ShiftDirection,
    ordering: MOrdering,
) -> Result<f64> {
    validate_attr_pair(a_i, a_j)?;
    validate_class_target(tables, y)?;
    tables.require_overlap()?;
    tables.require_y_cells()?;
    validate_attr_masses(tables, a_i, a_j)?;
    if a_i == a_j {
        return Ok(tables.p_y_given_a(y, a_i as usize));
    }
    let (ai, aj) = (a_i as usize, a_j as usize);
    let p_j = tables.p_a(aj);
    let mut shifted = 0.0;
    let mut ident = 0.0;
    for z in 0..tables.n_z() {
        let w = tables.p_z(z);
        if w == 0.0 {
            continue;
        }
        let yf = y_factors(tables, z, ai, y, params.gamma_y())?;
        let q = match dir {
            ShiftDirection::Upper => &yf.up,
            ShiftDirection::Lower => &yf.down,
        };
        shifted += w * shifted_msum(tables, z, aj, q, params.gamma_m(), dir, ordering)?;
        // P(z|a_i)-weighted correction: P(z|a_i) = P(a_i|z)·P(z)/P(a_i).
        ident += w * tables.p_a_given_z(z, ai) * flat_msum(tables, z, aj, &yf.flat);
    }
    Ok(shifted / p_j - ident / p_j)
}

/// Interval bounds for the three path-specific effects of moving the
/// attribute `a_i → a_j` on outcome class `y`, plus their Γ=1 plug-in points.
///
/// Conventions: the direct effect `DE_{a_i,a_j}(y|a_i)` conditions on the
/// `a_i` group, the indirect effect `IE_{a_i,a_j}(y|a_j)` on the `a_j` group,
/// and the spurious effect `SE_{a_i,a_j}(y)` is unconditional. The naive
/// points are the same expressions with both budgets forced to one, and they
/// always lie inside the intervals.
pub fn bound_effects(
    tables: &ObsTables,
    params: &SensitivityParams,
    y: usize,
    a_i: u8,
    a_j: u8,
) -> Result<EffectBounds> {
    bound_effects_with(tables, params, y, a_i, a_j, MOrdering::ValueSorted)
}

/// [`bound_effects`] with an explicit mediator ordering.
pub fn bound_effects_with(
    tables: &ObsTables,
    params: &SensitivityParams,
    y: usize,
    a_i: u8,
    a_j: u8,
    ordering: MOrdering,
) -> Result<EffectBounds> {
    validate_attr_pair(a_i, a_j)?;
    if a_i == a_j {
        return Err(Error::validation("effects need two distinct attribute values"));
    }
    validate_class_target(tables, y)?;
    tables.require_overlap()?;
    tables.require_y_cells()?;
    validate_attr_masses(tables, a_i, a_j)?;

    let (ai, aj) = (a_i as usize, a_j as usize);
    let (p_i, p_j) = (tables.p_a(ai), tables.p_a(aj));
    let p_y_ai = tables.p_y_given_a(y, ai);
    let gm = params.gamma_m();

    // Accumulators over z: shifted and flat mediator sums for each term.
    // Identified corrections are weighted by the conditional confounder law
    // of the arm their outcome factor conditions on, folded in as
    // P(z|a)·P(a) = P(z)·P(a|z) so only local propensities appear.
    let mut de_up = 0.0;
    let mut de_dn = 0.0;
    let mut de_corr = 0.0;
    let mut de_cond = 0.0;
    let mut ie_ident = 0.0;
    let mut ie_up = 0.0;
    let mut ie_dn = 0.0;
    let mut ie_flat = 0.0;
    let mut se_up = 0.0;
    let mut se_dn = 0.0;
    let mut se_flat = 0.0;

    for z in 0..tables.n_z() {
        let w = tables.p_z(z);
        if w == 0.0 {
            continue;
        }
        let treat_i = tables.p_a_given_z(z, ai);
        let treat_j = tables.p_a_given_z(z, aj);
        let yf_j = y_factors(tables, z, aj, y, params.gamma_y())?;
        let yf_i = y_factors(tables, z, ai, y, params.gamma_y())?;

        // DE: outcome factor at a_j, mediator pmf at a_i.
        de_up += w * shifted_msum(tables, z, ai, &yf_j.up, gm, ShiftDirection::Upper, ordering)?;
        de_dn += w * shifted_msum(tables, z, ai, &yf_j.down, gm, ShiftDirection::Lower, ordering)?;
        let flat_ji = flat_msum(tables, z, ai, &yf_j.flat);
        de_corr += w * treat_j * flat_ji;
        de_cond += w * treat_i * flat_ji;

        // IE: identified contrast plus the cross-paired shifted difference
        // (mediator pmf at a_j against the opposite shift at a_i).
        let flat_ii = flat_msum(tables, z, ai, &yf_i.flat);
        let flat_ij = flat_msum(tables, z, aj, &yf_i.flat);
        ie_ident += w * treat_i * (flat_ii - flat_ij);
        ie_up += w
            * (shifted_msum(tables, z, aj, &yf_i.up, gm, ShiftDirection::Upper, ordering)?
                - shifted_msum(tables, z, ai, &yf_i.down, gm, ShiftDirection::Lower, ordering)?);
        ie_dn += w
            * (shifted_msum(tables, z, aj, &yf_i.down, gm, ShiftDirection::Lower, ordering)?
                - shifted_msum(tables, z, ai, &yf_i.up, gm, ShiftDirection::Upper, ordering)?);
        ie_flat += w * (flat_ij - flat_ii);

        // SE: outcome factor and mediator pmf both at a_i.
        se_up += w * shifted_msum(tables, z, ai, &yf_i.up, gm, ShiftDirection::Upper, ordering)?;
        se_dn += w * shifted_msum(tables, z, ai, &yf_i.down, gm, ShiftDirection::Lower, ordering)?;
        se_flat += w * flat_msum(tables, z, ai, &yf_i.flat);
    }

    let de_hi = (de_up - de_corr) / p_i - p_y_ai;
    let de_lo = (de_dn - de_corr) / p_i - p_y_ai;
    let de_naive = de_cond / p_i - p_y_ai;

    let ie_hi = (ie_ident + ie_up) / p_j;
    let ie_lo = (ie_ident + ie_dn) / p_j;
    let ie_naive = (ie_ident + ie_flat) / p_j;

    let se_scale = 1.0 + p_i / p_j;
    let se_hi = se_up / p_j - se_scale * p_y_ai;
    let se_lo = se_dn / p_j - se_scale * p_y_ai;
    let se_naive = se_flat / p_j - se_scale * p_y_ai;

    Ok(EffectBounds {
        de: make_interval(de_lo, de_hi, ordering)?,
        ie: make_interval(ie_lo, ie_hi, ordering)?,
        se: make_interval(se_lo, se_hi, ordering)?,
        de_naive,
        ie_naive,
        se_naive,
        target_y: TargetY::Class(y),
        a_i,
        a_j,
    })
}

/// Observed total variation `P(y|a_j) − P(y|a_i)` composed from the tables.
pub fn total_variation(tables: &ObsTables, y: usize, a_i: u8, a_j: u8) -> Result<f64> {
    validate_attr_pair(a_i, a_j)?;
    validate_class_target(tables, y)?;
    validate_attr_masses(tables, a_i, a_j)?;
    Ok(tables.p_y_given_a(y, a_j as usize) - tables.p_y_given_a(y, a_i as usize))
}

/// JSON bound report for one effect query.
pub fn report_json(bounds: &EffectBounds, params: &SensitivityParams, tv_naive: f64) -> serde_json::Value {
    let iv = |i: &Interval, naive: f64| json!({ "lo": i.lo, "hi": i.hi, "naive": naive });
    json!({
        "gamma_m": params.gamma_m(),
        "gamma_y": params.gamma_y(),
        "a_i": bounds.a_i,
        "a_j": bounds.a_j,
        "y": match bounds.target_y {
            TargetY::Class(c) => json!(c),
            TargetY::Expectation => json!("expectation"),
        },
        "de": iv(&bounds.de, bounds.de_naive),
        "ie": iv(&bounds.ie, bounds.ie_naive),
        "se": iv(&bounds.se, bounds.se_naive),
        "tv_naive": tv_naive,
    })
}

// ---------------------------------------------------------------------------
// Predictor-substituted effect bounds over an evaluation grid.
// ---------------------------------------------------------------------------

/// Evaluation grid for predictor-substituted bounds: predictor scores `f`
/// and estimated densities over a common set of confounder points.
///
/// The confounder points are either the discrete cells (weighted by `P(z)`)
/// or a sample of continuous rows (weighted `1/n` each). Layout is row-major
/// `index = (z·2 + a)·k_m + m` for `f` and `g_m`, and `z·2 + a` for `g_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    /// Mediator cardinality.
    pub k_m: usize,
    /// Weight of each confounder point; non-negative, sums to one.
    pub z_weights: Vec<f64>,
    /// Estimated `P(a|z)` per point, `[n_z × 2]`, rows sum to one.
    pub g_a: Vec<f64>,
    /// Estimated `P(m|z,a)` per point and arm, `[n_z × 2 × k_m]`, rows sum to one.
    pub g_m: Vec<f64>,
    /// Predictor scores `f(a, z, m)`, `[n_z × 2 × k_m]`, finite.
    pub f: Vec<f64>,
}

impl EvalGrid {
    /// Number of confounder points.
    pub fn n_z(&self) -> usize {
        self.z_weights.len()
    }

    /// Flat index of `f`/`g_m` entry `(a, z, m)`.
    pub fn f_index(&self, a: usize, z: usize, m: usize) -> usize {
        (z * 2 + a) * self.k_m + m
    }

    /// Check shapes, normalization, and finiteness.
    pub fn validate(&self) -> Result<()> {
        let n_z = self.n_z();
        if n_z == 0 || self.k_m == 0 {
            return Err(Error::validation("evaluation grid needs at least one point and one mediator category"));
        }
        if self.g_a.len() != n_z * 2 {
            return Err(Error::validation(format!(
                "g_a has {} entries, expected {}",
                self.g_a.len(),
                n_z * 2
            )));
        }
        let cells = n_z * 2 * self.k_m;
        for (label, v) in [("g_m", &self.g_m), ("f", &self.f)] {
            if v.len() != cells {
                return Err(Error::validation(format!(
                    "{label} has {} entries, expected {cells}",
                    v.len()
                )));
            }
        }
        let mut zw = 0.0;
        for &w in &self.z_weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::validation(format!("z weight {w} is not a probability")));
            }
            zw += w;
        }
        if (zw - 1.0).abs() > 1e-6 {
            return Err(Error::validation(format!("z weights sum to {zw}, expected 1")));
        }
        for z in 0..n_z {
            let (p0, p1) = (self.g_a[z * 2], self.g_a[z * 2 + 1]);
            for p in [p0, p1] {
                if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                    return Err(Error::validation(format!("g_a entry {p} at point {z} is not a probability")));
                }
            }
            if (p0 + p1 - 1.0).abs() > 1e-6 {
                return Err(Error::validation(format!(
                    "g_a row at point {z} sums to {}, expected 1",
                    p0 + p1
                )));
            }
            for a in 0..2 {
                let row = &self.g_m[(z * 2 + a) * self.k_m..(z * 2 + a + 1) * self.k_m];
                let mut s = 0.0;
                for &p in row {
                    if !p.is_finite() || p < -1e-9 {
                        return Err(Error::validation(format!(
                            "g_m entry {p} at point {z}, arm {a} is not a probability"
                        )));
                    }
                    s += p.max(0.0);
                }
                if (s - 1.0).abs() > 1e-6 {
                    return Err(Error::validation(format!(
                        "g_m row at point {z}, arm {a} sums to {s}, expected 1"
                    )));
                }
            }
        }
        if !self.f.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("predictor scores must be finite"));
        }
        Ok(())
    }

    /// Grid over the discrete confounder cells of fitted tables, scoring each
    /// `(a, z, m)` with `score(a, z_cell, m)`.
    pub fn from_tables(
        tables: &ObsTables,
        mut score: impl FnMut(usize, usize, usize) -> Result<f64>,
    ) -> Result<EvalGrid> {
        let n_z = tables.n_z();
        let k_m = tables.k_m();
        let mut g_a = Vec::with_capacity(n_z * 2);
        let mut g_m = Vec::with_capacity(n_z * 2 * k_m);
        let mut f = Vec::with_capacity(n_z * 2 * k_m);
        for z in 0..n_z {
            for a in 0..2 {
                g_a.push(tables.p_a_given_z(z, a));
                for m in 0..k_m {
                    g_m.push(tables.p_m_given_za(z, a, m));
                    f.push(score(a, z, m)?);
                }
            }
        }
        let grid = EvalGrid {
            k_m,
            z_weights: (0..n_z).map(|z| tables.p_z(z)).collect(),
            g_a,
            g_m,
            f,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Grid over continuous confounder rows (one point per row, uniformly
    /// weighted), with densities queried from fitted estimators and scores
    /// from `score(a, row_index, m)`.
    pub fn from_samples(
        k_m: usize,
        rows: &[Vec<f64>],
        g_a_est: &crate::estimation::DensityEstimator,
        g_m_est: &crate::estimation::DensityEstimator,
        mut score: impl FnMut(usize, usize, usize) -> Result<f64>,
    ) -> Result<EvalGrid> {
        use crate::estimation::ZQuery;
        if rows.is_empty() {
            return Err(Error::validation("need at least one confounder row"));
        }
        let n = rows.len();
        let mut g_a = Vec::with_capacity(n * 2);
        let mut g_m = Vec::with_capacity(n * 2 * k_m);
        let mut f = Vec::with_capacity(n * 2 * k_m);
        for (i, row) in rows.iter().enumerate() {
            let pa = g_a_est.query(ZQuery::Row(row), None)?;
            if pa.len() != 2 {
                return Err(Error::validation(format!(
                    "attribute estimator returned {} classes, expected 2",
                    pa.len()
                )));
            }
            g_a.extend_from_slice(&pa);
            for a in 0..2 {
                let pm = g_m_est.query(ZQuery::Row(row), Some(a))?;
                if pm.len() != k_m {
                    return Err(Error::validation(format!(
                        "mediator estimator returned {} classes, expected {k_m}",
                        pm.len()
                    )));
                }
                g_m.extend_from_slice(&pm);
                for m in 0..k_m {
                    f.push(score(a, i, m)?);
                }
            }
        }
        let grid = EvalGrid {
            k_m,
            z_weights: vec![1.0 / n as f64; n],
            g_a,
            g_m,
            f,
        };
        grid.validate()?;
        Ok(grid)
    }
}

/// Gradient of one effect's interval endpoints with respect to the grid
/// scores `f`, aligned with [`EvalGrid::f`].
#[derive(Debug, Clone)]
pub struct BoundGrads {
    /// Gradient of the lower endpoint.
    pub lo: Vec<f64>,
    /// Gradient of the upper endpoint.
    pub hi: Vec<f64>,
}

/// Predictor-substituted effect bounds plus endpoint gradients.
#[derive(Debug, Clone)]
pub struct ExpectedBounds {
    /// The three effect intervals and naive points for `E[f]`.
    pub bounds: EffectBounds,
    /// Gradients of the direct-effect endpoints.
    pub de_grads: BoundGrads,
    /// Gradients of the indirect-effect endpoints.
    pub ie_grads: BoundGrads,
    /// Gradients of the spurious-effect endpoints.
    pub se_grads: BoundGrads,
}

/// Effect bounds for the expected predictor score `E[f]` under a mediator
/// budget `gamma_m`.
///
/// Substituting a known score `f(a, z, m)` for the outcome removes the
/// outcome-side sensitivity entirely (the score is a deterministic function
/// of its inputs), so only the mediator shift and the identified densities
/// enter. Every endpoint is piecewise-linear in `f`; the returned gradients
/// are exact wherever the value-sorted category order is locally constant.
pub fn bound_effects_expected(
    grid: &EvalGrid,
    gamma_m: f64,
    a_i: u8,
    a_j: u8,
) -> Result<ExpectedBounds> {
    bound_effects_expected_with(grid, gamma_m, a_i, a_j, MOrdering::ValueSorted)
}

/// [`bound_effects_expected`] with an explicit mediator ordering.
pub fn bound_effects_expected_with(
    grid: &EvalGrid,
    gamma_m: f64,
    a_i: u8,
    a_j: u8,
    ordering: MOrdering,
) -> Result<ExpectedBounds> {
    grid.validate()?;
    validate_gamma(gamma_m)?;
    validate_attr_pair(a_i, a_j)?;
    if a_i == a_j {
        return Err(Error::validation("effects need two distinct attribute values"));
    }
    let (ai, aj) = (a_i as usize, a_j as usize);
    let n_z = grid.n_z();
    let k = grid.k_m;
    let cells = n_z * 2 * k;

    // Derived attribute marginals P(a) = Σ_z w_z·g_a(z,a).
    let mut p = [0.0f64; 2];
    for z in 0..n_z {
        for a in 0..2 {
            p[a] += grid.z_weights[z] * grid.g_a[z * 2 + a];
        }
    }
    for a in [ai, aj] {
        if p[a] < 1e-6 {
            return Err(Error::numerics(format!(
                "attribute arm a={a} has derived probability {} < 1e-6",
                p[a]
            )));
        }
    }
    let (p_i, p_j) = (p[ai], p[aj]);

    // E[f|a_i] and its gradient (appears in DE and SE).
    let mut e_cond = 0.0;
    let mut e_cond_grad = vec![0.0; cells];
    for z in 0..n_z {
        let w = grid.z_weights[z] * grid.g_a[z * 2 + ai] / p_i;
        for m in 0..k {
            let idx = grid.f_index(ai, z, m);
            let c = w * grid.g_m[idx];
            e_cond += c * grid.f[idx];
            e_cond_grad[idx] = c;
        }
    }

    let mut de_hi = 0.0;
    let mut de_lo = 0.0;
    let mut de_naive = 0.0;
    let mut ie_hi = 0.0;
    let mut ie_lo = 0.0;
    let mut ie_naive = 0.0;
    let mut se_hi = 0.0;
    let mut se_lo = 0.0;
    let mut se_naive = 0.0;
    let mut g_de_hi = vec![0.0; cells];
    let mut g_de_lo = vec![0.0; cells];
    let mut g_ie_hi = vec![0.0; cells];
    let mut g_ie_lo = vec![0.0; cells];
    let mut g_se_hi = vec![0.0; cells];
    let mut g_se_lo = vec![0.0; cells];

    for z in 0..n_z {
        let w = grid.z_weights[z];
        if w == 0.0 {
            continue;
        }
        let treat_i = grid.g_a[z * 2 + ai];
        let treat_j = grid.g_a[z * 2 + aj];
        let gm_i = &grid.g_m[(z * 2 + ai) * k..(z * 2 + ai + 1) * k];
        let gm_j = &grid.g_m[(z * 2 + aj) * k..(z * 2 + aj + 1) * k];
        let f_i = &grid.f[(z * 2 + ai) * k..(z * 2 + ai + 1) * k];
        let f_j = &grid.f[(z * 2 + aj) * k..(z * 2 + aj + 1) * k];
        let perm_i = ordering.permutation(f_i);
        let perm_j = ordering.permutation(f_j);

        // Shifted mediator pmfs: pmf arm × ordering integrand × direction.
        let sp = |pmf: &[f64], treat: f64, d: ShiftDirection, perm: &Option<Vec<usize>>| {
            shift_discrete(pmf, treat, gamma_m, d, perm.as_deref()).map(|s| s.weights)
        };
        let up_i_by_j = sp(gm_i, treat_i, ShiftDirection::Upper, &perm_j)?;
        let dn_i_by_j = sp(gm_i, treat_i, ShiftDirection::Lower, &perm_j)?;
        let up_j_by_i = sp(gm_j, treat_j, ShiftDirection::Upper, &perm_i)?;
        let dn_j_by_i = sp(gm_j, treat_j, ShiftDirection::Lower, &perm_i)?;
        let up_i_by_i = sp(gm_i, treat_i, ShiftDirection::Upper, &perm_i)?;
        let dn_i_by_i = sp(gm_i, treat_i, ShiftDirection::Lower, &perm_i)?;

        for m in 0..k {
            let idx_i = grid.f_index(ai, z, m);
            let idx_j = grid.f_index(aj, z, m);

            // DE: Σ_m f(a_j)·(P±(m|z,a_i) − g_a(z,a_j)·P(m|z,a_i))/p_i − E[f|a_i];
            // the identified correction carries the conditional weight
            // P(z|a_j)·p_j = w_z·g_a(z,a_j).
            let c_hi = w * (up_i_by_j[m] - treat_j * gm_i[m]) / p_i;
            let c_lo = w * (dn_i_by_j[m] - treat_j * gm_i[m]) / p_i;
            let c_flat = w * treat_i * gm_i[m] / p_i;
            de_hi += c_hi * f_j[m];
            de_lo += c_lo * f_j[m];
            de_naive += c_flat * f_j[m];
            g_de_hi[idx_j] += c_hi;
            g_de_lo[idx_j] += c_lo;

            // IE: Σ f(a_i)·g_a(z,a_i)(P(m|z,a_i) − P(m|z,a_j))/p_j
            //     + Σ f(a_i)(P±(m|z,a_j) − P∓(m|z,a_i))/p_j.
            let c_ident = w * treat_i * (gm_i[m] - gm_j[m]) / p_j;
            let c_hi = c_ident + w * (up_j_by_i[m] - dn_i_by_i[m]) / p_j;
            let c_lo = c_ident + w * (dn_j_by_i[m] - up_i_by_i[m]) / p_j;
            let c_flat = c_ident + w * (gm_j[m] - gm_i[m]) / p_j;
            ie_hi += c_hi * f_i[m];
            ie_lo += c_lo * f_i[m];
            ie_naive += c_flat * f_i[m];
            g_ie_hi[idx_i] += c_hi;
            g_ie_lo[idx_i] += c_lo;

            // SE: Σ f(a_i)·P±(m|z,a_i)/p_j − (1 + p_i/p_j)·E[f|a_i].
            let c_hi = w * up_i_by_i[m] / p_j;
            let c_lo = w * dn_i_by_i[m] / p_j;
            let c_flat = w * gm_i[m] / p_j;
            se_hi += c_hi * f_i[m];
            se_lo += c_lo * f_i[m];
            se_naive += c_flat * f_i[m];
            g_se_hi[idx_i] += c_hi;
            g_se_lo[idx_i] += c_lo;
        }
    }

    de_hi -= e_cond;
    de_lo -= e_cond;
    de_naive -= e_cond;
    let se_scale = 1.0 + p_i / p_j;
    se_hi -= se_scale * e_cond;
    se_lo -= se_scale * e_cond;
    se_naive -= se_scale * e_cond;
    for idx in 0..cells {
        let g = e_cond_grad[idx];
        if g != 0.0 {
            g_de_hi[idx] -= g;
            g_de_lo[idx] -= g;
            g_se_hi[idx] -= se_scale * g;
            g_se_lo[idx] -= se_scale * g;
        }
    }

    let bounds = EffectBounds {
        de: make_interval(de_lo, de_hi, ordering)?,
        ie: make_interval(ie_lo, ie_hi, ordering)?,
        se: make_interval(se_lo, se_hi, ordering)?,
        de_naive,
        ie_naive,
        se_naive,
        target_y: TargetY::Expectation,
        a_i,
        a_j,
    };
    Ok(ExpectedBounds {
        bounds,
        de_grads: BoundGrads { lo: g_de_lo, hi: g_de_hi },
        ie_grads: BoundGrads { lo: g_ie_lo, hi: g_ie_hi },
        se_grads: BoundGrads { lo: g_se_lo, hi: g_se_hi },
    })
}

// ---------------------------------------------------------------------------
// Outcome-level audits: factual average contrast and per-cell path bounds.
// ---------------------------------------------------------------------------

/// Extremal conditional expectation `E±[Y | z, m, a]` under the outcome
/// budget: a label-ordered pmf shift for discrete Y, or reweighted empirical
/// samples for continuous Y.
fn e_y_shifted(
    tables: &ObsTables,
    z: usize,
    a: usize,
    m: usize,
    gamma_y: f64,
    dir: ShiftDirection,
) -> Result<f64> {
    let treat = tables.p_a_given_z(z, a);
    if let Some(k_y) = tables.k_y() {
        let pmf: Vec<f64> = (0..k_y).map(|y| tables.p_y_given_mza(y, m, z, a)).collect();
        // Ascending labels are the integrand order for an expectation.
        let shifted = shift_discrete(&pmf, treat, gamma_y, dir, None)?;
        Ok(shifted.weights.iter().enumerate().map(|(y, &w)| y as f64 * w).sum())
    } else {
        let cell = tables.y_samples_cell(z, a, m);
        if cell.is_empty() {
            return Err(Error::numerics(format!(
                "no outcome samples in cell (z={z}, a={a}, m={m}); cannot bound E[Y] there"
            )));
        }
        let w = shift_continuous_weights(cell, treat, gamma_y, dir)?;
        Ok(dot(cell, &w) / cell.len() as f64)
    }
}

/// `Σ_m E±[Y|z,m,a_e]·P±(m|z,a_m)` with value-sorted mediator ordering.
fn face_msum(
    tables: &ObsTables,
    z: usize,
    a_e: usize,
    a_m: usize,
    params: &SensitivityParams,
    dir: ShiftDirection,
) -> Result<f64> {
    let k_m = tables.k_m();
    let mut q = Vec::with_capacity(k_m);
    for m in 0..k_m {
        q.push(e_y_shifted(tables, z, a_e, m, params.gamma_y(), dir)?);
    }
    shifted_msum(tables, z, a_m, &q, params.gamma_m(), dir, MOrdering::ValueSorted)
}

/// Factual average contrast bounds per attribute arm, against a baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaceBounds {
    /// The baseline attribute the contrasts subtract.
    pub baseline: u8,
    /// One interval per attribute value (the baseline's own interval brackets
    /// zero by construction).
    pub per_attribute: Vec<Interval>,
    /// Average contrast over the non-baseline arms.
    pub aface: Interval,
}

/// Bounds on the factual average contrast of each attribute arm against
/// `baseline`:
///
/// ```text
/// ub_a = Σ_z P(z) Σ_m ( E⁺[Y|z,m,a]·P⁺(m|z,a) − E⁻[Y|z,m,baseline]·P⁻(m|z,a) )
/// ```
///
/// and the mirrored lower endpoint. Both mediator shifts reweight the target
/// arm's mediator distribution, so at Γ=1 a generator whose outcome mechanism
/// ignores the attribute yields an exactly-zero contrast.
pub fn bound_face(tables: &ObsTables, params: &SensitivityParams, baseline: u8) -> Result<FaceBounds> {
    if baseline > 1 {
        return Err(Error::validation(format!("baseline attribute must be 0 or 1, got {baseline}")));
    }
    tables.require_overlap()?;
    tables.require_y_cells()?;
    validate_attr_masses(tables, baseline, baseline)?;
    let base = baseline as usize;
    let mut per_attribute = Vec::with_capacity(2);
    for a in 0..2usize {
        let mut hi = 0.0;
        let mut lo = 0.0;
        for z in 0..tables.n_z() {
            let w = tables.p_z(z);
            if w == 0.0 {
                continue;
            }
            hi += w
                * (face_msum(tables, z, a, a, params, ShiftDirection::Upper)?
                    - face_msum(tables, z, base, a, params, ShiftDirection::Lower)?);
            lo += w
                * (face_msum(tables, z, a, a, params, ShiftDirection::Lower)?
                    - face_msum(tables, z, base, a, params, ShiftDirection::Upper)?);
        }
        per_attribute.push(Interval::new(lo, hi)?);
    }
    let aface = per_attribute[1 - base];
    Ok(FaceBounds { baseline, per_attribute, aface })
}

/// Bounds on the per-confounder-cell path contrast
/// `Σ_m E[Y|z,m,a_1]P(m|z,a_1) − Σ_m E[Y|z,m,a_0]P(m|z,a_0)` over all
/// mechanisms inside the budget.
///
/// Errors if `z` is out of range or has no observed records. With
/// `a_0 = a_1` and Γ=1 the contrast is exactly `[0, 0]`.
pub fn bound_individual_path(
    tables: &ObsTables,
    params: &SensitivityParams,
    z: usize,
    a_0: u8,
    a_1: u8,
) -> Result<Interval> {
    validate_attr_pair(a_0, a_1)?;
    if z >= tables.n_z() {
        return Err(Error::validation(format!(
            "confounder cell {z} out of range for {} cells",
            tables.n_z()
        )));
    }
    let observed = (0..2).any(|a| (0..tables.k_m()).any(|m| tables.cell_count(z, a, m) > 0));
    if !observed {
        return Err(Error::numerics(format!("confounder cell {z} has no observed records")));
    }
    tables.require_overlap()?;
    tables.require_y_cells()?;
    let (a0, a1) = (a_0 as usize, a_1 as usize);
    let hi = face_msum(tables, z, a1, a1, params, ShiftDirection::Upper)?
        - face_msum(tables, z, a0, a0, params, ShiftDirection::Lower)?;
    let lo = face_msum(tables, z, a1, a1, params, ShiftDirection::Lower)?
        - face_msum(tables, z, a0, a0, params, ShiftDirection::Upper)?;
    Interval::new(lo, hi)
}
