//! Brute-force partial-identification engine over explicit discrete
//! structural models.
//!
//! The closed-form interval bounds in [`crate::bounds`] claim to cover every
//! structural model that (a) reproduces the observational tables and (b)
//! keeps each latent confounder's posterior shift inside the sensitivity
//! box `w_lo(a|z) ≤ P(u|z)/P(u|z,a) ≤ w_hi(a|z)`. This module checks that
//! claim from below on tiny instances: it samples explicit discrete SCMs
//! from that compatible class, evaluates the three path-specific effects
//! *exactly* on each candidate by enumeration, and reports the min/max
//! achieved per effect. The achieved interval is an inner approximation of
//! the sharp set — soundness means it always sits inside the closed-form
//! interval, and the remaining endpoint gap is the sharpness evidence.
//!
//! Candidate models factor as
//! `P(z)·P(a|z)·ρ_Y(u|z,a)·ρ_M(v|z,a)·P(m|z,a,v)·P(y|m,z,a,u)`,
//! with one latent channel confounding the outcome (`u`, budget `Γ_Y`) and
//! one confounding the mediator (`v`, budget `Γ_M`); given `(z,a)` the two
//! channels are independent, so each ratio box binds its own channel. At
//! each confounder cell at most one channel's posteriors may differ across
//! arms: the cell's latent pair stays independent given `z` exactly when
//! `Σ_a P(a|z)·ρ_Y(·|z,a)⊗ρ_M(·|z,a)` factorizes, which for a two-point
//! mixture of products forces one factor to be arm-constant. Tilting both
//! channels in one cell would correlate the mediator's and the outcome's
//! latent there — unobserved mediator–outcome confounding, which the
//! compatible class excludes and the closed-form transports do not cover.
//! The sampler is constructive: posteriors are drawn as an anchor simplex
//! plus a bisected maximal tilt toward a random direction (so every draw
//! respects the box), and mechanisms are fitted by a monotone clamp-shift
//! so every draw reproduces the observational conditionals exactly. Coordinate
//! hill-climbing then pushes the best candidates toward the endpoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::bounds::bound_effects;
use crate::error::{Error, Result};
use crate::estimation::ObsTables;
use crate::model::{EffectBounds, Interval, SensitivityParams};

/// Relative floor applied when normalizing raw simplex coordinates; keeps
/// posterior entries strictly positive so density ratios stay finite.
const SIMPLEX_FLOOR: f64 = 1e-4;

/// Slack allowed when re-checking the sensitivity box on a built candidate
/// (float dust only; the construction is feasible by design).
const BOX_SLACK: f64 = 1e-9;

/// Configuration for the compatible-model search.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatSearchConfig {
    /// Cardinality of each latent confounder channel (≥ 2).
    pub latent_cardinality: usize,
    /// Number of candidate models to draw (≥ 1).
    pub budget: usize,
    /// Seed for the candidate stream; candidate `i` uses an RNG derived
    /// from `(seed, i)`, so evaluation order never matters.
    pub seed: u64,
    /// Acceptance tolerance on the total-variation distance between the
    /// candidate's implied observational law and the target tables.
    pub obs_match_tol: f64,
    /// Hill-climb steps applied to each of the six endpoint witnesses.
    pub refine_steps: usize,
}

impl Default for CompatSearchConfig {
    fn default() -> Self {
        CompatSearchConfig {
            latent_cardinality: 2,
            budget: 20_000,
            seed: 0,
            obs_match_tol: 1e-3,
            refine_steps: 400,
        }
    }
}

impl CompatSearchConfig {
    /// Check the configuration invariants.
    pub fn validate(&self) -> Result<()> {
        if self.latent_cardinality < 2 {
            return Err(Error::validation(format!(
                "latent cardinality must be at least 2, got {}",
                self.latent_cardinality
            )));
        }
        if self.budget < 1 {
            return Err(Error::validation("search budget must be at least 1"));
        }
        if !self.obs_match_tol.is_finite() || self.obs_match_tol <= 0.0 {
            return Err(Error::validation(format!(
                "observational-match tolerance must be a finite positive value, got {}",
                self.obs_match_tol
            )));
        }
        Ok(())
    }
}

/// An explicit discrete structural model in conditional-table form.
///
/// Binary attribute, mediator, and outcome; `n_z` confounder cells; two
/// latent channels of cardinality `latent_card` — `u` confounds the outcome,
/// `v` confounds the mediator. The joint law factors as
/// `P(z)·P(a|z)·ρ_Y(u|z,a)·ρ_M(v|z,a)·P(m|z,a,v)·P(y|m,z,a,u)`; interventions
/// replace the `a`-index of a mechanism while group membership keeps steering
/// the posteriors, which is exactly where confounding bites.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteScm {
    /// Confounder cells.
    pub n_z: usize,
    /// Latent cardinality per channel.
    pub latent_card: usize,
    /// `P(z)`, length `n_z`.
    pub p_z: Vec<f64>,
    /// `P(a|z)`, length `n_z·2`, index `z·2 + a`.
    pub p_a_given_z: Vec<f64>,
    /// Outcome-channel posterior `ρ_Y(u|z,a)`, length `n_z·2·L`,
    /// index `(z·2 + a)·L + u`.
    pub rho_de: Vec<f64>,
    /// Mediator-channel posterior `ρ_M(v|z,a)`, same layout as `rho_de`.
    pub rho_ie: Vec<f64>,
    /// Mediator mechanism `P(m=1|z,a,v)`, same layout as `rho_ie`.
    pub m_mech: Vec<f64>,
    /// Outcome mechanism `P(y=1|m,z,a,u)`, length `n_z·2·2·L`,
    /// index `((z·2 + a)·2 + m)·L + u`.
    pub y_mech: Vec<f64>,
}

impl DiscreteScm {
    fn za(&self, z: usize, a: usize) -> usize {
        z * 2 + a
    }

    /// Flat index into `rho_de` / `rho_ie` / `m_mech`.
    pub fn idx_zau(&self, z: usize, a: usize, u: usize) -> usize {
        (z * 2 + a) * self.latent_card + u
    }

    /// Flat index into `y_mech`.
    pub fn idx_zamu(&self, z: usize, a: usize, m: usize, u: usize) -> usize {
        ((z * 2 + a) * 2 + m) * self.latent_card + u
    }

    /// Check normalization and ranges; everything must be a probability and
    /// every conditional distribution must sum to one within `1e-9`.
    pub fn validate(&self) -> Result<()> {
        let l = self.latent_card;
        if self.n_z == 0 || l < 2 {
            return Err(Error::validation("model needs n_z ≥ 1 and latent cardinality ≥ 2"));
        }
        let want = [
            ("p_z", self.p_z.len(), self.n_z),
            ("p_a_given_z", self.p_a_given_z.len(), self.n_z * 2),
            ("rho_de", self.rho_de.len(), self.n_z * 2 * l),
            ("rho_ie", self.rho_ie.len(), self.n_z * 2 * l),
            ("m_mech", self.m_mech.len(), self.n_z * 2 * l),
            ("y_mech", self.y_mech.len(), self.n_z * 4 * l),
        ];
        for (name, got, expect) in want {
            if got != expect {
                return Err(Error::validation(format!(
                    "{name} has length {got}, expected {expect}"
                )));
            }
        }
        let in_unit = |name: &str, values: &[f64]| -> Result<()> {
            for &p in values {
                if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                    return Err(Error::validation(format!(
                        "{name} entry {p} is not a probability"
                    )));
                }
            }
            Ok(())
        };
        in_unit("p_z", &self.p_z)?;
        in_unit("p_a_given_z", &self.p_a_given_z)?;
        in_unit("rho_de", &self.rho_de)?;
        in_unit("rho_ie", &self.rho_ie)?;
        in_unit("m_mech", &self.m_mech)?;
        in_unit("y_mech", &self.y_mech)?;
        let sums_to_one = |name: &str, total: f64| -> Result<()> {
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::validation(format!(
                    "unnormalized joint: {name} sums to {total}"
                )));
            }
            Ok(())
        };
        sums_to_one("p_z", self.p_z.iter().sum())?;
        for z in 0..self.n_z {
            sums_to_one(
                &format!("p_a_given_z[z={z}]"),
                self.p_a_given_z[self.za(z, 0)] + self.p_a_given_z[self.za(z, 1)],
            )?;
            for a in 0..2 {
                for (name, rho) in [("rho_de", &self.rho_de), ("rho_ie", &self.rho_ie)] {
                    let total: f64 = (0..l).map(|u| rho[self.idx_zau(z, a, u)]).sum();
                    sums_to_one(&format!("{name}[z={z},a={a}]"), total)?;
                }
            }
        }
        Ok(())
    }

    /// Attribute marginal `P(a) = Σ_z P(z)·P(a|z)`.
    pub fn p_a(&self, a: usize) -> f64 {
        (0..self.n_z).map(|z| self.p_z[z] * self.p_a_given_z[self.za(z, a)]).sum()
    }

    /// Implied observational mediator conditional `P(m=1|z,a)`.
    pub fn m_cond(&self, z: usize, a: usize) -> f64 {
        (0..self.latent_card)
            .map(|v| self.rho_ie[self.idx_zau(z, a, v)] * self.m_mech[self.idx_zau(z, a, v)])
            .sum()
    }

    /// Implied observational outcome conditional `P(y=1|m,z,a)`.
    pub fn y_cond(&self, m: usize, z: usize, a: usize) -> f64 {
        (0..self.latent_card)
            .map(|u| self.rho_de[self.idx_zau(z, a, u)] * self.y_mech[self.idx_zamu(z, a, m, u)])
            .sum()
    }

    /// Implied observational outcome rate `P(y|a)`.
    pub fn observed_rate(&self, y: usize, a: usize) -> f64 {
        let p_a = self.p_a(a);
        let mut total = 0.0;
        for z in 0..self.n_z {
            let w = self.p_z[z] * self.p_a_given_z[self.za(z, a)] / p_a;
            let m1 = self.m_cond(z, a);
            let q0 = class_prob(self.y_cond(0, z, a), y);
            let q1 = class_prob(self.y_cond(1, z, a), y);
            total += w * ((1.0 - m1) * q0 + m1 * q1);
        }
        total
    }

    /// Exact counterfactual `P(y_{a_y, m_{a_m}} | a_c)` by enumeration.
    ///
    /// Mechanism surgery: the mediator mechanism is read at arm `a_m` and the
    /// outcome mechanism at arm `a_y`, while both latent posteriors and the
    /// confounder law stay conditioned on the observed group `a_c`.
    pub fn counterfactual(&self, y: usize, a_y: usize, a_m: usize, a_c: usize) -> f64 {
        let l = self.latent_card;
        let p_c = self.p_a(a_c);
        let mut total = 0.0;
        for z in 0..self.n_z {
            let w = self.p_z[z] * self.p_a_given_z[self.za(z, a_c)] / p_c;
            let mut m1 = 0.0;
            for v in 0..l {
                m1 += self.rho_ie[self.idx_zau(z, a_c, v)] * self.m_mech[self.idx_zau(z, a_m, v)];
            }
            let mut val = 0.0;
            for u in 0..l {
                let q0 = class_prob(self.y_mech[self.idx_zamu(z, a_y, 0, u)], y);
                let q1 = class_prob(self.y_mech[self.idx_zamu(z, a_y, 1, u)], y);
                val += self.rho_de[self.idx_zau(z, a_c, u)] * ((1.0 - m1) * q0 + m1 * q1);
            }
            total += w * val;
        }
        total
    }

    /// Total-variation distance between the model's implied observational
    /// joint `P(z,a,m,y)` and the joint composed from `tables`.
    pub fn obs_total_variation(&self, tables: &ObsTables) -> f64 {
        let mut dist = 0.0;
        for z in 0..self.n_z {
            for a in 0..2 {
                let base_scm = self.p_z[z] * self.p_a_given_z[self.za(z, a)];
                let base_tab = tables.p_z(z) * tables.p_a_given_z(z, a);
                let m1_scm = self.m_cond(z, a);
                for m in 0..2 {
                    let pm_scm = if m == 1 { m1_scm } else { 1.0 - m1_scm };
                    let pm_tab = tables.p_m_given_za(z, a, m);
                    let y1_scm = self.y_cond(m, z, a);
                    for y in 0..2 {
                        let py_scm = class_prob(y1_scm, y);
                        let py_tab = tables.p_y_given_mza(y, m, z, a);
                        dist += (base_scm * pm_scm * py_scm - base_tab * pm_tab * py_tab).abs();
                    }
                }
            }
        }
        dist / 2.0
    }

    /// Whether both latent channels respect their sensitivity boxes:
    /// `w_lo(a|z) ≤ P(u|z)/P(u|z,a) ≤ w_hi(a|z)` for every `(z, a, u)`, with
    /// `P(u|z) = Σ_a P(a|z)·P(u|z,a)`. The outcome channel is checked against
    /// `Γ_Y`, the mediator channel against `Γ_M`.
    pub fn gmsm_feasible(&self, params: &SensitivityParams, slack: f64) -> bool {
        for (rho, gamma) in [(&self.rho_de, params.gamma_y()), (&self.rho_ie, params.gamma_m())] {
            for z in 0..self.n_z {
                let p1 = self.p_a_given_z[self.za(z, 1)];
                for u in 0..self.latent_card {
                    let r0 = rho[self.idx_zau(z, 0, u)];
                    let r1 = rho[self.idx_zau(z, 1, u)];
                    let pi = (1.0 - p1) * r0 + p1 * r1;
                    for (arm_rho, p_arm) in [(r0, 1.0 - p1), (r1, p1)] {
                        if arm_rho == 0.0 {
                            if pi == 0.0 {
                                continue;
                            }
                            return false;
                        }
                        let (w_lo, w_hi) = box_weights(p_arm, gamma);
                        let ratio = pi / arm_rho;
                        if ratio < w_lo - slack || ratio > w_hi + slack {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

/// `P(class = y)` from the probability of class 1.
fn class_prob(p_one: f64, y: usize) -> f64 {
    if y == 1 {
        p_one
    } else {
        1.0 - p_one
    }
}

/// Sensitivity box `(w_lo, w_hi)` for arm propensity `p` under budget `γ`.
fn box_weights(p: f64, gamma: f64) -> (f64, f64) {
    ((1.0 - 1.0 / gamma) * p + 1.0 / gamma, (1.0 - gamma) * p + gamma)
}

/// The three path-specific effects of one explicit model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScmEffects {
    /// Direct effect, conditioned on `a_i`.
    pub de: f64,
    /// Indirect effect, conditioned on `a_j`.
    pub ie: f64,
    /// Spurious effect.
    pub se: f64,
}

/// Exact path-specific effects of an explicit discrete model, by enumeration.
///
/// Conventions match [`crate::bounds::bound_effects`]: the direct effect is
/// `P(y_{a_j, m_{a_i}} | a_i) − P(y | a_i)`, the indirect effect is
/// `P(y_{a_i, m_{a_j}} | a_j) − P(y_{a_i} | a_j)`, and the spurious effect is
/// `P(y_{a_i} | a_j) − P(y | a_i)`.
pub fn evaluate_scm_effects(scm: &DiscreteScm, y: usize, a_i: u8, a_j: u8) -> Result<ScmEffects> {
    scm.validate()?;
    for (label, a) in [("a_i", a_i), ("a_j", a_j)] {
        if a > 1 {
            return Err(Error::validation(format!("{label} must be 0 or 1, got {a}")));
        }
    }
    if a_i == a_j {
        return Err(Error::validation("effects need two distinct attribute values"));
    }
    if y > 1 {
        return Err(Error::validation(format!("outcome class must be 0 or 1, got {y}")));
    }
    let (ai, aj) = (a_i as usize, a_j as usize);
    for a in [ai, aj] {
        if scm.p_a(a) < 1e-9 {
            return Err(Error::numerics(format!(
                "attribute arm a={a} has probability below 1e-9; effects would divide by it"
            )));
        }
    }
    let rate_i = scm.observed_rate(y, ai);
    let single = scm.counterfactual(y, ai, ai, aj);
    Ok(ScmEffects {
        de: scm.counterfactual(y, aj, ai, ai) - rate_i,
        ie: scm.counterfactual(y, ai, aj, aj) - single,
        se: single - rate_i,
    })
}

/// Endpoint witnesses: the accepted models attaining each achieved endpoint.
#[derive(Debug, Clone)]
pub struct SearchWitnesses {
    /// Model attaining the achieved direct-effect minimum.
    pub de_lo: DiscreteScm,
    /// Model attaining the achieved direct-effect maximum.
    pub de_hi: DiscreteScm,
    /// Model attaining the achieved indirect-effect minimum.
    pub ie_lo: DiscreteScm,
    /// Model attaining the achieved indirect-effect maximum.
    pub ie_hi: DiscreteScm,
    /// Model attaining the achieved spurious-effect minimum.
    pub se_lo: DiscreteScm,
    /// Model attaining the achieved spurious-effect maximum.
    pub se_hi: DiscreteScm,
}

/// Result of a compatible-model search for one effect query.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Achieved direct-effect range (inner approximation of the sharp set).
    pub achieved_de: Interval,
    /// Achieved indirect-effect range.
    pub achieved_ie: Interval,
    /// Achieved spurious-effect range.
    pub achieved_se: Interval,
    /// Closed-form interval bounds for the same query.
    pub theorem: EffectBounds,
    /// Candidates that passed the observational-match and box filters.
    pub accepted: usize,
    /// Candidates drawn.
    pub budget: usize,
    /// Models attaining the achieved endpoints.
    pub witnesses: SearchWitnesses,
}

impl SearchOutcome {
    /// Signed gaps `(achieved_lo − bound_lo, bound_hi − achieved_hi)` per
    /// effect; all six are non-negative exactly when the achieved ranges sit
    /// inside the closed-form bounds.
    pub fn endpoint_gaps(&self) -> [f64; 6] {
        [
            self.achieved_de.lo - self.theorem.de.lo,
            self.theorem.de.hi - self.achieved_de.hi,
            self.achieved_ie.lo - self.theorem.ie.lo,
            self.theorem.ie.hi - self.achieved_ie.hi,
            self.achieved_se.lo - self.theorem.se.lo,
            self.theorem.se.hi - self.achieved_se.hi,
        ]
    }

    /// Mean of the six endpoint gaps.
    pub fn mean_endpoint_gap(&self) -> f64 {
        self.endpoint_gaps().iter().sum::<f64>() / 6.0
    }

    /// Whether every achieved range sits inside its closed-form interval.
    pub fn sound(&self, tol: f64) -> bool {
        self.achieved_de.within(&self.theorem.de, tol)
            && self.achieved_ie.within(&self.theorem.ie, tol)
            && self.achieved_se.within(&self.theorem.se, tol)
    }
}

/// Offsets into the flat raw parameter vector a candidate is built from.
///
/// Layout per confounder cell: anchor simplex and tilt direction plus a tilt
/// fraction for each latent channel, a channel selector (only the selected
/// channel's posteriors may differ across arms), then raw mechanism levels
/// for the mediator (per arm) and the outcome (per arm and mediator value).
#[derive(Debug, Clone, Copy)]
struct Layout {
    n_z: usize,
    l: usize,
}

impl Layout {
    fn new(n_z: usize, l: usize) -> Self {
        Layout { n_z, l }
    }

    fn rho0_de(&self, z: usize) -> usize {
        z * self.l
    }

    fn xi_de(&self, z: usize) -> usize {
        self.n_z * self.l + z * self.l
    }

    fn s_de(&self, z: usize) -> usize {
        2 * self.n_z * self.l + z
    }

    fn rho0_ie(&self, z: usize) -> usize {
        2 * self.n_z * self.l + self.n_z + z * self.l
    }

    fn xi_ie(&self, z: usize) -> usize {
        3 * self.n_z * self.l + self.n_z + z * self.l
    }

    fn s_ie(&self, z: usize) -> usize {
        4 * self.n_z * self.l + self.n_z + z
    }

    /// Channel selector for the cell: ≥ 0.5 tilts the outcome channel,
    /// < 0.5 the mediator channel (the other stays arm-constant).
    fn sel(&self, z: usize) -> usize {
        4 * self.n_z * self.l + 2 * self.n_z + z
    }

    fn m_raw(&self, z: usize, a: usize) -> usize {
        4 * self.n_z * self.l + 3 * self.n_z + (z * 2 + a) * self.l
    }

    fn y_raw(&self, z: usize, a: usize, m: usize) -> usize {
        6 * self.n_z * self.l + 3 * self.n_z + ((z * 2 + a) * 2 + m) * self.l
    }

    fn len(&self) -> usize {
        self.n_z * (10 * self.l + 3)
    }
}

/// Normalize `raw` into a strictly positive simplex point.
fn simplex_from_raw(raw: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = raw.iter().map(|&r| r.clamp(0.0, 1.0) + SIMPLEX_FLOOR).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Largest tilt fraction `s ∈ [0,1]` such that the posterior pair
/// `(ρ₀, (1−s)·ρ₀ + s·ξ)` respects both arms' sensitivity boxes.
///
/// Both constraints are monotone along the tilt segment (the arm-0 ratio is
/// affine in `s`, the arm-1 ratio is a pole-free Möbius function of `s`), so
/// the feasible set is an interval containing `s = 0` and bisection finds its
/// right endpoint. Any box-feasible posterior pair is reachable by anchoring
/// `ρ₀` at one posterior and pointing `ξ` at the other.
fn tilt_limit(rho0: &[f64], xi: &[f64], p1: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        return 0.0;
    }
    let p0 = 1.0 - p1;
    let (w_lo_0, w_hi_0) = box_weights(p0, gamma);
    let (w_lo_1, w_hi_1) = box_weights(p1, gamma);
    let feasible = |s: f64| -> bool {
        for (r0, x) in rho0.iter().zip(xi) {
            let r1 = (1.0 - s) * r0 + s * x;
            let pi = p0 * r0 + p1 * r1;
            let ratio0 = pi / r0;
            if ratio0 < w_lo_0 || ratio0 > w_hi_0 {
                return false;
            }
            let ratio1 = pi / r1;
            if ratio1 < w_lo_1 || ratio1 > w_hi_1 {
                return false;
            }
        }
        true
    };
    if feasible(1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Fit a `[0,1]`-valued mechanism over the latent so its posterior mixture
/// hits `target` exactly: shift all raw levels by a common `t` (clamping to
/// `[0,1]`) and bisect on `t`, using that `Σ_u ρ_u·clamp(b_u + t)` runs
/// monotonically from 0 at `t = −1` to 1 at `t = 1`.
fn fit_mechanism(rho: &[f64], raw: &[f64], target: f64) -> Vec<f64> {
    let level = |t: f64| -> f64 {
        rho.iter().zip(raw).map(|(&r, &b)| r * (b.clamp(0.0, 1.0) + t).clamp(0.0, 1.0)).sum()
    };
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if level(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    raw.iter().map(|&b| (b.clamp(0.0, 1.0) + t).clamp(0.0, 1.0)).collect()
}

/// Build the candidate model encoded by `raw`, feasible for `params` and
/// matching the observational conditionals of `tables` by construction.
fn build_candidate(
    tables: &ObsTables,
    raw: &[f64],
    l: usize,
    params: &SensitivityParams,
) -> DiscreteScm {
    let n_z = tables.n_z();
    let lay = Layout::new(n_z, l);
    debug_assert_eq!(raw.len(), lay.len());
    let mut scm = DiscreteScm {
        n_z,
        latent_card: l,
        p_z: (0..n_z).map(|z| tables.p_z(z)).collect(),
        p_a_given_z: (0..n_z).flat_map(|z| [tables.p_a_given_z(z, 0), tables.p_a_given_z(z, 1)]).collect(),
        rho_de: vec![0.0; n_z * 2 * l],
        rho_ie: vec![0.0; n_z * 2 * l],
        m_mech: vec![0.0; n_z * 2 * l],
        y_mech: vec![0.0; n_z * 4 * l],
    };
    for z in 0..n_z {
        let p1 = tables.p_a_given_z(z, 1);
        let outcome_channel_active = raw[lay.sel(z)] >= 0.5;
        for (channel, gamma, rho0_off, xi_off, s_off, active) in [
            (0, params.gamma_y(), lay.rho0_de(z), lay.xi_de(z), lay.s_de(z), outcome_channel_active),
            (1, params.gamma_m(), lay.rho0_ie(z), lay.xi_ie(z), lay.s_ie(z), !outcome_channel_active),
        ] {
            let rho0 = simplex_from_raw(&raw[rho0_off..rho0_off + l]);
            let xi = simplex_from_raw(&raw[xi_off..xi_off + l]);
            let s = if active {
                raw[s_off].clamp(0.0, 1.0) * tilt_limit(&rho0, &xi, p1, gamma)
            } else {
                0.0
            };
            let rho = if channel == 0 { &mut scm.rho_de } else { &mut scm.rho_ie };
            for u in 0..l {
                rho[(z * 2) * l + u] = rho0[u];
                rho[(z * 2 + 1) * l + u] = (1.0 - s) * rho0[u] + s * xi[u];
            }
        }
        for a in 0..2 {
            let rho_m = &scm.rho_ie[(z * 2 + a) * l..(z * 2 + a + 1) * l];
            let m_off = lay.m_raw(z, a);
            let fitted =
                fit_mechanism(rho_m, &raw[m_off..m_off + l], tables.p_m_given_za(z, a, 1));
            scm.m_mech[(z * 2 + a) * l..(z * 2 + a + 1) * l].copy_from_slice(&fitted);
            let rho_y = scm.rho_de[(z * 2 + a) * l..(z * 2 + a + 1) * l].to_vec();
            for m in 0..2 {
                let y_off = lay.y_raw(z, a, m);
                let fitted =
                    fit_mechanism(&rho_y, &raw[y_off..y_off + l], tables.p_y_given_mza(1, m, z, a));
                let dst = ((z * 2 + a) * 2 + m) * l;
                scm.y_mech[dst..dst + l].copy_from_slice(&fitted);
            }
        }
    }
    scm
}

/// Draw a raw parameter vector, biased toward the corners where extremal
/// models live: maximal tilts, saturated mechanism levels, and occasional
/// concentrated posteriors.
fn sample_raw(rng: &mut ChaCha8Rng, lay: &Layout) -> Vec<f64> {
    let mut raw = vec![0.0; lay.len()];
    let l = lay.l;
    for z in 0..lay.n_z {
        for off in [lay.rho0_de(z), lay.xi_de(z), lay.rho0_ie(z), lay.xi_ie(z)] {
            if rng.gen_bool(0.15) {
                let spike = rng.gen_range(0..l);
                for u in 0..l {
                    raw[off + u] = if u == spike { 1.0 } else { 0.0 };
                }
            } else {
                for u in 0..l {
                    raw[off + u] = rng.gen();
                }
            }
        }
        for off in [lay.s_de(z), lay.s_ie(z)] {
            raw[off] = if rng.gen_bool(0.5) { 1.0 } else { rng.gen() };
        }
        raw[lay.sel(z)] = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        for a in 0..2 {
            let m_off = lay.m_raw(z, a);
            for u in 0..l {
                raw[m_off + u] = corner_or_uniform(rng);
            }
            for m in 0..2 {
                let y_off = lay.y_raw(z, a, m);
                for u in 0..l {
                    raw[y_off + u] = corner_or_uniform(rng);
                }
            }
        }
    }
    raw
}

fn corner_or_uniform(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.5) {
        if rng.gen_bool(0.5) {
            1.0
        } else {
            0.0
        }
    } else {
        rng.gen()
    }
}

/// Deterministic per-stream RNG; candidate `i` and each refinement target get
/// their own stream so results are independent of evaluation order.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

fn accept(
    scm: &DiscreteScm,
    tables: &ObsTables,
    params: &SensitivityParams,
    tol: f64,
) -> bool {
    scm.obs_total_variation(tables) <= tol && scm.gmsm_feasible(params, BOX_SLACK)
}

fn pick_effect(k: usize, eff: &ScmEffects) -> f64 {
    match k / 2 {
        0 => eff.de,
        1 => eff.ie,
        _ => eff.se,
    }
}

/// One endpoint candidate: its raw encoding, built model, and effect value.
#[derive(Clone)]
struct Extreme {
    value: f64,
    raw: Vec<f64>,
    scm: DiscreteScm,
}

fn require_binary_instance(tables: &ObsTables) -> Result<()> {
    if tables.k_m() != 2 || tables.k_y() != Some(2) {
        return Err(Error::validation(
            "compatible-model search handles binary mediators and outcomes only",
        ));
    }
    Ok(())
}

/// Search the compatible model class for the achieved range of each effect.
///
/// Draws `config.budget` candidate models; accepts those whose implied
/// observational law matches `tables` within `config.obs_match_tol` total
/// variation and whose latent posteriors respect the sensitivity boxes;
/// evaluates the effects exactly on every accepted candidate; hill-climbs the
/// six endpoint witnesses; and returns the achieved ranges alongside the
/// closed-form bounds for the same query. The achieved range is an inner
/// approximation of the sharp set and is never claimed sharp itself — the
/// endpoint gaps quantify how much of the closed-form interval was realized.
pub fn search_effect_range(
    tables: &ObsTables,
    params: &SensitivityParams,
    y: usize,
    a_i: u8,
    a_j: u8,
    config: &CompatSearchConfig,
) -> Result<SearchOutcome> {
    config.validate()?;
    require_binary_instance(tables)?;
    let theorem = bound_effects(tables, params, y, a_i, a_j)?;
    let l = config.latent_cardinality;
    let lay = Layout::new(tables.n_z(), l);

    let mut accepted = 0usize;
    let mut extremes: Vec<Extreme> = Vec::new();
    for idx in 0..config.budget {
        let mut rng = stream_rng(config.seed, idx as u64);
        let raw = sample_raw(&mut rng, &lay);
        let scm = build_candidate(tables, &raw, l, params);
        if !accept(&scm, tables, params, config.obs_match_tol) {
            continue;
        }
        let eff = evaluate_scm_effects(&scm, y, a_i, a_j)?;
        accepted += 1;
        if extremes.is_empty() {
            for k in 0..6 {
                extremes.push(Extreme {
                    value: pick_effect(k, &eff),
                    raw: raw.clone(),
                    scm: scm.clone(),
                });
            }
            continue;
        }
        for (k, ext) in extremes.iter_mut().enumerate() {
            let v = pick_effect(k, &eff);
            let better = if k % 2 == 1 { v > ext.value } else { v < ext.value };
            if better {
                ext.value = v;
                ext.raw = raw.clone();
                ext.scm = scm.clone();
            }
        }
    }
    if extremes.is_empty() {
        return Err(Error::search(format!(
            "no candidate matched the observational law within tolerance {} in {} draws; \
             loosen obs_match_tol or raise the budget",
            config.obs_match_tol, config.budget
        )));
    }

    for (k, ext) in extremes.iter_mut().enumerate() {
        refine_extreme(tables, params, config, y, a_i, a_j, ext, k)?;
    }

    let iv = |lo: &Extreme, hi: &Extreme| Interval::new(lo.value, hi.value);
    Ok(SearchOutcome {
        achieved_de: iv(&extremes[0], &extremes[1])?,
        achieved_ie: iv(&extremes[2], &extremes[3])?,
        achieved_se: iv(&extremes[4], &extremes[5])?,
        theorem,
        accepted,
        budget: config.budget,
        witnesses: SearchWitnesses {
            de_lo: extremes[0].scm.clone(),
            de_hi: extremes[1].scm.clone(),
            ie_lo: extremes[2].scm.clone(),
            ie_hi: extremes[3].scm.clone(),
            se_lo: extremes[4].scm.clone(),
            se_hi: extremes[5].scm.clone(),
        },
    })
}

/// Single-coordinate stochastic hill-climb on one endpoint witness.
#[allow(clippy::too_many_arguments)]
fn refine_extreme(
    tables: &ObsTables,
    params: &SensitivityParams,
    config: &CompatSearchConfig,
    y: usize,
    a_i: u8,
    a_j: u8,
    ext: &mut Extreme,
    k: usize,
) -> Result<()> {
    let maximize = k % 2 == 1;
    let mut rng = stream_rng(config.seed, u64::MAX - k as u64);
    for step in 0..config.refine_steps {
        let mut raw = ext.raw.clone();
        let coord = rng.gen_range(0..raw.len());
        if rng.gen_bool(0.25) {
            raw[coord] = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        } else {
            let scale = 0.02 + 0.5 * (1.0 - step as f64 / config.refine_steps as f64);
            raw[coord] = (raw[coord] + scale * (rng.gen::<f64>() * 2.0 - 1.0)).clamp(0.0, 1.0);
        }
        let scm = build_candidate(tables, &raw, config.latent_cardinality, params);
        if !accept(&scm, tables, params, config.obs_match_tol) {
            continue;
        }
        let eff = evaluate_scm_effects(&scm, y, a_i, a_j)?;
        let v = pick_effect(k, &eff);
        if (maximize && v > ext.value) || (!maximize && v < ext.value) {
            ext.value = v;
            ext.raw = raw;
            ext.scm = scm;
        }
    }
    Ok(())
}

/// Run the search at a ladder of nondecreasing budgets with a shared
/// candidate stream, folding lower-rung witnesses into higher rungs.
///
/// A model feasible at budget `Γ` is feasible at any `Γ' ≥ Γ` (the boxes
/// nest), so the cumulative merge keeps every reported range a legitimate
/// inner approximation while guaranteeing the achieved ranges nest.
pub fn search_effect_ladder(
    tables: &ObsTables,
    levels: &[SensitivityParams],
    y: usize,
    a_i: u8,
    a_j: u8,
    config: &CompatSearchConfig,
) -> Result<Vec<SearchOutcome>> {
    if levels.is_empty() {
        return Err(Error::validation("budget ladder must have at least one level"));
    }
    for pair in levels.windows(2) {
        if pair[1].gamma_m() < pair[0].gamma_m() || pair[1].gamma_y() < pair[0].gamma_y() {
            return Err(Error::validation(
                "budget ladder must be nondecreasing in both Γ_M and Γ_Y",
            ));
        }
    }
    let mut outcomes: Vec<SearchOutcome> = Vec::with_capacity(levels.len());
    for params in levels {
        let mut outcome = search_effect_range(tables, params, y, a_i, a_j, config)?;
        if let Some(prev) = outcomes.last() {
            merge_endpoint(
                &mut outcome.achieved_de,
                &mut outcome.witnesses.de_lo,
                &mut outcome.witnesses.de_hi,
                &prev.achieved_de,
                &prev.witnesses.de_lo,
                &prev.witnesses.de_hi,
            );
            merge_endpoint(
                &mut outcome.achieved_ie,
                &mut outcome.witnesses.ie_lo,
                &mut outcome.witnesses.ie_hi,
                &prev.achieved_ie,
                &prev.witnesses.ie_lo,
                &prev.witnesses.ie_hi,
            );
            merge_endpoint(
                &mut outcome.achieved_se,
                &mut outcome.witnesses.se_lo,
                &mut outcome.witnesses.se_hi,
                &prev.achieved_se,
                &prev.witnesses.se_lo,
                &prev.witnesses.se_hi,
            );
        }
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

fn merge_endpoint(
    achieved: &mut Interval,
    lo_witness: &mut DiscreteScm,
    hi_witness: &mut DiscreteScm,
    prev: &Interval,
    prev_lo: &DiscreteScm,
    prev_hi: &DiscreteScm,
) {
    if prev.lo < achieved.lo {
        achieved.lo = prev.lo;
        *lo_witness = prev_lo.clone();
    }
    if prev.hi > achieved.hi {
        achieved.hi = prev.hi;
        *hi_witness = prev_hi.clone();
    }
}

/// JSON report for one search outcome.
pub fn report_json(outcome: &SearchOutcome) -> serde_json::Value {
    let iv = |i: &Interval| json!({ "lo": i.lo, "hi": i.hi });
    let gaps = outcome.endpoint_gaps();
    json!({
        "achieved": {
            "de": iv(&outcome.achieved_de),
            "ie": iv(&outcome.achieved_ie),
            "se": iv(&outcome.achieved_se),
        },
        "theorem": {
            "de": iv(&outcome.theorem.de),
            "ie": iv(&outcome.theorem.ie),
            "se": iv(&outcome.theorem.se),
        },
        "gaps": {
            "de": { "lo": gaps[0], "hi": gaps[1] },
            "ie": { "lo": gaps[2], "hi": gaps[3] },
            "se": { "lo": gaps[4], "hi": gaps[5] },
            "mean": outcome.mean_endpoint_gap(),
        },
        "accepted_count": outcome.accepted,
        "budget": outcome.budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::fit_frequency_tables;
    use crate::model::{validate_dataset, ColumnSchema, RawTable, Role, VariableDomain};
    use approx::assert_abs_diff_eq;

    /// Dataset from explicit per-stratum counts `(a, z, m, y1, total)`.
    fn dataset_from_counts(
        n_z: usize,
        cells: &[(u8, usize, usize, usize, usize)],
    ) -> crate::model::Dataset {
        let columns = vec![
            ColumnSchema { name: "a".into(), role: Role::Attribute, domain: VariableDomain::Binary },
            ColumnSchema {
                name: "z".into(),
                role: Role::Confounder,
                domain: VariableDomain::Categorical(n_z),
            },
            ColumnSchema { name: "m".into(), role: Role::Mediator, domain: VariableDomain::Binary },
            ColumnSchema { name: "y".into(), role: Role::Outcome, domain: VariableDomain::Binary },
        ];
        let mut rows = Vec::new();
        for &(a, z, m, ones, total) in cells {
            assert!(ones <= total);
            for i in 0..total {
                let y = if i < ones { 1.0 } else { 0.0 };
                rows.push(vec![a as f64, z as f64, m as f64, y]);
            }
        }
        validate_dataset(&RawTable { columns, rows }).unwrap()
    }

    /// Hand-built binary tables with exact rational conditionals and
    /// z-varying propensities.
    fn hand_tables() -> ObsTables {
        let cells = [
            (0u8, 0usize, 0usize, 8usize, 20usize),
            (0, 0, 1, 12, 20),
            (1, 0, 0, 5, 10),
            (1, 0, 1, 21, 30),
            (0, 1, 0, 2, 10),
            (0, 1, 1, 3, 10),
            (1, 1, 0, 18, 30),
            (1, 1, 1, 24, 30),
        ];
        fit_frequency_tables(&dataset_from_counts(2, &cells), 0.0).unwrap()
    }

    /// Random binary tables with strictly interior conditionals.
    fn random_tables(seed: u64) -> ObsTables {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cells = Vec::new();
        for a in 0..2u8 {
            for z in 0..2usize {
                for m in 0..2usize {
                    let total = rng.gen_range(40..160);
                    let ones = rng.gen_range(1..total);
                    cells.push((a, z, m, ones, total));
                }
            }
        }
        fit_frequency_tables(&dataset_from_counts(2, &cells), 0.5).unwrap()
    }

    fn quick_config(budget: usize, refine_steps: usize) -> CompatSearchConfig {
        CompatSearchConfig { budget, refine_steps, seed: 7, ..CompatSearchConfig::default() }
    }

    fn sample_scm(tables: &ObsTables, params: &SensitivityParams, seed: u64) -> DiscreteScm {
        let lay = Layout::new(tables.n_z(), 2);
        let mut rng = stream_rng(seed, 0);
        let raw = sample_raw(&mut rng, &lay);
        build_candidate(tables, &raw, 2, params)
    }

    #[test]
    fn config_defaults_and_validation() {
        let config = CompatSearchConfig::default();
        assert_eq!(config.latent_cardinality, 2);
        assert_eq!(config.obs_match_tol, 1e-3);
        config.validate().unwrap();

        let bad = CompatSearchConfig { latent_cardinality: 1, ..config.clone() };
        assert!(bad.validate().is_err());
        let bad = CompatSearchConfig { budget: 0, ..config.clone() };
        assert!(bad.validate().is_err());
        let bad = CompatSearchConfig { obs_match_tol: 0.0, ..config };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn evaluate_rejects_unnormalized_joint() {
        let tables = hand_tables();
        let params = SensitivityParams::new(2.0, 2.0).unwrap();
        let mut scm = sample_scm(&tables, &params, 3);
        scm.p_z[0] += 0.1;
        let err = evaluate_scm_effects(&scm, 1, 1, 0).unwrap_err();
        assert!(err.to_string().contains("unnormalized"), "got: {err}");
    }

    #[test]
    fn candidates_match_observational_law_and_boxes() {
        let tables = hand_tables();
        let params = SensitivityParams::new(3.0, 2.0).unwrap();
        for seed in 0..40 {
            let scm = sample_scm(&tables, &params, seed);
            scm.validate().unwrap();
            assert!(scm.obs_total_variation(&tables) < 1e-12);
            assert!(scm.gmsm_feasible(&params, BOX_SLACK));
            // Consistency: intervening with the factual arm reproduces the
            // observed rate, which in turn matches the tables.
            for a in 0..2 {
                for y in 0..2 {
                    let rate = scm.observed_rate(y, a);
                    assert_abs_diff_eq!(scm.counterfactual(y, a, a, a), rate, epsilon = 1e-12);
                    assert_abs_diff_eq!(rate, tables.p_y_given_a(y, a), epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn effects_telescope_to_total_variation_by_enumeration() {
        let tables = random_tables(11);
        let params = SensitivityParams::new(4.0, 3.0).unwrap();
        for seed in 0..25 {
            let scm = sample_scm(&tables, &params, 100 + seed);
            let forward = evaluate_scm_effects(&scm, 1, 0, 1).unwrap();
            let reverse = evaluate_scm_effects(&scm, 1, 1, 0).unwrap();
            let tv = scm.observed_rate(1, 1) - scm.observed_rate(1, 0);
            assert_abs_diff_eq!(forward.de - reverse.ie - reverse.se, tv, epsilon = 1e-12);
        }
    }

    #[test]
    fn de_ie_vanish_when_outcome_mechanism_ignores_attribute_and_mediator() {
        // P(y=1|m,z,a,u) = g(z,u) regardless of arm or mediator; posteriors
        // still tilt across arms, but surgery on A cannot move the outcome.
        let l = 2;
        let g = [[0.3, 0.8], [0.1, 0.9]];
        let mut y_mech = vec![0.0; 2 * 4 * l];
        for z in 0..2 {
            for a in 0..2 {
                for m in 0..2 {
                    for u in 0..l {
                        y_mech[((z * 2 + a) * 2 + m) * l + u] = g[z][u];
                    }
                }
            }
        }
        let scm = DiscreteScm {
            n_z: 2,
            latent_card: l,
            p_z: vec![0.5, 0.5],
            p_a_given_z: vec![0.6, 0.4, 0.3, 0.7],
            rho_de: vec![0.7, 0.3, 0.5, 0.5, 0.2, 0.8, 0.4, 0.6],
            rho_ie: vec![0.6, 0.4, 0.1, 0.9, 0.5, 0.5, 0.3, 0.7],
            m_mech: vec![0.2, 0.9, 0.4, 0.6, 0.8, 0.1, 0.5, 0.5],
            y_mech,
        };
        let eff = evaluate_scm_effects(&scm, 1, 0, 1).unwrap();
        assert_abs_diff_eq!(eff.de, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eff.ie, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn se_vanishes_when_attribute_fully_randomized() {
        // Uniform propensities and arm-equal posteriors: group membership
        // carries no information about Z or the latents.
        let l = 2;
        let rho = vec![0.7, 0.3, 0.7, 0.3, 0.2, 0.8, 0.2, 0.8];
        let scm = DiscreteScm {
            n_z: 2,
            latent_card: l,
            p_z: vec![0.4, 0.6],
            p_a_given_z: vec![0.5, 0.5, 0.5, 0.5],
            rho_de: rho.clone(),
            rho_ie: rho,
            m_mech: vec![0.2, 0.9, 0.4, 0.6, 0.8, 0.1, 0.5, 0.5],
            y_mech: (0..16).map(|i| 0.05 + 0.05 * i as f64).collect(),
        };
        let eff = evaluate_scm_effects(&scm, 1, 0, 1).unwrap();
        assert_abs_diff_eq!(eff.se, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gamma_one_achieves_plugin_point() {
        let tables = hand_tables();
        let params = SensitivityParams::new(1.0, 1.0).unwrap();
        let outcome =
            search_effect_range(&tables, &params, 1, 1, 0, &quick_config(300, 40)).unwrap();
        assert_eq!(outcome.accepted, 300);
        for (achieved, naive) in [
            (outcome.achieved_de, outcome.theorem.de_naive),
            (outcome.achieved_ie, outcome.theorem.ie_naive),
            (outcome.achieved_se, outcome.theorem.se_naive),
        ] {
            assert!(achieved.width() < 1e-6, "width {}", achieved.width());
            assert_abs_diff_eq!(achieved.lo, naive, epsilon = 1e-9);
        }
    }

    #[test]
    fn achieved_range_within_closed_form_on_hand_tables() {
        let tables = hand_tables();
        let params = SensitivityParams::new(2.0, 2.0).unwrap();
        let config = CompatSearchConfig { budget: 100_000, seed: 7, ..Default::default() };
        let outcome = search_effect_range(&tables, &params, 1, 1, 0, &config).unwrap();
        assert_eq!(outcome.accepted, outcome.budget);
        assert!(outcome.sound(1e-9), "achieved ranges left the closed-form bounds");
        let gaps = outcome.endpoint_gaps();
        // The direct effect's mediator factor is pinned by consistency and
        // only its outcome transport moves, so the closed form is near-sharp
        // there. The spurious and indirect closed forms carry structural
        // slack no single model can realize: they shift both channels in one
        // confounder cell (the cell's latent pair must stay independent, so
        // only one channel may move), and the indirect bound extremizes its
        // two counterfactual terms in opposite directions even though both
        // integrate the same outcome transport. The thresholds below pin the
        // measured slack of this converged search as a regression guard.
        assert!(gaps[0] < 0.03 && gaps[1] < 0.03, "direct-effect gaps {gaps:?}");
        assert!(gaps[4] < 0.08 && gaps[5] < 0.08, "spurious-effect gaps {gaps:?}");
        assert!(gaps[2] < 0.55 && gaps[3] < 0.55, "indirect-effect gaps {gaps:?}");
    }

    #[test]
    fn achieved_ranges_sound_on_random_tables() {
        let params = SensitivityParams::new(2.0, 2.0).unwrap();
        for seed in [21u64, 22, 23] {
            let tables = random_tables(seed);
            let outcome =
                search_effect_range(&tables, &params, 1, 1, 0, &quick_config(2_000, 120)).unwrap();
            assert!(outcome.sound(1e-9), "seed {seed}: achieved left the closed-form bounds");
        }
    }

    #[test]
    fn unconfounded_structure_keeps_zero_in_achieved_de() {
        // M ⫫ A | Z and Y ⫫ A | (Z, M) by construction, so the plug-in
        // model (zero tilt) has zero direct effect and stays compatible.
        let cells = [
            (0u8, 0usize, 0usize, 9usize, 30usize),
            (0, 0, 1, 21, 30),
            (1, 0, 0, 6, 20),
            (1, 0, 1, 14, 20),
            (0, 1, 0, 5, 25),
            (0, 1, 1, 20, 25),
            (1, 1, 0, 7, 35),
            (1, 1, 1, 28, 35),
        ];
        let tables = fit_frequency_tables(&dataset_from_counts(2, &cells), 0.0).unwrap();
        let params = SensitivityParams::new(2.0, 2.0).unwrap();
        let outcome =
            search_effect_range(&tables, &params, 1, 1, 0, &quick_config(2_000, 60)).unwrap();
        assert!(outcome.achieved_de.contains(0.0, 1e-9));
    }

    #[test]
    fn ladder_achieved_ranges_nest() {
        let tables = random_tables(31);
        let levels: Vec<SensitivityParams> = [1.0, 1.5, 2.0, 5.0]
            .into_iter()
            .map(|g| SensitivityParams::new(g, g).unwrap())
            .collect();
        let outcomes =
            search_effect_ladder(&tables, &levels, 1, 1, 0, &quick_config(2_500, 80)).unwrap();
        assert_eq!(outcomes.len(), levels.len());
        for pair in outcomes.windows(2) {
            for (narrow, wide) in [
                (pair[0].achieved_de, pair[1].achieved_de),
                (pair[0].achieved_ie, pair[1].achieved_ie),
                (pair[0].achieved_se, pair[1].achieved_se),
            ] {
                assert!(narrow.within(&wide, 0.0), "{narrow:?} not inside {wide:?}");
            }
        }
        for outcome in &outcomes {
            assert!(outcome.sound(1e-9));
        }
    }

    #[test]
    fn ladder_rejects_decreasing_budgets() {
        let tables = hand_tables();
        let levels =
            vec![SensitivityParams::new(2.0, 2.0).unwrap(), SensitivityParams::new(1.5, 1.5).unwrap()];
        let err =
            search_effect_ladder(&tables, &levels, 1, 1, 0, &quick_config(10, 0)).unwrap_err();
        assert!(err.to_string().contains("nondecreasing"), "got: {err}");
    }

    #[test]
    fn witnesses_attain_achieved_endpoints() {
        let tables = hand_tables();
        let params = SensitivityParams::new(2.0, 3.0).unwrap();
        let outcome =
            search_effect_range(&tables, &params, 1, 1, 0, &quick_config(1_500, 80)).unwrap();
        let checks = [
            (&outcome.witnesses.de_lo, outcome.achieved_de.lo, 0),
            (&outcome.witnesses.de_hi, outcome.achieved_de.hi, 1),
            (&outcome.witnesses.ie_lo, outcome.achieved_ie.lo, 2),
            (&outcome.witnesses.ie_hi, outcome.achieved_ie.hi, 3),
            (&outcome.witnesses.se_lo, outcome.achieved_se.lo, 4),
            (&outcome.witnesses.se_hi, outcome.achieved_se.hi, 5),
        ];
        for (scm, endpoint, k) in checks {
            let eff = evaluate_scm_effects(scm, 1, 1, 0).unwrap();
            assert_abs_diff_eq!(pick_effect(k, &eff), endpoint, epsilon = 1e-12);
        }
    }

    #[test]
    fn impossible_match_tolerance_errors() {
        let tables = hand_tables();
        let params = SensitivityParams::new(2.0, 2.0).unwrap();
        let config = CompatSearchConfig {
            budget: 50,
            obs_match_tol: 1e-300,
            ..CompatSearchConfig::default()
        };
        let err = search_effect_range(&tables, &params, 1, 1, 0, &config).unwrap_err();
        assert!(matches!(err, Error::Search(_)), "got: {err}");
    }

    #[test]
    fn non_binary_mediator_rejected() {
        let columns = vec![
            ColumnSchema { name: "a".into(), role: Role::Attribute, domain: VariableDomain::Binary },
            ColumnSchema { name: "z".into(), role: Role::Confounder, domain: VariableDomain::Binary },
            ColumnSchema {
                name: "m".into(),
                role: Role::Mediator,
                domain: VariableDomain::Categorical(3),
            },
            ColumnSchema { name: "y".into(), role: Role::Outcome, domain: VariableDomain::Binary },
        ];
        let mut rows = Vec::new();
        for a in 0..2 {
            for z in 0..2 {
                for m in 0..3 {
                    for y in 0..2 {
                        rows.push(vec![a as f64, z as f64, m as f64, y as f64]);
                    }
                }
            }
        }
        let data = validate_dataset(&RawTable { columns, rows }).unwrap();
        let tables = fit_frequency_tables(&data, 0.5).unwrap();
        let params = SensitivityParams::new(2.0, 2.0).unwrap();
        let err =
            search_effect_range(&tables, &params, 1, 1, 0, &quick_config(10, 0)).unwrap_err();
        assert!(err.to_string().contains("binary"), "got: {err}");
    }

    #[test]
    fn report_json_shape() {
        let tables = hand_tables();
        let params = SensitivityParams::new(1.5, 1.5).unwrap();
        let outcome =
            search_effect_range(&tables, &params, 1, 1, 0, &quick_config(400, 20)).unwrap();
        let report = report_json(&outcome);
        for effect in ["de", "ie", "se"] {
            assert!(report["achieved"][effect]["lo"].is_f64());
            assert!(report["theorem"][effect]["hi"].is_f64());
            assert!(report["gaps"][effect]["lo"].is_f64());
        }
        assert!(report["gaps"]["mean"].is_f64());
        assert_eq!(report["accepted_count"].as_u64(), Some(400));
        assert_eq!(report["budget"].as_u64(), Some(400));
    }
}
