//! Sensitivity analysis for path-specific causal fairness under unobserved
//! confounding.
//!
//! The toolkit works on the standard fairness model — binary sensitive
//! attribute `A`, observed confounders `Z`, discrete mediator `M`, outcome
//! `Y` — and treats the direct, indirect, and spurious counterfactual effects
//! as *partially identified*: instead of assuming away hidden confounders, a
//! marginal-sensitivity budget `Γ ≥ 1` limits how far selection on the latent
//! variables may tilt each mechanism, and every effect is reported as a sharp
//! interval `[CF⁻, CF⁺]` that collapses to the usual plug-in estimate at
//! `Γ = 1`.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: validated datasets, domains, budgets, intervals.
//! - [`estimation`]: observational probability tables and the auxiliary
//!   density estimators `g_A(a|z)`, `g_M(m|z,a)`.
//! - [`neural`]: a minimal feed-forward network (leaky ReLU, inverted
//!   dropout, Adam) with exact backpropagation.
//! - [`bounds`]: the mathematical core — quantile-threshold distribution
//!   shifts and closed-form effect bounds, for observational tables and for
//!   predictor-substituted expectations with analytic gradients.
//! - [`synthesis`]: seeded synthetic generators with stored exogenous noise,
//!   enabling ground-truth effects by counterfactual replay.
//! - [`oracle`]: a brute-force search over discrete structural models
//!   compatible with given tables and budget, bracketing the sharp interval
//!   from the inside.
//! - [`training`]: constrained predictor training (augmented Lagrangian and
//!   fixed-penalty variants) holding worst-case unfairness below thresholds.
//! - [`evaluation`]: ROC AUC, MSE, and the fairness-utility score.

pub mod bounds;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod model;
pub mod neural;
pub mod oracle;
pub mod synthesis;
pub mod training;

pub use error::{Error, Result};
pub use model::{
    Dataset, EffectBounds, Interval, SensitivityParams, TargetY, VariableDomain,
};
