//! Acceptance suite: ten end-to-end criteria, one test (and one pass/fail
//! line) each, at their stated tolerances and runtime limits.
//!
//! Every test prints `criterion NN: PASS — <measurements>` on success; on
//! failure the panic message carries the same measurements, so the cargo
//! status line plus the message always tell the full story.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use counterfair::bounds::{
    bound_effects, bound_effects_expected, shift_continuous_weights, shift_discrete, EvalGrid,
    ShiftDirection,
};
use counterfair::estimation::{fit_frequency_tables, DensityEstimator, DensityTarget, ObsTables};
use counterfair::evaluation::roc_auc;
use counterfair::model::{
    validate_dataset, ColumnSchema, Dataset, RawTable, Role, SensitivityParams, VariableDomain,
};
use counterfair::neural::{sigmoid, sigmoid_bce, softmax_ce, Grads, MlpConfig, MlpParams};
use counterfair::oracle::{search_effect_range, CompatSearchConfig};
use counterfair::synthesis::{generate, oracle_effects, GeneratedData, ScmSetting, ScmSpec};
use counterfair::training::{
    audit_predictor, encode_input, evaluate_constraints, lagrangian_value_and_grad, train_fair,
    train_penalized, train_standard, ConstraintMode, FairPredictor, LagrangianConfig,
    LagrangianPoint, MultiplierRule, PenaltyConfig, TaskKind, ZSupport,
};

// ---------------------------------------------------------------------------
// Reporting and shared fixtures
// ---------------------------------------------------------------------------

/// Print the criterion line and turn a failed check into a test failure
/// carrying the same measurements.
fn report(n: usize, pass: bool, limit: Duration, elapsed: Duration, detail: &str) {
    let within = elapsed <= limit;
    let verdict = if pass && within { "PASS" } else { "FAIL" };
    println!(
        "criterion {n:02}: {verdict} — {detail} [{:.2?} of {:.0?} allowed]",
        elapsed, limit
    );
    assert!(pass, "criterion {n:02} failed: {detail}");
    assert!(
        within,
        "criterion {n:02} exceeded its runtime limit: {elapsed:.2?} > {limit:.2?} ({detail})"
    );
}

/// Dataset from explicit per-stratum counts `(a, z, m, y1, total)`.
fn dataset_from_counts(n_z: usize, cells: &[(u8, usize, usize, usize, usize)]) -> Dataset {
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

/// Random tables over `n_z` confounder cells and a binary mediator/outcome,
/// with strictly interior conditionals.
fn random_tables(seed: u64, n_z: usize) -> ObsTables {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = Vec::new();
    for a in 0..2u8 {
        for z in 0..n_z {
            for m in 0..2usize {
                let total = rng.gen_range(40..160);
                let ones = rng.gen_range(1..total);
                cells.push((a, z, m, ones, total));
            }
        }
    }
    fit_frequency_tables(&dataset_from_counts(n_z, &cells), 0.5).unwrap()
}

/// Binary-instance fuzzer (two confounder cells), matching the search's
/// supported shape.
fn random_binary_tables(seed: u64) -> ObsTables {
    random_tables(seed, 2)
}

fn frequency_estimators(tables: &ObsTables) -> (DensityEstimator, DensityEstimator) {
    (
        DensityEstimator::from_tables(tables, DensityTarget::AGivenZ),
        DensityEstimator::from_tables(tables, DensityTarget::MGivenZA),
    )
}

fn auc_of(pred: &FairPredictor, data: &Dataset) -> f64 {
    let scores = pred.predict_dataset(data).unwrap();
    let labels: Vec<u8> = data.y_labels().unwrap().iter().map(|&y| y as u8).collect();
    roc_auc(&scores, &labels).unwrap()
}

// ---------------------------------------------------------------------------
// 1. Γ = 1 collapse
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_gamma_one_collapses_to_the_plug_in() {
    let start = Instant::now();
    let params = SensitivityParams::new(1.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let n_z = 2 + (seed % 3) as usize;
        let tables = random_tables(1000 + seed, n_z);
        let b = bound_effects(&tables, &params, 1, 0, 1).unwrap();
        for (iv, naive) in
            [(b.de, b.de_naive), (b.ie, b.ie_naive), (b.se, b.se_naive)]
        {
            worst = worst.max(iv.hi - iv.lo).max((iv.lo - naive).abs());
        }
    }
    report(
        1,
        worst <= 1e-12,
        Duration::from_secs(1),
        start.elapsed(),
        &format!("50/50 table sets collapse; worst width/deviation {worst:.2e} (tol 1e-12)"),
    );
}

// ---------------------------------------------------------------------------
// 2. Shift normalization
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_shifts_produce_probability_measures() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_sum = 0.0f64;
    let mut worst_neg = 0.0f64;
    for i in 0..5000 {
        let k = rng.gen_range(2..=6);
        let mut pmf: Vec<f64> = (0..k).map(|_| rng.gen_range(1e-3..1.0)).collect();
        let total: f64 = pmf.iter().sum();
        pmf.iter_mut().for_each(|p| *p /= total);
        let treat = rng.gen_range(0.02..0.98);
        let gamma = rng.gen_range(1.0..20.0);
        let dir = if i % 2 == 0 { ShiftDirection::Upper } else { ShiftDirection::Lower };
        let shifted = shift_discrete(&pmf, treat, gamma, dir, None).unwrap();
        worst_sum = worst_sum.max((shifted.weights.iter().sum::<f64>() - 1.0).abs());
        worst_neg =
            worst_neg.max(shifted.weights.iter().cloned().fold(0.0, |acc, w| acc.max(-w)));
    }
    for i in 0..5000 {
        let n = rng.gen_range(2..=40);
        let mut samples: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        if i % 3 == 0 {
            // Exercise ties: snap to a coarse lattice.
            samples.iter_mut().for_each(|s| *s = (*s * 2.0).round() / 2.0);
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let treat = rng.gen_range(0.02..0.98);
        let gamma = rng.gen_range(1.0..20.0);
        let dir = if i % 2 == 0 { ShiftDirection::Upper } else { ShiftDirection::Lower };
        let weights = shift_continuous_weights(&samples, treat, gamma, dir).unwrap();
        let mean = weights.iter().sum::<f64>() / n as f64;
        worst_sum = worst_sum.max((mean - 1.0).abs());
        worst_neg = worst_neg.max(weights.iter().cloned().fold(0.0, |acc, w| acc.max(-w)));
    }
    report(
        2,
        worst_sum <= 1e-9 && worst_neg <= 1e-12,
        Duration::from_secs(5),
        start.elapsed(),
        &format!(
            "10000 fuzzed shifts normalize; worst mass deviation {worst_sum:.2e} (tol 1e-9), \
             worst negativity {worst_neg:.2e}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. Monotone widening in Γ
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_intervals_nest_as_the_budget_grows() {
    let start = Instant::now();
    let grid = [1.0, 1.5, 2.0, 5.0, 20.0];
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let n_z = 2 + (seed % 3) as usize;
        let tables = random_tables(3000 + seed, n_z);
        let mut prev: Option<[counterfair::model::Interval; 3]> = None;
        for &g in &grid {
            let params = SensitivityParams::new(g, g).unwrap();
            let b = bound_effects(&tables, &params, 1, 0, 1).unwrap();
            let cur = [b.de, b.ie, b.se];
            if let Some(p) = prev {
                for (inner, outer) in p.iter().zip(&cur) {
                    worst = worst.max(outer.lo - inner.lo).max(inner.hi - outer.hi);
                }
            }
            prev = Some(cur);
        }
    }
    report(
        3,
        worst <= 1e-12,
        Duration::from_secs(10),
        start.elapsed(),
        &format!(
            "20 table sets × Γ ∈ {{1, 1.5, 2, 5, 20}} nest ascending; worst escape {worst:.2e}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. Oracle containment and naive failure
// ---------------------------------------------------------------------------

/// Naive plug-in triplet for one dataset at the acceptance smoothing.
fn naive_triplet(data: &Dataset) -> [f64; 3] {
    let tables = fit_frequency_tables(data, 0.5).unwrap();
    let params = SensitivityParams::new(1.0, 1.0).unwrap();
    let b = bound_effects(&tables, &params, 1, 0, 1).unwrap();
    [b.de_naive, b.ie_naive, b.se_naive]
}

#[test]
fn criterion_04_bounds_contain_replay_truth_and_naive_misses_it() {
    let start = Instant::now();
    let params5 = SensitivityParams::new(5.0, 5.0).unwrap();
    let mut detail = String::new();
    let mut contained = 0usize;
    let mut total = 0usize;
    let mut separation_ok = true;

    for (setting, confounded) in
        [(ScmSetting::UnobservedDirect, 0usize), (ScmSetting::UnobservedIndirect, 1usize)]
    {
        for phi in [1.0, 2.0, 3.0, 4.0] {
            let spec = ScmSpec { setting, phi, n: 20_000, seed: 42, ..ScmSpec::default() };
            let gen = generate(&spec).unwrap();
            let tables = fit_frequency_tables(&gen.data, 0.5).unwrap();
            let b = bound_effects(&tables, &params5, 1, 0, 1).unwrap();

            let big = generate(&ScmSpec { n: 200_000, seed: 1042, ..spec }).unwrap();
            let truth = oracle_effects(&big, 1, 0, 1).unwrap();

            for (iv, t) in [(b.de, truth.de), (b.ie, truth.ie), (b.se, truth.se)] {
                total += 1;
                if iv.lo - 1e-9 <= t && t <= iv.hi + 1e-9 {
                    contained += 1;
                }
            }

            // Monte-Carlo band for the naive estimator: ten disjoint folds of
            // the 20k draw give its sampling spread at fold size; the
            // full-sample spread is √10 smaller.
            let naive = naive_triplet(&gen.data);
            let n_folds = 10;
            let fold = gen.data.n() / n_folds;
            let fold_naives: Vec<[f64; 3]> = (0..n_folds)
                .map(|k| {
                    let idx: Vec<usize> = (k * fold..(k + 1) * fold).collect();
                    naive_triplet(&gen.data.subset(&idx).unwrap())
                })
                .collect();
            let truth_v = [truth.de, truth.ie, truth.se];
            let eff = confounded;
            let mean_f =
                fold_naives.iter().map(|t| t[eff]).sum::<f64>() / n_folds as f64;
            let sd = (fold_naives
                .iter()
                .map(|t| (t[eff] - mean_f).powi(2))
                .sum::<f64>()
                / (n_folds as f64 - 1.0))
                .sqrt();
            let band = 3.0 * sd / (n_folds as f64).sqrt() + 0.005;
            let dev = (naive[eff] - truth_v[eff]).abs();
            if phi >= 2.0 {
                separation_ok &= dev > band;
            }
            detail.push_str(&format!(
                "{}/Φ={phi}: dev {:.4} vs band {:.4}; ",
                if setting == ScmSetting::UnobservedDirect { "u_de" } else { "u_ie" },
                dev,
                band
            ));
        }
    }
    report(
        4,
        contained == total && separation_ok,
        Duration::from_secs(120),
        start.elapsed(),
        &format!("containment {contained}/{total} at Γ=5; naive separation (Φ≥2): {detail}"),
    );
}

// ---------------------------------------------------------------------------
// 5. Brute-force sharpness evidence
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_search_containment_and_endpoint_gaps() {
    let start = Instant::now();
    let params = SensitivityParams::new(2.0, 2.0).unwrap();
    let mut sound = 0usize;
    let mut gaps = Vec::new();
    for seed in 1..=10u64 {
        let tables = random_binary_tables(seed);
        let config = CompatSearchConfig { budget: 100_000, seed, ..CompatSearchConfig::default() };
        let outcome = search_effect_range(&tables, &params, 1, 0, 1, &config).unwrap();
        if outcome.sound(1e-9) {
            sound += 1;
        }
        gaps.push(outcome.mean_endpoint_gap());
    }
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    report(
        5,
        sound == 10 && mean_gap < 0.05,
        Duration::from_secs(300),
        start.elapsed(),
        &format!(
            "containment {sound}/10; mean endpoint gap {mean_gap:.4} (required < 0.05). \
             The gap clause measures how much of each closed-form interval the inner search \
             realizes; the intervals are term-wise relaxations (independently extremized \
             mediator/outcome terms), so a residual gap of this size is structural — \
             see the bound-tightness notes in the README"
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. Constrained-training reproduction at desk scale
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_fair_training_orders_the_three_models() {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..5).collect();
    let mut std_de_hi = Vec::new();
    let mut std_c = Vec::new();
    let mut naive_c = Vec::new();
    let mut robust_c = Vec::new();
    let mut aucs = [Vec::new(), Vec::new(), Vec::new()];

    for &seed in &seeds {
        let gen = generate(&ScmSpec {
            setting: ScmSetting::UnobservedDirect,
            phi: 2.0,
            n: 20_000,
            seed,
            ..ScmSpec::default()
        })
        .unwrap();
        let data = gen.data;
        let tables = fit_frequency_tables(&data, 0.5).unwrap();
        let (g_a, g_m) = frequency_estimators(&tables);
        let support = ZSupport::from_dataset(&data).unwrap();
        let net = MlpConfig { seed, ..MlpConfig::default() };
        let audit2 = |pred: &FairPredictor| -> Vec<f64> {
            evaluate_constraints(pred, &g_a, &g_m, 2.0, &support, ConstraintMode::ScalarExpectation)
                .unwrap()
        };

        let (standard, _) = train_standard(&data, &net, 60).unwrap();
        let audits =
            audit_predictor(&standard, &g_a, &g_m, 2.0, &support, ConstraintMode::ScalarExpectation)
                .unwrap();
        std_de_hi.push(audits[0].de.hi);
        std_c.push(audit2(&standard));
        aucs[0].push(auc_of(&standard, &data));

        let mut lag = LagrangianConfig {
            max_iterations: 12,
            nested_epochs: 3,
            rule: MultiplierRule::Ascent,
            ..LagrangianConfig::default()
        };
        let (fair_naive, _) =
            train_fair(&data, &g_a, &g_m, 1.0, &lag, &net, ConstraintMode::ScalarExpectation)
                .unwrap();
        naive_c.push(audit2(&fair_naive));
        aucs[1].push(auc_of(&fair_naive, &data));

        lag.max_iterations = 30;
        lag.nested_epochs = 2;
        let (fair_robust, _) =
            train_fair(&data, &g_a, &g_m, 2.0, &lag, &net, ConstraintMode::ScalarExpectation)
                .unwrap();
        robust_c.push(audit2(&fair_robust));
        aucs[2].push(auc_of(&fair_robust, &data));
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let col = |rows: &[Vec<f64>], k: usize| -> f64 {
        rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64
    };
    let score = |rows: &[Vec<f64>]| -> f64 {
        rows.iter().map(|r| (r[0] + r[1] + r[2]) / 3.0).sum::<f64>() / rows.len() as f64
    };

    let robust_means = [col(&robust_c, 0), col(&robust_c, 1), col(&robust_c, 2)];
    let de_order = (col(&robust_c, 0), col(&naive_c, 0), col(&std_c, 0));
    let score_order = (score(&robust_c), score(&naive_c), score(&std_c));
    let std_de_upper = mean(&std_de_hi);

    let robust_ok = robust_means.iter().all(|&c| c <= 0.07);
    let intermediate_ok = de_order.0 < de_order.1
        && de_order.1 < de_order.2
        && score_order.0 < score_order.1
        && score_order.1 < score_order.2;
    let standard_ok = std_de_upper >= 0.09;

    report(
        6,
        robust_ok && intermediate_ok && standard_ok,
        Duration::from_secs(900),
        start.elapsed(),
        &format!(
            "5-seed means at Γ_M=2 — fair-robust [DE {:.4}, IE {:.4}, SE {:.4}] (gate ≤ 0.07); \
             DE ordering robust {:.4} < naive {:.4} < standard {:.4}; fairness-score ordering \
             {:.4} < {:.4} < {:.4}; standard DE upper {:.4} (gate ≥ 0.09); \
             AUC std {:.3} / naive {:.3} / robust {:.3}",
            robust_means[0],
            robust_means[1],
            robust_means[2],
            de_order.0,
            de_order.1,
            de_order.2,
            score_order.0,
            score_order.1,
            score_order.2,
            std_de_upper,
            mean(&aucs[0]),
            mean(&aucs[1]),
            mean(&aucs[2]),
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. Total-variation identity
// ---------------------------------------------------------------------------

fn direct_tv(gen: &GeneratedData) -> f64 {
    let labels = gen.data.y_labels().unwrap();
    let a = gen.data.a();
    let rate = |arm: u8| {
        let (mut hits, mut n) = (0usize, 0usize);
        for (i, &ai) in a.iter().enumerate() {
            if ai == arm {
                n += 1;
                hits += labels[i];
            }
        }
        hits as f64 / n as f64
    };
    rate(1) - rate(0)
}

#[test]
fn criterion_07_effects_recompose_into_the_observed_disparity() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut checks = 0usize;
    for setting in [
        ScmSetting::UnobservedDirect,
        ScmSetting::UnobservedIndirect,
        ScmSetting::ContinuousMultivariate,
    ] {
        for phi in [1.0, 2.0, 4.0] {
            let gen = generate(&ScmSpec {
                setting,
                phi,
                n: 100_000,
                seed: 77,
                ..ScmSpec::default()
            })
            .unwrap();
            let fwd = oracle_effects(&gen, 1, 0, 1).unwrap();
            let rev = oracle_effects(&gen, 1, 1, 0).unwrap();
            let recomposed = fwd.de - rev.ie - rev.se;
            worst = worst.max((recomposed - direct_tv(&gen)).abs());
            checks += 1;
        }
    }
    report(
        7,
        worst <= 0.01,
        Duration::from_secs(60),
        start.elapsed(),
        &format!(
            "{checks} datasets (3 settings × Φ ∈ {{1,2,4}}, n=100k): worst \
             |DE − IE_rev − SE_rev − TV| = {worst:.5} (tol 0.01)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. Constant-predictor nullity
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_constant_predictors_have_zero_effects() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..20u64 {
        let n_z = 2 + (seed % 3) as usize;
        let tables = random_tables(8000 + seed, n_z);
        let c: f64 = rng.gen_range(-0.7..0.7);
        let k_m = tables.k_m();
        let grid = EvalGrid {
            k_m,
            z_weights: (0..tables.n_z()).map(|z| tables.p_z(z)).collect(),
            g_a: (0..tables.n_z())
                .flat_map(|z| (0..2).map(move |a| (z, a)))
                .map(|(z, a)| tables.p_a_given_z(z, a))
                .collect(),
            g_m: (0..tables.n_z())
                .flat_map(|z| (0..2).map(move |a| (z, a)))
                .flat_map(|(z, a)| (0..k_m).map(move |m| (z, a, m)))
                .map(|(z, a, m)| tables.p_m_given_za(z, a, m))
                .collect(),
            f: vec![c; tables.n_z() * 2 * k_m],
        };
        for gamma_m in [1.0, 2.0, 5.0] {
            for (a_i, a_j) in [(0u8, 1u8), (1, 0)] {
                let eb = bound_effects_expected(&grid, gamma_m, a_i, a_j).unwrap();
                for iv in [eb.bounds.de, eb.bounds.ie, eb.bounds.se] {
                    worst = worst.max(iv.lo.abs()).max(iv.hi.abs());
                }
            }
        }
    }
    report(
        8,
        worst <= 1e-9,
        Duration::from_secs(1),
        start.elapsed(),
        &format!(
            "20 table sets × Γ_M ∈ {{1,2,5}} × both orientations: worst endpoint \
             magnitude {worst:.2e} (tol 1e-9)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. Gradient checks
// ---------------------------------------------------------------------------

/// Total loss of a network over a toy batch, routed by head shape.
fn toy_loss(net: &MlpParams, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(x, &y)| {
            let out = net.infer(x).unwrap();
            if out.len() == 1 {
                sigmoid_bce(out[0], y as f64).0
            } else {
                softmax_ce(&out, y).0
            }
        })
        .sum()
}

fn neural_fd_worst(dims: Vec<usize>, seed: u64) -> f64 {
    let cfg = MlpConfig { layer_dims: dims, dropout_rate: 0.0, seed, ..MlpConfig::default() };
    let mut net = MlpParams::init(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k_in = cfg.layer_dims[0];
    let k_out = *cfg.layer_dims.last().unwrap();
    let xs: Vec<Vec<f64>> =
        (0..6).map(|_| (0..k_in).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let ys: Vec<usize> = (0..6).map(|_| rng.gen_range(0..k_out.max(2))).collect();

    // Analytic gradient: accumulate per-sample backward passes.
    let mut grads = Grads::zeros_like(&net);
    for (x, &y) in xs.iter().zip(&ys) {
        let cache = net.forward(x, true).unwrap();
        let out = cache.output();
        let upstream = if out.len() == 1 {
            vec![sigmoid(out[0]) - y as f64]
        } else {
            softmax_ce(out, y).1
        };
        grads.add_assign(&net.backward(&cache, &upstream).unwrap());
    }
    let analytic = net.flat_grads(&grads);

    let flat = net.flat_params();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..flat.len() {
        let mut theta = flat.clone();
        theta[i] += h;
        net.set_flat_params(&theta).unwrap();
        let plus = toy_loss(&net, &xs, &ys);
        theta[i] -= 2.0 * h;
        net.set_flat_params(&theta).unwrap();
        let minus = toy_loss(&net, &xs, &ys);
        net.set_flat_params(&flat).unwrap();
        let fd = (plus - minus) / (2.0 * h);
        let denom = fd.abs().max(analytic[i].abs()).max(1e-8);
        worst = worst.max((fd - analytic[i]).abs() / denom);
    }
    worst
}

#[test]
fn criterion_09_backward_and_lagrangian_match_finite_differences() {
    let start = Instant::now();
    let worst_net =
        neural_fd_worst(vec![3, 5, 1], 91).max(neural_fd_worst(vec![4, 6, 3], 92));

    // Lagrangian on a small generated instance with frequency estimators.
    let gen = generate(&ScmSpec { n: 300, seed: 21, ..ScmSpec::default() }).unwrap();
    let data = gen.data;
    let tables = fit_frequency_tables(&data, 0.5).unwrap();
    let (g_a, g_m) = frequency_estimators(&tables);
    let support = ZSupport::from_dataset(&data).unwrap();
    let cfg = MlpConfig {
        layer_dims: vec![3, 6, 1],
        dropout_rate: 0.0,
        seed: 5,
        ..MlpConfig::default()
    };
    let (pred, _) = train_standard(&data, &cfg, 2).unwrap();
    let inputs: Vec<Vec<f64>> = (0..data.n())
        .map(|i| {
            let z = match data.z_cells() {
                Some((cells, _)) => vec![cells[i] as f64],
                None => unreachable!("generated u_de data is discrete"),
            };
            encode_input(data.a()[i] as usize, &z, data.m()[i])
        })
        .collect();
    let targets: Vec<f64> = data.y_labels().unwrap().iter().map(|&y| y as f64).collect();
    let point = LagrangianPoint {
        inputs: &inputs,
        targets: &targets,
        support: &support,
        g_a: &g_a,
        g_m: &g_m,
        gamma_m: 2.0,
        mode: ConstraintMode::ScalarExpectation,
        lambda: &[0.25, 0.15, 0.1],
        lambda_prev: &[0.1, 0.1, 0.1],
        mu: &[0.4, 0.4, 0.4],
        gamma_vec: &[0.02, 0.02, 0.02],
    };
    let (_, grad) = lagrangian_value_and_grad(&pred, &point).unwrap();
    let flat = pred.net.flat_params();
    let h = 1e-5;
    let mut worst_lag = 0.0f64;
    for i in 0..flat.len() {
        let mut plus = pred.clone();
        let mut theta = flat.clone();
        theta[i] += h;
        plus.net.set_flat_params(&theta).unwrap();
        let (vp, _) = lagrangian_value_and_grad(&plus, &point).unwrap();
        let mut minus = pred.clone();
        theta[i] -= 2.0 * h;
        minus.net.set_flat_params(&theta).unwrap();
        let (vm, _) = lagrangian_value_and_grad(&minus, &point).unwrap();
        let fd = (vp - vm) / (2.0 * h);
        let denom = fd.abs().max(grad[i].abs()).max(1e-8);
        worst_lag = worst_lag.max((fd - grad[i]).abs() / denom);
    }

    report(
        9,
        worst_net < 1e-5 && worst_lag < 1e-4,
        Duration::from_secs(10),
        start.elapsed(),
        &format!(
            "backward worst relative error {worst_net:.2e} (tol 1e-5); lagrangian worst \
             relative error {worst_lag:.2e} (tol 1e-4)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 10. Continuous-feature penalized training
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_penalty_keeps_continuous_bounds_under_the_constraint() {
    let start = Instant::now();
    let gen = generate(&ScmSpec {
        setting: ScmSetting::ContinuousMultivariate,
        phi: 2.0,
        n: 12_000,
        seed: 0,
        ..ScmSpec::default()
    })
    .unwrap();
    let data = gen.data;
    let est_a = MlpConfig {
        layer_dims: vec![4, 16, 2],
        dropout_rate: 0.0,
        seed: 100,
        learning_rate: 1e-3,
        ..MlpConfig::default()
    };
    let est_m = MlpConfig {
        layer_dims: vec![5, 16, 2],
        dropout_rate: 0.0,
        seed: 200,
        learning_rate: 1e-3,
        ..MlpConfig::default()
    };
    let g_a = counterfair::estimation::fit_neural_density_with_epochs(
        &data,
        DensityTarget::AGivenZ,
        &est_a,
        100,
        20,
    )
    .unwrap();
    let g_m = counterfair::estimation::fit_neural_density_with_epochs(
        &data,
        DensityTarget::MGivenZA,
        &est_m,
        200,
        20,
    )
    .unwrap();

    let net = MlpConfig {
        layer_dims: vec![6, 16, 1],
        dropout_rate: 0.0,
        seed: 0,
        learning_rate: 1e-2,
        ..MlpConfig::default()
    };
    let penalty = PenaltyConfig { thresholds: vec![0.5; 3], weight: 2.0, epochs: 150 };
    let (pred, rep) = train_penalized(&data, &g_a, &g_m, 2.0, &penalty, &net).unwrap();
    assert_eq!(TaskKind::infer(&data), pred.task);

    let first_loss = rep.loss_trajectory.first().copied().unwrap();
    let last_loss = rep.loss_trajectory.last().copied().unwrap();
    let worst = rep.final_constraints.iter().cloned().fold(0.0, f64::max);
    report(
        10,
        worst <= 0.5 && last_loss < first_loss,
        Duration::from_secs(600),
        start.elapsed(),
        &format!(
            "post-training max-abs bounds at Γ_M=2: [{:.4}, {:.4}, {:.4}] (gate ≤ 0.5); \
             loss {first_loss:.3} → {last_loss:.3}",
            rep.final_constraints[0], rep.final_constraints[1], rep.final_constraints[2]
        ),
    );
}
