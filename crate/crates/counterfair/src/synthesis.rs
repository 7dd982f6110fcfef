//! Synthetic data generation with controllable unobserved confounding, and
//! ground-truth effects by counterfactual replay of the known generator.
//!
//! Three structural-equation settings are built in, each with a binary
//! attribute `A`, mediator `M`, and outcome `Y`:
//!
//! * [`ScmSetting::UnobservedDirect`] — a latent `U` confounds `A` and `Y`
//!   (direct-path confounding): `Z ~ Bern(0.5)`, `A ~ Bern(σ(5Z − U))`,
//!   `M ~ Bern(σ(4A + 2Z))`, `Y ~ Bern(σ(3A + Z + 2M − U))`.
//! * [`ScmSetting::UnobservedIndirect`] — the latent confounds `A` and `M`
//!   (indirect-path confounding): here `U ~ N(0, u_sd²)` is centered and
//!   `Φ` scales its loading instead, `A ~ Bern(σ(5Z − (Φ/2)·U))`,
//!   `M ~ Bern(σ(4A + 2Z − (Φ/2)·U))`, with the latent dropped from the
//!   outcome. Keeping the operating point fixed and growing the loading
//!   makes the confounding strength — and hence the plug-in bias —
//!   increase monotonically in `Φ` rather than washing out in a sigmoid
//!   tail.
//! * [`ScmSetting::ContinuousMultivariate`] — four continuous confounders
//!   `Z_k ~ Uniform[c_k − 0.02·U_SE, c_k + 1 − 0.02·U_SE]`, latent terms in
//!   all of `A`, `M`, and a deterministic threshold outcome
//!   `Y = 1[0.1(Z₁+Z₂+Z₃+Z₄) + M + 2A − 0.1·U_DE ≥ 2]`.
//!
//! The latents are `U ~ N(Φ, u_sd²)`: the mean `Φ` sets the confounding
//! level, the spread `u_sd` controls how much the latent actually varies
//! across records (at `u_sd = 0` the latent degenerates to the constant `Φ`
//! and every conditional is available in closed form). Every Bernoulli
//! probability is clamped to an overlap interval (default `[0.02, 0.98]`)
//! so all strata stay populated.
//!
//! Each generated record stores its exogenous draws, so any counterfactual
//! `do(A = a)` — and nested variants holding the mediator at another arm's
//! response — can be *replayed* exactly through the structural equations.
//! [`oracle_effects`] turns that into ground-truth direct, indirect, and
//! spurious effects with paired Monte-Carlo standard errors.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_dataset, ColumnSchema, Dataset, RawTable, Role, VariableDomain};

/// Structural-equation family to sample from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScmSetting {
    /// Latent confounder on the direct path (`A ↔ Y`).
    UnobservedDirect,
    /// Latent confounder on the indirect path (`A ↔ M`).
    UnobservedIndirect,
    /// Four continuous confounders with latent terms on every path and a
    /// deterministic threshold outcome.
    ContinuousMultivariate,
}

impl std::fmt::Display for ScmSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScmSetting::UnobservedDirect => write!(f, "u_de"),
            ScmSetting::UnobservedIndirect => write!(f, "u_ie"),
            ScmSetting::ContinuousMultivariate => write!(f, "continuous"),
        }
    }
}

impl std::str::FromStr for ScmSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u_de" => Ok(ScmSetting::UnobservedDirect),
            "u_ie" => Ok(ScmSetting::UnobservedIndirect),
            "continuous" => Ok(ScmSetting::ContinuousMultivariate),
            other => Err(Error::validation(format!(
                "unknown setting '{other}' (expected u_de, u_ie, or continuous)"
            ))),
        }
    }
}

/// Specification of one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmSpec {
    /// Structural-equation family.
    pub setting: ScmSetting,
    /// Confounding level: mean of the latent draws.
    pub phi: f64,
    /// Number of records.
    pub n: usize,
    /// Seed for the generation stream.
    pub seed: u64,
    /// Clamp interval for every Bernoulli probability.
    pub overlap_clip: (f64, f64),
    /// Standard deviation of the latent draws. Zero degenerates the latent
    /// to the constant `phi`, which removes the confounding entirely.
    pub u_sd: f64,
}

impl Default for ScmSpec {
    fn default() -> Self {
        ScmSpec {
            setting: ScmSetting::UnobservedDirect,
            phi: 2.0,
            n: 20_000,
            seed: 0,
            overlap_clip: (0.02, 0.98),
            u_sd: 1.0,
        }
    }
}

impl ScmSpec {
    /// Check the specification invariants.
    pub fn validate(&self) -> Result<()> {
        if !self.phi.is_finite() || self.phi < 0.0 {
            return Err(Error::validation(format!("phi must be finite and ≥ 0, got {}", self.phi)));
        }
        if self.n == 0 {
            return Err(Error::validation("sample count must be positive"));
        }
        let (lo, hi) = self.overlap_clip;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::validation(format!(
                "overlap clip must satisfy 0 < lo < hi < 1, got [{lo}, {hi}]"
            )));
        }
        if !self.u_sd.is_finite() || self.u_sd < 0.0 {
            return Err(Error::validation(format!(
                "latent standard deviation must be finite and ≥ 0, got {}",
                self.u_sd
            )));
        }
        Ok(())
    }
}

/// Exogenous draws behind one record: latent values plus the uniform noises
/// consumed by each structural equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExoRecord {
    /// Latent on the direct path (zero when the setting does not draw it).
    pub u_de: f64,
    /// Latent on the indirect path.
    pub u_ie: f64,
    /// Latent on the spurious path.
    pub u_se: f64,
    /// Uniform noises for the confounder equation(s).
    pub e_z: Vec<f64>,
    /// Uniform noise for the attribute equation.
    pub e_a: f64,
    /// Uniform noise for the mediator equation.
    pub e_m: f64,
    /// Uniform noise for the outcome equation (unused when the outcome is
    /// deterministic).
    pub e_y: f64,
}

/// A generated dataset together with the exogenous draws that produced it.
///
/// Invariant: replaying the structural equations on the stored draws
/// reproduces the observed columns exactly ([`GeneratedData::verify_replay`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratedData {
    /// The specification that produced this data.
    pub spec: ScmSpec,
    /// Observed columns.
    pub data: Dataset,
    /// Exogenous draws, one per record.
    pub exo: Vec<ExoRecord>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn clip(p: f64, clip: (f64, f64)) -> f64 {
    p.clamp(clip.0, clip.1)
}

/// Sample a dataset from the structural equations of `spec`.
pub fn generate(spec: &ScmSpec) -> Result<GeneratedData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(spec.phi, spec.u_sd)
        .map_err(|e| Error::validation(format!("invalid latent distribution: {e}")))?;
    let centered = Normal::new(0.0, spec.u_sd)
        .map_err(|e| Error::validation(format!("invalid latent distribution: {e}")))?;
    let continuous = spec.setting == ScmSetting::ContinuousMultivariate;
    let mut exo = Vec::with_capacity(spec.n);
    let mut rows = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let (u_de, u_ie, u_se) = match spec.setting {
            ScmSetting::UnobservedDirect => (normal.sample(&mut rng), 0.0, 0.0),
            ScmSetting::UnobservedIndirect => (0.0, centered.sample(&mut rng), 0.0),
            ScmSetting::ContinuousMultivariate => (
                normal.sample(&mut rng),
                normal.sample(&mut rng),
                normal.sample(&mut rng),
            ),
        };
        let e_z: Vec<f64> =
            (0..if continuous { 4 } else { 1 }).map(|_| rng.gen::<f64>()).collect();
        let e_a: f64 = rng.gen();
        let e_m: f64 = rng.gen();
        let e_y: f64 = if continuous { 0.0 } else { rng.gen() };
        let rec = ExoRecord { u_de, u_ie, u_se, e_z, e_a, e_m, e_y };
        let row = structural_row(spec, &rec);
        exo.push(rec);
        rows.push(row);
    }
    let data = validate_dataset(&RawTable { columns: columns_for(spec.setting), rows })?;
    Ok(GeneratedData { spec: spec.clone(), data, exo })
}

fn columns_for(setting: ScmSetting) -> Vec<ColumnSchema> {
    let mut columns = vec![ColumnSchema {
        name: "a".into(),
        role: Role::Attribute,
        domain: VariableDomain::Binary,
    }];
    match setting {
        ScmSetting::ContinuousMultivariate => {
            for k in 1..=4 {
                columns.push(ColumnSchema {
                    name: format!("z{k}"),
                    role: Role::Confounder,
                    domain: VariableDomain::Continuous,
                });
            }
        }
        _ => columns.push(ColumnSchema {
            name: "z".into(),
            role: Role::Confounder,
            domain: VariableDomain::Binary,
        }),
    }
    columns.push(ColumnSchema {
        name: "m".into(),
        role: Role::Mediator,
        domain: VariableDomain::Binary,
    });
    columns.push(ColumnSchema {
        name: "y".into(),
        role: Role::Outcome,
        domain: VariableDomain::Binary,
    });
    columns
}

/// Evaluate the structural equations on one exogenous record, producing the
/// observed row in column order (`a`, confounders, `m`, `y`).
fn structural_row(spec: &ScmSpec, rec: &ExoRecord) -> Vec<f64> {
    match spec.setting {
        ScmSetting::UnobservedDirect | ScmSetting::UnobservedIndirect => {
            let z = f64::from(rec.e_z[0] < 0.5);
            let u_a = if spec.setting == ScmSetting::UnobservedDirect {
                rec.u_de
            } else {
                0.5 * spec.phi * rec.u_ie
            };
            let a = f64::from(rec.e_a < clip(sigmoid(5.0 * z - u_a), spec.overlap_clip));
            let m = mediator_given(spec, rec, &[z], a as u8);
            let y = outcome_given(spec, rec, &[z], a as u8, m);
            vec![a, z, m as f64, y as f64]
        }
        ScmSetting::ContinuousMultivariate => {
            let bases = [0.5, 1.0, 1.5, 2.0];
            let zs: Vec<f64> = bases
                .iter()
                .zip(&rec.e_z)
                .map(|(&base, &e)| base - 0.02 * rec.u_se + e)
                .collect();
            let logit_a = 0.1 * rec.u_ie
                + 0.1 * rec.u_de
                + 0.05 * rec.u_se
                + 0.25 * zs[0]
                + 0.25 * zs[1]
                + 0.25 * zs[2]
                - 0.5 * zs[3];
            let a = f64::from(rec.e_a < clip(sigmoid(logit_a), spec.overlap_clip));
            let m = mediator_given(spec, rec, &zs, a as u8);
            let y = outcome_given(spec, rec, &zs, a as u8, m);
            let mut row = vec![a];
            row.extend_from_slice(&zs);
            row.push(m as f64);
            row.push(y as f64);
            row
        }
    }
}

/// Mediator response `m_{a}` of one record under `do(A = a)`.
fn mediator_given(spec: &ScmSpec, rec: &ExoRecord, zs: &[f64], a: u8) -> usize {
    let af = a as f64;
    let p = match spec.setting {
        ScmSetting::UnobservedDirect => sigmoid(4.0 * af + 2.0 * zs[0]),
        ScmSetting::UnobservedIndirect => {
            sigmoid(4.0 * af + 2.0 * zs[0] - 0.5 * spec.phi * rec.u_ie)
        }
        ScmSetting::ContinuousMultivariate => sigmoid(
            0.1 * zs[0] + 0.1 * zs[1] + 0.1 * zs[2] - 0.5 * zs[3] + 2.0 * af - 0.1 * rec.u_ie,
        ),
    };
    usize::from(rec.e_m < clip(p, spec.overlap_clip))
}

/// Outcome response `y_{a,m}` of one record under `do(A = a, M = m)`.
fn outcome_given(spec: &ScmSpec, rec: &ExoRecord, zs: &[f64], a: u8, m: usize) -> usize {
    let (af, mf) = (a as f64, m as f64);
    match spec.setting {
        ScmSetting::UnobservedDirect => {
            let p = sigmoid(3.0 * af + zs[0] + 2.0 * mf - rec.u_de);
            usize::from(rec.e_y < clip(p, spec.overlap_clip))
        }
        ScmSetting::UnobservedIndirect => {
            let p = sigmoid(3.0 * af + zs[0] + 2.0 * mf);
            usize::from(rec.e_y < clip(p, spec.overlap_clip))
        }
        ScmSetting::ContinuousMultivariate => usize::from(
            0.1 * (zs[0] + zs[1] + zs[2] + zs[3]) + mf + 2.0 * af - 0.1 * rec.u_de >= 2.0,
        ),
    }
}

impl GeneratedData {
    /// Confounder values of record `idx` (length 1 for the discrete settings).
    fn z_values(&self, idx: usize) -> Vec<f64> {
        match self.data.z_rows() {
            Some(rows) => rows[idx].clone(),
            None => {
                let (cells, _) = self.data.z_cells().expect("discrete confounder");
                vec![cells[idx] as f64]
            }
        }
    }

    /// Mediator counterfactual `m_a` of record `idx` under `do(A = a)`.
    pub fn replay_m(&self, idx: usize, a: u8) -> usize {
        mediator_given(&self.spec, &self.exo[idx], &self.z_values(idx), a)
    }

    /// Nested outcome counterfactual `y_{a,m}` of record `idx` under
    /// `do(A = a, M = m)`.
    pub fn replay_y(&self, idx: usize, a: u8, m: usize) -> usize {
        outcome_given(&self.spec, &self.exo[idx], &self.z_values(idx), a, m)
    }

    /// Outcome counterfactual `y_a` of record `idx` under `do(A = a)` with the
    /// mediator following its own response.
    pub fn replay_y_natural(&self, idx: usize, a: u8) -> usize {
        self.replay_y(idx, a, self.replay_m(idx, a))
    }

    /// Check that replaying the structural equations on the stored exogenous
    /// draws reproduces the observed columns exactly.
    pub fn verify_replay(&self) -> Result<()> {
        if self.exo.len() != self.data.n() {
            return Err(Error::validation(format!(
                "{} exogenous records for {} data rows",
                self.exo.len(),
                self.data.n()
            )));
        }
        for idx in 0..self.data.n() {
            let a = self.data.a()[idx];
            let m = self.replay_m(idx, a);
            if m != self.data.m()[idx] {
                return Err(Error::validation(format!(
                    "replayed mediator {m} disagrees with observed {} at row {idx}",
                    self.data.m()[idx]
                )));
            }
            let y = self.replay_y(idx, a, m);
            let observed = self.data.y_labels().expect("synthetic outcomes are discrete")[idx];
            if y != observed {
                return Err(Error::validation(format!(
                    "replayed outcome {y} disagrees with observed {observed} at row {idx}"
                )));
            }
        }
        Ok(())
    }

    /// Shuffled 60/20/20 train/validation/test split with its own seed.
    pub fn split(&self, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
        let n = self.data.n();
        if n < 5 {
            return Err(Error::validation(format!("cannot split {n} records 60/20/20")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        let n_train = (n as f64 * 0.6).round() as usize;
        let n_val = (n as f64 * 0.2).round() as usize;
        let train = self.data.subset(&idx[..n_train])?;
        let val = self.data.subset(&idx[n_train..n_train + n_val])?;
        let test = self.data.subset(&idx[n_train + n_val..])?;
        Ok((train, val, test))
    }

    /// Write the observed columns as CSV and the specification plus exogenous
    /// draws as a JSON sidecar.
    pub fn save(&self, csv_path: &Path, sidecar_path: &Path) -> Result<()> {
        self.data.write_csv(csv_path)?;
        let sidecar = json_sidecar(&self.spec, &self.exo);
        std::fs::write(sidecar_path, serde_json::to_string(&sidecar)?)?;
        Ok(())
    }

    /// Load a dataset written by [`GeneratedData::save`] and verify the
    /// replay invariant.
    pub fn load(csv_path: &Path, sidecar_path: &Path) -> Result<GeneratedData> {
        let data = Dataset::from_csv(csv_path)?;
        let text = std::fs::read_to_string(sidecar_path)?;
        let sidecar: Sidecar = serde_json::from_str(&text)?;
        let gen = GeneratedData { spec: sidecar.spec, data, exo: sidecar.exo };
        gen.verify_replay()?;
        Ok(gen)
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    spec: ScmSpec,
    exo: Vec<ExoRecord>,
}

fn json_sidecar(spec: &ScmSpec, exo: &[ExoRecord]) -> Sidecar {
    Sidecar { spec: spec.clone(), exo: exo.to_vec() }
}

/// Ground-truth effects from counterfactual replay, with Monte-Carlo
/// standard errors of each estimate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OracleEffects {
    /// Direct effect `DE_{a_i,a_j}(y | a_i)`.
    pub de: f64,
    /// Indirect effect `IE_{a_i,a_j}(y | a_j)`.
    pub ie: f64,
    /// Spurious effect `SE_{a_i,a_j}(y)`.
    pub se: f64,
    /// Standard error of the direct-effect estimate.
    pub de_stderr: f64,
    /// Standard error of the indirect-effect estimate.
    pub ie_stderr: f64,
    /// Standard error of the spurious-effect estimate.
    pub se_stderr: f64,
}

/// Mean and standard error of a paired difference sample.
fn paired_mean_stderr(diffs: &[f64]) -> (f64, f64) {
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    if diffs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ground-truth `DE_{a_i,a_j}(y|a_i)`, `IE_{a_i,a_j}(y|a_j)`, and
/// `SE_{a_i,a_j}(y)` by replaying the stored generator.
///
/// Each conditional counterfactual is estimated over the records observed
/// with the conditioning attribute: the direct effect pairs
/// `y_{a_j, m_{a_i}} − y_{a_i}` within the `a_i` group, the indirect effect
/// pairs `y_{a_i, m_{a_j}} − y_{a_i}` within the `a_j` group, and the
/// spurious effect contrasts `y_{a_i}` across the two groups. Identical
/// interventions cancel exactly, so `a_i = a_j` gives all-zero effects.
pub fn oracle_effects(gen: &GeneratedData, y: usize, a_i: u8, a_j: u8) -> Result<OracleEffects> {
    for (label, a) in [("a_i", a_i), ("a_j", a_j)] {
        if a > 1 {
            return Err(Error::validation(format!("{label} must be 0 or 1, got {a}")));
        }
    }
    if y > 1 {
        return Err(Error::validation(format!("outcome class must be 0 or 1, got {y}")));
    }
    let group: Vec<Vec<usize>> = (0..2u8)
        .map(|a| (0..gen.data.n()).filter(|&i| gen.data.a()[i] == a).collect())
        .collect();
    for a in [a_i, a_j] {
        if group[a as usize].is_empty() {
            return Err(Error::validation(format!("no records observed with attribute a={a}")));
        }
    }
    let hit = |v: usize| f64::from(v == y);
    let labels = gen.data.y_labels().expect("synthetic outcomes are discrete");

    // DE within the a_i group: replay m under a_i, outcome under a_j.
    let de_diffs: Vec<f64> = group[a_i as usize]
        .iter()
        .map(|&i| {
            let m_i = gen.replay_m(i, a_i);
            hit(gen.replay_y(i, a_j, m_i)) - hit(gen.replay_y(i, a_i, m_i))
        })
        .collect();
    let (de, de_stderr) = paired_mean_stderr(&de_diffs);

    // IE within the a_j group: outcome arm a_i, mediator from a_j vs a_i.
    let ie_diffs: Vec<f64> = group[a_j as usize]
        .iter()
        .map(|&i| {
            let m_j = gen.replay_m(i, a_j);
            let m_i = gen.replay_m(i, a_i);
            hit(gen.replay_y(i, a_i, m_j)) - hit(gen.replay_y(i, a_i, m_i))
        })
        .collect();
    let (ie, ie_stderr) = paired_mean_stderr(&ie_diffs);

    // SE across groups: y_{a_i} among a_j minus the observed rate among a_i.
    let (cf, cf_stderr) = paired_mean_stderr(
        &group[a_j as usize]
            .iter()
            .map(|&i| hit(gen.replay_y_natural(i, a_i)))
            .collect::<Vec<_>>(),
    );
    let (obs, obs_stderr) = paired_mean_stderr(
        &group[a_i as usize].iter().map(|&i| hit(labels[i])).collect::<Vec<_>>(),
    );
    let se = cf - obs;
    let se_stderr = (cf_stderr.powi(2) + obs_stderr.powi(2)).sqrt();

    Ok(OracleEffects { de, ie, se, de_stderr, ie_stderr, se_stderr })
}

/// Direct Monte-Carlo estimate of the observed disparity
/// `P(y|a_j) − P(y|a_i)` from the generated records.
pub fn observed_tv(gen: &GeneratedData, y: usize, a_i: u8, a_j: u8) -> Result<f64> {
    for (label, a) in [("a_i", a_i), ("a_j", a_j)] {
        if a > 1 {
            return Err(Error::validation(format!("{label} must be 0 or 1, got {a}")));
        }
    }
    let labels = gen.data.y_labels().ok_or_else(|| {
        Error::validation("observed disparity needs a discrete outcome")
    })?;
    let mut mean = [0.0f64; 2];
    let mut count = [0usize; 2];
    for i in 0..gen.data.n() {
        let a = gen.data.a()[i] as usize;
        count[a] += 1;
        mean[a] += f64::from(labels[i] == y);
    }
    for a in [a_i, a_j] {
        if count[a as usize] == 0 {
            return Err(Error::validation(format!("no records observed with attribute a={a}")));
        }
    }
    Ok(mean[a_j as usize] / count[a_j as usize] as f64
        - mean[a_i as usize] / count[a_i as usize] as f64)
}
