//! Core domain types shared by every other module.
//!
//! The causal layout is the four-variable standard fairness model: a binary
//! sensitive attribute `A`, observed confounders `Z` (a single discrete cell
//! or a real vector), a discrete mediator `M`, and an outcome `Y` (discrete
//! or real). A [`Dataset`] is an immutable, fully validated column store over
//! records `(a, z, m, y)`; [`SensitivityParams`] carries the confounding
//! budgets `Γ_M, Γ_Y ≥ 1`; [`Interval`] and [`EffectBounds`] hold the
//! partial-identification output `[CF⁻, CF⁺]` for the direct, indirect, and
//! spurious effects together with their Γ=1 plug-in points.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Domain of a single variable.
///
/// Discrete domains use dense 0-based labels `0..k−1`; the label order is the
/// canonical CDF order used by the distribution shifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariableDomain {
    /// Two labels {0, 1}.
    Binary,
    /// `k ≥ 2` labels `0..k−1`.
    Categorical(usize),
    /// Real-valued.
    Continuous,
}

impl VariableDomain {
    /// Number of labels for discrete domains, `None` for continuous.
    pub fn cardinality(&self) -> Option<usize> {
        match self {
            VariableDomain::Binary => Some(2),
            VariableDomain::Categorical(k) => Some(*k),
            VariableDomain::Continuous => None,
        }
    }

    /// Whether the domain is discrete.
    pub fn is_discrete(&self) -> bool {
        !matches!(self, VariableDomain::Continuous)
    }

    /// Check structural invariants (categorical cardinality ≥ 2).
    pub fn check(&self) -> Result<()> {
        if let VariableDomain::Categorical(k) = self {
            if *k < 2 {
                return Err(Error::validation(format!(
                    "categorical domain needs at least 2 labels, got {k}"
                )));
            }
        }
        Ok(())
    }

    /// Whether `value` is a member: an exact integer label for discrete
    /// domains, any finite real for continuous ones.
    pub fn contains(&self, value: f64) -> bool {
        if !value.is_finite() {
            return false;
        }
        match self.cardinality() {
            None => true,
            Some(k) => value.fract() == 0.0 && value >= 0.0 && (value as usize) < k,
        }
    }
}

impl fmt::Display for VariableDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariableDomain::Binary => write!(f, "binary"),
            VariableDomain::Categorical(k) => write!(f, "categorical({k})"),
            VariableDomain::Continuous => write!(f, "continuous"),
        }
    }
}

/// Role a column plays in the standard fairness model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    /// Binary sensitive attribute `A`.
    Attribute,
    /// Observed confounder column (one of possibly several `Z` columns).
    Confounder,
    /// Discrete mediator `M`.
    Mediator,
    /// Outcome `Y`.
    Outcome,
}

/// Declared schema of one raw column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSchema {
    /// Column name (from the CSV header or caller-assigned).
    pub name: String,
    /// Causal role.
    pub role: Role,
    /// Value domain.
    pub domain: VariableDomain,
}

/// Raw tabular input: column schemas plus row-major numeric values.
#[derive(Debug, Clone)]
pub struct RawTable {
    /// One schema per column, in row order.
    pub columns: Vec<ColumnSchema>,
    /// Row-major values; each row must have `columns.len()` entries.
    pub rows: Vec<Vec<f64>>,
}

/// Confounder columns after validation: either a single joint discrete cell
/// per record (multiple discrete columns are folded into one mixed-radix
/// cell index) or a real feature vector per record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ZData {
    /// Joint discrete cell per record.
    Discrete {
        /// Cell index per record, in `0..cardinality`.
        cells: Vec<usize>,
        /// Total number of joint cells (product of per-column cardinalities).
        cardinality: usize,
        /// Per-column cardinalities, used to unfold cells back into columns.
        col_cardinalities: Vec<usize>,
    },
    /// Real vector per record.
    Continuous {
        /// One feature vector per record.
        rows: Vec<Vec<f64>>,
        /// Vector dimension.
        dim: usize,
    },
}

/// Outcome column after validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum YData {
    /// Discrete labels.
    Discrete(Vec<usize>),
    /// Real values.
    Continuous(Vec<f64>),
}

/// Immutable validated dataset over records `(a, z, m, y)`.
///
/// All columns have the same length `n ≥ 1`, every discrete value lies in its
/// declared domain, and the struct cannot be mutated after construction; it
/// is therefore safe to share across threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    a: Vec<u8>,
    z: ZData,
    m: Vec<usize>,
    y: YData,
    m_cardinality: usize,
    y_domain: VariableDomain,
    z_names: Vec<String>,
}

impl Dataset {
    /// Number of records.
    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// Attribute column (values in {0, 1}).
    pub fn a(&self) -> &[u8] {
        &self.a
    }

    /// Confounder data.
    pub fn z(&self) -> &ZData {
        &self.z
    }

    /// Mediator column.
    pub fn m(&self) -> &[usize] {
        &self.m
    }

    /// Outcome data.
    pub fn y(&self) -> &YData {
        &self.y
    }

    /// Mediator cardinality.
    pub fn m_cardinality(&self) -> usize {
        self.m_cardinality
    }

    /// Outcome domain.
    pub fn y_domain(&self) -> VariableDomain {
        self.y_domain
    }

    /// Confounder column names, in CSV order.
    pub fn z_names(&self) -> &[String] {
        &self.z_names
    }

    /// Joint discrete confounder cells, if Z is discrete.
    pub fn z_cells(&self) -> Option<(&[usize], usize)> {
        match &self.z {
            ZData::Discrete { cells, cardinality, .. } => Some((cells, *cardinality)),
            ZData::Continuous { .. } => None,
        }
    }

    /// Continuous confounder rows, if Z is continuous.
    pub fn z_rows(&self) -> Option<&[Vec<f64>]> {
        match &self.z {
            ZData::Continuous { rows, .. } => Some(rows),
            ZData::Discrete { .. } => None,
        }
    }

    /// Width of the confounder feature encoding used by neural estimators:
    /// the number of original discrete columns, or the continuous dimension.
    pub fn z_feature_dim(&self) -> usize {
        match &self.z {
            ZData::Discrete { col_cardinalities, .. } => col_cardinalities.len(),
            ZData::Continuous { dim, .. } => *dim,
        }
    }

    /// Confounder features of record `i` as a real vector: discrete columns
    /// are unfolded from the joint cell and cast, continuous rows pass
    /// through unchanged.
    pub fn z_features_row(&self, i: usize) -> Vec<f64> {
        match &self.z {
            ZData::Discrete { cells, col_cardinalities, .. } => unfold_cell(cells[i], col_cardinalities)
                .into_iter()
                .map(|v| v as f64)
                .collect(),
            ZData::Continuous { rows, .. } => rows[i].clone(),
        }
    }

    /// Discrete outcome labels, if Y is discrete.
    pub fn y_labels(&self) -> Option<&[usize]> {
        match &self.y {
            YData::Discrete(v) => Some(v),
            YData::Continuous(_) => None,
        }
    }

    /// Real outcome values, if Y is continuous.
    pub fn y_values(&self) -> Option<&[f64]> {
        match &self.y {
            YData::Continuous(v) => Some(v),
            YData::Discrete(_) => None,
        }
    }

    /// Outcome of record `i` as a real number (labels cast for discrete Y).
    pub fn y_as_f64(&self, i: usize) -> f64 {
        match &self.y {
            YData::Discrete(v) => v[i] as f64,
            YData::Continuous(v) => v[i],
        }
    }

    /// Restrict to the given record indices (used for train/val/test splits).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::validation("subset needs at least one record"));
        }
        for &i in indices {
            if i >= self.n() {
                return Err(Error::validation(format!(
                    "subset index {i} out of range for {} records",
                    self.n()
                )));
            }
        }
        let z = match &self.z {
            ZData::Discrete { cells, cardinality, col_cardinalities } => ZData::Discrete {
                cells: indices.iter().map(|&i| cells[i]).collect(),
                cardinality: *cardinality,
                col_cardinalities: col_cardinalities.clone(),
            },
            ZData::Continuous { rows, dim } => ZData::Continuous {
                rows: indices.iter().map(|&i| rows[i].clone()).collect(),
                dim: *dim,
            },
        };
        let y = match &self.y {
            YData::Discrete(v) => YData::Discrete(indices.iter().map(|&i| v[i]).collect()),
            YData::Continuous(v) => YData::Continuous(indices.iter().map(|&i| v[i]).collect()),
        };
        Ok(Dataset {
            a: indices.iter().map(|&i| self.a[i]).collect(),
            z,
            m: indices.iter().map(|&i| self.m[i]).collect(),
            y,
            m_cardinality: self.m_cardinality,
            y_domain: self.y_domain,
            z_names: self.z_names.clone(),
        })
    }

    /// Write the dataset as CSV with columns `a, <z columns…>, m, y`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["a".to_string()];
        header.extend(self.z_names.iter().cloned());
        header.push("m".to_string());
        header.push("y".to_string());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut row = vec![self.a[i].to_string()];
            match &self.z {
                ZData::Discrete { cells, col_cardinalities, .. } => {
                    for v in unfold_cell(cells[i], col_cardinalities) {
                        row.push(v.to_string());
                    }
                }
                ZData::Continuous { rows, .. } => {
                    for v in &rows[i] {
                        row.push(format!("{v}"));
                    }
                }
            }
            row.push(self.m[i].to_string());
            row.push(match &self.y {
                YData::Discrete(v) => v[i].to_string(),
                YData::Continuous(v) => format!("{}", v[i]),
            });
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read and validate a dataset from CSV.
    ///
    /// The header assigns roles by name: the columns named exactly `a`, `m`,
    /// and `y` take those roles; every other column is a confounder. Columns
    /// whose values are all non-negative integers are treated as discrete
    /// (binary if within {0,1}, else categorical over `0..=max`); anything
    /// else is continuous.
    pub fn from_csv(path: &Path) -> Result<Dataset> {
        let table = read_raw_csv(path)?;
        validate_dataset(&table)
    }
}

/// Fold per-column discrete values into one mixed-radix joint cell index.
fn fold_cells(cols: &[Vec<usize>], cards: &[usize]) -> Vec<usize> {
    let n = cols.first().map_or(0, |c| c.len());
    (0..n)
        .map(|i| {
            let mut cell = 0usize;
            for (col, &card) in cols.iter().zip(cards) {
                cell = cell * card + col[i];
            }
            cell
        })
        .collect()
}

/// Unfold a joint cell index back into per-column values (inverse of folding).
pub fn unfold_cell(cell: usize, cards: &[usize]) -> Vec<usize> {
    let mut vals = vec![0usize; cards.len()];
    let mut rest = cell;
    for (slot, &card) in vals.iter_mut().zip(cards).rev() {
        *slot = rest % card;
        rest /= card;
    }
    vals
}

/// Parse a CSV file into a raw table with inferred domains.
pub fn read_raw_csv(path: &Path) -> Result<RawTable> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if headers.is_empty() {
        return Err(Error::validation("csv has no columns"));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ridx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::validation(format!(
                "row {} has {} fields, header has {}",
                ridx + 1,
                record.len(),
                headers.len()
            )));
        }
        let mut row = Vec::with_capacity(headers.len());
        for (cidx, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::validation(format!(
                    "row {}, column '{}': cannot parse '{}' as a number",
                    ridx + 1,
                    headers[cidx],
                    field
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::validation("csv has no data rows"));
    }

    let columns = headers
        .iter()
        .enumerate()
        .map(|(cidx, name)| {
            let role = match name.as_str() {
                "a" => Role::Attribute,
                "m" => Role::Mediator,
                "y" => Role::Outcome,
                _ => Role::Confounder,
            };
            let values = rows.iter().map(|r| r[cidx]);
            ColumnSchema { name: name.clone(), role, domain: infer_domain(values) }
        })
        .collect();
    Ok(RawTable { columns, rows })
}

/// Infer a domain from observed values: all non-negative integers → discrete
/// (binary when max ≤ 1), otherwise continuous.
pub fn infer_domain(values: impl Iterator<Item = f64>) -> VariableDomain {
    let mut max = 0.0f64;
    let mut discrete = true;
    for v in values {
        if v.fract() != 0.0 || v < 0.0 || !v.is_finite() {
            discrete = false;
        }
        if v > max {
            max = v;
        }
    }
    if !discrete {
        VariableDomain::Continuous
    } else if max <= 1.0 {
        VariableDomain::Binary
    } else {
        VariableDomain::Categorical(max as usize + 1)
    }
}

/// Validate raw rows against their declared schema and produce a [`Dataset`].
///
/// Checks: exactly one column per attribute/mediator/outcome role, at least
/// one confounder column, non-empty rectangular rows, the attribute binary,
/// the mediator discrete, and every discrete value inside its domain.
/// Out-of-domain values are reported with their row and column. Confounder
/// columns are folded into a single joint discrete cell when all of them are
/// discrete, and into a real vector otherwise.
pub fn validate_dataset(table: &RawTable) -> Result<Dataset> {
    if table.rows.is_empty() {
        return Err(Error::validation("dataset needs at least one record"));
    }
    let ncols = table.columns.len();
    for (i, row) in table.rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::validation(format!(
                "row {} has {} fields, schema has {}",
                i + 1,
                row.len(),
                ncols
            )));
        }
    }
    for c in &table.columns {
        c.domain.check()?;
    }

    let find_unique = |role: Role, label: &str| -> Result<usize> {
        let hits: Vec<usize> = table
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.role == role)
            .map(|(i, _)| i)
            .collect();
        match hits.as_slice() {
            [i] => Ok(*i),
            [] => Err(Error::validation(format!("no {label} column declared"))),
            _ => Err(Error::validation(format!("multiple {label} columns declared"))),
        }
    };
    let a_idx = find_unique(Role::Attribute, "attribute")?;
    let m_idx = find_unique(Role::Mediator, "mediator")?;
    let y_idx = find_unique(Role::Outcome, "outcome")?;
    let z_idx: Vec<usize> = table
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.role == Role::Confounder)
        .map(|(i, _)| i)
        .collect();
    if z_idx.is_empty() {
        return Err(Error::validation("no confounder column declared"));
    }

    let check_cell = |row: usize, col: usize| -> Result<f64> {
        let v = table.rows[row][col];
        let schema = &table.columns[col];
        if !schema.domain.contains(v) {
            return Err(Error::validation(format!(
                "row {}, column '{}': value {} outside domain {}",
                row + 1,
                schema.name,
                v,
                schema.domain
            )));
        }
        Ok(v)
    };

    // Attribute: binary no matter what was declared.
    let mut a = Vec::with_capacity(table.rows.len());
    for r in 0..table.rows.len() {
        let v = check_cell(r, a_idx)?;
        if v != 0.0 && v != 1.0 {
            return Err(Error::validation(format!(
                "row {}, column '{}': attribute must be 0 or 1, got {}",
                r + 1,
                table.columns[a_idx].name,
                v
            )));
        }
        a.push(v as u8);
    }

    // Mediator: discrete.
    let m_card = table.columns[m_idx].domain.cardinality().ok_or_else(|| {
        Error::validation("mediator column must be discrete")
    })?;
    let mut m = Vec::with_capacity(table.rows.len());
    for r in 0..table.rows.len() {
        m.push(check_cell(r, m_idx)? as usize);
    }

    // Outcome: discrete or continuous.
    let y_domain = table.columns[y_idx].domain;
    let y = if y_domain.is_discrete() {
        let mut vals = Vec::with_capacity(table.rows.len());
        for r in 0..table.rows.len() {
            vals.push(check_cell(r, y_idx)? as usize);
        }
        YData::Discrete(vals)
    } else {
        let mut vals = Vec::with_capacity(table.rows.len());
        for r in 0..table.rows.len() {
            vals.push(check_cell(r, y_idx)?);
        }
        YData::Continuous(vals)
    };

    // Confounders: joint discrete cell when every column is discrete.
    let all_discrete = z_idx.iter().all(|&i| table.columns[i].domain.is_discrete());
    let z = if all_discrete {
        let cards: Vec<usize> = z_idx
            .iter()
            .map(|&i| table.columns[i].domain.cardinality().expect("discrete"))
            .collect();
        let mut cols: Vec<Vec<usize>> = vec![Vec::with_capacity(table.rows.len()); z_idx.len()];
        for r in 0..table.rows.len() {
            for (slot, &ci) in cols.iter_mut().zip(&z_idx) {
                slot.push(check_cell(r, ci)? as usize);
            }
        }
        let cardinality = cards.iter().product();
        ZData::Discrete { cells: fold_cells(&cols, &cards), cardinality, col_cardinalities: cards }
    } else {
        let mut rows_z = Vec::with_capacity(table.rows.len());
        for r in 0..table.rows.len() {
            let mut vec_z = Vec::with_capacity(z_idx.len());
            for &ci in &z_idx {
                vec_z.push(check_cell(r, ci)?);
            }
            rows_z.push(vec_z);
        }
        ZData::Continuous { rows: rows_z, dim: z_idx.len() }
    };

    Ok(Dataset {
        a,
        z,
        m,
        y,
        m_cardinality: m_card,
        y_domain,
        z_names: z_idx.iter().map(|&i| table.columns[i].name.clone()).collect(),
    })
}

/// Confounding budgets `Γ_M, Γ_Y ≥ 1`; `Γ = 1` forbids unobserved confounding
/// on that mechanism and collapses the corresponding shift to the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityParams {
    gamma_m: f64,
    gamma_y: f64,
}

impl SensitivityParams {
    /// Validate and build a budget pair.
    pub fn new(gamma_m: f64, gamma_y: f64) -> Result<Self> {
        for (label, g) in [("gamma_m", gamma_m), ("gamma_y", gamma_y)] {
            if !g.is_finite() || g < 1.0 {
                return Err(Error::validation(format!(
                    "{label} must be a finite value ≥ 1, got {g}"
                )));
            }
        }
        Ok(SensitivityParams { gamma_m, gamma_y })
    }

    /// Mediator budget Γ_M.
    pub fn gamma_m(&self) -> f64 {
        self.gamma_m
    }

    /// Outcome budget Γ_Y.
    pub fn gamma_y(&self) -> f64 {
        self.gamma_y
    }
}

/// Closed interval `[lo, hi]` with `lo ≤ hi` enforced at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    /// Lower endpoint.
    pub lo: f64,
    /// Upper endpoint.
    pub hi: f64,
}

impl Interval {
    /// Build an interval, rejecting `lo > hi` (no silent swapping) and NaN.
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() {
            return Err(Error::numerics("interval endpoint is NaN"));
        }
        if lo > hi {
            return Err(Error::numerics(format!(
                "interval endpoints inverted: lo {lo} > hi {hi}"
            )));
        }
        Ok(Interval { lo, hi })
    }

    /// Degenerate interval `[v, v]`.
    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    /// `hi − lo`.
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Whether `v` lies inside up to `tol` slack on both sides.
    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    /// Whether `self` is contained in `other` up to `tol` slack.
    pub fn within(&self, other: &Interval, tol: f64) -> bool {
        self.lo >= other.lo - tol && self.hi <= other.hi + tol
    }

    /// `max(|lo|, |hi|)` — the worst-case magnitude.
    pub fn max_abs(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

/// Outcome functional a bound query targets: probability of one class, or the
/// expectation of the (predicted) outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetY {
    /// `P(Y = class | …)` for a discrete outcome label.
    Class(usize),
    /// `E[Y | …]` (used by the predictor-substituted bounds).
    Expectation,
}

impl fmt::Display for TargetY {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetY::Class(c) => write!(f, "{c}"),
            TargetY::Expectation => write!(f, "expectation"),
        }
    }
}

/// Bounds for the three path-specific effects of one `(a_i, a_j, y)` query,
/// plus their Γ=1 plug-in (naive) points.
///
/// Conventions: the direct effect is conditioned on `a_i`, the indirect effect
/// on `a_j`, and the spurious effect is unconditional. The naive points always
/// lie inside their intervals for any `Γ_M, Γ_Y ≥ 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectBounds {
    /// Direct effect `[DE⁻, DE⁺]`, conditioned on `a_i`.
    pub de: Interval,
    /// Indirect effect `[IE⁻, IE⁺]`, conditioned on `a_j`.
    pub ie: Interval,
    /// Spurious effect `[SE⁻, SE⁺]`.
    pub se: Interval,
    /// Γ=1 plug-in direct effect.
    pub de_naive: f64,
    /// Γ=1 plug-in indirect effect.
    pub ie_naive: f64,
    /// Γ=1 plug-in spurious effect.
    pub se_naive: f64,
    /// Outcome functional the query targeted.
    pub target_y: TargetY,
    /// Reference attribute value.
    pub a_i: u8,
    /// Comparison attribute value.
    pub a_j: u8,
}

impl EffectBounds {
    /// Attribute the direct effect conditions on.
    pub fn de_conditioning(&self) -> u8 {
        self.a_i
    }

    /// Attribute the indirect effect conditions on.
    pub fn ie_conditioning(&self) -> u8 {
        self.a_j
    }
}
