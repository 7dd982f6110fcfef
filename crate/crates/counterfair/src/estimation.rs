//! Observational probability tables and auxiliary density estimators.
//!
//! [`ObsTables`] holds additively smoothed relative-frequency estimates of
//! `P(z)`, `P(a|z)`, `P(m|z,a)` and `P(y|m,z,a)` over the joint confounder
//! cells of a discrete dataset, plus per-cell sorted outcome samples when `Y`
//! is continuous. The marginal `P(a)` is *derived* as `Σ_z P(a|z)P(z)` rather
//! than counted directly, so that downstream closed-form identities (the
//! total-variation decomposition, constant-predictor nullity) hold exactly on
//! the fitted tables instead of only in expectation.
//!
//! Fitting is deliberately lenient: lack of overlap (a confounder cell with
//! only one attribute arm at zero smoothing) or empty outcome cells do not
//! fail the fit — they are recorded in diagnostics, and the bound routines
//! call [`ObsTables::require_overlap`] / [`ObsTables::require_y_cells`]
//! before consuming the affected tables, because that is where the estimates
//! actually become undefined.
//!
//! [`DensityEstimator`] wraps either a frequency-table backend (the default
//! for discrete confounders) or a small softmax classifier trained with the
//! [`crate::neural`] module (mandatory for vector or continuous confounders).

use std::collections::BTreeMap;

use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::neural::{softmax_ce, softmax_probs, MlpConfig, MlpParams};

/// Number of passes over the data used by [`fit_neural_density`].
pub const DENSITY_EPOCHS: usize = 30;

/// Smoothed observational probability tables over joint confounder cells.
///
/// Layout is flat and row-major; see the index helpers `idx_za` / `idx_zam`.
/// All conditional distributions sum to one within 1e-9 by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsTables {
    n_z: usize,
    k_m: usize,
    /// Outcome classes; `None` when Y is continuous.
    k_y: Option<usize>,
    smoothing: f64,
    n_records: usize,
    /// `P(z)`, length `n_z`.
    p_z: Vec<f64>,
    /// Derived `P(a) = Σ_z P(a|z) P(z)`, length 2.
    p_a: [f64; 2],
    /// `P(a|z)`, length `n_z·2`, index `z·2 + a`.
    p_a_given_z: Vec<f64>,
    /// `P(m|z,a)`, length `n_z·2·k_m`, index `(z·2 + a)·k_m + m`.
    p_m_given_za: Vec<f64>,
    /// `P(y|m,z,a)` for discrete Y, length `n_z·2·k_m·k_y`.
    p_y_given_mza: Option<Vec<f64>>,
    /// Sorted outcome samples per `(z,a,m)` cell for continuous Y.
    y_samples: Option<Vec<Vec<f64>>>,
    /// Raw record counts per `(z,a,m)` cell.
    cell_counts: Vec<usize>,
    /// Confounder cells observed with only one attribute arm (raw counts).
    overlap_violations: Vec<usize>,
    /// `(z,a,m)` cells with zero raw count, where `P(y|·)` is unidentified.
    empty_y_cells: Vec<(usize, usize, usize)>,
}

impl ObsTables {
    /// Number of joint confounder cells.
    pub fn n_z(&self) -> usize {
        self.n_z
    }

    /// Mediator cardinality.
    pub fn k_m(&self) -> usize {
        self.k_m
    }

    /// Outcome cardinality for discrete Y, `None` for continuous Y.
    pub fn k_y(&self) -> Option<usize> {
        self.k_y
    }

    /// Additive pseudo-count the tables were fitted with.
    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// Number of records behind the tables.
    pub fn n_records(&self) -> usize {
        self.n_records
    }

    fn idx_za(&self, z: usize, a: usize) -> usize {
        z * 2 + a
    }

    fn idx_zam(&self, z: usize, a: usize, m: usize) -> usize {
        (z * 2 + a) * self.k_m + m
    }

    /// `P(z)`.
    pub fn p_z(&self, z: usize) -> f64 {
        self.p_z[z]
    }

    /// Derived marginal `P(a) = Σ_z P(a|z) P(z)`.
    pub fn p_a(&self, a: usize) -> f64 {
        self.p_a[a]
    }

    /// `P(a|z)`.
    pub fn p_a_given_z(&self, z: usize, a: usize) -> f64 {
        self.p_a_given_z[self.idx_za(z, a)]
    }

    /// `P(m|z,a)`.
    pub fn p_m_given_za(&self, z: usize, a: usize, m: usize) -> f64 {
        self.p_m_given_za[self.idx_zam(z, a, m)]
    }

    /// `P(y|m,z,a)` for discrete Y.
    pub fn p_y_given_mza(&self, y: usize, m: usize, z: usize, a: usize) -> f64 {
        let k_y = self.k_y.expect("discrete-Y table requested on continuous Y");
        self.p_y_given_mza.as_ref().expect("discrete Y")[self.idx_zam(z, a, m) * k_y + y]
    }

    /// Sorted outcome samples in cell `(z,a,m)` for continuous Y.
    pub fn y_samples_cell(&self, z: usize, a: usize, m: usize) -> &[f64] {
        &self.y_samples.as_ref().expect("continuous Y")[self.idx_zam(z, a, m)]
    }

    /// Raw record count in cell `(z,a,m)`.
    pub fn cell_count(&self, z: usize, a: usize, m: usize) -> usize {
        self.cell_counts[self.idx_zam(z, a, m)]
    }

    /// Whether the outcome tables are discrete-class tables.
    pub fn y_is_discrete(&self) -> bool {
        self.k_y.is_some()
    }

    /// Confounder cells whose raw counts contain only one attribute arm.
    pub fn overlap_violations(&self) -> &[usize] {
        &self.overlap_violations
    }

    /// `(z,a,m)` cells with zero raw count.
    pub fn empty_y_cells(&self) -> &[(usize, usize, usize)] {
        &self.empty_y_cells
    }

    /// Errors unless `P(a|z)` is strictly inside `(0,1)` for every cell.
    ///
    /// The sensitivity weights divide by `P(a|z)` and `1 − P(a|z)`, so bounds
    /// are undefined wherever one attribute arm has probability zero; with
    /// positive smoothing this can never trigger.
    pub fn require_overlap(&self) -> Result<()> {
        for z in 0..self.n_z {
            for a in 0..2 {
                let p = self.p_a_given_z(z, a);
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::numerics(format!(
                        "overlap violation: P(a={a}|z={z}) = {p}; refit with positive smoothing \
                         or drop the degenerate confounder cell"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Errors if some outcome cell the tables condition on is genuinely
    /// unidentified: a zero-count `(z,a,m)` cell at zero smoothing (its
    /// `P(y|·)` row is a uniform placeholder), or any empty sample cell when
    /// Y is continuous (pseudo-counts cannot invent samples).
    pub fn require_y_cells(&self) -> Result<()> {
        let undefined = if self.y_is_discrete() {
            self.smoothing == 0.0
        } else {
            true
        };
        if undefined {
            if let Some((z, a, m)) = self.empty_y_cells.first() {
                return Err(Error::numerics(format!(
                    "empty outcome cell (z={z}, a={a}, m={m}): P(y|m,z,a) is unidentified \
                     there; refit with positive smoothing or collect more data"
                )));
            }
        }
        Ok(())
    }

    /// Identified plug-in `P(y|a)` composed from the fitted tables:
    /// `(1/P(a)) Σ_z P(z) P(a|z) Σ_m P(m|z,a) P(y|m,z,a)`.
    pub fn p_y_given_a(&self, y: usize, a: usize) -> f64 {
        let mut acc = 0.0;
        for z in 0..self.n_z {
            let w = self.p_z(z) * self.p_a_given_z(z, a);
            let mut inner = 0.0;
            for m in 0..self.k_m {
                inner += self.p_m_given_za(z, a, m) * self.p_y_given_mza(y, m, z, a);
            }
            acc += w * inner;
        }
        acc / self.p_a[a]
    }

    /// Identified plug-in `E[Y|a]` for continuous Y (per-cell sample means
    /// composed with the fitted mediator and attribute tables).
    pub fn e_y_given_a(&self, a: usize) -> f64 {
        let mut acc = 0.0;
        for z in 0..self.n_z {
            let w = self.p_z(z) * self.p_a_given_z(z, a);
            let mut inner = 0.0;
            for m in 0..self.k_m {
                let cell = self.y_samples_cell(z, a, m);
                let mean = if cell.is_empty() {
                    0.0
                } else {
                    cell.iter().sum::<f64>() / cell.len() as f64
                };
                inner += self.p_m_given_za(z, a, m) * mean;
            }
            acc += w * inner;
        }
        acc / self.p_a[a]
    }

    /// Serializes the tables to a JSON document; conditional cells are keyed
    /// by `|`-joined tuples (e.g. `"m|z|a"` for the mediator table).
    pub fn to_json(&self) -> Result<String> {
        let mut p_a_given_z = BTreeMap::new();
        for z in 0..self.n_z {
            for a in 0..2 {
                p_a_given_z.insert(format!("{a}|{z}"), self.p_a_given_z(z, a));
            }
        }
        let mut p_m = BTreeMap::new();
        let mut counts = BTreeMap::new();
        for z in 0..self.n_z {
            for a in 0..2 {
                for m in 0..self.k_m {
                    p_m.insert(format!("{m}|{z}|{a}"), self.p_m_given_za(z, a, m));
                    counts.insert(format!("{z}|{a}|{m}"), self.cell_count(z, a, m));
                }
            }
        }
        let p_y = self.p_y_given_mza.as_ref().map(|_| {
            let k_y = self.k_y.unwrap();
            let mut map = BTreeMap::new();
            for z in 0..self.n_z {
                for a in 0..2 {
                    for m in 0..self.k_m {
                        for y in 0..k_y {
                            map.insert(
                                format!("{y}|{m}|{z}|{a}"),
                                self.p_y_given_mza(y, m, z, a),
                            );
                        }
                    }
                }
            }
            map
        });
        let y_samples = self.y_samples.as_ref().map(|cells| {
            let mut map = BTreeMap::new();
            for z in 0..self.n_z {
                for a in 0..2 {
                    for m in 0..self.k_m {
                        map.insert(
                            format!("{z}|{a}|{m}"),
                            cells[self.idx_zam(z, a, m)].clone(),
                        );
                    }
                }
            }
            map
        });
        let doc = ObsTablesDoc {
            n_z: self.n_z,
            k_m: self.k_m,
            k_y: self.k_y,
            smoothing: self.smoothing,
            n_records: self.n_records,
            p_z: self.p_z.clone(),
            p_a: self.p_a.to_vec(),
            p_a_given_z,
            p_m_given_za: p_m,
            p_y_given_mza: p_y,
            y_samples,
            cell_counts: counts,
            overlap_violations: self.overlap_violations.clone(),
            empty_y_cells: self.empty_y_cells.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Restores tables persisted by [`Self::to_json`].
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ObsTablesDoc = serde_json::from_str(text)?;
        let (n_z, k_m) = (doc.n_z, doc.k_m);
        if n_z == 0 || k_m == 0 {
            return Err(Error::validation("table document has empty dimensions"));
        }
        let get = |map: &BTreeMap<String, f64>, key: String| -> Result<f64> {
            map.get(&key)
                .copied()
                .ok_or_else(|| Error::validation(format!("table document missing cell {key}")))
        };
        let mut p_a_given_z = vec![0.0; n_z * 2];
        for z in 0..n_z {
            for a in 0..2 {
                p_a_given_z[z * 2 + a] = get(&doc.p_a_given_z, format!("{a}|{z}"))?;
            }
        }
        let mut p_m_given_za = vec![0.0; n_z * 2 * k_m];
        let mut cell_counts = vec![0usize; n_z * 2 * k_m];
        for z in 0..n_z {
            for a in 0..2 {
                for m in 0..k_m {
                    let idx = (z * 2 + a) * k_m + m;
                    p_m_given_za[idx] = get(&doc.p_m_given_za, format!("{m}|{z}|{a}"))?;
                    cell_counts[idx] = *doc
                        .cell_counts
                        .get(&format!("{z}|{a}|{m}"))
                        .ok_or_else(|| Error::validation("table document missing counts"))?;
                }
            }
        }
        let p_y_given_mza = match (&doc.p_y_given_mza, doc.k_y) {
            (Some(map), Some(k_y)) => {
                let mut flat = vec![0.0; n_z * 2 * k_m * k_y];
                for z in 0..n_z {
                    for a in 0..2 {
                        for m in 0..k_m {
                            for y in 0..k_y {
                                flat[((z * 2 + a) * k_m + m) * k_y + y] =
                                    get(map, format!("{y}|{m}|{z}|{a}"))?;
                            }
                        }
                    }
                }
                Some(flat)
            }
            (None, None) => None,
            _ => {
                return Err(Error::validation(
                    "table document mixes discrete and continuous outcome fields",
                ))
            }
        };
        let y_samples = doc
            .y_samples
            .as_ref()
            .map(|map| -> Result<Vec<Vec<f64>>> {
                let mut cells = vec![Vec::new(); n_z * 2 * k_m];
                for z in 0..n_z {
                    for a in 0..2 {
                        for m in 0..k_m {
                            cells[(z * 2 + a) * k_m + m] = map
                                .get(&format!("{z}|{a}|{m}"))
                                .cloned()
                                .ok_or_else(|| {
                                    Error::validation("table document missing sample cell")
                                })?;
                        }
                    }
                }
                Ok(cells)
            })
            .transpose()?;
        if doc.p_z.len() != n_z || doc.p_a.len() != 2 {
            return Err(Error::validation("table document has mismatched marginals"));
        }
        Ok(Self {
            n_z,
            k_m,
            k_y: doc.k_y,
            smoothing: doc.smoothing,
            n_records: doc.n_records,
            p_z: doc.p_z,
            p_a: [doc.p_a[0], doc.p_a[1]],
            p_a_given_z,
            p_m_given_za,
            p_y_given_mza,
            y_samples,
            cell_counts,
            overlap_violations: doc.overlap_violations,
            empty_y_cells: doc.empty_y_cells,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ObsTablesDoc {
    n_z: usize,
    k_m: usize,
    k_y: Option<usize>,
    smoothing: f64,
    n_records: usize,
    p_z: Vec<f64>,
    p_a: Vec<f64>,
    p_a_given_z: BTreeMap<String, f64>,
    p_m_given_za: BTreeMap<String, f64>,
    p_y_given_mza: Option<BTreeMap<String, f64>>,
    y_samples: Option<BTreeMap<String, Vec<f64>>>,
    cell_counts: BTreeMap<String, usize>,
    overlap_violations: Vec<usize>,
    empty_y_cells: Vec<(usize, usize, usize)>,
}

/// Fits relative-frequency tables with `smoothing` pseudo-counts per cell.
///
/// Each conditional gets `smoothing` added to every cell count and
/// `smoothing · |domain|` to the corresponding total, so all distributions
/// normalize exactly. At `smoothing = 0`, never-observed cells fall back to
/// uniform placeholder rows and are reported in the diagnostics instead of
/// failing the fit.
pub fn fit_frequency_tables(data: &Dataset, smoothing: f64) -> Result<ObsTables> {
    if !smoothing.is_finite() || smoothing < 0.0 {
        return Err(Error::validation(format!(
            "smoothing must be a non-negative real, got {smoothing}"
        )));
    }
    let (cells, n_z) = data.z_cells().ok_or_else(|| {
        Error::validation("frequency tables require discrete confounders; use the neural backend")
    })?;
    let k_m = data.m_cardinality();
    let n = data.n();
    let s = smoothing;

    let mut counts_z = vec![0usize; n_z];
    let mut counts_za = vec![0usize; n_z * 2];
    let mut counts_zam = vec![0usize; n_z * 2 * k_m];
    for i in 0..n {
        let (z, a, m) = (cells[i], data.a()[i] as usize, data.m()[i]);
        counts_z[z] += 1;
        counts_za[z * 2 + a] += 1;
        counts_zam[(z * 2 + a) * k_m + m] += 1;
    }

    let p_z: Vec<f64> = counts_z
        .iter()
        .map(|&c| (c as f64 + s) / (n as f64 + n_z as f64 * s))
        .collect();

    let mut p_a_given_z = vec![0.0; n_z * 2];
    for z in 0..n_z {
        let total = counts_z[z] as f64 + 2.0 * s;
        for a in 0..2 {
            p_a_given_z[z * 2 + a] = if total > 0.0 {
                (counts_za[z * 2 + a] as f64 + s) / total
            } else {
                0.5
            };
        }
    }

    let mut p_m_given_za = vec![0.0; n_z * 2 * k_m];
    for za in 0..n_z * 2 {
        let total = counts_za[za] as f64 + k_m as f64 * s;
        for m in 0..k_m {
            p_m_given_za[za * k_m + m] = if total > 0.0 {
                (counts_zam[za * k_m + m] as f64 + s) / total
            } else {
                1.0 / k_m as f64
            };
        }
    }

    let mut overlap_violations = Vec::new();
    for z in 0..n_z {
        if counts_z[z] > 0 && (counts_za[z * 2] == 0 || counts_za[z * 2 + 1] == 0) {
            overlap_violations.push(z);
        }
    }
    let mut empty_y_cells = Vec::new();
    for z in 0..n_z {
        for a in 0..2 {
            for m in 0..k_m {
                if counts_zam[(z * 2 + a) * k_m + m] == 0 {
                    empty_y_cells.push((z, a, m));
                }
            }
        }
    }

    let k_y = data.y_domain().cardinality();
    let (p_y_given_mza, y_samples) = match data.y_labels() {
        Some(labels) => {
            let k_y = k_y.expect("discrete outcome has a cardinality");
            let mut counts_y = vec![0usize; n_z * 2 * k_m * k_y];
            for i in 0..n {
                let idx = (cells[i] * 2 + data.a()[i] as usize) * k_m + data.m()[i];
                counts_y[idx * k_y + labels[i]] += 1;
            }
            let mut p_y = vec![0.0; counts_y.len()];
            for zam in 0..n_z * 2 * k_m {
                let total = counts_zam[zam] as f64 + k_y as f64 * s;
                for y in 0..k_y {
                    p_y[zam * k_y + y] = if total > 0.0 {
                        (counts_y[zam * k_y + y] as f64 + s) / total
                    } else {
                        1.0 / k_y as f64
                    };
                }
            }
            (Some(p_y), None)
        }
        None => {
            let values = data.y_values().expect("continuous outcome has values");
            let mut cells_y = vec![Vec::new(); n_z * 2 * k_m];
            for i in 0..n {
                let idx = (cells[i] * 2 + data.a()[i] as usize) * k_m + data.m()[i];
                cells_y[idx].push(values[i]);
            }
            for cell in cells_y.iter_mut() {
                cell.sort_by(|a, b| a.partial_cmp(b).expect("validated outcomes are finite"));
            }
            (None, Some(cells_y))
        }
    };

    let mut p_a = [0.0; 2];
    for z in 0..n_z {
        for a in 0..2 {
            p_a[a] += p_z[z] * p_a_given_z[z * 2 + a];
        }
    }

    Ok(ObsTables {
        n_z,
        k_m,
        k_y: if data.y_labels().is_some() { k_y } else { None },
        smoothing: s,
        n_records: n,
        p_z,
        p_a,
        p_a_given_z,
        p_m_given_za,
        p_y_given_mza,
        y_samples,
        cell_counts: counts_zam,
        overlap_violations,
        empty_y_cells,
    })
}

/// Which conditional an estimator models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DensityTarget {
    /// `g_A(a|z)` over the binary attribute.
    AGivenZ,
    /// `g_M(m|z,a)` over the mediator values.
    MGivenZA,
}

/// A confounder query point: a joint discrete cell index (frequency backend)
/// or a real feature vector (neural backend).
#[derive(Debug, Clone, Copy)]
pub enum ZQuery<'a> {
    Cell(usize),
    Row(&'a [f64]),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum DensityBackend {
    /// Table lookup over `n_z` joint cells; `table` is `[n_z·k]` for the
    /// attribute target or `[n_z·2·k]` for the mediator target.
    Frequency { n_z: usize, k: usize, table: Vec<f64> },
    /// Softmax classifier over `k` classes reading `z_dim` confounder
    /// features (plus the attribute for the mediator target).
    Neural { net: MlpParams, k: usize, z_dim: usize },
}

/// Density estimator for `g_A(a|z)` or `g_M(m|z,a)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityEstimator {
    target: DensityTarget,
    backend: DensityBackend,
}

impl DensityEstimator {
    /// Frequency backend reading the given fitted tables.
    pub fn from_tables(tables: &ObsTables, target: DensityTarget) -> Self {
        let backend = match target {
            DensityTarget::AGivenZ => DensityBackend::Frequency {
                n_z: tables.n_z,
                k: 2,
                table: tables.p_a_given_z.clone(),
            },
            DensityTarget::MGivenZA => DensityBackend::Frequency {
                n_z: tables.n_z,
                k: tables.k_m,
                table: tables.p_m_given_za.clone(),
            },
        };
        Self { target, backend }
    }

    pub fn target(&self) -> DensityTarget {
        self.target
    }

    /// Number of classes in the target domain.
    pub fn n_classes(&self) -> usize {
        match &self.backend {
            DensityBackend::Frequency { k, .. } => *k,
            DensityBackend::Neural { k, .. } => *k,
        }
    }

    /// Whether this estimator is a neural classifier.
    pub fn is_neural(&self) -> bool {
        matches!(self.backend, DensityBackend::Neural { .. })
    }

    /// Evaluates the conditional distribution at a query point.
    ///
    /// `attribute` must be `Some(a)` for the mediator target and `None` for
    /// the attribute target. The result is non-negative and sums to one
    /// within 1e-6 over the target domain.
    pub fn query(&self, z: ZQuery<'_>, attribute: Option<usize>) -> Result<Vec<f64>> {
        match (self.target, attribute) {
            (DensityTarget::AGivenZ, Some(_)) => {
                return Err(Error::validation(
                    "attribute estimator takes no attribute input",
                ))
            }
            (DensityTarget::MGivenZA, None) => {
                return Err(Error::validation("mediator estimator needs the attribute"))
            }
            (DensityTarget::MGivenZA, Some(a)) if a > 1 => {
                return Err(Error::validation(format!("attribute must be 0 or 1, got {a}")))
            }
            _ => {}
        }
        match &self.backend {
            DensityBackend::Frequency { n_z, k, table } => {
                let cell = match z {
                    ZQuery::Cell(c) => c,
                    ZQuery::Row(_) => {
                        return Err(Error::validation(
                            "frequency backend expects a joint confounder cell",
                        ))
                    }
                };
                if cell >= *n_z {
                    return Err(Error::validation(format!(
                        "confounder cell {cell} out of range (n_z = {n_z})"
                    )));
                }
                let base = match self.target {
                    DensityTarget::AGivenZ => cell * k,
                    DensityTarget::MGivenZA => (cell * 2 + attribute.unwrap()) * k,
                };
                Ok(table[base..base + k].to_vec())
            }
            DensityBackend::Neural { net, k, z_dim } => {
                let row = match z {
                    ZQuery::Row(r) => r,
                    ZQuery::Cell(_) => {
                        return Err(Error::validation(
                            "neural backend expects a confounder feature row",
                        ))
                    }
                };
                if row.len() != *z_dim {
                    return Err(Error::validation(format!(
                        "confounder feature width {} does not match estimator ({z_dim})",
                        row.len()
                    )));
                }
                let input = match self.target {
                    DensityTarget::AGivenZ => row.to_vec(),
                    DensityTarget::MGivenZA => {
                        let mut v = Vec::with_capacity(1 + row.len());
                        v.push(attribute.unwrap() as f64);
                        v.extend_from_slice(row);
                        v
                    }
                };
                let logits = net.infer(&input)?;
                debug_assert_eq!(logits.len(), *k);
                Ok(softmax_probs(&logits))
            }
        }
    }

    /// Serializes the estimator (backend parameters included) to JSON.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Restores an estimator persisted by [`Self::to_json`].
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Trains a softmax classifier for the requested conditional.
///
/// The inputs are the confounder features ([`Dataset::z_features_row`]),
/// preceded by the attribute for the mediator target; `net_config.layer_dims`
/// must start at that input width and end at the target cardinality. Training
/// minimizes cross-entropy with Adam over `DENSITY_EPOCHS` shuffled epochs;
/// both initialization and the shuffle order are keyed by `seed`.
pub fn fit_neural_density(
    data: &Dataset,
    target: DensityTarget,
    net_config: &MlpConfig,
    seed: u64,
) -> Result<DensityEstimator> {
    fit_neural_density_with_epochs(data, target, net_config, seed, DENSITY_EPOCHS)
}

/// [`fit_neural_density`] with an explicit epoch count.
pub fn fit_neural_density_with_epochs(
    data: &Dataset,
    target: DensityTarget,
    net_config: &MlpConfig,
    seed: u64,
    epochs: usize,
) -> Result<DensityEstimator> {
    let z_dim = data.z_feature_dim();
    let (input_dim, k) = match target {
        DensityTarget::AGivenZ => (z_dim, 2),
        DensityTarget::MGivenZA => (1 + z_dim, data.m_cardinality()),
    };
    if net_config.layer_dims.first() != Some(&input_dim) {
        return Err(Error::validation(format!(
            "estimator input width must be {input_dim}, got {:?}",
            net_config.layer_dims.first()
        )));
    }
    if net_config.layer_dims.last() != Some(&k) {
        return Err(Error::validation(format!(
            "estimator output width must be {k}, got {:?}",
            net_config.layer_dims.last()
        )));
    }
    let mut cfg = net_config.clone();
    cfg.seed = seed;
    let mut net = MlpParams::init(&cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_de_a1);

    let n = data.n();
    let inputs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut v = Vec::with_capacity(input_dim);
            if matches!(target, DensityTarget::MGivenZA) {
                v.push(data.a()[i] as f64);
            }
            v.extend(data.z_features_row(i));
            v
        })
        .collect();
    let labels: Vec<usize> = match target {
        DensityTarget::AGivenZ => data.a().iter().map(|&a| a as usize).collect(),
        DensityTarget::MGivenZA => data.m().to_vec(),
    };

    let mut order: Vec<usize> = (0..n).collect();
    let batch = cfg.batch_size;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut grads = crate::neural::Grads::zeros_like(&net);
            let mut loss_sum = 0.0;
            for &i in chunk {
                let cache = net.forward(&inputs[i], true)?;
                let (loss, dlogits) = softmax_ce(cache.output(), labels[i]);
                loss_sum += loss;
                grads.add_assign(&net.backward(&cache, &dlogits)?);
            }
            if !loss_sum.is_finite() {
                return Err(Error::numerics(
                    "non-finite loss while fitting density estimator; lower the learning rate",
                ));
            }
            grads.scale(1.0 / chunk.len() as f64);
            net.adam_step(&grads, cfg.learning_rate)?;
        }
    }

    Ok(DensityEstimator {
        target,
        backend: DensityBackend::Neural { net, k, z_dim },
    })
}
