//! Jump-rate weights `w(j,k) ≥ 0` with uniformly summable columns, bounded
//! one-variable weights `u(k) ≥ 0`, and their spectral functions.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::Subset;
use crate::error::{Error, Result};

pub type ScalarFn1 = Arc<dyn Fn(usize) -> f64 + Send + Sync>;
pub type ScalarFn2 = Arc<dyn Fn(usize, usize) -> f64 + Send + Sync>;

/// How many leading values of a closed-form weight are sampled at construction.
const CLOSED_FORM_PROBE: usize = Subset::CAPACITY;

fn check_value(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidWeight(format!(
            "{what} must be finite and nonnegative, got {v}"
        )))
    }
}

/// Bounded nonnegative function `u` on ℕ.
#[derive(Clone)]
pub struct Weight1D {
    repr: Repr1,
    sup: f64,
}

#[derive(Clone)]
enum Repr1 {
    Table(BTreeMap<usize, f64>),
    Constant(f64),
    ClosedForm { name: String, f: ScalarFn1 },
}

impl Weight1D {
    pub fn zero() -> Self {
        Weight1D {
            repr: Repr1::Table(BTreeMap::new()),
            sup: 0.0,
        }
    }

    /// Finitely supported `u`; unlisted indices are 0. Repeated indices add.
    pub fn from_values<I: IntoIterator<Item = (usize, f64)>>(values: I) -> Result<Self> {
        let mut table = BTreeMap::new();
        for (k, v) in values {
            check_value("1D weight value", v)?;
            *table.entry(k).or_insert(0.0) += v;
        }
        let sup = table.values().copied().fold(0.0, f64::max);
        Ok(Weight1D {
            repr: Repr1::Table(table),
            sup,
        })
    }

    /// `u ≡ c` on all of ℕ.
    pub fn constant(c: f64) -> Result<Self> {
        check_value("constant 1D weight", c)?;
        Ok(Weight1D {
            repr: Repr1::Constant(c),
            sup: c,
        })
    }

    /// Closed-form `u` with a declared supremum `sup`.
    pub fn closed_form(
        name: impl Into<String>,
        f: impl Fn(usize) -> f64 + Send + Sync + 'static,
        sup: f64,
    ) -> Result<Self> {
        check_value("declared supremum", sup)?;
        for k in 0..CLOSED_FORM_PROBE {
            let v = f(k);
            check_value("closed-form 1D weight value", v)?;
            if v > sup {
                return Err(Error::InvalidWeight(format!(
                    "u({k}) = {v} exceeds the declared supremum {sup}"
                )));
            }
        }
        Ok(Weight1D {
            repr: Repr1::ClosedForm {
                name: name.into(),
                f: Arc::new(f),
            },
            sup,
        })
    }

    pub fn value(&self, k: usize) -> f64 {
        match &self.repr {
            Repr1::Table(t) => t.get(&k).copied().unwrap_or(0.0),
            Repr1::Constant(c) => *c,
            Repr1::ClosedForm { f, .. } => f(k),
        }
    }

    /// `β_u = sup_k u(k)` (declared for closed forms).
    pub fn sup_bound(&self) -> f64 {
        self.sup
    }

    /// `#_u(σ) = ∑_{k∈σ} u(k)`.
    pub fn count(&self, sigma: Subset) -> f64 {
        sigma.iter().map(|k| self.value(k)).sum()
    }

    /// Listed `(k, u(k))` pairs for table-backed weights.
    pub fn table(&self) -> Option<&BTreeMap<usize, f64>> {
        match &self.repr {
            Repr1::Table(t) => Some(t),
            _ => None,
        }
    }

    /// One past the largest index with nonzero value; `None` for infinite support.
    pub fn support_bound(&self) -> Option<usize> {
        match &self.repr {
            Repr1::Table(t) => Some(
                t.iter()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(k, _)| k + 1)
                    .max()
                    .unwrap_or(0),
            ),
            Repr1::Constant(c) if *c == 0.0 => Some(0),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        match &self.repr {
            Repr1::Table(t) => format!("table{:?}", t),
            Repr1::Constant(c) => format!("constant({c})"),
            Repr1::ClosedForm { name, .. } => format!("closed-form({name}, sup={})", self.sup),
        }
    }
}

impl fmt::Debug for Weight1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Which representation backs a [`Weight2D`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKind {
    DenseEntries,
    DiagonalFrom1d,
    ClosedForm,
}

/// A 2D-weight: `w(j,k) ≥ 0` with `sup_k ∑_j w(j,k) < ∞`.
///
/// `tail_bound` is a user-declared bound on column mass not captured by the
/// listed entries. It is never estimated; it only widens `alpha` and the
/// tolerances of anything derived from this weight.
#[derive(Clone)]
pub struct Weight2D {
    source: Source,
    tail_bound: f64,
}

#[derive(Clone)]
enum Source {
    Entries {
        entries: BTreeMap<(usize, usize), f64>,
        listed_sums: BTreeMap<usize, f64>,
        supplied_sums: BTreeMap<usize, f64>,
    },
    Diagonal(Weight1D),
    ClosedForm {
        name: String,
        value: ScalarFn2,
        column_sum: ScalarFn1,
        alpha: f64,
    },
}

impl Weight2D {
    pub fn zero() -> Self {
        Self::from_entries(std::iter::empty()).expect("empty weight is valid")
    }

    /// Finitely listed weight with column sums taken from the entries.
    pub fn from_entries<I: IntoIterator<Item = (usize, usize, f64)>>(entries: I) -> Result<Self> {
        Self::with_column_sums(entries, BTreeMap::new(), 0.0)
    }

    /// Listed entries plus optional closed-form column sums per `k` and a
    /// declared tail bound.
    pub fn with_column_sums<I: IntoIterator<Item = (usize, usize, f64)>>(
        entries: I,
        supplied_sums: BTreeMap<usize, f64>,
        tail_bound: f64,
    ) -> Result<Self> {
        check_value("tail bound", tail_bound)?;
        let mut map = BTreeMap::new();
        for (j, k, v) in entries {
            check_value(&format!("w({j},{k})"), v)?;
            *map.entry((j, k)).or_insert(0.0) += v;
        }
        let mut listed_sums: BTreeMap<usize, f64> = BTreeMap::new();
        for (&(_, k), &v) in &map {
            *listed_sums.entry(k).or_insert(0.0) += v;
        }
        for (&k, &s) in &supplied_sums {
            check_value(&format!("column sum {k}"), s)?;
            let listed = listed_sums.get(&k).copied().unwrap_or(0.0);
            if s < listed - 1e-12 * listed.max(1.0) {
                return Err(Error::InvalidWeight(format!(
                    "supplied column sum {s} for column {k} is below the listed entries' sum {listed}"
                )));
            }
        }
        Ok(Weight2D {
            source: Source::Entries {
                entries: map,
                listed_sums,
                supplied_sums,
            },
            tail_bound,
        })
    }

    /// Closed-form weight. `column_sum(k)` must be the exact `∑_j w(j,k)` and
    /// `alpha` a declared bound on its supremum.
    pub fn closed_form(
        name: impl Into<String>,
        value: impl Fn(usize, usize) -> f64 + Send + Sync + 'static,
        column_sum: impl Fn(usize) -> f64 + Send + Sync + 'static,
        alpha: f64,
    ) -> Result<Self> {
        check_value("declared alpha", alpha)?;
        for k in 0..CLOSED_FORM_PROBE {
            let s = column_sum(k);
            check_value(&format!("column sum {k}"), s)?;
            if s > alpha {
                return Err(Error::InvalidWeight(format!(
                    "column sum {s} at {k} exceeds the declared alpha {alpha}"
                )));
            }
            for j in 0..CLOSED_FORM_PROBE {
                check_value(&format!("w({j},{k})"), value(j, k))?;
            }
        }
        Ok(Weight2D {
            source: Source::ClosedForm {
                name: name.into(),
                value: Arc::new(value),
                column_sum: Arc::new(column_sum),
                alpha,
            },
            tail_bound: 0.0,
        })
    }

    /// Diagonal lift `w(k,k) = u(k)`, zero off the diagonal.
    pub fn lift_1d(u: &Weight1D) -> Self {
        Weight2D {
            source: Source::Diagonal(u.clone()),
            tail_bound: 0.0,
        }
    }

    pub fn kind(&self) -> WeightKind {
        match self.source {
            Source::Entries { .. } => WeightKind::DenseEntries,
            Source::Diagonal(_) => WeightKind::DiagonalFrom1d,
            Source::ClosedForm { .. } => WeightKind::ClosedForm,
        }
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn value(&self, j: usize, k: usize) -> f64 {
        match &self.source {
            Source::Entries { entries, .. } => entries.get(&(j, k)).copied().unwrap_or(0.0),
            Source::Diagonal(u) => {
                if j == k {
                    u.value(k)
                } else {
                    0.0
                }
            }
            Source::ClosedForm { value, .. } => value(j, k),
        }
    }

    /// `∑_j w(j,k)`: the supplied closed form when present, else the listed entries.
    pub fn column_sum(&self, k: usize) -> f64 {
        match &self.source {
            Source::Entries {
                listed_sums,
                supplied_sums,
                ..
            } => supplied_sums
                .get(&k)
                .or_else(|| listed_sums.get(&k))
                .copied()
                .unwrap_or(0.0),
            Source::Diagonal(u) => u.value(k),
            Source::ClosedForm { column_sum, .. } => column_sum(k),
        }
    }

    /// `α_w = sup_k ∑_j w(j,k)`, including the declared tail for columns whose
    /// sum comes from listed entries.
    pub fn alpha(&self) -> f64 {
        match &self.source {
            Source::Entries {
                listed_sums,
                supplied_sums,
                ..
            } => {
                let listed = listed_sums
                    .iter()
                    .filter(|(k, _)| !supplied_sums.contains_key(k))
                    .map(|(_, s)| s + self.tail_bound)
                    .fold(self.tail_bound, f64::max);
                supplied_sums.values().copied().fold(listed, f64::max)
            }
            Source::Diagonal(u) => u.sup_bound() + self.tail_bound,
            Source::ClosedForm { alpha, .. } => *alpha,
        }
    }

    /// `ϑ_w(σ) = ∑_{j∈σ} w(j,j) + ∑_{k∈σ} [∑_j w(j,k) − ∑_{j∈σ} w(j,k)]`.
    pub fn spectral_theta(&self, sigma: Subset) -> f64 {
        if let Source::Diagonal(u) = &self.source {
            return u.count(sigma);
        }
        let mut theta = 0.0;
        for k in sigma.iter() {
            theta += self.value(k, k);
            let inside: f64 = sigma.iter().map(|j| self.value(j, k)).sum();
            theta += (self.column_sum(k) - inside).max(0.0);
        }
        theta
    }

    /// `ϑ_w(σ)` from the literal double sum
    /// `∑_j 1_σ(j) w(j,j) + ∑_{j,k} (1 − 1_σ(j)) 1_σ(k) w(j,k)` over the support.
    /// `None` for weights without finite support.
    pub fn spectral_theta_literal(&self, sigma: Subset) -> Option<f64> {
        let bound = self.support_bound()?.max(sigma.span());
        let ind = |i: usize| f64::from(sigma.indicator(i));
        let mut theta = 0.0;
        for j in 0..bound {
            theta += ind(j) * self.value(j, j);
            for k in 0..bound {
                theta += (1.0 - ind(j)) * ind(k) * self.value(j, k);
            }
        }
        Some(theta)
    }

    /// `n ↦ w(k,n)`.
    pub fn row_slice(&self, k: usize) -> Weight1D {
        match &self.source {
            Source::Entries { entries, .. } => Weight1D::from_values(
                entries
                    .range((k, 0)..=(k, usize::MAX))
                    .map(|(&(_, m), &v)| (m, v)),
            )
            .expect("validated entries"),
            Source::Diagonal(u) => Weight1D::from_values([(k, u.value(k))]).expect("validated"),
            Source::ClosedForm {
                name, value, alpha, ..
            } => {
                let value = value.clone();
                Weight1D {
                    repr: Repr1::ClosedForm {
                        name: format!("{name}[row {k}]"),
                        f: Arc::new(move |m| value(k, m)),
                    },
                    sup: *alpha,
                }
            }
        }
    }

    /// `j ↦ w(j,k)`.
    pub fn col_slice(&self, k: usize) -> Weight1D {
        match &self.source {
            Source::Entries { entries, .. } => Weight1D::from_values(
                entries
                    .iter()
                    .filter(|(&(_, c), _)| c == k)
                    .map(|(&(j, _), &v)| (j, v)),
            )
            .expect("validated entries"),
            Source::Diagonal(u) => Weight1D::from_values([(k, u.value(k))]).expect("validated"),
            Source::ClosedForm { name, value, .. } => {
                let value = value.clone();
                Weight1D {
                    repr: Repr1::ClosedForm {
                        name: format!("{name}[col {k}]"),
                        f: Arc::new(move |j| value(j, k)),
                    },
                    sup: self.column_sum(k),
                }
            }
        }
    }

    /// Listed entries with nonzero value, row-major. Empty for closed forms.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        match &self.source {
            Source::Entries { entries, .. } => entries
                .iter()
                .filter(|(_, v)| **v != 0.0)
                .map(|(&(j, k), &v)| (j, k, v))
                .collect(),
            Source::Diagonal(u) => u
                .table()
                .map(|t| {
                    t.iter()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(&k, &v)| (k, k, v))
                        .collect()
                })
                .unwrap_or_default(),
            Source::ClosedForm { .. } => Vec::new(),
        }
    }

    /// Smallest `J` with every nonzero entry inside `[0,J)²`, when finitely supported.
    pub fn support_bound(&self) -> Option<usize> {
        match &self.source {
            Source::Entries { .. } => self.is_finitely_supported().then(|| {
                self.entries()
                    .iter()
                    .map(|&(j, k, _)| j.max(k) + 1)
                    .max()
                    .unwrap_or(0)
            }),
            Source::Diagonal(u) => u.support_bound(),
            Source::ClosedForm { .. } => None,
        }
    }

    /// True when the listed entries are the whole weight.
    pub fn is_finitely_supported(&self) -> bool {
        match &self.source {
            Source::Entries {
                listed_sums,
                supplied_sums,
                ..
            } => {
                self.tail_bound == 0.0
                    && supplied_sums.iter().all(|(k, s)| {
                        let listed = listed_sums.get(k).copied().unwrap_or(0.0);
                        (s - listed).abs() <= 1e-12 * listed.max(1.0)
                    })
            }
            Source::Diagonal(u) => u.support_bound().is_some(),
            Source::ClosedForm { .. } => false,
        }
    }

    /// True when, for every column `k < n`, the whole column mass sits in rows `< n`.
    /// Partial operator series over indices `< n` then reproduce `ϑ_w` on `Γ_n` exactly.
    pub fn is_contained_in(&self, n: usize) -> bool {
        if self.tail_bound != 0.0 {
            return false;
        }
        if let Source::Diagonal(_) = self.source {
            return true;
        }
        (0..n).all(|k| {
            let inside: f64 = (0..n).map(|j| self.value(j, k)).sum();
            let total = self.column_sum(k);
            (total - inside).abs() <= 1e-12 * total.max(1.0)
        })
    }

    /// JSON form, when one exists (closed forms and non-table 1D lifts have none).
    pub fn to_spec(&self) -> Option<WeightSpec> {
        match &self.source {
            Source::Entries {
                entries,
                supplied_sums,
                ..
            } => Some(WeightSpec::Dense {
                entries: entries.iter().map(|(&(j, k), &v)| (j, k, v)).collect(),
                column_sums: if supplied_sums.is_empty() {
                    ColumnSumsSpec::default()
                } else {
                    ColumnSumsSpec::Supplied(
                        supplied_sums
                            .iter()
                            .map(|(k, v)| (k.to_string(), *v))
                            .collect(),
                    )
                },
                tail_bound: self.tail_bound,
            }),
            Source::Diagonal(u) => u.table().map(|t| WeightSpec::Diag1d {
                entries: t.iter().map(|(&k, &v)| (k, v)).collect(),
                tail_bound: self.tail_bound,
            }),
            Source::ClosedForm { .. } => None,
        }
    }

    pub fn from_spec(spec: &WeightSpec) -> Result<Self> {
        match spec {
            WeightSpec::Dense {
                entries,
                column_sums,
                tail_bound,
            } => {
                let supplied = match column_sums {
                    ColumnSumsSpec::Mode(m) if m == "from_entries" => BTreeMap::new(),
                    ColumnSumsSpec::Mode(m) => {
                        return Err(Error::InvalidWeight(format!(
                            "unknown column_sums mode `{m}`"
                        )))
                    }
                    ColumnSumsSpec::Supplied(map) => map
                        .iter()
                        .map(|(k, v)| {
                            k.parse::<usize>().map(|k| (k, *v)).map_err(|_| {
                                Error::InvalidWeight(format!("column_sums key `{k}` is not an index"))
                            })
                        })
                        .collect::<Result<_>>()?,
                };
                Self::with_column_sums(entries.iter().copied(), supplied, *tail_bound)
            }
            WeightSpec::Diag1d {
                entries,
                tail_bound,
            } => {
                check_value("tail bound", *tail_bound)?;
                let u = Weight1D::from_values(entries.iter().copied())?;
                Ok(Weight2D {
                    source: Source::Diagonal(u),
                    tail_bound: *tail_bound,
                })
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: WeightSpec = serde_json::from_str(text)?;
        Self::from_spec(&spec)
    }

    /// Stable content hash used as report provenance.
    pub fn spec_hash(&self) -> String {
        let canonical = match (&self.source, self.to_spec()) {
            (_, Some(spec)) => serde_json::to_string(&spec).expect("spec serializes"),
            (Source::ClosedForm { name, alpha, .. }, None) => {
                format!("closed-form:{name}:alpha={alpha}")
            }
            (Source::Diagonal(u), None) => format!("diag1d:{}", u.describe()),
            (Source::Entries { .. }, None) => unreachable!("entry weights always have a spec"),
        };
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn describe(&self) -> String {
        match &self.source {
            Source::Entries { .. } => format!("dense{:?}", self.entries()),
            Source::Diagonal(u) => format!("diag({})", u.describe()),
            Source::ClosedForm { name, .. } => format!("closed-form({name})"),
        }
    }

    /// Random finitely supported weight inside `[0,n)²`: each entry present with
    /// probability 1/2, values uniform on `[0,1)`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut entries = Vec::new();
        for j in 0..n {
            for k in 0..n {
                if rng.gen_bool(0.5) {
                    entries.push((j, k, rng.gen::<f64>()));
                }
            }
        }
        Self::from_entries(entries).expect("random entries are nonnegative")
    }
}

impl fmt::Debug for Weight2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Random table-backed `u` on `{0, ..., n-1}` with values uniform on `[0,1)`.
pub fn random_weight_1d<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Weight1D {
    Weight1D::from_values((0..n).map(|k| (k, rng.gen::<f64>()))).expect("nonnegative")
}

/// Weight JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightSpec {
    Dense {
        entries: Vec<(usize, usize, f64)>,
        #[serde(default)]
        column_sums: ColumnSumsSpec,
        #[serde(default)]
        tail_bound: f64,
    },
    Diag1d {
        entries: Vec<(usize, f64)>,
        #[serde(default)]
        tail_bound: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnSumsSpec {
    Mode(String),
    Supplied(BTreeMap<String, f64>),
}

impl Default for ColumnSumsSpec {
    fn default() -> Self {
        ColumnSumsSpec::Mode("from_entries".to_string())
    }
}

/// Named fixtures used by documentation, smoke tests and the default CLI run.
pub mod fixtures {
    use super::*;

    /// `w(0,1) = 2`, `w(1,1) = 3`, zero elsewhere.
    pub fn running() -> Weight2D {
        Weight2D::from_entries([(0, 1, 2.0), (1, 1, 3.0)]).expect("valid")
    }

    /// Diagonal lift of `u ≡ 1`.
    pub fn unit_diagonal() -> Weight2D {
        Weight2D::lift_1d(&Weight1D::constant(1.0).expect("valid"))
    }

    /// `w(j,k) = 2^{-j-1}` for every `k`; every column sums to 1.
    pub fn geometric() -> Weight2D {
        Weight2D::closed_form(
            "geometric 2^-(j+1)",
            |j, _| 0.5f64.powi(j as i32 + 1),
            |_| 1.0,
            1.0,
        )
        .expect("valid")
    }
}
