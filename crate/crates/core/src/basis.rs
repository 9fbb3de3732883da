//! Finite subsets of the nonnegative integers as basis indices.
//!
//! A [`Subset`] is stored as a 64-bit mask. The truncated basis of level `n`
//! is every subset of `{0, ..., n-1}`, enumerated in increasing mask order so
//! the position of a subset in the enumeration *is* its mask.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default cap on truncation levels whose full basis gets enumerated.
pub const DEFAULT_MAX_N: usize = 20;

/// Name of the environment variable that overrides [`DEFAULT_MAX_N`].
pub const MAX_N_ENV: &str = "CHAOSCALC_MAX_N";

/// The enumeration cap currently in force.
pub fn truncation_cap() -> usize {
    std::env::var(MAX_N_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .map(|n| n.min(Subset::CAPACITY))
        .unwrap_or(DEFAULT_MAX_N)
}

/// A finite subset of ℕ with every element below [`Subset::CAPACITY`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Subset(u64);

impl Subset {
    pub const CAPACITY: usize = 64;

    pub const fn empty() -> Self {
        Subset(0)
    }

    pub const fn from_bits(bits: u64) -> Self {
        Subset(bits)
    }

    pub fn singleton(k: usize) -> Result<Self> {
        Self::empty().try_with(k)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Result<Self> {
        indices
            .into_iter()
            .try_fold(Self::empty(), |acc, k| acc.try_with(k))
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    /// Basis position of this subset; equal to the mask.
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn cardinality(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, k: usize) -> bool {
        k < Self::CAPACITY && self.0 >> k & 1 == 1
    }

    /// `1_σ(k)`.
    pub fn indicator(self, k: usize) -> u8 {
        self.contains(k) as u8
    }

    fn try_with(self, k: usize) -> Result<Self> {
        if k >= Self::CAPACITY {
            return Err(Error::CapacityExceeded(k));
        }
        Ok(Subset(self.0 | 1 << k))
    }

    /// `σ ∪ {k}`. Panics if `k` is beyond the bitset capacity.
    pub fn with(self, k: usize) -> Self {
        assert!(k < Self::CAPACITY, "subset index {k} exceeds capacity");
        Subset(self.0 | 1 << k)
    }

    /// `σ \ {k}`.
    pub fn without(self, k: usize) -> Self {
        if k >= Self::CAPACITY {
            return self;
        }
        Subset(self.0 & !(1 << k))
    }

    pub fn union(self, other: Subset) -> Subset {
        Subset(self.0 | other.0)
    }

    pub fn intersection(self, other: Subset) -> Subset {
        Subset(self.0 & other.0)
    }

    pub fn symmetric_difference(self, other: Subset) -> Subset {
        Subset(self.0 ^ other.0)
    }

    pub fn is_disjoint(self, other: Subset) -> bool {
        self.0 & other.0 == 0
    }

    /// True when every element is below `n`.
    pub fn fits(self, n: usize) -> bool {
        n >= Self::CAPACITY || self.0 >> n == 0
    }

    /// One past the largest element, or 0 for the empty set.
    pub fn span(self) -> usize {
        Self::CAPACITY - self.0.leading_zeros() as usize
    }

    /// Elements in increasing order.
    pub fn iter(self) -> Elements {
        Elements(self.0)
    }

    /// `λ_σ = ∏_{k∈σ} (k+1)`, with `λ_∅ = 1`.
    pub fn lambda(self) -> f64 {
        self.iter().map(|k| (k + 1) as f64).product()
    }

    /// Exact `λ_σ`, or [`Error::LambdaOverflow`] when it does not fit a `u64`.
    pub fn lambda_exact(self) -> Result<u64> {
        self.iter()
            .try_fold(1u64, |acc, k| acc.checked_mul(k as u64 + 1))
            .ok_or(Error::LambdaOverflow)
    }
}

impl fmt::Debug for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, k) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, "}}")
    }
}

pub struct Elements(u64);

impl Iterator for Elements {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let k = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(k)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Elements {}

impl Serialize for Subset {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for Subset {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let indices = Vec::<usize>::deserialize(deserializer)?;
        Subset::from_indices(indices).map_err(serde::de::Error::custom)
    }
}

/// Truncation level `n`: the index set `{0, ..., n-1}` and its `2^n` subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct TruncationLevel(usize);

impl TruncationLevel {
    pub fn new(n: usize) -> Result<Self> {
        if n > Subset::CAPACITY {
            return Err(Error::TruncationTooLarge {
                n,
                cap: Subset::CAPACITY,
            });
        }
        Ok(TruncationLevel(n))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// `2^n`. Only meaningful for enumerable levels.
    pub fn dim(self) -> usize {
        1usize << self.0
    }

    pub fn contains(self, sigma: Subset) -> bool {
        sigma.fits(self.0)
    }

    pub fn check_index(self, k: usize) -> Result<()> {
        if k < self.0 {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: k,
                truncation: self.0,
            })
        }
    }

    /// Errors unless the full basis can be enumerated under `cap`.
    pub fn check_enumerable(self, cap: usize) -> Result<()> {
        if self.0 > cap {
            Err(Error::TruncationTooLarge { n: self.0, cap })
        } else {
            Ok(())
        }
    }

    /// Basis iterator without any cap check.
    pub fn subsets(self) -> impl Iterator<Item = Subset> + Clone {
        (0..self.dim() as u64).map(Subset)
    }
}

impl TryFrom<usize> for TruncationLevel {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        TruncationLevel::new(n)
    }
}

impl From<TruncationLevel> for usize {
    fn from(n: TruncationLevel) -> usize {
        n.0
    }
}

/// All `2^n` subsets of `{0, ..., n-1}` in increasing mask order.
pub fn enumerate_basis(n: TruncationLevel) -> Result<Vec<Subset>> {
    n.check_enumerable(truncation_cap())?;
    Ok(n.subsets().collect())
}

/// `∑_{σ ∈ Γ_n} λ_σ^{-r}` for `r > 1`.
///
/// Evaluated through the product `∏_{k<n} (1 + (k+1)^{-r})`, which is the
/// same finite sum grouped by whether each index is present.
pub fn lambda_series_partial(r: f64, n: TruncationLevel) -> Result<f64> {
    check_exponent(r)?;
    Ok((1..=n.get()).map(|k| 1.0 + (k as f64).powf(-r)).product())
}

/// Upper bound `exp(∑_{k≥1} k^{-r})` on the full series for `r > 1`.
///
/// The zeta sum is taken to `K = 10_000` terms and the remainder is bounded by
/// `∫_K^∞ x^{-r} dx = K^{1-r}/(r-1)`, so the returned value never undercuts the
/// true bound.
pub fn lambda_series_bound(r: f64) -> Result<f64> {
    check_exponent(r)?;
    const K: usize = 10_000;
    let head: f64 = (1..=K).map(|k| (k as f64).powf(-r)).sum();
    let tail = (K as f64).powf(1.0 - r) / (r - 1.0);
    Ok((head + tail).exp())
}

fn check_exponent(r: f64) -> Result<()> {
    if r.is_finite() && r > 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "series exponent must exceed 1, got {r}"
        )))
    }
}
