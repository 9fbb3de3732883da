//! Annihilation, creation and diagonal operators acting on Fock transforms,
//! plus an expression tree that can be applied matrix-free or materialized.
//!
//! Conventions on a transform `Φ̂`:
//!
//! * `(a_k Φ)^(σ) = [k ∉ σ] Φ̂(σ ∪ k)`, so `a_k δ_τ = 1_τ(k) δ_{τ∖k}`;
//! * `(a_k† Φ)^(σ) = 1_σ(k) Φ̂(σ ∖ k)`, so `a_k† δ_τ = [k ∉ τ] δ_{τ∪k}`.
//!
//! The `L²` operators `∂_k`, `∂_k*` act on coefficients `⟨Z_σ, ξ⟩` with the same
//! arithmetic; all their matrix elements are 0 or 1.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{Subset, TruncationLevel};
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::matrix::MatrixOp;
use crate::weights::{Weight1D, Weight2D};

const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn apply_annihilate(k: usize, phi: &Functional) -> Result<Functional> {
    let n = phi.truncation();
    n.check_index(k)?;
    let map = phi
        .iter()
        .filter(|(s, _)| s.contains(k))
        .map(|(s, c)| (s.without(k), c))
        .collect();
    Ok(Functional::from_map(n, map))
}

pub fn apply_create(k: usize, phi: &Functional) -> Result<Functional> {
    let n = phi.truncation();
    n.check_index(k)?;
    let map = phi
        .iter()
        .filter(|(s, _)| !s.contains(k))
        .map(|(s, c)| (s.with(k), c))
        .collect();
    Ok(Functional::from_map(n, map))
}

/// Coefficient-wise multiplication by `f(σ)`.
pub fn apply_diagonal(f: impl Fn(Subset) -> f64, phi: &Functional) -> Functional {
    let map = phi
        .iter()
        .map(|(s, c)| (s, c * f(s)))
        .filter(|(_, c)| c.norm_sqr() != 0.0)
        .collect();
    Functional::from_map(phi.truncation(), map)
}

/// `𝔎_w`: multiplication by `ϑ_w`.
pub fn gwn_apply(w: &Weight2D, phi: &Functional) -> Functional {
    apply_diagonal(|s| w.spectral_theta(s), phi)
}

/// `𝔑_u`: multiplication by `#_u`.
pub fn wn1d_apply(u: &Weight1D, phi: &Functional) -> Functional {
    apply_diagonal(|s| u.count(s), phi)
}

/// `𝔑`: multiplication by `#`.
pub fn number_apply(phi: &Functional) -> Functional {
    apply_diagonal(|s| s.cardinality() as f64, phi)
}

/// Transform symbol of `a_k† a_j a_j† a_k`.
pub fn hop_symbol(j: usize, k: usize, sigma: Subset) -> f64 {
    if j == k {
        f64::from(sigma.indicator(j))
    } else {
        f64::from((1 - sigma.indicator(j)) * sigma.indicator(k))
    }
}

/// `a_k† a_j a_j† a_k Φ` via its closed-form diagonal symbol.
pub fn hop_apply(j: usize, k: usize, phi: &Functional) -> Result<Functional> {
    phi.truncation().check_index(j)?;
    phi.truncation().check_index(k)?;
    Ok(apply_diagonal(|s| hop_symbol(j, k, s), phi))
}

/// `a_k† a_j a_j† a_k Φ` by four elementary applications.
pub fn hop_compose(j: usize, k: usize, phi: &Functional) -> Result<Functional> {
    let step = apply_annihilate(k, phi)?;
    let step = apply_create(j, &step)?;
    let step = apply_annihilate(j, &step)?;
    apply_create(k, &step)
}

fn check_series_bound(phi: &Functional, n: usize) -> Result<()> {
    phi.truncation().check_index(n)
}

/// `Ψ_n = ∑_{j,k=0}^{n} w(j,k) a_k† a_j a_j† a_k Φ`. Needs `n < truncation`.
pub fn series_partial_2d(w: &Weight2D, phi: &Functional, n: usize) -> Result<Functional> {
    check_series_bound(phi, n)?;
    let mut acc: BTreeMap<Subset, Complex64> = BTreeMap::new();
    for j in 0..=n {
        for k in 0..=n {
            let wjk = w.value(j, k);
            if wjk == 0.0 {
                continue;
            }
            for (s, c) in hop_apply(j, k, phi)?.iter() {
                *acc.entry(s).or_default() += c * wjk;
            }
        }
    }
    acc.retain(|_, c| c.norm_sqr() != 0.0);
    Ok(Functional::from_map(phi.truncation(), acc))
}

/// `∑_{k=0}^{n} u(k) a_k† a_k Φ`. Needs `n < truncation`.
pub fn series_partial_1d(u: &Weight1D, phi: &Functional, n: usize) -> Result<Functional> {
    check_series_bound(phi, n)?;
    let mut acc: BTreeMap<Subset, Complex64> = BTreeMap::new();
    for k in 0..=n {
        let uk = u.value(k);
        if uk == 0.0 {
            continue;
        }
        let term = apply_create(k, &apply_annihilate(k, phi)?)?;
        for (s, c) in term.iter() {
            *acc.entry(s).or_default() += c * uk;
        }
    }
    acc.retain(|_, c| c.norm_sqr() != 0.0);
    Ok(Functional::from_map(phi.truncation(), acc))
}

/// `∂_k ξ` on coefficients `⟨Z_σ, ξ⟩`, from `∂_k Z_σ = 1_σ(k) Z_{σ∖k}`.
pub fn l2_annihilate(k: usize, xi: &Functional) -> Result<Functional> {
    let n = xi.truncation();
    n.check_index(k)?;
    let mut out = Functional::zero(n);
    for (s, c) in xi.iter() {
        if s.contains(k) {
            out.accumulate(s.without(k), c);
        }
    }
    Ok(out)
}

/// `∂_k* ξ`, from `∂_k* Z_σ = [k ∉ σ] Z_{σ∪k}`.
pub fn l2_create(k: usize, xi: &Functional) -> Result<Functional> {
    let n = xi.truncation();
    n.check_index(k)?;
    let mut out = Functional::zero(n);
    for (s, c) in xi.iter() {
        if !s.contains(k) {
            out.accumulate(s.with(k), c);
        }
    }
    Ok(out)
}

/// `S_w ξ = ∑ ϑ_w(σ) ⟨Z_σ, ξ⟩ Z_σ`.
pub fn l2_wn_apply(w: &Weight2D, xi: &Functional) -> Functional {
    let mut out = Functional::zero(xi.truncation());
    for (s, c) in xi.iter() {
        out.accumulate(s, c * w.spectral_theta(s));
    }
    out
}

/// Supremum of `ϑ_w` over the truncated basis. Only a lower bound for the
/// untruncated supremum, which decides boundedness of `S_w`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundednessProbe {
    pub truncation: usize,
    pub sup_theta: f64,
    pub caveat: &'static str,
}

pub fn l2_boundedness(w: &Weight2D, n: TruncationLevel) -> Result<BoundednessProbe> {
    n.check_enumerable(crate::basis::truncation_cap())?;
    let sup_theta = n
        .subsets()
        .map(|s| w.spectral_theta(s))
        .fold(0.0, f64::max);
    Ok(BoundednessProbe {
        truncation: n.get(),
        sup_theta,
        caveat: "truncated supremum; a finite value does not certify boundedness on all of L2",
    })
}

/// Matrix of a linear map given by its action on basis vectors.
pub fn from_linear_map<F>(n: TruncationLevel, f: F) -> Result<MatrixOp>
where
    F: Fn(&Functional) -> Result<Functional> + Sync,
{
    let cols: Vec<Vec<(usize, Complex64)>> = n
        .subsets()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|s| {
            let image = f(&Functional::basis(n, s)?)?;
            if image.truncation() != n {
                return Err(Error::DimensionMismatch {
                    expected: n.get(),
                    found: image.truncation().get(),
                });
            }
            Ok(image.iter().map(|(r, c)| (r.index(), c)).collect())
        })
        .collect::<Result<_>>()?;
    Ok(MatrixOp::from_columns(n.dim(), |c| cols[c].clone()))
}

pub type DiagonalSymbol = Arc<dyn Fn(Subset) -> f64 + Send + Sync>;

/// Named real symbol. Names key the materialization cache, so two distinct
/// symbols must not share a name.
#[derive(Clone)]
pub struct Diagonal {
    name: String,
    f: DiagonalSymbol,
}

impl Diagonal {
    pub fn new(name: impl Into<String>, f: impl Fn(Subset) -> f64 + Send + Sync + 'static) -> Self {
        Diagonal {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, sigma: Subset) -> f64 {
        (self.f)(sigma)
    }
}

impl fmt::Debug for Diagonal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "diag[{}]", self.name)
    }
}

/// Operator expression. Composition arguments read right to left:
/// `Compose([A, B])` is `A ∘ B`.
#[derive(Clone, Debug)]
pub enum OperatorExpr {
    Annihilate(usize),
    Create(usize),
    Diagonal(Diagonal),
    Identity,
    Zero,
    /// Explicit matrix, used for perturbed operators in negative controls.
    Matrix { name: String, matrix: Arc<MatrixOp> },
    Sum(Vec<OperatorExpr>),
    Scale(Complex64, Box<OperatorExpr>),
    Compose(Vec<OperatorExpr>),
}

impl OperatorExpr {
    pub fn a(k: usize) -> Self {
        OperatorExpr::Annihilate(k)
    }

    pub fn ad(k: usize) -> Self {
        OperatorExpr::Create(k)
    }

    pub fn diagonal(
        name: impl Into<String>,
        f: impl Fn(Subset) -> f64 + Send + Sync + 'static,
    ) -> Self {
        OperatorExpr::Diagonal(Diagonal::new(name, f))
    }

    /// `𝔎_w`.
    pub fn gwn(w: &Weight2D) -> Self {
        let w = w.clone();
        Self::diagonal(format!("theta:{}", w.spec_hash()), move |s| {
            w.spectral_theta(s)
        })
    }

    /// `𝔑_u`.
    pub fn wn1d(u: &Weight1D) -> Self {
        let u = u.clone();
        Self::diagonal(format!("count:{}", u.describe()), move |s| u.count(s))
    }

    /// `𝔑`.
    pub fn number() -> Self {
        Self::diagonal("count", |s| s.cardinality() as f64)
    }

    /// `λ^p` as a diagonal operator.
    pub fn lambda_power(p: f64) -> Self {
        Self::diagonal(format!("lambda^{p}"), move |s| s.lambda().powf(p))
    }

    /// Closed-form symbol of `a_k† a_j a_j† a_k`.
    pub fn hop(j: usize, k: usize) -> Self {
        Self::diagonal(format!("hop:{j},{k}"), move |s| hop_symbol(j, k, s))
    }

    pub fn matrix(name: impl Into<String>, matrix: MatrixOp) -> Self {
        OperatorExpr::Matrix {
            name: name.into(),
            matrix: Arc::new(matrix),
        }
    }

    pub fn compose(parts: impl IntoIterator<Item = OperatorExpr>) -> Self {
        OperatorExpr::Compose(parts.into_iter().collect())
    }

    pub fn sum(parts: impl IntoIterator<Item = OperatorExpr>) -> Self {
        OperatorExpr::Sum(parts.into_iter().collect())
    }

    pub fn scale(factor: f64, e: OperatorExpr) -> Self {
        OperatorExpr::Scale(Complex64::new(factor, 0.0), Box::new(e))
    }

    pub fn then(self, right: OperatorExpr) -> Self {
        OperatorExpr::Compose(vec![self, right])
    }

    pub fn plus(self, other: OperatorExpr) -> Self {
        OperatorExpr::Sum(vec![self, other])
    }

    pub fn minus(self, other: OperatorExpr) -> Self {
        OperatorExpr::Sum(vec![self, Self::scale(-1.0, other)])
    }

    /// Largest operator index in the tree, if any.
    pub fn max_index(&self) -> Option<usize> {
        match self {
            OperatorExpr::Annihilate(k) | OperatorExpr::Create(k) => Some(*k),
            OperatorExpr::Sum(parts) | OperatorExpr::Compose(parts) => {
                parts.iter().filter_map(Self::max_index).max()
            }
            OperatorExpr::Scale(_, e) => e.max_index(),
            _ => None,
        }
    }

    /// Matrix-free application.
    pub fn apply(&self, phi: &Functional) -> Result<Functional> {
        let n = phi.truncation();
        match self {
            OperatorExpr::Annihilate(k) => apply_annihilate(*k, phi),
            OperatorExpr::Create(k) => apply_create(*k, phi),
            OperatorExpr::Diagonal(d) => Ok(apply_diagonal(|s| d.eval(s), phi)),
            OperatorExpr::Identity => Ok(phi.clone()),
            OperatorExpr::Zero => Ok(Functional::zero(n)),
            OperatorExpr::Matrix { matrix, .. } => {
                Functional::from_dense(n, &matrix.apply(&phi.to_dense())?)
            }
            OperatorExpr::Sum(parts) => {
                let mut acc = Functional::zero(n);
                for p in parts {
                    acc = acc.add(&p.apply(phi)?)?;
                }
                Ok(acc)
            }
            OperatorExpr::Scale(c, e) => Ok(e.apply(phi)?.scale(*c)),
            OperatorExpr::Compose(parts) => {
                let mut acc = phi.clone();
                for p in parts.iter().rev() {
                    acc = p.apply(&acc)?;
                }
                Ok(acc)
            }
        }
    }

    pub fn materialize(&self, n: TruncationLevel) -> Result<MatrixOp> {
        Materializer::new().materialize(self, n)
    }
}

/// Diagonal values keyed by operator name and truncation.
type DiagonalCache = HashMap<(String, usize), Arc<Vec<f64>>>;

/// Materializes expressions, caching diagonal symbols per `(name, truncation)`.
#[derive(Default)]
pub struct Materializer {
    diagonals: Mutex<DiagonalCache>,
}

impl Materializer {
    pub fn new() -> Self {
        Self::default()
    }

    fn diagonal_values(&self, d: &Diagonal, n: TruncationLevel) -> Arc<Vec<f64>> {
        let key = (d.name.clone(), n.get());
        if let Some(v) = self.diagonals.lock().expect("cache lock").get(&key) {
            return Arc::clone(v);
        }
        let values: Vec<f64> = (0..n.dim())
            .into_par_iter()
            .map(|i| d.eval(Subset::from_bits(i as u64)))
            .collect();
        let values = Arc::new(values);
        self.diagonals
            .lock()
            .expect("cache lock")
            .entry(key)
            .or_insert(values)
            .clone()
    }

    pub fn materialize(&self, e: &OperatorExpr, n: TruncationLevel) -> Result<MatrixOp> {
        n.check_enumerable(crate::basis::truncation_cap())?;
        let dim = n.dim();
        match e {
            OperatorExpr::Annihilate(k) => {
                n.check_index(*k)?;
                let k = *k;
                Ok(MatrixOp::from_columns(dim, |c| {
                    let s = Subset::from_bits(c as u64);
                    if s.contains(k) {
                        vec![(s.without(k).index(), ONE)]
                    } else {
                        Vec::new()
                    }
                }))
            }
            OperatorExpr::Create(k) => {
                n.check_index(*k)?;
                let k = *k;
                Ok(MatrixOp::from_columns(dim, |c| {
                    let s = Subset::from_bits(c as u64);
                    if s.contains(k) {
                        Vec::new()
                    } else {
                        vec![(s.with(k).index(), ONE)]
                    }
                }))
            }
            OperatorExpr::Diagonal(d) => Ok(MatrixOp::real_diagonal(&self.diagonal_values(d, n))),
            OperatorExpr::Identity => Ok(MatrixOp::identity(dim)),
            OperatorExpr::Zero => Ok(MatrixOp::zeros(dim)),
            OperatorExpr::Matrix { matrix, .. } => {
                if matrix.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: matrix.dim(),
                    });
                }
                Ok(matrix.as_ref().clone())
            }
            OperatorExpr::Sum(parts) => {
                let mut acc = MatrixOp::zeros(dim);
                for p in parts {
                    acc = acc.add(&self.materialize(p, n)?)?;
                }
                Ok(acc)
            }
            OperatorExpr::Scale(c, e) => Ok(self.materialize(e, n)?.scale(*c)),
            OperatorExpr::Compose(parts) => {
                let mut acc = MatrixOp::identity(dim);
                for p in parts {
                    acc = acc.mul(&self.materialize(p, n)?)?;
                }
                Ok(acc)
            }
        }
    }
}

/// JSON form of an operator expression.
///
/// `gwn` refers to the weight supplied alongside the expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ExprSpec {
    Annihilate {
        k: usize,
    },
    Create {
        k: usize,
    },
    Identity,
    Zero,
    Number,
    Gwn,
    Wn1d {
        u: Vec<(usize, f64)>,
    },
    Lambda {
        p: f64,
    },
    Hop {
        j: usize,
        k: usize,
    },
    Sum {
        args: Vec<ExprSpec>,
    },
    Compose {
        args: Vec<ExprSpec>,
    },
    Scale {
        re: f64,
        #[serde(default)]
        im: f64,
        arg: Box<ExprSpec>,
    },
}

impl ExprSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn build(&self, weight: Option<&Weight2D>) -> Result<OperatorExpr> {
        let all = |args: &[ExprSpec]| -> Result<Vec<OperatorExpr>> {
            args.iter().map(|a| a.build(weight)).collect()
        };
        Ok(match self {
            ExprSpec::Annihilate { k } => OperatorExpr::a(*k),
            ExprSpec::Create { k } => OperatorExpr::ad(*k),
            ExprSpec::Identity => OperatorExpr::Identity,
            ExprSpec::Zero => OperatorExpr::Zero,
            ExprSpec::Number => OperatorExpr::number(),
            ExprSpec::Gwn => OperatorExpr::gwn(weight.ok_or_else(|| {
                Error::InvalidParameter("expression uses gwn but no weight was given".into())
            })?),
            ExprSpec::Wn1d { u } => OperatorExpr::wn1d(&Weight1D::from_values(u.iter().copied())?),
            ExprSpec::Lambda { p } => {
                if !p.is_finite() {
                    return Err(Error::InvalidParameter(format!("lambda power {p}")));
                }
                OperatorExpr::lambda_power(*p)
            }
            ExprSpec::Hop { j, k } => OperatorExpr::hop(*j, *k),
            ExprSpec::Sum { args } => OperatorExpr::Sum(all(args)?),
            ExprSpec::Compose { args } => OperatorExpr::Compose(all(args)?),
            ExprSpec::Scale { re, im, arg } => {
                OperatorExpr::Scale(Complex64::new(*re, *im), Box::new(arg.build(weight)?))
            }
        })
    }
}
