//! Truncated quantum exclusion generator
//!
//! `ℒ(X) = i[H,X] − ½ ∑ w(j,k) [X A*A − 2 A*XA + A*A X]`, `A = ∂_j* ∂_k`,
//!
//! assembled over the finite support of `w`. Rates enter as `w(j,k)`; no
//! square roots are taken. Only the generator is built, never the semigroup.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::basis::{Subset, TruncationLevel};
use crate::error::{Error, Result};
use crate::functional::random_unit_disc;
use crate::matrix::MatrixOp;
use crate::operators::{from_linear_map, l2_annihilate, l2_create, l2_wn_apply};
use crate::report::{CheckResult, VerificationReport, Worst};
use crate::weights::{Weight1D, Weight2D};

pub type Dense = DMatrix<Complex64>;

const HERMITIAN_TOL: f64 = 1e-12;

fn dense_residual(a: &Dense, b: &Dense) -> f64 {
    let scale = a
        .iter()
        .chain(b.iter())
        .map(|z| z.norm())
        .fold(1.0, f64::max);
    let diff = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, |m: f64, d| if d.is_nan() { f64::NAN } else { m.max(d) });
    diff / scale
}

/// Square complex matrix over the truncated basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    matrix: Dense,
    hermitian: bool,
}

impl Observable {
    /// Checks the dimension is a power of two and, when `hermitian` is set,
    /// that `X = X*` within `1e-12`.
    pub fn new(matrix: Dense, hermitian: bool) -> Result<Self> {
        let dim = matrix.nrows();
        if matrix.ncols() != dim || !dim.is_power_of_two() {
            return Err(Error::DimensionMismatch {
                expected: dim.next_power_of_two(),
                found: matrix.ncols(),
            });
        }
        if hermitian {
            let r = dense_residual(&matrix, &matrix.adjoint());
            if r.is_nan() || r > HERMITIAN_TOL {
                return Err(Error::InvalidParameter(format!(
                    "matrix flagged hermitian deviates from its adjoint by {r:e}"
                )));
            }
        }
        Ok(Observable { matrix, hermitian })
    }

    pub fn identity(n: TruncationLevel) -> Self {
        Observable {
            matrix: Dense::identity(n.dim(), n.dim()),
            hermitian: true,
        }
    }

    pub fn zeros(n: TruncationLevel) -> Self {
        Observable {
            matrix: Dense::zeros(n.dim(), n.dim()),
            hermitian: true,
        }
    }

    pub fn real_diagonal(values: &[f64]) -> Self {
        let d = nalgebra::DVector::from_iterator(
            values.len(),
            values.iter().map(|v| Complex64::new(*v, 0.0)),
        );
        Observable {
            matrix: Dense::from_diagonal(&d),
            hermitian: true,
        }
    }

    pub fn matrix(&self) -> &Dense {
        &self.matrix
    }

    pub fn into_matrix(self) -> Dense {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Row-major `[[[re, im], ...], ...]`.
    pub fn from_json(text: &str, hermitian: bool) -> Result<Self> {
        let rows: MatrixJson = serde_json::from_str(text)?;
        Self::new(from_rows(&rows)?, hermitian)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&to_rows(&self.matrix)).expect("matrix serializes")
    }
}

pub type MatrixJson = Vec<Vec<(f64, f64)>>;

pub fn to_rows(m: &Dense) -> MatrixJson {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| (m[(r, c)].re, m[(r, c)].im)).collect())
        .collect()
}

pub fn from_rows(rows: &MatrixJson) -> Result<Dense> {
    let n = rows.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: bad.len(),
        });
    }
    Ok(Dense::from_fn(n, n, |r, c| {
        Complex64::new(rows[r][c].0, rows[r][c].1)
    }))
}

/// `H = diag(#_u)`. A demonstration default; any hermitian `H` is accepted.
pub fn demo_hamiltonian(u: &Weight1D, n: TruncationLevel) -> Observable {
    let values: Vec<f64> = n.subsets().map(|s| u.count(s)).collect();
    Observable::real_diagonal(&values)
}

#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub hamiltonian: Observable,
    pub weight: Weight2D,
    pub truncation: TruncationLevel,
}

impl GeneratorSpec {
    pub fn new(hamiltonian: Observable, weight: Weight2D, truncation: TruncationLevel) -> Result<Self> {
        if hamiltonian.dim() != truncation.dim() {
            return Err(Error::DimensionMismatch {
                expected: truncation.dim(),
                found: hamiltonian.dim(),
            });
        }
        if !hamiltonian.is_hermitian() {
            Observable::new(hamiltonian.matrix.clone(), true)?;
        }
        support_within(&weight, truncation)?;
        Ok(GeneratorSpec {
            hamiltonian,
            weight,
            truncation,
        })
    }
}

fn support_within(w: &Weight2D, n: TruncationLevel) -> Result<usize> {
    match w.support_bound() {
        Some(m) if m <= n.get() => Ok(m),
        Some(m) => Err(Error::IndexOutOfRange {
            index: m - 1,
            truncation: n.get(),
        }),
        None => Err(Error::InvalidWeight(
            "the generator needs a finitely supported weight".into(),
        )),
    }
}

/// `∂_j* ∂_k` materialized from the coefficient maps.
pub fn jump_operator(j: usize, k: usize, n: TruncationLevel) -> Result<MatrixOp> {
    from_linear_map(n, |xi| l2_create(j, &l2_annihilate(k, xi)?))
}

struct Jump {
    rate: f64,
    a: MatrixOp,
    a_star: MatrixOp,
    a_star_a: MatrixOp,
}

/// Assembled generator: the Hamiltonian plus one jump term per nonzero weight entry.
pub struct Generator {
    spec: GeneratorSpec,
    jumps: Vec<Jump>,
}

impl Generator {
    pub fn assemble(spec: GeneratorSpec) -> Result<Self> {
        let n = spec.truncation;
        let jumps = spec
            .weight
            .entries()
            .into_par_iter()
            .map(|(j, k, rate)| {
                let a = jump_operator(j, k, n)?;
                let a_star = a.adjoint();
                let a_star_a = a_star.mul(&a)?;
                Ok(Jump {
                    rate,
                    a,
                    a_star,
                    a_star_a,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Generator { spec, jumps })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// `i[H,X]`.
    pub fn hamiltonian_part(&self, x: &Dense) -> Dense {
        let h = self.spec.hamiltonian.matrix();
        (h * x - x * h) * Complex64::new(0.0, 1.0)
    }

    /// `−½ ∑ w(j,k) [X A*A − 2 A*XA + A*A X]`.
    pub fn dissipative_part(&self, x: &Dense) -> Dense {
        let dim = x.nrows();
        self.jumps
            .par_iter()
            .map(|jump| {
                let xa = jump.a.dense_mul(x);
                let term = jump.a_star_a.dense_mul(x) - jump.a_star.mul_dense(&xa) * Complex64::new(2.0, 0.0)
                    + jump.a_star_a.mul_dense(x);
                term * Complex64::new(-0.5 * jump.rate, 0.0)
            })
            .reduce(|| Dense::zeros(dim, dim), |a, b| a + b)
    }

    pub fn apply(&self, x: &Dense) -> Result<Dense> {
        let dim = self.spec.truncation.dim();
        if x.nrows() != dim || x.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: x.nrows(),
            });
        }
        Ok(self.hamiltonian_part(x) + self.dissipative_part(x))
    }

    /// `X + dt·ℒ(X)`. Demonstration only: no stability or positivity guarantees.
    pub fn euler_step(&self, x: &Dense, dt: f64) -> Result<Dense> {
        Ok(x + self.apply(x)? * Complex64::new(dt, 0.0))
    }
}

/// `ℒ(X)` for a single observable.
pub fn assemble_generator(spec: &GeneratorSpec, x: &Observable) -> Result<Observable> {
    let out = Generator::assemble(spec.clone())?.apply(x.matrix())?;
    Observable::new(out, false)
}

/// Random matrix with entries uniform on the complex unit disc.
pub fn random_observable(dim: usize, rng: &mut ChaCha8Rng) -> Dense {
    Dense::from_fn(dim, dim, |_, _| random_unit_disc(rng))
}

/// `∑ w(j,k) (∂_j*∂_k)* ∂_j*∂_k`, `∑ w(j,k) ∂_k*∂_j∂_j*∂_k`, `diag(ϑ_w)` and the
/// matrix of `S_w` all agree.
pub fn check_sum_identity(w: &Weight2D, n: TruncationLevel, tol: f64) -> Result<VerificationReport> {
    support_within(w, n)?;
    let dim = n.dim();
    let mut adjoint_form = MatrixOp::zeros(dim);
    let mut rearranged = MatrixOp::zeros(dim);
    for (j, k, rate) in w.entries() {
        let a = jump_operator(j, k, n)?;
        let rate = Complex64::new(rate, 0.0);
        adjoint_form = adjoint_form.add(&a.adjoint().mul(&a)?.scale(rate))?;
        let chain = from_linear_map(n, |xi| {
            let x = l2_annihilate(k, xi)?;
            let x = l2_create(j, &x)?;
            let x = l2_annihilate(j, &x)?;
            l2_create(k, &x)
        })?;
        rearranged = rearranged.add(&chain.scale(rate))?;
    }
    let theta: Vec<f64> = n.subsets().map(|s| w.spectral_theta(s)).collect();
    let diagonal = MatrixOp::real_diagonal(&theta);
    let s_w = from_linear_map(n, |xi| Ok(l2_wn_apply(w, xi)))?;

    let mut report = VerificationReport::new("qms");
    let hash = w.spec_hash();
    let row = |name: &str, identity: &str, lhs: &MatrixOp, rhs: &MatrixOp| -> Result<CheckResult> {
        Ok(CheckResult::new(name, identity, lhs.residual(rhs)?, tol, 1)
            .input("n", n.get())
            .input("weight", hash.clone()))
    };
    report.push(row(
        "qms/sum-rearrangement",
        "sum w(j,k) (d_j* d_k)* d_j* d_k = sum w(j,k) d_k* d_j d_j* d_k",
        &adjoint_form,
        &rearranged,
    )?);
    report.push(row(
        "qms/sum-equals-theta",
        "sum w(j,k) (d_j* d_k)* d_j* d_k = diag(theta_w)",
        &adjoint_form,
        &diagonal,
    )?);
    report.push(row(
        "qms/sum-equals-s_w",
        "sum w(j,k) d_k* d_j d_j* d_k = S_w",
        &rearranged,
        &s_w,
    )?);
    let corrupted = adjoint_form.perturbed(0, 0, Complex64::new(1e-6, 0.0));
    report.push(
        row(
            "qms/sum-equals-theta/perturbed",
            "sum w(j,k) (d_j* d_k)* d_j* d_k = diag(theta_w), sum perturbed by 1e-6 at (empty, empty)",
            &corrupted,
            &diagonal,
        )?
        .control(),
    );
    Ok(report)
}

/// `ℒ(I) = 0`, `ℒ(X*) = ℒ(X)*`, linearity, and preservation of diagonal
/// observables by the dissipative part, on `trials` random `X`.
pub fn check_generator_structure(
    spec: &GeneratorSpec,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<VerificationReport> {
    let generator = Generator::assemble(spec.clone())?;
    let n = spec.truncation;
    let dim = n.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hash = spec.weight.spec_hash();
    let mut report = VerificationReport::new("qms");

    let at_identity = generator.apply(&Dense::identity(dim, dim))?;
    let zero = Dense::zeros(dim, dim);
    report.push(
        CheckResult::new(
            "qms/generator-annihilates-identity",
            "L(I) = 0",
            dense_residual(&at_identity, &zero),
            0.0,
            1,
        )
        .input("n", n.get())
        .input("weight", hash.clone())
        .note("exact when H and w have exactly representable entries"),
    );

    let mut star = Worst::default();
    let mut linear = Worst::default();
    let mut hermitian_out = Worst::default();
    let mut diagonal_kept = Worst::default();
    for _ in 0..trials {
        let x = random_observable(dim, &mut rng);
        let y = random_observable(dim, &mut rng);
        let lx = generator.apply(&x)?;
        star.record(dense_residual(&generator.apply(&x.adjoint())?, &lx.adjoint()));

        let (a, b) = (random_unit_disc(&mut rng), random_unit_disc(&mut rng));
        let combo = generator.apply(&(&x * a + &y * b))?;
        let separate = lx * a + generator.apply(&y)? * b;
        linear.record(dense_residual(&combo, &separate));

        let h = &x + x.adjoint();
        let lh = generator.apply(&h)?;
        hermitian_out.record(dense_residual(&lh, &lh.adjoint()));

        let d = Dense::from_diagonal(&x.diagonal());
        let ld = generator.dissipative_part(&d);
        let off = Dense::from_fn(dim, dim, |r, c| if r == c { Complex64::default() } else { ld[(r, c)] });
        diagonal_kept.record(dense_residual(&off, &zero));
    }
    let inputs = |c: CheckResult| c.input("n", n.get()).input("weight", hash.clone()).input("seed", seed);
    report.push(inputs(star.finish("qms/adjoint-covariance", "L(X*) = L(X)*", tol)));
    report.push(inputs(linear.finish("qms/linearity", "L(aX + bY) = a L(X) + b L(Y)", tol)));
    report.push(inputs(hermitian_out.finish(
        "qms/hermitian-preserved",
        "X hermitian implies L(X) hermitian",
        tol,
    )));
    report.push(inputs(diagonal_kept.finish(
        "qms/diagonal-preserved",
        "dissipative part maps diagonal X to diagonal matrices",
        tol,
    )));
    Ok(report)
}

/// Occupation of site `k`: the diagonal projector `∂_k* ∂_k`.
pub fn occupation(k: usize, n: TruncationLevel) -> Observable {
    let values: Vec<f64> = n
        .subsets()
        .map(|s: Subset| f64::from(s.indicator(k)))
        .collect();
    Observable::real_diagonal(&values)
}
