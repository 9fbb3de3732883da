//! Bernoulli noise model: independent signs with `P(+) = θ_k`, normalized
//! increments `ψ_k`, the products `Z_σ`, and exact and sampled Gram matrices.
//!
//! For this model `Z_k = ψ_k`, so `Z_σ = ∏_{j∈σ} ψ_j` with `Z_∅ = 1`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{truncation_cap, Subset, TruncationLevel};
use crate::error::{Error, Result};
use crate::functional::Functional;

/// Samples per independent RNG stream in Monte Carlo runs.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BernoulliParams {
    theta: Vec<f64>,
}

impl TryFrom<Vec<f64>> for BernoulliParams {
    type Error = Error;

    fn try_from(theta: Vec<f64>) -> Result<Self> {
        Self::new(theta)
    }
}

impl From<BernoulliParams> for Vec<f64> {
    fn from(p: BernoulliParams) -> Self {
        p.theta
    }
}

impl BernoulliParams {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if let Some((k, t)) = theta
            .iter()
            .enumerate()
            .find(|(_, t)| !(**t > 0.0 && **t < 1.0))
        {
            return Err(Error::InvalidParameter(format!(
                "theta[{k}] = {t} is outside the open interval (0, 1)"
            )));
        }
        Ok(BernoulliParams { theta })
    }

    pub fn constant(theta: f64, n: usize) -> Result<Self> {
        Self::new(vec![theta; n])
    }

    /// `θ ≡ 1/2`: symmetric signs, `ψ = ±1`.
    pub fn rademacher(n: usize) -> Self {
        BernoulliParams {
            theta: vec![0.5; n],
        }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// `ψ_k` on a `+` outcome: `√((1−θ)/θ)`.
    pub fn psi_plus(&self, k: usize) -> f64 {
        let t = self.theta[k];
        ((1.0 - t) / t).sqrt()
    }

    /// `ψ_k` on a `−` outcome: `−√(θ/(1−θ))`.
    pub fn psi_minus(&self, k: usize) -> f64 {
        let t = self.theta[k];
        -(t / (1.0 - t)).sqrt()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if self.theta.len() < n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.theta.len(),
            });
        }
        Ok(())
    }
}

/// One sign pattern of the first `n` steps. Bit `k` of `signs` is set for `+`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atom {
    pub signs: u64,
    pub probability: f64,
    pub psi: Vec<f64>,
}

impl Atom {
    fn new(params: &BernoulliParams, n: usize, signs: u64) -> Self {
        let mut probability = 1.0;
        let mut psi = Vec::with_capacity(n);
        for k in 0..n {
            if signs >> k & 1 == 1 {
                probability *= params.theta[k];
                psi.push(params.psi_plus(k));
            } else {
                probability *= 1.0 - params.theta[k];
                psi.push(params.psi_minus(k));
            }
        }
        Atom {
            signs,
            probability,
            psi,
        }
    }

    /// `Z_σ` on this atom.
    pub fn z_sigma(&self, sigma: Subset) -> Result<f64> {
        if !sigma.fits(self.psi.len()) {
            return Err(Error::IndexOutOfRange {
                index: sigma.span() - 1,
                truncation: self.psi.len(),
            });
        }
        Ok(sigma.iter().map(|j| self.psi[j]).product())
    }

    /// `M_m = ∑_{k≤m} ψ_k`.
    pub fn martingale(&self, m: usize) -> f64 {
        self.psi[..=m].iter().sum()
    }

    /// `Z_σ` for every `σ ⊂ {0..n-1}` in mask order.
    pub fn z_row(&self) -> Vec<f64> {
        z_row(&self.psi)
    }
}

fn z_row(psi: &[f64]) -> Vec<f64> {
    let dim = 1usize << psi.len();
    let mut row = vec![1.0; dim];
    for mask in 1..dim {
        let low = mask.trailing_zeros() as usize;
        row[mask] = row[mask & (mask - 1)] * psi[low];
    }
    row
}

/// All `2^n` atoms with their probabilities, in sign-mask order.
pub fn enumerate_atoms(params: &BernoulliParams, n: TruncationLevel) -> Result<Vec<Atom>> {
    n.check_enumerable(truncation_cap())?;
    params.check_len(n.get())?;
    Ok((0..n.dim() as u64)
        .map(|s| Atom::new(params, n.get(), s))
        .collect())
}

/// `G[σ,τ] = E[Z_σ Z_τ]` by exact enumeration.
pub fn exact_gram(params: &BernoulliParams, n: TruncationLevel) -> Result<DMatrix<f64>> {
    Ok(gram_from_atoms(&enumerate_atoms(params, n)?, n.dim()))
}

/// `Zᵀ diag(p) Z` over the given atoms; no square roots, so Walsh atoms stay exact.
pub fn gram_from_atoms(atoms: &[Atom], dim: usize) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = atoms.par_iter().map(Atom::z_row).collect();
    let z = DMatrix::from_fn(atoms.len(), dim, |i, j| rows[i][j]);
    let weighted = DMatrix::from_fn(atoms.len(), dim, |i, j| atoms[i].probability * rows[i][j]);
    z.transpose() * weighted
}

/// `max |G − I|`.
pub fn identity_residual(gram: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            let d = (gram[(i, j)] - target).abs();
            if d.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(d);
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCheck {
    /// Number of `(m, prefix)` pairs examined.
    pub prefixes: usize,
    /// `max |E[Z_m | prefix]|`.
    pub max_mean: f64,
    /// `max |E[Z_m² | prefix] − 1|`.
    pub max_second_moment_dev: f64,
    /// `max |∑ P(atom) − 1|` over the levels.
    pub max_total_probability_dev: f64,
}

/// Conditional first and second moments of `Z_m` given each sign prefix of
/// length `m`, for every `m < n`, computed from the joint atom probabilities.
pub fn conditional_moment_check(params: &BernoulliParams, n: TruncationLevel) -> Result<MomentCheck> {
    params.check_len(n.get())?;
    let mut out = MomentCheck {
        prefixes: 0,
        max_mean: 0.0,
        max_second_moment_dev: 0.0,
        max_total_probability_dev: 0.0,
    };
    for m in 0..n.get() {
        let atoms = enumerate_atoms(params, TruncationLevel::new(m + 1)?)?;
        let total: f64 = atoms.iter().map(|a| a.probability).sum();
        out.max_total_probability_dev = out.max_total_probability_dev.max((total - 1.0).abs());
        for prefix in 0..(1u64 << m) {
            let continuations = [prefix, prefix | 1 << m].map(|s| &atoms[s as usize]);
            let p_prefix: f64 = continuations.iter().map(|a| a.probability).sum();
            let mean: f64 = continuations
                .iter()
                .map(|a| a.probability * a.psi[m])
                .sum::<f64>()
                / p_prefix;
            let second: f64 = continuations
                .iter()
                .map(|a| a.probability * a.psi[m] * a.psi[m])
                .sum::<f64>()
                / p_prefix;
            out.max_mean = out.max_mean.max(mean.abs());
            out.max_second_moment_dev = out.max_second_moment_dev.max((second - 1.0).abs());
            out.prefixes += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McGram {
    pub samples: usize,
    pub seed: u64,
    pub mean: DMatrix<f64>,
    pub stderr: DMatrix<f64>,
}

impl McGram {
    /// `max |G_στ − δ_στ| / SE_στ`; entries with zero standard error contribute
    /// only if they miss the target by more than `floor`.
    pub fn max_z_score(&self, floor: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.mean.nrows() {
            for j in 0..self.mean.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                let d = (self.mean[(i, j)] - target).abs();
                let se = self.stderr[(i, j)];
                let z = if d <= floor {
                    0.0
                } else if se > 0.0 {
                    d / se
                } else {
                    f64::INFINITY
                };
                worst = worst.max(z);
            }
        }
        worst
    }

    /// Root-mean-square deviation from the identity.
    pub fn rms_error(&self) -> f64 {
        let n = self.mean.nrows();
        let sum: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| {
                let target = if i == j { 1.0 } else { 0.0 };
                (self.mean[(i, j)] - target).powi(2)
            })
            .sum();
        (sum / (n * n) as f64).sqrt()
    }
}

/// Empirical Gram matrix with per-entry standard errors. Chunk `c` of
/// `CHUNK` samples draws from stream `c` of a ChaCha8 generator keyed by `seed`,
/// so results do not depend on thread scheduling.
pub fn monte_carlo_gram(
    params: &BernoulliParams,
    n: TruncationLevel,
    samples: usize,
    seed: u64,
) -> Result<McGram> {
    n.check_enumerable(truncation_cap())?;
    params.check_len(n.get())?;
    if samples < 2 {
        return Err(Error::InvalidParameter(format!(
            "Monte Carlo needs at least 2 samples, got {samples}"
        )));
    }
    let dim = n.dim();
    let chunks = samples.div_ceil(CHUNK);
    let (sum, sum_sq) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut sum = vec![0.0; dim * dim];
            let mut sum_sq = vec![0.0; dim * dim];
            let mut psi = vec![0.0; n.get()];
            for _ in 0..count {
                for (k, slot) in psi.iter_mut().enumerate() {
                    *slot = if rng.gen::<f64>() < params.theta[k] {
                        params.psi_plus(k)
                    } else {
                        params.psi_minus(k)
                    };
                }
                let z = z_row(&psi);
                for i in 0..dim {
                    for j in i..dim {
                        let v = z[i] * z[j];
                        sum[i * dim + j] += v;
                        sum_sq[i * dim + j] += v * v;
                    }
                }
            }
            (sum, sum_sq)
        })
        .reduce(
            || (vec![0.0; dim * dim], vec![0.0; dim * dim]),
            |(mut a, mut b), (c, d)| {
                a.iter_mut().zip(c).for_each(|(x, y)| *x += y);
                b.iter_mut().zip(d).for_each(|(x, y)| *x += y);
                (a, b)
            },
        );
    let s = samples as f64;
    let mut mean = DMatrix::zeros(dim, dim);
    let mut stderr = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let m = sum[i * dim + j] / s;
            let var = ((sum_sq[i * dim + j] / s - m * m) * s / (s - 1.0)).max(0.0);
            let se = (var / s).sqrt();
            mean[(i, j)] = m;
            mean[(j, i)] = m;
            stderr[(i, j)] = se;
            stderr[(j, i)] = se;
        }
    }
    Ok(McGram {
        samples,
        seed,
        mean,
        stderr,
    })
}

/// RMS error of the empirical Gram at two sample sizes, and their ratio.
/// The ratio should be near `√(large / small)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTrend {
    pub small: usize,
    pub large: usize,
    pub rms_small: f64,
    pub rms_large: f64,
    pub ratio: f64,
    pub expected_ratio: f64,
}

pub fn convergence_trend(
    params: &BernoulliParams,
    n: TruncationLevel,
    small: usize,
    large: usize,
    seed: u64,
) -> Result<ConvergenceTrend> {
    let rms_small = monte_carlo_gram(params, n, small, seed)?.rms_error();
    let rms_large = monte_carlo_gram(params, n, large, seed.wrapping_add(1))?.rms_error();
    Ok(ConvergenceTrend {
        small,
        large,
        rms_small,
        rms_large,
        ratio: rms_small / rms_large,
        expected_ratio: (large as f64 / small as f64).sqrt(),
    })
}

/// Chaos coefficients `c_σ = E[f · Z_σ]` of a function of `ψ_0..ψ_{n-1}`.
pub fn chaotic_expand<F>(f: F, params: &BernoulliParams, n: TruncationLevel) -> Result<Functional>
where
    F: Fn(&[f64]) -> f64,
{
    let atoms = enumerate_atoms(params, n)?;
    let mut coeffs = vec![0.0; n.dim()];
    for a in &atoms {
        let weight = a.probability * f(&a.psi);
        for (c, z) in coeffs.iter_mut().zip(a.z_row()) {
            *c += weight * z;
        }
    }
    let values: Vec<Complex64> = coeffs.into_iter().map(|c| Complex64::new(c, 0.0)).collect();
    Functional::from_dense(n, &values)
}

/// `∑_σ c_σ Z_σ(atom)`.
pub fn reconstruct(expansion: &Functional, atom: &Atom) -> Result<f64> {
    expansion
        .iter()
        .map(|(s, c)| Ok(c.re * atom.z_sigma(s)?))
        .sum()
}

/// `max_atom |f(atom) − ∑ c_σ Z_σ(atom)|` for the expansion of `f`.
pub fn expansion_residual<F>(f: F, params: &BernoulliParams, n: TruncationLevel) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let expansion = chaotic_expand(&f, params, n)?;
    let mut worst: f64 = 0.0;
    for a in enumerate_atoms(params, n)? {
        worst = worst.max((f(&a.psi) - reconstruct(&expansion, &a)?).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(k: usize) -> TruncationLevel {
        TruncationLevel::new(k).unwrap()
    }

    #[test]
    fn atoms_examples() {
        let atoms = enumerate_atoms(&BernoulliParams::rademacher(1), n(1)).unwrap();
        assert_eq!(atoms.len(), 2);
        assert_eq!((atoms[1].psi[0], atoms[1].probability), (1.0, 0.5));
        assert_eq!((atoms[0].psi[0], atoms[0].probability), (-1.0, 0.5));

        let quarter = BernoulliParams::constant(0.25, 1).unwrap();
        let atoms = enumerate_atoms(&quarter, n(1)).unwrap();
        assert!((atoms[1].psi[0] - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(atoms[1].probability, 0.25);
        assert!((atoms[0].psi[0] + 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(atoms[0].probability, 0.75);

        let mixed = BernoulliParams::new(vec![0.25, 0.6]).unwrap();
        let atoms = enumerate_atoms(&mixed, n(2)).unwrap();
        assert_eq!(atoms.len(), 4);
        assert!((atoms[0b11].probability - 0.25 * 0.6).abs() < 1e-16);
        assert!((atoms[0b01].probability - 0.25 * 0.4).abs() < 1e-16);
        let total: f64 = atoms.iter().map(|a| a.probability).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_closed_interval_endpoints() {
        assert!(BernoulliParams::new(vec![0.5, 1.0]).is_err());
        assert!(BernoulliParams::new(vec![0.0]).is_err());
        assert!(BernoulliParams::new(vec![f64::NAN]).is_err());
        assert!(enumerate_atoms(&BernoulliParams::rademacher(2), n(3)).is_err());
    }

    #[test]
    fn z_sigma_examples() {
        let p = BernoulliParams::new(vec![0.25, 2.0 / 3.0]).unwrap();
        for a in enumerate_atoms(&p, n(2)).unwrap() {
            assert_eq!(a.z_sigma(Subset::empty()).unwrap(), 1.0);
            let both = Subset::from_indices([0, 1]).unwrap();
            assert_eq!(a.z_sigma(both).unwrap(), a.psi[0] * a.psi[1]);
            assert_eq!(a.z_row()[3], a.psi[0] * a.psi[1]);
            assert_eq!(a.martingale(1), a.psi[0] + a.psi[1]);
        }
        let plus = &enumerate_atoms(&BernoulliParams::rademacher(1), n(1)).unwrap()[1];
        assert_eq!(plus.z_sigma(Subset::singleton(0).unwrap()).unwrap(), 1.0);
        assert!(plus.z_sigma(Subset::singleton(1).unwrap()).is_err());
    }

    #[test]
    fn exact_gram_examples() {
        for theta in [0.5, 0.25, 0.9, 1e-3] {
            let g = exact_gram(&BernoulliParams::constant(theta, 1).unwrap(), n(1)).unwrap();
            assert!(identity_residual(&g) < 1e-12, "theta = {theta}");
        }
        let walsh = exact_gram(&BernoulliParams::rademacher(3), n(3)).unwrap();
        assert_eq!(identity_residual(&walsh), 0.0);
        let mixed = BernoulliParams::new(vec![0.25, 1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert!(identity_residual(&exact_gram(&mixed, n(3)).unwrap()) < 1e-12);
    }

    #[test]
    fn moment_examples() {
        let quarter = BernoulliParams::constant(0.25, 3).unwrap();
        let m = conditional_moment_check(&quarter, n(3)).unwrap();
        assert_eq!(m.prefixes, 1 + 2 + 4);
        assert!(m.max_mean < 1e-15 && m.max_second_moment_dev < 1e-15);
        // (1/4)·3 + (3/4)·(1/3) = 1
        assert!((0.25 * 3.0 + 0.75 / 3.0 - 1.0f64).abs() < 1e-15);
        let coin = conditional_moment_check(&BernoulliParams::rademacher(4), n(4)).unwrap();
        assert_eq!((coin.max_mean, coin.max_second_moment_dev), (0.0, 0.0));
    }

    #[test]
    fn monte_carlo_is_reproducible_and_close() {
        let p = BernoulliParams::new(vec![0.3, 0.5, 0.8]).unwrap();
        let a = monte_carlo_gram(&p, n(3), 20_000, 7).unwrap();
        let b = monte_carlo_gram(&p, n(3), 20_000, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.max_z_score(1e-12) < 5.0);
        let c = monte_carlo_gram(&p, n(3), 20_000, 8).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn chaotic_expand_examples() {
        let p = BernoulliParams::new(vec![0.25, 0.7, 0.4]).unwrap();
        let level = n(3);
        let tau = Subset::from_indices([0, 2]).unwrap();
        let e = chaotic_expand(|psi| psi[0] * psi[2], &p, level).unwrap();
        let expected = Functional::basis(level, tau).unwrap();
        assert!(e.residual(&expected) < 1e-12);
        let one = chaotic_expand(|_| 1.0, &p, level).unwrap();
        assert!(one.residual(&Functional::basis(level, Subset::empty()).unwrap()) < 1e-12);
        let combo = chaotic_expand(|psi| psi[0] * psi[1] + 2.0, &p, level).unwrap();
        let expected = Functional::from_coefficients(
            level,
            [
                (Subset::from_indices([0, 1]).unwrap(), Complex64::new(1.0, 0.0)),
                (Subset::empty(), Complex64::new(2.0, 0.0)),
            ],
        )
        .unwrap();
        assert!(combo.residual(&expected) < 1e-12);
        let nonlinear = |psi: &[f64]| (psi[0] + psi[1]).exp() - psi[2].powi(3);
        assert!(expansion_residual(nonlinear, &p, level).unwrap() < 1e-12);
    }
}
