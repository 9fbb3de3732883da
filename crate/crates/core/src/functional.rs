//! Generalized functionals stored through their Fock transforms.
//!
//! A [`Functional`] maps basis subsets to complex coefficients; absent keys are
//! zero. The same container holds square integrable vectors, in which case the
//! coefficients are `⟨Z_σ, ξ⟩` and [`riesz_embed`] converts between the two
//! readings by conjugation.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{lambda_series_partial, Subset, TruncationLevel};
use crate::error::{Error, Result};
use crate::tolerance::Tolerance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FunctionalJson", into = "FunctionalJson")]
pub struct Functional {
    truncation: TruncationLevel,
    coefficients: BTreeMap<Subset, Complex64>,
}

impl Functional {
    pub fn zero(truncation: TruncationLevel) -> Self {
        Functional {
            truncation,
            coefficients: BTreeMap::new(),
        }
    }

    /// `δ_σ`: Fock transform 1 at `σ`, 0 elsewhere. Also the basis vector `Z_σ`.
    pub fn basis(truncation: TruncationLevel, sigma: Subset) -> Result<Self> {
        Self::from_coefficients(truncation, [(sigma, Complex64::new(1.0, 0.0))])
    }

    /// Builds from `(σ, c)` pairs; repeated keys add.
    pub fn from_coefficients<I>(truncation: TruncationLevel, coefficients: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Subset, Complex64)>,
    {
        let mut out = Self::zero(truncation);
        for (sigma, c) in coefficients {
            if !truncation.contains(sigma) {
                return Err(Error::IndexOutOfRange {
                    index: sigma.span() - 1,
                    truncation: truncation.get(),
                });
            }
            out.accumulate(sigma, c);
        }
        Ok(out)
    }

    /// Coefficients supplied for every basis element in mask order.
    pub fn from_dense(truncation: TruncationLevel, values: &[Complex64]) -> Result<Self> {
        if values.len() != truncation.dim() {
            return Err(Error::DimensionMismatch {
                expected: truncation.dim(),
                found: values.len(),
            });
        }
        let mut out = Self::zero(truncation);
        for (i, &c) in values.iter().enumerate() {
            out.accumulate(Subset::from_bits(i as u64), c);
        }
        Ok(out)
    }

    /// Random coefficients drawn uniformly from the complex unit disc on
    /// every basis element.
    pub fn random<R: Rng + ?Sized>(truncation: TruncationLevel, rng: &mut R) -> Self {
        let coefficients = truncation
            .subsets()
            .map(|s| (s, random_unit_disc(rng)))
            .collect();
        Functional {
            truncation,
            coefficients,
        }
    }

    /// Internal insertion that skips exact zeros. Keys are not range checked.
    pub(crate) fn accumulate(&mut self, sigma: Subset, c: Complex64) {
        if c == Complex64::new(0.0, 0.0) {
            return;
        }
        let slot = self.coefficients.entry(sigma).or_default();
        *slot += c;
    }

    pub(crate) fn from_map(
        truncation: TruncationLevel,
        coefficients: BTreeMap<Subset, Complex64>,
    ) -> Self {
        Functional {
            truncation,
            coefficients,
        }
    }

    pub fn truncation(&self) -> TruncationLevel {
        self.truncation
    }

    pub fn coefficients(&self) -> &BTreeMap<Subset, Complex64> {
        &self.coefficients
    }

    pub fn iter(&self) -> impl Iterator<Item = (Subset, Complex64)> + '_ {
        self.coefficients.iter().map(|(s, c)| (*s, *c))
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.values().all(|c| c.norm_sqr() == 0.0)
    }

    /// `Φ̂(σ)`, zero when absent.
    pub fn fock(&self, sigma: Subset) -> Complex64 {
        self.coefficients.get(&sigma).copied().unwrap_or_default()
    }

    /// Dense coefficient vector in mask order.
    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut v = vec![Complex64::default(); self.truncation.dim()];
        for (s, c) in self.iter() {
            v[s.index()] = c;
        }
        v
    }

    /// `‖ξ‖_p = (∑ λ_σ^{2p} |c_σ|²)^{1/2}`.
    pub fn norm_p(&self, p: f64) -> f64 {
        self.weighted_l2(2.0 * p)
    }

    /// `‖Φ‖_{-p} = (∑ λ_σ^{-2p} |Φ̂(σ)|²)^{1/2}`.
    pub fn dual_norm_p(&self, p: f64) -> f64 {
        self.weighted_l2(-2.0 * p)
    }

    fn weighted_l2(&self, exponent: f64) -> f64 {
        self.iter()
            .map(|(s, c)| s.lambda().powf(exponent) * c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Checks `|Φ̂(σ)| ≤ C λ_σ^p` over the truncated basis and, when it holds,
    /// the induced estimate `‖Φ‖_{-(p+1)} ≤ C (∑_σ λ_σ^{-2})^{1/2}`.
    pub fn check_growth(&self, bound: GrowthBound, tol: Tolerance) -> GrowthCheck {
        // Absent coefficients are zero and satisfy any nonnegative bound.
        let worst = self
            .iter()
            .map(|(s, c)| (s, c.norm() / s.lambda().powf(bound.p)))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let holds = worst.is_none_or(|(_, ratio)| tol.le(ratio, bound.c));
        let norm_consequence = holds.then(|| {
            let q = bound.p + 1.0;
            let lhs = self.dual_norm_p(q);
            let series = lambda_series_partial(2.0 * (q - bound.p), self.truncation)
                .expect("exponent 2 is admissible");
            let rhs = bound.c * series.sqrt();
            NormConsequence {
                q,
                lhs,
                rhs,
                holds: tol.le(lhs, rhs),
            }
        });
        GrowthCheck {
            holds,
            worst,
            norm_consequence,
        }
    }

    pub fn add(&self, other: &Functional) -> Result<Functional> {
        self.check_same_truncation(other)?;
        let mut out = self.clone();
        for (s, c) in other.iter() {
            *out.coefficients.entry(s).or_default() += c;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Functional) -> Result<Functional> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, factor: Complex64) -> Functional {
        Functional {
            truncation: self.truncation,
            coefficients: self
                .coefficients
                .iter()
                .map(|(s, c)| (*s, c * factor))
                .collect(),
        }
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.coefficients.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `max_σ |Φ̂(σ) − Ψ̂(σ)|`.
    pub fn max_abs_diff(&self, other: &Functional) -> f64 {
        let keys = self.coefficients.keys().chain(other.coefficients.keys());
        keys.map(|s| (self.fock(*s) - other.fock(*s)).norm())
            .fold(0.0, f64::max)
    }

    /// Max-abs difference normalized by `max(1, largest modulus on either side)`.
    pub fn residual(&self, other: &Functional) -> f64 {
        let scale = 1f64.max(self.max_abs()).max(other.max_abs());
        self.max_abs_diff(other) / scale
    }

    fn check_same_truncation(&self, other: &Functional) -> Result<()> {
        if self.truncation != other.truncation {
            return Err(Error::DimensionMismatch {
                expected: self.truncation.get(),
                found: other.truncation.get(),
            });
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("functional serializes")
    }
}

/// A point drawn uniformly from the closed complex unit disc.
pub fn random_unit_disc<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let r = rng.gen::<f64>().sqrt();
    let theta = 2.0 * PI * rng.gen::<f64>();
    Complex64::from_polar(r, theta)
}

/// Riesz image of an `L²` vector: `(Rξ)^(σ) = ⟨ξ, Z_σ⟩ = conj⟨Z_σ, ξ⟩`.
pub fn riesz_embed(xi: &Functional) -> Functional {
    Functional {
        truncation: xi.truncation,
        coefficients: xi.coefficients.iter().map(|(s, c)| (*s, c.conj())).collect(),
    }
}

/// Canonical bilinear pairing `⟪Φ, ξ⟫ = ∑_σ Φ̂(σ) ⟨Z_σ, ξ⟩`.
pub fn pair(phi: &Functional, xi: &Functional) -> Complex64 {
    let (small, large) = if phi.coefficients.len() <= xi.coefficients.len() {
        (phi, xi)
    } else {
        (xi, phi)
    };
    small
        .coefficients
        .iter()
        .map(|(s, c)| c * large.fock(*s))
        .sum()
}

/// Growth constants `(C, p)` in `|Φ̂(σ)| ≤ C λ_σ^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthBound {
    pub c: f64,
    pub p: f64,
}

impl GrowthBound {
    pub fn new(c: f64, p: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0 && p.is_finite() && p >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "growth bound needs finite C ≥ 0 and p ≥ 0, got C = {c}, p = {p}"
            )));
        }
        Ok(GrowthBound { c, p })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthCheck {
    pub holds: bool,
    /// Subset attaining the largest `|Φ̂(σ)| / λ_σ^p`, with that ratio.
    pub worst: Option<(Subset, f64)>,
    pub norm_consequence: Option<NormConsequence>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormConsequence {
    pub q: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Serialize, Deserialize)]
struct FunctionalJson {
    truncation: usize,
    coefficients: Vec<(Vec<usize>, f64, f64)>,
}

impl TryFrom<FunctionalJson> for Functional {
    type Error = Error;

    fn try_from(raw: FunctionalJson) -> Result<Self> {
        let n = TruncationLevel::new(raw.truncation)?;
        let pairs = raw
            .coefficients
            .into_iter()
            .map(|(ix, re, im)| Ok((Subset::from_indices(ix)?, Complex64::new(re, im))))
            .collect::<Result<Vec<_>>>()?;
        Functional::from_coefficients(n, pairs)
    }
}

impl From<Functional> for FunctionalJson {
    fn from(f: Functional) -> Self {
        FunctionalJson {
            truncation: f.truncation.get(),
            coefficients: f
                .coefficients
                .iter()
                .map(|(s, c)| (s.iter().collect(), c.re, c.im))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn n(k: usize) -> TruncationLevel {
        TruncationLevel::new(k).unwrap()
    }

    fn set(ix: &[usize]) -> Subset {
        Subset::from_indices(ix.iter().copied()).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn fock_lookup() {
        let d0 = Functional::basis(n(3), set(&[0])).unwrap();
        assert_eq!(d0.fock(set(&[0])), c(1.0, 0.0));
        assert_eq!(d0.fock(set(&[1])), c(0.0, 0.0));
        let both = d0.add(&Functional::basis(n(3), set(&[1])).unwrap()).unwrap();
        assert_eq!(both.fock(set(&[0])), c(1.0, 0.0));
        assert_eq!(both.fock(set(&[1])), c(1.0, 0.0));
    }

    #[test]
    fn keys_outside_truncation_rejected() {
        assert!(Functional::basis(n(2), set(&[2])).is_err());
    }

    #[test]
    fn norm_examples() {
        let z1 = Functional::basis(n(4), set(&[1])).unwrap();
        assert_eq!(z1.norm_p(2.0), 4.0);
        let mixed = Functional::from_coefficients(
            n(3),
            [(set(&[0, 2]), c(3.0, 0.0)), (set(&[1]), c(0.0, 4.0))],
        )
        .unwrap();
        assert_eq!(mixed.norm_p(0.0), 5.0);
        let z0 = Functional::basis(n(3), Subset::empty()).unwrap();
        for p in [0.0, 1.0, 2.5] {
            assert_eq!(z0.norm_p(p), 1.0);
            assert_eq!(z0.dual_norm_p(p), 1.0);
        }
    }

    #[test]
    fn dual_norm_examples() {
        let z1 = riesz_embed(&Functional::basis(n(4), set(&[1])).unwrap());
        assert_eq!(z1.dual_norm_p(1.0), 0.5);
        assert_eq!(z1.dual_norm_p(2.0), 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = Functional::random(n(4), &mut rng);
        assert_eq!(phi.dual_norm_p(0.0), phi.norm_p(0.0));
    }

    #[test]
    fn growth_examples() {
        let tol = Tolerance::default();
        let d = Functional::basis(n(4), Subset::empty()).unwrap();
        assert!(d.check_growth(GrowthBound::new(1.0, 0.0).unwrap(), tol).holds);

        let lam = Functional::from_coefficients(
            n(4),
            n(4).subsets().map(|s| (s, c(s.lambda(), 0.0))),
        )
        .unwrap();
        let check = lam.check_growth(GrowthBound::new(1.0, 1.0).unwrap(), tol);
        assert!(check.holds);
        assert_eq!(check.worst.unwrap().1, 1.0);
        assert!(check.norm_consequence.unwrap().holds);

        let lam2 = Functional::from_coefficients(
            n(4),
            n(4).subsets().map(|s| (s, c(s.lambda().powi(2), 0.0))),
        )
        .unwrap();
        let check = lam2.check_growth(GrowthBound::new(1.0, 1.0).unwrap(), tol);
        assert!(!check.holds);
        let (witness, ratio) = check.worst.unwrap();
        assert!(witness.lambda() > 1.0 && ratio > 1.0);
        assert!(check.norm_consequence.is_none());

        assert!(GrowthBound::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn riesz_examples() {
        let real = Functional::from_coefficients(n(2), [(set(&[0]), c(2.0, 0.0))]).unwrap();
        assert_eq!(riesz_embed(&real), real);
        let imag = Functional::from_coefficients(n(2), [(set(&[0]), c(0.0, 1.0))]).unwrap();
        assert_eq!(riesz_embed(&imag).fock(set(&[0])), c(0.0, -1.0));
        assert!(riesz_embed(&Functional::zero(n(2))).is_zero());
    }

    #[test]
    fn pair_examples() {
        let tau = set(&[0, 2]);
        let d = Functional::basis(n(3), tau).unwrap();
        assert_eq!(pair(&d, &d), c(1.0, 0.0));
        assert_eq!(pair(&d, &Functional::basis(n(3), set(&[2])).unwrap()), c(0.0, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xi = Functional::random(n(4), &mut rng);
        let self_pair = pair(&riesz_embed(&xi), &xi);
        let l2 = xi.norm_p(0.0).powi(2);
        assert!((self_pair.re - l2).abs() < 1e-12);
        assert!(self_pair.im.abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let f = Functional::from_coefficients(
            n(3),
            [(set(&[0, 2]), c(1.5, -2.0)), (Subset::empty(), c(1.0, 0.0))],
        )
        .unwrap();
        let text = f.to_json();
        assert_eq!(
            text,
            r#"{"truncation":3,"coefficients":[[[],1.0,0.0],[[0,2],1.5,-2.0]]}"#
        );
        assert_eq!(Functional::from_json(&text).unwrap(), f);
        assert!(Functional::from_json(r#"{"truncation":1,"coefficients":[[[3],1,0]]}"#).is_err());
    }

    #[test]
    fn random_samples_stay_in_disc() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            assert!(random_unit_disc(&mut rng).norm() <= 1.0);
        }
    }
}
