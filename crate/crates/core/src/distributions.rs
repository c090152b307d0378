//! Samplers for the laws that appear in the stochastic representations:
//! standard normals, central and noncentral χ², noncentral F, and the
//! mixing vector ν.
//!
//! All samplers are generic over [`rand::Rng`]; experiments pass an
//! [`RngStream`](crate::RngStream) so that draws are keyed by replicate.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{cholesky_lower, matrix_from_rows, matrix_to_rows, vector_to_vec};

/// Law of the q-dimensional mixing vector ν.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NuSpec", into = "NuSpec")]
pub enum NuDistribution {
    /// ν = |ψ| componentwise, ψ ∼ N_q(0, Ω).
    TruncatedNormalAbs {
        omega: DMatrix<f64>,
        omega_chol: DMatrix<f64>,
    },
    /// Variance-mean mixture ν = m·W + √W·L·z with W ∼ Gamma(s, 1), L Lᵀ = Σ.
    GeneralizedAsymmetricLaplace {
        m: DVector<f64>,
        sigma: DMatrix<f64>,
        sigma_chol: DMatrix<f64>,
        s: f64,
    },
    /// ν fixed at a known value.
    Degenerate { value: DVector<f64> },
}

/// Plain-data form of [`NuDistribution`] used for (de)serialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NuSpec {
    TruncatedNormalAbs {
        omega: Vec<Vec<f64>>,
    },
    GeneralizedAsymmetricLaplace {
        m: Vec<f64>,
        sigma: Vec<Vec<f64>>,
        s: f64,
    },
    Degenerate {
        value: Vec<f64>,
    },
}

impl NuDistribution {
    pub fn truncated_normal_abs(omega: DMatrix<f64>) -> Result<Self> {
        if omega.nrows() == 0 {
            return Err(Error::InvalidDimension("q must be at least 1".into()));
        }
        let omega_chol = cholesky_lower(&omega)?;
        Ok(Self::TruncatedNormalAbs { omega, omega_chol })
    }

    pub fn gal(m: DVector<f64>, sigma: DMatrix<f64>, s: f64) -> Result<Self> {
        if m.is_empty() {
            return Err(Error::InvalidDimension("q must be at least 1".into()));
        }
        if sigma.nrows() != m.len() {
            return Err(dim_mismatch("GAL scale matrix size", m.len(), sigma.nrows()));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidInput(format!("GAL shape must be positive, got {s}")));
        }
        let sigma_chol = cholesky_lower(&sigma)?;
        Ok(Self::GeneralizedAsymmetricLaplace {
            m,
            sigma,
            sigma_chol,
            s,
        })
    }

    pub fn degenerate(value: DVector<f64>) -> Result<Self> {
        if value.is_empty() {
            return Err(Error::InvalidDimension("q must be at least 1".into()));
        }
        Ok(Self::Degenerate { value })
    }

    /// |ψ| with ψ ∼ N_q(0, I_q).
    pub fn standard_truncated_normal(q: usize) -> Result<Self> {
        Self::truncated_normal_abs(DMatrix::identity(q, q))
    }

    /// GAL with m = 1_q, Σ = I_q and the given shape.
    pub fn standard_gal(q: usize, s: f64) -> Result<Self> {
        Self::gal(DVector::from_element(q, 1.0), DMatrix::identity(q, q), s)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::TruncatedNormalAbs { omega, .. } => omega.nrows(),
            Self::GeneralizedAsymmetricLaplace { m, .. } => m.len(),
            Self::Degenerate { value } => value.len(),
        }
    }

    /// Short family name used in reports ("tn", "gal", "degenerate").
    pub fn family(&self) -> &'static str {
        match self {
            Self::TruncatedNormalAbs { .. } => "tn",
            Self::GeneralizedAsymmetricLaplace { .. } => "gal",
            Self::Degenerate { .. } => "degenerate",
        }
    }

    /// E ν.
    pub fn mean(&self) -> DVector<f64> {
        match self {
            Self::TruncatedNormalAbs { omega, .. } => {
                DVector::from_fn(omega.nrows(), |i, _| (2.0 * omega[(i, i)] / PI).sqrt())
            }
            Self::GeneralizedAsymmetricLaplace { m, s, .. } => m * *s,
            Self::Degenerate { value } => value.clone(),
        }
    }

    /// Cov ν.
    pub fn covariance(&self) -> DMatrix<f64> {
        match self {
            Self::TruncatedNormalAbs { omega, .. } => {
                let q = omega.nrows();
                let sd: Vec<f64> = (0..q).map(|i| omega[(i, i)].sqrt()).collect();
                DMatrix::from_fn(q, q, |i, j| {
                    if i == j {
                        return omega[(i, i)] * (1.0 - 2.0 / PI);
                    }
                    let rho = (omega[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0);
                    // E|ψᵢψⱼ| for a bivariate normal pair
                    let e_abs_prod =
                        2.0 / PI * sd[i] * sd[j] * ((1.0 - rho * rho).sqrt() + rho * rho.asin());
                    e_abs_prod - 2.0 / PI * sd[i] * sd[j]
                })
            }
            Self::GeneralizedAsymmetricLaplace { m, sigma, s, .. } => {
                (sigma + m * m.transpose()) * *s
            }
            Self::Degenerate { value } => DMatrix::zeros(value.len(), value.len()),
        }
    }

    pub fn to_spec(&self) -> NuSpec {
        self.clone().into()
    }
}

impl TryFrom<NuSpec> for NuDistribution {
    type Error = Error;

    fn try_from(spec: NuSpec) -> Result<Self> {
        match spec {
            NuSpec::TruncatedNormalAbs { omega } => {
                Self::truncated_normal_abs(matrix_from_rows(&omega)?)
            }
            NuSpec::GeneralizedAsymmetricLaplace { m, sigma, s } => {
                Self::gal(DVector::from_vec(m), matrix_from_rows(&sigma)?, s)
            }
            NuSpec::Degenerate { value } => Self::degenerate(DVector::from_vec(value)),
        }
    }
}

impl From<NuDistribution> for NuSpec {
    fn from(nu: NuDistribution) -> Self {
        match nu {
            NuDistribution::TruncatedNormalAbs { omega, .. } => NuSpec::TruncatedNormalAbs {
                omega: matrix_to_rows(&omega),
            },
            NuDistribution::GeneralizedAsymmetricLaplace { m, sigma, s, .. } => {
                NuSpec::GeneralizedAsymmetricLaplace {
                    m: vector_to_vec(&m),
                    sigma: matrix_to_rows(&sigma),
                    s,
                }
            }
            NuDistribution::Degenerate { value } => NuSpec::Degenerate {
                value: vector_to_vec(&value),
            },
        }
    }
}

pub fn sample_std_normal_vec<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<DVector<f64>> {
    if dim == 0 {
        return Err(Error::InvalidDimension("dimension must be at least 1".into()));
    }
    Ok(DVector::from_fn(dim, |_, _| rng.sample(StandardNormal)))
}

/// Fills `out` with i.i.d. standard normals.
#[inline]
pub(crate) fn fill_std_normal<R: Rng + ?Sized>(out: &mut [f64], rng: &mut R) {
    for x in out {
        *x = rng.sample(StandardNormal);
    }
}

#[inline]
fn gamma_draw<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, scale)
        .expect("gamma parameters are validated by callers")
        .sample(rng)
}

/// One χ²_k draw.
pub fn sample_chi_squared<R: Rng + ?Sized>(k: u64, rng: &mut R) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidDimension(
            "chi-squared degrees of freedom must be at least 1".into(),
        ));
    }
    Ok(chi_squared_unchecked(k as f64, rng))
}

#[inline]
fn chi_squared_unchecked<R: Rng + ?Sized>(k: f64, rng: &mut R) -> f64 {
    let mut x = gamma_draw(0.5 * k, 2.0, rng);
    // Gamma(1/2) can underflow to exactly zero with probability ~1e-300
    while x <= 0.0 {
        x = gamma_draw(0.5 * k, 2.0, rng);
    }
    x
}

/// One χ²_k(λ) draw as a Poisson(λ/2) mixture of central χ²_{k+2J}.
///
/// k = 0 is allowed; it returns exactly 0 when λ = 0 and otherwise the
/// point mass at 0 mixed with χ²_{2J}, J ≥ 1.
pub fn sample_noncentral_chi_squared<R: Rng + ?Sized>(
    k: u64,
    lambda: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noncentrality must be finite and nonnegative, got {lambda}"
        )));
    }
    let j = if lambda > 0.0 {
        Poisson::new(0.5 * lambda)
            .map_err(|e| Error::InvalidInput(format!("poisson({}): {e}", 0.5 * lambda)))?
            .sample(rng)
    } else {
        0.0
    };
    let df = k as f64 + 2.0 * j;
    if df == 0.0 {
        return Ok(0.0);
    }
    Ok(chi_squared_unchecked(df, rng))
}

/// One draw of [χ²_{d1}(λ)/d1] / [χ²_{d2}/d2].
pub fn sample_noncentral_f<R: Rng + ?Sized>(
    d1: u64,
    d2: u64,
    lambda: f64,
    rng: &mut R,
) -> Result<f64> {
    if d1 == 0 || d2 == 0 {
        return Err(Error::InvalidDimension(format!(
            "F degrees of freedom must be positive, got ({d1}, {d2})"
        )));
    }
    let num = sample_noncentral_chi_squared(d1, lambda, rng)? / d1 as f64;
    let den = chi_squared_unchecked(d2 as f64, rng) / d2 as f64;
    Ok(num / den)
}

/// One draw of the mixing vector ν.
pub fn sample_nu<R: Rng + ?Sized>(dist: &NuDistribution, rng: &mut R) -> DVector<f64> {
    match dist {
        NuDistribution::TruncatedNormalAbs { omega_chol, .. } => {
            let z = DVector::from_fn(omega_chol.nrows(), |_, _| rng.sample(StandardNormal));
            (omega_chol * z).abs()
        }
        NuDistribution::GeneralizedAsymmetricLaplace {
            m, sigma_chol, s, ..
        } => {
            let w = gamma_draw(*s, 1.0, rng);
            let z = DVector::from_fn(m.len(), |_, _| rng.sample(StandardNormal));
            m * w + (sigma_chol * z) * w.sqrt()
        }
        NuDistribution::Degenerate { value } => value.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc_harness::ks_two_sample;
    use crate::RngStream;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn std_normal_shape_and_determinism() {
        let mut a = RngStream::new(5, 0);
        let mut b = RngStream::new(5, 0);
        let va = sample_std_normal_vec(3, &mut a).unwrap();
        let vb = sample_std_normal_vec(3, &mut b).unwrap();
        assert_eq!(va.len(), 3);
        assert!(va.iter().all(|x| x.is_finite()));
        assert_eq!(va, vb);
        assert!(matches!(
            sample_std_normal_vec(0, &mut a),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn std_normal_mean() {
        let mut rng = RngStream::new(11, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_std_normal_vec(1, &mut rng).unwrap()[0])
            .collect();
        let (m, v) = mean_var(&xs);
        assert!(m.abs() < 0.02, "mean {m}");
        assert!((v - 1.0).abs() < 0.02, "var {v}");
    }

    #[test]
    fn chi_squared_moments() {
        let mut rng = RngStream::new(12, 0);
        let k = 100;
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_chi_squared(k, &mut rng).unwrap())
            .collect();
        let (m, v) = mean_var(&xs);
        assert!((m / k as f64 - 1.0).abs() < 0.01, "mean {m}");
        assert!((v / (2.0 * k as f64) - 1.0).abs() < 0.05, "var {v}");
        assert!(sample_chi_squared(0, &mut rng).is_err());
    }

    #[test]
    fn chi_squared_one_df_is_positive() {
        let mut rng = RngStream::new(13, 0);
        for _ in 0..100_000 {
            assert!(sample_chi_squared(1, &mut rng).unwrap() > 0.0);
        }
    }

    #[test]
    fn noncentral_chi_squared_reduces_to_central() {
        let n = 10_000;
        let mut r1 = RngStream::new(14, 0);
        let mut r2 = RngStream::new(14, 1);
        let a: Vec<f64> = (0..n)
            .map(|_| sample_noncentral_chi_squared(7, 0.0, &mut r1).unwrap())
            .collect();
        let b: Vec<f64> = (0..n)
            .map(|_| sample_chi_squared(7, &mut r2).unwrap())
            .collect();
        let d = ks_two_sample(&a, &b).unwrap();
        assert!(d <= 0.02, "ks = {d}");
        assert!(d <= 1.63 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn noncentral_chi_squared_mean_and_variance() {
        let mut rng = RngStream::new(15, 0);
        let (k, lambda) = (50, 25.0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_noncentral_chi_squared(k, lambda, &mut rng).unwrap())
            .collect();
        let (m, v) = mean_var(&xs);
        assert!((m / (k as f64 + lambda) - 1.0).abs() < 0.01, "mean {m}");
        // Var = 2(k + 2λ) = 200
        assert!((v / 200.0 - 1.0).abs() < 0.05, "var {v}");
    }

    #[test]
    fn noncentral_chi_squared_degenerate_and_zero_df() {
        let mut rng = RngStream::new(16, 0);
        assert_eq!(sample_noncentral_chi_squared(0, 0.0, &mut rng).unwrap(), 0.0);
        // k = 0, λ = 6: E = λ = 6
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_noncentral_chi_squared(0, 6.0, &mut rng).unwrap())
            .collect();
        let (m, _) = mean_var(&xs);
        assert!((m / 6.0 - 1.0).abs() < 0.02, "mean {m}");
        assert!(sample_noncentral_chi_squared(3, -1.0, &mut rng).is_err());
        assert!(sample_noncentral_chi_squared(3, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn central_f_mean() {
        let mut rng = RngStream::new(17, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_noncentral_f(10, 10, 0.0, &mut rng).unwrap())
            .collect();
        assert!(xs.iter().all(|&x| x > 0.0));
        let (m, _) = mean_var(&xs);
        assert!((m / 1.25 - 1.0).abs() < 0.03, "mean {m}");
    }

    #[test]
    fn noncentral_f_mean() {
        let mut rng = RngStream::new(18, 0);
        let (d1, d2, lambda) = (5u64, 30u64, 20.0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_noncentral_f(d1, d2, lambda, &mut rng).unwrap())
            .collect();
        assert!(xs.iter().all(|&x| x > 0.0));
        let expected = d2 as f64 * (d1 as f64 + lambda) / (d1 as f64 * (d2 as f64 - 2.0));
        let (m, _) = mean_var(&xs);
        assert!((m / expected - 1.0).abs() < 0.03, "mean {m} vs {expected}");
        assert!(sample_noncentral_f(0, 3, 1.0, &mut rng).is_err());
        assert!(sample_noncentral_f(3, 0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn truncated_normal_support_and_mean() {
        let q = 4;
        let nu = NuDistribution::standard_truncated_normal(q).unwrap();
        let mut rng = RngStream::new(19, 0);
        let n = 100_000;
        let mut sum = DVector::zeros(q);
        for _ in 0..n {
            let v = sample_nu(&nu, &mut rng);
            assert!(v.iter().all(|&x| x >= 0.0));
            sum += v;
        }
        let target = (2.0 / PI).sqrt();
        for j in 0..q {
            let m = sum[j] / n as f64;
            assert!((m / target - 1.0).abs() < 0.02, "component {j}: {m}");
        }
        assert!((nu.mean()[0] - target).abs() < 1e-15);
    }

    #[test]
    fn gal_mean() {
        let q = 3;
        let nu = NuDistribution::standard_gal(q, 10.0).unwrap();
        let mut rng = RngStream::new(20, 0);
        let n = 100_000;
        let mut sum = DVector::zeros(q);
        for _ in 0..n {
            sum += sample_nu(&nu, &mut rng);
        }
        for j in 0..q {
            let m = sum[j] / n as f64;
            assert!((m / 10.0 - 1.0).abs() < 0.02, "component {j}: {m}");
        }
    }

    #[test]
    fn covariance_formulas_match_monte_carlo() {
        let omega = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 2.0]);
        let dists = [
            NuDistribution::truncated_normal_abs(omega.clone()).unwrap(),
            NuDistribution::gal(DVector::from_vec(vec![0.5, -1.0]), omega, 3.0).unwrap(),
        ];
        for (k, nu) in dists.iter().enumerate() {
            let mut rng = RngStream::new(21, k as u64);
            let n = 200_000;
            let draws: Vec<DVector<f64>> = (0..n).map(|_| sample_nu(nu, &mut rng)).collect();
            let mean = draws.iter().fold(DVector::zeros(2), |a, d| a + d) / n as f64;
            let cov = draws.iter().fold(DMatrix::zeros(2, 2), |a, d| {
                let c = d - &mean;
                a + &c * c.transpose()
            }) / (n as f64 - 1.0);
            let exact_mean = nu.mean();
            let exact_cov = nu.covariance();
            assert!((&mean - &exact_mean).norm() / exact_mean.norm() < 0.02, "{}", nu.family());
            assert!((&cov - &exact_cov).norm() / exact_cov.norm() < 0.03, "{}", nu.family());
        }
    }

    #[test]
    fn degenerate_returns_value() {
        let v = DVector::from_vec(vec![1.0, -2.0]);
        let nu = NuDistribution::degenerate(v.clone()).unwrap();
        let mut rng = RngStream::new(0, 0);
        assert_eq!(sample_nu(&nu, &mut rng), v);
        assert_eq!(nu.covariance(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn invalid_parameters_rejected() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            NuDistribution::truncated_normal_abs(bad.clone()),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(NuDistribution::gal(DVector::from_element(2, 1.0), bad, 1.0).is_err());
        assert!(NuDistribution::standard_gal(2, 0.0).is_err());
        assert!(NuDistribution::standard_gal(2, -1.0).is_err());
    }

    #[test]
    fn spec_roundtrip_through_json() {
        let nu = NuDistribution::standard_gal(2, 10.0).unwrap();
        let json = serde_json::to_string(&nu).unwrap();
        assert!(json.contains("\"kind\":\"generalized_asymmetric_laplace\""));
        let back: NuDistribution = serde_json::from_str(&json).unwrap();
        assert_eq!(back, nu);
    }
}
