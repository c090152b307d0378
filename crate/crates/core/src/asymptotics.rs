//! Asymptotic centers and conditional variances of the two products, the
//! ν → E ν substitutions, and standardization of Monte Carlo draws.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::model_core::ModelSpec;
use crate::stochastic_reps::{precompute_quadratics, NuForms, ProductDraw, ProductKind, QuadraticCache};

/// How the c-dependent term of σ²_ν is scaled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceTerm {
    /// c·tr(Σ²)/p, the limit of tr(Σ²)/n.
    #[default]
    PerDimension,
    /// c·‖Σ‖²_F; larger by a factor p. Kept only to compare against
    /// figure data produced with that scaling.
    Frobenius,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoticParams {
    pub kind: ProductKind,
    pub c: f64,
    pub center: f64,
    pub variance: f64,
    pub nu_value: DVector<f64>,
}

fn check_c(c: f64) -> Result<()> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidInput(format!("c must be finite and nonnegative, got {c}")));
    }
    Ok(())
}

fn check_c_precision(c: f64) -> Result<()> {
    check_c(c)?;
    if c >= 1.0 {
        return Err(Error::Regime(format!(
            "the precision product needs c < 1, got {c}"
        )));
    }
    Ok(())
}

/// σ²_ν from cached forms.
pub fn sigma2_from_forms(cache: &QuadraticCache, forms: &NuForms, c: f64, term: TraceTerm) -> f64 {
    let trace_term = match term {
        TraceTerm::PerDimension => c * cache.tr_sigma2 / cache.p() as f64,
        TraceTerm::Frobenius => c * cache.tr_sigma2,
    };
    (forms.mu_sigma_mu + trace_term) * cache.l_sigma_l
        + forms.l_sigma_mu * forms.l_sigma_mu
        + cache.l_sigma3_l
}

/// Both algebraic forms of σ̃²_ν: (statement form, proof form).
///
/// statement: ((lᵀΣ⁻¹μ_ν)² + lᵀΣ⁻¹l·(1 + μ_νᵀΣ⁻¹μ_ν)) / (1−c)³
/// proof:     (2(lᵀΣ⁻¹μ_ν)² + lᵀΣ⁻¹l·(1 + δ²(ν))) / (1−c)³
pub fn sigma2_tilde_forms(cache: &QuadraticCache, forms: &NuForms, c: f64) -> Result<(f64, f64)> {
    check_c_precision(c)?;
    let scale = (1.0 - c).powi(-3);
    let a = forms.l_sigmainv_mu;
    let b = cache.l_sigmainv_l;
    let statement = scale * (a * a + b * (1.0 + forms.mu_sigmainv_mu));
    let proof = scale * (2.0 * a * a + b * (1.0 + forms.delta2));
    Ok((statement, proof))
}

/// σ̃²_ν via the proof form (which uses the cached δ²(ν)).
pub fn sigma2_tilde_from_forms(cache: &QuadraticCache, forms: &NuForms, c: f64) -> Result<f64> {
    let (statement, proof) = sigma2_tilde_forms(cache, forms, c)?;
    debug_assert!(
        (statement - proof).abs() <= 1e-8 * statement.abs().max(f64::MIN_POSITIVE),
        "variance forms disagree: {statement} vs {proof}"
    );
    Ok(proof)
}

/// Conditional asymptotic variance of √n(lᵀSx̄ − lᵀΣμ_ν).
pub fn sigma2_nu(model: &ModelSpec, l: &DVector<f64>, c: f64, nu_value: &DVector<f64>) -> Result<f64> {
    check_c(c)?;
    let cache = precompute_quadratics(model, l)?;
    Ok(sigma2_from_forms(&cache, &cache.forms(nu_value)?, c, TraceTerm::PerDimension))
}

/// Conditional asymptotic variance of √n(lᵀS⁻¹x̄ − lᵀΣ⁻¹μ_ν/(1−c)).
pub fn sigma2_tilde_nu(
    model: &ModelSpec,
    l: &DVector<f64>,
    c: f64,
    nu_value: &DVector<f64>,
) -> Result<f64> {
    check_c_precision(c)?;
    if l.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroVector);
    }
    let cache = precompute_quadratics(model, l)?;
    sigma2_tilde_from_forms(&cache, &cache.forms(nu_value)?, c)
}

/// Center and variance of the limiting normal law given ν.
pub fn asymptotic_params(
    model: &ModelSpec,
    l: &DVector<f64>,
    c: f64,
    nu_value: &DVector<f64>,
    kind: ProductKind,
) -> Result<AsymptoticParams> {
    let cache = precompute_quadratics(model, l)?;
    let forms = cache.forms(nu_value)?;
    let (center, variance) = center_and_variance(&cache, &forms, c, kind, TraceTerm::PerDimension)?;
    Ok(AsymptoticParams {
        kind,
        c,
        center,
        variance,
        nu_value: nu_value.clone(),
    })
}

fn center_and_variance(
    cache: &QuadraticCache,
    forms: &NuForms,
    c: f64,
    kind: ProductKind,
    term: TraceTerm,
) -> Result<(f64, f64)> {
    match kind {
        ProductKind::CovTimesMean => {
            check_c(c)?;
            Ok((forms.l_sigma_mu, sigma2_from_forms(cache, forms, c, term)))
        }
        ProductKind::PrecisionTimesMean => Ok((
            forms.l_sigmainv_mu / (1.0 - c),
            sigma2_tilde_from_forms(cache, forms, c)?,
        )),
    }
}

/// Limits obtained by replacing ν with ω = E ν.
#[derive(Clone, Debug, PartialEq)]
pub struct CorollaryParams {
    pub omega_mean: DVector<f64>,
    pub omega_cov: DMatrix<f64>,
    pub gamma: f64,
    pub sigma2: f64,
    /// `None` when c ≥ 1, where the precision product is undefined.
    pub sigma2_tilde: Option<f64>,
}

pub fn corollary_params(
    model: &ModelSpec,
    l: &DVector<f64>,
    c: f64,
    gamma: f64,
    omega_mean: &DVector<f64>,
    omega_cov: &DMatrix<f64>,
) -> Result<CorollaryParams> {
    check_c(c)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
    }
    let q = model.q();
    if omega_mean.len() != q {
        return Err(dim_mismatch("length of omega", q, omega_mean.len()));
    }
    if omega_cov.nrows() != q || omega_cov.ncols() != q {
        return Err(dim_mismatch("size of Omega", q, omega_cov.nrows()));
    }
    let cache = precompute_quadratics(model, l)?;
    let forms = cache.forms(omega_mean)?;
    let sigma2 = sigma2_from_forms(&cache, &forms, c, TraceTerm::PerDimension);
    let sigma2_tilde = if c < 1.0 && !cache.l_is_zero {
        Some(sigma2_tilde_from_forms(&cache, &forms, c)?)
    } else {
        None
    };
    Ok(CorollaryParams {
        omega_mean: omega_mean.clone(),
        omega_cov: omega_cov.clone(),
        gamma,
        sigma2,
        sigma2_tilde,
    })
}

/// Maps draws to √n·(value − center_ν)/sd_ν using each draw's own ν.
#[derive(Clone, Debug)]
pub struct Standardizer {
    cache: QuadraticCache,
    kind: ProductKind,
    c: f64,
    sqrt_n: f64,
    term: TraceTerm,
}

impl Standardizer {
    pub fn new(
        model: &ModelSpec,
        l: &DVector<f64>,
        c: f64,
        n: usize,
        kind: ProductKind,
        term: TraceTerm,
    ) -> Result<Self> {
        match kind {
            ProductKind::CovTimesMean => check_c(c)?,
            ProductKind::PrecisionTimesMean => check_c_precision(c)?,
        }
        if n == 0 {
            return Err(Error::InvalidDimension("n must be positive".into()));
        }
        let cache = precompute_quadratics(model, l)?;
        if cache.l_is_zero {
            return Err(Error::ZeroVector);
        }
        Ok(Self {
            cache,
            kind,
            c,
            sqrt_n: (n as f64).sqrt(),
            term,
        })
    }

    /// Builds the standardizer around an existing cache (no recomputation).
    pub fn from_cache(
        cache: QuadraticCache,
        c: f64,
        n: usize,
        kind: ProductKind,
        term: TraceTerm,
    ) -> Result<Self> {
        if cache.l_is_zero {
            return Err(Error::ZeroVector);
        }
        Ok(Self {
            cache,
            kind,
            c,
            sqrt_n: (n as f64).sqrt(),
            term,
        })
    }

    pub fn params(&self, nu: &DVector<f64>) -> Result<(f64, f64)> {
        let forms = self.cache.forms(nu)?;
        center_and_variance(&self.cache, &forms, self.c, self.kind, self.term)
    }

    pub fn standardize_one(&self, draw: &ProductDraw) -> Result<f64> {
        let (center, variance) = self.params(&draw.nu_used)?;
        Ok(self.sqrt_n * (draw.value - center) / variance.sqrt())
    }
}

/// Standardizes a batch of draws; the limit law is N(0, 1).
pub fn standardize(
    draws: &[ProductDraw],
    model: &ModelSpec,
    l: &DVector<f64>,
    c: f64,
    n: usize,
    kind: ProductKind,
) -> Result<Vec<f64>> {
    if draws.is_empty() {
        return Err(Error::InvalidInput("no draws to standardize".into()));
    }
    let st = Standardizer::new(model, l, c, n, kind, TraceTerm::PerDimension)?;
    draws.iter().map(|d| st.standardize_one(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::NuDistribution;
    use crate::RngStream;
    use rand::Rng;

    fn unit(p: usize, i: usize) -> DVector<f64> {
        let mut e = DVector::zeros(p);
        e[i] = 1.0;
        e
    }

    fn model(mu: DVector<f64>, sigma: DMatrix<f64>, b: DMatrix<f64>) -> ModelSpec {
        let q = b.ncols();
        ModelSpec::new(mu, sigma, b, NuDistribution::standard_truncated_normal(q).unwrap()).unwrap()
    }

    fn random_model(rng: &mut RngStream, p: usize, q: usize) -> ModelSpec {
        let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        model(
            DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0)),
            &a * a.transpose() + DMatrix::identity(p, p) * 0.2,
            DMatrix::from_fn(p, q, |_, _| rng.random_range(0.0..1.0)),
        )
    }

    #[test]
    fn sigma2_identity_case() {
        let m = model(DVector::zeros(4), DMatrix::identity(4, 4), DMatrix::zeros(4, 1));
        let nu = DVector::from_element(1, 0.3);
        let v = sigma2_nu(&m, &unit(4, 0), 0.5, &nu).unwrap();
        assert!((v - 1.5).abs() < 1e-15);
    }

    #[test]
    fn sigma2_hand_arithmetic() {
        let m = model(
            DVector::from_vec(vec![1.0, 0.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])),
            DMatrix::zeros(2, 1),
        );
        let v = sigma2_nu(&m, &unit(2, 0), 0.1, &DVector::zeros(1)).unwrap();
        assert!((v - 3.85).abs() < 1e-14, "{v}");
    }

    #[test]
    fn frobenius_variant_scales_trace_term() {
        let m = model(
            DVector::from_vec(vec![1.0, 0.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])),
            DMatrix::zeros(2, 1),
        );
        let cache = precompute_quadratics(&m, &unit(2, 0)).unwrap();
        let f = cache.forms(&DVector::zeros(1)).unwrap();
        let per_dim = sigma2_from_forms(&cache, &f, 0.1, TraceTerm::PerDimension);
        let frob = sigma2_from_forms(&cache, &f, 0.1, TraceTerm::Frobenius);
        // trace term 0.85 becomes 1.7
        assert!((frob - per_dim - 0.85).abs() < 1e-14);
    }

    #[test]
    fn sigma2_tilde_identity_zero_mean() {
        let m = model(DVector::zeros(3), DMatrix::identity(3, 3), DMatrix::zeros(3, 1));
        let l = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let c = 0.3;
        let v = sigma2_tilde_nu(&m, &l, c, &DVector::zeros(1)).unwrap();
        let expected = l.norm_squared() / (1.0f64 - c).powi(3);
        assert!((v - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn sigma2_tilde_both_forms_hand_values() {
        let m = model(DVector::from_vec(vec![1.0, 1.0]), DMatrix::identity(2, 2), DMatrix::zeros(2, 1));
        let cache = precompute_quadratics(&m, &unit(2, 0)).unwrap();
        let f = cache.forms(&DVector::zeros(1)).unwrap();
        let (a, b) = sigma2_tilde_forms(&cache, &f, 0.0).unwrap();
        assert!((a - 4.0).abs() < 1e-14);
        assert!((b - 4.0).abs() < 1e-14);
    }

    #[test]
    fn sigma2_tilde_forms_agree_on_random_instances() {
        let mut rng = RngStream::new(77, 0);
        for _ in 0..1000 {
            let m = random_model(&mut rng, 6, 2);
            let l = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let nu = DVector::from_fn(2, |_, _| rng.random_range(0.0..2.0));
            let c = rng.random_range(0.0..0.99);
            let cache = precompute_quadratics(&m, &l).unwrap();
            let (a, b) = sigma2_tilde_forms(&cache, &cache.forms(&nu).unwrap(), c).unwrap();
            assert!((a - b).abs() / a <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn precision_regime_enforced() {
        let m = model(DVector::zeros(2), DMatrix::identity(2, 2), DMatrix::zeros(2, 1));
        let nu = DVector::zeros(1);
        assert!(matches!(sigma2_tilde_nu(&m, &unit(2, 0), 1.0, &nu), Err(Error::Regime(_))));
        assert!(matches!(sigma2_tilde_nu(&m, &DVector::zeros(2), 0.5, &nu), Err(Error::ZeroVector)));
        assert!(sigma2_nu(&m, &unit(2, 0), -0.1, &nu).is_err());
        // the covariance product allows c > 1
        assert!(sigma2_nu(&m, &unit(2, 0), 3.0, &nu).is_ok());
    }

    #[test]
    fn c_to_zero_is_continuous() {
        let mut rng = RngStream::new(78, 0);
        let m = random_model(&mut rng, 5, 2);
        let l = DVector::from_element(5, 1.0);
        let nu = DVector::from_vec(vec![0.4, 1.1]);
        let at0 = sigma2_nu(&m, &l, 0.0, &nu).unwrap();
        let near = sigma2_nu(&m, &l, 1e-9, &nu).unwrap();
        assert!((at0 - near).abs() < 1e-7 * at0);
        let t0 = sigma2_tilde_nu(&m, &l, 0.0, &nu).unwrap();
        let tn = sigma2_tilde_nu(&m, &l, 1e-9, &nu).unwrap();
        assert!((t0 - tn).abs() < 1e-7 * t0);
        // classical fixed-p value
        let mun = m.mu() + m.b() * &nu;
        let s = m.sigma();
        let classical = mun.dot(&(s * &mun)) * l.dot(&(s * &l))
            + l.dot(&(s * &mun)).powi(2)
            + l.dot(&(s * s * s * &l));
        assert!((at0 - classical).abs() < 1e-10 * classical);
    }

    #[test]
    fn sigma2_tilde_increasing_in_c() {
        let mut rng = RngStream::new(79, 0);
        let m = random_model(&mut rng, 4, 1);
        let l = DVector::from_element(4, 1.0);
        let nu = DVector::from_element(1, 0.7);
        let mut prev = 0.0;
        for k in 0..99 {
            let v = sigma2_tilde_nu(&m, &l, k as f64 / 100.0, &nu).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn corollary_reduces_to_fixed_nu_values() {
        let mut rng = RngStream::new(80, 0);
        let m = random_model(&mut rng, 5, 3);
        let l = DVector::from_element(5, 1.0);
        let zero = DVector::zeros(3);
        let cp = corollary_params(&m, &l, 0.4, 0.1, &zero, &DMatrix::identity(3, 3)).unwrap();
        assert_eq!(cp.sigma2, sigma2_nu(&m, &l, 0.4, &zero).unwrap());
        assert_eq!(cp.sigma2_tilde.unwrap(), sigma2_tilde_nu(&m, &l, 0.4, &zero).unwrap());

        // half-normal mean plugged in
        let omega = m.nu().mean();
        let half = (2.0 / std::f64::consts::PI).sqrt();
        assert!(omega.iter().all(|&w| (w - half).abs() < 1e-15));
        let cp = corollary_params(&m, &l, 0.4, 0.1, &omega, &m.nu().covariance()).unwrap();
        let direct = sigma2_nu(&m, &l, 0.4, &omega).unwrap();
        assert!((cp.sigma2 - direct).abs() <= 1e-12 * direct);
        let no_precision = corollary_params(&m, &l, 1.5, 0.1, &omega, &m.nu().covariance()).unwrap();
        assert!(no_precision.sigma2_tilde.is_none());
    }

    #[test]
    fn corollary_is_nu_free_when_b_vanishes() {
        let m = model(DVector::from_vec(vec![0.2, -0.4]), DMatrix::identity(2, 2), DMatrix::zeros(2, 2));
        let l = DVector::from_element(2, 1.0);
        let w = DVector::from_vec(vec![3.0, 7.0]);
        let cp = corollary_params(&m, &l, 0.2, 1.0, &w, &DMatrix::identity(2, 2)).unwrap();
        for nu in [DVector::zeros(2), DVector::from_vec(vec![5.0, -1.0])] {
            assert_eq!(cp.sigma2, sigma2_nu(&m, &l, 0.2, &nu).unwrap());
        }
    }

    #[test]
    fn standardize_centering_and_scaling() {
        let m = model(DVector::from_vec(vec![0.5, 1.0]), DMatrix::identity(2, 2), DMatrix::identity(2, 2));
        let l = DVector::from_element(2, 1.0);
        let nu = DVector::from_vec(vec![0.2, 0.1]);
        let n = 100;
        let p = asymptotic_params(&m, &l, 0.02, &nu, ProductKind::CovTimesMean).unwrap();
        let at_center = ProductDraw {
            value: p.center,
            nu_used: nu.clone(),
        };
        let z = standardize(&[at_center], &m, &l, 0.02, n, ProductKind::CovTimesMean).unwrap();
        assert_eq!(z, vec![0.0]);

        // doubling σ_ν halves the standardized value
        let st = Standardizer::new(&m, &l, 0.02, n, ProductKind::CovTimesMean, TraceTerm::PerDimension)
            .unwrap();
        let (center, var) = st.params(&nu).unwrap();
        let draw = ProductDraw {
            value: center + 0.3,
            nu_used: nu.clone(),
        };
        let z1 = st.standardize_one(&draw).unwrap();
        let manual_half = (n as f64).sqrt() * 0.3 / (2.0 * var.sqrt());
        assert!((z1 / 2.0 - manual_half).abs() < 1e-14);

        assert!(matches!(
            standardize(std::slice::from_ref(&draw), &m, &DVector::zeros(2), 0.02, n, ProductKind::CovTimesMean),
            Err(Error::ZeroVector)
        ));
        assert!(standardize(&[], &m, &l, 0.02, n, ProductKind::CovTimesMean).is_err());
    }

    #[test]
    fn precision_center_uses_one_minus_c() {
        let m = model(DVector::from_vec(vec![1.0, 2.0]), DMatrix::identity(2, 2), DMatrix::zeros(2, 1));
        let p = asymptotic_params(&m, &unit(2, 1), 0.5, &DVector::zeros(1), ProductKind::PrecisionTimesMean)
            .unwrap();
        assert_eq!(p.center, 4.0);
    }
}
