//! Exact samplers for lᵀSx̄ and lᵀS⁻¹x̄ built from their stochastic
//! representations. Neither the data matrix nor S is ever formed: a draw
//! costs O(pq) for the covariance product and O(pq) plus a handful of
//! univariate draws for the precision product.
//!
//! Covariance product, given x̄:
//!
//! ```text
//! lᵀSx̄ = ξ/(n−1)·lᵀΣx̄ + √ξ/(n−1)·(x̄ᵀΣx̄·lᵀΣl − (lᵀΣx̄)²)^{1/2}·z₀,   ξ ∼ χ²_{n−1}
//! ```
//!
//! with x̄ = μ_ν + n^{-1/2}Σ^{1/2}z. Precision product, given ν:
//!
//! ```text
//! lᵀS⁻¹x̄ = (n−1)/ξ̃·(lᵀΣ⁻¹μ_ν + (lᵀΣ⁻¹l)^{1/2}·(1 + (p−1)/(n−p+1)·η)^{1/2}·z₀/√n)
//! ```
//!
//! with ξ̃ ∼ χ²_{n−p} and η ∼ F_{p−1,n−p+1}(nδ²(ν)).
//!
//! All quadratic forms are evaluated in the eigenbasis of Σ.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    fill_std_normal, sample_chi_squared, sample_noncentral_f, sample_nu, NuDistribution,
};
use crate::error::{dim_mismatch, Error, Result};
use crate::model_core::ModelSpec;

/// Which product of a sample-covariance functional with x̄ is sampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductKind {
    /// lᵀ S x̄
    CovTimesMean,
    /// lᵀ S⁻¹ x̄, defined only for p < n − 1
    PrecisionTimesMean,
}

impl ProductKind {
    pub fn check_regime(self, p: usize, n: usize) -> Result<()> {
        match self {
            ProductKind::CovTimesMean if n < 2 => Err(Error::InvalidDimension(format!(
                "n must be at least 2, got {n}"
            ))),
            ProductKind::PrecisionTimesMean if p + 1 >= n => Err(Error::Regime(format!(
                "the precision product needs p < n - 1 (p = {p}, n = {n})"
            ))),
            _ => Ok(()),
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ProductKind::CovTimesMean => "cov",
            ProductKind::PrecisionTimesMean => "precision",
        }
    }
}

/// One realization of a product together with the ν it was drawn under.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductDraw {
    pub value: f64,
    pub nu_used: DVector<f64>,
}

/// ν-dependent scalar forms of μ_ν = μ + Bν.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NuForms {
    /// lᵀΣμ_ν
    pub l_sigma_mu: f64,
    /// μ_νᵀΣμ_ν
    pub mu_sigma_mu: f64,
    /// lᵀΣ⁻¹μ_ν
    pub l_sigmainv_mu: f64,
    /// μ_νᵀΣ⁻¹μ_ν
    pub mu_sigmainv_mu: f64,
    /// μ_νᵀ R_l μ_ν with R_l = Σ⁻¹ − Σ⁻¹llᵀΣ⁻¹ / lᵀΣ⁻¹l
    pub delta2: f64,
}

/// Scalars that depend only on (Σ, l), plus what is needed to evaluate the
/// ν-dependent forms in O(pq).
#[derive(Clone, Debug)]
pub struct QuadraticCache {
    lambda: Vec<f64>,
    inv_lambda: Vec<f64>,
    inv_sqrt_lambda: Vec<f64>,
    sqrt_lambda: Vec<f64>,
    /// Uᵀl
    l_eig: Vec<f64>,
    /// Uᵀμ
    mu_eig: Vec<f64>,
    /// UᵀB
    b_eig: DMatrix<f64>,
    /// Λ^{-1/2}Uᵀl normalized to unit length (zero when l = 0)
    l_whitened_unit: Vec<f64>,
    pub l_sigma_l: f64,
    pub l_sigma3_l: f64,
    pub l_sigmainv_l: f64,
    pub tr_sigma2: f64,
    pub l_is_zero: bool,
}

impl QuadraticCache {
    pub fn p(&self) -> usize {
        self.lambda.len()
    }

    pub fn q(&self) -> usize {
        self.b_eig.ncols()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambda
    }

    /// Coordinates of μ_ν in the eigenbasis, written into `out`.
    pub fn mu_nu_eigen_into(&self, nu: &DVector<f64>, out: &mut [f64]) {
        out.copy_from_slice(&self.mu_eig);
        for (j, &nu_j) in nu.iter().enumerate() {
            if nu_j == 0.0 {
                continue;
            }
            let col = &self.b_eig.as_slice()[j * out.len()..(j + 1) * out.len()];
            for (o, b) in out.iter_mut().zip(col) {
                *o += b * nu_j;
            }
        }
    }

    /// The ν-dependent scalar forms.
    pub fn forms(&self, nu: &DVector<f64>) -> Result<NuForms> {
        if nu.len() != self.q() {
            return Err(dim_mismatch("length of nu", self.q(), nu.len()));
        }
        let mut w = vec![0.0; self.p()];
        self.mu_nu_eigen_into(nu, &mut w);
        Ok(self.forms_from_eigen(&w))
    }

    pub(crate) fn forms_from_eigen(&self, w: &[f64]) -> NuForms {
        let mut l_sigma_mu = 0.0;
        let mut mu_sigma_mu = 0.0;
        let mut l_sigmainv_mu = 0.0;
        let mut mu_sigmainv_mu = 0.0;
        let mut proj = 0.0;
        for i in 0..w.len() {
            let (lam, inv) = (self.lambda[i], self.inv_lambda[i]);
            l_sigma_mu += lam * self.l_eig[i] * w[i];
            mu_sigma_mu += lam * w[i] * w[i];
            l_sigmainv_mu += inv * self.l_eig[i] * w[i];
            mu_sigmainv_mu += inv * w[i] * w[i];
            proj += w[i] * self.inv_sqrt_lambda[i] * self.l_whitened_unit[i];
        }
        // ‖(I − eeᵀ)Λ^{-1/2}w‖² with e the whitened direction of l
        let delta2 = if self.l_is_zero {
            mu_sigmainv_mu
        } else {
            w.iter()
                .enumerate()
                .map(|(i, &wi)| {
                    let r = wi * self.inv_sqrt_lambda[i] - proj * self.l_whitened_unit[i];
                    r * r
                })
                .sum()
        };
        NuForms {
            l_sigma_mu,
            mu_sigma_mu,
            l_sigmainv_mu,
            mu_sigmainv_mu,
            delta2,
        }
    }
}

/// Caches every (Σ, l)-dependent scalar used by the samplers and variances.
pub fn precompute_quadratics(model: &ModelSpec, l: &DVector<f64>) -> Result<QuadraticCache> {
    if l.len() != model.p() {
        return Err(dim_mismatch("length of l", model.p(), l.len()));
    }
    let dec = model.decomposition();
    let lambda: Vec<f64> = dec.eigenvalues().iter().copied().collect();
    let inv_lambda: Vec<f64> = lambda.iter().map(|l| 1.0 / l).collect();
    let inv_sqrt_lambda: Vec<f64> = inv_lambda.iter().map(|v| v.sqrt()).collect();
    let sqrt_lambda: Vec<f64> = lambda.iter().map(|v| v.sqrt()).collect();
    let l_eig: Vec<f64> = dec.to_eigenbasis(l).iter().copied().collect();
    let mu_eig: Vec<f64> = dec.to_eigenbasis(model.mu()).iter().copied().collect();
    let b_eig = dec.to_eigenbasis_mat(model.b());

    let weighted = |f: &dyn Fn(f64) -> f64| -> f64 {
        l_eig.iter().zip(&lambda).map(|(v, &lam)| f(lam) * v * v).sum()
    };
    let l_sigma_l = weighted(&|lam| lam);
    let l_sigma3_l = weighted(&|lam| lam * lam * lam);
    let l_sigmainv_l = weighted(&|lam| 1.0 / lam);
    let l_is_zero = l.iter().all(|&x| x == 0.0);
    let whitened: Vec<f64> = l_eig
        .iter()
        .zip(&inv_sqrt_lambda)
        .map(|(v, s)| v * s)
        .collect();
    let norm = whitened.iter().map(|x| x * x).sum::<f64>().sqrt();
    let l_whitened_unit = if l_is_zero {
        vec![0.0; lambda.len()]
    } else {
        whitened.iter().map(|x| x / norm).collect()
    };
    Ok(QuadraticCache {
        tr_sigma2: lambda.iter().map(|l| l * l).sum(),
        lambda,
        inv_lambda,
        inv_sqrt_lambda,
        sqrt_lambda,
        l_eig,
        mu_eig,
        b_eig,
        l_whitened_unit,
        l_sigma_l,
        l_sigma3_l,
        l_sigmainv_l,
        l_is_zero,
    })
}

/// Reusable sampler for one (model, l, n, product) combination.
#[derive(Clone, Debug)]
pub struct ProductSampler {
    kind: ProductKind,
    n: usize,
    nu: NuDistribution,
    cache: QuadraticCache,
}

impl ProductSampler {
    pub fn new(model: &ModelSpec, l: &DVector<f64>, n: usize, kind: ProductKind) -> Result<Self> {
        kind.check_regime(model.p(), n)?;
        let cache = precompute_quadratics(model, l)?;
        if kind == ProductKind::PrecisionTimesMean && cache.l_is_zero {
            return Err(Error::ZeroVector);
        }
        Ok(Self {
            kind,
            n,
            nu: model.nu().clone(),
            cache,
        })
    }

    pub fn kind(&self) -> ProductKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cache(&self) -> &QuadraticCache {
        &self.cache
    }

    /// One exact draw. With `fixed_nu`, ν is not sampled.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        fixed_nu: Option<&DVector<f64>>,
    ) -> Result<ProductDraw> {
        let nu = match fixed_nu {
            Some(v) if v.len() != self.cache.q() => {
                return Err(dim_mismatch("length of fixed nu", self.cache.q(), v.len()))
            }
            Some(v) => v.clone(),
            None => sample_nu(&self.nu, rng),
        };
        let value = match self.kind {
            ProductKind::CovTimesMean => self.cov_value(&nu, rng),
            ProductKind::PrecisionTimesMean => self.precision_value(&nu, rng)?,
        };
        Ok(ProductDraw { value, nu_used: nu })
    }

    fn cov_value<R: Rng + ?Sized>(&self, nu: &DVector<f64>, rng: &mut R) -> f64 {
        let c = &self.cache;
        let p = c.p();
        let n = self.n as f64;
        let mut x = vec![0.0; p];
        c.mu_nu_eigen_into(nu, &mut x);
        let mut z = vec![0.0; p];
        fill_std_normal(&mut z, rng);

        let inv_sqrt_n = 1.0 / n.sqrt();
        let mut l_sigma_x = 0.0;
        let mut x_sigma_x = 0.0;
        for i in 0..p {
            let lam = c.lambda[i];
            let xi = x[i] + c.sqrt_lambda[i] * inv_sqrt_n * z[i];
            l_sigma_x += lam * c.l_eig[i] * xi;
            x_sigma_x += lam * xi * xi;
        }
        let xi = sample_chi_squared(self.n as u64 - 1, rng).expect("n >= 2");
        let z0: f64 = rng.sample(StandardNormal);
        if c.l_is_zero {
            return 0.0;
        }
        // Cauchy–Schwarz equality: the bracket vanishes identically for p = 1
        let bracket = if p == 1 {
            0.0
        } else {
            (x_sigma_x * c.l_sigma_l - l_sigma_x * l_sigma_x).max(0.0)
        };
        let m = n - 1.0;
        xi / m * l_sigma_x + xi.sqrt() / m * bracket.sqrt() * z0
    }

    fn precision_value<R: Rng + ?Sized>(&self, nu: &DVector<f64>, rng: &mut R) -> Result<f64> {
        let c = &self.cache;
        let p = c.p();
        let n = self.n;
        let forms = c.forms(nu)?;
        let xi_tilde = sample_chi_squared((n - p) as u64, rng)?;
        let z0: f64 = rng.sample(StandardNormal);
        // p = 1: R_l = 0, so the F term is absent
        let spread = if p == 1 {
            1.0
        } else {
            let eta = sample_noncentral_f(
                (p - 1) as u64,
                (n - p + 1) as u64,
                n as f64 * forms.delta2,
                rng,
            )?;
            1.0 + (p - 1) as f64 / (n - p + 1) as f64 * eta
        };
        let nf = n as f64;
        Ok((nf - 1.0) / xi_tilde
            * (forms.l_sigmainv_mu + c.l_sigmainv_l.sqrt() * spread.sqrt() * z0 / nf.sqrt()))
    }
}

/// One exact draw of lᵀSx̄.
pub fn sample_cov_product<R: Rng + ?Sized>(
    model: &ModelSpec,
    l: &DVector<f64>,
    n: usize,
    rng: &mut R,
    fixed_nu: Option<&DVector<f64>>,
) -> Result<ProductDraw> {
    ProductSampler::new(model, l, n, ProductKind::CovTimesMean)?.draw(rng, fixed_nu)
}

/// One exact draw of lᵀS⁻¹x̄ (requires p < n − 1 and l ≠ 0).
pub fn sample_precision_product<R: Rng + ?Sized>(
    model: &ModelSpec,
    l: &DVector<f64>,
    n: usize,
    rng: &mut R,
    fixed_nu: Option<&DVector<f64>>,
) -> Result<ProductDraw> {
    ProductSampler::new(model, l, n, ProductKind::PrecisionTimesMean)?.draw(rng, fixed_nu)
}
