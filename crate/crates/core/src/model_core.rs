//! The MVLMN model X = Y + Bν1ₙᵀ, its assumption diagnostics, and the
//! brute-force oracle that materializes X and computes x̄ and S directly.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::distributions::{fill_std_normal, sample_nu, NuDistribution};
use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::relative_asymmetry;

/// Spectral decomposition Σ = U Λ Uᵀ with eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SigmaDecomposition {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    sqrt_factor: DMatrix<f64>,
    inverse_available: bool,
    // for diagonal Σ, column i of U is the coordinate axis diag_order[i]
    diag_order: Option<Vec<usize>>,
}

impl SigmaDecomposition {
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors uᵢ as columns, in eigenvalue order.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// U Λ^{1/2}; its product with its transpose is Σ.
    pub fn sqrt_factor(&self) -> &DMatrix<f64> {
        &self.sqrt_factor
    }

    /// False when Σ is numerically singular (λ₁ ≤ p·ε·λ_p).
    pub fn inverse_available(&self) -> bool {
        self.inverse_available
    }

    /// True when Σ was diagonal and the eigenvectors are coordinate axes.
    pub fn is_diagonal(&self) -> bool {
        self.diag_order.is_some()
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    /// Coordinates Uᵀv of a vector in the eigenbasis.
    pub fn to_eigenbasis(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.diag_order {
            Some(order) => DVector::from_fn(self.dim(), |i, _| v[order[i]]),
            None => self.eigenvectors.tr_mul(v),
        }
    }

    /// Uᵀ M for a p×k matrix M.
    pub fn to_eigenbasis_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.diag_order {
            Some(order) => DMatrix::from_fn(self.dim(), m.ncols(), |i, j| m[(order[i], j)]),
            None => self.eigenvectors.tr_mul(m),
        }
    }

    /// Σ_i λ_i uᵢuᵢᵀ.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let u = &self.eigenvectors;
        u * DMatrix::from_diagonal(&self.eigenvalues) * u.transpose()
    }

    /// Σ^k for integer k (negative powers use 1/λ).
    pub fn power(&self, k: i32) -> DMatrix<f64> {
        let u = &self.eigenvectors;
        let d = self.eigenvalues.map(|l| l.powi(k));
        u * DMatrix::from_diagonal(&d) * u.transpose()
    }

    /// tr(Σ^k).
    pub fn trace_power(&self, k: i32) -> f64 {
        self.eigenvalues.iter().map(|l| l.powi(k)).sum()
    }

    /// aᵀ Σ^k b.
    pub fn bilinear(&self, a: &DVector<f64>, b: &DVector<f64>, k: i32) -> f64 {
        let ua = self.to_eigenbasis(a);
        let ub = self.to_eigenbasis(b);
        ua.iter()
            .zip(ub.iter())
            .zip(self.eigenvalues.iter())
            .map(|((x, y), l)| x * y * l.powi(k))
            .sum()
    }

    pub fn log_det(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.ln()).sum()
    }
}

/// Eigendecomposition plus square-root factor of a symmetric positive-definite Σ.
pub fn decompose_sigma(sigma: &DMatrix<f64>) -> Result<SigmaDecomposition> {
    if !sigma.is_square() || sigma.nrows() == 0 {
        return Err(Error::InvalidDimension(format!(
            "sigma must be a nonempty square matrix, got {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let asym = relative_asymmetry(sigma);
    if asym > 1e-12 {
        return Err(Error::NotSymmetric {
            relative_asymmetry: asym,
        });
    }
    let p = sigma.nrows();
    let diagonal = (0..p).all(|i| (0..p).all(|j| i == j || sigma[(i, j)] == 0.0));

    let (values, vectors) = if diagonal {
        (sigma.diagonal(), DMatrix::identity(p, p))
    } else {
        let eig = sigma.clone().symmetric_eigen();
        (eig.eigenvalues, eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let eigenvalues = DVector::from_fn(p, |i, _| values[order[i]]);
    let eigenvectors = DMatrix::from_fn(p, p, |r, c| vectors[(r, order[c])]);

    let lambda_min = eigenvalues[0];
    if !(lambda_min > 0.0) {
        return Err(Error::NotPositiveDefinite { lambda_min });
    }
    let lambda_max = eigenvalues[p - 1];
    let sqrt_factor = DMatrix::from_fn(p, p, |r, c| eigenvectors[(r, c)] * eigenvalues[c].sqrt());
    Ok(SigmaDecomposition {
        inverse_available: lambda_min > p as f64 * f64::EPSILON * lambda_max,
        eigenvalues,
        eigenvectors,
        sqrt_factor,
        diag_order: diagonal.then_some(order),
    })
}

/// Parameters (μ, Σ, B, law of ν) of X ∼ LMN_{p,n;q}.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    b: DMatrix<f64>,
    nu: NuDistribution,
    decomposition: SigmaDecomposition,
}

impl ModelSpec {
    pub fn new(
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
        b: DMatrix<f64>,
        nu: NuDistribution,
    ) -> Result<Self> {
        let p = mu.len();
        if p == 0 {
            return Err(Error::InvalidDimension("p must be at least 1".into()));
        }
        if sigma.nrows() != p || sigma.ncols() != p {
            return Err(dim_mismatch("sigma size", p, sigma.nrows()));
        }
        if b.nrows() != p {
            return Err(dim_mismatch("rows of B", p, b.nrows()));
        }
        if b.ncols() != nu.dim() {
            return Err(dim_mismatch("columns of B (dimension of nu)", nu.dim(), b.ncols()));
        }
        let decomposition = decompose_sigma(&sigma)?;
        Ok(Self {
            mu,
            sigma,
            b,
            nu,
            decomposition,
        })
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }

    pub fn q(&self) -> usize {
        self.b.ncols()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn nu(&self) -> &NuDistribution {
        &self.nu
    }

    pub fn decomposition(&self) -> &SigmaDecomposition {
        &self.decomposition
    }

    /// Same μ, Σ, B with a different mixing law.
    pub fn with_nu(&self, nu: NuDistribution) -> Result<Self> {
        if nu.dim() != self.q() {
            return Err(dim_mismatch("dimension of nu", self.q(), nu.dim()));
        }
        Ok(Self {
            nu,
            ..self.clone()
        })
    }
}

/// The quantities bounded by the spectral and eigenvector assumptions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub max_abs_u_mu: f64,
    pub max_abs_u_b: f64,
    pub max_abs_u_l: f64,
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn verify_assumptions(model: &ModelSpec, l: &DVector<f64>) -> Result<AssumptionReport> {
    if l.len() != model.p() {
        return Err(dim_mismatch("length of l", model.p(), l.len()));
    }
    let dec = model.decomposition();
    let u_b = dec.to_eigenbasis_mat(model.b());
    Ok(AssumptionReport {
        lambda_min: dec.lambda_min(),
        lambda_max: dec.lambda_max(),
        max_abs_u_mu: max_abs(dec.to_eigenbasis(model.mu()).iter().copied()),
        max_abs_u_b: max_abs(u_b.iter().copied()),
        max_abs_u_l: max_abs(dec.to_eigenbasis(l).iter().copied()),
    })
}

/// μ_ν = μ + Bν.
pub fn mu_nu(model: &ModelSpec, nu_value: &DVector<f64>) -> Result<DVector<f64>> {
    if nu_value.len() != model.q() {
        return Err(dim_mismatch("length of nu", model.q(), nu_value.len()));
    }
    Ok(model.mu() + model.b() * nu_value)
}

/// Draws ν once, then n columns xᵢ = μ + Bν + Σ^{1/2}zᵢ. Returns (X, ν).
pub fn sample_data_matrix<R: Rng + ?Sized>(
    model: &ModelSpec,
    n: usize,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!("n must be at least 2, got {n}")));
    }
    let p = model.p();
    let nu = sample_nu(model.nu(), rng);
    let center = mu_nu(model, &nu)?;
    let mut z = DMatrix::zeros(p, n);
    fill_std_normal(z.as_mut_slice(), rng);
    let mut x = model.decomposition().sqrt_factor() * z;
    for mut col in x.column_iter_mut() {
        col += &center;
    }
    Ok((x, nu))
}

/// Sample mean x̄ and sample covariance S = X V Xᵀ / (n − 1).
#[derive(Clone, Debug)]
pub struct SampleMoments {
    pub xbar: DVector<f64>,
    pub s_matrix: DMatrix<f64>,
    pub n_used: usize,
}

pub fn sample_mean_and_cov(x: &DMatrix<f64>) -> Result<SampleMoments> {
    let n = x.ncols();
    if n < 2 {
        return Err(Error::InvalidDimension(format!(
            "need at least 2 observations, got {n}"
        )));
    }
    let xbar = x.column_mean();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &xbar;
    }
    let mut s = &centered * centered.transpose() / (n as f64 - 1.0);
    // exact symmetry
    for i in 0..s.nrows() {
        for j in 0..i {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(SampleMoments {
        xbar,
        s_matrix: s,
        n_used: n,
    })
}

/// One brute-force realization of lᵀSx̄ and (when p < n − 1) lᵀS⁻¹x̄.
#[derive(Clone, Debug)]
pub struct OracleDraw {
    pub cov_product: f64,
    pub precision_product: Option<f64>,
    pub nu: DVector<f64>,
    pub moments: SampleMoments,
}

/// Simulates the full p×n data matrix and evaluates both products directly.
pub fn oracle_products<R: Rng + ?Sized>(
    model: &ModelSpec,
    l: &DVector<f64>,
    n: usize,
    rng: &mut R,
) -> Result<OracleDraw> {
    if l.len() != model.p() {
        return Err(dim_mismatch("length of l", model.p(), l.len()));
    }
    let (x, nu) = sample_data_matrix(model, n, rng)?;
    let moments = sample_mean_and_cov(&x)?;
    let cov_product = l.dot(&(&moments.s_matrix * &moments.xbar));
    let precision_product = if model.p() + 1 < n {
        moments
            .s_matrix
            .clone()
            .cholesky()
            .map(|c| l.dot(&c.solve(&moments.xbar)))
    } else {
        None
    };
    Ok(OracleDraw {
        cov_product,
        precision_product,
        nu,
        moments,
    })
}
