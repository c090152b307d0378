//! Density of X when ν = |ψ|, ψ ∼ N_q(0, Ω):
//!
//! ```text
//! f(Z) = C⁻¹ Φ_q(0; −D·E·vec(R), D) φ_pn(vec(R); 0, F),   R = Z − μ1ₙᵀ
//! D = (n BᵀΣ⁻¹B + Ω⁻¹)⁻¹,   E·vec(R) = BᵀΣ⁻¹R1ₙ,   F⁻¹ = Iₙ⊗Σ⁻¹ − EᵀDE
//! ```
//!
//! F is never formed. Its log-determinant is n·log|Σ| + log|Ω| − log|D| and
//! its quadratic form is Σⱼ rⱼᵀΣ⁻¹rⱼ − (E vec R)ᵀD(E vec R).
//!
//! The mixture form matches the law of |ψ| when Ω is diagonal (or q = 1);
//! for correlated Ω it is the density under ψ truncated to the positive
//! orthant.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::distributions::NuDistribution;
use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{cholesky_lower, log_det_from_cholesky};
use crate::model_core::ModelSpec;
use crate::normal;
use crate::rng::RngStream;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Default absolute standard error for orthant probabilities with q ≥ 2.
pub const DEFAULT_ORTHANT_ACCURACY: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct DensityWorkspace {
    pub d_matrix: DMatrix<f64>,
    pub sigma_inv: DMatrix<f64>,
    pub log_det_sigma: f64,
    pub log_det_omega: f64,
    pub log_det_d: f64,
    pub n: usize,
    /// log Φ_q(0; 0, Ω)
    pub log_c: f64,
    bt_sigma_inv: DMatrix<f64>,
    accuracy: f64,
    qmc_seed: u64,
}

impl DensityWorkspace {
    pub fn build(model: &ModelSpec, n: usize) -> Result<Self> {
        Self::build_with(model, n, DEFAULT_ORTHANT_ACCURACY, 0)
    }

    /// `accuracy` and `qmc_seed` control the orthant probabilities when q ≥ 2.
    pub fn build_with(model: &ModelSpec, n: usize, accuracy: f64, qmc_seed: u64) -> Result<Self> {
        let omega = match model.nu() {
            NuDistribution::TruncatedNormalAbs { omega, .. } => omega,
            _ => return Err(Error::UnsupportedMixing),
        };
        if n == 0 {
            return Err(Error::InvalidDimension("n must be positive".into()));
        }
        let dec = model.decomposition();
        let sigma_inv = dec.power(-1);
        let bt_sigma_inv = model.b().transpose() * &sigma_inv;
        let omega_chol = cholesky_lower(omega)?;
        let omega_inv = nalgebra::Cholesky::new(omega.clone())
            .ok_or(Error::NotPositiveDefinite { lambda_min: f64::NAN })?
            .inverse();
        let mut d_inv = &bt_sigma_inv * model.b() * n as f64 + omega_inv;
        symmetrize(&mut d_inv);
        let d_inv_chol = cholesky_lower(&d_inv)?;
        let log_det_d = -log_det_from_cholesky(&d_inv_chol);
        let mut d_matrix = nalgebra::Cholesky::new(d_inv)
            .ok_or(Error::NotPositiveDefinite { lambda_min: f64::NAN })?
            .inverse();
        symmetrize(&mut d_matrix);

        let q = omega.nrows();
        let mut rng = RngStream::new(qmc_seed, u64::MAX);
        let c = mvn_orthant_cdf(&DVector::zeros(q), omega, accuracy, &mut rng)?;

        Ok(Self {
            d_matrix,
            sigma_inv,
            log_det_sigma: dec.log_det(),
            log_det_omega: log_det_from_cholesky(&omega_chol),
            log_det_d,
            n,
            log_c: c.ln(),
            bt_sigma_inv,
            accuracy,
            qmc_seed,
        })
    }

    /// log|F| through the determinant identity.
    pub fn log_det_f(&self) -> f64 {
        self.n as f64 * self.log_det_sigma + self.log_det_omega - self.log_det_d
    }

    /// log C̃ with C̃⁻¹ = C⁻¹|F|^{1/2}|D|^{1/2}/(|Ω|^{1/2}|Σ|^{n/2}); equals log C.
    pub fn log_c_tilde(&self) -> f64 {
        self.log_c
            - 0.5
                * (self.log_det_f() + self.log_det_d
                    - self.log_det_omega
                    - self.n as f64 * self.log_det_sigma)
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// log f_X(Z) for a p×n matrix Z.
pub fn log_density(ws: &DensityWorkspace, model: &ModelSpec, z: &DMatrix<f64>) -> Result<f64> {
    let p = model.p();
    if z.nrows() != p {
        return Err(dim_mismatch("rows of Z", p, z.nrows()));
    }
    if z.ncols() != ws.n {
        return Err(dim_mismatch("columns of Z", ws.n, z.ncols()));
    }
    let mut r = z.clone();
    for mut col in r.column_iter_mut() {
        col -= model.mu();
    }
    let sir = &ws.sigma_inv * &r;
    let quad_y: f64 = r.iter().zip(sir.iter()).map(|(a, b)| a * b).sum();
    let row_sum = r.column_sum();
    let evec = &ws.bt_sigma_inv * row_sum;
    let d_evec = &ws.d_matrix * &evec;
    let quad = quad_y - evec.dot(&d_evec);

    let pn = (p * ws.n) as f64;
    let log_phi = -0.5 * (pn * LN_2PI + ws.log_det_f() + quad);

    let mut rng = RngStream::new(ws.qmc_seed, 0);
    let log_orthant = ln_orthant(&(-d_evec), &ws.d_matrix, ws.accuracy, &mut rng)?;

    Ok(log_orthant - ws.log_c_tilde() + log_phi)
}

fn ln_orthant(mean: &DVector<f64>, cov: &DMatrix<f64>, accuracy: f64, rng: &mut RngStream) -> Result<f64> {
    if mean.len() == 1 {
        return Ok(normal::ln_cdf(-mean[0] / cov[(0, 0)].sqrt()));
    }
    if is_diagonal(cov) {
        return Ok((0..mean.len())
            .map(|i| normal::ln_cdf(-mean[i] / cov[(i, i)].sqrt()))
            .sum());
    }
    Ok(mvn_orthant_cdf(mean, cov, accuracy, rng)?.ln())
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    let q = m.nrows();
    (0..q).all(|i| (0..q).all(|j| i == j || m[(i, j)] == 0.0))
}

/// P(Z ≤ 0) for Z ∼ N_q(mean, cov).
pub fn mvn_orthant_cdf(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    accuracy: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    mvn_orthant_estimate(mean, cov, accuracy, rng).map(|(p, _)| p)
}

/// Orthant probability with its standard error (zero for closed forms).
///
/// q = 1 and diagonal covariances are exact. Otherwise Genz's
/// separation-of-variables transform is integrated by randomly shifted
/// rank-1 lattice rules, with variables ordered so that the most
/// constrained come first.
pub fn mvn_orthant_estimate(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    accuracy: f64,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    let q = mean.len();
    if q == 0 {
        return Err(Error::InvalidDimension("q must be at least 1".into()));
    }
    if cov.nrows() != q || cov.ncols() != q {
        return Err(dim_mismatch("size of covariance", q, cov.nrows()));
    }
    if !(accuracy > 0.0 && accuracy <= 0.01) {
        return Err(Error::InvalidInput(format!(
            "accuracy must lie in (0, 0.01], got {accuracy}"
        )));
    }
    cholesky_lower(cov)?;
    if q == 1 {
        return Ok((normal::cdf(-mean[0] / cov[(0, 0)].sqrt()), 0.0));
    }
    if is_diagonal(cov) {
        let p = (0..q).map(|i| normal::cdf(-mean[i] / cov[(i, i)].sqrt())).product();
        return Ok((p, 0.0));
    }
    let upper: Vec<f64> = mean.iter().map(|m| -m).collect();
    let (chol, b) = reorder_and_factor(cov, &upper);
    genz_lattice(&chol, &b, accuracy, rng)
}

/// Cholesky factor with greedy variable reordering: at step i the remaining
/// variable with the smallest conditional probability is moved to position i.
fn reorder_and_factor(cov: &DMatrix<f64>, upper: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
    let q = upper.len();
    let mut a = cov.clone();
    let mut b = upper.to_vec();
    let mut l = DMatrix::<f64>::zeros(q, q);
    let mut y = vec![0.0; q];

    for i in 0..q {
        let mut best = i;
        let mut best_p = f64::INFINITY;
        for j in i..q {
            let s: f64 = (0..i).map(|k| l[(j, k)] * y[k]).sum();
            let v = a[(j, j)] - (0..i).map(|k| l[(j, k)].powi(2)).sum::<f64>();
            let pr = normal::cdf((b[j] - s) / v.max(f64::MIN_POSITIVE).sqrt());
            if pr < best_p {
                best_p = pr;
                best = j;
            }
        }
        if best != i {
            a.swap_rows(i, best);
            a.swap_columns(i, best);
            l.swap_rows(i, best);
            b.swap(i, best);
        }
        let d = (a[(i, i)] - (0..i).map(|k| l[(i, k)].powi(2)).sum::<f64>())
            .max(f64::MIN_POSITIVE)
            .sqrt();
        l[(i, i)] = d;
        for m in i + 1..q {
            let s: f64 = (0..i).map(|k| l[(m, k)] * l[(i, k)]).sum();
            l[(m, i)] = (a[(m, i)] - s) / d;
        }
        let ub = (b[i] - (0..i).map(|k| l[(i, k)] * y[k]).sum::<f64>()) / d;
        let mass = normal::cdf(ub);
        y[i] = if mass > 1e-300 { -normal::pdf(ub) / mass } else { ub };
    }
    (l, b)
}

const SHIFTS: usize = 12;
const MAX_POINTS: usize = 1 << 20;
const PRIMES: [f64; 24] = [
    2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0,
    59.0, 61.0, 67.0, 71.0, 73.0, 79.0, 83.0, 89.0,
];

fn genz_lattice(
    l: &DMatrix<f64>,
    b: &[f64],
    accuracy: f64,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    let q = b.len();
    let dim = q - 1;
    if dim > PRIMES.len() {
        return Err(Error::InvalidDimension(format!(
            "orthant probabilities are supported up to q = {}",
            PRIMES.len() + 1
        )));
    }
    let gen: Vec<f64> = PRIMES[..dim].iter().map(|p| p.sqrt().fract()).collect();
    let e0 = normal::cdf(b[0] / l[(0, 0)]);

    let mut w = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    let integrand = |w: &[f64], y: &mut [f64]| -> f64 {
        let mut e = e0;
        let mut f = e0;
        for i in 1..q {
            let u = (w[i - 1] * e).clamp(1e-300, 1.0 - 1e-16);
            y[i - 1] = normal::quantile(u);
            let s: f64 = (0..i).map(|k| l[(i, k)] * y[k]).sum();
            e = normal::cdf((b[i] - s) / l[(i, i)]);
            f *= e;
        }
        f
    };

    let mut points = 1usize << 9;
    let mut last = (0.0, f64::INFINITY);
    while points <= MAX_POINTS {
        let mut estimates = [0.0; SHIFTS];
        for est in estimates.iter_mut() {
            let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let mut sum = 0.0;
            for j in 1..=points {
                for k in 0..dim {
                    let x = (j as f64 * gen[k] + shift[k]).fract();
                    w[k] = (2.0 * x - 1.0).abs();
                }
                sum += integrand(&w, &mut y);
                for wk in w.iter_mut() {
                    *wk = 1.0 - *wk;
                }
                sum += integrand(&w, &mut y);
            }
            *est = sum / (2 * points) as f64;
        }
        let mean = estimates.iter().sum::<f64>() / SHIFTS as f64;
        let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>()
            / ((SHIFTS - 1) * SHIFTS) as f64;
        last = (mean.clamp(0.0, 1.0), var.sqrt());
        if last.1 <= accuracy {
            return Ok(last);
        }
        points *= 2;
    }
    Err(Error::AccuracyNotMet {
        requested: accuracy,
        achieved: last.1,
    })
}

/// Density of X for q = 1 by direct quadrature of
/// ∫₀^∞ φ_pn(vec(Z − μ1ₙᵀ − bν1ₙᵀ); 0, Iₙ⊗Σ) f_ν(ν) dν.
///
/// Supports the truncated-normal and degenerate mixing laws; meant as an
/// independent check on [`log_density`].
pub fn mixture_density_q1(model: &ModelSpec, z: &DMatrix<f64>) -> Result<f64> {
    if model.q() != 1 {
        return Err(Error::InvalidDimension(format!(
            "quadrature is implemented for q = 1, got q = {}",
            model.q()
        )));
    }
    let p = model.p();
    if z.nrows() != p {
        return Err(dim_mismatch("rows of Z", p, z.nrows()));
    }
    let n = z.ncols();
    let dec = model.decomposition();
    let sigma_inv = dec.power(-1);
    let log_norm = -0.5 * ((p * n) as f64 * LN_2PI + n as f64 * dec.log_det());
    let b = model.b().column(0).into_owned();
    let mu = model.mu();
    let conditional = |nu: f64| -> f64 {
        let shift = mu + &b * nu;
        let mut quad = 0.0;
        for col in z.column_iter() {
            let r = col - &shift;
            quad += r.dot(&(&sigma_inv * &r));
        }
        (log_norm - 0.5 * quad).exp()
    };

    match model.nu() {
        NuDistribution::Degenerate { value } => Ok(conditional(value[0])),
        NuDistribution::TruncatedNormalAbs { omega, .. } => {
            let w = omega[(0, 0)].sqrt();
            let integrand = |nu: f64| conditional(nu) * 2.0 * normal::pdf(nu / w) / w;
            Ok(adaptive_simpson(&integrand, 0.0, 40.0 * w, 256, 1e-15))
        }
        NuDistribution::GeneralizedAsymmetricLaplace { .. } => Err(Error::UnsupportedMixing),
    }
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let lo = a + k as f64 * h;
            let hi = lo + h;
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = h / 6.0 * (fa + 4.0 * fm + fb);
            rec(f, lo, hi, fa, fm, fb, whole, tol / panels as f64, 40)
        })
        .sum()
}

/// Dense covariance of vec(X) under Gaussian ψ: Iₙ⊗Σ + (1ₙ⊗B)Ω(1ₙ⊗B)ᵀ.
/// Only for small oracles.
pub fn dense_f(model: &ModelSpec, omega: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let p = model.p();
    let q = model.q();
    let mut stacked = DMatrix::zeros(p * n, q);
    for j in 0..n {
        stacked.view_mut((j * p, 0), (p, q)).copy_from(model.b());
    }
    let mut f = &stacked * omega * stacked.transpose();
    for j in 0..n {
        let mut block = f.view_mut((j * p, j * p), (p, p));
        block += model.sigma();
    }
    f
}

/// log of the matrix-normal density N_{p,n}(μ1ₙᵀ, Σ⊗Iₙ) at Z.
pub fn matrix_normal_log_density(mu: &DVector<f64>, sigma: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<f64> {
    let p = mu.len();
    if z.nrows() != p {
        return Err(dim_mismatch("rows of Z", p, z.nrows()));
    }
    let n = z.ncols();
    let chol = nalgebra::Cholesky::new(sigma.clone())
        .ok_or(Error::NotPositiveDefinite { lambda_min: f64::NAN })?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let mut quad = 0.0;
    for col in z.column_iter() {
        let r = col - mu;
        quad += r.dot(&chol.solve(&r));
    }
    Ok(-0.5 * ((p * n) as f64 * LN_2PI + n as f64 * log_det + quad))
}
