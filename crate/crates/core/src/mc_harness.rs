//! Monte Carlo experiment engine: random model construction, replicate
//! generation, Epanechnikov KDE with least-squares cross-validated
//! bandwidth, and goodness-of-fit against N(0, 1).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{Standardizer, TraceTerm};
use crate::distributions::NuDistribution;
use crate::error::{Error, Result};
use crate::model_core::ModelSpec;
use crate::normal;
use crate::parallel::{map_indexed, map_indexed_sequential};
use crate::rng::RngStream;
use crate::stochastic_reps::{ProductKind, ProductSampler};

/// Diagonal entries of Σ below this are redrawn.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Evenly spaced evaluation grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for KdeGrid {
    fn default() -> Self {
        Self {
            lo: -4.0,
            hi: 4.0,
            points: 201,
        }
    }
}

impl KdeGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) || self.points < 2 {
            return Err(Error::InvalidInput(format!(
                "KDE grid needs lo < hi and at least 2 points, got [{}, {}] with {}",
                self.lo, self.hi, self.points
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lo + i as f64 * step).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub p: usize,
    pub n: usize,
    pub q: usize,
    pub c: f64,
    pub n_reps: usize,
    pub product: ProductKind,
    pub nu: NuDistribution,
    pub master_seed: u64,
    pub model_seed: u64,
    #[serde(default)]
    pub kde_grid: KdeGrid,
    /// `None` selects 30 log-spaced values around the rule-of-thumb bandwidth.
    #[serde(default)]
    pub bandwidth_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub trace_term: TraceTerm,
}

impl ExperimentConfig {
    /// Configuration with c = p/n and default grids.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        p: usize,
        n: usize,
        q: usize,
        n_reps: usize,
        product: ProductKind,
        nu: NuDistribution,
        master_seed: u64,
        model_seed: u64,
    ) -> Self {
        Self {
            p,
            n,
            q,
            c: p as f64 / n.max(1) as f64,
            n_reps,
            product,
            nu,
            master_seed,
            model_seed,
            kde_grid: KdeGrid::default(),
            bandwidth_grid: None,
            trace_term: TraceTerm::PerDimension,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.q == 0 {
            return Err(Error::InvalidDimension("p and q must be positive".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidDimension(format!("n must be at least 2, got {}", self.n)));
        }
        if self.nu.dim() != self.q {
            return Err(Error::InvalidDimension(format!(
                "nu has dimension {} but q = {}",
                self.nu.dim(),
                self.q
            )));
        }
        if self.n_reps < 100 {
            return Err(Error::InvalidInput(format!(
                "at least 100 replicates are required, got {}",
                self.n_reps
            )));
        }
        let ratio = self.p as f64 / self.n as f64;
        if !self.c.is_finite() || self.c < 0.0 || (ratio - self.c).abs() > (self.n as f64).powf(-0.5) {
            return Err(Error::InvalidInput(format!(
                "c = {} is too far from p/n = {ratio}",
                self.c
            )));
        }
        self.product.check_regime(self.p, self.n)?;
        if self.product == ProductKind::PrecisionTimesMean && self.c >= 1.0 {
            return Err(Error::Regime(format!("the precision product needs c < 1, got {}", self.c)));
        }
        self.kde_grid.validate()?;
        if let Some(g) = &self.bandwidth_grid {
            if g.is_empty() || g.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
                return Err(Error::InvalidInput("bandwidth grid must be nonempty and positive".into()));
            }
        }
        Ok(())
    }
}

/// Standardized replicates together with the configuration that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub standardized: Vec<f64>,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub bandwidth: f64,
    pub kde: Vec<(f64, f64)>,
    pub ks_statistic: f64,
    pub mean: f64,
    /// Sample variance with divisor N − 1.
    pub variance: f64,
    /// m₃ / m₂^{3/2}, without small-sample correction.
    pub skewness: f64,
}

/// Random model used by the simulation study: μᵢ ∼ U[−1, 1], Σ diagonal with
/// entries U[0, 1], B entries U[0, 1]. Draw order is μ, diag Σ, then B row by row.
pub fn generate_study_model(p: usize, q: usize, model_seed: u64, nu: NuDistribution) -> Result<ModelSpec> {
    let mut rng = RngStream::new(model_seed, 0);
    let mu = DVector::from_fn(p, |_, _| rng.random_range(-1.0..=1.0));
    let mut diag = Vec::with_capacity(p);
    let mut redraws = 0usize;
    for _ in 0..p {
        let mut v: f64 = rng.random_range(0.0..=1.0);
        while v < SIGMA_FLOOR {
            redraws += 1;
            v = rng.random_range(0.0..=1.0);
        }
        diag.push(v);
    }
    if redraws > 0 {
        log::warn!("redrew {redraws} diagonal entries of Sigma below {SIGMA_FLOOR}");
    }
    let mut b = DMatrix::zeros(p, q);
    for i in 0..p {
        for j in 0..q {
            b[(i, j)] = rng.random_range(0.0..=1.0);
        }
    }
    ModelSpec::new(mu, DMatrix::from_diagonal(&DVector::from_vec(diag)), b, nu)
}

/// Whether replicates may run on the rayon pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Parallel,
    Sequential,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SampleSet> {
    run_experiment_with(cfg, Execution::Parallel)
}

/// Replicate i draws from stream i of `master_seed`, so the result is the same
/// for either execution mode and any thread count.
pub fn run_experiment_with(cfg: &ExperimentConfig, exec: Execution) -> Result<SampleSet> {
    cfg.validate()?;
    let model = generate_study_model(cfg.p, cfg.q, cfg.model_seed, cfg.nu.clone())?;
    let l = DVector::from_element(cfg.p, 1.0);
    let sampler = ProductSampler::new(&model, &l, cfg.n, cfg.product)?;
    let st = Standardizer::from_cache(sampler.cache().clone(), cfg.c, cfg.n, cfg.product, cfg.trace_term)?;
    let one = |i: usize| -> Result<f64> {
        let mut rng = RngStream::new(cfg.master_seed, i as u64);
        let draw = sampler.draw(&mut rng, None)?;
        let z = st.standardize_one(&draw)?;
        if !z.is_finite() {
            return Err(Error::InvalidInput(format!("replicate {i} is not finite")));
        }
        Ok(z)
    };
    let standardized = match exec {
        Execution::Parallel => map_indexed(cfg.n_reps, one)?,
        Execution::Sequential => map_indexed_sequential(cfg.n_reps, one)?,
    };
    Ok(SampleSet {
        standardized,
        config: cfg.clone(),
    })
}

fn epanechnikov(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// (K∗K)(u) for the Epanechnikov kernel.
fn epanechnikov_conv(u: f64) -> f64 {
    let a = u.abs();
    if a <= 2.0 {
        3.0 / 160.0 * (2.0 - a).powi(3) * (a * a + 6.0 * a + 4.0)
    } else {
        0.0
    }
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// f̂(x) = (1/(N·h))·Σᵢ K((x − sᵢ)/h) on each grid point.
pub fn epanechnikov_kde(samples: &[f64], bandwidth: f64, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("KDE needs at least one sample".into()));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let s = sorted(samples);
    let scale = 1.0 / (s.len() as f64 * bandwidth);
    Ok(grid
        .iter()
        .map(|&x| {
            let lo = s.partition_point(|&v| v < x - bandwidth);
            let hi = s.partition_point(|&v| v <= x + bandwidth);
            // fold from +0 so empty windows do not print as -0
            let sum = s[lo..hi].iter().fold(0.0, |acc, &v| acc + epanechnikov((x - v) / bandwidth));
            (x, sum * scale)
        })
        .collect())
}

/// Above this size LSCV works on linearly binned data.
pub const LSCV_EXACT_LIMIT: usize = 10_000;
/// Bin width is at most the smallest candidate bandwidth over this.
const BINS_PER_BANDWIDTH: f64 = 100.0;
const MAX_BINS: usize = 1 << 22;

/// Bandwidth minimizing LSCV(h) = ∫f̂² − (2/N)Σᵢ f̂₋ᵢ(sᵢ) over `grid`.
pub fn lscv_bandwidth(samples: &[f64], grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("bandwidth grid is empty".into()));
    }
    if samples.len() < 2 {
        return Err(Error::InvalidInput("LSCV needs at least two samples".into()));
    }
    if grid.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidInput("bandwidths must be positive".into()));
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let scores = lscv_scores(samples, grid);
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok(grid[best])
}

/// LSCV criterion at each bandwidth.
pub fn lscv_scores(samples: &[f64], grid: &[f64]) -> Vec<f64> {
    let s = sorted(samples);
    let n = s.len() as f64;
    // off-diagonal pair sums Σ_{i≠j} g(dᵢⱼ/h), for g = K∗K and g = K
    let pair_sums: Vec<(f64, f64)> = if s.len() <= LSCV_EXACT_LIMIT {
        grid.iter().map(|&h| exact_pair_sums(&s, h)).collect()
    } else {
        binned_pair_sums(&s, grid)
    };
    grid.iter()
        .zip(pair_sums)
        .map(|(&h, (conv, kern))| {
            (n * epanechnikov_conv(0.0) + conv) / (n * n * h) - 2.0 * kern / (n * (n - 1.0) * h)
        })
        .collect()
}

fn exact_pair_sums(s: &[f64], h: f64) -> (f64, f64) {
    let mut conv = 0.0;
    let mut kern = 0.0;
    for i in 0..s.len() {
        for &v in &s[i + 1..] {
            let u = (v - s[i]) / h;
            if u > 2.0 {
                break;
            }
            conv += epanechnikov_conv(u);
            kern += epanechnikov(u);
        }
    }
    (2.0 * conv, 2.0 * kern)
}

fn binned_pair_sums(s: &[f64], grid: &[f64]) -> Vec<(f64, f64)> {
    let lo = s[0];
    let hi = s[s.len() - 1];
    let h_min = grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let h_max = grid.iter().cloned().fold(0.0, f64::max);
    let m = (((hi - lo) * BINS_PER_BANDWIDTH / h_min).ceil() as usize + 2).clamp(1024, MAX_BINS);
    let delta = ((hi - lo) / (m - 1) as f64).max(f64::MIN_POSITIVE);
    let mut w = vec![0.0; m];
    for &v in s {
        let pos = (v - lo) / delta;
        let k = (pos.floor() as usize).min(m - 2);
        let frac = pos - k as f64;
        w[k] += 1.0 - frac;
        w[k + 1] += frac;
    }
    let lags = ((2.0 * h_max / delta).ceil() as usize + 1).min(m);
    let auto = autocorrelation(&w, lags);
    let n = s.len() as f64;
    grid.iter()
        .map(|&h| {
            let mut conv = auto[0] * epanechnikov_conv(0.0);
            let mut kern = auto[0] * epanechnikov(0.0);
            for (k, a) in auto.iter().enumerate().skip(1) {
                let u = k as f64 * delta / h;
                if u > 2.0 {
                    break;
                }
                conv += 2.0 * a * epanechnikov_conv(u);
                kern += 2.0 * a * epanechnikov(u);
            }
            (conv - n * epanechnikov_conv(0.0), kern - n * epanechnikov(0.0))
        })
        .collect()
}

/// Σₐ w[a]·w[a+k] for k < lags, through a zero-padded FFT. The scalar
/// planner keeps the result independent of CPU features.
fn autocorrelation(w: &[f64], lags: usize) -> Vec<f64> {
    use rustfft::num_complex::Complex;
    let size = (2 * w.len()).next_power_of_two();
    let mut planner = rustfft::FftPlannerScalar::new();
    let mut buf: Vec<Complex<f64>> = w.iter().map(|&x| Complex::new(x, 0.0)).collect();
    buf.resize(size, Complex::new(0.0, 0.0));
    planner.plan_fft_forward(size).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf[..lags].iter().map(|z| z.re / size as f64).collect()
}

/// 30 log-spaced bandwidths over [0.05, 2] × 2.34·σ̂·N^{-1/5}.
pub fn default_bandwidth_grid(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    let (_, var, _) = moments(samples);
    let sd = var.sqrt();
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::InvalidInput("samples have zero or undefined spread".into()));
    }
    let base = 2.34 * sd * (samples.len() as f64).powf(-0.2);
    let (a, b) = ((0.05f64).ln(), (2.0f64).ln());
    Ok((0..30).map(|i| base * (a + (b - a) * i as f64 / 29.0).exp()).collect())
}

/// sup |F̂_N − Φ|, checking both one-sided gaps at every order statistic.
pub fn ks_statistic(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("KS needs at least one sample".into()));
    }
    let s = sorted(samples);
    let n = s.len() as f64;
    Ok(s.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = normal::cdf(x);
        d.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    }))
}

/// Two-sample Kolmogorov-Smirnov distance sup |F̂_a − F̂_b|.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("both samples must be nonempty".into()));
    }
    let sa = sorted(a);
    let sb = sorted(b);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// (mean, variance with divisor N − 1, moment skewness)
fn moments(samples: &[f64]) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let (m2, m3) = samples.iter().fold((0.0, 0.0), |(a, b), x| {
        let d = x - mean;
        (a + d * d, b + d * d * d)
    });
    let (m2, m3) = (m2 / n, m3 / n);
    let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    (mean, m2 * n / (n - 1.0).max(1.0), skew)
}

pub fn summarize(samples: &[f64], kde_grid: &KdeGrid, bandwidth_grid: Option<&[f64]>) -> Result<GofReport> {
    if samples.len() < 3 {
        return Err(Error::InvalidInput("summaries need at least three samples".into()));
    }
    kde_grid.validate()?;
    let default_grid;
    let grid = match bandwidth_grid {
        Some(g) => g,
        None => {
            default_grid = default_bandwidth_grid(samples)?;
            &default_grid
        }
    };
    let bandwidth = lscv_bandwidth(samples, grid)?;
    let kde = epanechnikov_kde(samples, bandwidth, &kde_grid.values())?;
    let (mean, variance, skewness) = moments(samples);
    Ok(GofReport {
        bandwidth,
        kde,
        ks_statistic: ks_statistic(samples)?,
        mean,
        variance,
        skewness,
    })
}

/// Runs the experiment and scores it.
pub fn run_and_summarize(cfg: &ExperimentConfig) -> Result<(SampleSet, GofReport)> {
    let set = run_experiment(cfg)?;
    let report = summarize(&set.standardized, &cfg.kde_grid, cfg.bandwidth_grid.as_deref())?;
    Ok((set, report))
}
