//! Gaussian measures, mixtures, particle clouds, and their smoothing algebra.
//!
//! These are the value types every transport map acts on. Gaussians may be
//! rank-deficient (embedded measures need that); operations that require
//! strict positive definiteness say so and fail loudly otherwise.

use nalgebra::{DMatrix, DVector};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Exponent below which exp underflows to zero in f64.
pub(crate) const LOG_UNDERFLOW: f64 = -708.0;

/// Gaussian measure N(mean, cov). The covariance must be symmetric PSD;
/// it may be singular.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianMeasure {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if mean.len() != cov.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "mean has dimension {} but covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        linalg::check_psd(&cov)?;
        Ok(Self { mean, cov })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim),
        }
    }

    pub fn univariate(mean: f64, var: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, var),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn min_cov_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.cov)
    }

    /// log N(x; mean, cov); requires a nonsingular covariance.
    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "query has dimension {}, measure has {}",
                x.len(),
                self.dim()
            )));
        }
        let log_det = linalg::log_det_pd(&self.cov)?;
        let inv = linalg::invert_pd(&self.cov)?;
        let d = x - &self.mean;
        let quad = (inv * &d).dot(&d);
        let m = self.dim() as f64;
        Ok(-0.5 * (quad + log_det + m * (2.0 * std::f64::consts::PI).ln()))
    }
}

/// Mixture of Gaussians with positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<GaussianMeasure>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianMeasure>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("mixture needs at least one component".into()));
        }
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("mixture weights must be positive and finite".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let dim = components[0].dim();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch("mixture components must share one dimension".into()));
        }
        Ok(Self { weights, components })
    }

    pub fn single(g: GaussianMeasure) -> Self {
        Self {
            weights: vec![1.0],
            components: vec![g],
        }
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianMeasure] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &GaussianMeasure {
        &self.components[k]
    }

    /// Smallest covariance eigenvalue across components; the continuous flow
    /// collapses at half this value.
    pub fn min_cov_eigenvalue(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.min_cov_eigenvalue())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Constant symmetric positive-definite diffusion coefficient D. The smoothing
/// kernel at time t is the Gaussian with covariance 2tD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionCoefficient(DMatrix<f64>);

impl DiffusionCoefficient {
    pub fn new(d: DMatrix<f64>) -> Result<Self> {
        linalg::check_pd(&d)?;
        Ok(Self(d))
    }

    pub fn isotropic(dim: usize, value: f64) -> Result<Self> {
        if !(value > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "diffusion coefficient must be positive, got {value}"
            )));
        }
        Ok(Self(DMatrix::identity(dim, dim) * value))
    }

    /// The coefficient (1/2)I that reduces the anisotropic maps to the
    /// ordinary ones.
    pub fn half_identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim) * 0.5)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Exact structural check, used to dispatch to the specialized isotropic
    /// path so that D = (1/2)I reproduces it bit for bit.
    pub fn is_half_identity(&self) -> bool {
        let n = self.0.nrows();
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 0.5 } else { 0.0 };
                if self.0[(i, j)] != want {
                    return false;
                }
            }
        }
        true
    }
}

/// Weighted particle cloud: points are columns, weights are nonnegative with
/// positive total. Weights are kept as given (pushforwards preserve them
/// exactly), not renormalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleCloud {
    points: DMatrix<f64>,
    weights: DVector<f64>,
}

impl ParticleCloud {
    pub fn new(points: DMatrix<f64>, weights: DVector<f64>) -> Result<Self> {
        if points.ncols() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points but {} weights",
                points.ncols(),
                weights.len()
            )));
        }
        if points.ncols() == 0 {
            return Err(Error::InvalidParameter("cloud needs at least one particle".into()));
        }
        for (i, col) in points.column_iter().enumerate() {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteParticle { index: i });
            }
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("weights must be finite and nonnegative".into()));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::InvalidParameter("total weight must be positive".into()));
        }
        Ok(Self { points, weights })
    }

    /// Uniform weights 1/n.
    pub fn from_points(points: DMatrix<f64>) -> Result<Self> {
        let n = points.ncols();
        if n == 0 {
            return Err(Error::InvalidParameter("cloud needs at least one particle".into()));
        }
        let w = DVector::from_element(n, 1.0 / n as f64);
        Self::new(points, w)
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn n(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        self.points.column(i).clone_owned()
    }

    /// Weighted sample mean and covariance (unbiased correction).
    pub fn mean_cov(&self) -> (DVector<f64>, DMatrix<f64>) {
        linalg::weighted_mean_cov(&self.points, &self.weights)
    }
}

/// Differential entropy of a Gaussian up to the dimension-dependent additive
/// constant: (1/2) log det cov. Only differences along a flow are ever
/// compared, so the constant is dropped throughout.
pub fn entropy_gaussian(g: &GaussianMeasure) -> Result<f64> {
    let ld = linalg::log_det_pd(g.cov())?;
    Ok(0.5 * ld)
}

/// Smooth a Gaussian with the heat kernel for duration s >= 0: covariance
/// gains 2sD, the mean is unchanged.
pub fn heat_convolve_gaussian(
    g: &GaussianMeasure,
    s: f64,
    d: &DiffusionCoefficient,
) -> Result<GaussianMeasure> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "smoothing time must be nonnegative, got {s}"
        )));
    }
    if d.dim() != g.dim() {
        return Err(Error::DimensionMismatch(format!(
            "diffusion coefficient is {}-dimensional, measure is {}-dimensional",
            d.dim(),
            g.dim()
        )));
    }
    let cov = g.cov() + d.matrix() * (2.0 * s);
    GaussianMeasure::new(g.mean().clone(), cov)
}

/// Component-wise heat smoothing of a mixture (the kernel acts linearly).
pub fn heat_convolve_gmm(
    gmm: &GaussianMixture,
    s: f64,
    d: &DiffusionCoefficient,
) -> Result<GaussianMixture> {
    let comps = gmm
        .components()
        .iter()
        .map(|c| heat_convolve_gaussian(c, s, d))
        .collect::<Result<Vec<_>>>()?;
    GaussianMixture::new(gmm.weights().to_vec(), comps)
}

/// Draw n >= 1 points from a mixture with a seeded generator. Components are
/// chosen by weight; each covariance is factored once (Cholesky, falling back
/// to the eigenvector factor for semidefinite covariances).
pub fn sample_gmm(gmm: &GaussianMixture, n: usize, seed: u64) -> Result<ParticleCloud> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors = gmm
        .components()
        .iter()
        .map(|c| linalg::psd_factor(c.cov()))
        .collect::<Result<Vec<_>>>()?;
    let index = WeightedIndex::new(gmm.weights())
        .map_err(|e| Error::InvalidParameter(format!("mixture weights: {e}")))?;
    let m = gmm.dim();
    let mut points = DMatrix::zeros(m, n);
    let mut z = DVector::zeros(m);
    for i in 0..n {
        let k = index.sample(&mut rng);
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let x = gmm.component(k).mean() + &factors[k] * &z;
        points.set_column(i, &x);
    }
    ParticleCloud::from_points(points)
}

/// Per-component log densities log(pi_k N(x; mu_k, Sigma_k)).
fn component_log_terms(gmm: &GaussianMixture, x: &DVector<f64>) -> Result<Vec<f64>> {
    gmm.weights()
        .iter()
        .zip(gmm.components())
        .map(|(w, c)| Ok(w.ln() + c.log_density(x)?))
        .collect()
}

/// log of the mixture density, evaluated with the log-sum-exp shift.
pub fn gmm_log_density(gmm: &GaussianMixture, x: &DVector<f64>) -> Result<f64> {
    let terms = component_log_terms(gmm, x)?;
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max < LOG_UNDERFLOW {
        return Err(Error::DensityUnderflow);
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Score of the mixture: the gradient of log density,
/// sum_k gamma_k(x) * Sigma_k^{-1} (mu_k - x) with posterior weights gamma.
pub fn gmm_score(gmm: &GaussianMixture, x: &DVector<f64>) -> Result<DVector<f64>> {
    let terms = component_log_terms(gmm, x)?;
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max < LOG_UNDERFLOW {
        return Err(Error::DensityUnderflow);
    }
    let shifted: Vec<f64> = terms.iter().map(|t| (t - max).exp()).collect();
    let total: f64 = shifted.iter().sum();
    let mut score = DVector::zeros(gmm.dim());
    for (k, comp) in gmm.components().iter().enumerate() {
        let gamma = shifted[k] / total;
        if gamma == 0.0 {
            continue;
        }
        let inv = linalg::invert_pd(comp.cov())?;
        score += inv * (comp.mean() - x) * gamma;
    }
    Ok(score)
}
