//! Closed-form denoising transport maps for Gaussians and mixtures.
//!
//! Two families appear throughout. The ordinary map pulls a smoothed point
//! back toward the data: for N(mu, Sigma) it is affine with
//! A = (I + t Sigma^{-1})^{-1} and b = (I + t^{-1} Sigma)^{-1} mu. The
//! continuous map is the time-t flow of the score dynamics; for a Gaussian it
//! is affine with A = sqrt(I - 2t Sigma^{-1}) and exists only before the
//! covariance collapses at t = lambda_min / 2.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::measures::{DiffusionCoefficient, GaussianMeasure, GaussianMixture, LOG_UNDERFLOW};
use crate::transport::TransportMap;

/// Margin below the singular time within which the continuous map is refused.
pub const SINGULAR_MARGIN: f64 = 1e-9;

/// Posterior component weights under time-adjusted covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResponsibilityMode {
    /// Smoothed covariances Sigma_k + tI.
    Ordinary,
    /// Contracted covariances Sigma_k - 2tI; requires t below the singular time.
    Continuous,
}

/// Normalized posterior weights, one per mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsibilityProfile {
    values: Vec<f64>,
    mode: ResponsibilityMode,
}

impl ResponsibilityProfile {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mode(&self) -> ResponsibilityMode {
        self.mode
    }
}

fn check_time_nonnegative(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "time must be nonnegative and finite, got {t}"
        )));
    }
    Ok(())
}

fn check_time_positive(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "time must be positive and finite, got {t}"
        )));
    }
    Ok(())
}

/// Covariance of the continuous pushforward, guarded against collapse.
fn contracted_cov(cov: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let lambda_min = linalg::min_eigenvalue(cov);
    let collapse_at = 0.5 * lambda_min;
    if t >= collapse_at - SINGULAR_MARGIN {
        return Err(Error::CovarianceCollapse { t, collapse_at });
    }
    let m = cov.nrows();
    Ok(cov - DMatrix::<f64>::identity(m, m) * (2.0 * t))
}

/// Ordinary denoising map of a Gaussian: affine, fixing the mean.
pub fn ordinary_dae_gaussian(g0: &GaussianMeasure, t: f64) -> Result<TransportMap> {
    check_time_positive(t)?;
    let m = g0.dim();
    let smoothed = g0.cov() + DMatrix::<f64>::identity(m, m) * t;
    let inv = linalg::invert_pd(&smoothed).map_err(|_| Error::NotPd {
        min_eig: linalg::min_eigenvalue(g0.cov()),
    })?;
    let a = g0.cov() * &inv;
    let b = (&inv * g0.mean()) * t;
    TransportMap::affine(a, b)
}

/// Law of the ordinary map applied to its own Gaussian:
/// N(mu, Sigma (I + t Sigma^{-1})^{-2}).
pub fn ordinary_dae_gaussian_pushforward(g0: &GaussianMeasure, t: f64) -> Result<GaussianMeasure> {
    let map = ordinary_dae_gaussian(g0, t)?;
    crate::transport::pushforward_affine(g0, &map)
}

/// Continuous denoising map of a Gaussian:
/// x -> sqrt(I - 2t Sigma^{-1}) (x - mu) + mu.
pub fn continuous_dae_gaussian(g0: &GaussianMeasure, t: f64) -> Result<TransportMap> {
    check_time_nonnegative(t)?;
    let m = g0.dim();
    if t == 0.0 {
        return Ok(TransportMap::identity(m));
    }
    let lambda_min = linalg::min_eigenvalue(g0.cov());
    let collapse_at = 0.5 * lambda_min;
    if t >= collapse_at - SINGULAR_MARGIN {
        return Err(Error::CovarianceCollapse { t, collapse_at });
    }
    let inv = linalg::invert_pd(g0.cov())?;
    let s = DMatrix::<f64>::identity(m, m) - inv * (2.0 * t);
    let a = linalg::sym_sqrt(&s)?;
    let b = g0.mean() - &a * g0.mean();
    TransportMap::affine(a, b)
}

/// Law of the continuous flow at time t: N(mu, Sigma - 2tI).
pub fn continuous_dae_gaussian_pushforward(g0: &GaussianMeasure, t: f64) -> Result<GaussianMeasure> {
    check_time_nonnegative(t)?;
    let cov = contracted_cov(g0.cov(), t)?;
    GaussianMeasure::new(g0.mean().clone(), cov)
}

/// Continuous pushforward of a mixture: each component contracts to
/// N(mu_k, Sigma_k - 2tI) with unchanged weights.
pub fn continuous_dae_gmm_pushforward(gmm: &GaussianMixture, t: f64) -> Result<GaussianMixture> {
    check_time_nonnegative(t)?;
    let comps = gmm
        .components()
        .iter()
        .map(|c| {
            let cov = contracted_cov(c.cov(), t)?;
            GaussianMeasure::new(c.mean().clone(), cov)
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianMixture::new(gmm.weights().to_vec(), comps)
}

/// Posterior component weights of x under the time-adjusted mixture.
pub fn responsibilities(
    gmm: &GaussianMixture,
    t: f64,
    x: &DVector<f64>,
    mode: ResponsibilityMode,
) -> Result<ResponsibilityProfile> {
    check_time_nonnegative(t)?;
    let adjusted: Vec<GaussianMeasure> = match mode {
        ResponsibilityMode::Ordinary => {
            let m = gmm.dim();
            let eye = DMatrix::<f64>::identity(m, m);
            gmm.components()
                .iter()
                .map(|c| GaussianMeasure::new(c.mean().clone(), c.cov() + &eye * t))
                .collect::<Result<Vec<_>>>()?
        }
        ResponsibilityMode::Continuous => gmm
            .components()
            .iter()
            .map(|c| GaussianMeasure::new(c.mean().clone(), contracted_cov(c.cov(), t)?))
            .collect::<Result<Vec<_>>>()?,
    };
    let mut logs = Vec::with_capacity(gmm.k());
    for (w, comp) in gmm.weights().iter().zip(&adjusted) {
        logs.push(w.ln() + comp.log_density(x)?);
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max < LOG_UNDERFLOW {
        return Err(Error::DensityUnderflow);
    }
    let shifted: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = shifted.iter().sum();
    Ok(ResponsibilityProfile {
        values: shifted.iter().map(|s| s / total).collect(),
        mode,
    })
}

/// Evaluate the ordinary mixture map: the responsibility-weighted convex
/// combination of the per-component affine maps.
pub(crate) fn ordinary_dae_gmm_eval(
    gmm: &GaussianMixture,
    t: f64,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let gamma = responsibilities(gmm, t, x, ResponsibilityMode::Ordinary)?;
    let mut y = DVector::zeros(gmm.dim());
    for (k, comp) in gmm.components().iter().enumerate() {
        let g = gamma.values()[k];
        if g == 0.0 {
            continue;
        }
        let map = ordinary_dae_gaussian(comp, t)?;
        y += map.evaluate(x)? * g;
    }
    Ok(y)
}

/// Ordinary denoising map of a mixture. Every component covariance must be
/// strictly positive definite and t > 0.
pub fn ordinary_dae_gmm(gmm: &GaussianMixture, t: f64) -> Result<TransportMap> {
    check_time_positive(t)?;
    for comp in gmm.components() {
        linalg::check_pd(comp.cov())?;
    }
    Ok(TransportMap::gmm_ordinary(gmm.clone(), t))
}

/// Right-hand side of the continuous flow for a mixture: the score of the
/// time-t pushforward, written through responsibilities,
/// v(x) = -sum_k gamma_k(x) (Sigma_k - 2tI)^{-1} (x - mu_k).
pub fn cdae_velocity_gmm(gmm0: &GaussianMixture, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    let gamma = responsibilities(gmm0, t, x, ResponsibilityMode::Continuous)?;
    let mut v = DVector::zeros(gmm0.dim());
    for (k, comp) in gmm0.components().iter().enumerate() {
        let g = gamma.values()[k];
        if g == 0.0 {
            continue;
        }
        let cov = contracted_cov(comp.cov(), t)?;
        let inv = linalg::invert_pd(&cov)?;
        v -= inv * (x - comp.mean()) * g;
    }
    Ok(v)
}

/// Denoising map with a constant anisotropic kernel covariance 2tD:
/// x -> x - t (Sigma + 2tD)^{-1} (x - mu). The data covariance may be
/// rank-deficient; D keeps the smoothed covariance invertible.
pub fn anisotropic_dae_gaussian(
    g0: &GaussianMeasure,
    t: f64,
    d: &DiffusionCoefficient,
) -> Result<TransportMap> {
    check_time_positive(t)?;
    if d.dim() != g0.dim() {
        return Err(Error::DimensionMismatch(format!(
            "diffusion coefficient is {}-dimensional, measure is {}-dimensional",
            d.dim(),
            g0.dim()
        )));
    }
    let smoothed = g0.cov() + d.matrix() * (2.0 * t);
    let inv = linalg::invert_pd(&smoothed)?;
    let m = g0.dim();
    let a = DMatrix::<f64>::identity(m, m) - &inv * t;
    let b = (&inv * g0.mean()) * t;
    TransportMap::affine(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::gmm_score;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag2(a: f64, b: f64) -> GaussianMeasure {
        GaussianMeasure::new(
            DVector::zeros(2),
            DMatrix::from_diagonal(&DVector::from_vec(vec![a, b])),
        )
        .unwrap()
    }

    fn two_bumps(sep: f64) -> GaussianMixture {
        let g1 = GaussianMeasure::univariate(-sep, 1.0).unwrap();
        let g2 = GaussianMeasure::univariate(sep, 1.0).unwrap();
        GaussianMixture::new(vec![0.5, 0.5], vec![g1, g2]).unwrap()
    }

    #[test]
    fn ordinary_map_near_identity_at_tiny_time() {
        let g = diag2(2.0, 1.0);
        let map = ordinary_dae_gaussian(&g, 1e-8).unwrap();
        let (a, b) = map.as_affine().unwrap();
        assert!((a - DMatrix::<f64>::identity(2, 2)).amax() < 1e-6);
        assert!(b.amax() < 1e-6);
    }

    #[test]
    fn ordinary_univariate_pinned_value() {
        let g = GaussianMeasure::univariate(0.0, 1.0).unwrap();
        let map = ordinary_dae_gaussian(&g, 1.0).unwrap();
        // sigma^2 / (sigma^2 + t) * x = 2 / 2.
        assert_relative_eq!(map.evaluate_scalar(2.0).unwrap(), 1.0, epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn ordinary_map_fixes_the_mean(
            t in 1e-3f64..50.0, v1 in 0.2f64..5.0, v2 in 0.2f64..5.0,
            m1 in -3.0f64..3.0, m2 in -3.0f64..3.0
        ) {
            let g = GaussianMeasure::new(
                DVector::from_vec(vec![m1, m2]),
                DMatrix::from_diagonal(&DVector::from_vec(vec![v1, v2])),
            ).unwrap();
            let map = ordinary_dae_gaussian(&g, t).unwrap();
            let fixed = map.evaluate(g.mean()).unwrap();
            prop_assert!((fixed - g.mean()).amax() < 1e-12);
        }
    }

    #[test]
    fn ordinary_pushforward_quarter_variance() {
        let g = GaussianMeasure::univariate(0.0, 1.0).unwrap();
        let out = ordinary_dae_gaussian_pushforward(&g, 1.0).unwrap();
        assert_relative_eq!(out.cov()[(0, 0)], 0.25, epsilon = 1e-14);
    }

    #[test]
    fn continuous_map_identity_at_zero_time() {
        let g = diag2(2.0, 1.0);
        let map = continuous_dae_gaussian(&g, 0.0).unwrap();
        let x = DVector::from_vec(vec![1.3, -0.4]);
        assert_eq!(map.evaluate(&x).unwrap(), x);
    }

    #[test]
    fn continuous_univariate_pinned_value() {
        let g = GaussianMeasure::univariate(0.0, 2.0).unwrap();
        let map = continuous_dae_gaussian(&g, 0.5).unwrap();
        assert_relative_eq!(
            map.evaluate_scalar(1.0).unwrap(),
            0.5f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn continuous_pushforward_contracts_covariance() {
        let g = diag2(2.0, 1.0);
        let out = continuous_dae_gaussian_pushforward(&g, 0.4).unwrap();
        assert_relative_eq!(out.cov()[(0, 0)], 1.2, epsilon = 1e-14);
        assert_relative_eq!(out.cov()[(1, 1)], 0.2, epsilon = 1e-14);
        let near = continuous_dae_gaussian_pushforward(&g, 0.49).unwrap();
        assert!(near.cov()[(1, 1)] < 0.02 + 1e-12);
    }

    #[test]
    fn collapse_is_refused_with_the_singular_time() {
        let g = diag2(2.0, 1.0);
        match continuous_dae_gaussian(&g, 0.5) {
            Err(Error::CovarianceCollapse { collapse_at, .. }) => {
                assert_relative_eq!(collapse_at, 0.5)
            }
            other => panic!("expected collapse, got {other:?}"),
        }
    }

    #[test]
    fn single_component_mixture_map_reduces_to_gaussian_map() {
        let g = GaussianMeasure::univariate(0.7, 1.3).unwrap();
        let gmm = GaussianMixture::single(g.clone());
        let mix_map = ordinary_dae_gmm(&gmm, 0.4).unwrap();
        let gauss_map = ordinary_dae_gaussian(&g, 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let x = DVector::from_element(1, rng.gen_range(-4.0..4.0));
            let a = mix_map.evaluate(&x).unwrap();
            let b = gauss_map.evaluate(&x).unwrap();
            assert_relative_eq!(a[0], b[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn symmetric_mixture_fixes_the_origin() {
        let gmm = two_bumps(1.5);
        let map = ordinary_dae_gmm(&gmm, 0.5).unwrap();
        assert_relative_eq!(map.evaluate_scalar(0.0).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn separated_mixture_means_are_near_fixed_points() {
        let gmm = two_bumps(4.0);
        let map = ordinary_dae_gmm(&gmm, 0.5).unwrap();
        for mu in [-4.0, 4.0] {
            assert!((map.evaluate_scalar(mu).unwrap() - mu).abs() < 1e-3);
        }
    }

    #[test]
    fn mixture_map_is_convex_combination_of_component_maps() {
        let gmm = two_bumps(2.0);
        let t = 0.7;
        let map = ordinary_dae_gmm(&gmm, t).unwrap();
        let x = DVector::from_element(1, 0.8);
        let gamma = responsibilities(&gmm, t, &x, ResponsibilityMode::Ordinary).unwrap();
        let mut want = 0.0;
        for (k, comp) in gmm.components().iter().enumerate() {
            let part = ordinary_dae_gaussian(comp, t).unwrap();
            want += gamma.values()[k] * part.evaluate(&x).unwrap()[0];
        }
        assert_relative_eq!(map.evaluate(&x).unwrap()[0], want, epsilon = 1e-12);
    }

    #[test]
    fn responsibilities_single_component_is_one() {
        let gmm = GaussianMixture::single(GaussianMeasure::standard(1));
        let r = responsibilities(&gmm, 0.3, &DVector::zeros(1), ResponsibilityMode::Ordinary).unwrap();
        assert_eq!(r.values(), &[1.0]);
    }

    #[test]
    fn responsibilities_at_zero_time_equal_priors_between_equidistant_means() {
        let g1 = GaussianMeasure::univariate(-1.0, 1.0).unwrap();
        let g2 = GaussianMeasure::univariate(1.0, 1.0).unwrap();
        let gmm = GaussianMixture::new(vec![0.2, 0.8], vec![g1, g2]).unwrap();
        let r = responsibilities(&gmm, 0.0, &DVector::zeros(1), ResponsibilityMode::Ordinary).unwrap();
        assert_relative_eq!(r.values()[0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(r.values()[1], 0.8, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn responsibilities_normalize(
            x in -6.0f64..6.0, t in 0.0f64..0.45, sep in 0.5f64..3.0
        ) {
            let gmm = two_bumps(sep);
            for mode in [ResponsibilityMode::Ordinary, ResponsibilityMode::Continuous] {
                let r = responsibilities(&gmm, t, &DVector::from_element(1, x), mode).unwrap();
                let total: f64 = r.values().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(r.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn velocity_reduces_to_score_for_single_gaussian_at_zero_time() {
        let gmm = GaussianMixture::single(GaussianMeasure::standard(1));
        let v = cdae_velocity_gmm(&gmm, 0.0, &DVector::from_element(1, 2.0)).unwrap();
        assert_relative_eq!(v[0], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn velocity_vanishes_at_isolated_means() {
        let gmm = two_bumps(4.0);
        let v = cdae_velocity_gmm(&gmm, 0.3, &DVector::from_element(1, 4.0)).unwrap();
        assert!(v.amax() < 1e-6);
    }

    #[test]
    fn velocity_is_score_of_the_pushforward_mixture() {
        let gmm = two_bumps(1.2);
        let t = 0.35;
        let pushed = continuous_dae_gmm_pushforward(&gmm, t).unwrap();
        for x in [-2.0, -0.5, 0.1, 1.7] {
            let xv = DVector::from_element(1, x);
            let v = cdae_velocity_gmm(&gmm, t, &xv).unwrap();
            let s = gmm_score(&pushed, &xv).unwrap();
            assert_relative_eq!(v[0], s[0], epsilon = 1e-10);
        }
    }

    #[test]
    fn anisotropic_half_identity_matches_ordinary() {
        let g = diag2(2.0, 1.0);
        let d = DiffusionCoefficient::half_identity(2);
        let aniso = anisotropic_dae_gaussian(&g, 0.6, &d).unwrap();
        let ordinary = ordinary_dae_gaussian(&g, 0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let ya = aniso.evaluate(&x).unwrap();
            let yo = ordinary.evaluate(&x).unwrap();
            assert!((ya - yo).amax() < 1e-12);
        }
    }

    #[test]
    fn anisotropic_handles_rank_deficient_covariance() {
        let g = GaussianMeasure::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
        )
        .unwrap();
        let d = DiffusionCoefficient::isotropic(2, 1.0).unwrap();
        let map = anisotropic_dae_gaussian(&g, 0.2, &d).unwrap();
        let y = map.evaluate(&DVector::from_vec(vec![1.0, -1.0])).unwrap();
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn anisotropic_displacement_is_scaled_gradient_of_smoothed_log_density() {
        let g = diag2(1.5, 0.8);
        let d = DiffusionCoefficient::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.7]))
            .unwrap();
        let t = 0.3;
        let map = anisotropic_dae_gaussian(&g, t, &d).unwrap();
        let smoothed = crate::measures::heat_convolve_gaussian(&g, t, &d).unwrap();
        let gmm = GaussianMixture::single(smoothed);
        let h = 1e-5;
        let x = DVector::from_vec(vec![0.9, -1.1]);
        let y = map.evaluate(&x).unwrap();
        for i in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (crate::measures::gmm_log_density(&gmm, &xp).unwrap()
                - crate::measures::gmm_log_density(&gmm, &xm).unwrap())
                / (2.0 * h);
            assert_relative_eq!(y[i] - x[i], t * fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn initial_velocity_is_the_score_for_any_coefficient() {
        let g = diag2(1.5, 0.8);
        let gmm = GaussianMixture::single(g.clone());
        let x = DVector::from_vec(vec![1.1, 0.4]);
        let score = gmm_score(&gmm, &x).unwrap();
        let t = 1e-6;
        for d in [
            DiffusionCoefficient::half_identity(2),
            DiffusionCoefficient::isotropic(2, 2.0).unwrap(),
            DiffusionCoefficient::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5])).unwrap(),
        ] {
            let map = anisotropic_dae_gaussian(&g, t, &d).unwrap();
            let y = map.evaluate(&x).unwrap();
            let v = (y - &x) / t;
            for i in 0..2 {
                assert_relative_eq!(v[i], score[i], max_relative = 1e-3);
            }
        }
    }
}
