//! Empirical denoising on particle clouds: Gaussian-kernel mean shift.
//!
//! One mean-shift step with kernel variance t is the empirical counterpart of
//! the ordinary denoising map: the corruption variance doubles as the kernel
//! bandwidth, with no extra heuristic on top. Kernel weights are always
//! combined through the log-sum-exp shift; a query whose every kernel weight
//! underflows is reported as out of support rather than silently averaged.
//!
//! The weight computation is shared by the single-query and batch paths, so a
//! particle pushed by `compose_dae_particles` sees exactly the arithmetic of
//! `mean_shift_dae`, bit for bit.

use nalgebra::{DMatrix, DVector};
use wide::f64x4;

use crate::error::{Error, Result};
use crate::linalg;
use crate::measures::{DiffusionCoefficient, ParticleCloud, LOG_UNDERFLOW};

const LANES: usize = 4;
/// Pad value for the exponent array: far below any reachable exponent, far
/// above f64::MIN so fused multiply-adds stay finite.
const PAD_EXPONENT: f64 = -1.0e300;

/// Precomputed per-cloud tables for kernel-weighted means at a fixed
/// bandwidth. The exponent of particle i at query x decomposes as
/// v_i + sum_d (x_d / t) p_{d,i} - |x|^2/(2t), with v_i carrying the particle
/// terms; the query constant cancels between numerator and denominator and is
/// only needed for the underflow check.
pub(crate) struct MeanShiftKernel {
    dim: usize,
    padded: usize,
    t: f64,
    /// One padded array per coordinate, particle-major.
    coords: Vec<Vec<f64>>,
    /// v_i = -|p_i|^2 / (2t) + log w_i (log weight omitted when uniform).
    exponents: Vec<f64>,
}

impl MeanShiftKernel {
    pub(crate) fn new(cloud: &ParticleCloud, t: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kernel bandwidth time must be positive, got {t}"
            )));
        }
        let n = cloud.n();
        let dim = cloud.dim();
        let padded = n.div_ceil(LANES) * LANES;
        let mut coords = vec![vec![0.0_f64; padded]; dim];
        let mut exponents = vec![PAD_EXPONENT; padded];
        let pts = cloud.points();
        let weights = cloud.weights();
        let uniform = {
            let w0 = weights[0];
            weights.iter().all(|&w| w == w0)
        };
        let inv_2t = 1.0 / (2.0 * t);
        for i in 0..n {
            let mut sq = 0.0;
            for d in 0..dim {
                let p = pts[(d, i)];
                coords[d][i] = p;
                sq += p * p;
            }
            let mut v = -sq * inv_2t;
            if !uniform {
                // ln 0 = -inf would poison mul_add; clamp to the pad level.
                let lw = weights[i].ln();
                v += lw.max(PAD_EXPONENT);
            }
            exponents[i] = v.max(PAD_EXPONENT);
        }
        Ok(Self {
            dim,
            padded,
            t,
            coords,
            exponents,
        })
    }

    /// Kernel-weighted mean of the cloud at x (one mean-shift step).
    pub(crate) fn weighted_mean(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "query has dimension {}, cloud has {}",
                x.len(),
                self.dim
            )));
        }
        let scales: Vec<f64> = (0..self.dim).map(|d| x[d] / self.t).collect();

        // Pass 1: the running maximum of the shifted exponents.
        let mut max4 = f64x4::splat(PAD_EXPONENT);
        let chunks = self.padded / LANES;
        for k in 0..chunks {
            let base = k * LANES;
            let mut arg = load4(&self.exponents, base);
            for d in 0..self.dim {
                arg = load4(&self.coords[d], base).mul_add(f64x4::splat(scales[d]), arg);
            }
            max4 = max4.max(arg);
        }
        let shift = max4.to_array().into_iter().fold(PAD_EXPONENT, f64::max);

        // The dropped query constant re-enters only for the underflow check:
        // the true peak exponent is shift - |x|^2/(2t).
        let query_sq: f64 = x.iter().map(|v| v * v).sum();
        if shift - query_sq / (2.0 * self.t) < LOG_UNDERFLOW {
            return Err(Error::OutOfSupport);
        }

        // Pass 2: exponentiate against the shift and accumulate moments.
        let mut den4 = f64x4::splat(0.0);
        let mut num4 = vec![f64x4::splat(0.0); self.dim];
        let neg_shift = f64x4::splat(-shift);
        for k in 0..chunks {
            let base = k * LANES;
            let mut arg = load4(&self.exponents, base) + neg_shift;
            for d in 0..self.dim {
                arg = load4(&self.coords[d], base).mul_add(f64x4::splat(scales[d]), arg);
            }
            let w = arg.exp();
            den4 += w;
            for d in 0..self.dim {
                num4[d] = load4(&self.coords[d], base).mul_add(w, num4[d]);
            }
        }
        let den: f64 = den4.to_array().into_iter().sum();
        Ok(DVector::from_iterator(
            self.dim,
            num4.iter()
                .map(|n| n.to_array().into_iter().sum::<f64>() / den),
        ))
    }
}

#[inline(always)]
fn load4(data: &[f64], base: usize) -> f64x4 {
    f64x4::from([data[base], data[base + 1], data[base + 2], data[base + 3]])
}

/// One Gaussian mean-shift step with kernel variance t: the kernel-weighted
/// average of the cloud at x. Output lies in the convex hull of the cloud.
pub fn mean_shift_dae(cloud: &ParticleCloud, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    MeanShiftKernel::new(cloud, t)?.weighted_mean(x)
}

/// Mean-shift map applied to every column of `queries`, building the cloud
/// tables once. Identical arithmetic to `mean_shift_dae` per query.
pub fn mean_shift_dae_batch(
    cloud: &ParticleCloud,
    t: f64,
    queries: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let kernel = MeanShiftKernel::new(cloud, t)?;
    let mut out = DMatrix::zeros(cloud.dim(), queries.ncols());
    for (i, col) in queries.column_iter().enumerate() {
        let y = kernel.weighted_mean(&col.clone_owned())?;
        out.set_column(i, &y);
    }
    Ok(out)
}

/// Empirical score at x: the mean-shift displacement divided by t, so that
/// the map is exactly the identity plus t times this score.
pub fn empirical_score(cloud: &ParticleCloud, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    let shifted = mean_shift_dae(cloud, t, x)?;
    Ok((shifted - x) / t)
}

/// Mean shift with an anisotropic kernel covariance S = 2tD:
/// x + t S^{-1} (m_S(x) - x), where m_S is the S-kernel weighted mean.
/// For D = (1/2)I this is dispatched to `mean_shift_dae`, which it equals
/// exactly.
pub fn anisotropic_mean_shift(
    cloud: &ParticleCloud,
    t: f64,
    d: &DiffusionCoefficient,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "kernel bandwidth time must be positive, got {t}"
        )));
    }
    if d.dim() != cloud.dim() {
        return Err(Error::DimensionMismatch(format!(
            "diffusion coefficient is {}-dimensional, cloud is {}-dimensional",
            d.dim(),
            cloud.dim()
        )));
    }
    if d.is_half_identity() {
        // S = tI makes the update collapse to the plain kernel mean; reusing
        // that path keeps the equality exact instead of within rounding.
        return mean_shift_dae(cloud, t, x);
    }
    if x.len() != cloud.dim() {
        return Err(Error::DimensionMismatch(format!(
            "query has dimension {}, cloud has {}",
            x.len(),
            cloud.dim()
        )));
    }
    let s = d.matrix() * (2.0 * t);
    let s_inv = linalg::invert_pd(&s)?;
    let n = cloud.n();
    let pts = cloud.points();
    let weights = cloud.weights();
    let mut args = Vec::with_capacity(n);
    let mut max_arg = f64::NEG_INFINITY;
    for i in 0..n {
        let diff = x - pts.column(i);
        let mut a = -0.5 * (&s_inv * &diff).dot(&diff);
        let lw = weights[i].ln();
        a += lw.max(PAD_EXPONENT);
        args.push(a);
        max_arg = max_arg.max(a);
    }
    if max_arg < LOG_UNDERFLOW {
        return Err(Error::OutOfSupport);
    }
    let mut den = 0.0;
    let mut num = DVector::zeros(cloud.dim());
    for i in 0..n {
        let w = (args[i] - max_arg).exp();
        den += w;
        num += pts.column(i) * w;
    }
    let mean = num / den;
    Ok(x + (s_inv * (mean - x)) * t)
}
