//! Transport maps: the common currency between analytic forms, particle
//! operations, and networks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{DiffusionCoefficient, GaussianMeasure, GaussianMixture, ParticleCloud};
use crate::network::ShallowNet;

/// Step for the central finite-difference Jacobian of non-affine maps.
pub const FD_JACOBIAN_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum MapKind {
    Affine {
        a: DMatrix<f64>,
        b: DVector<f64>,
    },
    /// Pointwise convex combination of per-component affine pullback maps,
    /// weighted by time-adjusted responsibilities.
    GmmOrdinary {
        gmm: GaussianMixture,
        t: f64,
    },
    /// Kernel-weighted averaging toward a particle cloud.
    MeanShift {
        cloud: ParticleCloud,
        t: f64,
        d: DiffusionCoefficient,
    },
    Network(ShallowNet),
    Composed(Vec<TransportMap>),
}

/// A map of the ambient space, evaluable at any finite point.
///
/// The Jacobian is exact for affine maps and a central finite difference
/// (step 1e-5) for every other kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportMap {
    kind: MapKind,
    dim_in: usize,
    dim_out: usize,
}

impl TransportMap {
    pub fn affine(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "affine matrix has {} rows, offset has dimension {}",
                a.nrows(),
                b.len()
            )));
        }
        let (dim_out, dim_in) = (a.nrows(), a.ncols());
        Ok(Self {
            kind: MapKind::Affine { a, b },
            dim_in,
            dim_out,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            kind: MapKind::Affine {
                a: DMatrix::identity(dim, dim),
                b: DVector::zeros(dim),
            },
            dim_in: dim,
            dim_out: dim,
        }
    }

    pub(crate) fn gmm_ordinary(gmm: GaussianMixture, t: f64) -> Self {
        let dim = gmm.dim();
        Self {
            kind: MapKind::GmmOrdinary { gmm, t },
            dim_in: dim,
            dim_out: dim,
        }
    }

    pub fn mean_shift(cloud: ParticleCloud, t: f64, d: DiffusionCoefficient) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "mean-shift bandwidth time must be positive, got {t}"
            )));
        }
        if d.dim() != cloud.dim() {
            return Err(Error::DimensionMismatch(format!(
                "diffusion coefficient is {}-dimensional, cloud is {}-dimensional",
                d.dim(),
                cloud.dim()
            )));
        }
        let dim = cloud.dim();
        Ok(Self {
            kind: MapKind::MeanShift { cloud, t, d },
            dim_in: dim,
            dim_out: dim,
        })
    }

    pub fn network(net: ShallowNet) -> Self {
        let (dim_in, dim_out) = (net.dim_in(), net.dim_out());
        Self {
            kind: MapKind::Network(net),
            dim_in,
            dim_out,
        }
    }

    /// Composition applying `maps[0]` first.
    pub fn composed(maps: Vec<TransportMap>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::InvalidParameter("composition needs at least one map".into()));
        }
        for pair in maps.windows(2) {
            if pair[0].dim_out != pair[1].dim_in {
                return Err(Error::DimensionMismatch(format!(
                    "composition chain breaks: {} -> {}",
                    pair[0].dim_out, pair[1].dim_in
                )));
            }
        }
        let dim_in = maps[0].dim_in;
        let dim_out = maps[maps.len() - 1].dim_out;
        Ok(Self {
            kind: MapKind::Composed(maps),
            dim_in,
            dim_out,
        })
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    /// The affine parts (A, b) when this map is affine.
    pub fn as_affine(&self) -> Option<(&DMatrix<f64>, &DVector<f64>)> {
        match &self.kind {
            MapKind::Affine { a, b } => Some((a, b)),
            _ => None,
        }
    }

    pub fn as_network(&self) -> Option<&ShallowNet> {
        match &self.kind {
            MapKind::Network(net) => Some(net),
            _ => None,
        }
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim_in {
            return Err(Error::DimensionMismatch(format!(
                "point has dimension {}, map expects {}",
                x.len(),
                self.dim_in
            )));
        }
        match &self.kind {
            MapKind::Affine { a, b } => Ok(a * x + b),
            MapKind::GmmOrdinary { gmm, t } => crate::analytic::ordinary_dae_gmm_eval(gmm, *t, x),
            MapKind::MeanShift { cloud, t, d } => {
                if d.is_half_identity() {
                    crate::empirical::mean_shift_dae(cloud, *t, x)
                } else {
                    crate::empirical::anisotropic_mean_shift(cloud, *t, d, x)
                }
            }
            MapKind::Network(net) => net.eval(x),
            MapKind::Composed(maps) => {
                let mut y = x.clone();
                for map in maps {
                    y = map.evaluate(&y)?;
                }
                Ok(y)
            }
        }
    }

    pub fn evaluate_scalar(&self, x: f64) -> Result<f64> {
        let y = self.evaluate(&DVector::from_element(1, x))?;
        Ok(y[0])
    }

    /// Map every column of `points`.
    pub fn evaluate_many(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.dim_out, points.ncols());
        // The mean-shift kind precomputes per-cloud tables once per batch.
        if let MapKind::MeanShift { cloud, t, d } = &self.kind {
            if d.is_half_identity() {
                return crate::empirical::mean_shift_dae_batch(cloud, *t, points);
            }
        }
        for (i, col) in points.column_iter().enumerate() {
            let y = self.evaluate(&col.clone_owned())?;
            out.set_column(i, &y);
        }
        Ok(out)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.kind {
            MapKind::Affine { a, .. } => Ok(a.clone()),
            _ => {
                let mut jac = DMatrix::zeros(self.dim_out, self.dim_in);
                let h = FD_JACOBIAN_STEP;
                for j in 0..self.dim_in {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let fp = self.evaluate(&xp)?;
                    let fm = self.evaluate(&xm)?;
                    jac.set_column(j, &((fp - fm) / (2.0 * h)));
                }
                Ok(jac)
            }
        }
    }
}

/// Push a Gaussian through an affine map: N(A mu + b, A Sigma A^T).
pub fn pushforward_affine(g: &GaussianMeasure, map: &TransportMap) -> Result<GaussianMeasure> {
    let (a, b) = map
        .as_affine()
        .ok_or_else(|| Error::InvalidParameter("pushforward_affine needs an affine map".into()))?;
    if map.dim_in() != g.dim() {
        return Err(Error::DimensionMismatch(format!(
            "map expects dimension {}, measure has {}",
            map.dim_in(),
            g.dim()
        )));
    }
    let mean = a * g.mean() + b;
    let mut cov = a * g.cov() * a.transpose();
    // Symmetrize away the rounding skew so downstream PSD checks stay happy.
    for i in 0..cov.nrows() {
        for j in (i + 1)..cov.ncols() {
            let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
    }
    GaussianMeasure::new(mean, cov)
}

/// Map every particle, keeping weights exactly as they were.
pub fn pushforward_particles(cloud: &ParticleCloud, map: &TransportMap) -> Result<ParticleCloud> {
    let mapped = map.evaluate_many(cloud.points())?;
    for (i, col) in mapped.column_iter().enumerate() {
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteParticle { index: i });
        }
    }
    ParticleCloud::new(mapped, cloud.weights().clone())
}
