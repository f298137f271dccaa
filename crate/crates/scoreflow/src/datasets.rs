//! Synthetic point clouds used by the examples and the command line tools.

use nalgebra::DMatrix;
use rand::distributions::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::measures::ParticleCloud;

/// Angular range of the roll, in radians.
pub const SWISS_ROLL_THETA: (f64, f64) = (1.5 * std::f64::consts::PI, 4.5 * std::f64::consts::PI);

/// Two dimensional swiss roll: theta uniform on [1.5 pi, 4.5 pi], the point
/// is (theta cos theta, theta sin theta) / (4.5 pi) plus isotropic Gaussian
/// jitter of the given standard deviation. The division keeps the cloud
/// inside the unit disk.
pub fn swiss_roll(n: usize, noise: f64, seed: u64) -> Result<ParticleCloud> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be at least 1".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise must be finite and >= 0, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = Uniform::new(SWISS_ROLL_THETA.0, SWISS_ROLL_THETA.1);
    let scale = 1.0 / SWISS_ROLL_THETA.1;
    let mut points = DMatrix::zeros(2, n);
    for i in 0..n {
        let theta = rng.sample(angle);
        let ex: f64 = rng.sample(StandardNormal);
        let ey: f64 = rng.sample(StandardNormal);
        points[(0, i)] = theta * theta.cos() * scale + noise * ex;
        points[(1, i)] = theta * theta.sin() * scale + noise * ey;
    }
    ParticleCloud::from_points(points)
}

/// Regular grid over the box [lo, hi]^dim with `per_axis` points per axis,
/// endpoints included. Column order runs the first axis fastest.
pub fn grid_cloud(dim: usize, lo: f64, hi: f64, per_axis: usize) -> Result<ParticleCloud> {
    if dim == 0 {
        return Err(Error::InvalidParameter("grid dimension must be at least 1".into()));
    }
    if per_axis < 2 {
        return Err(Error::InvalidParameter("grid needs at least 2 points per axis".into()));
    }
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("grid bounds must satisfy lo < hi, got [{lo}, {hi}]")));
    }
    let n = per_axis
        .checked_pow(dim as u32)
        .ok_or_else(|| Error::InvalidParameter("grid size overflows".into()))?;
    let step = (hi - lo) / (per_axis - 1) as f64;
    let mut points = DMatrix::zeros(dim, n);
    for i in 0..n {
        let mut rest = i;
        for a in 0..dim {
            points[(a, i)] = lo + (rest % per_axis) as f64 * step;
            rest /= per_axis;
        }
    }
    ParticleCloud::from_points(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swiss_roll_stays_in_unit_disk() {
        let cloud = swiss_roll(2000, 0.0, 1).unwrap();
        for i in 0..cloud.n() {
            assert!(cloud.point(i).norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn swiss_roll_radius_tracks_angle() {
        // Without jitter the radius equals theta / (4.5 pi), so it is
        // confined to [1/3, 1].
        let cloud = swiss_roll(500, 0.0, 2).unwrap();
        for i in 0..cloud.n() {
            let r = cloud.point(i).norm();
            assert!(r >= 1.0 / 3.0 - 1e-12 && r <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn swiss_roll_deterministic() {
        let a = swiss_roll(64, 0.02, 9).unwrap();
        let b = swiss_roll(64, 0.02, 9).unwrap();
        assert_eq!(a.points(), b.points());
        let c = swiss_roll(64, 0.02, 10).unwrap();
        assert_ne!(a.points(), c.points());
    }

    #[test]
    fn swiss_roll_rejects_bad_input() {
        assert!(swiss_roll(0, 0.02, 1).is_err());
        assert!(swiss_roll(10, -0.1, 1).is_err());
        assert!(swiss_roll(10, f64::NAN, 1).is_err());
    }

    #[test]
    fn grid_cloud_covers_box() {
        let cloud = grid_cloud(2, -1.0, 1.0, 3).unwrap();
        assert_eq!(cloud.n(), 9);
        assert_eq!(cloud.point(0), nalgebra::DVector::from_vec(vec![-1.0, -1.0]));
        assert_eq!(cloud.point(1), nalgebra::DVector::from_vec(vec![0.0, -1.0]));
        assert_eq!(cloud.point(8), nalgebra::DVector::from_vec(vec![1.0, 1.0]));
    }

    #[test]
    fn grid_cloud_rejects_bad_input() {
        assert!(grid_cloud(0, 0.0, 1.0, 3).is_err());
        assert!(grid_cloud(2, 0.0, 1.0, 1).is_err());
        assert!(grid_cloud(2, 1.0, 1.0, 3).is_err());
    }
}
