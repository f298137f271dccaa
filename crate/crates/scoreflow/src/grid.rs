//! Uniform rectangular grids with values, shared by the PDE residual checks
//! and the ridgelet quadratures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One uniformly spaced axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(start: f64, step: f64, count: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() || !start.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "axis needs finite start and positive step, got start {start}, step {step}"
            )));
        }
        if count < 2 {
            return Err(Error::InvalidParameter(format!(
                "axis needs at least 2 samples, got {count}"
            )));
        }
        Ok(Self { start, step, count })
    }

    /// Symmetric axis on [-half_width, half_width] with spacing <= step.
    pub fn symmetric(half_width: f64, step: f64) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        let count = (2.0 * half_width / step).ceil() as usize + 1;
        let actual = 2.0 * half_width / (count - 1) as f64;
        Self::new(-half_width, actual, count)
    }

    pub fn value(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    pub fn end(&self) -> f64 {
        self.value(self.count - 1)
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }

    /// Trapezoid quadrature weight of sample i.
    pub fn quad_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.count - 1 {
            0.5 * self.step
        } else {
            self.step
        }
    }
}

/// Scalar values on a rectangular grid of one or two axes, row-major in the
/// last axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridValues {
    axes: Vec<Axis>,
    values: Vec<f64>,
}

impl GridValues {
    pub fn new(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidParameter(format!(
                "grids have one or two axes, got {}",
                axes.len()
            )));
        }
        let expect: usize = axes.iter().map(|a| a.count).product();
        if values.len() != expect {
            return Err(Error::DimensionMismatch(format!(
                "grid wants {expect} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("grid values must be finite".into()));
        }
        Ok(Self { axes, values })
    }

    pub fn sample_1d(axis: Axis, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = axis.values().iter().map(|&x| f(x)).collect();
        Self::new(vec![axis], values)
    }

    pub fn sample_2d(ax: Axis, ay: Axis, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(ax.count * ay.count);
        for i in 0..ax.count {
            for j in 0..ay.count {
                values.push(f(ax.value(i), ay.value(j)));
            }
        }
        Self::new(vec![ax, ay], values)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at_1d(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn at_2d(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.axes[1].count + j]
    }

    /// Trapezoid integral of the values over the grid.
    pub fn integral(&self) -> f64 {
        match self.axes.len() {
            1 => {
                let ax = self.axes[0];
                (0..ax.count).map(|i| ax.quad_weight(i) * self.values[i]).sum()
            }
            _ => {
                let (ax, ay) = (self.axes[0], self.axes[1]);
                let mut total = 0.0;
                for i in 0..ax.count {
                    for j in 0..ay.count {
                        total += ax.quad_weight(i) * ay.quad_weight(j) * self.at_2d(i, j);
                    }
                }
                total
            }
        }
    }

    /// Relative L2 distance to another field on the same grid, restricted to
    /// the central `interior` fraction of each axis.
    pub fn relative_l2_interior(&self, other: &GridValues, interior: f64) -> Result<f64> {
        if self.axes != other.axes {
            return Err(Error::DimensionMismatch("fields live on different grids".into()));
        }
        let keep = |axis: &Axis, i: usize| -> bool {
            let mid = 0.5 * (axis.start + axis.end());
            let half = 0.5 * (axis.end() - axis.start) * interior;
            (axis.value(i) - mid).abs() <= half + 1e-12
        };
        let mut num = 0.0;
        let mut den = 0.0;
        match self.axes.len() {
            1 => {
                let ax = self.axes[0];
                for i in 0..ax.count {
                    if keep(&ax, i) {
                        let d = self.values[i] - other.values[i];
                        num += d * d;
                        den += other.values[i] * other.values[i];
                    }
                }
            }
            _ => {
                let (ax, ay) = (self.axes[0], self.axes[1]);
                for i in 0..ax.count {
                    for j in 0..ay.count {
                        if keep(&ax, i) && keep(&ay, j) {
                            let d = self.at_2d(i, j) - other.at_2d(i, j);
                            num += d * d;
                            den += other.at_2d(i, j) * other.at_2d(i, j);
                        }
                    }
                }
            }
        }
        if den == 0.0 {
            return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
        }
        Ok((num / den).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn symmetric_axis_hits_both_ends() {
        let ax = Axis::symmetric(4.0, 0.05).unwrap();
        assert_relative_eq!(ax.start, -4.0);
        assert_relative_eq!(ax.end(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn trapezoid_integral_of_constant() {
        let ax = Axis::new(0.0, 0.25, 5).unwrap();
        let g = GridValues::sample_1d(ax, |_| 2.0).unwrap();
        assert_relative_eq!(g.integral(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_mass_close_to_one() {
        let ax = Axis::symmetric(6.0, 0.05).unwrap();
        let g = GridValues::sample_1d(ax, |x| {
            (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
        })
        .unwrap();
        assert!((g.integral() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn interior_l2_ignores_the_rim() {
        let ax = Axis::symmetric(1.0, 0.1).unwrap();
        let a = GridValues::sample_1d(ax, |x| x).unwrap();
        // Perturb only the outermost samples; the 50% interior must not see it.
        let mut vals = a.values().to_vec();
        vals[0] += 100.0;
        let b = GridValues::new(vec![ax], vals).unwrap();
        assert_relative_eq!(a.relative_l2_interior(&b, 0.5).unwrap(), 0.0);
    }
}
