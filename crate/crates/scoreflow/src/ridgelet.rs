//! Numerical ridgelet analysis: the transform RΦ(a,b) = ∫Φ(x)ψ(a·x − b)dx,
//! its dual, reconstruction, and the discretization of coefficients into
//! shallow network weights, in input dimension one and two.
//!
//! The analysis/synthesis pair is fixed to ψ = negated second derivative of
//! the Gaussian and η = Gaussian: both have smooth rapidly decaying spectra,
//! so the admissibility quadrature is stable. Targets must be windowed to
//! compact support before transforming; reconstruction statements hold on
//! window interiors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{Axis, GridValues};
use crate::network::{Activation, ShallowNet, TwoLayerNet};
use crate::transport::TransportMap;

/// Smallest admitted |a|: grids keep a fixed standoff from the degenerate
/// a = 0 slice (whose atoms are constants). The excluded band |a| < a_min
/// removes the target's lowest frequencies, costing a near-constant deficit
/// of about a_min * f_hat(0) * 0.28 in one dimension; 0.01 keeps that below
/// 1.5% relative L2 for a unit-width target, inside the reconstruction
/// budget.
pub const A_MIN: f64 = 0.01;

/// Grid spacings must satisfy max|a| * dx <= this, or ψ(a·x − b) is
/// undersampled along x.
pub const ALIASING_LIMIT: f64 = 0.5;

/// Coefficients must decay below this fraction of their peak on the grid
/// boundary before the dual transform will trust the truncation.
pub const BOUNDARY_DECAY: f64 = 0.01;

/// Gaussian ridge activation e^{-u^2/2}.
pub fn eta_gauss(u: f64) -> f64 {
    (-0.5 * u * u).exp()
}

/// Negated second derivative of the Gaussian: (1 - u^2) e^{-u^2/2}.
pub fn psi_gauss_d2(u: f64) -> f64 {
    (1.0 - u * u) * (-0.5 * u * u).exp()
}

/// Smooth compactly supported cutoff: 1 on the central `flat` fraction of
/// [-half_width, half_width], a half-cosine taper to 0 at the edges, 0
/// outside.
pub fn cosine_window(half_width: f64, flat: f64, x: f64) -> f64 {
    let r = x.abs() / half_width;
    if r >= 1.0 {
        0.0
    } else if r <= flat {
        1.0
    } else {
        let u = (r - flat) / (1.0 - flat);
        0.5 * (1.0 + (std::f64::consts::PI * u).cos())
    }
}

/// Sample points of the (a, b) half of the transform, with the quadrature
/// measure attached to each a-sample so line and polar layouts share one
/// representation.
#[derive(Debug, Clone)]
pub struct RidgeletGrid {
    a_points: Vec<DVector<f64>>,
    /// Quadrature weight of each a-sample (already including the polar area
    /// element for two-dimensional grids).
    a_measure: Vec<f64>,
    b_axis: Axis,
    dim: usize,
}

impl RidgeletGrid {
    fn validate(a_points: Vec<DVector<f64>>, a_measure: Vec<f64>, b_axis: Axis) -> Result<Self> {
        if a_points.is_empty() || a_points.len() != a_measure.len() {
            return Err(Error::InvalidParameter(
                "grid needs matching nonempty a-samples and measures".into(),
            ));
        }
        let dim = a_points[0].len();
        for a in &a_points {
            if a.len() != dim {
                return Err(Error::DimensionMismatch(
                    "a-samples must share one dimension".into(),
                ));
            }
            // Slack for round-off in r·(cos θ, sin θ) when r sits exactly
            // on the floor.
            if a.norm() < A_MIN * (1.0 - 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "a-sample with |a| = {} enters the excluded ball |a| < {A_MIN}",
                    a.norm()
                )));
            }
        }
        Ok(Self {
            a_points,
            a_measure,
            b_axis,
            dim,
        })
    }

    /// One-dimensional layout: two symmetric branches a in ±[a_min, a_max]
    /// with spacing da, trapezoid weights within each branch. a_min may sit
    /// anywhere at or above the crate floor A_MIN.
    pub fn line(a_min: f64, a_max: f64, da: f64, b_half: f64, db: f64) -> Result<Self> {
        if !(a_min >= A_MIN) || !(a_max > a_min) {
            return Err(Error::InvalidParameter(format!(
                "need {A_MIN} <= a_min < a_max, got {a_min}, {a_max}"
            )));
        }
        // Samples stay inside [a_min, a_max] even when da does not divide
        // the span exactly.
        let branch = Axis::new(a_min, da, ((a_max - a_min) / da + 1e-9).floor() as usize + 1)?;
        let mut a_points = Vec::new();
        let mut a_measure = Vec::new();
        for i in (0..branch.count).rev() {
            a_points.push(DVector::from_element(1, -branch.value(i)));
            a_measure.push(branch.quad_weight(i));
        }
        for i in 0..branch.count {
            a_points.push(DVector::from_element(1, branch.value(i)));
            a_measure.push(branch.quad_weight(i));
        }
        let b_axis = Axis::symmetric(b_half, db)?;
        Self::validate(a_points, a_measure, b_axis)
    }

    /// Two-dimensional polar layout: radii in [a_min, a_max], full circle of
    /// equally spaced directions, area element r·dr·dθ folded into the
    /// measure.
    pub fn polar(
        a_min: f64,
        a_max: f64,
        n_radii: usize,
        n_angles: usize,
        b_half: f64,
        db: f64,
    ) -> Result<Self> {
        if !(a_min >= A_MIN) || !(a_max > a_min) || n_radii < 2 || n_angles < 3 {
            return Err(Error::InvalidParameter(format!(
                "polar grid needs {A_MIN} <= a_min < a_max, n_radii >= 2, n_angles >= 3, \
                 got {a_min}, {a_max}, {n_radii}, {n_angles}"
            )));
        }
        let radial = Axis::new(a_min, (a_max - a_min) / (n_radii - 1) as f64, n_radii)?;
        let dtheta = 2.0 * std::f64::consts::PI / n_angles as f64;
        let mut a_points = Vec::with_capacity(n_radii * n_angles);
        let mut a_measure = Vec::with_capacity(n_radii * n_angles);
        for k in 0..n_angles {
            let theta = dtheta * k as f64;
            let (sin, cos) = theta.sin_cos();
            for i in 0..n_radii {
                let r = radial.value(i);
                a_points.push(DVector::from_vec(vec![r * cos, r * sin]));
                a_measure.push(r * radial.quad_weight(i) * dtheta);
            }
        }
        let b_axis = Axis::symmetric(b_half, db)?;
        Self::validate(a_points, a_measure, b_axis)
    }

    pub fn a_points(&self) -> &[DVector<f64>] {
        &self.a_points
    }

    pub fn a_measure(&self) -> &[f64] {
        &self.a_measure
    }

    pub fn b_axis(&self) -> Axis {
        self.b_axis
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.a_points.len() * self.b_axis.count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Full quadrature measure of one (a, b) cell.
    pub fn cell_measure(&self, a_idx: usize, b_idx: usize) -> f64 {
        self.a_measure[a_idx] * self.b_axis.quad_weight(b_idx)
    }
}

/// Transform values over a grid, a-major then b.
#[derive(Debug, Clone)]
pub struct RidgeletCoefficients {
    grid: RidgeletGrid,
    values: Vec<f64>,
}

impl RidgeletCoefficients {
    pub fn grid(&self) -> &RidgeletGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, a_idx: usize, b_idx: usize) -> f64 {
        self.values[a_idx * self.grid.b_axis.count + b_idx]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// The coefficient field split as value = sign·magnitude with the
    /// magnitudes normalized into a probability vector over cells
    /// (cell measures included), the discrete analogue of writing the
    /// transform as a density against its own mass distribution.
    pub fn magnitude_distribution(&self) -> Vec<f64> {
        let na = self.grid.a_points.len();
        let nb = self.grid.b_axis.count;
        let mut masses = Vec::with_capacity(self.values.len());
        let mut total = 0.0;
        for ai in 0..na {
            for bi in 0..nb {
                let m = self.at(ai, bi).abs() * self.grid.cell_measure(ai, bi);
                masses.push(m);
                total += m;
            }
        }
        if total > 0.0 {
            for m in &mut masses {
                *m /= total;
            }
        }
        masses
    }

    /// Largest |value| over the truncation boundary: the outermost |a|
    /// samples and both b ends.
    pub fn boundary_max_abs(&self) -> f64 {
        let na = self.grid.a_points.len();
        let nb = self.grid.b_axis.count;
        let max_norm = self
            .grid
            .a_points
            .iter()
            .map(|a| a.norm())
            .fold(0.0_f64, f64::max);
        let mut worst = 0.0_f64;
        for ai in 0..na {
            let outer = self.grid.a_points[ai].norm() > max_norm * 0.999;
            for bi in 0..nb {
                if outer || bi == 0 || bi == nb - 1 {
                    worst = worst.max(self.at(ai, bi).abs());
                }
            }
        }
        worst
    }
}

fn check_aliasing(grid: &RidgeletGrid, x_axes: &[Axis]) -> Result<()> {
    let max_a = grid
        .a_points
        .iter()
        .map(|a| a.norm())
        .fold(0.0_f64, f64::max);
    let max_dx = x_axes.iter().map(|ax| ax.step).fold(0.0_f64, f64::max);
    let product = max_a * max_dx;
    if product > ALIASING_LIMIT {
        return Err(Error::AliasingLimit {
            product,
            limit: ALIASING_LIMIT,
        });
    }
    Ok(())
}

/// Ridgelet transform of a windowed function sampled on a rectangular grid:
/// trapezoid quadrature of ∫ f(x) ψ(a·x − b) dx per (a, b) cell.
pub fn ridgelet_transform(
    f: &GridValues,
    psi: impl Fn(f64) -> f64,
    grid: &RidgeletGrid,
) -> Result<RidgeletCoefficients> {
    if f.dim() != grid.dim() {
        return Err(Error::DimensionMismatch(format!(
            "function grid is {}-dimensional, ridgelet grid is {}-dimensional",
            f.dim(),
            grid.dim()
        )));
    }
    check_aliasing(grid, f.axes())?;
    // Flatten the x-grid once: weighted values and node coordinates.
    let (coords, wf) = flatten_weighted(f);
    let nb = grid.b_axis.count;
    let mut values = vec![0.0_f64; grid.a_points.len() * nb];
    let mut proj = vec![0.0_f64; wf.len()];
    for (ai, a) in grid.a_points.iter().enumerate() {
        for (s, xc) in proj.iter_mut().zip(coords.chunks_exact(grid.dim)) {
            *s = a.iter().zip(xc).map(|(ac, xc)| ac * xc).sum();
        }
        for bi in 0..nb {
            let b = grid.b_axis.value(bi);
            let mut acc = 0.0;
            for (s, w) in proj.iter().zip(&wf) {
                if *w != 0.0 {
                    acc += w * psi(s - b);
                }
            }
            values[ai * nb + bi] = acc;
        }
    }
    Ok(RidgeletCoefficients {
        grid: grid.clone(),
        values,
    })
}

/// Node coordinates (row-major, dim-interleaved) and quadrature-weighted
/// values of a sampled function.
fn flatten_weighted(f: &GridValues) -> (Vec<f64>, Vec<f64>) {
    match f.axes() {
        [ax] => {
            let coords = ax.values();
            let wf = (0..ax.count)
                .map(|i| ax.quad_weight(i) * f.at_1d(i))
                .collect();
            (coords, wf)
        }
        [ax, ay] => {
            let mut coords = Vec::with_capacity(2 * ax.count * ay.count);
            let mut wf = Vec::with_capacity(ax.count * ay.count);
            for i in 0..ax.count {
                for j in 0..ay.count {
                    coords.push(ax.value(i));
                    coords.push(ay.value(j));
                    wf.push(ax.quad_weight(i) * ay.quad_weight(j) * f.at_2d(i, j));
                }
            }
            (coords, wf)
        }
        _ => unreachable!("GridValues enforces one or two axes"),
    }
}

/// Dual transform: (1/K) ∬ T(a,b) η(a·x − b) da db, quadrature over the
/// coefficient grid, sampled on the given x-axes. Refuses coefficients that
/// have not decayed at the truncation boundary.
pub fn dual_ridgelet(
    coeffs: &RidgeletCoefficients,
    eta: impl Fn(f64) -> f64,
    k: f64,
    x_axes: &[Axis],
) -> Result<GridValues> {
    if x_axes.len() != coeffs.grid.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} x-axes for a {}-dimensional grid",
            x_axes.len(),
            coeffs.grid.dim()
        )));
    }
    if !(k.is_finite()) || k == 0.0 {
        return Err(Error::InadmissiblePair { k });
    }
    let peak = coeffs.max_abs();
    if peak > 0.0 {
        let ratio = coeffs.boundary_max_abs() / peak;
        if ratio > BOUNDARY_DECAY {
            return Err(Error::BoundaryMass { ratio });
        }
    }
    let eval = |x: &[f64]| -> f64 {
        let nb = coeffs.grid.b_axis.count;
        let mut acc = 0.0;
        for (ai, a) in coeffs.grid.a_points.iter().enumerate() {
            let s: f64 = a.iter().zip(x).map(|(ac, xc)| ac * xc).sum();
            let am = coeffs.grid.a_measure[ai];
            for bi in 0..nb {
                let c = coeffs.values[ai * nb + bi];
                if c != 0.0 {
                    let w = am * coeffs.grid.b_axis.quad_weight(bi);
                    acc += c * w * eta(s - coeffs.grid.b_axis.value(bi));
                }
            }
        }
        acc / k
    };
    match x_axes {
        [ax] => GridValues::sample_1d(*ax, |x| eval(&[x])),
        [ax, ay] => GridValues::sample_2d(*ax, *ay, |x, y| eval(&[x, y])),
        _ => Err(Error::InvalidParameter(
            "dual transform supports one or two x-axes".into(),
        )),
    }
}

/// Admissibility constant K of an analysis/synthesis pair in dimension m,
/// from the standard Fourier pairing (2π)^{m-1} ∫ ψ̂(ω) η̂(ω) |ω|^{-m} dω.
/// Spectra are obtained numerically (both functions are real and even, so
/// the cosine transform suffices), and the ω quadrature uses midpoint nodes,
/// which keeps the singular ω = 0 slice out of the sum.
pub fn admissibility_constant(
    psi: impl Fn(f64) -> f64,
    eta: impl Fn(f64) -> f64,
    m: usize,
) -> Result<f64> {
    if !(1..=2).contains(&m) {
        return Err(Error::InvalidParameter(format!(
            "admissibility is computed for dimensions 1 and 2, got {m}"
        )));
    }
    const U_HALF: f64 = 12.0;
    const DU: f64 = 0.01;
    const OMEGA_MAX: f64 = 30.0;
    const DOMEGA: f64 = 5e-3;
    let u_axis = Axis::symmetric(U_HALF, DU)?;
    let u_nodes = u_axis.values();
    let psi_samples: Vec<f64> = u_nodes.iter().map(|&u| psi(u)).collect();
    let eta_samples: Vec<f64> = u_nodes.iter().map(|&u| eta(u)).collect();
    let spectrum = |samples: &[f64], omega: f64| -> f64 {
        let mut acc = 0.0;
        for (i, (&u, &v)) in u_nodes.iter().zip(samples).enumerate() {
            acc += u_axis.quad_weight(i) * v * (omega * u).cos();
        }
        acc
    };
    let n_omega = (OMEGA_MAX / DOMEGA) as usize;
    let mut integral = 0.0;
    for i in 0..n_omega {
        let omega = (i as f64 + 0.5) * DOMEGA;
        let pair = spectrum(&psi_samples, omega) * spectrum(&eta_samples, omega);
        integral += pair * omega.powi(-(m as i32)) * DOMEGA;
    }
    // Even integrand: double the half-line sum.
    let k = (2.0 * std::f64::consts::PI).powi(m as i32 - 1) * 2.0 * integral;
    if !k.is_finite() || k.abs() < 1e-8 {
        return Err(Error::InadmissiblePair { k });
    }
    Ok(k)
}

/// Greedy discretization: keep the J cells of largest |coefficient|·measure,
/// each becoming one hidden unit with output weight coefficient·measure / K.
/// Ties break on (a, b) lexicographic order, so the result is deterministic.
pub fn discretize_to_network(
    coeffs: &RidgeletCoefficients,
    j: usize,
    k: f64,
) -> Result<ShallowNet> {
    if j == 0 || j > coeffs.grid.len() {
        return Err(Error::InvalidParameter(format!(
            "unit count must be in 1..={}, got {j}",
            coeffs.grid.len()
        )));
    }
    if !(k.is_finite()) || k == 0.0 {
        return Err(Error::InadmissiblePair { k });
    }
    if coeffs.max_abs() == 0.0 {
        return Err(Error::InvalidParameter(
            "all ridgelet coefficients vanish, nothing to discretize".into(),
        ));
    }
    let nb = coeffs.grid.b_axis.count;
    let mut cells: Vec<(usize, usize, f64)> = Vec::with_capacity(coeffs.grid.len());
    for ai in 0..coeffs.grid.a_points.len() {
        for bi in 0..nb {
            let mass = coeffs.at(ai, bi) * coeffs.grid.cell_measure(ai, bi);
            cells.push((ai, bi, mass));
        }
    }
    cells.sort_by(|x, y| {
        y.2.abs()
            .partial_cmp(&x.2.abs())
            .expect("coefficients are finite")
            .then_with(|| {
                let a_x = &coeffs.grid.a_points[x.0];
                let a_y = &coeffs.grid.a_points[y.0];
                for d in 0..coeffs.grid.dim {
                    match a_x[d].partial_cmp(&a_y[d]).expect("a-samples are finite") {
                        std::cmp::Ordering::Equal => continue,
                        other => return other,
                    }
                }
                x.1.cmp(&y.1)
            })
    });
    let dim = coeffs.grid.dim;
    let mut in_weights = DMatrix::zeros(j, dim);
    let mut in_offsets = DVector::zeros(j);
    let mut out_weights = DMatrix::zeros(1, j);
    for (row, &(ai, bi, mass)) in cells.iter().take(j).enumerate() {
        in_weights.row_mut(row).copy_from_slice(
            coeffs.grid.a_points[ai].as_slice(),
        );
        in_offsets[row] = coeffs.grid.b_axis.value(bi);
        out_weights[(0, row)] = mass / k;
    }
    ShallowNet::new(
        in_weights,
        in_offsets,
        out_weights,
        DVector::zeros(1),
        Activation::Gaussian,
    )
}

/// Window the scalar 1-D action of a map and sample it: x ↦ Φ(x)·w(x).
fn windowed_map_samples(
    map: &TransportMap,
    axis: &Axis,
    half_width: f64,
) -> Result<GridValues> {
    let mut values = Vec::with_capacity(axis.count);
    for x in axis.values() {
        let y = map.evaluate_scalar(x)?;
        values.push(y * cosine_window(half_width, 0.8, x));
    }
    GridValues::new(vec![*axis], values)
}

/// Two-layer network approximating Φ1 ∘ Φ0 for scalar maps: each layer is
/// the greedy discretization of its own windowed ridgelet transform, and the
/// second layer's input weights come out as the exact products a1·c0 of its
/// ridge directions with the first layer's output weights.
#[allow(clippy::too_many_arguments)]
pub fn stacked_network_from_maps(
    phi0: &TransportMap,
    phi1: &TransportMap,
    x_axis0: &Axis,
    grid0: &RidgeletGrid,
    x_axis1: &Axis,
    grid1: &RidgeletGrid,
    half_width: f64,
    j0: usize,
    j1: usize,
) -> Result<TwoLayerNet> {
    if grid0.dim() != 1 || grid1.dim() != 1 {
        return Err(Error::InvalidParameter(
            "stacked synthesis works on scalar maps".into(),
        ));
    }
    let k = admissibility_constant(psi_gauss_d2, eta_gauss, 1)?;
    let f0 = windowed_map_samples(phi0, x_axis0, half_width)?;
    let net0 = discretize_to_network(&ridgelet_transform(&f0, psi_gauss_d2, grid0)?, j0, k)?;
    // The second transform can only be trusted where its x-grid covered the
    // first layer's actual range.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for x in x_axis0.values() {
        let y = net0.eval_scalar(x)?;
        lo = lo.min(y);
        hi = hi.max(y);
    }
    if lo < x_axis1.start || hi > x_axis1.end() {
        return Err(Error::RangeNotCovered { lo, hi });
    }
    let f1 = windowed_map_samples(phi1, x_axis1, half_width)?;
    let net1 = discretize_to_network(&ridgelet_transform(&f1, psi_gauss_d2, grid1)?, j1, k)?;
    TwoLayerNet::from_nets(&net0, &net1)
}
