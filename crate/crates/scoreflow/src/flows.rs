//! Time evolution built from the single-step maps: repeated ordinary steps
//! with retraining between them, the continuous-time orbit ODE, semigroup
//! and small-step-limit diagnostics, heat-equation residuals on density
//! grids, and the closed-form variance and entropy decay tables.

use nalgebra::{DMatrix, DVector};

use crate::analytic::{
    cdae_velocity_gmm, continuous_dae_gaussian, continuous_dae_gaussian_pushforward,
    ordinary_dae_gaussian, ordinary_dae_gaussian_pushforward,
};
use crate::empirical::mean_shift_dae_batch;
use crate::error::{Error, Result};
use crate::grid::{Axis, GridValues};
use crate::measures::{
    entropy_gaussian, heat_convolve_gaussian, heat_convolve_gmm, DiffusionCoefficient,
    GaussianMeasure, GaussianMixture, ParticleCloud,
};
use crate::transport::{pushforward_affine, TransportMap};

/// How a trajectory was produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowMode {
    /// A single map evaluated at growing bandwidth.
    Ordinary,
    /// Repeated ordinary steps of width tau, each against the current state.
    Composed { tau: f64 },
    /// Fixed-step integration of the continuous dynamics.
    Continuous { dt: f64 },
}

/// One recorded state along a flow.
#[derive(Debug, Clone)]
pub enum Snapshot {
    Cloud(ParticleCloud),
    Gaussian(GaussianMeasure),
}

impl Snapshot {
    pub fn dim(&self) -> usize {
        match self {
            Snapshot::Cloud(c) => c.dim(),
            Snapshot::Gaussian(g) => g.dim(),
        }
    }

    pub fn cloud(&self) -> Option<&ParticleCloud> {
        match self {
            Snapshot::Cloud(c) => Some(c),
            Snapshot::Gaussian(_) => None,
        }
    }

    pub fn gaussian(&self) -> Option<&GaussianMeasure> {
        match self {
            Snapshot::Gaussian(g) => Some(g),
            Snapshot::Cloud(_) => None,
        }
    }
}

/// A time-indexed sequence of states, one snapshot per recorded time.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    times: Vec<f64>,
    snapshots: Vec<Snapshot>,
    mode: FlowMode,
}

impl FlowTrajectory {
    pub fn new(times: Vec<f64>, snapshots: Vec<Snapshot>, mode: FlowMode) -> Result<Self> {
        if times.is_empty() || times[0] != 0.0 {
            return Err(Error::InvalidParameter(
                "trajectory times must start at 0".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "trajectory times must be strictly increasing".into(),
            ));
        }
        if times.len() != snapshots.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} times but {} snapshots",
                times.len(),
                snapshots.len()
            )));
        }
        let dim = snapshots[0].dim();
        if snapshots.iter().any(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch(
                "snapshot dimensions differ along the trajectory".into(),
            ));
        }
        Ok(Self {
            times,
            snapshots,
            mode,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn mode(&self) -> FlowMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory is never empty")
    }
}

/// Density values on a uniform grid. The constructor insists the grid
/// actually captures the mass of whatever it claims to represent, so a
/// window that clips the support is rejected up front instead of quietly
/// corrupting a finite-difference stencil downstream.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    grid: GridValues,
    mass: f64,
}

/// Trapezoid mass may deviate from 1 by at most this much.
const MASS_TOLERANCE: f64 = 0.02;

impl DensityGrid {
    pub fn new(grid: GridValues) -> Result<Self> {
        if grid.values().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter(
                "density values must be nonnegative".into(),
            ));
        }
        let mass = grid.integral();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::GridTooCoarse { mass });
        }
        Ok(Self { grid, mass })
    }

    /// Sample a univariate Gaussian density on the axis.
    pub fn gaussian_1d(g: &GaussianMeasure, axis: Axis) -> Result<Self> {
        if g.dim() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "expected a univariate measure, got dimension {}",
                g.dim()
            )));
        }
        let mut values = Vec::with_capacity(axis.count);
        for x in axis.values() {
            values.push(g.log_density(&DVector::from_element(1, x))?.exp());
        }
        Self::new(GridValues::new(vec![axis], values)?)
    }

    pub fn grid(&self) -> &GridValues {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        self.grid.values()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }
}

fn check_step(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )));
    }
    Ok(())
}

/// Repeated empirical denoising: each step mean-shifts every particle with
/// bandwidth tau against the cloud produced by the previous step, and that
/// mapped cloud is the next state. All L+1 clouds are recorded.
pub fn compose_dae_particles(cloud0: &ParticleCloud, tau: f64, l: usize) -> Result<FlowTrajectory> {
    check_step("tau", tau)?;
    if l == 0 {
        return Err(Error::InvalidParameter(
            "composition needs at least one step".into(),
        ));
    }
    let mut times = Vec::with_capacity(l + 1);
    let mut snapshots = Vec::with_capacity(l + 1);
    times.push(0.0);
    snapshots.push(Snapshot::Cloud(cloud0.clone()));
    let mut current = cloud0.clone();
    for step in 1..=l {
        let mapped = mean_shift_dae_batch(&current, tau, current.points())?;
        current = ParticleCloud::new(mapped, current.weights().clone())?;
        times.push(step as f64 * tau);
        snapshots.push(Snapshot::Cloud(current.clone()));
    }
    FlowTrajectory::new(times, snapshots, FlowMode::Composed { tau })
}

/// Closed-form Gaussian analogue of `compose_dae_particles`: each step is
/// the exact affine map of the Gaussian reached so far, so the sequence has
/// no sampling noise.
pub fn compose_dae_gaussian(g0: &GaussianMeasure, tau: f64, l: usize) -> Result<FlowTrajectory> {
    check_step("tau", tau)?;
    if l == 0 {
        return Err(Error::InvalidParameter(
            "composition needs at least one step".into(),
        ));
    }
    let mut times = Vec::with_capacity(l + 1);
    let mut snapshots = Vec::with_capacity(l + 1);
    times.push(0.0);
    snapshots.push(Snapshot::Gaussian(g0.clone()));
    let mut g = g0.clone();
    for step in 1..=l {
        let map = ordinary_dae_gaussian(&g, tau)?;
        g = pushforward_affine(&g, &map)?;
        times.push(step as f64 * tau);
        snapshots.push(Snapshot::Gaussian(g.clone()));
    }
    FlowTrajectory::new(times, snapshots, FlowMode::Composed { tau })
}

/// The L-step Gaussian composition as one reusable map: the chain of the
/// per-step affine maps, each built from the Gaussian its predecessors
/// produce.
pub fn composed_gaussian_map(g0: &GaussianMeasure, tau: f64, l: usize) -> Result<TransportMap> {
    check_step("tau", tau)?;
    if l == 0 {
        return Err(Error::InvalidParameter(
            "composition needs at least one step".into(),
        ));
    }
    let mut maps = Vec::with_capacity(l);
    let mut g = g0.clone();
    for _ in 0..l {
        let map = ordinary_dae_gaussian(&g, tau)?;
        g = pushforward_affine(&g, &map)?;
        maps.push(map);
    }
    TransportMap::composed(maps)
}

/// Per-step standard deviations of the univariate composed flow:
/// sigma <- sigma / (1 + tau / sigma^2), written in a form that survives
/// sigma underflowing to zero. Entry 0 is sqrt(sigma0_sq).
pub fn composed_std_steps(sigma0_sq: f64, tau: f64, steps: usize) -> Vec<f64> {
    let mut s = sigma0_sq.sqrt();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(s);
    for _ in 0..steps {
        s = s * s * s / (s * s + tau);
        out.push(s);
    }
    out
}

fn single_point_cloud(x: &DVector<f64>) -> Result<ParticleCloud> {
    ParticleCloud::from_points(DMatrix::from_column_slice(x.len(), 1, x.as_slice()))
}

fn rk4_step(
    gmm: &GaussianMixture,
    x: &DVector<f64>,
    t: f64,
    h: f64,
) -> Result<DVector<f64>> {
    let k1 = cdae_velocity_gmm(gmm, t, x)?;
    let k2 = cdae_velocity_gmm(gmm, t + 0.5 * h, &(x + &k1 * (0.5 * h)))?;
    let k3 = cdae_velocity_gmm(gmm, t + 0.5 * h, &(x + &k2 * (0.5 * h)))?;
    let k4 = cdae_velocity_gmm(gmm, t + h, &(x + &k3 * h))?;
    Ok(x + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0))
}

/// Classical fixed-step fourth-order integration of the single orbit
/// dx/dt = v(t, x) with the exact mixture velocity. The final step is
/// shortened so the orbit lands exactly on t_end. Integration refuses to
/// start if t_end reaches the earliest covariance collapse.
pub fn integrate_cdae_gmm(
    gmm0: &GaussianMixture,
    x0: &DVector<f64>,
    t_end: f64,
    dt: f64,
) -> Result<FlowTrajectory> {
    check_step("dt", dt)?;
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "t_end must be positive and finite, got {t_end}"
        )));
    }
    if x0.len() != gmm0.dim() {
        return Err(Error::DimensionMismatch(format!(
            "start point has dimension {}, mixture has {}",
            x0.len(),
            gmm0.dim()
        )));
    }
    let collapse_at = 0.5 * gmm0.min_cov_eigenvalue();
    if t_end >= collapse_at - 1e-6 {
        return Err(Error::CovarianceCollapse {
            t: t_end,
            collapse_at,
        });
    }
    let mut times = vec![0.0];
    let mut snapshots = vec![Snapshot::Cloud(single_point_cloud(x0)?)];
    let mut x = x0.clone();
    let n_full = (t_end / dt).floor() as usize;
    for i in 0..n_full {
        x = rk4_step(gmm0, &x, i as f64 * dt, dt)?;
        times.push((i + 1) as f64 * dt);
        snapshots.push(Snapshot::Cloud(single_point_cloud(&x)?));
    }
    let reached = n_full as f64 * dt;
    let remainder = t_end - reached;
    if remainder > 1e-12 * t_end {
        x = rk4_step(gmm0, &x, reached, remainder)?;
        times.push(t_end);
        snapshots.push(Snapshot::Cloud(single_point_cloud(&x)?));
    }
    FlowTrajectory::new(times, snapshots, FlowMode::Continuous { dt })
}

/// Interacting-particle approximation of the continuous dynamics: every
/// particle moves by an explicit Euler step of the kernel density score of
/// the cloud frozen at step start. bandwidth_h is the kernel variance,
/// playing the same role as the smoothing time in the empirical map; with
/// a much smaller kernel the cloud granulates into its own modes at the
/// kernel scale and the flow freezes before any macroscopic contraction.
/// Deterministic: the scheme draws no randomness.
pub fn integrate_cdae_particles(
    cloud0: &ParticleCloud,
    t_end: f64,
    dt: f64,
    bandwidth_h: f64,
) -> Result<FlowTrajectory> {
    check_step("dt", dt)?;
    check_step("bandwidth_h", bandwidth_h)?;
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "t_end must be positive and finite, got {t_end}"
        )));
    }
    let t_kernel = bandwidth_h;
    let mut times = vec![0.0];
    let mut snapshots = vec![Snapshot::Cloud(cloud0.clone())];
    let mut current = cloud0.clone();
    let advance = |cloud: &ParticleCloud, h: f64| -> Result<ParticleCloud> {
        let shifted = mean_shift_dae_batch(cloud, t_kernel, cloud.points())?;
        // Euler step along the score (shift divided by the kernel variance).
        let points = cloud.points() + (shifted - cloud.points()) * (h / t_kernel);
        ParticleCloud::new(points, cloud.weights().clone())
    };
    let n_full = (t_end / dt).floor() as usize;
    for i in 0..n_full {
        current = advance(&current, dt)?;
        times.push((i + 1) as f64 * dt);
        snapshots.push(Snapshot::Cloud(current.clone()));
    }
    let reached = n_full as f64 * dt;
    let remainder = t_end - reached;
    if remainder > 1e-12 * t_end {
        current = advance(&current, remainder)?;
        times.push(t_end);
        snapshots.push(Snapshot::Cloud(current.clone()));
    }
    FlowTrajectory::new(times, snapshots, FlowMode::Continuous { dt })
}

/// Largest deviation, over the given points, between running the continuous
/// Gaussian flow to time s directly and running it to t first and then from
/// the time-t law onward. Test points are matrix columns.
pub fn semigroup_defect(
    g0: &GaussianMeasure,
    t: f64,
    s: f64,
    test_points: &DMatrix<f64>,
) -> Result<f64> {
    if !(0.0 <= t && t <= s) {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= t <= s, got t = {t}, s = {s}"
        )));
    }
    if test_points.nrows() != g0.dim() {
        return Err(Error::DimensionMismatch(format!(
            "test points have dimension {}, measure has {}",
            test_points.nrows(),
            g0.dim()
        )));
    }
    let phi_0t = continuous_dae_gaussian(g0, t)?;
    let phi_0s = continuous_dae_gaussian(g0, s)?;
    let g_t = continuous_dae_gaussian_pushforward(g0, t)?;
    let phi_ts = continuous_dae_gaussian(&g_t, s - t)?;
    let mut defect = 0.0_f64;
    for col in test_points.column_iter() {
        let x = col.clone_owned();
        let via_t = phi_ts.evaluate(&phi_0t.evaluate(&x)?)?;
        let direct = phi_0s.evaluate(&x)?;
        defect = defect.max((via_t - direct).norm());
    }
    Ok(defect)
}

/// Relative residual of a heat equation on a stack of equally spaced
/// density slices: max |dp/dt + lap p| / max |lap p| over interior nodes
/// when `backward`, and with the Laplacian sign flipped otherwise. Time
/// derivatives are central differences across neighbouring slices, space
/// derivatives second differences within a slice.
pub fn heat_residual_from_slices(
    slices: &[DensityGrid],
    dt: f64,
    backward: bool,
) -> Result<f64> {
    check_step("dt", dt)?;
    if slices.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 time slices for a central difference, got {}",
            slices.len()
        )));
    }
    let axis = slices[0].grid().axes()[0];
    if slices
        .iter()
        .any(|s| s.grid().dim() != 1 || s.grid().axes()[0] != axis)
    {
        return Err(Error::DimensionMismatch(
            "all slices must share one spatial axis".into(),
        ));
    }
    let sign = if backward { 1.0 } else { -1.0 };
    let dx2 = axis.step * axis.step;
    let mut max_residual = 0.0_f64;
    let mut max_laplacian = 0.0_f64;
    for i in 1..slices.len() - 1 {
        let prev = slices[i - 1].values();
        let here = slices[i].values();
        let next = slices[i + 1].values();
        for j in 1..axis.count - 1 {
            let dpdt = (next[j] - prev[j]) / (2.0 * dt);
            let lap = (here[j + 1] - 2.0 * here[j] + here[j - 1]) / dx2;
            max_residual = max_residual.max((dpdt + sign * lap).abs());
            max_laplacian = max_laplacian.max(lap.abs());
        }
    }
    if max_laplacian == 0.0 {
        return Err(Error::InvalidParameter(
            "slices are spatially flat, the residual is undefined".into(),
        ));
    }
    Ok(max_residual / max_laplacian)
}

fn density_slices_1d(
    g0: &GaussianMeasure,
    t_axis: &Axis,
    x_axis: &Axis,
    flow: impl Fn(f64) -> Result<GaussianMeasure>,
) -> Result<Vec<DensityGrid>> {
    if g0.dim() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "residual checks are univariate, got dimension {}",
            g0.dim()
        )));
    }
    t_axis
        .values()
        .iter()
        .map(|&t| DensityGrid::gaussian_1d(&flow(t)?, *x_axis))
        .collect()
}

/// Relative finite-difference residual of dp/dt = -lap p along the
/// continuous denoising flow of a univariate Gaussian.
pub fn backward_heat_residual(
    g0: &GaussianMeasure,
    t_axis: &Axis,
    x_axis: &Axis,
) -> Result<f64> {
    let slices = density_slices_1d(g0, t_axis, x_axis, |t| {
        continuous_dae_gaussian_pushforward(g0, t)
    })?;
    heat_residual_from_slices(&slices, t_axis.step, true)
}

/// Relative finite-difference residual of dp/dt = +lap p along plain heat
/// smoothing of a univariate Gaussian. Passing at the same tolerance as the
/// backward check rules out a sign-insensitive stencil.
pub fn forward_heat_residual(
    g0: &GaussianMeasure,
    t_axis: &Axis,
    x_axis: &Axis,
) -> Result<f64> {
    let d = DiffusionCoefficient::isotropic(1, 1.0)?;
    let slices = density_slices_1d(g0, t_axis, x_axis, |t| heat_convolve_gaussian(g0, t, &d))?;
    heat_residual_from_slices(&slices, t_axis.step, false)
}

/// Recover the time-t law of the backward flow from its terminal law by
/// heat smoothing over the remaining time: the terminal covariance gains
/// 2(t_terminal - t) on the diagonal.
pub fn final_value_recover(
    g_terminal: &GaussianMeasure,
    t_terminal: f64,
    t: f64,
) -> Result<GaussianMeasure> {
    if !(0.0 <= t && t <= t_terminal) {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= t <= t_terminal, got t = {t}, t_terminal = {t_terminal}"
        )));
    }
    if t == t_terminal {
        return Ok(g_terminal.clone());
    }
    let d = DiffusionCoefficient::isotropic(g_terminal.dim(), 1.0)?;
    heat_convolve_gaussian(g_terminal, t_terminal - t, &d)
}

/// Mixture version of `final_value_recover`: components are smoothed
/// individually, weights are untouched.
pub fn final_value_recover_gmm(
    gmm_terminal: &GaussianMixture,
    t_terminal: f64,
    t: f64,
) -> Result<GaussianMixture> {
    if !(0.0 <= t && t <= t_terminal) {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= t <= t_terminal, got t = {t}, t_terminal = {t_terminal}"
        )));
    }
    if t == t_terminal {
        return Ok(gmm_terminal.clone());
    }
    let d = DiffusionCoefficient::isotropic(gmm_terminal.dim(), 1.0)?;
    heat_convolve_gmm(gmm_terminal, t_terminal - t, &d)
}

/// Closed-form univariate variance columns for the three flow families.
#[derive(Debug, Clone)]
pub struct VarianceDecayTable {
    pub times: Vec<f64>,
    /// max(sigma0^2 - 2t, 0): linear decay, hits zero at sigma0^2 / 2.
    pub continuous: Vec<f64>,
    /// sigma0^2 / (1 + t / sigma0^2)^2: a single map evaluated at bandwidth t.
    pub ordinary: Vec<f64>,
    pub tau_list: Vec<f64>,
    /// composed[i][j]: variance after floor(times[j] / tau_list[i]) steps of
    /// the recurrence.
    pub composed: Vec<Vec<f64>>,
}

pub fn variance_decay_curves(
    sigma0_sq: f64,
    tau_list: &[f64],
    t_grid: &[f64],
) -> Result<VarianceDecayTable> {
    if !(sigma0_sq > 0.0) || !sigma0_sq.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sigma0_sq must be positive and finite, got {sigma0_sq}"
        )));
    }
    for &tau in tau_list {
        check_step("tau", tau)?;
    }
    if t_grid.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidParameter(
            "evaluation times must be nonnegative and finite".into(),
        ));
    }
    let continuous = t_grid
        .iter()
        .map(|&t| (sigma0_sq - 2.0 * t).max(0.0))
        .collect();
    let ordinary = t_grid
        .iter()
        .map(|&t| {
            let shrink = 1.0 + t / sigma0_sq;
            sigma0_sq / (shrink * shrink)
        })
        .collect();
    let mut composed = Vec::with_capacity(tau_list.len());
    for &tau in tau_list {
        let max_steps = t_grid
            .iter()
            .map(|&t| (t / tau).floor() as usize)
            .max()
            .unwrap_or(0);
        let stds = composed_std_steps(sigma0_sq, tau, max_steps);
        composed.push(
            t_grid
                .iter()
                .map(|&t| {
                    let s = stds[(t / tau).floor() as usize];
                    s * s
                })
                .collect(),
        );
    }
    Ok(VarianceDecayTable {
        times: t_grid.to_vec(),
        continuous,
        ordinary,
        tau_list: tau_list.to_vec(),
        composed,
    })
}

/// Entropy values (to the additive dimension constant dropped by
/// `entropy_gaussian`) along the continuous flow and under a single
/// ordinary map of growing bandwidth. Row differences are exact entropy
/// changes since the constant cancels.
#[derive(Debug, Clone)]
pub struct EntropyTable {
    pub times: Vec<f64>,
    pub continuous: Vec<f64>,
    pub ordinary: Vec<f64>,
}

pub fn entropy_along_flow(g0: &GaussianMeasure, t_grid: &[f64]) -> Result<EntropyTable> {
    let mut continuous = Vec::with_capacity(t_grid.len());
    let mut ordinary = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        continuous.push(entropy_gaussian(&continuous_dae_gaussian_pushforward(
            g0, t,
        )?)?);
        let pushed = if t == 0.0 {
            g0.clone()
        } else {
            ordinary_dae_gaussian_pushforward(g0, t)?
        };
        ordinary.push(entropy_gaussian(&pushed)?);
    }
    Ok(EntropyTable {
        times: t_grid.to_vec(),
        continuous,
        ordinary,
    })
}

/// Mixture entropies along the same two flows, component-wise: each entry
/// is the weight-averaged component entropy. The mixture-weight entropy
/// term is a time-independent constant and is dropped, consistent with the
/// additive convention of `entropy_gaussian`; differences in t are
/// unaffected. Both columns move every component with its own map, which is
/// the regime where the per-cluster closed forms describe the mixture.
pub fn entropy_along_flow_gmm(gmm0: &GaussianMixture, t_grid: &[f64]) -> Result<EntropyTable> {
    let mut continuous = Vec::with_capacity(t_grid.len());
    let mut ordinary = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let mut h_cont = 0.0;
        let mut h_ord = 0.0;
        for (weight, component) in gmm0.weights().iter().zip(gmm0.components()) {
            h_cont += weight * entropy_gaussian(&continuous_dae_gaussian_pushforward(component, t)?)?;
            let pushed = if t == 0.0 {
                component.clone()
            } else {
                ordinary_dae_gaussian_pushforward(component, t)?
            };
            h_ord += weight * entropy_gaussian(&pushed)?;
        }
        continuous.push(h_cont);
        ordinary.push(h_ord);
    }
    Ok(EntropyTable {
        times: t_grid.to_vec(),
        continuous,
        ordinary,
    })
}
