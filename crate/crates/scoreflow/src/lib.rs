//! Score-driven transport maps and their flows.
//!
//! A denoising map pulls a noisy point back toward the data distribution by
//! following the score (the gradient of the log density) of a smoothed version
//! of that distribution. This crate provides the closed-form versions of those
//! maps for Gaussians and Gaussian mixtures, their empirical mean-shift
//! counterpart on particle clouds, the flows obtained by composing or
//! integrating them, and two constructive bridges to shallow networks: a
//! numerical ridgelet transform that synthesizes network weights, and a
//! trainable one-hidden-layer autoencoder with exact stacking/decoding.
//!
//! The library is the primary interface; `examples/` holds one runnable
//! program per capability, and a thin `scoreflow` binary reproduces the
//! experiment tables (`orbit`, `variance-decay`, `entropy`, `ridgelet`,
//! `swissroll`, `verify`).
//!
//! ```
//! use scoreflow::{GaussianMeasure, continuous_dae_gaussian};
//! use nalgebra::{DMatrix, DVector};
//!
//! let g = GaussianMeasure::new(
//!     DVector::zeros(2),
//!     DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0])),
//! ).unwrap();
//! // Transport along the score flow until the short axis has nearly collapsed.
//! let map = continuous_dae_gaussian(&g, 0.45).unwrap();
//! let y = map.evaluate(&DVector::from_vec(vec![1.0, 1.0])).unwrap();
//! assert!(y[1].abs() < 0.4);
//! ```
//!
//! All operations are pure functions over immutable values; everything is
//! deterministic given the seeds that appear in the signatures.

pub mod analytic;
pub mod cli;
pub mod datasets;
pub mod empirical;
pub mod error;
pub mod flows;
pub mod grid;
pub mod linalg;
pub mod measures;
pub mod network;
pub mod ridgelet;
pub mod stacking;
pub mod transport;
pub mod verify;

pub use analytic::{
    anisotropic_dae_gaussian, cdae_velocity_gmm, continuous_dae_gaussian,
    continuous_dae_gaussian_pushforward, continuous_dae_gmm_pushforward, ordinary_dae_gaussian,
    ordinary_dae_gaussian_pushforward, ordinary_dae_gmm, responsibilities, ResponsibilityMode,
    ResponsibilityProfile,
};
pub use empirical::{anisotropic_mean_shift, empirical_score, mean_shift_dae};
pub use error::{Error, Result};
pub use flows::{
    backward_heat_residual, compose_dae_gaussian, compose_dae_particles, composed_gaussian_map,
    entropy_along_flow, entropy_along_flow_gmm, final_value_recover, final_value_recover_gmm,
    forward_heat_residual, integrate_cdae_gmm, integrate_cdae_particles, semigroup_defect,
    variance_decay_curves, DensityGrid, FlowMode, FlowTrajectory, Snapshot,
};
pub use grid::{Axis, GridValues};
pub use measures::{
    entropy_gaussian, gmm_log_density, gmm_score, heat_convolve_gaussian, heat_convolve_gmm,
    sample_gmm, DiffusionCoefficient, GaussianMeasure, GaussianMixture, ParticleCloud,
};
pub use network::{Activation, ShallowNet, TwoLayerNet};
pub use ridgelet::{
    admissibility_constant, cosine_window, discretize_to_network, dual_ridgelet, eta_gauss,
    psi_gauss_d2, ridgelet_transform, stacked_network_from_maps, RidgeletCoefficients,
    RidgeletGrid,
};
pub use datasets::{grid_cloud, swiss_roll};
pub use stacking::{
    composition_baseline, conjugacy_defect_continuous, conjugacy_defect_linear, decode_stack,
    stack_daes, train_shallow_dae, CompositionBaseline, EncoderDecoderPair, LayerParams,
    StackedDae, TrainRecord, TrainedDae,
};
pub use transport::{pushforward_affine, pushforward_particles, TransportMap};
