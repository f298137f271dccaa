//! Shallow denoising autoencoders trained by gradient descent, stacks of
//! them, the decoded ground-space transport, and conjugacy defects in the
//! linear settings where closed forms exist.
//!
//! A shallow DAE g(x) = C eta(Ax - b) + d is trained to reconstruct clean
//! points from corrupted ones. Its hidden activation vector is the encoder,
//! the output linear map the decoder, so decode(encode(x)) is the full
//! network by definition. Stacking trains layer l+1 on the encoded features
//! of layer l; decoding a stack applies every encoder and then every decoder
//! in reverse order, which for a single layer is exactly that layer's own
//! network.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analytic::{anisotropic_dae_gaussian, continuous_dae_gaussian};
use crate::error::{Error, Result};
use crate::measures::{DiffusionCoefficient, GaussianMeasure, ParticleCloud};
use crate::network::{Activation, ShallowNet};
use crate::transport::{pushforward_particles, TransportMap};

/// Hyperparameters of one trained layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub hidden: usize,
    pub t_noise: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for LayerParams {
    fn default() -> Self {
        Self {
            hidden: 32,
            t_noise: 0.05,
            epochs: 600,
            lr: 0.05,
        }
    }
}

/// Training metadata kept alongside a trained layer.
///
/// `losses[e]` is the empirical loss on epoch e's corrupted batch before
/// that epoch's update and `losses_after[e]` the loss on the same batch
/// after it. Because the corruption is redrawn every epoch, consecutive
/// entries of `losses` compare different batches and wiggle by the
/// resampling noise; the matched pair is what witnesses that each update
/// actually descends the objective it was computed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub seed: u64,
    pub t_noise: f64,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub losses: Vec<f64>,
    pub losses_after: Vec<f64>,
}

/// A trained shallow DAE together with its training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedDae {
    pub net: ShallowNet,
    pub record: TrainRecord,
}

impl TrainedDae {
    /// The net split at its hidden layer.
    pub fn pair(&self) -> EncoderDecoderPair {
        EncoderDecoderPair::Network(self.net.clone())
    }
}

/// One encoder/decoder stage of a stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EncoderDecoderPair {
    /// Trained net split at the hidden layer: encode(x) = eta(Ax - b),
    /// decode(h) = Ch + d.
    Network(ShallowNet),
    /// Columns of `g` are orthonormal; encode(x) = Gx, decode(w) = G'w.
    Linear { g: DMatrix<f64> },
}

impl EncoderDecoderPair {
    /// Network pair. The decoder must land back in the encoder's input
    /// space, so the net has to be square.
    pub fn network(net: ShallowNet) -> Result<Self> {
        if net.dim_out() != net.dim_in() {
            return Err(Error::DimensionMismatch(format!(
                "autoencoder must reconstruct its input space: {} in, {} out",
                net.dim_in(),
                net.dim_out()
            )));
        }
        Ok(Self::Network(net))
    }

    /// Linear pair from a matrix with orthonormal columns.
    pub fn linear(g: DMatrix<f64>) -> Result<Self> {
        let dev = orthonormality_defect(&g);
        if dev > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "encoder columns are not orthonormal: max Gram deviation {dev:.3e}"
            )));
        }
        Ok(Self::Linear { g })
    }

    pub fn dim_in(&self) -> usize {
        match self {
            Self::Network(net) => net.dim_in(),
            Self::Linear { g } => g.ncols(),
        }
    }

    pub fn dim_feature(&self) -> usize {
        match self {
            Self::Network(net) => net.hidden_size(),
            Self::Linear { g } => g.nrows(),
        }
    }

    pub fn encode(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Self::Network(net) => net.encode(x),
            Self::Linear { g } => {
                check_dim(x.len(), g.ncols())?;
                Ok(g * x)
            }
        }
    }

    pub fn decode(&self, h: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Self::Network(net) => net.decode(h),
            Self::Linear { g } => {
                check_dim(h.len(), g.nrows())?;
                Ok(g.tr_mul(h))
            }
        }
    }

    /// The encoder as a transport map.
    pub fn encoder_map(&self) -> Result<TransportMap> {
        match self {
            Self::Network(net) => Ok(TransportMap::network(net.encoder_net())),
            Self::Linear { g } => TransportMap::affine(g.clone(), DVector::zeros(g.nrows())),
        }
    }

    /// The decoder as a transport map (always linear).
    pub fn decoder_map(&self) -> Result<TransportMap> {
        match self {
            Self::Network(net) => {
                TransportMap::affine(net.out_weights().clone(), net.out_offset().clone())
            }
            Self::Linear { g } => {
                TransportMap::affine(g.transpose(), DVector::zeros(g.ncols()))
            }
        }
    }
}

fn check_dim(got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::DimensionMismatch(format!(
            "vector has dimension {got}, expected {want}"
        )));
    }
    Ok(())
}

fn orthonormality_defect(g: &DMatrix<f64>) -> f64 {
    let mut gram = g.tr_mul(g);
    for i in 0..gram.nrows() {
        gram[(i, i)] -= 1.0;
    }
    gram.amax()
}

/// An ordered stack of encoder/decoder pairs. Layer l's feature space is
/// layer l+1's input space.
///
/// The feature clouds produced while training are retained on the struct but
/// are a byproduct: serialization persists the layers and their training
/// records only, which is enough to rebuild every map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackedDae {
    layers: Vec<EncoderDecoderPair>,
    records: Vec<TrainRecord>,
    #[serde(skip)]
    clouds: Vec<ParticleCloud>,
}

impl StackedDae {
    /// Hand-built stack without training metadata.
    pub fn from_layers(layers: Vec<EncoderDecoderPair>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("stack needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].dim_feature() != pair[1].dim_in() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {} produces dimension {} but layer {} expects {}",
                    l,
                    pair[0].dim_feature(),
                    l + 1,
                    pair[1].dim_in()
                )));
            }
        }
        Ok(Self {
            layers,
            records: Vec::new(),
            clouds: Vec::new(),
        })
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[EncoderDecoderPair] {
        &self.layers
    }

    pub fn records(&self) -> &[TrainRecord] {
        &self.records
    }

    /// Feature clouds [Z^0, ..., Z^L] from training; empty for hand-built or
    /// deserialized stacks.
    pub fn clouds(&self) -> &[ParticleCloud] {
        &self.clouds
    }
}

/// Trains g(x) = C tanh(Ax - b) + d to reconstruct cloud points from
/// corrupted inputs x + sqrt(t) eps by full-batch gradient descent.
///
/// The corruption is redrawn every epoch from the seeded stream, so the
/// descent targets the corruption distribution rather than one fixed noisy
/// set. Each epoch records the batch loss before and after its update; at
/// sane learning rates the update never increases the loss on its own
/// batch, and that matched pair is the meaningful monotonicity witness
/// (the before-only curve wiggles by resampling noise between epochs).
/// Cloud weights are ignored: the loss is the plain average over points.
pub fn train_shallow_dae(
    cloud: &ParticleCloud,
    t_noise: f64,
    hidden: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<TrainedDae> {
    if hidden == 0 {
        return Err(Error::InvalidParameter("hidden unit count must be at least 1".into()));
    }
    if epochs == 0 {
        return Err(Error::InvalidParameter("epoch count must be at least 1".into()));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidParameter(format!("learning rate must be finite and > 0, got {lr}")));
    }
    if !(t_noise >= 0.0 && t_noise.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise time must be finite and >= 0, got {t_noise}")));
    }

    let activation = Activation::Tanh;
    let m = cloud.dim();
    let n = cloud.n();
    let x = cloud.points();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Unit-scale inputs per coordinate, offsets spreading the units over an
    // O(1) data range, small output weights so the initial map is tame.
    let a_scale = 1.0 / (m as f64).sqrt();
    let c_scale = 0.5 / (hidden as f64).sqrt();
    let mut a = DMatrix::zeros(hidden, m);
    for v in a.iter_mut() {
        *v = a_scale * rng.sample::<f64, _>(StandardNormal);
    }
    let mut b = DVector::zeros(hidden);
    for v in b.iter_mut() {
        *v = rng.sample::<f64, _>(StandardNormal);
    }
    let mut c = DMatrix::zeros(m, hidden);
    for v in c.iter_mut() {
        *v = c_scale * rng.sample::<f64, _>(StandardNormal);
    }
    let mut d = DVector::zeros(m);

    let sqrt_t = t_noise.sqrt();
    let scale = 2.0 / n as f64;
    let mut losses = Vec::with_capacity(epochs);
    let mut losses_after = Vec::with_capacity(epochs);
    let mut xt = DMatrix::zeros(m, n);
    let batch_loss = |a: &DMatrix<f64>,
                      b: &DVector<f64>,
                      c: &DMatrix<f64>,
                      d: &DVector<f64>,
                      xt: &DMatrix<f64>| {
        let mut z = a * xt;
        for mut col in z.column_iter_mut() {
            col -= b;
        }
        z.apply(|u| *u = activation.eval(*u));
        let mut r = c * &z;
        for mut col in r.column_iter_mut() {
            col += d;
        }
        r -= x;
        r.norm_squared() / n as f64
    };
    for epoch in 0..epochs {
        for (noisy, clean) in xt.iter_mut().zip(x.iter()) {
            *noisy = clean + sqrt_t * rng.sample::<f64, _>(StandardNormal);
        }

        let mut z = &a * &xt;
        for mut col in z.column_iter_mut() {
            col -= &b;
        }
        let mut h = z.clone();
        h.apply(|u| *u = activation.eval(*u));
        let mut r = &c * &h;
        for mut col in r.column_iter_mut() {
            col += &d;
        }
        r -= x;

        let loss = r.norm_squared() / n as f64;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch, loss });
        }
        losses.push(loss);

        // r = g(xt) - x. With z = A xt - b and h = tanh(z):
        //   dL/dC = (2/N) r h'    dL/dd = (2/N) r 1
        //   delta = (C' r) .* tanh'(z)
        //   dL/dA = (2/N) delta xt'    dL/db = -(2/N) delta 1
        let grad_c = (&r * h.transpose()) * scale;
        let grad_d = r.column_sum() * scale;
        let mut delta = c.tr_mul(&r);
        for (dv, zv) in delta.iter_mut().zip(z.iter()) {
            *dv *= activation.deriv(*zv);
        }
        let grad_a = (&delta * xt.transpose()) * scale;
        let grad_b = delta.column_sum() * (-scale);

        a -= grad_a * lr;
        b -= grad_b * lr;
        c -= grad_c * lr;
        d -= grad_d * lr;

        let after = batch_loss(&a, &b, &c, &d, &xt);
        if !after.is_finite() {
            return Err(Error::TrainingDiverged { epoch, loss: after });
        }
        losses_after.push(after);
    }

    let net = ShallowNet::new(a, b, c, d, activation)?;
    let record = TrainRecord {
        seed,
        t_noise,
        hidden,
        epochs,
        lr,
        losses,
        losses_after,
    };
    Ok(TrainedDae { net, record })
}

/// Trains one layer per entry of `params`, each on the previous layer's
/// encoded cloud. Layer l trains with seed `seed + l`.
pub fn stack_daes(
    cloud0: &ParticleCloud,
    params: &[LayerParams],
    seed: u64,
) -> Result<StackedDae> {
    if params.is_empty() {
        return Err(Error::InvalidParameter("stack needs at least one layer".into()));
    }
    let mut layers = Vec::with_capacity(params.len());
    let mut records = Vec::with_capacity(params.len());
    let mut clouds = Vec::with_capacity(params.len() + 1);
    clouds.push(cloud0.clone());
    for (l, p) in params.iter().enumerate() {
        let current = clouds.last().unwrap();
        let trained = train_shallow_dae(
            current,
            p.t_noise,
            p.hidden,
            p.epochs,
            p.lr,
            seed.wrapping_add(l as u64),
        )?;
        let mut encoded = DMatrix::zeros(p.hidden, current.n());
        for i in 0..current.n() {
            let h = trained.net.encode(&current.point(i))?;
            encoded.column_mut(i).copy_from(&h);
        }
        let next = ParticleCloud::new(encoded, current.weights().clone())?;
        clouds.push(next);
        layers.push(EncoderDecoderPair::Network(trained.net));
        records.push(trained.record);
    }
    Ok(StackedDae {
        layers,
        records,
        clouds,
    })
}

/// The ground-space map of a stack: all encoders in order, then all decoders
/// in reverse. For a single layer this is the layer's own network, exactly.
pub fn decode_stack(stack: &StackedDae) -> Result<TransportMap> {
    let mut maps = Vec::with_capacity(2 * stack.layers.len());
    for layer in &stack.layers {
        maps.push(layer.encoder_map()?);
    }
    for layer in stack.layers.iter().rev() {
        maps.push(layer.decoder_map()?);
    }
    TransportMap::composed(maps)
}

/// Composition of full DAEs on the ground space, each trained on the
/// previous map's output cloud. `map` is `composed(layers)`; the individual
/// layer maps stay available for per-layer diagnostics.
#[derive(Debug, Clone)]
pub struct CompositionBaseline {
    pub map: TransportMap,
    pub layers: Vec<TransportMap>,
    pub records: Vec<TrainRecord>,
}

/// Trains `params.len()` full shallow DAEs on the ground space, layer l on
/// the cloud pushed through layers 0..l, and composes them. Uses the same
/// per-layer seed scheme as [`stack_daes`].
pub fn composition_baseline(
    cloud0: &ParticleCloud,
    params: &[LayerParams],
    seed: u64,
) -> Result<CompositionBaseline> {
    if params.is_empty() {
        return Err(Error::InvalidParameter("composition needs at least one layer".into()));
    }
    let mut maps = Vec::with_capacity(params.len());
    let mut records = Vec::with_capacity(params.len());
    let mut cloud = cloud0.clone();
    for (l, p) in params.iter().enumerate() {
        let trained = train_shallow_dae(
            &cloud,
            p.t_noise,
            p.hidden,
            p.epochs,
            p.lr,
            seed.wrapping_add(l as u64),
        )?;
        let map = TransportMap::network(trained.net);
        cloud = pushforward_particles(&cloud, &map)?;
        maps.push(map);
        records.push(trained.record);
    }
    Ok(CompositionBaseline {
        map: TransportMap::composed(maps.clone())?,
        layers: maps,
        records,
    })
}

/// Conjugacy defect of the ordinary map under an orthonormal linear
/// embedding.
///
/// With w = Gx, the embedded measure N(G mu, G Sigma G') is degenerate in
/// the ambient space; its anisotropic map with D = I conjugates exactly to
/// the ground map because G'(G Sigma G' + 2 tau I)^-1 G = (Sigma + 2 tau I)^-1
/// whenever G'G = I. Returns the max over test points of
/// |G' Phi1(Gx) - Phi0(G'Gx)|.
pub fn conjugacy_defect_linear(
    g0: &GaussianMeasure,
    g: &DMatrix<f64>,
    tau: f64,
    test_points: &[DVector<f64>],
) -> Result<f64> {
    let m = g0.dim();
    if g.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "embedding has {} columns, measure has dimension {}",
            g.ncols(),
            m
        )));
    }
    let dev = orthonormality_defect(g);
    if dev > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "embedding columns are not orthonormal: max Gram deviation {dev:.3e}"
        )));
    }
    let n = g.nrows();
    let embedded = GaussianMeasure::new(g * g0.mean(), g * g0.cov() * g.transpose())?;
    let phi1 = anisotropic_dae_gaussian(&embedded, tau, &DiffusionCoefficient::isotropic(n, 1.0)?)?;
    let phi0 = anisotropic_dae_gaussian(g0, tau, &DiffusionCoefficient::isotropic(m, 1.0)?)?;
    let mut worst = 0.0_f64;
    for x in test_points {
        check_dim(x.len(), m)?;
        let w = g * x;
        let upstairs = g.tr_mul(&phi1.evaluate(&w)?);
        let downstairs = phi0.evaluate(&g.tr_mul(&w))?;
        worst = worst.max((upstairs - downstairs).norm());
    }
    Ok(worst)
}

/// Conjugacy defect of the continuous map under an orthogonal change of
/// basis: max over test points of |Q' phi1(Qx) - phi0(x)| where phi1 is the
/// continuous map of N(Q mu, Q Sigma Q').
pub fn conjugacy_defect_continuous(
    g0: &GaussianMeasure,
    q: &DMatrix<f64>,
    t: f64,
    test_points: &[DVector<f64>],
) -> Result<f64> {
    let m = g0.dim();
    if q.nrows() != m || q.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "rotation is {}x{}, measure has dimension {}",
            q.nrows(),
            q.ncols(),
            m
        )));
    }
    let dev = orthonormality_defect(q);
    if dev > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "matrix is not orthogonal: max Gram deviation {dev:.3e}"
        )));
    }
    let rotated = GaussianMeasure::new(q * g0.mean(), q * g0.cov() * q.transpose())?;
    let phi1 = continuous_dae_gaussian(&rotated, t)?;
    let phi0 = continuous_dae_gaussian(g0, t)?;
    let mut worst = 0.0_f64;
    for x in test_points {
        check_dim(x.len(), m)?;
        let upstairs = q.tr_mul(&phi1.evaluate(&(q * x))?);
        let downstairs = phi0.evaluate(x)?;
        worst = worst.max((upstairs - downstairs).norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::ordinary_dae_gaussian_pushforward;
    use crate::datasets::swiss_roll;
    use crate::measures::{sample_gmm, GaussianMixture};
    use nalgebra::dvector;

    fn standard_cloud(n: usize, seed: u64) -> ParticleCloud {
        let gmm = GaussianMixture::single(GaussianMeasure::univariate(0.0, 1.0).unwrap());
        sample_gmm(&gmm, n, seed).unwrap()
    }

    #[test]
    fn repeated_point_trains_to_constant() {
        let c = 0.7;
        let points = DMatrix::from_element(1, 64, c);
        let cloud = ParticleCloud::from_points(points).unwrap();
        let trained = train_shallow_dae(&cloud, 0.5, 8, 2000, 0.05, 1).unwrap();
        let sqrt_t = 0.5_f64.sqrt();
        let mut worst = 0.0_f64;
        for k in 0..=20 {
            let x = c - sqrt_t + k as f64 / 10.0 * sqrt_t;
            let y = trained.net.eval_scalar(x).unwrap();
            worst = worst.max((y - c).abs());
        }
        assert!(worst < 0.05, "max deviation from constant: {worst}");
    }

    #[test]
    fn gaussian_training_matches_analytic_map() {
        let cloud = standard_cloud(4096, 7);
        let p = LayerParams::default();
        let trained = train_shallow_dae(&cloud, 0.3, 32, p.epochs, p.lr, 11).unwrap();
        let at_zero = trained.net.eval_scalar(0.0).unwrap();
        let at_one = trained.net.eval_scalar(1.0).unwrap();
        assert!(at_zero.abs() < 0.1, "map(0) = {at_zero}");
        assert!((at_one - 1.0 / 1.3).abs() < 0.15, "map(1) = {at_one}");
    }

    #[test]
    fn same_seed_gives_identical_runs() {
        let cloud = standard_cloud(256, 3);
        let a = train_shallow_dae(&cloud, 0.2, 16, 50, 0.05, 5).unwrap();
        let b = train_shallow_dae(&cloud, 0.2, 16, 50, 0.05, 5).unwrap();
        assert_eq!(a.record.losses, b.record.losses);
        assert_eq!(a.net, b.net);
        let c = train_shallow_dae(&cloud, 0.2, 16, 50, 0.05, 6).unwrap();
        assert_ne!(a.record.losses, c.record.losses);
    }

    // Every epoch's update must descend the loss on its own batch once the
    // early transient is over. The before-only curve is not comparable
    // across epochs because the corruption is redrawn between them.
    fn assert_descends_after_transient(record: &TrainRecord) {
        for e in 10..record.epochs {
            assert!(
                record.losses_after[e] <= record.losses[e],
                "epoch {} raised its own batch loss: {} -> {}",
                e,
                record.losses[e],
                record.losses_after[e]
            );
        }
        let first = record.losses[0];
        let last = *record.losses.last().unwrap();
        assert!(last < 0.5 * first, "loss went {first} -> {last}, less than a halving");
    }

    #[test]
    fn default_training_descends_gaussian() {
        let cloud = standard_cloud(4096, 13);
        let p = LayerParams::default();
        let trained = train_shallow_dae(&cloud, p.t_noise, p.hidden, p.epochs, p.lr, 17).unwrap();
        assert_descends_after_transient(&trained.record);
    }

    #[test]
    fn default_training_descends_swiss_roll() {
        let cloud = swiss_roll(2000, 0.02, 21).unwrap();
        let p = LayerParams::default();
        let trained = train_shallow_dae(&cloud, p.t_noise, p.hidden, p.epochs, p.lr, 23).unwrap();
        assert_descends_after_transient(&trained.record);
    }

    #[test]
    fn split_is_exact() {
        let cloud = standard_cloud(512, 29);
        let trained = train_shallow_dae(&cloud, 0.2, 8, 40, 0.05, 31).unwrap();
        for k in 0..5 {
            let x = dvector![-1.0 + 0.5 * k as f64];
            let full = trained.net.eval(&x).unwrap();
            let split = trained.net.decode(&trained.net.encode(&x).unwrap()).unwrap();
            assert_eq!(full, split);
        }
    }

    #[test]
    fn training_rejects_bad_hyperparameters() {
        let cloud = standard_cloud(32, 1);
        assert!(train_shallow_dae(&cloud, 0.1, 0, 10, 0.05, 1).is_err());
        assert!(train_shallow_dae(&cloud, 0.1, 4, 0, 0.05, 1).is_err());
        assert!(train_shallow_dae(&cloud, 0.1, 4, 10, 0.0, 1).is_err());
        assert!(train_shallow_dae(&cloud, 0.1, 4, 10, f64::NAN, 1).is_err());
        assert!(train_shallow_dae(&cloud, -0.1, 4, 10, 0.05, 1).is_err());
    }

    #[test]
    fn oversized_learning_rate_reports_divergence() {
        let cloud = standard_cloud(256, 37);
        match train_shallow_dae(&cloud, 0.2, 32, 500, 1.0e4, 41) {
            Err(Error::TrainingDiverged { epoch, loss }) => {
                assert!(epoch < 500);
                assert!(!loss.is_finite());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn stack_of_one_reduces_to_single_training() {
        let cloud = standard_cloud(512, 43);
        let p = LayerParams {
            hidden: 8,
            t_noise: 0.2,
            epochs: 60,
            lr: 0.05,
        };
        let stack = stack_daes(&cloud, &[p], 47).unwrap();
        let single = train_shallow_dae(&cloud, p.t_noise, p.hidden, p.epochs, p.lr, 47).unwrap();
        assert_eq!(stack.layers()[0], EncoderDecoderPair::Network(single.net));
        assert_eq!(stack.records()[0], single.record);
    }

    #[test]
    fn stack_dimensions_follow_params() {
        let cloud = standard_cloud(256, 53);
        let params = [
            LayerParams {
                hidden: 5,
                t_noise: 0.1,
                epochs: 20,
                lr: 0.05,
            },
            LayerParams {
                hidden: 3,
                t_noise: 0.1,
                epochs: 20,
                lr: 0.05,
            },
        ];
        let stack = stack_daes(&cloud, &params, 59).unwrap();
        assert_eq!(stack.n_layers(), 2);
        assert_eq!(stack.layers()[0].dim_in(), 1);
        assert_eq!(stack.layers()[0].dim_feature(), 5);
        assert_eq!(stack.layers()[1].dim_in(), 5);
        assert_eq!(stack.layers()[1].dim_feature(), 3);
        let dims: Vec<usize> = stack.clouds().iter().map(|c| c.dim()).collect();
        assert_eq!(dims, vec![1, 5, 3]);
        assert_eq!(stack.clouds().len(), 3);
    }

    #[test]
    fn swiss_roll_stack_halves_every_layer_loss() {
        let cloud = swiss_roll(2000, 0.02, 61).unwrap();
        let p = LayerParams::default();
        let stack = stack_daes(&cloud, &[p, p], 67).unwrap();
        for (l, record) in stack.records().iter().enumerate() {
            let first = record.losses[0];
            let last = *record.losses.last().unwrap();
            assert!(
                last < 0.5 * first,
                "layer {l} loss went {first} -> {last}, less than a halving"
            );
        }
    }

    #[test]
    fn decode_single_layer_is_the_full_network() {
        let cloud = standard_cloud(512, 71);
        let p = LayerParams {
            hidden: 8,
            t_noise: 0.2,
            epochs: 60,
            lr: 0.05,
        };
        let stack = stack_daes(&cloud, &[p], 73).unwrap();
        let map = decode_stack(&stack).unwrap();
        let EncoderDecoderPair::Network(net) = &stack.layers()[0] else {
            panic!("trained stack holds network layers");
        };
        for k in 0..7 {
            let x = dvector![-1.5 + 0.5 * k as f64];
            assert_eq!(map.evaluate(&x).unwrap(), net.eval(&x).unwrap());
        }
    }

    #[test]
    fn zero_hidden_weights_decode_to_constant() {
        // Only the decoder bias survives when every weight is zero.
        let bias = dvector![0.3, -0.8];
        let net = ShallowNet::new(
            DMatrix::zeros(4, 2),
            DVector::zeros(4),
            DMatrix::zeros(2, 4),
            bias.clone(),
            Activation::Tanh,
        )
        .unwrap();
        let stack = StackedDae::from_layers(vec![EncoderDecoderPair::network(net).unwrap()]).unwrap();
        let map = decode_stack(&stack).unwrap();
        for k in 0..5 {
            let x = dvector![k as f64, -(k as f64)];
            assert_eq!(map.evaluate(&x).unwrap(), bias);
        }
    }

    #[test]
    fn from_layers_rejects_dimension_break() {
        let a = EncoderDecoderPair::network(ShallowNet::zeroed(2, 4, 2, Activation::Tanh)).unwrap();
        let b = EncoderDecoderPair::network(ShallowNet::zeroed(3, 2, 3, Activation::Tanh)).unwrap();
        assert!(StackedDae::from_layers(vec![a, b]).is_err());
        assert!(StackedDae::from_layers(Vec::new()).is_err());
    }

    #[test]
    fn stack_serializes_and_reloads() {
        let cloud = standard_cloud(256, 79);
        let p = LayerParams {
            hidden: 6,
            t_noise: 0.2,
            epochs: 30,
            lr: 0.05,
        };
        let stack = stack_daes(&cloud, &[p, p], 83).unwrap();
        let text = serde_json::to_string(&stack).unwrap();
        let reloaded: StackedDae = serde_json::from_str(&text).unwrap();
        assert_eq!(reloaded.layers(), stack.layers());
        assert_eq!(reloaded.records(), stack.records());
        assert!(reloaded.clouds().is_empty());
        let x = dvector![0.4];
        assert_eq!(
            decode_stack(&reloaded).unwrap().evaluate(&x).unwrap(),
            decode_stack(&stack).unwrap().evaluate(&x).unwrap()
        );
    }

    #[test]
    fn baseline_of_one_layer_is_the_full_network() {
        let cloud = standard_cloud(512, 89);
        let p = LayerParams {
            hidden: 8,
            t_noise: 0.2,
            epochs: 60,
            lr: 0.05,
        };
        let baseline = composition_baseline(&cloud, &[p], 97).unwrap();
        let single = train_shallow_dae(&cloud, p.t_noise, p.hidden, p.epochs, p.lr, 97).unwrap();
        for k in 0..5 {
            let x = dvector![-1.0 + 0.5 * k as f64];
            assert_eq!(
                baseline.map.evaluate(&x).unwrap(),
                single.net.eval(&x).unwrap()
            );
        }
    }

    #[test]
    fn baseline_is_deterministic() {
        let cloud = standard_cloud(256, 101);
        let p = LayerParams {
            hidden: 8,
            t_noise: 0.2,
            epochs: 40,
            lr: 0.05,
        };
        let a = composition_baseline(&cloud, &[p, p], 103).unwrap();
        let b = composition_baseline(&cloud, &[p, p], 103).unwrap();
        assert_eq!(a.records, b.records);
        let x = dvector![0.3];
        assert_eq!(a.map.evaluate(&x).unwrap(), b.map.evaluate(&x).unwrap());
    }

    #[test]
    fn baseline_variance_follows_analytic_recurrence() {
        // Each trained layer approximates the ordinary map of the current
        // Gaussian, so the composed cloud variance should track the analytic
        // pushforward recurrence.
        let cloud = standard_cloud(4096, 107);
        let tau = 0.2;
        let p = LayerParams {
            hidden: 32,
            t_noise: tau,
            epochs: 600,
            lr: 0.05,
        };
        let baseline = composition_baseline(&cloud, &[p, p], 109).unwrap();
        let mut gauss = GaussianMeasure::univariate(0.0, 1.0).unwrap();
        for _ in 0..2 {
            gauss = ordinary_dae_gaussian_pushforward(&gauss, tau).unwrap();
        }
        let expected = gauss.cov()[(0, 0)];
        let pushed = pushforward_particles(&cloud, &baseline.map).unwrap();
        let (_, cov) = pushed.mean_cov();
        let got = cov[(0, 0)];
        assert!(
            (got - expected).abs() < 0.1 * expected,
            "variance after two layers: {got}, recurrence says {expected}"
        );
    }

    #[test]
    fn linear_conjugacy_identity_embedding_is_exact() {
        let g0 = GaussianMeasure::new(
            dvector![0.3, -0.2],
            DMatrix::from_diagonal(&dvector![2.0, 1.0]),
        )
        .unwrap();
        let points: Vec<DVector<f64>> = (0..10)
            .map(|k| dvector![k as f64 / 3.0 - 1.5, 1.0 - k as f64 / 5.0])
            .collect();
        let defect =
            conjugacy_defect_linear(&g0, &DMatrix::identity(2, 2), 0.1, &points).unwrap();
        assert_eq!(defect, 0.0);
    }

    #[test]
    fn linear_conjugacy_basis_embedding() {
        let g0 = GaussianMeasure::new(
            DVector::zeros(2),
            DMatrix::from_diagonal(&dvector![2.0, 1.0]),
        )
        .unwrap();
        let mut g = DMatrix::zeros(3, 2);
        g[(0, 0)] = 1.0;
        g[(1, 1)] = 1.0;
        let points: Vec<DVector<f64>> = (0..100)
            .map(|k| {
                let u = (k % 10) as f64 / 3.0 - 1.5;
                let v = (k / 10) as f64 / 3.0 - 1.5;
                dvector![u, v]
            })
            .collect();
        let defect = conjugacy_defect_linear(&g0, &g, 0.1, &points).unwrap();
        assert!(defect < 1e-8, "defect {defect}");
    }

    #[test]
    fn linear_conjugacy_random_embeddings() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = 1 + (rng.gen::<u32>() % 3) as usize;
            let n = m + (rng.gen::<u32>() % (7 - m as u32)) as usize;
            let raw = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let g = raw.qr().q();
            let mut cov = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
            cov = &cov * cov.transpose() + DMatrix::identity(m, m) * 0.5;
            let mean = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let g0 = GaussianMeasure::new(mean, cov).unwrap();
            let points: Vec<DVector<f64>> = (0..25)
                .map(|_| DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal)))
                .collect();
            let defect = conjugacy_defect_linear(&g0, &g, 0.1, &points).unwrap();
            assert!(defect < 1e-8, "seed {seed}: defect {defect}");
        }
    }

    #[test]
    fn linear_conjugacy_rejects_skewed_embedding() {
        let g0 = GaussianMeasure::univariate(0.0, 1.0).unwrap();
        let g = DMatrix::from_element(3, 1, 1.0);
        assert!(conjugacy_defect_linear(&g0, &g, 0.1, &[dvector![0.5]]).is_err());
    }

    #[test]
    fn continuous_conjugacy_identity_is_exact() {
        let g0 = GaussianMeasure::new(
            dvector![0.1, 0.4],
            DMatrix::from_diagonal(&dvector![2.0, 1.0]),
        )
        .unwrap();
        let points: Vec<DVector<f64>> = (0..10)
            .map(|k| dvector![k as f64 / 5.0 - 1.0, k as f64 / 7.0])
            .collect();
        let defect =
            conjugacy_defect_continuous(&g0, &DMatrix::identity(2, 2), 0.3, &points).unwrap();
        assert_eq!(defect, 0.0);
    }

    #[test]
    fn continuous_conjugacy_rotation() {
        let g0 = GaussianMeasure::new(
            DVector::zeros(2),
            DMatrix::from_diagonal(&dvector![2.0, 1.0]),
        )
        .unwrap();
        let q = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let points: Vec<DVector<f64>> = (0..100)
            .map(|k| {
                let u = (k % 10) as f64 / 3.0 - 1.5;
                let v = (k / 10) as f64 / 3.0 - 1.5;
                dvector![u, v]
            })
            .collect();
        let defect = conjugacy_defect_continuous(&g0, &q, 0.3, &points).unwrap();
        assert!(defect < 1e-10, "defect {defect}");
    }

    #[test]
    fn continuous_conjugacy_reflection() {
        let g0 = GaussianMeasure::new(
            dvector![0.2, -0.1],
            DMatrix::from_diagonal(&dvector![2.0, 1.0]),
        )
        .unwrap();
        let q = DMatrix::from_diagonal(&dvector![1.0, -1.0]);
        let points: Vec<DVector<f64>> = (0..100)
            .map(|k| {
                let u = (k % 10) as f64 / 3.0 - 1.5;
                let v = (k / 10) as f64 / 3.0 - 1.5;
                dvector![u, v]
            })
            .collect();
        let defect = conjugacy_defect_continuous(&g0, &q, 0.3, &points).unwrap();
        assert!(defect < 1e-10, "defect {defect}");
    }

    #[test]
    fn continuous_conjugacy_propagates_collapse() {
        let g0 = GaussianMeasure::new(
            DVector::zeros(2),
            DMatrix::from_diagonal(&dvector![2.0, 1.0]),
        )
        .unwrap();
        let q = DMatrix::identity(2, 2);
        assert!(conjugacy_defect_continuous(&g0, &q, 0.6, &[DVector::zeros(2)]).is_err());
    }
}
