//! One-hidden-layer networks and the stacked two-layer variant.
//!
//! A shallow net evaluates exactly sum_j c_j eta(a_j . x - b_j) + offset.
//! The hidden activation vector is the encoder, the output linear map the
//! decoder; `eval` is literally decoder(encoder(x)), so the split is exact by
//! construction. Ridgelet-synthesized nets carry a zero offset; trained nets
//! learn it as the decoder bias.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named pure scalar activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    /// exp(-u^2 / 2), the synthesis function of the ridgelet pair.
    Gaussian,
}

impl Activation {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Activation::Tanh => u.tanh(),
            Activation::Gaussian => (-0.5 * u * u).exp(),
        }
    }

    pub fn deriv(self, u: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = u.tanh();
                1.0 - t * t
            }
            Activation::Gaussian => -u * (-0.5 * u * u).exp(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Gaussian => "gaussian",
        }
    }
}

/// g(x) = out_weights * eta(in_weights * x - in_offsets) + out_offset.
///
/// Rows of `in_weights` are the hidden directions a_j; columns of
/// `out_weights` are the output vectors c_j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShallowNet {
    in_weights: DMatrix<f64>,
    in_offsets: DVector<f64>,
    out_weights: DMatrix<f64>,
    out_offset: DVector<f64>,
    activation: Activation,
}

impl ShallowNet {
    pub fn new(
        in_weights: DMatrix<f64>,
        in_offsets: DVector<f64>,
        out_weights: DMatrix<f64>,
        out_offset: DVector<f64>,
        activation: Activation,
    ) -> Result<Self> {
        let j = in_weights.nrows();
        if j == 0 {
            return Err(Error::InvalidParameter("network needs at least one hidden unit".into()));
        }
        if in_offsets.len() != j || out_weights.ncols() != j {
            return Err(Error::DimensionMismatch(format!(
                "hidden size mismatch: {} directions, {} offsets, {} output columns",
                j,
                in_offsets.len(),
                out_weights.ncols()
            )));
        }
        if out_offset.len() != out_weights.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "output offset has dimension {}, output map has {} rows",
                out_offset.len(),
                out_weights.nrows()
            )));
        }
        Ok(Self {
            in_weights,
            in_offsets,
            out_weights,
            out_offset,
            activation,
        })
    }

    /// All-zero weights and offsets: the degenerate identity-initialized net
    /// whose output is constant.
    pub fn zeroed(dim_in: usize, hidden: usize, dim_out: usize, activation: Activation) -> Self {
        Self {
            in_weights: DMatrix::zeros(hidden, dim_in),
            in_offsets: DVector::zeros(hidden),
            out_weights: DMatrix::zeros(dim_out, hidden),
            out_offset: DVector::zeros(dim_out),
            activation,
        }
    }

    pub fn dim_in(&self) -> usize {
        self.in_weights.ncols()
    }

    pub fn dim_out(&self) -> usize {
        self.out_weights.nrows()
    }

    pub fn hidden_size(&self) -> usize {
        self.in_weights.nrows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn in_weights(&self) -> &DMatrix<f64> {
        &self.in_weights
    }

    pub fn in_offsets(&self) -> &DVector<f64> {
        &self.in_offsets
    }

    pub fn out_weights(&self) -> &DMatrix<f64> {
        &self.out_weights
    }

    pub fn out_offset(&self) -> &DVector<f64> {
        &self.out_offset
    }

    /// Encoder: the hidden activation vector eta(Ax - b).
    pub fn encode(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim_in() {
            return Err(Error::DimensionMismatch(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.dim_in()
            )));
        }
        let mut z = &self.in_weights * x;
        z -= &self.in_offsets;
        for v in z.iter_mut() {
            *v = self.activation.eval(*v);
        }
        Ok(z)
    }

    /// Decoder: the output linear map applied to a hidden vector.
    pub fn decode(&self, h: &DVector<f64>) -> Result<DVector<f64>> {
        if h.len() != self.hidden_size() {
            return Err(Error::DimensionMismatch(format!(
                "hidden vector has dimension {}, network has {} units",
                h.len(),
                self.hidden_size()
            )));
        }
        Ok(&self.out_weights * h + &self.out_offset)
    }

    /// decoder(encoder(x)); the split identity holds bitwise because this is
    /// the definition.
    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let h = self.encode(x)?;
        self.decode(&h)
    }

    pub fn eval_scalar(&self, x: f64) -> Result<f64> {
        let out = self.eval(&DVector::from_element(1, x))?;
        Ok(out[0])
    }

    /// The encoder alone as a shallow net: output vectors are the standard
    /// basis, so evaluation returns the hidden activation vector itself.
    pub fn encoder_net(&self) -> ShallowNet {
        let j = self.hidden_size();
        ShallowNet {
            in_weights: self.in_weights.clone(),
            in_offsets: self.in_offsets.clone(),
            out_weights: DMatrix::identity(j, j),
            out_offset: DVector::zeros(j),
            activation: self.activation,
        }
    }
}

/// Two-layer network from stacking two ridgelet discretizations of 1-D maps.
///
/// Layer 0 is the hidden layer of `net0`; the second hidden layer receives
/// the rank-one weight matrix w1[i][j] = a1_i * c0_j obtained by substituting
/// layer 0's decoder into layer 1's directions. The factors are retained so
/// the rank-one structure stays checkable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerNet {
    first_dirs: DVector<f64>,
    first_offsets: DVector<f64>,
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    c1: DVector<f64>,
    factor_a1: DVector<f64>,
    factor_c0: DVector<f64>,
    activation: Activation,
}

impl TwoLayerNet {
    /// Stack `net1` on top of `net0`; both must be scalar maps on the line.
    pub fn from_nets(net0: &ShallowNet, net1: &ShallowNet) -> Result<Self> {
        for (name, net) in [("layer 0", net0), ("layer 1", net1)] {
            if net.dim_in() != 1 || net.dim_out() != 1 {
                return Err(Error::DimensionMismatch(format!(
                    "{name} must map the line to itself, got {}->{}",
                    net.dim_in(),
                    net.dim_out()
                )));
            }
        }
        if net0.out_offset()[0] != 0.0 || net1.out_offset()[0] != 0.0 {
            return Err(Error::InvalidParameter(
                "stacking expects ridgelet-synthesized nets with zero output offset".into(),
            ));
        }
        let a1 = DVector::from_iterator(net1.hidden_size(), net1.in_weights().iter().cloned());
        let c0 = DVector::from_iterator(net0.hidden_size(), net0.out_weights().iter().cloned());
        let w1 = &a1 * c0.transpose();
        Ok(Self {
            first_dirs: DVector::from_iterator(net0.hidden_size(), net0.in_weights().iter().cloned()),
            first_offsets: net0.in_offsets().clone(),
            w1,
            b1: net1.in_offsets().clone(),
            c1: DVector::from_iterator(net1.hidden_size(), net1.out_weights().iter().cloned()),
            factor_a1: a1,
            factor_c0: c0,
            activation: net0.activation(),
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let j0 = self.first_dirs.len();
        let mut h0 = DVector::zeros(j0);
        for j in 0..j0 {
            h0[j] = self
                .activation
                .eval(self.first_dirs[j] * x - self.first_offsets[j]);
        }
        let mut out = 0.0;
        let u = &self.w1 * &h0;
        for i in 0..self.c1.len() {
            out += self.c1[i] * self.activation.eval(u[i] - self.b1[i]);
        }
        out
    }

    pub fn w1(&self) -> &DMatrix<f64> {
        &self.w1
    }

    pub fn factors(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.factor_a1, &self.factor_c0)
    }

    pub fn hidden_sizes(&self) -> (usize, usize) {
        (self.first_dirs.len(), self.c1.len())
    }
}
