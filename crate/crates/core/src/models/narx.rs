use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::mlp::{Activation, Mlp};
use crate::error::{Error, Result};

/// One-step NARX predictor `ŷ = f(x, θ)` with a parameter Jacobian for EKF.
pub trait NarxPredictor: Clone + Send + Sync {
    fn n_x(&self) -> usize;
    fn n_y(&self) -> usize;
    fn n_theta(&self) -> usize;
    fn theta(&self) -> &[f64];
    fn set_theta(&mut self, theta: &[f64]);

    /// Forward pass on a raw slice; the slice length must equal `n_x`.
    fn predict_slice(&self, x: &[f64]) -> Vec<f64>;

    /// Prediction together with `∂f/∂θ` (`n_y × n_θ`).
    fn predict_with_jacobian(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>);

    fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n_x() {
            return Err(Error::DimensionMismatch { expected: self.n_x(), got: x.len() });
        }
        Ok(DVector::from_vec(self.predict_slice(x.as_slice())))
    }

    fn jacobian_theta(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        if x.len() != self.n_x() {
            return Err(Error::DimensionMismatch { expected: self.n_x(), got: x.len() });
        }
        Ok(self.predict_with_jacobian(x.as_slice()).1)
    }
}

/// Linear ARX model `ŷ_i = Σ_j θ[i·n_x + j] x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearArx {
    n_x: usize,
    n_y: usize,
    theta: Vec<f64>,
}

impl LinearArx {
    pub fn new(n_x: usize, n_y: usize, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != n_x * n_y {
            return Err(Error::DimensionMismatch { expected: n_x * n_y, got: theta.len() });
        }
        Ok(LinearArx { n_x, n_y, theta })
    }

    pub fn zeros(n_x: usize, n_y: usize) -> Self {
        LinearArx { n_x, n_y, theta: vec![0.0; n_x * n_y] }
    }
}

impl NarxPredictor for LinearArx {
    fn n_x(&self) -> usize {
        self.n_x
    }
    fn n_y(&self) -> usize {
        self.n_y
    }
    fn n_theta(&self) -> usize {
        self.theta.len()
    }
    fn theta(&self) -> &[f64] {
        &self.theta
    }
    fn set_theta(&mut self, theta: &[f64]) {
        self.theta.copy_from_slice(theta);
    }

    fn predict_slice(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_y)
            .map(|i| self.theta[i * self.n_x..(i + 1) * self.n_x].iter().zip(x).map(|(t, v)| t * v).sum())
            .collect()
    }

    fn predict_with_jacobian(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let mut j = DMatrix::zeros(self.n_y, self.theta.len());
        for i in 0..self.n_y {
            for (c, v) in x.iter().enumerate() {
                j[(i, i * self.n_x + c)] = *v;
            }
        }
        (self.predict_slice(x), j)
    }
}

/// Two-hidden-layer NARX network with arctangent activations:
/// `f(x) = W3 atan(W2 atan(W1 x + b1) + b2) + b3`.
#[derive(Debug, Clone, PartialEq)]
pub struct NarxNet {
    net: Mlp,
}

impl NarxNet {
    pub fn zeros(n_x: usize, n1: usize, n2: usize, n_y: usize) -> Self {
        NarxNet { net: Mlp::zeros(vec![n_x, n1, n2, n_y], Activation::Atan) }
    }

    pub fn init<R: Rng + ?Sized>(n_x: usize, n1: usize, n2: usize, n_y: usize, rng: &mut R) -> Self {
        NarxNet { net: Mlp::init_uniform(vec![n_x, n1, n2, n_y], Activation::Atan, rng) }
    }

    pub fn from_theta(n_x: usize, n1: usize, n2: usize, n_y: usize, theta: Vec<f64>) -> Result<Self> {
        let sizes = vec![n_x, n1, n2, n_y];
        let (n, got) = (Mlp::param_count(&sizes), theta.len());
        Mlp::from_params(sizes, Activation::Atan, theta)
            .map(|net| NarxNet { net })
            .ok_or(Error::DimensionMismatch { expected: n, got })
    }

    /// Hidden sizes `(n1, n2)`.
    pub fn hidden(&self) -> (usize, usize) {
        (self.net.sizes()[1], self.net.sizes()[2])
    }

    pub fn mlp(&self) -> &Mlp {
        &self.net
    }
}

impl NarxPredictor for NarxNet {
    fn n_x(&self) -> usize {
        self.net.n_in()
    }
    fn n_y(&self) -> usize {
        self.net.n_out()
    }
    fn n_theta(&self) -> usize {
        self.net.n_params()
    }
    fn theta(&self) -> &[f64] {
        self.net.params()
    }
    fn set_theta(&mut self, theta: &[f64]) {
        self.net.set_params(theta);
    }
    fn predict_slice(&self, x: &[f64]) -> Vec<f64> {
        self.net.forward(x)
    }
    fn predict_with_jacobian(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let j = self.net.jacobians(x, true, false);
        (j.output, j.params.unwrap())
    }
}

/// Config-selectable NARX model.
#[derive(Debug, Clone, PartialEq)]
pub enum NarxModel {
    Linear(LinearArx),
    Net(NarxNet),
}

impl NarxPredictor for NarxModel {
    fn n_x(&self) -> usize {
        match self {
            NarxModel::Linear(m) => m.n_x(),
            NarxModel::Net(m) => m.n_x(),
        }
    }
    fn n_y(&self) -> usize {
        match self {
            NarxModel::Linear(m) => m.n_y(),
            NarxModel::Net(m) => m.n_y(),
        }
    }
    fn n_theta(&self) -> usize {
        match self {
            NarxModel::Linear(m) => m.n_theta(),
            NarxModel::Net(m) => m.n_theta(),
        }
    }
    fn theta(&self) -> &[f64] {
        match self {
            NarxModel::Linear(m) => m.theta(),
            NarxModel::Net(m) => m.theta(),
        }
    }
    fn set_theta(&mut self, theta: &[f64]) {
        match self {
            NarxModel::Linear(m) => m.set_theta(theta),
            NarxModel::Net(m) => m.set_theta(theta),
        }
    }
    fn predict_slice(&self, x: &[f64]) -> Vec<f64> {
        match self {
            NarxModel::Linear(m) => m.predict_slice(x),
            NarxModel::Net(m) => m.predict_slice(x),
        }
    }
    fn predict_with_jacobian(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        match self {
            NarxModel::Linear(m) => m.predict_with_jacobian(x),
            NarxModel::Net(m) => m.predict_with_jacobian(x),
        }
    }
}
