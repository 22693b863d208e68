use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::mlp::{Activation, Mlp};
use crate::error::{Error, Result};

/// Linearization of a state-space model at `(x, u)`.
#[derive(Debug, Clone)]
pub struct SsJacobians {
    /// `f_x(x, u)`.
    pub x_next: DVector<f64>,
    /// `f_y(x)`.
    pub y: DVector<f64>,
    /// `∂f_x/∂x`, `n_x × n_x`.
    pub a: DMatrix<f64>,
    /// `∂f_x/∂θ_x`, `n_x × n_θx`.
    pub b_theta: DMatrix<f64>,
    /// `∂f_y/∂x`, `n_y × n_x`.
    pub c: DMatrix<f64>,
    /// `∂f_y/∂θ_y`, `n_y × n_θy`.
    pub d_theta: DMatrix<f64>,
}

/// Strictly causal model `x⁺ = f_x(x, u, θ_x)`, `y = f_y(x, θ_y)`.
pub trait StateSpaceModel: Clone + Send + Sync {
    fn n_x(&self) -> usize;
    fn n_u(&self) -> usize;
    fn n_y(&self) -> usize;
    fn n_theta_x(&self) -> usize;
    fn n_theta_y(&self) -> usize;
    fn theta_x(&self) -> &[f64];
    fn theta_y(&self) -> &[f64];
    fn set_theta_x(&mut self, t: &[f64]);
    fn set_theta_y(&mut self, t: &[f64]);

    fn state_update(&self, x: &[f64], u: &[f64]) -> DVector<f64>;
    fn output(&self, x: &[f64]) -> DVector<f64>;

    /// `(A, C)` only; the smoother does not need parameter sensitivities.
    fn state_jacobians(&self, x: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>);

    /// `(f_x, ∂f_x/∂x, ∂f_x/∂θ_x)`.
    fn update_jacobians(&self, x: &[f64], u: &[f64]) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>);

    /// `(f_y, ∂f_y/∂x, ∂f_y/∂θ_y)`.
    fn output_jacobians(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>);

    fn jacobians(&self, x: &[f64], u: &[f64]) -> SsJacobians {
        let (x_next, a, b_theta) = self.update_jacobians(x, u);
        let (y, c, d_theta) = self.output_jacobians(x);
        SsJacobians { x_next, y, a, b_theta, c, d_theta }
    }

    /// One step: the output is read from the current state, not the next one.
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if x.len() != self.n_x() {
            return Err(Error::DimensionMismatch { expected: self.n_x(), got: x.len() });
        }
        if u.len() != self.n_u() {
            return Err(Error::DimensionMismatch { expected: self.n_u(), got: u.len() });
        }
        Ok((self.state_update(x.as_slice(), u.as_slice()), self.output(x.as_slice())))
    }

    fn n_theta(&self) -> usize {
        self.n_theta_x() + self.n_theta_y()
    }

    /// `θ_x ⊕ θ_y`.
    fn theta(&self) -> Vec<f64> {
        let mut t = self.theta_x().to_vec();
        t.extend_from_slice(self.theta_y());
        t
    }

    fn set_theta(&mut self, t: &[f64]) {
        let nx = self.n_theta_x();
        self.set_theta_x(&t[..nx]);
        self.set_theta_y(&t[nx..]);
    }
}

/// Recurrent state-space network: two tanh hidden layers in the state update,
/// one tanh hidden layer in the output map.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnSs {
    fx: Mlp,
    fy: Mlp,
    n_x: usize,
    n_u: usize,
}

/// Architecture of [`RnnSs`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RnnShape {
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub n1x: usize,
    pub n2x: usize,
    pub n1y: usize,
}

impl RnnShape {
    fn fx_sizes(&self) -> Vec<usize> {
        vec![self.n_x + self.n_u, self.n1x, self.n2x, self.n_x]
    }
    fn fy_sizes(&self) -> Vec<usize> {
        vec![self.n_x, self.n1y, self.n_y]
    }
}

impl RnnSs {
    pub fn zeros(shape: RnnShape) -> Self {
        RnnSs {
            fx: Mlp::zeros(shape.fx_sizes(), Activation::Tanh),
            fy: Mlp::zeros(shape.fy_sizes(), Activation::Tanh),
            n_x: shape.n_x,
            n_u: shape.n_u,
        }
    }

    pub fn init<R: Rng + ?Sized>(shape: RnnShape, rng: &mut R) -> Self {
        RnnSs {
            fx: Mlp::init_uniform(shape.fx_sizes(), Activation::Tanh, rng),
            fy: Mlp::init_uniform(shape.fy_sizes(), Activation::Tanh, rng),
            n_x: shape.n_x,
            n_u: shape.n_u,
        }
    }

    pub fn from_thetas(shape: RnnShape, theta_x: Vec<f64>, theta_y: Vec<f64>) -> Result<Self> {
        let (ex, ey) = (Mlp::param_count(&shape.fx_sizes()), Mlp::param_count(&shape.fy_sizes()));
        let (gx, gy) = (theta_x.len(), theta_y.len());
        let fx = Mlp::from_params(shape.fx_sizes(), Activation::Tanh, theta_x)
            .ok_or(Error::DimensionMismatch { expected: ex, got: gx })?;
        let fy = Mlp::from_params(shape.fy_sizes(), Activation::Tanh, theta_y)
            .ok_or(Error::DimensionMismatch { expected: ey, got: gy })?;
        Ok(RnnSs { fx, fy, n_x: shape.n_x, n_u: shape.n_u })
    }

    pub fn shape(&self) -> RnnShape {
        RnnShape {
            n_x: self.n_x,
            n_u: self.n_u,
            n_y: self.fy.n_out(),
            n1x: self.fx.sizes()[1],
            n2x: self.fx.sizes()[2],
            n1y: self.fy.sizes()[1],
        }
    }

    pub fn state_net(&self) -> &Mlp {
        &self.fx
    }

    pub fn output_net(&self) -> &Mlp {
        &self.fy
    }

    fn concat(x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut q = Vec::with_capacity(x.len() + u.len());
        q.extend_from_slice(x);
        q.extend_from_slice(u);
        q
    }
}

impl StateSpaceModel for RnnSs {
    fn n_x(&self) -> usize {
        self.n_x
    }
    fn n_u(&self) -> usize {
        self.n_u
    }
    fn n_y(&self) -> usize {
        self.fy.n_out()
    }
    fn n_theta_x(&self) -> usize {
        self.fx.n_params()
    }
    fn n_theta_y(&self) -> usize {
        self.fy.n_params()
    }
    fn theta_x(&self) -> &[f64] {
        self.fx.params()
    }
    fn theta_y(&self) -> &[f64] {
        self.fy.params()
    }
    fn set_theta_x(&mut self, t: &[f64]) {
        self.fx.set_params(t)
    }
    fn set_theta_y(&mut self, t: &[f64]) {
        self.fy.set_params(t)
    }

    fn state_update(&self, x: &[f64], u: &[f64]) -> DVector<f64> {
        DVector::from_vec(self.fx.forward(&Self::concat(x, u)))
    }

    fn output(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_vec(self.fy.forward(x))
    }

    fn state_jacobians(&self, x: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let jx = self.fx.jacobians(&Self::concat(x, u), false, true);
        let jy = self.fy.jacobians(x, false, true);
        let a = jx.input.unwrap().columns(0, self.n_x).into_owned();
        (a, jy.input.unwrap())
    }

    fn update_jacobians(&self, x: &[f64], u: &[f64]) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let jx = self.fx.jacobians(&Self::concat(x, u), true, true);
        let a = jx.input.unwrap().columns(0, self.n_x).into_owned();
        (DVector::from_vec(jx.output), a, jx.params.unwrap())
    }

    fn output_jacobians(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let jy = self.fy.jacobians(x, true, true);
        (DVector::from_vec(jy.output), jy.input.unwrap(), jy.params.unwrap())
    }
}

/// Linear model `x⁺ = A x + B u`, `y = C x` with `θ_x = [vec(A), vec(B)]`
/// and `θ_y = vec(C)`, all row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSs {
    n_x: usize,
    n_u: usize,
    n_y: usize,
    theta_x: Vec<f64>,
    theta_y: Vec<f64>,
}

impl LinearSs {
    pub fn new(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<Self> {
        let n_x = a.nrows();
        if a.ncols() != n_x {
            return Err(Error::DimensionMismatch { expected: n_x, got: a.ncols() });
        }
        if b.nrows() != n_x {
            return Err(Error::DimensionMismatch { expected: n_x, got: b.nrows() });
        }
        if c.ncols() != n_x {
            return Err(Error::DimensionMismatch { expected: n_x, got: c.ncols() });
        }
        let row_major = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
        let mut theta_x = row_major(a);
        theta_x.extend(row_major(b));
        Ok(LinearSs { n_x, n_u: b.ncols(), n_y: c.nrows(), theta_x, theta_y: row_major(c) })
    }

    pub fn a(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_x, self.n_x, &self.theta_x[..self.n_x * self.n_x])
    }

    pub fn b(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_x, self.n_u, &self.theta_x[self.n_x * self.n_x..])
    }

    pub fn c(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_y, self.n_x, &self.theta_y)
    }
}

impl StateSpaceModel for LinearSs {
    fn n_x(&self) -> usize {
        self.n_x
    }
    fn n_u(&self) -> usize {
        self.n_u
    }
    fn n_y(&self) -> usize {
        self.n_y
    }
    fn n_theta_x(&self) -> usize {
        self.theta_x.len()
    }
    fn n_theta_y(&self) -> usize {
        self.theta_y.len()
    }
    fn theta_x(&self) -> &[f64] {
        &self.theta_x
    }
    fn theta_y(&self) -> &[f64] {
        &self.theta_y
    }
    fn set_theta_x(&mut self, t: &[f64]) {
        self.theta_x.copy_from_slice(t)
    }
    fn set_theta_y(&mut self, t: &[f64]) {
        self.theta_y.copy_from_slice(t)
    }

    fn state_update(&self, x: &[f64], u: &[f64]) -> DVector<f64> {
        let (nx, nu) = (self.n_x, self.n_u);
        DVector::from_fn(nx, |i, _| {
            let a = &self.theta_x[i * nx..(i + 1) * nx];
            let b = &self.theta_x[nx * nx + i * nu..nx * nx + (i + 1) * nu];
            a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() + b.iter().zip(u).map(|(p, q)| p * q).sum::<f64>()
        })
    }

    fn output(&self, x: &[f64]) -> DVector<f64> {
        let nx = self.n_x;
        DVector::from_fn(self.n_y, |i, _| self.theta_y[i * nx..(i + 1) * nx].iter().zip(x).map(|(p, q)| p * q).sum())
    }

    fn state_jacobians(&self, _x: &[f64], _u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.a(), self.c())
    }

    fn update_jacobians(&self, x: &[f64], u: &[f64]) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (nx, nu) = (self.n_x, self.n_u);
        let mut b_theta = DMatrix::zeros(nx, self.theta_x.len());
        for i in 0..nx {
            for j in 0..nx {
                b_theta[(i, i * nx + j)] = x[j];
            }
            for j in 0..nu {
                b_theta[(i, nx * nx + i * nu + j)] = u[j];
            }
        }
        (self.state_update(x, u), self.a(), b_theta)
    }

    fn output_jacobians(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (nx, ny) = (self.n_x, self.n_y);
        let mut d_theta = DMatrix::zeros(ny, self.theta_y.len());
        for i in 0..ny {
            for j in 0..nx {
                d_theta[(i, i * nx + j)] = x[j];
            }
        }
        (self.output(x), self.c(), d_theta)
    }
}

/// State-input feature `q = [x', u']'`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPoint {
    q: DVector<f64>,
    n_x: usize,
}

impl AugmentedPoint {
    pub fn new(x: &[f64], u: &[f64]) -> Self {
        let mut q = Vec::with_capacity(x.len() + u.len());
        q.extend_from_slice(x);
        q.extend_from_slice(u);
        AugmentedPoint { q: DVector::from_vec(q), n_x: x.len() }
    }

    pub fn state(&self) -> &[f64] {
        &self.q.as_slice()[..self.n_x]
    }

    pub fn input(&self) -> &[f64] {
        &self.q.as_slice()[self.n_x..]
    }

    pub fn as_slice(&self) -> &[f64] {
        self.q.as_slice()
    }
}
