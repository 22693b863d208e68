//! Ground-truth plants: integrator, benchmark surrogates, output noise.

pub mod benchmarks;
pub mod custom;
pub mod dopri;

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use benchmarks::{make_benchmark, Benchmark, Oxidation, RobotArm, TwoTank};
pub use custom::CustomPlant;
pub use dopri::{integrate, DopriOptions, DopriStats};

use crate::error::{Error, Result};
use crate::signals::InputPool;

/// Continuous-time dynamics `ẋ = f(x, u)` with output `y = h(x)`.
pub trait Dynamics: Send + Sync {
    fn n_x(&self) -> usize;
    fn n_u(&self) -> usize;
    fn n_y(&self) -> usize;
    fn rhs(&self, x: &[f64], u: &[f64], dx: &mut [f64]);
    fn output(&self, x: &[f64]) -> Vec<f64>;
    /// Clamp a state back onto its physical domain after a step.
    fn project(&self, _x: &mut [f64]) {}
}

/// Multiplicative output noise `y (1 + γ ε)`, `ε ~ N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub gamma: f64,
}

impl NoiseModel {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!("noise factor must be nonnegative, got {gamma}")));
        }
        Ok(NoiseModel { gamma })
    }

    pub fn apply<R: Rng + ?Sized>(&self, y: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        y.map(|v| {
            let e: f64 = rng.sample(StandardNormal);
            v * (1.0 + self.gamma * e)
        })
    }
}

/// A sampled plant: dynamics, sampling period, initial state, noise, input pool
/// and output bounds, all in raw signal units.
#[derive(Clone)]
pub struct PlantSpec {
    pub name: String,
    pub dynamics: Arc<dyn Dynamics>,
    pub x0: DVector<f64>,
    pub ts: f64,
    pub noise: NoiseModel,
    pub pool: InputPool,
    pub y_min: Vec<f64>,
    pub y_max: Vec<f64>,
    pub integrator: DopriOptions,
}

impl fmt::Debug for PlantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantSpec")
            .field("name", &self.name)
            .field("n_x", &self.n_x())
            .field("n_u", &self.n_u())
            .field("n_y", &self.n_y())
            .field("x0", &self.x0.as_slice())
            .field("ts", &self.ts)
            .field("noise", &self.noise)
            .field("pool_len", &self.pool.len())
            .field("y_min", &self.y_min)
            .field("y_max", &self.y_max)
            .finish()
    }
}

impl PlantSpec {
    pub fn n_x(&self) -> usize {
        self.dynamics.n_x()
    }

    pub fn n_u(&self) -> usize {
        self.dynamics.n_u()
    }

    pub fn n_y(&self) -> usize {
        self.dynamics.n_y()
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dynamics;
        if d.n_x() == 0 || d.n_u() == 0 || d.n_y() == 0 {
            return Err(Error::InvalidConfig("plant dimensions must be positive".into()));
        }
        if self.x0.len() != d.n_x() {
            return Err(Error::DimensionMismatch { expected: d.n_x(), got: self.x0.len() });
        }
        if !(self.ts > 0.0) {
            return Err(Error::InvalidConfig("sample period must be positive".into()));
        }
        if self.pool.dim() != d.n_u() {
            return Err(Error::DimensionMismatch { expected: d.n_u(), got: self.pool.dim() });
        }
        if self.y_min.len() != d.n_y() || self.y_max.len() != d.n_y() {
            return Err(Error::DimensionMismatch { expected: d.n_y(), got: self.y_min.len() });
        }
        NoiseModel::new(self.noise.gamma)?;
        Ok(())
    }

    /// State after holding `u` for one sample period.
    pub fn integrate_step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n_x() {
            return Err(Error::DimensionMismatch { expected: self.n_x(), got: x.len() });
        }
        if u.len() != self.n_u() {
            return Err(Error::DimensionMismatch { expected: self.n_u(), got: u.len() });
        }
        let d = &self.dynamics;
        let (mut xn, _) = integrate(|_, x, dx| d.rhs(x, u.as_slice(), dx), 0.0, x.as_slice(), self.ts, &self.integrator)?;
        d.project(&mut xn);
        Ok(DVector::from_vec(xn))
    }

    pub fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.dynamics.output(x.as_slice()))
    }

    pub fn measure<R: Rng + ?Sized>(&self, x: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        self.noise.apply(&self.output(x), rng)
    }
}
