//! Surrogates of the three benchmark plants.
//!
//! Dimensions, initial states, sample periods, noise levels, pools and output
//! bounds follow the published benchmark setups. The right-hand sides are
//! documented stand-ins with the same structure:
//!
//! - two-tank: pump-fed upper tank draining through an orifice into a lower tank,
//!   `A₁ḣ₁ = k u − a₁√(2g h₁)`, `A₂ḣ₂ = a₁√(2g h₁) − a₂√(2g h₂)`, `y = h₂`.
//! - oxidation: dimensionless ethylene-oxidation CSTR with three Arrhenius rates,
//!   `y = x₃` (ethylene-oxide concentration); the feed concentration is held at 0.5.
//! - robot arm: motor, gearbox and arm inertias joined by a cubic-stiffness gear
//!   and a linear arm spring, viscous plus smoothed Coulomb friction at the motor,
//!   `y = ω_m`.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{DopriOptions, Dynamics, NoiseModel, PlantSpec};
use crate::error::{Error, Result};
use crate::signals::InputPool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    TwoTank,
    Oxidation,
    RobotArm,
}

impl Benchmark {
    pub const ALL: [Benchmark; 3] = [Benchmark::TwoTank, Benchmark::Oxidation, Benchmark::RobotArm];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::TwoTank => "two-tank",
            Benchmark::Oxidation => "oxidation",
            Benchmark::RobotArm => "robot-arm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Benchmark::ALL.into_iter().find(|b| b.name() == s.trim().to_ascii_lowercase().replace('_', "-"))
    }

    pub fn spec(self) -> PlantSpec {
        match self {
            Benchmark::TwoTank => PlantSpec {
                name: self.name().into(),
                dynamics: Arc::new(TwoTank::default()),
                x0: DVector::from_vec(vec![0.0, 0.1]),
                ts: 0.5,
                noise: NoiseModel { gamma: 0.02 },
                pool: InputPool::grid(0.0, 0.01, 10.0).expect("static grid"),
                y_min: vec![0.03],
                y_max: vec![0.08],
                integrator: DopriOptions::default(),
            },
            Benchmark::Oxidation => PlantSpec {
                name: self.name().into(),
                dynamics: Arc::new(Oxidation::default()),
                x0: DVector::from_vec(vec![0.9981, 0.4291, 0.0303, 1.0019]),
                ts: 5.0,
                noise: NoiseModel { gamma: 0.08 },
                pool: InputPool::grid(0.0704, 0.01, 0.7042).expect("static grid"),
                y_min: vec![0.02],
                y_max: vec![0.05],
                integrator: DopriOptions::default(),
            },
            Benchmark::RobotArm => PlantSpec {
                name: self.name().into(),
                dynamics: Arc::new(RobotArm::default()),
                x0: DVector::zeros(5),
                ts: 0.0005,
                noise: NoiseModel { gamma: 0.08 },
                pool: InputPool::grid(-3.0, 0.01, 3.0).expect("static grid"),
                y_min: vec![-0.4],
                y_max: vec![0.4],
                integrator: DopriOptions::default(),
            },
        }
    }
}

impl std::fmt::Display for Benchmark {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn make_benchmark(name: &str) -> Result<PlantSpec> {
    Benchmark::parse(name)
        .map(Benchmark::spec)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown benchmark {name:?}; expected two-tank, oxidation or robot-arm")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoTank {
    pub area1: f64,
    pub area2: f64,
    pub pump_gain: f64,
    pub orifice1: f64,
    pub orifice2: f64,
    pub g: f64,
}

impl Default for TwoTank {
    fn default() -> Self {
        TwoTank { area1: 0.5, area2: 0.25, pump_gain: 0.0035, orifice1: 0.019, orifice2: 0.016, g: 9.81 }
    }
}

impl Dynamics for TwoTank {
    fn n_x(&self) -> usize {
        2
    }
    fn n_u(&self) -> usize {
        1
    }
    fn n_y(&self) -> usize {
        1
    }

    fn rhs(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let q1 = self.orifice1 * (2.0 * self.g * x[0].max(0.0)).sqrt();
        let q2 = self.orifice2 * (2.0 * self.g * x[1].max(0.0)).sqrt();
        dx[0] = (self.pump_gain * u[0] - q1) / self.area1;
        dx[1] = (q1 - q2) / self.area2;
    }

    fn output(&self, x: &[f64]) -> Vec<f64> {
        vec![x[1].max(0.0)]
    }

    fn project(&self, x: &mut [f64]) {
        for v in x {
            *v = v.max(0.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oxidation {
    pub feed: f64,
    pub g: [f64; 3],
    pub a: [f64; 3],
    pub b: [f64; 4],
    pub tc: f64,
}

impl Default for Oxidation {
    fn default() -> Self {
        Oxidation {
            feed: 0.5,
            g: [-8.13, -7.12, -11.07],
            a: [92.8, 12.66, 2412.71],
            b: [7.32, 10.39, 2170.57, 7.02],
            tc: 1.0,
        }
    }
}

impl Dynamics for Oxidation {
    fn n_x(&self) -> usize {
        4
    }
    fn n_u(&self) -> usize {
        1
    }
    fn n_y(&self) -> usize {
        1
    }

    fn rhs(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let q = u[0];
        let (x1, x2, x3, x4) = (x[0], x[1].max(0.0), x[2].max(0.0), x[3]);
        let r1 = (self.g[0] / x4).exp() * (x2 * x4).max(0.0).sqrt();
        let r2 = (self.g[1] / x4).exp() * (x2 * x4).max(0.0).powf(0.25);
        let r3 = (self.g[2] / x4).exp() * (x3 * x4).max(0.0).sqrt();
        dx[0] = q * (1.0 - x1 * x4);
        dx[1] = q * (self.feed - x2 * x4) - self.a[0] * r1 - self.a[1] * r2;
        dx[2] = -q * x3 * x4 + self.a[0] * r1 - self.a[2] * r3;
        dx[3] = (q * (1.0 - x4) + self.b[0] * r1 + self.b[1] * r2 + self.b[2] * r3 - self.b[3] * (x4 - self.tc)) / x1;
    }

    fn output(&self, x: &[f64]) -> Vec<f64> {
        vec![x[2]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotArm {
    pub j_motor: f64,
    pub j_gear: f64,
    pub j_arm: f64,
    pub k_lin: f64,
    pub k_cubic: f64,
    pub k_arm: f64,
    pub d_gear: f64,
    pub d_arm: f64,
    pub f_viscous: f64,
    pub f_coulomb: f64,
    /// Velocity scale of the `tanh` Coulomb smoothing.
    pub v_smooth: f64,
}

impl Default for RobotArm {
    fn default() -> Self {
        RobotArm {
            j_motor: 0.02,
            j_gear: 0.01,
            j_arm: 0.05,
            k_lin: 20.0,
            k_cubic: 50.0,
            k_arm: 10.0,
            d_gear: 0.05,
            d_arm: 0.05,
            f_viscous: 0.1,
            f_coulomb: 0.05,
            v_smooth: 0.01,
        }
    }
}

impl Dynamics for RobotArm {
    fn n_x(&self) -> usize {
        5
    }
    fn n_u(&self) -> usize {
        1
    }
    fn n_y(&self) -> usize {
        1
    }

    /// State `[θ_m − θ_g, θ_g − θ_a, ω_m, ω_g, ω_a]`, input is motor torque.
    fn rhs(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let (p1, p2, wm, wg, wa) = (x[0], x[1], x[2], x[3], x[4]);
        let gear = self.k_lin * p1 + self.k_cubic * p1 * p1 * p1 + self.d_gear * (wm - wg);
        let arm = self.k_arm * p2 + self.d_arm * (wg - wa);
        let friction = self.f_viscous * wm + self.f_coulomb * (wm / self.v_smooth).tanh();
        dx[0] = wm - wg;
        dx[1] = wg - wa;
        dx[2] = (u[0] - friction - gear) / self.j_motor;
        dx[3] = (gear - arm) / self.j_gear;
        dx[4] = arm / self.j_arm;
    }

    fn output(&self, x: &[f64]) -> Vec<f64> {
        vec![x[2]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use rand::Rng;

    #[test]
    fn benchmark_dimensions() {
        let t = make_benchmark("two-tank").unwrap();
        assert_eq!((t.n_x(), t.n_u(), t.n_y(), t.ts, t.noise.gamma, t.pool.len()), (2, 1, 1, 0.5, 0.02, 1001));
        let o = make_benchmark("oxidation").unwrap();
        assert_eq!(o.n_x(), 4);
        assert_eq!(o.x0.as_slice(), &[0.9981, 0.4291, 0.0303, 1.0019]);
        assert_eq!(o.pool.len(), 65);
        let r = make_benchmark("robot_arm").unwrap();
        assert_eq!((r.n_x(), r.ts, r.pool.len()), (5, 0.0005, 601));
        assert!(r.x0.iter().all(|v| *v == 0.0));
        for b in Benchmark::ALL {
            b.spec().validate().unwrap();
        }
        assert!(make_benchmark("three-tank").is_err());
    }

    #[test]
    fn oxidation_initial_state_is_near_equilibrium() {
        let o = Oxidation::default();
        let mut dx = [0.0; 4];
        o.rhs(&[0.9981, 0.4291, 0.0303, 1.0019], &[0.38], &mut dx);
        assert!(dx.iter().all(|d| d.abs() < 5e-3), "{dx:?}");
    }

    fn random_walk(b: Benchmark, steps: usize, seed: u64) -> Vec<DVector<f64>> {
        let spec = b.spec();
        let mut rng = stream(seed, Stream::PassiveInputs);
        let mut x = spec.x0.clone();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let u = spec.pool.get(rng.random_range(0..spec.pool.len())).clone();
            x = spec.integrate_step(&x, &u).unwrap();
            out.push(x.clone());
        }
        out
    }

    #[test]
    fn two_tank_levels_stay_nonnegative() {
        let xs = random_walk(Benchmark::TwoTank, 10_000, 1);
        assert!(xs.iter().all(|x| x.iter().all(|v| *v >= 0.0 && *v < 1.0)));
    }

    #[test]
    fn oxidation_concentration_in_unit_interval() {
        let xs = random_walk(Benchmark::Oxidation, 10_000, 2);
        assert!(xs.iter().all(|x| x[2] > 0.0 && x[2] < 1.0));
    }

    #[test]
    fn robot_arm_stays_bounded() {
        let xs = random_walk(Benchmark::RobotArm, 10_000, 3);
        assert!(xs.iter().all(|x| x.iter().all(|v| v.is_finite() && v.abs() < 10.0)));
    }

    #[test]
    fn same_inputs_give_identical_trajectories() {
        for b in Benchmark::ALL {
            assert_eq!(random_walk(b, 200, 9), random_walk(b, 200, 9));
        }
    }
}
