//! User plants with polynomial or rational right-hand sides, read from TOML.
//!
//! ```toml
//! name = "duffing"
//! n_x = 2
//! n_u = 1
//! x0 = [0.0, 0.0]
//! ts = 0.1
//! gamma = 0.01
//! y_min = [-1.0]
//! y_max = [1.0]
//! pool = { lo = -1.0, step = 0.1, hi = 1.0 }
//!
//! [[rhs]]                      # ẋ₁ = x₂
//! num = [{ c = 1.0, x = [0, 1] }]
//!
//! [[rhs]]                      # ẋ₂ = −x₁ − 0.1x₂ − x₁³ + u
//! num = [{ c = -1.0, x = [1] }, { c = -0.1, x = [0, 1] }, { c = -1.0, x = [3] }, { c = 1.0, u = [1] }]
//!
//! [[output]]                   # y = x₁
//! num = [{ c = 1.0, x = [1] }]
//! ```
//!
//! Each term is `c · Π xᵢ^{x[i]} · Π uⱼ^{u[j]}`; missing exponents are zero.
//! An optional `den` list turns an expression into a ratio.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use serde::Deserialize;

use super::{DopriOptions, Dynamics, NoiseModel, PlantSpec};
use crate::error::{Error, Result};
use crate::signals::InputPool;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub c: f64,
    #[serde(default)]
    pub x: Vec<i32>,
    #[serde(default)]
    pub u: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expr {
    pub num: Vec<Term>,
    #[serde(default)]
    pub den: Option<Vec<Term>>,
}

fn eval_poly(terms: &[Term], x: &[f64], u: &[f64]) -> f64 {
    terms
        .iter()
        .map(|t| {
            let mut v = t.c;
            for (xi, &p) in x.iter().zip(&t.x) {
                if p != 0 {
                    v *= xi.powi(p);
                }
            }
            for (ui, &p) in u.iter().zip(&t.u) {
                if p != 0 {
                    v *= ui.powi(p);
                }
            }
            v
        })
        .sum()
}

impl Expr {
    pub fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        let n = eval_poly(&self.num, x, u);
        match &self.den {
            Some(d) => n / eval_poly(d, x, u),
            None => n,
        }
    }

    fn check(&self, n_x: usize, n_u: usize, what: &str) -> Result<()> {
        for t in self.num.iter().chain(self.den.iter().flatten()) {
            if t.x.len() > n_x || t.u.len() > n_u {
                return Err(Error::parse(format!("{what}: term exponent list longer than the state or input")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CustomPlant {
    n_x: usize,
    n_u: usize,
    rhs: Vec<Expr>,
    output: Vec<Expr>,
}

impl Dynamics for CustomPlant {
    fn n_x(&self) -> usize {
        self.n_x
    }
    fn n_u(&self) -> usize {
        self.n_u
    }
    fn n_y(&self) -> usize {
        self.output.len()
    }
    fn rhs(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        for (d, e) in dx.iter_mut().zip(&self.rhs) {
            *d = e.eval(x, u);
        }
    }
    fn output(&self, x: &[f64]) -> Vec<f64> {
        self.output.iter().map(|e| e.eval(x, &[])).collect()
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PoolDef {
    Grid { lo: f64, step: f64, hi: f64 },
    Values { values: Vec<Vec<f64>> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantFile {
    name: String,
    n_x: usize,
    n_u: usize,
    x0: Vec<f64>,
    ts: f64,
    #[serde(default)]
    gamma: f64,
    y_min: Vec<f64>,
    y_max: Vec<f64>,
    pool: PoolDef,
    rhs: Vec<Expr>,
    output: Vec<Expr>,
    #[serde(default)]
    rtol: Option<f64>,
    #[serde(default)]
    atol: Option<f64>,
}

impl CustomPlant {
    pub fn from_toml_str(text: &str) -> Result<PlantSpec> {
        let f: PlantFile = toml::from_str(text).map_err(|e| Error::parse(e.to_string()))?;
        if f.rhs.len() != f.n_x {
            return Err(Error::parse(format!("{} rhs entries for {} states", f.rhs.len(), f.n_x)));
        }
        if f.output.is_empty() {
            return Err(Error::parse("at least one output expression is required"));
        }
        for (i, e) in f.rhs.iter().enumerate() {
            e.check(f.n_x, f.n_u, &format!("rhs[{i}]"))?;
        }
        for (i, e) in f.output.iter().enumerate() {
            e.check(f.n_x, 0, &format!("output[{i}]"))?;
        }
        let pool = match f.pool {
            PoolDef::Grid { lo, step, hi } if f.n_u == 1 => InputPool::grid(lo, step, hi)?,
            PoolDef::Grid { .. } => return Err(Error::parse("grid pools are scalar; list `values` for multi-input plants")),
            PoolDef::Values { values } => InputPool::new(values.into_iter().map(DVector::from_vec).collect())?,
        };
        let defaults = DopriOptions::default();
        let spec = PlantSpec {
            name: f.name,
            dynamics: Arc::new(CustomPlant { n_x: f.n_x, n_u: f.n_u, rhs: f.rhs, output: f.output }),
            x0: DVector::from_vec(f.x0),
            ts: f.ts,
            noise: NoiseModel::new(f.gamma)?,
            pool,
            y_min: f.y_min,
            y_max: f.y_max,
            integrator: DopriOptions { rtol: f.rtol.unwrap_or(defaults.rtol), atol: f.atol.unwrap_or(defaults.atol), ..defaults },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<PlantSpec> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { msg, .. } => Error::Parse { path: Some(path.to_path_buf()), msg },
            other => other,
        })
    }
}
