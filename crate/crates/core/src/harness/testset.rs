use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{r2_percent, rmse};
use crate::error::{Error, Result};
use crate::estimation::{predict_outputs, EkfHyper};
use crate::models::{NarxPredictor, StateSpaceModel};
use crate::plants::PlantSpec;
use crate::rng::{stream, Stream};
use crate::signals::{Dataset, Lags, Scaler};

/// Held-out record in raw units: `y_0 … y_{T−1}` and the inputs `u_0 … u_{T−2}`
/// that produced them. Only samples from `warmup` on are scored.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub inputs: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
    pub warmup: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestScore {
    pub rmse: f64,
    pub r2: f64,
}

#[derive(Serialize, Deserialize)]
struct Row {
    k: usize,
    u: f64,
    y: f64,
}

impl TestSet {
    /// Simulate from the plant's initial state with inputs drawn uniformly from
    /// its pool. The record depends only on the plant and `seed`, so every
    /// strategy and run is scored on the same data; `warmup + n_test` outputs
    /// are produced.
    pub fn generate(plant: &PlantSpec, n_test: usize, warmup: usize, seed: u64) -> Result<Self> {
        let len = n_test + warmup;
        let mut urng = stream(seed, Stream::TestInputs);
        let mut nrng = stream(seed, Stream::TestNoise);
        let mut x = plant.x0.clone();
        let mut inputs = Vec::with_capacity(len);
        let mut outputs = Vec::with_capacity(len);
        for t in 0..len {
            outputs.push(plant.measure(&x, &mut nrng));
            if t + 1 < len {
                let u = plant.pool.get(urng.random_range(0..plant.pool.len())).clone();
                x = plant.integrate_step(&x, &u)?;
                inputs.push(u);
            }
        }
        Ok(TestSet { inputs, outputs, warmup })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Scored samples.
    pub fn n_scored(&self) -> usize {
        self.len().saturating_sub(self.warmup)
    }

    /// Same record scored from a different sample on.
    pub fn with_warmup(&self, warmup: usize) -> Self {
        TestSet { warmup, ..self.clone() }
    }

    fn score(&self, yhat: &[DVector<f64>]) -> TestScore {
        let y: Vec<Vec<f64>> = self.outputs[self.warmup..].iter().map(|v| v.as_slice().to_vec()).collect();
        let p: Vec<Vec<f64>> = yhat.iter().map(|v| v.as_slice().to_vec()).collect();
        TestScore { rmse: rmse(&y, &p), r2: r2_percent(&y, &p) }
    }

    /// One-step NARX predictions `ŷ_k = f(x_{k−1})` for the scored samples, raw units.
    pub fn predict_narx<M: NarxPredictor>(&self, model: &M, lags: Lags, su: &Scaler, sy: &Scaler) -> Result<Vec<DVector<f64>>> {
        if self.warmup < lags.first_index() + 1 {
            return Err(Error::InvalidConfig(format!("test warm-up {} is shorter than the NARX lags", self.warmup)));
        }
        let mut ds = Dataset::narx(lags);
        for (t, y) in self.outputs.iter().enumerate() {
            ds.push_output(sy.scale(y)?)?;
            if t + 1 < self.len() {
                ds.push_input(su.scale(&self.inputs[t])?)?;
            }
        }
        (self.warmup..self.len())
            .map(|k| {
                let x = ds.regressor(k - 1).expect("regressor exists past the warm-up");
                sy.unscale(&model.predict(x)?)
            })
            .collect()
    }

    pub fn evaluate_narx<M: NarxPredictor>(&self, model: &M, lags: Lags, su: &Scaler, sy: &Scaler) -> Result<TestScore> {
        Ok(self.score(&self.predict_narx(model, lags, su, sy)?))
    }

    /// One-step predictions `f_y(x_{k|k−1})` from a fixed-parameter state filter
    /// started at `x = 0`, raw units.
    pub fn predict_ss<S: StateSpaceModel>(&self, model: &S, h: &EkfHyper, su: &Scaler, sy: &Scaler) -> Result<Vec<DVector<f64>>> {
        let us: Vec<DVector<f64>> = self.inputs.iter().map(|u| su.scale(u)).collect::<Result<_>>()?;
        let ys: Vec<DVector<f64>> = self.outputs.iter().map(|y| sy.scale(y)).collect::<Result<_>>()?;
        let pred = predict_outputs(model, &us, &ys, &DVector::zeros(model.n_x()), h)?;
        pred[self.warmup..].iter().map(|y| sy.unscale(y)).collect()
    }

    pub fn evaluate_ss<S: StateSpaceModel>(&self, model: &S, h: &EkfHyper, su: &Scaler, sy: &Scaler) -> Result<TestScore> {
        Ok(self.score(&self.predict_ss(model, h, su, sy)?))
    }

    /// CSV `k,u,y` for scalar plants; the final row has an empty input.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        if self.outputs.first().is_some_and(|y| y.len() != 1) || self.inputs.first().is_some_and(|u| u.len() != 1) {
            return Err(Error::InvalidConfig("test-set CSV supports scalar inputs and outputs".into()));
        }
        let mut wr = csv::Writer::from_writer(w);
        for (k, y) in self.outputs.iter().enumerate() {
            let u = self.inputs.get(k).map_or(f64::NAN, |u| u[0]);
            wr.serialize(Row { k, u, y: y[0] })?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, warmup: usize) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let (mut inputs, mut outputs) = (Vec::new(), Vec::new());
        for row in rd.deserialize::<Row>() {
            let row = row?;
            if row.k != outputs.len() {
                return Err(Error::parse("test-set rows are not consecutive"));
            }
            outputs.push(DVector::from_element(1, row.y));
            if !row.u.is_nan() {
                inputs.push(DVector::from_element(1, row.u));
            }
        }
        if outputs.is_empty() || inputs.len() + 1 != outputs.len() {
            return Err(Error::parse("test set needs one input fewer than outputs"));
        }
        Ok(TestSet { inputs, outputs, warmup })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load_csv(path: &Path, warmup: usize) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, warmup)
    }
}
