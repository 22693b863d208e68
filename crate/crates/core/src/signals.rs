//! Signal scaling, NARX regressors, input pools and the sample store.

use std::ops::Range;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-channel standard scaling `(v - mean) / std`.
///
/// The standard deviation uses the population convention (divide by N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Scaler {
    /// Fit mean and population standard deviation per dimension.
    pub fn fit(samples: &[DVector<f64>]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "scaler needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        let dim = samples[0].len();
        let n = samples.len() as f64;
        let mut mean = vec![0.0; dim];
        for s in samples {
            if s.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: s.len() });
            }
            for (m, v) in mean.iter_mut().zip(s.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for s in samples {
            for ((acc, v), m) in var.iter_mut().zip(s.iter()).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let mut std = Vec::with_capacity(dim);
        for (i, v) in var.into_iter().enumerate() {
            let sd = (v / n).sqrt();
            if !(sd > 0.0) || !sd.is_finite() {
                return Err(Error::DegenerateSignal { dim: i });
            }
            std.push(sd);
        }
        Ok(Scaler { mean, std })
    }

    /// Build a scaler from explicit statistics.
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), got: std.len() });
        }
        if let Some(i) = std.iter().position(|s| !(*s > 0.0)) {
            return Err(Error::DegenerateSignal { dim: i });
        }
        Ok(Scaler { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Scaler { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn scale(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(v.len())?;
        Ok(DVector::from_iterator(
            v.len(),
            v.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| (x - m) / s),
        ))
    }

    pub fn unscale(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(v.len())?;
        Ok(DVector::from_iterator(
            v.len(),
            v.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| x * s + m),
        ))
    }

    /// Scale a scalar on channel `i`.
    pub fn scale_at(&self, i: usize, x: f64) -> f64 {
        (x - self.mean[i]) / self.std[i]
    }

    pub fn unscale_at(&self, i: usize, x: f64) -> f64 {
        x * self.std[i] + self.mean[i]
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.mean.len() {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), got: len });
        }
        Ok(())
    }
}

/// Lag structure of a NARX regressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lags {
    pub na: usize,
    pub nb: usize,
    pub ny: usize,
    pub nu: usize,
}

impl Lags {
    pub fn new(na: usize, nb: usize, ny: usize, nu: usize) -> Self {
        Lags { na, nb, ny, nu }
    }

    /// Regressor length `na * ny + nb * nu`.
    pub fn n_x(&self) -> usize {
        self.na * self.ny + self.nb * self.nu
    }

    /// First sample index `k` at which `x_k` can be formed from history.
    pub fn first_index(&self) -> usize {
        self.na.max(self.nb).saturating_sub(1)
    }

    /// Position of the current input `u_k` inside the regressor.
    pub fn input_slot(&self) -> Range<usize> {
        if self.nb == 0 {
            let s = self.na * self.ny;
            s..s
        } else {
            let s = self.na * self.ny;
            s..s + self.nu
        }
    }
}

/// Regressor `[y_k … y_{k-na+1}, u_k … u_{k-nb+1}]`, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    values: DVector<f64>,
    lags: Lags,
}

impl Regressor {
    pub fn from_parts(outputs_newest_first: &[&DVector<f64>], inputs_newest_first: &[&DVector<f64>], lags: Lags) -> Self {
        let mut values = Vec::with_capacity(lags.n_x());
        for y in outputs_newest_first.iter().take(lags.na) {
            values.extend(y.iter());
        }
        for u in inputs_newest_first.iter().take(lags.nb) {
            values.extend(u.iter());
        }
        debug_assert_eq!(values.len(), lags.n_x());
        Regressor { values: DVector::from_vec(values), lags }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn lags(&self) -> Lags {
        self.lags
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }
}

/// Finite set of admissible inputs, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPool {
    candidates: Vec<DVector<f64>>,
}

impl InputPool {
    pub fn new(candidates: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = candidates.first() else {
            return Err(Error::InvalidPool("pool must contain at least one candidate".into()));
        };
        let dim = first.len();
        for (i, c) in candidates.iter().enumerate() {
            if c.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.len() });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidPool(format!("candidate {i} is not finite")));
            }
        }
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| {
            candidates[a]
                .iter()
                .zip(candidates[b].iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for w in order.windows(2) {
            if candidates[w[0]] == candidates[w[1]] {
                return Err(Error::InvalidPool(format!(
                    "duplicate candidates at indices {} and {}",
                    w[0].min(w[1]),
                    w[0].max(w[1])
                )));
            }
        }
        Ok(InputPool { candidates })
    }

    /// Scalar grid `lo, lo + step, …` up to `hi`. When `hi` is not on the grid
    /// it is appended as the final candidate.
    pub fn grid(lo: f64, step: f64, hi: f64) -> Result<Self> {
        if !(step > 0.0) || !(hi >= lo) {
            return Err(Error::InvalidPool(format!("bad grid lo={lo} step={step} hi={hi}")));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        let mut v: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
        let last = *v.last().unwrap();
        if hi - last > 1e-9 * step.max(1.0) {
            v.push(hi);
        }
        Self::new(v.into_iter().map(|x| DVector::from_element(1, x)).collect())
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.candidates[0].len()
    }

    pub fn get(&self, i: usize) -> &DVector<f64> {
        &self.candidates[i]
    }

    pub fn candidates(&self) -> &[DVector<f64>] {
        &self.candidates
    }

    pub fn scaled(&self, scaler: &Scaler) -> Result<Self> {
        let c = self.candidates.iter().map(|c| scaler.scale(c)).collect::<Result<Vec<_>>>()?;
        InputPool::new(c)
    }
}

/// Growing record of scaled inputs and outputs.
///
/// Outputs lead: `y_k` is stored before `u_k` is chosen, so the output
/// sequence is either as long as the input sequence or one longer. In NARX
/// mode every input push also caches the regressor `x_k` once enough history
/// exists.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    ny: usize,
    nu: usize,
    lags: Option<Lags>,
    inputs: Vec<DVector<f64>>,
    outputs: Vec<DVector<f64>>,
    regressors: Vec<DVector<f64>>,
}

impl Dataset {
    pub fn narx(lags: Lags) -> Self {
        Dataset {
            ny: lags.ny,
            nu: lags.nu,
            lags: Some(lags),
            inputs: Vec::new(),
            outputs: Vec::new(),
            regressors: Vec::new(),
        }
    }

    pub fn state_space(ny: usize, nu: usize) -> Self {
        Dataset { ny, nu, lags: None, inputs: Vec::new(), outputs: Vec::new(), regressors: Vec::new() }
    }

    pub fn lags(&self) -> Option<Lags> {
        self.lags
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[DVector<f64>] {
        &self.outputs
    }

    pub fn push_output(&mut self, y: DVector<f64>) -> Result<()> {
        if y.len() != self.ny {
            return Err(Error::DimensionMismatch { expected: self.ny, got: y.len() });
        }
        if self.outputs.len() != self.inputs.len() {
            return Err(Error::InvalidConfig(format!(
                "output y_{} pushed before input u_{}",
                self.outputs.len(),
                self.inputs.len()
            )));
        }
        self.outputs.push(y);
        Ok(())
    }

    pub fn push_input(&mut self, u: DVector<f64>) -> Result<()> {
        if u.len() != self.nu {
            return Err(Error::DimensionMismatch { expected: self.nu, got: u.len() });
        }
        let k = self.inputs.len();
        if self.outputs.len() != k + 1 {
            return Err(Error::InvalidConfig(format!("input u_{k} pushed before output y_{k}")));
        }
        if let Some(lags) = self.lags {
            if k >= lags.first_index() {
                let x = self.build_regressor(k, &u)?;
                debug_assert_eq!(self.regressors.len(), k - lags.first_index());
                self.regressors.push(x.into_values());
            }
        }
        self.inputs.push(u);
        Ok(())
    }

    /// Push `u_k` followed by its response `y_{k+1}`.
    pub fn append_sample(&mut self, u: DVector<f64>, y: DVector<f64>) -> Result<()> {
        self.push_input(u)?;
        self.push_output(y)
    }

    /// Regressor `x_k(u)` with `u` in the current-input slot and every other
    /// slot taken from history.
    pub fn build_regressor(&self, k: usize, u: &DVector<f64>) -> Result<Regressor> {
        let lags = self
            .lags
            .ok_or_else(|| Error::InvalidConfig("regressors need a NARX dataset".into()))?;
        if u.len() != self.nu {
            return Err(Error::DimensionMismatch { expected: self.nu, got: u.len() });
        }
        let depth = lags.na.max(lags.nb);
        if self.outputs.len() <= k || k + 1 < depth || (lags.nb > 1 && self.inputs.len() < k) {
            return Err(Error::InsufficientHistory {
                needed: depth.max(k + 1),
                have: self.outputs.len().min(k + 1),
            });
        }
        let ys: Vec<&DVector<f64>> = (0..lags.na).map(|i| &self.outputs[k - i]).collect();
        let mut us: Vec<&DVector<f64>> = Vec::with_capacity(lags.nb);
        if lags.nb > 0 {
            us.push(u);
            for i in 1..lags.nb {
                us.push(&self.inputs[k - i]);
            }
        }
        Ok(Regressor::from_parts(&ys, &us, lags))
    }

    /// Cached regressor `x_k`, if it has been formed.
    pub fn regressor(&self, k: usize) -> Option<&DVector<f64>> {
        let first = self.lags?.first_index();
        k.checked_sub(first).and_then(|i| self.regressors.get(i))
    }

    pub fn regressors(&self) -> &[DVector<f64>] {
        &self.regressors
    }

    /// Training pairs `(k, x_k, y_{k+1})` whose target has been measured.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, &DVector<f64>, &DVector<f64>)> + '_ {
        let first = self.lags.map(|l| l.first_index()).unwrap_or(0);
        self.regressors
            .iter()
            .enumerate()
            .map(move |(i, x)| (first + i, x))
            .filter_map(move |(k, x)| self.outputs.get(k + 1).map(|y| (k, x, y)))
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs().count()
    }

    pub fn len_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn len_inputs(&self) -> usize {
        self.inputs.len()
    }
}
