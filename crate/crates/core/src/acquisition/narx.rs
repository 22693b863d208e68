//! Pool scoring in NARX regressor space.

use nalgebra::DVector;

use super::idw::{sq_dist, variance_and_exploration, FlatPoints, IdwKernel};
use super::penalty::{LooCache, PenaltyConfig};
use super::{argmax, score_all, Scored, Selection, Strategy};
use crate::error::{Error, Result};
use crate::models::NarxPredictor;
use crate::signals::{Dataset, InputPool, Regressor};

/// Regressors of every measured pair, kept in step with a growing dataset.
#[derive(Debug, Clone)]
pub struct NarxMemory {
    points: FlatPoints,
    loo: Option<LooCache>,
}

impl NarxMemory {
    /// `with_loo` keeps the pairwise weight cache needed for `κ_α`.
    pub fn new(dim: usize, kernel: IdwKernel, with_loo: bool) -> Self {
        NarxMemory { points: FlatPoints::new(dim), loo: with_loo.then(|| LooCache::new(dim, kernel)) }
    }

    pub fn from_dataset(ds: &Dataset, kernel: IdwKernel, with_loo: bool) -> Result<Self> {
        let lags = ds.lags().ok_or_else(|| Error::InvalidConfig("NARX memory needs a NARX dataset".into()))?;
        let mut m = Self::new(lags.n_x(), kernel, with_loo);
        m.sync(ds);
        Ok(m)
    }

    /// Append pairs that appeared since the last call.
    pub fn sync(&mut self, ds: &Dataset) {
        let have = self.points.len();
        for (_, x, _) in ds.pairs().skip(have) {
            self.points.push(x.as_slice());
            if let Some(l) = &mut self.loo {
                l.push(x.as_slice());
            }
        }
    }

    pub fn points(&self) -> &FlatPoints {
        &self.points
    }

    pub fn loo(&self) -> Option<&LooCache> {
        self.loo.as_ref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Everything a NARX selection needs at step `k`, where `y_k` is the newest
/// output and `u_k` is about to be chosen.
#[derive(Clone, Copy)]
pub struct NarxContext<'a, M> {
    pub ds: &'a Dataset,
    pub memory: &'a NarxMemory,
    pub model: &'a M,
    /// Candidates in scaled units.
    pub pool: &'a InputPool,
    pub delta: f64,
    pub kernel: IdwKernel,
    pub penalty: &'a PenaltyConfig,
    /// Replicas for QBC.
    pub committee: Option<&'a [M]>,
    pub parallel: bool,
}

/// Per-step quantities shared by every candidate.
pub(crate) struct Prepared {
    pub residuals: Vec<f64>,
    pub kappa: f64,
    pub template: Regressor,
    pub base: Vec<f64>,
    pub slot: std::ops::Range<usize>,
}

impl<'a, M: NarxPredictor> NarxContext<'a, M> {
    fn check(&self) -> Result<()> {
        if self.pool.is_empty() {
            return Err(Error::InvalidPool("empty pool".into()));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::InvalidConfig("delta must be nonnegative".into()));
        }
        if self.memory.len() != self.ds.n_pairs() {
            return Err(Error::InvalidConfig(format!(
                "memory holds {} points but the dataset has {} pairs",
                self.memory.len(),
                self.ds.n_pairs()
            )));
        }
        if self.memory.is_empty() {
            return Err(Error::InsufficientData("no stored samples to score against".into()));
        }
        if self.ds.len_outputs() != self.ds.len_inputs() + 1 {
            return Err(Error::InvalidConfig("the newest output must be measured before selecting".into()));
        }
        Ok(())
    }

    pub(crate) fn prepare(&self) -> Result<Prepared> {
        self.check()?;
        let lags = self.ds.lags().ok_or_else(|| Error::InvalidConfig("NARX acquisition needs a NARX dataset".into()))?;
        let mut residuals = Vec::with_capacity(self.memory.len());
        for (_, x, y) in self.ds.pairs() {
            let yhat = self.model.predict_slice(x.as_slice());
            residuals.push(yhat.iter().zip(y.iter()).map(|(a, b)| (b - a) * (b - a)).sum());
        }
        let kappa = if self.penalty.needs_kappa() { self.kappa(&residuals)? } else { 0.0 };
        let k = self.ds.len_outputs() - 1;
        let template = self.ds.build_regressor(k, &DVector::zeros(self.ds.nu()))?;
        let slot = lags.input_slot();
        let base = base_d2(self.memory.points(), template.as_slice(), &slot);
        Ok(Prepared { residuals, kappa, template, base, slot })
    }

    /// `κ_α`, or 0 when too few usable ratios exist (the margin then vanishes).
    fn kappa(&self, residuals: &[f64]) -> Result<f64> {
        let cv: Vec<f64> = residuals.iter().map(|r| r.sqrt()).collect();
        let owned;
        let cache = match self.memory.loo() {
            Some(c) => c,
            None => {
                owned = LooCache::from_points(self.memory.points(), self.kernel);
                &owned
            }
        };
        match cache.kappa(residuals, &cv, self.penalty.alpha_quantile) {
            Ok(k) => Ok(k),
            Err(Error::InsufficientData(_)) => Ok(0.0),
            Err(e) => Err(e),
        }
    }

    /// Scores of every pool candidate for `strategy`; `Passive` is rejected.
    pub fn score_pool(&self, strategy: Strategy) -> Result<Vec<Scored>> {
        let prep = self.prepare()?;
        let committee = match strategy {
            Strategy::Passive => {
                return Err(Error::InvalidConfig("passive inputs are drawn at random, not scored".into()))
            }
            Strategy::Qbc => Some(
                self.committee
                    .filter(|c| c.len() >= 2)
                    .ok_or_else(|| Error::InvalidConfig("QBC needs a committee of at least 2 replicas".into()))?,
            ),
            _ => None,
        };
        let outputs = self.ds.outputs();
        let f = |i: usize| {
            let u = self.pool.get(i);
            let mut x = prep.template.as_slice().to_vec();
            x[prep.slot.clone()].copy_from_slice(u.as_slice());
            let d2 = slot_d2(self.memory.points(), &prep.base, &prep.slot, u.as_slice());
            let need_s2 = strategy == Strategy::Ideal || self.penalty.needs_kappa();
            let (s2, z) = if need_s2 { variance_and_exploration(&d2, &prep.residuals, self.kernel) } else { (0.0, 0.0) };
            let yhat = (self.penalty.is_active() || strategy == Strategy::Igs).then(|| self.model.predict_slice(&x));
            let p = match &yhat {
                Some(y) if self.penalty.is_active() => self.penalty.evaluate(y, prep.kappa * s2.max(0.0).sqrt()),
                _ => 0.0,
            };
            let score = match strategy {
                Strategy::Ideal => s2 + (self.delta * z - p),
                Strategy::Gsx => min_of(&d2) - p,
                Strategy::Igs => {
                    let y = yhat.as_deref().unwrap_or(&[]);
                    let dy = outputs.iter().map(|o| sq_dist(o.as_slice(), y)).fold(f64::INFINITY, f64::min);
                    min_of(&d2) * dy - p
                }
                Strategy::Qbc => committee_spread(committee.unwrap_or(&[]), &x) - p,
                Strategy::Passive => unreachable!(),
            };
            Scored { score, penalty: p }
        };
        Ok(score_all(self.pool.len(), self.parallel, f))
    }

    pub fn select(&self, strategy: Strategy) -> Result<Selection> {
        Ok(argmax(&self.score_pool(strategy)?))
    }

    pub fn select_ideal(&self) -> Result<Selection> {
        self.select(Strategy::Ideal)
    }

    pub fn select_gsx(&self) -> Result<Selection> {
        self.select(Strategy::Gsx)
    }

    pub fn select_igs(&self) -> Result<Selection> {
        self.select(Strategy::Igs)
    }

    pub fn select_qbc(&self) -> Result<Selection> {
        self.select(Strategy::Qbc)
    }
}

/// `Σ_j ‖ŷ^j − mean ŷ‖²` over replica predictions at `x`.
pub(crate) fn committee_spread<M: NarxPredictor>(replicas: &[M], x: &[f64]) -> f64 {
    let preds: Vec<Vec<f64>> = replicas.iter().map(|m| m.predict_slice(x)).collect();
    spread(&preds)
}

pub(crate) fn spread(preds: &[Vec<f64>]) -> f64 {
    let n = preds.len() as f64;
    let ny = preds.first().map_or(0, |p| p.len());
    let mut total = 0.0;
    for i in 0..ny {
        let mean = preds.iter().map(|p| p[i]).sum::<f64>() / n;
        total += preds.iter().map(|p| (p[i] - mean) * (p[i] - mean)).sum::<f64>();
    }
    total
}

pub(crate) fn min_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Squared distance to each stored point over every coordinate outside `slot`.
pub(crate) fn base_d2(points: &FlatPoints, template: &[f64], slot: &std::ops::Range<usize>) -> Vec<f64> {
    points
        .rows()
        .map(|r| {
            let mut s = 0.0;
            for (i, (a, b)) in r.iter().zip(template).enumerate() {
                if !slot.contains(&i) {
                    s += (a - b) * (a - b);
                }
            }
            s
        })
        .collect()
}

/// Full squared distances once the slot holds `u`.
pub(crate) fn slot_d2(points: &FlatPoints, base: &[f64], slot: &std::ops::Range<usize>, u: &[f64]) -> Vec<f64> {
    points
        .rows()
        .zip(base)
        .map(|(r, b)| b + sq_dist(&r[slot.clone()], u))
        .collect()
}
