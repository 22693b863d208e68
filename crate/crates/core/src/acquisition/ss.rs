//! Pool scoring over augmented state-input points `q = [x; u]`.

use nalgebra::DVector;

use super::idw::{coeffs_from_d2, first_hit, exploration_from_d2, sq_dist, variance_and_exploration, FlatPoints, IdwKernel};
use super::narx::{base_d2, min_of, slot_d2, spread};
use super::penalty::{LooCache, PenaltyConfig};
use super::{argmax, score_all, Scored, Selection, Strategy};
use crate::error::{Error, Result};
use crate::models::StateSpaceModel;
use crate::signals::InputPool;

/// Everything a state-space selection needs at step `k`.
#[derive(Clone, Copy)]
pub struct SsContext<'a, S> {
    pub model: &'a S,
    pub pool: &'a InputPool,
    /// Current estimate `x_{k|k}`.
    pub x_now: &'a DVector<f64>,
    /// Reconstructed `x_{0|k} … x_{k|k}`; at least one longer than `inputs`.
    pub states: &'a [DVector<f64>],
    /// `u_0 … u_{k−1}`.
    pub inputs: &'a [DVector<f64>],
    /// `y_0 … y_k`.
    pub outputs: &'a [DVector<f64>],
    pub delta: f64,
    /// Weight of the state term against the output term in the variance.
    pub alpha: f64,
    pub kernel: IdwKernel,
    pub penalty: &'a PenaltyConfig,
    /// Replicas with their own current state estimates, for QBC.
    pub committee: Option<&'a [(S, DVector<f64>)]>,
    /// Steps since the trajectory was reconstructed, and the reconstruction interval.
    pub age: usize,
    pub interval: usize,
    pub parallel: bool,
}

struct Prepared {
    points: FlatPoints,
    base: Vec<f64>,
    /// `r_i = [y_{i+1}; x_{i+1|k}]`
    targets: FlatPoints,
    out_residuals: Vec<f64>,
    kappa: f64,
}

impl<'a, S: StateSpaceModel> SsContext<'a, S> {
    fn check(&self) -> Result<()> {
        if self.age >= self.interval.max(1) {
            return Err(Error::StaleTrajectory { age: self.age, interval: self.interval });
        }
        if self.pool.is_empty() {
            return Err(Error::InvalidPool("empty pool".into()));
        }
        if !(self.delta >= 0.0) || !(self.alpha > 0.0) {
            return Err(Error::InvalidConfig("need delta ≥ 0 and alpha > 0".into()));
        }
        let k = self.inputs.len();
        if k == 0 {
            return Err(Error::InsufficientData("no stored samples to score against".into()));
        }
        if self.states.len() < k + 1 || self.outputs.len() < k + 1 {
            return Err(Error::InsufficientHistory { needed: k + 1, have: self.states.len().min(self.outputs.len()) });
        }
        let nx = self.model.n_x();
        if self.x_now.len() != nx {
            return Err(Error::DimensionMismatch { expected: nx, got: self.x_now.len() });
        }
        if self.pool.dim() != self.model.n_u() {
            return Err(Error::DimensionMismatch { expected: self.model.n_u(), got: self.pool.dim() });
        }
        Ok(())
    }

    fn prepare(&self) -> Result<Prepared> {
        self.check()?;
        let (nx, nu, ny) = (self.model.n_x(), self.model.n_u(), self.model.n_y());
        let k = self.inputs.len();
        let mut points = FlatPoints::new(nx + nu);
        let mut targets = FlatPoints::new(ny + nx);
        let mut q = Vec::with_capacity(nx + nu);
        let mut r = Vec::with_capacity(ny + nx);
        for i in 0..k {
            q.clear();
            q.extend(self.states[i].iter());
            q.extend(self.inputs[i].iter());
            points.push(&q);
            r.clear();
            r.extend(self.outputs[i + 1].iter());
            r.extend(self.states[i + 1].iter());
            targets.push(&r);
        }
        let mut out_residuals = Vec::new();
        let mut kappa = 0.0;
        if self.penalty.needs_kappa() {
            out_residuals = (0..k)
                .map(|i| {
                    let yhat = self.model.output(self.model.state_update(self.states[i].as_slice(), self.inputs[i].as_slice()).as_slice());
                    sq_dist(yhat.as_slice(), self.outputs[i + 1].as_slice())
                })
                .collect();
            let cv: Vec<f64> = out_residuals.iter().map(|r| r.sqrt()).collect();
            kappa = match LooCache::from_points(&points, self.kernel).kappa(&out_residuals, &cv, self.penalty.alpha_quantile) {
                Ok(v) => v,
                Err(Error::InsufficientData(_)) => 0.0,
                Err(e) => return Err(e),
            };
        }
        let mut template = self.x_now.as_slice().to_vec();
        template.extend(std::iter::repeat_n(0.0, nu));
        let base = base_d2(&points, &template, &(nx..nx + nu));
        Ok(Prepared { points, base, targets, out_residuals, kappa })
    }

    /// Scores of every pool candidate for `strategy`; `Passive` is rejected.
    pub fn score_pool(&self, strategy: Strategy) -> Result<Vec<Scored>> {
        if strategy == Strategy::Passive {
            return Err(Error::InvalidConfig("passive inputs are drawn at random, not scored".into()));
        }
        let committee = if strategy == Strategy::Qbc {
            Some(
                self.committee
                    .filter(|c| c.len() >= 2)
                    .ok_or_else(|| Error::InvalidConfig("QBC needs a committee of at least 2 replicas".into()))?,
            )
        } else {
            None
        };
        let prep = self.prepare()?;
        let nx = self.model.n_x();
        let slot = nx..nx + self.model.n_u();
        let f = |i: usize| {
            let u = self.pool.get(i);
            let d2 = slot_d2(&prep.points, &prep.base, &slot, u.as_slice());
            let x_next = self.model.state_update(self.x_now.as_slice(), u.as_slice());
            let yhat = self.model.output(x_next.as_slice());
            let p = if self.penalty.is_active() {
                let margin = if self.penalty.needs_kappa() {
                    prep.kappa * variance_and_exploration(&d2, &prep.out_residuals, self.kernel).0.max(0.0).sqrt()
                } else {
                    0.0
                };
                self.penalty.evaluate(yhat.as_slice(), margin)
            } else {
                0.0
            };
            let score = match strategy {
                Strategy::Ideal => {
                    let s2 = self.variance(&d2, &prep, &yhat, &x_next);
                    s2 + (self.delta * exploration_from_d2(&d2, self.kernel) - p)
                }
                Strategy::Gsx => min_of(&d2) - p,
                Strategy::Igs => {
                    let mut r = yhat.as_slice().to_vec();
                    r.extend(x_next.iter());
                    let dy = prep.targets.rows().map(|t| sq_dist(t, &r)).fold(f64::INFINITY, f64::min);
                    min_of(&d2) * dy - p
                }
                Strategy::Qbc => {
                    let preds: Vec<Vec<f64>> = committee
                        .unwrap_or(&[])
                        .iter()
                        .map(|(m, x)| {
                            let xn = m.state_update(x.as_slice(), u.as_slice());
                            m.output(xn.as_slice()).as_slice().to_vec()
                        })
                        .collect();
                    spread(&preds) - p
                }
                Strategy::Passive => unreachable!(),
            };
            Scored { score, penalty: p }
        };
        Ok(score_all(self.pool.len(), self.parallel, f))
    }

    /// `Σ_j v_j(q) (‖ŷ(q) − y_{j+1}‖² + α‖x⁺(q) − x_{j+1|k}‖²)`.
    fn variance(&self, d2: &[f64], prep: &Prepared, yhat: &DVector<f64>, x_next: &DVector<f64>) -> f64 {
        let ny = yhat.len();
        let term = |j: usize| {
            let t = prep.targets.row(j);
            sq_dist(&t[..ny], yhat.as_slice()) + self.alpha * sq_dist(&t[ny..], x_next.as_slice())
        };
        if let Some(h) = first_hit(d2) {
            return term(h);
        }
        let v = coeffs_from_d2(d2, self.kernel);
        v.iter().enumerate().map(|(j, vj)| vj * term(j)).sum()
    }

    pub fn select(&self, strategy: Strategy) -> Result<Selection> {
        Ok(argmax(&self.score_pool(strategy)?))
    }
}
