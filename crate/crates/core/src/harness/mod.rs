//! Experiment loops, metrics, sweeps and persistence.
//!
//! Both loops share one timeline. Steps `k < N_i` measure `y_k` and apply a
//! uniformly drawn pool input. Scalers are then fitted on those samples and
//! the model is initialized. From `k = N_i` to `N` each step measures `y_k`,
//! updates the estimator, and (for `k < N`) selects `u_k`. Noise, passive
//! inputs and initial weights come from separate streams of the run seed, so
//! every strategy sees the same first `N_i` samples.

pub mod config;
pub mod metrics;
mod narx_run;
mod ss_run;
pub mod sweep;
pub mod testset;
pub mod trace;

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use config::{EkfSettings, ExperimentConfig, ModelConfig, ModelKind, PenaltySettings, RunConfig};
pub use metrics::{Aggregate, MetricsReport, RunMetrics, Summary};
pub use sweep::{sweep, Curve, SweepResult};
pub use testset::{TestScore, TestSet};
pub use trace::{RunStatus, RunTrace, StepRecord};

use crate::acquisition::{PenaltyConfig, Strategy};
use crate::error::{Error, Result};
use crate::estimation::EkfHyper;
use crate::models::{Checkpoint, NarxPredictor, StateSpaceModel};
use crate::plants::PlantSpec;
use crate::rng::{stream, Stream};
use crate::signals::{Dataset, Lags, Scaler};

/// A configured experiment with its plant and held-out test set.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub plant: PlantSpec,
    pub test: TestSet,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub strategy: Strategy,
    pub seed: u64,
    pub trace: RunTrace,
    pub metrics: RunMetrics,
    /// `(k, test RMSE)` from `N_i` on, every `rmse_stride` steps and at `N`.
    pub curve: Vec<(usize, f64)>,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let plant = cfg.plant_spec()?;
        plant.validate()?;
        let (lo, hi) = cfg.bounds(&plant);
        if lo.len() != plant.n_y() || hi.len() != plant.n_y() {
            return Err(Error::DimensionMismatch { expected: plant.n_y(), got: lo.len() });
        }
        let test = TestSet::generate(&plant, cfg.run.n_test, test_warmup(&cfg), cfg.run.test_seed)?;
        Ok(Experiment { cfg, plant, test })
    }

    /// Reuse an already generated test set.
    pub fn with_test_set(cfg: ExperimentConfig, test: TestSet) -> Result<Self> {
        cfg.validate()?;
        let plant = cfg.plant_spec()?;
        plant.validate()?;
        Ok(Experiment { test: test.with_warmup(test_warmup(&cfg)), cfg, plant })
    }

    /// Run once; a numerical breakdown ends the run early with an aborted trace.
    pub fn run(&self, strategy: Strategy, seed: u64) -> Result<RunOutcome> {
        if self.cfg.model.kind.is_state_space() {
            ss_run::run(self, strategy, seed)
        } else {
            narx_run::run(self, strategy, seed)
        }
    }

    pub fn lags(&self) -> Lags {
        let m = &self.cfg.model;
        Lags::new(m.na, m.nb, self.plant.n_y(), self.plant.n_u())
    }

    /// Penalty in scaled output units.
    pub(crate) fn penalty(&self, sy: &Scaler) -> Result<PenaltyConfig> {
        let p = &self.cfg.penalty;
        if !p.enabled {
            return Ok(PenaltyConfig::none());
        }
        let (lo, hi) = self.cfg.bounds(&self.plant);
        let cfg = PenaltyConfig {
            y_min: lo.iter().enumerate().map(|(i, v)| sy.scale_at(i, *v)).collect(),
            y_max: hi.iter().enumerate().map(|(i, v)| sy.scale_at(i, *v)).collect(),
            rho: p.rho,
            mode: p.mode,
            alpha_quantile: p.alpha_quantile,
            beta_cap: p.beta_cap,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn narx_hyper(&self, n_theta: usize) -> EkfHyper {
        let e = &self.cfg.ekf;
        EkfHyper::narx(n_theta, self.plant.n_y(), e.p0, e.q_theta, e.r)
    }

    pub fn joint_hyper(&self, n_x: usize, n_theta: usize) -> EkfHyper {
        let e = &self.cfg.ekf;
        EkfHyper::joint(n_x, n_theta, self.plant.n_y(), e.p0_x, e.p0, e.q_x, e.q_theta, e.r)
    }

    /// Metrics of a finished run from its trace and final model alone.
    pub fn evaluate(&self, trace: &RunTrace, model: &Checkpoint, strategy: Strategy, seed: u64) -> Result<RunMetrics> {
        let r = &self.cfg.run;
        let (lo, hi) = self.cfg.bounds(&self.plant);
        let outputs = trace.outputs();
        let mcv = metrics::mcv(&outputs, r.n_init, r.n, &lo, &hi);
        let (su, sy) = scalers_from_trace(trace, r.n_init)?;
        let completed = trace.status.is_completed();
        let us: Vec<DVector<f64>> = trace.records.iter().filter(|s| !s.u.is_empty()).map(|s| su.scale(&DVector::from_column_slice(&s.u))).collect::<Result<_>>()?;
        let ys: Vec<DVector<f64>> = trace.records.iter().map(|s| sy.scale(&DVector::from_column_slice(&s.y))).collect::<Result<_>>()?;
        let (rmse_train, test) = match model {
            Checkpoint::RnnSs(m) => (self.train_rmse_ss(m, &us, &ys, &sy)?, self.test.evaluate_ss(m, &self.joint_hyper(m.n_x(), m.n_theta()), &su, &sy)?),
            Checkpoint::LinearSs(m) => (self.train_rmse_ss(m, &us, &ys, &sy)?, self.test.evaluate_ss(m, &self.joint_hyper(m.n_x(), m.n_theta()), &su, &sy)?),
            other => {
                let m = other.as_narx().expect("remaining kinds are NARX");
                let lags = self.lags();
                let mut ds = Dataset::narx(lags);
                for (t, y) in ys.iter().enumerate() {
                    ds.push_output(y.clone())?;
                    if let Some(u) = us.get(t) {
                        ds.push_input(u.clone())?;
                    }
                }
                let (mut yt, mut yp) = (Vec::new(), Vec::new());
                for (_, x, y) in ds.pairs() {
                    yt.push(sy.unscale(y)?.as_slice().to_vec());
                    yp.push(sy.unscale(&m.predict(x)?)?.as_slice().to_vec());
                }
                (metrics::rmse(&yt, &yp), self.test.evaluate_narx(&m, lags, &su, &sy)?)
            }
        };
        Ok(RunMetrics { strategy, seed, completed, rmse_train, rmse_test: test.rmse, r2_test: test.r2, mcv })
    }

    fn train_rmse_ss<S: StateSpaceModel>(&self, m: &S, us: &[DVector<f64>], ys: &[DVector<f64>], sy: &Scaler) -> Result<f64> {
        let pred = crate::estimation::predict_outputs(m, us, ys, &DVector::zeros(m.n_x()), &self.joint_hyper(m.n_x(), m.n_theta()))?;
        let yt: Vec<Vec<f64>> = ys.iter().map(|y| sy.unscale(y).map(|v| v.as_slice().to_vec())).collect::<Result<_>>()?;
        let yp: Vec<Vec<f64>> = pred.iter().map(|y| sy.unscale(y).map(|v| v.as_slice().to_vec())).collect::<Result<_>>()?;
        Ok(metrics::rmse(&yt, &yp))
    }
}

fn test_warmup(cfg: &ExperimentConfig) -> usize {
    if cfg.model.kind.is_state_space() {
        0
    } else {
        cfg.model.na.max(cfg.model.nb).max(1)
    }
}

/// Scalers fitted on the passive samples `k < n_init`, as the run itself does.
pub fn scalers_from_trace(trace: &RunTrace, n_init: usize) -> Result<(Scaler, Scaler)> {
    if trace.records.len() < n_init {
        return Err(Error::InsufficientHistory { needed: n_init, have: trace.records.len() });
    }
    let head = &trace.records[..n_init];
    let us: Vec<DVector<f64>> = head.iter().map(|r| DVector::from_column_slice(&r.u)).collect();
    let ys: Vec<DVector<f64>> = head.iter().map(|r| DVector::from_column_slice(&r.y)).collect();
    Ok((Scaler::fit(&us)?, Scaler::fit(&ys)?))
}

/// Ground-truth plant stepping with the run's noise and passive-input streams.
pub(crate) struct Sim<'a> {
    plant: &'a PlantSpec,
    x: DVector<f64>,
    noise: ChaCha8Rng,
    passive: ChaCha8Rng,
}

impl<'a> Sim<'a> {
    pub fn new(plant: &'a PlantSpec, seed: u64) -> Self {
        Sim { plant, x: plant.x0.clone(), noise: stream(seed, Stream::Noise), passive: stream(seed, Stream::PassiveInputs) }
    }

    pub fn measure(&mut self) -> DVector<f64> {
        self.plant.measure(&self.x, &mut self.noise)
    }

    pub fn draw(&mut self) -> usize {
        self.passive.random_range(0..self.plant.pool.len())
    }

    pub fn apply(&mut self, index: usize) -> Result<()> {
        self.x = self.plant.integrate_step(&self.x, self.plant.pool.get(index))?;
        Ok(())
    }
}

/// The passive prefix `k < N_i`, identical for every strategy at a given seed.
pub(crate) fn passive_phase(sim: &mut Sim<'_>, n_init: usize, trace: &mut RunTrace) -> Result<()> {
    for k in 0..n_init {
        let t0 = Instant::now();
        let y = sim.measure();
        let i = sim.draw();
        sim.apply(i)?;
        trace.records.push(StepRecord {
            k,
            u: sim.plant.pool.get(i).as_slice().to_vec(),
            y: y.as_slice().to_vec(),
            yhat: Vec::new(),
            score: 0.0,
            penalty: 0.0,
            step_ms: ms(t0),
            acq_ms: 0.0,
        });
    }
    Ok(())
}

pub(crate) fn ms(t0: Instant) -> f64 {
    t0.elapsed().as_secs_f64() * 1e3
}

/// Errors that end a run early instead of failing it.
pub(crate) fn is_abort(e: &Error) -> bool {
    matches!(e, Error::NumericalBreakdown(_) | Error::StepSizeUnderflow { .. })
}

/// Finish a run: on an abortable error keep the partial trace, otherwise propagate.
pub(crate) fn finish(
    exp: &Experiment,
    strategy: Strategy,
    seed: u64,
    mut trace: RunTrace,
    curve: Vec<(usize, f64)>,
    result: Result<()>,
) -> Result<RunOutcome> {
    match result {
        Ok(()) => {
            let ck = trace.checkpoint.clone().expect("completed runs carry a model");
            let metrics = exp.evaluate(&trace, &ck, strategy, seed)?;
            Ok(RunOutcome { strategy, seed, trace, metrics, curve })
        }
        Err(e) if is_abort(&e) => {
            let at = trace.records.len();
            log::warn!("run {strategy}/{seed} aborted at step {at}: {e}");
            trace.status = RunStatus::Aborted { at, reason: e.to_string() };
            let (lo, hi) = exp.cfg.bounds(&exp.plant);
            let metrics = RunMetrics {
                strategy,
                seed,
                completed: false,
                rmse_train: f64::NAN,
                rmse_test: f64::NAN,
                r2_test: f64::NAN,
                mcv: metrics::mcv(&trace.outputs(), exp.cfg.run.n_init, exp.cfg.run.n, &lo, &hi),
            };
            Ok(RunOutcome { strategy, seed, trace, metrics, curve })
        }
        Err(e) => Err(e),
    }
}

/// `true` when the test RMSE should be recorded after the update at step `k`.
pub(crate) fn curve_due(cfg: &RunConfig, k: usize) -> bool {
    k == cfg.n || (cfg.rmse_stride > 0 && (k - cfg.n_init) % cfg.rmse_stride == 0)
}
