use std::time::Instant;

use nalgebra::DVector;

use super::{curve_due, finish, ms, passive_phase, scalers_from_trace, Experiment, RunOutcome, Sim, StepRecord};
use crate::acquisition::{select_ideal_multistep, NarxContext, NarxMemory, Selection, Strategy};
use crate::error::Result;
use crate::estimation::{batch_init_narx, Committee, EkfState, SkipSchedule};
use crate::harness::config::ModelKind;
use crate::harness::trace::RunTrace;
use crate::models::{Checkpoint, LinearArx, NarxModel, NarxNet, NarxPredictor};
use crate::rng::{stream, Stream};
use crate::signals::Dataset;

pub(super) fn run(exp: &Experiment, strategy: Strategy, seed: u64) -> Result<RunOutcome> {
    let mut trace = RunTrace::new();
    let mut curve = Vec::new();
    let res = steps(exp, strategy, seed, &mut trace, &mut curve);
    finish(exp, strategy, seed, trace, curve, res)
}

fn steps(exp: &Experiment, strategy: Strategy, seed: u64, trace: &mut RunTrace, curve: &mut Vec<(usize, f64)>) -> Result<()> {
    let cfg = &exp.cfg;
    let r = &cfg.run;
    let plant = &exp.plant;
    let lags = exp.lags();
    let mut sim = Sim::new(plant, seed);
    passive_phase(&mut sim, r.n_init, trace)?;

    let (su, sy) = scalers_from_trace(trace, r.n_init)?;
    let mut ds = Dataset::narx(lags);
    for rec in &trace.records {
        ds.push_output(sy.scale(&DVector::from_column_slice(&rec.y))?)?;
        ds.push_input(su.scale(&DVector::from_column_slice(&rec.u))?)?;
    }
    let mut model = match cfg.model.kind {
        ModelKind::LinearArx => NarxModel::Linear(LinearArx::zeros(lags.n_x(), lags.ny)),
        _ => NarxModel::Net(NarxNet::init(lags.n_x(), cfg.model.n1, cfg.model.n2, lags.ny, &mut stream(seed, Stream::InitWeights))),
    };
    let h = exp.narx_hyper(model.n_theta());
    // the pair (x_{N_i−1}, y_{N_i}) is absorbed in the first loop step
    let mut est = batch_init_narx(&mut model, &ds, &h, r.epochs)?;
    let pool = plant.pool.scaled(&su)?;
    let penalty = exp.penalty(&sy)?;
    let mut memory = NarxMemory::new(lags.n_x(), r.kernel, penalty.needs_kappa());
    let mut committee = if strategy == Strategy::Qbc {
        let sched = SkipSchedule::Random(stream(seed, Stream::Committee));
        Some(Committee::new((model.clone(), est.clone()), r.committee, sched)?.with_parallel(r.parallel))
    } else {
        None
    };

    for k in r.n_init..=r.n {
        let t0 = Instant::now();
        let y_raw = sim.measure();
        let y = sy.scale(&y_raw)?;
        ds.push_output(y.clone())?;
        let mut yhat = Vec::new();
        if let Some(x) = ds.regressor(k - 1).cloned() {
            yhat = sy.unscale(&model.predict(&x)?)?.as_slice().to_vec();
            est.update_narx(&mut model, &h, x.as_slice(), y.as_slice())?;
            if let Some(c) = &mut committee {
                c.update(|(m, s): &mut (NarxModel, EkfState)| s.update_narx(m, &h, x.as_slice(), y.as_slice()))?;
            }
        }
        if curve_due(r, k) {
            curve.push((k, exp.test.evaluate_narx(&model, lags, &su, &sy)?.rmse));
        }

        let mut rec = StepRecord { k, u: Vec::new(), y: y_raw.as_slice().to_vec(), yhat, score: 0.0, penalty: 0.0, step_ms: 0.0, acq_ms: 0.0 };
        if k < r.n {
            let ta = Instant::now();
            let sel = if strategy == Strategy::Passive {
                Selection { index: sim.draw(), score: 0.0, penalty: 0.0 }
            } else {
                memory.sync(&ds);
                let replicas: Option<Vec<NarxModel>> = committee.as_ref().map(|c| c.replicas().iter().map(|(m, _)| m.clone()).collect());
                let ctx = NarxContext {
                    ds: &ds,
                    memory: &memory,
                    model: &model,
                    pool: &pool,
                    delta: r.delta,
                    kernel: r.kernel,
                    penalty: &penalty,
                    committee: replicas.as_deref(),
                    parallel: r.parallel,
                };
                if strategy == Strategy::Ideal && r.horizon > 1 {
                    select_ideal_multistep(&ctx, r.horizon, r.horizon_budget)?.first()
                } else {
                    ctx.select(strategy)?
                }
            };
            rec.acq_ms = ms(ta);
            ds.push_input(pool.get(sel.index).clone())?;
            sim.apply(sel.index)?;
            rec.u = plant.pool.get(sel.index).as_slice().to_vec();
            rec.score = sel.score;
            rec.penalty = sel.penalty;
        }
        rec.step_ms = ms(t0);
        trace.records.push(rec);
    }
    trace.checkpoint = Some(Checkpoint::from(model));
    Ok(())
}
