use std::time::Instant;

use nalgebra::DVector;

use super::{curve_due, finish, ms, passive_phase, scalers_from_trace, Experiment, RunOutcome, Sim, StepRecord};
use crate::acquisition::{Selection, SsContext, Strategy};
use crate::error::Result;
use crate::estimation::{reconstruct, refine_with_ekf, train_state_space, Committee, EkfState, LbfgsOptions, ReconstructOptions, SkipSchedule, SmoothedTrajectory};
use crate::harness::trace::RunTrace;
use crate::models::{Checkpoint, RnnShape, RnnSs, StateSpaceModel};
use crate::rng::{stream, Stream};

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
    let mut sim = Sim::new(plant, seed);
    passive_phase(&mut sim, r.n_init, trace)?;

    let (su, sy) = scalers_from_trace(trace, r.n_init)?;
    let mut us: Vec<DVector<f64>> = Vec::with_capacity(r.n);
    let mut ys: Vec<DVector<f64>> = Vec::with_capacity(r.n + 1);
    for rec in &trace.records {
        us.push(su.scale(&DVector::from_column_slice(&rec.u))?);
        ys.push(sy.scale(&DVector::from_column_slice(&rec.y))?);
    }
    let m = &cfg.model;
    let shape = RnnShape { n_x: m.nx, n_u: plant.n_u(), n_y: plant.n_y(), n1x: m.n1x, n2x: m.n2x, n1y: m.n1y };
    let mut model = RnnSs::init(shape, &mut stream(seed, Stream::InitWeights));
    let h = exp.joint_hyper(model.n_x(), model.n_theta());
    // u_{N_i−1} has no measured response yet
    let head = &us[..r.n_init - 1];
    let lo = LbfgsOptions { max_iter: r.lbfgs_iters, ..Default::default() };
    let fit = train_state_space(&mut model, head, &ys, &DVector::zeros(m.nx), &lo)?;
    let mut est = refine_with_ekf(&mut model, head, &ys, &fit.x0, &h)?;
    let pool = plant.pool.scaled(&su)?;
    let penalty = exp.penalty(&sy)?;
    let ropts = ReconstructOptions::default();
    let mut committee = if strategy == Strategy::Qbc {
        let sched = SkipSchedule::Random(stream(seed, Stream::Committee));
        Some(Committee::new((model.clone(), est.clone()), r.committee, sched)?.with_parallel(r.parallel))
    } else {
        None
    };
    let mut traj: Option<SmoothedTrajectory> = None;
    let mut age = 0usize;

    for k in r.n_init..=r.n {
        let t0 = Instant::now();
        let y_raw = sim.measure();
        let y = sy.scale(&y_raw)?;
        ys.push(y.clone());
        let u_prev = us[k - 1].clone();
        let yhat = est.update_joint(&mut model, &h, u_prev.as_slice(), y.as_slice())?;
        if let Some(c) = &mut committee {
            c.update(|(m, s): &mut (RnnSs, EkfState)| s.update_joint(m, &h, u_prev.as_slice(), y.as_slice()).map(|_| ()))?;
        }
        if curve_due(r, k) {
            curve.push((k, exp.test.evaluate_ss(&model, &h, &su, &sy)?.rmse));
        }

        let yhat = sy.unscale(&yhat)?.as_slice().to_vec();
        let mut rec = StepRecord { k, u: Vec::new(), y: y_raw.as_slice().to_vec(), yhat, score: 0.0, penalty: 0.0, step_ms: 0.0, acq_ms: 0.0 };
        if k < r.n {
            let ta = Instant::now();
            let sel = if strategy == Strategy::Passive {
                Selection { index: sim.draw(), score: 0.0, penalty: 0.0 }
            } else {
                if traj.is_none() || age >= r.recon_interval {
                    let t = reconstruct(&model, &us, &ys, &h, &fit.x0, &ropts)?;
                    if t.refinement == crate::estimation::LbfgsStatus::Stalled {
                        log::info!("state refinement stalled at step {k}; continuing with the smoothed estimate");
                    }
                    traj = Some(t);
                    age = 0;
                }
                let t = traj.as_ref().expect("reconstructed above");
                let b = t.built_at;
                let x_now = est.state().expect("joint filter").clone();
                let replicas: Option<Vec<(RnnSs, DVector<f64>)>> = committee
                    .as_ref()
                    .map(|c| c.replicas().iter().map(|(m, s)| (m.clone(), s.state().expect("joint filter").clone())).collect());
                let ctx = SsContext {
                    model: &model,
                    pool: &pool,
                    x_now: &x_now,
                    states: &t.states,
                    inputs: &us[..b],
                    outputs: &ys[..=b],
                    delta: r.delta,
                    alpha: r.alpha_state,
                    kernel: r.kernel,
                    penalty: &penalty,
                    committee: replicas.as_deref(),
                    age,
                    interval: r.recon_interval,
                    parallel: r.parallel,
                };
                let sel = ctx.select(strategy)?;
                age += 1;
                sel
            };
            rec.acq_ms = ms(ta);
            us.push(pool.get(sel.index).clone());
            sim.apply(sel.index)?;
            rec.u = plant.pool.get(sel.index).as_slice().to_vec();
            rec.score = sel.score;
            rec.penalty = sel.penalty;
        }
        rec.step_ms = ms(t0);
        trace.records.push(rec);
    }
    trace.checkpoint = Some(Checkpoint::RnnSs(model));
    Ok(())
}
