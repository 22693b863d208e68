//! Batch training of state-space models by simulation-error minimization.

use nalgebra::DVector;

use super::ekf::{EkfHyper, EkfState};
use super::lbfgs::{self, LbfgsOptions, LbfgsResult};
use crate::error::{Error, Result};
use crate::models::StateSpaceModel;

/// Mean squared open-loop simulation error over `z = [θ_x; θ_y; x_0]` and its
/// gradient by backpropagation through time.
pub fn simulation_loss<S: StateSpaceModel>(model: &mut S, inputs: &[DVector<f64>], outputs: &[DVector<f64>], z: &[f64]) -> (f64, Vec<f64>) {
    let (ntx, nty, nx) = (model.n_theta_x(), model.n_theta_y(), model.n_x());
    model.set_theta_x(&z[..ntx]);
    model.set_theta_y(&z[ntx..ntx + nty]);
    let n = outputs.len();
    let scale = 1.0 / n as f64;
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut x = z[ntx + nty..].to_vec();
    for t in 0..n {
        xs.push(x.clone());
        if t + 1 < n {
            x = model.state_update(&x, inputs[t].as_slice()).as_slice().to_vec();
            if !x.iter().all(|v| v.is_finite()) {
                return (f64::INFINITY, vec![0.0; z.len()]);
            }
        }
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; z.len()];
    let mut lam = DVector::zeros(nx);
    for t in (0..n).rev() {
        let (yhat, c, d) = model.output_jacobians(&xs[t]);
        let e = &outputs[t] - yhat;
        loss += scale * e.norm_squared();
        let gy = d.transpose() * &e * (-2.0 * scale);
        for (g, v) in grad[ntx..ntx + nty].iter_mut().zip(gy.iter()) {
            *g += v;
        }
        if t + 1 < n {
            // λ holds ∂L/∂x_{t+1}
            let (_, a, b) = model.update_jacobians(&xs[t], inputs[t].as_slice());
            let gx = b.transpose() * &lam;
            for (g, v) in grad[..ntx].iter_mut().zip(gx.iter()) {
                *g += v;
            }
            lam = a.transpose() * lam;
        }
        lam -= c.transpose() * &e * (2.0 * scale);
    }
    for (g, v) in grad[ntx + nty..].iter_mut().zip(lam.iter()) {
        *g = *v;
    }
    (loss, grad)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub x0: DVector<f64>,
    pub loss: f64,
    pub lbfgs: LbfgsResult,
}

/// Fit `(θ_x, θ_y, x_0)` on the initial record with at most `opts.max_iter` iterations.
pub fn train_state_space<S: StateSpaceModel>(
    model: &mut S,
    inputs: &[DVector<f64>],
    outputs: &[DVector<f64>],
    x0: &DVector<f64>,
    opts: &LbfgsOptions,
) -> Result<TrainOutcome> {
    if outputs.is_empty() || inputs.len() + 1 < outputs.len() {
        return Err(Error::InsufficientData("training needs outputs with matching inputs".into()));
    }
    let mut z = model.theta();
    z.extend_from_slice(x0.as_slice());
    let mut work = model.clone();
    let res = lbfgs::minimize(|v| simulation_loss(&mut work, inputs, outputs, v), &z, opts);
    let (ntx, nty) = (model.n_theta_x(), model.n_theta_y());
    model.set_theta_x(&res.x[..ntx]);
    model.set_theta_y(&res.x[ntx..ntx + nty]);
    Ok(TrainOutcome { x0: DVector::from_column_slice(&res.x[ntx + nty..]), loss: res.f, lbfgs: res })
}

/// One joint-EKF pass over the initial record starting from the trained model.
/// Returns the filter positioned at the last output, ready for the next input.
pub fn refine_with_ekf<S: StateSpaceModel>(
    model: &mut S,
    inputs: &[DVector<f64>],
    outputs: &[DVector<f64>],
    x0: &DVector<f64>,
    h: &EkfHyper,
) -> Result<EkfState> {
    let mut st = EkfState::joint(model, x0.clone(), h)?;
    for (t, y) in outputs.iter().enumerate() {
        if t > 0 {
            st.predict(model, h, inputs[t - 1].as_slice())?;
        }
        st.measure(model, h, y.as_slice())?;
    }
    Ok(st)
}
