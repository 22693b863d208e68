//! Hidden-state reconstruction for state-space models with frozen parameters:
//! forward EKF, RTS backward pass, quasi-Newton refinement of `x_0`, and a
//! final forward EKF from the refined initial state.

use nalgebra::{DMatrix, DVector};

use super::ekf::{kalman_update, symmetrize, EkfHyper};
use super::lbfgs::{self, LbfgsOptions, LbfgsStatus};
use crate::error::{Error, Result};
use crate::models::StateSpaceModel;
use crate::signals::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedTrajectory {
    /// Final forward-pass estimates `x_{0|k} … x_{T|k}` from the refined `x_0`.
    pub states: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    /// RTS estimates before refinement.
    pub smoothed: Vec<DVector<f64>>,
    pub smoothed_cov: Vec<DMatrix<f64>>,
    pub refined_x0: DVector<f64>,
    pub refinement: LbfgsStatus,
    /// Number of inputs processed when this trajectory was built.
    pub built_at: usize,
}

impl SmoothedTrajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory is never empty")
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructOptions {
    pub refine_iters: usize,
    pub refine_gtol: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions { refine_iters: 50, refine_gtol: 1e-10 }
    }
}

struct Filtered {
    filt: Vec<DVector<f64>>,
    filt_p: Vec<DMatrix<f64>>,
    pred: Vec<DVector<f64>>,
    pred_p: Vec<DMatrix<f64>>,
    a: Vec<DMatrix<f64>>,
}

/// State-only EKF; `pred[t]` is `x_{t|t-1}` (with `pred[0]` the prior).
fn forward<S: StateSpaceModel>(
    model: &S,
    inputs: &[DVector<f64>],
    outputs: &[DVector<f64>],
    x0: &DVector<f64>,
    p0: &DMatrix<f64>,
    h: &EkfHyper,
) -> Result<Filtered> {
    let t_len = inputs.len();
    let mut out = Filtered {
        filt: Vec::with_capacity(t_len + 1),
        filt_p: Vec::with_capacity(t_len + 1),
        pred: Vec::with_capacity(t_len + 1),
        pred_p: Vec::with_capacity(t_len + 1),
        a: Vec::with_capacity(t_len),
    };
    let mut x = x0.clone();
    let mut p = p0.clone();
    for t in 0..=t_len {
        out.pred.push(x.clone());
        out.pred_p.push(p.clone());
        if let Some(y) = outputs.get(t) {
            let (yhat, c, _) = model.output_jacobians(x.as_slice());
            let hp = &c * &p;
            let dx = kalman_update(&mut p, &c, &hp, &h.r, &(y - yhat))?;
            x += dx;
        }
        out.filt.push(x.clone());
        out.filt_p.push(p.clone());
        if t < t_len {
            let (a, _) = model.state_jacobians(x.as_slice(), inputs[t].as_slice());
            x = model.state_update(x.as_slice(), inputs[t].as_slice());
            p = &a * &p * a.transpose();
            if let Some(q) = &h.q_x {
                q.add_to(&mut p, 0);
            }
            symmetrize(&mut p);
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::NumericalBreakdown(format!("state diverged at step {t}")));
            }
            out.a.push(a);
        }
    }
    Ok(out)
}

fn rts(f: &Filtered) -> Result<(Vec<DVector<f64>>, Vec<DMatrix<f64>>)> {
    let n = f.filt.len();
    let mut xs = f.filt.clone();
    let mut ps = f.filt_p.clone();
    for t in (0..n - 1).rev() {
        let pp = &f.pred_p[t + 1];
        let rhs = &f.a[t] * &f.filt_p[t];
        // G = P_{t|t} Aᵀ P_{t+1|t}⁻¹ = (P_{t+1|t}⁻¹ A P_{t|t})ᵀ
        let gt = match pp.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => pp
                .clone()
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::NumericalBreakdown(format!("singular predicted covariance at step {}", t + 1)))?,
        };
        let g = gt.transpose();
        let dx = &xs[t + 1] - &f.pred[t + 1];
        xs[t] = &f.filt[t] + &g * dx;
        let dp = &ps[t + 1] - pp;
        let mut pt = &f.filt_p[t] + &g * dp * &gt;
        symmetrize(&mut pt);
        ps[t] = pt;
    }
    Ok((xs, ps))
}

/// Sum of squared output errors of the open-loop simulation from `x0`, and its gradient.
pub fn simulation_error<S: StateSpaceModel>(
    model: &S,
    inputs: &[DVector<f64>],
    outputs: &[DVector<f64>],
    x0: &[f64],
) -> (f64, Vec<f64>) {
    let n_out = outputs.len();
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(n_out);
    let mut x = x0.to_vec();
    for t in 0..n_out {
        xs.push(x.clone());
        if t + 1 < n_out {
            x = model.state_update(&x, inputs[t].as_slice()).as_slice().to_vec();
        }
    }
    let mut f = 0.0;
    let mut lam = DVector::zeros(x0.len());
    for t in (0..n_out).rev() {
        let (yhat, c, _) = model.output_jacobians(&xs[t]);
        let e = &outputs[t] - yhat;
        f += e.norm_squared();
        if t + 1 < n_out {
            let (a, _) = model.state_jacobians(&xs[t], inputs[t].as_slice());
            lam = a.transpose() * lam;
        }
        lam -= 2.0 * c.transpose() * e;
    }
    (f, lam.as_slice().to_vec())
}

/// One-step output predictions `f_y(x_{t|t−1})` of a frozen model, filtering from `x0`.
pub fn predict_outputs<S: StateSpaceModel>(
    model: &S,
    inputs: &[DVector<f64>],
    outputs: &[DVector<f64>],
    x0: &DVector<f64>,
    h: &EkfHyper,
) -> Result<Vec<DVector<f64>>> {
    let nx = model.n_x();
    if outputs.len() > inputs.len() + 1 {
        return Err(Error::DimensionMismatch { expected: inputs.len() + 1, got: outputs.len() });
    }
    let p0 = h.p0.to_dense().view((0, 0), (nx, nx)).into_owned();
    let f = forward(model, &inputs[..outputs.len().saturating_sub(1)], outputs, x0, &p0, h)?;
    Ok(f.pred.iter().take(outputs.len()).map(|x| model.output(x.as_slice())).collect())
}

/// Reconstruct `x_0 … x_T` (`T` = number of inputs) from a state-space dataset.
pub fn reconstruct_states<S: StateSpaceModel>(
    ds: &Dataset,
    model: &S,
    h: &EkfHyper,
    x0_prior: &DVector<f64>,
    opts: &ReconstructOptions,
) -> Result<SmoothedTrajectory> {
    reconstruct(model, ds.inputs(), ds.outputs(), h, x0_prior, opts)
}

pub fn reconstruct<S: StateSpaceModel>(
    model: &S,
    inputs: &[DVector<f64>],
    outputs: &[DVector<f64>],
    h: &EkfHyper,
    x0_prior: &DVector<f64>,
    opts: &ReconstructOptions,
) -> Result<SmoothedTrajectory> {
    let nx = model.n_x();
    if outputs.is_empty() {
        return Err(Error::InsufficientData("state reconstruction needs at least one output".into()));
    }
    if outputs.len() > inputs.len() + 1 || outputs.len() < inputs.len() {
        return Err(Error::DimensionMismatch { expected: inputs.len() + 1, got: outputs.len() });
    }
    let p0 = h.p0.to_dense().view((0, 0), (nx, nx)).into_owned();
    let f = forward(model, inputs, outputs, x0_prior, &p0, h)?;
    let (smoothed, smoothed_cov) = rts(&f)?;

    let lo = LbfgsOptions { max_iter: opts.refine_iters, gtol: opts.refine_gtol, ..Default::default() };
    let (f_start, _) = simulation_error(model, inputs, outputs, smoothed[0].as_slice());
    let res = lbfgs::minimize(|x| simulation_error(model, inputs, outputs, x), smoothed[0].as_slice(), &lo);
    let refined_x0 = if res.f <= f_start { DVector::from_vec(res.x) } else { smoothed[0].clone() };
    if res.status == LbfgsStatus::Stalled {
        log::debug!("x0 refinement stalled after {} iterations", res.iterations);
    }

    let fin = forward(model, inputs, outputs, &refined_x0, &smoothed_cov[0], h)?;
    Ok(SmoothedTrajectory {
        states: fin.filt,
        covariances: fin.filt_p,
        smoothed,
        smoothed_cov,
        refined_x0,
        refinement: res.status,
        built_at: inputs.len(),
    })
}
