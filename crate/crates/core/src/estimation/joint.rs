//! Joint state and parameter EKF over `z = [x; θ_x; θ_y]`.

use nalgebra::{DMatrix, DVector};

use super::ekf::{kalman_update, symmetrize, EkfHyper, EkfState};
use crate::error::{Error, Result};
use crate::models::StateSpaceModel;

impl EkfState {
    /// Joint-mode state with prior `x0`; `h.p0` must cover the whole augmented vector.
    pub fn joint<S: StateSpaceModel>(model: &S, x0: DVector<f64>, h: &EkfHyper) -> Result<Self> {
        let nz = model.n_x() + model.n_theta();
        if h.p0.dim() != nz {
            return Err(Error::DimensionMismatch { expected: nz, got: h.p0.dim() });
        }
        if x0.len() != model.n_x() {
            return Err(Error::DimensionMismatch { expected: model.n_x(), got: x0.len() });
        }
        Ok(EkfState { theta: DVector::from_vec(model.theta()), p: h.p0.to_dense(), x_est: Some(x0), updates: 0 })
    }

    fn x(&self) -> Result<&DVector<f64>> {
        self.x_est.as_ref().ok_or_else(|| Error::InvalidConfig("EKF state is not in joint mode".into()))
    }

    /// Measurement update with `y_k = f_y(x_k, θ_y) + e_k`. Returns the prior prediction `ŷ`.
    pub fn measure<S: StateSpaceModel>(&mut self, model: &mut S, h: &EkfHyper, y: &[f64]) -> Result<DVector<f64>> {
        let (nx, ntx) = (model.n_x(), model.n_theta_x());
        if y.len() != model.n_y() {
            return Err(Error::DimensionMismatch { expected: model.n_y(), got: y.len() });
        }
        model.set_theta(self.theta.as_slice());
        let x = self.x()?.clone();
        let (yhat, c, d) = model.output_jacobians(x.as_slice());
        let nz = self.p.nrows();
        let ny = y.len();
        let mut hm = DMatrix::zeros(ny, nz);
        hm.view_mut((0, 0), (ny, nx)).copy_from(&c);
        hm.view_mut((0, nx + ntx), (ny, d.ncols())).copy_from(&d);
        // H P touches only the x and θ_y rows of P
        let mut hp = &c * self.p.rows(0, nx);
        hp.gemm(1.0, &d, &self.p.rows(nx + ntx, d.ncols()), 1.0);
        let e = DVector::from_iterator(ny, y.iter().zip(yhat.iter()).map(|(a, b)| a - b));
        let dz = kalman_update(&mut self.p, &hm, &hp, &h.r, &e)?;
        let xe = self.x_est.as_mut().unwrap();
        *xe += dz.rows(0, nx);
        self.theta += dz.rows(nx, nz - nx);
        model.set_theta(self.theta.as_slice());
        self.updates += 1;
        Ok(yhat)
    }

    /// Time update `x ← f_x(x, u, θ_x)` with parameter random walk.
    pub fn predict<S: StateSpaceModel>(&mut self, model: &mut S, h: &EkfHyper, u: &[f64]) -> Result<()> {
        let (nx, ntx) = (model.n_x(), model.n_theta_x());
        if u.len() != model.n_u() {
            return Err(Error::DimensionMismatch { expected: model.n_u(), got: u.len() });
        }
        model.set_theta(self.theta.as_slice());
        let x = self.x()?.clone();
        let (x_next, a, b) = model.update_jacobians(x.as_slice(), u);
        // F = [[A, B_θ, 0], [0, I, 0], [0, 0, I]]; only the first n_x rows differ from I
        let mut g = DMatrix::zeros(nx, nx + ntx);
        g.view_mut((0, 0), (nx, nx)).copy_from(&a);
        g.view_mut((0, nx), (nx, ntx)).copy_from(&b);
        let top = &g * self.p.rows(0, nx + ntx);
        self.p.rows_mut(0, nx).copy_from(&top);
        let left = self.p.columns(0, nx + ntx) * g.transpose();
        self.p.columns_mut(0, nx).copy_from(&left);
        if let Some(qx) = &h.q_x {
            qx.add_to(&mut self.p, 0);
        }
        h.q_theta.add_to(&mut self.p, nx);
        symmetrize(&mut self.p);
        if !x_next.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalBreakdown("state prediction is not finite".into()));
        }
        self.x_est = Some(x_next);
        Ok(())
    }

    /// Predict with the previous input, then absorb the new output.
    pub fn update_joint<S: StateSpaceModel>(&mut self, model: &mut S, h: &EkfHyper, u: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        self.predict(model, h, u)?;
        self.measure(model, h, y)
    }

    pub fn state(&self) -> Option<&DVector<f64>> {
        self.x_est.as_ref()
    }
}
