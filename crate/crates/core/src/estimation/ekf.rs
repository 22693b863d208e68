use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::NarxPredictor;
use crate::signals::Dataset;

/// Covariance given either as a diagonal or as a dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Cov {
    Diag(DVector<f64>),
    Full(DMatrix<f64>),
}

impl Cov {
    pub fn scalar(n: usize, v: f64) -> Self {
        Cov::Diag(DVector::from_element(n, v))
    }

    /// Block-diagonal `[a·I_na, b·I_nb]`.
    pub fn blocks(parts: &[(usize, f64)]) -> Self {
        let mut d = Vec::new();
        for &(n, v) in parts {
            d.extend(std::iter::repeat_n(v, n));
        }
        Cov::Diag(DVector::from_vec(d))
    }

    pub fn dim(&self) -> usize {
        match self {
            Cov::Diag(d) => d.len(),
            Cov::Full(m) => m.nrows(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Cov::Diag(d) => DMatrix::from_diagonal(d),
            Cov::Full(m) => m.clone(),
        }
    }

    /// `P += self` on the leading principal block starting at `off`.
    pub fn add_to(&self, p: &mut DMatrix<f64>, off: usize) {
        match self {
            Cov::Diag(d) => {
                for (i, v) in d.iter().enumerate() {
                    p[(off + i, off + i)] += v;
                }
            }
            Cov::Full(m) => {
                let n = m.nrows();
                let mut blk = p.view_mut((off, off), (n, n));
                blk += m;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Cov::Diag(d) => d.iter().all(|v| *v == 0.0),
            Cov::Full(m) => m.iter().all(|v| *v == 0.0),
        }
    }
}

/// EKF hyperparameters. `q_x` is only used by the joint state-parameter filter,
/// where `p0` covers `[x; θ_x; θ_y]` and `q_theta` covers `[θ_x; θ_y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfHyper {
    pub p0: Cov,
    pub q_theta: Cov,
    pub r: DMatrix<f64>,
    pub q_x: Option<Cov>,
}

impl EkfHyper {
    pub fn narx(n_theta: usize, n_y: usize, p0: f64, q: f64, r: f64) -> Self {
        EkfHyper {
            p0: Cov::scalar(n_theta, p0),
            q_theta: Cov::scalar(n_theta, q),
            r: DMatrix::from_diagonal_element(n_y, n_y, r),
            q_x: None,
        }
    }

    pub fn joint(n_x: usize, n_theta: usize, n_y: usize, p0_x: f64, p0_theta: f64, q_x: f64, q_theta: f64, r: f64) -> Self {
        EkfHyper {
            p0: Cov::blocks(&[(n_x, p0_x), (n_theta, p0_theta)]),
            q_theta: Cov::scalar(n_theta, q_theta),
            r: DMatrix::from_diagonal_element(n_y, n_y, r),
            q_x: Some(Cov::scalar(n_x, q_x)),
        }
    }
}

/// Filter state: parameter estimate, covariance and, in joint mode, the state estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    pub theta: DVector<f64>,
    pub p: DMatrix<f64>,
    pub x_est: Option<DVector<f64>>,
    pub updates: usize,
}

pub(crate) fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

/// Kalman measurement update on a generic linearization.
///
/// `hp = H P` is passed in so callers with structured `H` can form it cheaply.
/// Returns the correction `K e`; `p` is overwritten with the Joseph-form posterior.
pub(crate) fn kalman_update(
    p: &mut DMatrix<f64>,
    h: &DMatrix<f64>,
    hp: &DMatrix<f64>,
    r: &DMatrix<f64>,
    innovation: &DVector<f64>,
) -> Result<DVector<f64>> {
    let s = hp * h.transpose() + r;
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NumericalBreakdown(format!("innovation covariance not positive definite: {s}")))?;
    // K = P Hᵀ S⁻¹ = (S⁻¹ H P)ᵀ
    let kt = chol.solve(hp);
    let k = kt.transpose();
    let correction = &k * innovation;
    // Joseph form (I − KH) P (I − KH)ᵀ + K R Kᵀ, evaluated without n×n products
    let mut m = p.clone();
    m.gemm(-1.0, &k, hp, 1.0);
    let mht = &m * h.transpose();
    m.gemm(-1.0, &mht, &kt, 1.0);
    let kr = &k * r;
    m.gemm(1.0, &kr, &kt, 1.0);
    symmetrize(&mut m);
    if !m.iter().all(|v| v.is_finite()) || !correction.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericalBreakdown("non-finite covariance after update".into()));
    }
    *p = m;
    Ok(correction)
}

impl EkfState {
    pub fn new(theta: DVector<f64>, h: &EkfHyper) -> Result<Self> {
        if h.p0.dim() != theta.len() {
            return Err(Error::DimensionMismatch { expected: theta.len(), got: h.p0.dim() });
        }
        Ok(EkfState { p: h.p0.to_dense(), theta, x_est: None, updates: 0 })
    }

    pub fn for_model<M: NarxPredictor>(model: &M, h: &EkfHyper) -> Result<Self> {
        Self::new(DVector::from_column_slice(model.theta()), h)
    }

    /// One NARX step: random-walk prediction then measurement update with `y = f(x, θ) + e`.
    /// `model` is kept in sync with `self.theta`.
    pub fn update_narx<M: NarxPredictor>(&mut self, model: &mut M, h: &EkfHyper, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != model.n_x() {
            return Err(Error::DimensionMismatch { expected: model.n_x(), got: x.len() });
        }
        if y.len() != model.n_y() {
            return Err(Error::DimensionMismatch { expected: model.n_y(), got: y.len() });
        }
        model.set_theta(self.theta.as_slice());
        h.q_theta.add_to(&mut self.p, 0);
        let (yhat, jac) = model.predict_with_jacobian(x);
        let e = DVector::from_iterator(y.len(), y.iter().zip(&yhat).map(|(a, b)| a - b));
        let hp = &jac * &self.p;
        let dtheta = kalman_update(&mut self.p, &jac, &hp, &h.r, &e)?;
        self.theta += dtheta;
        model.set_theta(self.theta.as_slice());
        self.updates += 1;
        Ok(())
    }

    pub fn trace(&self) -> f64 {
        self.p.trace()
    }
}

/// Multi-epoch EKF pass over the stored regressor pairs, carrying θ and P across epochs.
pub fn batch_init_narx<M: NarxPredictor>(model: &mut M, ds: &Dataset, h: &EkfHyper, epochs: usize) -> Result<EkfState> {
    let lags = ds.lags().ok_or_else(|| Error::InvalidConfig("batch NARX init needs a NARX dataset".into()))?;
    if ds.n_pairs() == 0 {
        return Err(Error::InsufficientHistory { needed: lags.first_index() + 2, have: ds.len_outputs() });
    }
    let mut st = EkfState::for_model(model, h)?;
    for _ in 0..epochs {
        for (_, x, y) in ds.pairs() {
            st.update_narx(model, h, x.as_slice(), y.as_slice())?;
        }
    }
    Ok(st)
}
