//! Online design of identification experiments by active learning.
//!
//! The crate couples recursive (extended) Kalman estimation of NARX and
//! recurrent state-space models with pool-based acquisition strategies built
//! on inverse-distance-weighting (IDW) uncertainty and exploration scores.
//!
//! Module map:
//! - [`signals`]: scaling, regressors, input pools and the sample store.
//! - [`models`]: linear ARX, two-layer NARX network, recurrent state-space network.
//! - [`estimation`]: EKF updates, batch initialization, RTS smoothing, committees.
//! - [`acquisition`]: IDW machinery, penalties and all selection strategies.
//! - [`plants`]: Dormand-Prince integrator, benchmark plants, noise model.
//! - [`harness`]: experiment loops, metrics, sweeps and persistence.

// `!(x >= 0.0)` rejects NaN; index loops mirror the matrix algebra
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod acquisition;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod models;
pub mod plants;
pub mod rng;
pub mod signals;

pub use error::{Error, Result};

pub use acquisition::{IdwKernel, PenaltyConfig, PenaltyMode, Selection, Strategy};
pub use estimation::{Committee, EkfHyper, EkfState, SmoothedTrajectory};
pub use harness::{ExperimentConfig, MetricsReport, RunTrace};
pub use models::{LinearArx, LinearSs, NarxModel, NarxNet, NarxPredictor, RnnSs, StateSpaceModel};
pub use plants::{NoiseModel, PlantSpec};
pub use signals::{Dataset, InputPool, Lags, Regressor, Scaler};

pub use nalgebra::{DMatrix, DVector};
