//! Parametric predictors exposing forward passes and analytic Jacobians.

pub mod checkpoint;
pub mod mlp;
pub mod narx;
pub mod ss;

pub use checkpoint::Checkpoint;
pub use mlp::{Activation, Mlp, MlpJacobians};
pub use narx::{LinearArx, NarxModel, NarxNet, NarxPredictor};
pub use ss::{AugmentedPoint, LinearSs, RnnShape, RnnSs, SsJacobians, StateSpaceModel};
