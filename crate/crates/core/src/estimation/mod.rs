//! Recursive and batch parameter estimation.

pub mod committee;
pub mod ekf;
pub mod joint;
pub mod lbfgs;
pub mod smoother;
pub mod ss_train;

pub use committee::{Committee, SkipSchedule};
pub use ekf::{batch_init_narx, Cov, EkfHyper, EkfState};
pub use lbfgs::{LbfgsOptions, LbfgsResult, LbfgsStatus};
pub use smoother::{predict_outputs, reconstruct, reconstruct_states, ReconstructOptions, SmoothedTrajectory};
pub use ss_train::{refine_with_ekf, train_state_space};
