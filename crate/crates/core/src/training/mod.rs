//! Offline training: sampling, loss terms with exact gradients, Rprop with
//! restarts, error reporting and inverse identification.

pub mod fit;
pub mod identify;
pub mod objective;
pub mod report;
pub mod rprop;
pub mod sampling;

pub use fit::{train, HistoryRow, Precision, TrainConfig, TrainOutcome};
pub use identify::{identify, IdentifyConfig, IdentifyOutcome, PhaseGuess};
pub use objective::{ConstraintTargets, LossValue, Objective, OrientationTarget};
pub use report::{quantile, quantile_report, Quantiles, ReportRow};
pub use rprop::{Rprop, RpropConfig};
