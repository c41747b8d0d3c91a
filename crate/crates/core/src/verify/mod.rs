pub mod checks;
pub mod fit;
pub mod report;

pub use checks::{run_suite, Check, SweepConfig, Tolerances};
pub use fit::{least_squares, log_log, LineFit};
pub use report::{Constant, Measurement, Relation, Slope, SlopeRelation, VerifyReport};
