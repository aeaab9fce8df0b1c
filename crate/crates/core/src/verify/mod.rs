//! Independent checks: a dynamic-programming oracle, Hamilton-Jacobi
//! residuals, Jensen suites and grid-convergence studies.

mod convergence;
mod dp;
mod hj;
mod jensen;

pub use convergence::{convergence_study, ConvergenceRow, ConvergenceScenario, ConvergenceTable, Level};
pub use dp::{dp_oracle, DpGrids, ValueSurface};
pub use hj::{hj_residual, hj_residual_report, write_residual_csv, AnalyticSurface, ResidualRow, Surface};
pub use jensen::{jensen_suite, JensenReport, JensenSample, JensenSampleSpec};
