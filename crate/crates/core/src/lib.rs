//! Design-based analysis of randomized experiments.
//!
//! The toolkit covers four designs (complete randomization, stratified
//! randomization, completely randomized survey experiments, and cluster
//! randomization) and centers on the minority-weighted ("tyranny of the
//! minority") regression adjustment, where units in the smaller arm receive
//! weight `1/p_z^2`. Alongside the point estimators it provides
//! heteroskedasticity-robust sandwich variances (HC0-HC3), calibration-weight
//! and leverage diagnostics, an exhaustive randomization oracle for exact
//! finite-sample checks, and a seeded Monte Carlo harness.

pub mod diagnostics;
pub mod estimators;
pub mod numkit;
pub mod randomize;
pub mod simlab;

pub use estimators::{Dataset, DesignKind, EstimateReport, VarianceFlavor};
pub use numkit::{HcKind, Matrix, SandwichSpec, WlsFit};
pub use randomize::{Assignment, AssignmentPlan, RngStream};
pub use simlab::{FinitePopulation, ScenarioConfig, SimSummary};
