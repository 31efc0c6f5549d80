//! Exact joint models solved by branch and bound, with MPS export.

mod branch;
mod model;
mod mps;

pub use branch::{
    branch_and_bound, solve_milp, solve_milp_with, BranchOutcome, MilpOptions, MilpSolution, MilpStatus,
    DEFAULT_MAX_BINARIES, INT_TOL,
};
pub use model::{build_model, MilpModel, Mode, RowTag, VarTag};
pub use mps::{export_mps, import_mps, mps_string, read_mps, MpsProgram};
