//! Exact AC branch flow, its linearization, and the constraint blocks built
//! from the linear model.

mod ac;
mod constraints;
mod linear;
mod validation;

pub use ac::{solve_ac, solve_ac_with, BranchFlowResiduals, PowerFlowSolution, SweepOptions};
pub use constraints::{assemble_constraints, ConstraintSet, ConstraintValues};
pub use linear::{
    linearize, loss_jacobians, loss_jacobians_with_step, reactive, tan_phi, AffineMap,
    LossJacobians, SensitivityModel, LOSS_FD_STEP,
};
pub use validation::{linearization_error, ErrorRow, LinearizationReport};
