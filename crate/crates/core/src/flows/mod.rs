//! Characteristic flow `ψ`, multiplicative scale `E = exp(I)` and additive shift `θ`
//! driven by a level-2 rough path, with spatial derivatives up to order two.

mod bundle;
mod solve;
mod stepping;
mod system;

pub use bundle::{BundleSlice, FlowBundle, MAX_JACOBIAN_CONDITION, MAX_LOG_SCALE};
pub use solve::{
    inverse_flow, solve_inner_flow, solve_joint_rde, solve_scale, solve_shift, solve_staged, FlowMethod,
    FlowOptions, FlowStepper, FlowTrajectory,
};
pub use stepping::{log_ode_step, rde_step, DrivenFields, FdScratch, StepIncrement, Workspace};
pub use system::{FlowSystem, Layout, PositionSystem};

#[cfg(test)]
mod tests;
