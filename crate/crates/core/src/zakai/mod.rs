//! Nonlinear filtering: Zakai equations of signal–observation models, their robust
//! solution pathwise in the observation, and a particle reference.

mod experiment;
mod filter;
mod model;
mod particle;
mod simulate;


pub use experiment::{
    contraction_experiment, dyadic, oracle_compare, run_experiment, stability_ladder, wrong_limit, ContractionRun,
    ExperimentConfig, ExperimentKind, ExperimentReport, ExperimentSummary, LadderResult, OracleRow, WrongLimitResult,
};
pub use filter::{
    classical_robust_filter, density_moments, prior_on_grid, robust_filter, robust_filter_with, FilterOutput,
};
pub use model::{build_zakai_operators, FilteringModel, ZakaiOperators};
pub use particle::{particle_filter_oracle, DegeneracyEvent, ParticleConfig, ParticleOutput};
pub use simulate::{simulate_signal_observation, SignalObservation};
