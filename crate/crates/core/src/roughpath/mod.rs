//! Level-2 geometric rough paths: lifts, group operations, distances and test drivers.

mod brownian;
mod group;
pub mod io;
mod lift;
mod oscillator;
mod path;
mod pvar;

pub use brownian::{sample_brownian_path, sample_brownian_rough_path, steps_for};
pub use group::{chen_concat, GroupElement2};
pub use lift::{lift_piecewise_linear, pure_area_path, Level2RoughPath};
pub use oscillator::{oscillator_max_mesh, oscillator_path};
pub use path::SampledPath;
pub(crate) use path::merge_times;
pub use pvar::{common_refinement, pvar_distance, pvar_distance_parts, pvar_norm, PVarDistance};
