//! Two-dimensional diffusion models, Euler–Maruyama simulation on the merged
//! grid, and extraction of nonsynchronous observations.

mod model;
mod sample;
mod simulate;

pub use model::{dot, DiffusionModel, Mat2, ParamBox, Vec2};
pub use sample::{observe, NonsyncSample};
pub use simulate::{default_max_step, simulate_path, simulate_path_with, Path};
