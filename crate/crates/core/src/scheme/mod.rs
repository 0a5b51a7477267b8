//! Observation schemes: grids, the overlap matrix `G`, and scheme diagnostics.

mod diagnostics;
mod grid;
mod overlap;

pub use diagnostics::{check_a2, theta_interval, theta_sums, A2Deltas, ClusterCheck, SchemeDiagnostics};
pub use grid::{
    gen_clustered_grid, gen_poisson_grid, gen_uniform_grid, poisson_times, GridFile, ObservationGrid, Side,
};
pub(crate) use grid::{csv_io, format_f64};
pub use overlap::{OverlapMatrix, Runs};
