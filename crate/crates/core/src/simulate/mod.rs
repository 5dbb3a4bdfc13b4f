//! Time-discretized drivers: sequential (SPoC), batch SPoC, classical
//! mean-field particles, reference solutions and the coupled diagnostic.

mod classical;
mod config;
mod engine;
mod reference;
mod result;

pub use classical::classical_poc_run;
pub use config::{InitialLaw, MeasureBackend, ModelConfig, SimConfig};
pub use engine::{
    batch_spoc_run, spoc_run, CouplingState, GridMeasures, Simulation, SpocEngine, SpocState, BLOW_UP,
};
pub use reference::{
    coupled_spoc_run, reference_run, solve_moment_ode, CoupledRun, ReferenceSolution, RK4_SUBSTEPS,
};
pub use result::{
    read_manifest, read_paths, write_run_dir, CheckpointSnapshot, Manifest, Method,
    MilestoneSnapshot, PathStore, ReplicationResult, RunResult, SummaryRow, CRATE_VERSION,
    PATHS_MAGIC,
};

#[cfg(test)]
mod tests;
