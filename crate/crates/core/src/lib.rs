//! Sequential propagation-of-chaos toolkit for McKean–Vlasov SDEs.

pub mod analysis;
pub mod error;
pub mod measures;
pub mod models;
pub mod real;
pub mod rng;
pub mod schedules;
pub mod simulate;

pub use error::{Result, SpocError};
pub use measures::{SummaryStats, WeightedEmpirical};
pub use real::Real;
pub use schedules::{ScheduleKind, UpdateSchedule};

pub type WeightedEmpirical64 = WeightedEmpirical<f64>;
pub type WeightedEmpirical32 = WeightedEmpirical<f32>;
pub type SummaryStats64 = SummaryStats<f64>;
pub type SummaryStats32 = SummaryStats<f32>;
pub type ModelSpec64 = models::ModelSpec<f64>;
pub type ModelSpec32 = models::ModelSpec<f32>;
pub type RunResult64 = simulate::RunResult<f64>;
pub type RunResult32 = simulate::RunResult<f32>;
pub type Simulation64 = simulate::Simulation<f64>;
pub type Simulation32 = simulate::Simulation<f32>;
