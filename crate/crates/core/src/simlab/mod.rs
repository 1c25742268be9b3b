//! Simulation harness: scenario generators, a replicate runner that tallies
//! how often each method selects each `k`, and a silhouette baseline.

mod runner;
mod scenario;
mod silhouette;

pub use runner::{
    run_replicates, FrequencyTable, Method, ReplicateDetail, SimulationReport, SimulationSettings,
};
pub use scenario::{
    equidistance_ratio, generate, Family, ScenarioConfig, ScenarioId, ScenarioSpec,
    BUILTIN_SCENARIOS,
};
pub use silhouette::{mean_silhouette, silhouette_baseline, SilhouetteSelection};
