//! Scenario configuration, the synchronized simulation loop and file output.

pub mod config;
pub mod csv;
pub mod metrics;
pub mod output;
pub mod plot;
pub mod presets;
pub mod record;
pub mod sim;

pub use config::{load_scenarios, ScenarioConfig};
pub use record::RunRecord;
pub use sim::{run_batch, run_scenario};
