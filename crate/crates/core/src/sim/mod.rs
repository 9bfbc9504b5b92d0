pub mod scenario;
pub mod sdg;
pub mod simulate;

pub use scenario::{default_suite, FaultSpec, FeederScenario, RelayRole, RelaySpec, ScenarioSuite};
pub use sdg::{sample_sdg_trajectory, SdgKind, SdgProcess};
pub use simulate::{simulate_scenario, write_scenario_csv};
