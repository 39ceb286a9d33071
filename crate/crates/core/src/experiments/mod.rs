//! Scenario-driven experiments, demos and report output.

pub mod demos;
pub mod population;
pub mod scenario;
pub mod study;
pub mod svg;

pub use population::{generate_population, Qualifications};
pub use scenario::Scenario;
pub use study::{run_scenario, write_outputs, StudyOutput};
