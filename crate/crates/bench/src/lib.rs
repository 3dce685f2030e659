//! Fixtures shared by the benchmarks under `benches/`.

use scl_core::runtime::{run_episode, AgentConfig, CognitionKind, System, Trace};
use scl_core::scenarios::{generate_episode, EpisodeSpec, Scenario};
use scl_core::suite::{RunManifest, SuiteConfig};
use scl_core::FaultModel;

/// One episode per scenario, template 0, seed 0.
pub fn sample_specs() -> Vec<EpisodeSpec> {
    Scenario::ALL
        .iter()
        .map(|&s| generate_episode(s, 0, 0).expect("template 0 exists"))
        .collect()
}

pub fn faulty(system: System) -> AgentConfig {
    AgentConfig::faulty(system, FaultModel::default())
}

/// Trace of a faulty full-loop run on the first travel episode.
pub fn sample_trace() -> Trace {
    let spec = generate_episode(Scenario::A, 0, 0).expect("template 0 exists");
    run_episode(&spec, &faulty(System::Scl), 0).expect("run").trace
}

/// Small all-systems suite: 2 templates × 2 seeds per scenario, one run.
pub fn slice_manifest() -> RunManifest {
    let config = SuiteConfig {
        templates: 2,
        seeds: 2,
        runs: 1,
        systems: System::ALL.to_vec(),
        cognition: CognitionKind::Faulty,
        ..SuiteConfig::default()
    };
    RunManifest::build(config).expect("manifest").0
}
