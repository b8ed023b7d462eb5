//! Deterministic discrete-event simulator of a mobile network with PQC
//! on the air interface and QKD-fed key management on the backbone.
//!
//! ```text
//!  UE ~~air~~ BS ──backhaul (QKD)── Core ──(QKD)── DN
//!                     │                 │
//!                     └──── KMS / SDN ──┘
//! ```
//!
//! A scenario file describes the topology, mobility, traffic, placements
//! and cost tables. [`run`] executes it and returns metrics, a trace and
//! the KMS audit log.

mod config;
mod energy;
mod engine;
mod metrics;
mod trace;

pub use config::{
    build_scenario, inject_adversary, load_world, load_world_str, parse_config, parse_link, AdversaryConfig,
    AdversaryError, AdversaryModel, BaseStation, ConfigError, CryptoConfig, KmsConfig, MobilitySchedule,
    ParamsChoice, PlacementConfig, PlacementSet, QkdConfig, ScenarioConfig, Topology, TrafficConfig, UeNode, World,
};
pub use energy::{EnergyCostTable, LatencyCostTable};
pub use engine::{contains, master_key, payload, run, EstablishedSession, SecretSet, SimOutput};
pub use metrics::{write_comparison_csv, ComparisonRow, LatencyStats, MetricsReport, NodeMetrics};
pub use trace::{trace_to_string, write_trace, TraceEvent, TraceRecord};

/// The four placements a comparison runs: each single option, then all.
pub const COMPARED_PLACEMENTS: [PlacementSet; 4] =
    [PlacementSet::OPTION_1, PlacementSet::OPTION_2, PlacementSet::OPTION_3, PlacementSet::ALL];

/// Runs the same world under each compared placement, one thread per run.
pub fn compare_placements(world: &World) -> Vec<(PlacementSet, SimOutput)> {
    std::thread::scope(|s| {
        let handles: Vec<_> = COMPARED_PLACEMENTS
            .iter()
            .map(|&p| {
                let w = world.with_placements(p);
                s.spawn(move || (p, run(&w)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    })
}

pub fn comparison_rows(runs: &[(PlacementSet, SimOutput)]) -> Vec<ComparisonRow> {
    runs.iter().map(|(p, o)| ComparisonRow::from_report(&o.report, p.ue_bs_pqc)).collect()
}

#[cfg(test)]
mod tests;
