//! Experiment plumbing: configs, oracles, convergence studies and output.

pub mod audit;
pub mod barenblatt;
pub mod config;
pub mod csv;
pub mod probe;
pub mod study;

pub use barenblatt::{barenblatt, BarenblattParams};
pub use config::ExperimentConfig;
pub use csv::{emit_csv, emit_probe_csv, format_csv, CSV_HEADER};
pub use probe::{propagation_probe, SupportRow, SupportTable};
pub use study::{run_convergence_study, ConvergenceReport, ConvergenceRow, Reference, Study};

/// Demo experiments shipped with the crate, by name.
pub const DEMOS: &[(&str, &str)] = &[
    ("plaplace-sum", include_str!("../../configs/plaplace-sum.toml")),
    ("plaplace-lie", include_str!("../../configs/plaplace-lie.toml")),
    ("perturbed-lie", include_str!("../../configs/perturbed-lie.toml")),
    ("barenblatt-lie", include_str!("../../configs/barenblatt-lie.toml")),
    ("heat-contrast", include_str!("../../configs/heat-contrast.toml")),
];

pub fn demo(name: &str) -> Option<&'static str> {
    DEMOS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}
