//! Experiment harness: configuration, orchestration and export for the
//! `radtherm` command-line tool.

pub mod config;
pub mod error;
pub mod export;
pub mod init_layers;
pub mod layers;
pub mod run;
pub mod study;
pub mod table;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{exit_code, HarnessError};

/// Runs the experiment named by `cfg.experiment` and writes its outputs.
pub fn execute(cfg: &ExperimentConfig) -> error::Result<()> {
    match cfg.experiment {
        ExperimentKind::SingleRun => run::execute(cfg),
        ExperimentKind::ConvergenceStudy => study::execute(cfg),
        ExperimentKind::RegimeTable => table::execute(cfg),
        ExperimentKind::LayerStudy => layers::execute(cfg),
        ExperimentKind::InitialLayerStudy => init_layers::execute(cfg),
    }
}
