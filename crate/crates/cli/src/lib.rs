//! Command-line driver: experiment configuration, execution and output files.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;

pub use error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    PumpVisibility,
    PumpInvariance,
    Fringes,
    VisibilityCurve,
    Profile,
    Conditional,
    FramesSynth,
    Coincidence,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::PumpVisibility => "pump-visibility",
            Experiment::PumpInvariance => "pump-invariance",
            Experiment::Fringes => "fringes",
            Experiment::VisibilityCurve => "visibility-curve",
            Experiment::Profile => "profile",
            Experiment::Conditional => "conditional",
            Experiment::FramesSynth => "frames-synth",
            Experiment::Coincidence => "coincidence",
        }
    }
}

/// Load, validate, compute, then write. Nothing touches the output
/// directory until every artifact has been produced in memory.
pub fn execute(
    experiment: Experiment,
    config: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<Vec<PathBuf>, CliError> {
    let (raw, bytes) = config::load(config)?;
    let resolved = config::resolve(raw, experiment, out, seed)?;
    let run = experiments::run(&resolved)?;
    let mut artifacts = run.artifacts;
    artifacts.push(output::manifest(&resolved, &bytes, &run.inputs, &artifacts));
    output::write_all(&resolved.output.directory, &artifacts)?;
    Ok(artifacts.iter().map(|a| resolved.output.directory.join(&a.name)).collect())
}
