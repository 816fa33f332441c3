//! Run manifests: the resolved parameter set of every command,
//! serialized next to its outputs.
//!
//! A manifest fully determines the outputs given the input files, so
//! `--config manifest.json` re-runs a command byte-identically. The
//! same schema doubles as the config-file format.

use std::path::PathBuf;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use ratemig_core::ingest::{GradeScale, IngestConfig, ReratingPolicy};
use ratemig_core::simulate::SimulationConfig;
use ratemig_core::statespace::MergeLeftover;

pub const TOOL_NAME: &str = "ratemig";

/// Input-file and study-interval parameters shared by the estimation
/// commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataParams {
    pub input: PathBuf,
    pub study_start: NaiveDate,
    pub study_end: NaiveDate,
    pub scale: GradeScale,
    #[serde(default)]
    pub rerating: ReratingPolicy,
    #[serde(default = "default_withdrawal_marker")]
    pub withdrawal_marker: String,
}

fn default_withdrawal_marker() -> String {
    ratemig_core::ingest::WITHDRAWAL_MARKER.to_owned()
}

impl DataParams {
    pub fn ingest_config(&self) -> IngestConfig {
        IngestConfig {
            study_start: self.study_start,
            study_end: self.study_end,
            scale: self.scale,
            withdrawal_marker: self.withdrawal_marker.clone(),
            rerating: self.rerating,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Cohort,
    Generator,
    ChapmanKolmogorov,
}

/// Single-window estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateParams {
    #[serde(flatten)]
    pub data: DataParams,
    pub at: NaiveDate,
    pub tau_days: u32,
    pub k: usize,
    pub states: usize,
    pub year_days: f64,
    pub merge_leftover: MergeLeftover,
    pub methods: Vec<MethodKind>,
}

/// Rolling-diagnostics run (also the sweep-states schema).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareParams {
    #[serde(flatten)]
    pub data: DataParams,
    pub tau_days: u32,
    pub k: usize,
    pub state_counts: Vec<usize>,
    pub baseline_n: usize,
    pub grid_start: NaiveDate,
    pub grid_end: NaiveDate,
    pub grid_step_days: u32,
    pub year_days: f64,
    pub merge_leftover: MergeLeftover,
    #[serde(default)]
    pub serial: bool,
}

/// Synthetic-sample generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateParams {
    /// Grade tokens used in the emitted CSV.
    pub scale: GradeScale,
    #[serde(flatten)]
    pub config: SimulationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum CommandParams {
    Estimate(EstimateParams),
    Compare(CompareParams),
    SweepStates(CompareParams),
    Simulate(SimulateParams),
}

impl CommandParams {
    pub fn name(&self) -> &'static str {
        match self {
            CommandParams::Estimate(_) => "estimate",
            CommandParams::Compare(_) => "compare",
            CommandParams::SweepStates(_) => "sweep-states",
            CommandParams::Simulate(_) => "simulate",
        }
    }
}

/// The file written as `manifest.json` next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    #[serde(flatten)]
    pub params: CommandParams,
}

impl Manifest {
    pub fn new(params: CommandParams) -> Self {
        Self {
            tool: TOOL_NAME.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            params,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }
}
