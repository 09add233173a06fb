use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use solitonlab::variation::{CheckKind, Settings};
use solitonlab::{Backend, CheckReport, SolitonSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Verify,
    Converge,
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub soliton: SolitonSpec,
    pub backend: Backend,
    pub checks: Vec<CheckKind>,
    pub settings: Settings,
    pub out: Option<PathBuf>,
    pub plot_data: Option<PathBuf>,
    pub record_timings: bool,
}

/// The JSON report written by `verify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunDocument {
    pub config: RunConfig,
    pub reports: Vec<CheckReport>,
    pub all_passed: bool,
}
