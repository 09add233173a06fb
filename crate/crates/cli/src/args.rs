//! Command-line flags and their resolution into a [`RunConfig`].

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use solitonlab::catalog::{parse_list, parse_window};
use solitonlab::variation::{CheckKind, Settings, Tolerances};
use solitonlab::{Backend, SolitonKind, SolitonSpec};

use crate::config::{Mode, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "solitonlab", version, about = "Verify translating-soliton identities on sampled patches")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run checks at one resolution and write a JSON report
    Verify(RunArgs),
    /// Grid-refinement study of one or more identities; writes a convergence CSV
    Converge(RunArgs),
    /// Re-run the configuration embedded in a report and compare residuals
    Rerun {
        /// Report written by `verify`
        report: PathBuf,
        /// Where to write the fresh report
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Analytic,
    Fd,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Analytic => Backend::Analytic,
            BackendArg::Fd => Backend::FiniteDifference,
        }
    }
}

/// One entry of `--check`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckSel {
    All,
    One(CheckKind),
}

fn parse_check(s: &str) -> Result<CheckSel, String> {
    if s == "all" {
        return Ok(CheckSel::All);
    }
    s.parse::<CheckKind>().map(CheckSel::One).map_err(|_| {
        let names: Vec<&str> = CheckKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown check (available: {}, all)", names.join(", "))
    })
}

fn parse_soliton(s: &str) -> Result<SolitonKind, String> {
    s.parse::<SolitonKind>().map_err(|_| {
        let names: Vec<&str> = SolitonKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown soliton (available: {})", names.join(", "))
    })
}

fn parse_tol(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("cannot parse tolerance value '{v}'"))?;
    let mut probe = Tolerances::default();
    probe.set(k.trim(), v).map_err(|e| e.to_string())?;
    Ok((k.trim().to_string(), v))
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Catalog soliton
    #[arg(long, default_value = "grim-reaper-cylinder", value_parser = parse_soliton)]
    pub soliton: SolitonKind,
    /// Complex dimension
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// Comma-separated speeds (product) or tangent translation components (plane)
    #[arg(long, allow_hyphen_values = true)]
    pub speeds: Option<String>,
    /// Parameter window `lo:hi,lo:hi,...`
    #[arg(long, allow_hyphen_values = true)]
    pub window: Option<String>,
    /// Nodes per axis
    #[arg(long, default_value_t = 64)]
    pub res: usize,
    /// Refinement ladder, e.g. `16,32,64,128`
    #[arg(long, value_delimiter = ',')]
    pub resolutions: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = BackendArg::Analytic)]
    pub backend: BackendArg,
    /// Checks to run (comma-separated, or `all`)
    #[arg(long, value_delimiter = ',', default_value = "all", value_parser = parse_check)]
    pub check: Vec<CheckSel>,
    /// Finite-difference step in s, before normalization by sup|V|
    #[arg(long, default_value_t = solitonlab::variation::DEFAULT_STEP)]
    pub step: f64,
    /// Random samples in the stability scan
    #[arg(long, default_value_t = solitonlab::variation::DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = solitonlab::variation::DEFAULT_SEED)]
    pub seed: u64,
    /// Report path (JSON for verify, CSV for converge)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Long-format CSV for plotting
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
    /// Tolerance override `key=value`; repeatable
    #[arg(long, value_parser = parse_tol)]
    pub tol: Vec<(String, f64)>,
    /// Soliton spec file of `key=value` lines; replaces the soliton flags
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Record wall-clock seconds per check (breaks byte-identical reruns)
    #[arg(long)]
    pub record_timings: bool,
}

impl RunArgs {
    pub fn into_config(self, mode: Mode) -> Result<RunConfig, CliError> {
        let soliton = match &self.spec {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                SolitonSpec::from_key_value(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => {
                let speeds = match &self.speeds {
                    Some(s) => parse_list(s).map_err(usage)?,
                    None => SolitonSpec::default_speeds(self.soliton, self.n),
                };
                let mut spec = SolitonSpec::with_default_window(self.soliton, self.n, speeds);
                if let Some(w) = &self.window {
                    spec.window = parse_window(w).map_err(usage)?;
                }
                spec.resolution(self.res)
            }
        };
        soliton.validate().map_err(usage)?;

        let mut checks = Vec::new();
        for sel in &self.check {
            let add: Vec<CheckKind> = match sel {
                CheckSel::All if mode == Mode::Converge => {
                    CheckKind::ALL.into_iter().filter(|k| k.has_ladder()).collect()
                }
                CheckSel::All => CheckKind::ALL.to_vec(),
                CheckSel::One(k) => vec![*k],
            };
            for k in add {
                if !checks.contains(&k) {
                    checks.push(k);
                }
            }
        }
        if mode == Mode::Converge {
            if let Some(k) = checks.iter().find(|k| !k.has_ladder()) {
                return Err(CliError::Usage(format!("the {k} check has no refinement study")));
            }
        }

        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(CliError::Usage(format!("--step must be positive, got {}", self.step)));
        }
        let mut tolerances = Tolerances::default();
        for (k, v) in &self.tol {
            tolerances.set(k, *v).map_err(usage)?;
        }
        let settings = Settings {
            step: self.step,
            samples: self.samples,
            seed: self.seed,
            tolerances,
            resolutions: self.resolutions,
        };
        Ok(RunConfig {
            mode,
            soliton,
            backend: self.backend.into(),
            checks,
            settings,
            out: self.out,
            plot_data: self.plot_data,
            record_timings: self.record_timings,
        })
    }
}

fn usage(e: solitonlab::Error) -> CliError {
    CliError::Usage(e.to_string())
}
