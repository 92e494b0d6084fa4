//! Command-line front end: one subcommand per module, JSON reports, CSV series and a run
//! manifest next to every output.

mod commands;
pub mod output;
pub mod verify;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{LabError, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CHECK: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "blowup-lab", version, about = "Type-II blowup laboratory for radial harmonic map heat flow")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for every randomized step; overrides the config file's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for independent cases.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
}

impl GlobalArgs {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ground state Q and derived fields as CSV.
    Profile(ProfileArgs),
    /// Kernel iterates T_k as CSV and the Φ_M coefficient table as JSON.
    Operator(OperatorArgs),
    /// Residual norms of the approximate profile and their fitted b_1 exponents.
    Qb(QbArgs),
    /// Integrates the b-system from the explicit solution.
    Modes(ModesArgs),
    /// Dynamically rescaled PDE run from a config file.
    Simulate(SimulateArgs),
    /// Log-log series and fit overlay from a simulation directory.
    Plotdata(PlotdataArgs),
    /// Profile, operator, profile-correction and mode checks for a list of dimensions.
    VerifyAll(VerifyArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    #[arg(long, default_value_t = 1e-4)]
    pub y_min: f64,
    #[arg(long, default_value_t = 1e4)]
    pub y_max: f64,
    #[arg(long, default_value_t = 2048)]
    pub n: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProfileArgs {
    #[arg(long)]
    pub d: usize,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OperatorArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long = "K", default_value_t = 4)]
    pub k: usize,
    #[arg(long = "M", default_value_t = 20.0)]
    pub m: f64,
    #[arg(long = "L", default_value_t = 3)]
    pub l: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub y_min: f64,
    #[arg(long, default_value_t = 1e3)]
    pub y_max: f64,
    #[arg(long, default_value_t = 6144)]
    pub n: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QbArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 1)]
    pub ell: usize,
    #[arg(long = "L", default_value_t = 2)]
    pub l: usize,
    #[arg(long)]
    pub b1: f64,
    #[arg(long, default_value_t = 0.5)]
    pub eta: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub y_min: f64,
    #[arg(long, default_value_t = 1e5)]
    pub y_max: f64,
    #[arg(long, default_value_t = 2304)]
    pub n: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModesArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub ell: usize,
    #[arg(long = "L")]
    pub l: usize,
    #[arg(long)]
    pub s0: f64,
    /// End of the integration window in s.
    #[arg(long, default_value_t = 1e9)]
    pub s1: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlotdataArgs {
    /// Directory holding trajectory.csv and rate_report.json.
    pub run_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    /// Comma-separated dimensions.
    #[arg(long = "d", value_delimiter = ',', num_args = 0.., default_values_t = vec![7usize, 8, 11])]
    pub dims: Vec<usize>,
    #[arg(long, hide = true)]
    pub inject_fault: Option<verify::Fault>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<PathBuf>,
    pub checks: Vec<CheckOutcome>,
}

/// What a subcommand produced, before the manifest is written.
pub(crate) struct Produced {
    pub outputs: Vec<PathBuf>,
    pub checks: Vec<CheckOutcome>,
    /// Directory or file the manifest is written next to.
    pub anchor: PathBuf,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Manifest path: `manifest.json` inside a directory anchor, `<stem>.manifest.json` beside a file.
pub fn manifest_path(anchor: &Path) -> PathBuf {
    if anchor.is_dir() {
        anchor.join("manifest.json")
    } else {
        let stem = anchor.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
        anchor.with_file_name(format!("{stem}.manifest.json"))
    }
}

fn write_manifest(manifest: &RunManifest, anchor: &Path) -> Result<PathBuf> {
    for f in &manifest.outputs {
        if !f.exists() {
            return Err(LabError::File(format!("listed output {} was not written", f.display())));
        }
    }
    let path = manifest_path(anchor);
    output::write_json(&path, manifest)?;
    Ok(path)
}

pub fn exit_code(err: &LabError) -> i32 {
    match err {
        LabError::Usage(_) | LabError::Parameter(_) | LabError::Domain(_) => EXIT_USAGE,
        LabError::Io(_) | LabError::File(_) | LabError::Parse { .. } => EXIT_IO,
        _ => EXIT_CHECK,
    }
}

/// Subcommand arguments plus the global flags, for the manifest.
fn echo<T: Serialize>(args: &T, g: &GlobalArgs) -> serde_json::Value {
    let mut v = serde_json::to_value(args).unwrap_or_default();
    if let serde_json::Value::Object(m) = &mut v {
        m.insert("seed".into(), g.seed().into());
        m.insert("threads".into(), g.threads.into());
        m.insert("out".into(), serde_json::to_value(&g.out).unwrap_or_default());
    }
    v
}

fn dispatch(cli: &Cli) -> Result<(String, serde_json::Value, Produced)> {
    let g = &cli.global;
    if g.threads == 0 {
        return Err(LabError::Usage("--threads must be at least 1".into()));
    }
    Ok(match &cli.command {
        Command::Profile(a) => ("profile".into(), echo(a, g), commands::profile(a, g)?),
        Command::Operator(a) => ("operator".into(), echo(a, g), commands::operator(a, g)?),
        Command::Qb(a) => ("qb".into(), echo(a, g), commands::qb(a, g)?),
        Command::Modes(a) => ("modes".into(), echo(a, g), commands::modes(a, g)?),
        Command::Simulate(a) => {
            let (cfg, produced) = commands::simulate(a, g)?;
            ("simulate".into(), echo(&cfg, g), produced)
        }
        Command::Plotdata(a) => ("plotdata".into(), echo(a, g), commands::plotdata(a, g)?),
        Command::VerifyAll(a) => ("verify-all".into(), echo(a, g), commands::verify_all(a, g)?),
    })
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let started = unix_now();
    let (name, config, produced) = match dispatch(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let manifest = RunManifest {
        subcommand: name,
        config,
        version: env!("CARGO_PKG_VERSION").into(),
        started_unix: started,
        finished_unix: unix_now(),
        outputs: produced.outputs,
        checks: produced.checks,
    };
    if let Err(e) = write_manifest(&manifest, &produced.anchor) {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    let failed: Vec<&str> = manifest.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        EXIT_OK
    } else {
        eprintln!("failed checks: {}", failed.join(", "));
        EXIT_CHECK
    }
}
