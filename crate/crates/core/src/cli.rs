//! Command-line front end: CSV paths and JSON summaries.
//!
//! Exit codes: 0 success, 2 invalid configuration or input, 3 simulation or
//! estimation failure, 4 a study tolerance was not met.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::estimators::{estimate, hh_estimate_values};
use crate::hh::{simulate_hh, HHParams, HHState, Membrane};
use crate::likelihood::{lan_remainder, log_likelihood_ratio};
use crate::model::{local_scale, ModelParams};
use crate::montecarlo::{
    functional_probe_lemma1, functional_probe_lemma4, run_parallel, run_study_unchecked, Functional, HhInput,
    ModelKind, StudyConfig, Submodel,
};
use crate::ou::simulate_observation;
use crate::path::{channel, SamplePath};
use crate::reconstruct::reconstruct_input_with;
use crate::rng::RngSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SIMULATION: i32 = 3;
pub const EXIT_TOLERANCE: i32 = 4;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "OTL_WORKERS";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Simulation(String),
    Tolerance(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Simulation(_) => EXIT_SIMULATION,
            Self::Tolerance(_) => EXIT_TOLERANCE,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Config(m) | Self::Simulation(m) | Self::Tolerance(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_)
            | Error::OutsideParameterSpace(_)
            | Error::DegreeTooLarge { .. }
            | Error::DiffusionMismatch(..)
            | Error::MissingChannel(_) => Self::Config(e.to_string()),
            _ => Self::Simulation(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "otl", version, about = "Polynomial trends under Ornstein-Uhlenbeck noise and stochastic Hodgkin-Huxley inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one path and write it as CSV.
    Simulate(SimulateArgs),
    /// Estimate parameters from a path CSV.
    Estimate(EstimateArgs),
    /// Reconstruct gating variables and accumulated input from a voltage CSV.
    Reconstruct(ReconstructArgs),
    /// Run a Monte Carlo study of rescaled estimation errors.
    McStudy(McStudyArgs),
    /// Check the quadratic expansion of local log-likelihood ratios.
    LanCheck(LanCheckArgs),
    /// Ergodic and weighted-integral functionals of the OU process.
    #[command(subcommand)]
    Probe(ProbeCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelArg {
    OuTrend,
    Hh,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "ou-trend")]
    pub model: ModelArg,
    /// Trend degree (defaults to the number of coefficients minus one).
    #[arg(long)]
    pub p: Option<usize>,
    /// Trend coefficients, or the input slope for `hh`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub theta: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Initial OU value (ignored for `hh`, see `--init`).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub x0: f64,
    /// Horizon (time units; ms for `hh`).
    #[arg(long)]
    pub n: f64,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random stream (replication index) under the master seed.
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    /// Initial Hodgkin-Huxley state `V,n,m,h,Y` (default: rest at V = 0, Y = 0).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub init: Option<Vec<f64>>,
    /// Membrane constant override `key=value` (g_na, g_k, g_l, e_na, e_k, e_l).
    #[arg(long = "membrane", value_name = "KEY=VALUE")]
    pub membrane: Vec<String>,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long, value_enum, default_value = "ou-trend")]
    pub model: ModelArg,
    /// Input path CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Trend degree for `ou-trend`.
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    /// Known initial state `V,n,m,h,Y` for reconstruction (default: rest at V = 0, Y = 0).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub init: Option<Vec<f64>>,
    /// Reconstruct the input from `V` even when the CSV carries `Y` or `zeta`.
    #[arg(long)]
    pub from_v: bool,
    #[arg(long = "membrane", value_name = "KEY=VALUE")]
    pub membrane: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// CSV with columns `t,V` (other columns are ignored).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub init: Option<Vec<f64>>,
    #[arg(long = "membrane", value_name = "KEY=VALUE")]
    pub membrane: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McStudyArgs {
    /// Study file with `key = value` lines; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub submodel: Option<String>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub theta: Option<Vec<f64>>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub n: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of replications M.
    #[arg(long, visible_alias = "m")]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: config file, then $OTL_WORKERS, then 1).
    #[arg(long)]
    pub workers: Option<usize>,
    /// `reconstructed` or `direct` input for the `hh` study.
    #[arg(long)]
    pub hh_input: Option<String>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Summary JSON (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-replication rescaled errors as CSV.
    #[arg(long)]
    pub errors_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LanCheckArgs {
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "0,1")]
    pub theta: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub x0: f64,
    /// Local direction `h` (length p + 2).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "1,1,1")]
    pub h: Vec<f64>,
    /// Horizons, in increasing order.
    #[arg(long, value_delimiter = ',', default_value = "250,1000,4000")]
    pub n: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub replications: usize,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Required bound on the median |remainder| at the largest horizon.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ProbeCommand {
    /// `(ℓ/r^ℓ)∫_0^r s^{ℓ-1} f(X_s) ds` along one path.
    Lemma1(Lemma1Args),
    /// Covariance of `n^{-(2i+1)/2}∫_0^n s^i X_s ds` over replications.
    Lemma4(Lemma4Args),
}

#[derive(Debug, Args)]
pub struct Lemma1Args {
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub x0: f64,
    /// identity, square, abs or indicator(a,b).
    #[arg(long, default_value = "square")]
    pub f: String,
    #[arg(long, default_value_t = 1)]
    pub ell: u32,
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2000")]
    pub horizons: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Lemma4Args {
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub x0: f64,
    #[arg(long, default_value_t = 1)]
    pub ell: usize,
    #[arg(long, default_value_t = 2000.0)]
    pub n: f64,
    #[arg(long, default_value_t = 500)]
    pub replications: usize,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command, returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("otl: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Reconstruct(a) => cmd_reconstruct(&a),
        Command::McStudy(a) => cmd_mc_study(&a),
        Command::LanCheck(a) => cmd_lan_check(&a),
        Command::Probe(ProbeCommand::Lemma1(a)) => cmd_probe_lemma1(&a),
        Command::Probe(ProbeCommand::Lemma4(a)) => cmd_probe_lemma4(&a),
    }
}

// ---------------------------------------------------------------- output

fn write_output(out: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| config_err(format!("cannot write {}: {e}", p.display()))),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| config_err(format!("cannot write to stdout: {e}"))),
    }
}

fn write_json(out: Option<&Path>, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Simulation(e.to_string()))?;
    text.push('\n');
    write_output(out, text.as_bytes())
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serializes `t` plus the named channels; absent channels are written as zeros.
pub fn path_to_csv(path: &SamplePath, columns: &[&str]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t"];
    header.extend_from_slice(columns);
    w.write_record(&header).map_err(|e| config_err(e.to_string()))?;
    let data: Vec<Option<&[f64]>> = columns.iter().map(|c| path.channel(c).ok()).collect();
    for k in 0..path.len() {
        let mut row = Vec::with_capacity(columns.len() + 1);
        row.push(format_value(path.time(k)));
        for col in &data {
            row.push(format_value(col.map_or(0.0, |v| v[k])));
        }
        w.write_record(&row).map_err(|e| config_err(e.to_string()))?;
    }
    w.into_inner().map_err(|e| config_err(e.to_string()))
}

/// Reads a path CSV with a leading `t` column on a uniform grid from 0.
pub fn read_path_csv(file: &Path) -> CliResult<SamplePath> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(file)
        .map_err(|e| config_err(format!("cannot read {}: {e}", file.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| config_err(format!("malformed CSV header in {}: {e}", file.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.first().map(String::as_str) != Some("t") {
        return Err(config_err(format!("{}: first column must be `t`", file.display())));
    }
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| config_err(format!("malformed CSV in {}: {e}", file.display())))?;
        if rec.len() != headers.len() {
            return Err(config_err(format!("{}: row {} has {} fields", file.display(), line + 2, rec.len())));
        }
        for (col, field) in cols.iter_mut().zip(rec.iter()) {
            let v: f64 = field
                .parse()
                .map_err(|_| config_err(format!("{}: row {}: `{field}` is not a number", file.display(), line + 2)))?;
            col.push(v);
        }
    }
    let t = &cols[0];
    if t.len() < 2 {
        return Err(config_err(format!("{}: need at least two rows", file.display())));
    }
    let delta = t[1] - t[0];
    if t[0] != 0.0 || !(delta > 0.0) {
        return Err(config_err(format!("{}: time grid must start at 0 and increase", file.display())));
    }
    for (k, tk) in t.iter().enumerate() {
        let expect = k as f64 * delta;
        if (tk - expect).abs() > 1e-9 * expect.max(1.0) {
            return Err(config_err(format!("{}: time grid is not uniform at row {}", file.display(), k + 2)));
        }
    }
    if headers.len() < 2 {
        return Err(config_err(format!("{}: no data columns", file.display())));
    }
    let channels = headers.into_iter().zip(cols).skip(1).collect();
    SamplePath::new(delta, channels).map_err(|e| config_err(format!("{}: {e}", file.display())))
}

// ------------------------------------------------------------ provenance

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `{config_hash, master_seed, version}`; the hash covers the canonical JSON
/// of `config`, which must exclude worker counts and output paths.
fn provenance(command: &str, config: &Value, seed: Option<u64>) -> Value {
    let canonical = serde_json::to_string(config).unwrap_or_default();
    json!({
        "command": command,
        "config_hash": sha256_hex(canonical.as_bytes()),
        "master_seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
    })
}

// --------------------------------------------------------------- helpers

fn parse_membrane(overrides: &[String]) -> CliResult<Membrane> {
    let mut m = Membrane::default();
    for item in overrides {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| config_err(format!("membrane override `{item}` is not KEY=VALUE")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| config_err(format!("membrane override `{item}`: not a number")))?;
        match k.trim() {
            "g_na" => m.g_na = v,
            "g_k" => m.g_k = v,
            "g_l" => m.g_l = v,
            "e_na" => m.e_na = v,
            "e_k" => m.e_k = v,
            "e_l" => m.e_l = v,
            other => return Err(config_err(format!("unknown membrane constant `{other}`"))),
        }
    }
    m.validate()?;
    Ok(m)
}

fn parse_init(init: Option<&[f64]>) -> CliResult<HHState> {
    match init {
        None => Ok(HHState::default()),
        Some([v, n, m, h, y]) => {
            let s = HHState { v: *v, n: *n, m: *m, h: *h, y: *y };
            if !s.is_interior() {
                return Err(config_err(format!("initial state {init:?} is not interior")));
            }
            Ok(s)
        }
        Some(other) => Err(config_err(format!("--init needs five values V,n,m,h,Y, got {}", other.len()))),
    }
}

fn resolve_workers(flag: Option<usize>, config: Option<usize>) -> CliResult<usize> {
    if let Some(w) = flag.or(config) {
        return Ok(w);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| config_err(format!("{WORKERS_ENV}=`{s}` is not a worker count"))),
        Err(_) => Ok(1),
    }
}

// -------------------------------------------------------------- simulate

pub const OU_COLUMNS: [&str; 3] = [channel::Y, channel::X, channel::DW];
pub const HH_COLUMNS: [&str; 7] = [channel::V, channel::N, channel::M, channel::H, channel::Y, channel::X, channel::DW];

fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    let rng = RngSpec::new(a.seed, a.stream);
    let bytes = match a.model {
        ModelArg::OuTrend => {
            if let Some(p) = a.p {
                if a.theta.len() != p + 1 {
                    return Err(config_err(format!("p = {p} needs {} coefficients, got {}", p + 1, a.theta.len())));
                }
            }
            let params = ModelParams::from_coeffs(&a.theta, a.tau, a.c, a.x0)?;
            let path = simulate_observation(&params, a.n, a.delta, rng)?;
            path_to_csv(&path, &OU_COLUMNS)?
        }
        ModelArg::Hh => {
            if a.theta.len() != 1 {
                return Err(config_err("the hh model takes a single input slope --theta"));
            }
            let params = HHParams::new(a.theta[0], a.tau, a.c)?.with_membrane(parse_membrane(&a.membrane)?)?;
            let init = parse_init(a.init.as_deref())?;
            let path = simulate_hh(&params, &init, a.n, a.delta, rng)?;
            path_to_csv(&path, &HH_COLUMNS)?
        }
    };
    write_output(a.out.as_deref(), &bytes)
}

// -------------------------------------------------------------- estimate

fn check_init_matches(init: &HHState, v0: f64) -> CliResult<()> {
    if (init.v - v0).abs() > 1e-9 * v0.abs().max(1.0) {
        return Err(config_err(format!(
            "initial state has V = {} but the path starts at V = {v0}",
            init.v
        )));
    }
    Ok(())
}

fn cmd_estimate(a: &EstimateArgs) -> CliResult<()> {
    let raw = fs::read(&a.input).map_err(|e| config_err(format!("cannot read {}: {e}", a.input.display())))?;
    let path = read_path_csv(&a.input)?;
    let mut config = json!({
        "input_sha256": sha256_hex(&raw),
        "model": format!("{:?}", a.model),
    });
    let result = match a.model {
        ModelArg::OuTrend => {
            config["p"] = json!(a.p);
            if !path.has_channel(channel::Y) {
                return Err(config_err("ou-trend estimation needs a `Y` column"));
            }
            let est = estimate(&path, a.p)?;
            json!({
                "model": "ou-trend",
                "input_channel": channel::Y,
                "p": a.p,
                "theta_hat": est.theta_hat,
                "tau_hat": est.tau_hat,
                "flags": est.tau_flag.into_iter().collect::<Vec<_>>(),
                "condition_number": est.condition_number,
                "horizon": est.horizon,
                "moment_vector": est.moment_vector,
            })
        }
        ModelArg::Hh => {
            let membrane = parse_membrane(&a.membrane)?;
            config["membrane"] = json!(membrane);
            config["from_v"] = json!(a.from_v);
            let (values, source) = if !a.from_v && path.has_channel(channel::ZETA) {
                (path.channel(channel::ZETA)?.to_vec(), channel::ZETA.to_string())
            } else if !a.from_v && path.has_channel(channel::Y) {
                (path.channel(channel::Y)?.to_vec(), channel::Y.to_string())
            } else if path.has_channel(channel::V) {
                let init = parse_init(a.init.as_deref())?;
                check_init_matches(&init, path.channel(channel::V)?[0])?;
                config["init"] = json!(init);
                let rec = reconstruct_input_with(&path, &init, &membrane)?;
                (rec.channel(channel::ZETA)?.to_vec(), "zeta (reconstructed from V)".to_string())
            } else {
                return Err(config_err("hh estimation needs a `zeta`, `Y` or `V` column"));
            };
            let est = hh_estimate_values(&values, path.delta())?;
            json!({
                "model": "hh",
                "input_channel": source,
                "theta_hat": est.theta_hat,
                "tau_hat": est.tau_hat,
                "flags": est.tau_flag.into_iter().collect::<Vec<_>>(),
                "condition_number": Value::Null,
                "horizon": est.horizon,
            })
        }
    };
    let mut out = result;
    out["provenance"] = provenance("estimate", &config, None);
    write_json(a.out.as_deref(), &out)
}

// ----------------------------------------------------------- reconstruct

fn cmd_reconstruct(a: &ReconstructArgs) -> CliResult<()> {
    let path = read_path_csv(&a.input)?;
    let v = path.channel(channel::V).map_err(|_| config_err("reconstruction needs a `V` column"))?;
    let init = parse_init(a.init.as_deref())?;
    check_init_matches(&init, v[0])?;
    let membrane = parse_membrane(&a.membrane)?;
    let rec = reconstruct_input_with(&path, &init, &membrane)?;
    let rec = rec.with_channel(channel::V, v.to_vec())?;
    let bytes = path_to_csv(&rec, &[channel::V, channel::N, channel::M, channel::H, channel::ZETA])?;
    write_output(a.out.as_deref(), &bytes)
}

// -------------------------------------------------------------- mc-study

/// Parses a flat `key = value` study file. `#` starts a comment.
pub fn parse_study_file(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected key = value", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_field<T: std::str::FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.parse().map_err(|_| config_err(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_list(key: &str, v: &str) -> CliResult<Vec<f64>> {
    v.split(',').map(|x| parse_field(key, x.trim())).collect()
}

/// Builds the study configuration: defaults, then the file, then flags.
pub fn study_config(a: &McStudyArgs) -> CliResult<StudyConfig> {
    let mut cfg = StudyConfig::default();
    let mut file_workers = None;
    let (mut p_set, mut theta_set, mut submodel_set) = (false, false, false);
    if let Some(file) = &a.config {
        let text =
            fs::read_to_string(file).map_err(|e| config_err(format!("cannot read {}: {e}", file.display())))?;
        for (k, v) in parse_study_file(&text)? {
            match k.as_str() {
                "model" => cfg.model = v.parse()?,
                "submodel" => {
                    cfg.submodel = v.parse()?;
                    submodel_set = true;
                }
                "p" => {
                    cfg.p = parse_field(&k, &v)?;
                    p_set = true;
                }
                "theta" => {
                    cfg.theta = parse_list(&k, &v)?;
                    theta_set = true;
                }
                "tau" => cfg.tau = parse_field(&k, &v)?,
                "c" => cfg.c = parse_field(&k, &v)?,
                "x0" => cfg.x0 = parse_field(&k, &v)?,
                "n" => cfg.n = parse_field(&k, &v)?,
                "delta" => cfg.delta = parse_field(&k, &v)?,
                "replications" | "M" => cfg.replications = parse_field(&k, &v)?,
                "seed" => cfg.seed = parse_field(&k, &v)?,
                "workers" => file_workers = Some(parse_field(&k, &v)?),
                "hh_input" => cfg.hh_input = v.parse()?,
                "tolerance" => cfg.tolerance = Some(parse_field(&k, &v)?),
                other => return Err(config_err(format!("unknown study key `{other}`"))),
            }
        }
    }
    if let Some(m) = &a.model {
        cfg.model = m.parse()?;
    }
    if let Some(s) = &a.submodel {
        cfg.submodel = s.parse()?;
        submodel_set = true;
    }
    if let Some(p) = a.p {
        cfg.p = p;
        p_set = true;
    }
    if let Some(t) = &a.theta {
        cfg.theta = t.clone();
        theta_set = true;
    }
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = a.$field { cfg.$field = v; } )* };
    }
    set!(tau, c, x0, n, delta, replications, seed);
    if let Some(h) = &a.hh_input {
        cfg.hh_input = h.parse::<HhInput>()?;
    }
    if a.tolerance.is_some() {
        cfg.tolerance = a.tolerance;
    }
    if cfg.model == ModelKind::Hh {
        if !submodel_set {
            cfg.submodel = Submodel::Theta0Fixed;
        }
        if !theta_set {
            cfg.theta = vec![6.0];
        }
        cfg.p = 1;
    } else if !p_set {
        cfg.p = cfg.theta.len().saturating_sub(1);
    }
    cfg.workers = resolve_workers(a.workers, file_workers)?;
    cfg.validate()?;
    Ok(cfg)
}

fn config_json_without_workers(cfg: &StudyConfig) -> Value {
    let mut v = serde_json::to_value(cfg).unwrap_or(Value::Null);
    if let Value::Object(map) = &mut v {
        map.remove("workers");
    }
    v
}

fn cmd_mc_study(a: &McStudyArgs) -> CliResult<()> {
    let cfg = study_config(a)?;
    let summary = run_study_unchecked(&cfg)?;
    let config_json = config_json_without_workers(&cfg);
    let budget_exceeded = summary.failure_budget_exceeded();
    let pass = summary.all_checks_pass() && !budget_exceeded;
    let out = json!({
        "config": config_json,
        "summary": summary,
        "failure_budget_exceeded": budget_exceeded,
        "pass": pass,
        "provenance": provenance("mc-study", &config_json, Some(cfg.seed)),
    });
    if let Some(file) = &a.errors_out {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["replication".to_string()];
        header.extend(summary.labels.iter().cloned());
        w.write_record(&header).map_err(|e| config_err(e.to_string()))?;
        for (id, row) in summary.replication_ids.iter().zip(&summary.rescaled_errors) {
            let mut rec = vec![id.to_string()];
            rec.extend(row.iter().map(|x| format_value(*x)));
            w.write_record(&rec).map_err(|e| config_err(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| config_err(e.to_string()))?;
        write_output(Some(file), &bytes)?;
    }
    write_json(a.out.as_deref(), &out)?;
    if budget_exceeded {
        return Err(CliError::Tolerance(format!(
            "{} of {} replications failed",
            summary.failure_count, summary.replications
        )));
    }
    if !pass {
        let failed: Vec<&str> = summary.checks.iter().filter(|c| !c.pass).map(|c| c.label.as_str()).collect();
        return Err(CliError::Tolerance(format!("tolerance not met for {}", failed.join(", "))));
    }
    Ok(())
}

// ------------------------------------------------------------- lan-check

#[derive(Debug, Serialize)]
struct LanRow {
    n: f64,
    median_abs_remainder: f64,
    mean_likelihood_ratio: f64,
    se_likelihood_ratio: f64,
    likelihood_ratio_within_3se: bool,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

fn cmd_lan_check(a: &LanCheckArgs) -> CliResult<()> {
    let theta = ModelParams::from_coeffs(&a.theta, a.tau, a.c, a.x0)?;
    if a.h.len() != theta.dim() {
        return Err(config_err(format!("--h needs {} entries", theta.dim())));
    }
    if a.replications < 2 || a.n.is_empty() {
        return Err(config_err("need at least two replications and one horizon"));
    }
    let workers = resolve_workers(a.workers, None)?;
    let mut rows = Vec::with_capacity(a.n.len());
    for &n in &a.n {
        let shift = local_scale(theta.degree(), n)?.apply(&a.h);
        let moved: Vec<f64> = theta.theta().iter().zip(&shift).map(|(x, d)| x + d).collect();
        let theta_prime = theta.with_theta(&moved)?;
        let per_rep = run_parallel(workers, a.replications, |r| -> crate::Result<(f64, f64)> {
            let path = simulate_observation(&theta, n, a.delta, RngSpec::new(a.seed, r as u64))?;
            let rho = lan_remainder(&path, &theta, &a.h, n, 1.0)?;
            let l = log_likelihood_ratio(&path, &theta_prime, &theta, n)?.exp();
            Ok((rho.abs(), l))
        })?
        .into_iter()
        .collect::<crate::Result<Vec<_>>>()?;
        let m = per_rep.len() as f64;
        let ls: Vec<f64> = per_rep.iter().map(|x| x.1).collect();
        let mean = ls.iter().sum::<f64>() / m;
        let se = (ls.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt();
        rows.push(LanRow {
            n,
            median_abs_remainder: median(per_rep.iter().map(|x| x.0).collect()),
            mean_likelihood_ratio: mean,
            se_likelihood_ratio: se,
            likelihood_ratio_within_3se: (mean - 1.0).abs() <= 3.0 * se,
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].median_abs_remainder < w[0].median_abs_remainder);
    let last = rows.last().map_or(f64::NAN, |r| r.median_abs_remainder);
    let below = last < a.threshold;
    let lr_ok = rows.iter().all(|r| r.likelihood_ratio_within_3se);
    let config = json!({
        "theta": a.theta, "tau": a.tau, "c": a.c, "x0": a.x0, "h": a.h, "n": a.n,
        "replications": a.replications, "delta": a.delta, "seed": a.seed, "threshold": a.threshold,
    });
    let out = json!({
        "config": config,
        "rows": rows,
        "median_decreasing": monotone,
        "final_median_below_threshold": below,
        "likelihood_ratio_mean_ok": lr_ok,
        "pass": monotone && below && lr_ok,
        "provenance": provenance("lan-check", &config, Some(a.seed)),
    });
    write_json(a.out.as_deref(), &out)?;
    if !(monotone && below && lr_ok) {
        return Err(CliError::Tolerance("LAN check failed".into()));
    }
    Ok(())
}

// ----------------------------------------------------------------- probe

fn cmd_probe_lemma1(a: &Lemma1Args) -> CliResult<()> {
    let f: Functional = a.f.parse()?;
    let table = functional_probe_lemma1(a.tau, a.c, a.x0, f, a.ell, &a.horizons, a.delta, RngSpec::new(a.seed, 0))?;
    let target = f.invariant_mean(a.tau, a.c);
    let rows: Vec<Value> = table
        .iter()
        .map(|(r, v)| json!({ "r": r, "value": v, "abs_error": (v - target).abs() }))
        .collect();
    let config = json!({
        "tau": a.tau, "c": a.c, "x0": a.x0, "f": f.to_string(), "ell": a.ell,
        "horizons": a.horizons, "delta": a.delta, "seed": a.seed,
    });
    let out = json!({
        "config": config,
        "target": target,
        "rows": rows,
        "provenance": provenance("probe lemma1", &config, Some(a.seed)),
    });
    write_json(a.out.as_deref(), &out)
}

fn cmd_probe_lemma4(a: &Lemma4Args) -> CliResult<()> {
    let workers = resolve_workers(a.workers, None)?;
    let probe =
        functional_probe_lemma4(a.tau, a.c, a.x0, a.ell, a.n, a.replications, a.delta, a.seed, workers)?;
    let config = json!({
        "tau": a.tau, "c": a.c, "x0": a.x0, "ell": a.ell, "n": a.n,
        "replications": a.replications, "delta": a.delta, "seed": a.seed,
    });
    let out = json!({
        "config": config,
        "probe": probe,
        "provenance": provenance("probe lemma4", &config, Some(a.seed)),
    });
    write_json(a.out.as_deref(), &out)
}
