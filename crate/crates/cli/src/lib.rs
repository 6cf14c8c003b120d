//! `scamdyn` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration, 3 simulation, 4 data, 5 inference.

pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use scamdyn_core::data::{load_reports, pool, DataError, ReportSeries};
use scamdyn_core::inference::{posterior_predictive, run_dram, summarize, FitConfig, PredictiveConfig};
use scamdyn_core::integrators::{
    simulate, total_population_bound_check, RemovedUpdate, Scheme, StepConfig, Trajectory,
};
use scamdyn_core::model::{classify_sfe_stability, see_condition, threshold_population};
use scamdyn_core::sensitivity::{global_analysis_with_progress, local_indices, GlobalConfig};
use scamdyn_core::{Param, Parameters};

pub use config::{ConfigError, RunConfig};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SIMULATION: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_INFERENCE: i32 = 5;

/// Below this many residual degrees of freedom PRCC p-values are unreliable.
pub const LOW_DF_WARNING: usize = 30;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(msg: impl fmt::Display) -> Self {
        CliError { code: EXIT_CONFIG, message: format!("config error: {msg}") }
    }
    fn simulation(msg: impl fmt::Display) -> Self {
        CliError { code: EXIT_SIMULATION, message: format!("simulation error: {msg}") }
    }
    fn data(msg: impl fmt::Display) -> Self {
        CliError { code: EXIT_DATA, message: format!("data error: {msg}") }
    }
    fn inference(msg: impl fmt::Display) -> Self {
        CliError { code: EXIT_INFERENCE, message: format!("inference error: {msg}") }
    }
    /// Output files count as simulation-side failures; no better code exists.
    fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError { code: EXIT_SIMULATION, message: format!("cannot write {}: {err}", path.display()) }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::config(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Parser)]
#[command(name = "scamdyn", version, about = "Scam-dynamics model: simulation, stability, calibration, sensitivity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Seed for every random stream of the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override a config key, e.g. `--set params.beta=0.01`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the model and write trajectory CSV plus JSON summary.
    Simulate(SimulateArgs),
    /// Print scam-free equilibrium stability as JSON.
    Stability(StabilityArgs),
    /// Calibrate parameters to monthly report counts with DRAM.
    Fit(FitArgs),
    /// Local R0 indices and/or global LHS-PRCC analysis.
    Sensitivity(SensitivityArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    #[arg(long = "removed-update")]
    pub removed_update: Option<RemovedUpdate>,
    /// One run per value, e.g. `lambda=0.04,0.05,0.06`.
    #[arg(long, value_name = "PARAM=V1,V2,...")]
    pub sweep: Option<String>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub common: Common,
    /// Population entering R0 (defaults to the initial total).
    #[arg(long)]
    pub n: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Report CSV (`month,province,reports`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub observable: Option<scamdyn_core::observe::Observable>,
    #[arg(long)]
    pub province: Option<String>,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub local: bool,
    #[arg(long)]
    pub global: bool,
    /// Number of LHS rows.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("scamdyn: {e}");
            e.code
        }
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Stability(a) => cmd_stability(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Sensitivity(a) => cmd_sensitivity(&a),
    }
}

/// Reads the config file (if any), applies `--set` overrides, and validates.
pub fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let text = match &common.config {
        Some(path) => {
            std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        }
        None => String::new(),
    };
    let mut table: toml::Table = text.parse().map_err(CliError::config)?;
    for item in &common.overrides {
        apply_override(&mut table, item)?;
    }
    let cfg: RunConfig = table.try_into().map_err(CliError::config)?;
    cfg.parameters().validate().map_err(CliError::config)?;
    cfg.init.state().validate().map_err(CliError::config)?;
    Ok(cfg)
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item.split_once('=').ok_or_else(|| CliError::config(format!("override `{item}` lacks `=`")))?;
    let (section, field) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| CliError::config(format!("override key `{key}` must be SECTION.KEY")))?;
    // Bare words become strings so `--set sim.scheme=reference` works unquoted.
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let entry = table.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(sub) = entry else {
        return Err(CliError::config(format!("`{section}` is not a section")));
    };
    sub.insert(field.to_string(), value);
    Ok(())
}

/// Writes `bytes` to `dir/name` via a temp file renamed into place.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(&path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(&path, e))?;
    tmp.persist(&path).map_err(|e| CliError::io(&path, e.error))?;
    Ok(path)
}

fn to_bytes(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to memory cannot fail");
    buf
}

fn json_bytes(value: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("json values serialize");
    s.push('\n');
    s.into_bytes()
}

/// Parses `param=v1,v2,...`, keeping each value's original spelling for file names.
pub fn parse_sweep(spec: &str) -> Result<(Param, Vec<(String, f64)>), CliError> {
    let (name, list) = spec.split_once('=').ok_or_else(|| CliError::config("--sweep expects PARAM=V1,V2,..."))?;
    let param: Param = name.trim().parse().map_err(CliError::config)?;
    let values = list
        .split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<f64>()
                .map(|v| (tok.to_string(), v))
                .map_err(|_| CliError::config(format!("--sweep value `{tok}` is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::config("--sweep needs at least one value"));
    }
    Ok((param, values))
}

/// First stored time at which `As < 1`.
pub fn time_scammers_below_one(traj: &Trajectory) -> Option<f64> {
    traj.times.iter().zip(&traj.states).find(|(_, s)| s.a_s < 1.0).map(|(t, _)| *t)
}

fn simulation_summary(traj: &Trajectory, n: f64, tol: f64) -> Map<String, Value> {
    let stab = classify_sfe_stability(&traj.params, n, tol);
    let mut m = Map::new();
    m.insert("R0".into(), json!(stab.r0));
    m.insert("classification".into(), json!(stab.classification.to_string()));
    m.insert("N0".into(), json!(traj.states.first().map(|s| s.total())));
    m.insert("N_end".into(), json!(traj.final_state().map(|s| s.total())));
    m.insert("bound_check".into(), json!(total_population_bound_check(traj)));
    m.insert("scheme".into(), json!(traj.scheme.to_string()));
    m.insert("h".into(), json!(traj.h));
    m.insert("t_end".into(), json!(traj.last_time()));
    m.insert("t_As_below_1".into(), json!(time_scammers_below_one(traj)));
    m
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.common)?;
    let mut step = StepConfig::new(
        args.h.unwrap_or(cfg.sim.h),
        args.t_end.unwrap_or(cfg.sim.t_end),
        args.scheme.unwrap_or(cfg.sim.scheme),
    )
    .map_err(CliError::config)?;
    step.removed_update = args.removed_update.unwrap_or(cfg.sim.removed_update);
    let init = cfg.init.state();
    let n = cfg.population();
    let base = cfg.parameters();

    let runs: Vec<(Option<(Param, String)>, Parameters)> = match &args.sweep {
        None => vec![(None, base)],
        Some(spec) => {
            let (param, values) = parse_sweep(spec)?;
            values
                .into_iter()
                .map(|(tok, v)| {
                    let p = base.with(param, v);
                    p.validate().map_err(CliError::config)?;
                    Ok((Some((param, tok)), p))
                })
                .collect::<Result<_, CliError>>()?
        }
    };

    for (label, params) in runs {
        let traj = simulate(&init, &params, &step).map_err(CliError::simulation)?;
        let suffix = label.as_ref().map(|(p, tok)| format!("_{p}_{tok}")).unwrap_or_default();
        let mut summary = simulation_summary(&traj, n, cfg.sim.threshold_tol);
        if let Some((p, _)) = &label {
            summary.insert("sweep_param".into(), json!(p.name()));
            summary.insert("sweep_value".into(), json!(params.get(*p)));
        }
        let csv = write_atomic(&args.common.out, &format!("trajectory{suffix}.csv"), traj.to_csv_string().as_bytes())?;
        let summary = Value::Object(summary);
        write_atomic(&args.common.out, &format!("summary{suffix}.json"), &json_bytes(&summary))?;
        eprintln!("wrote {}", csv.display());
        println!("{summary}");
    }
    Ok(())
}

pub fn stability_json(params: &Parameters, n: f64, tol: f64) -> Value {
    let stab = classify_sfe_stability(params, n, tol);
    let mut m = Map::new();
    m.insert("N".into(), json!(n));
    m.insert("R0".into(), json!(stab.r0));
    m.insert("p1".into(), json!(stab.p1));
    m.insert("p2".into(), json!(stab.p2));
    m.insert("discriminant".into(), json!(stab.discriminant));
    m.insert("eigenvalue_1".into(), json!(stab.eigenvalue_pair[0]));
    m.insert("eigenvalue_2".into(), json!(stab.eigenvalue_pair[1]));
    m.insert("classification".into(), json!(stab.classification.to_string()));
    m.insert("see_condition".into(), json!(see_condition(params, n).ok()));
    m.insert("threshold_N".into(), json!(threshold_population(params).ok()));
    Value::Object(m)
}

pub fn cmd_stability(args: &StabilityArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.common)?;
    let n = args.n.unwrap_or_else(|| cfg.population());
    if !(n.is_finite() && n >= 0.0) {
        return Err(CliError::config(format!("population must be finite and nonnegative, got {n}")));
    }
    println!("{}", serde_json::to_string_pretty(&stability_json(&cfg.parameters(), n, cfg.sim.threshold_tol)).unwrap());
    Ok(())
}

fn fit_series(cfg: &RunConfig, path: &Path, province: Option<&str>) -> Result<ReportSeries, CliError> {
    let all = load_reports(path).map_err(CliError::data)?;
    let series = match province {
        Some(name) => all
            .into_iter()
            .find(|s| s.label == name)
            .ok_or_else(|| CliError::data(format!("no province `{name}` in {}", path.display())))?,
        None => pool(&all).map_err(CliError::data)?,
    };
    if series.is_empty() {
        return Err(CliError::data(DataError::InvalidSpec("empty series".into())));
    }
    if !(cfg.fit.scale.is_finite() && cfg.fit.scale > 0.0) {
        return Err(CliError::config(format!("fit.scale must be positive, got {}", cfg.fit.scale)));
    }
    Ok(series.scaled(cfg.fit.scale))
}

pub fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.common)?;
    if let Some(i) = args.iterations {
        cfg.fit.iterations = i;
    }
    if let Some(o) = args.observable {
        cfg.fit.observable = o;
    }
    if let Some(s) = args.common.seed {
        cfg.fit.seed = s;
    }
    let data_path = args
        .data
        .clone()
        .or_else(|| cfg.fit.data.clone())
        .ok_or_else(|| CliError::config("fit needs --data or fit.data"))?;
    let province = args.province.as_deref().or(cfg.fit.province.as_deref());
    let series = fit_series(&cfg, &data_path, province)?;

    let times = series.times();
    let mut init = cfg.init.state();
    init.v = cfg.fit.v0.unwrap_or(series.counts[0]);
    init.validate().map_err(CliError::config)?;

    let mut fit = FitConfig::new(cfg.parameters(), init, times.clone());
    fit.iterations = cfg.fit.iterations;
    fit.adapt_interval = cfg.fit.adapt_interval;
    fit.adapt = cfg.fit.adapt;
    fit.dr_stages = cfg.fit.dr_stages;
    fit.dr_scale = cfg.fit.dr_scale;
    fit.seed = cfg.fit.seed;
    fit.error_model = cfg.fit.error_model();
    fit.observable = cfg.fit.observable;
    fit.h = cfg.fit.h;
    fit.validate().map_err(CliError::config)?;
    let bounds = cfg.fit.bounds()?;
    if !(0.0..1.0).contains(&cfg.fit.burn_in) {
        return Err(CliError::config(format!("fit.burn_in must be in [0, 1), got {}", cfg.fit.burn_in)));
    }

    let chain = run_dram(&fit, &series.counts, &bounds).map_err(CliError::inference)?;
    let summary = summarize(&chain, cfg.fit.burn_in).map_err(CliError::inference)?;
    let kept = chain.len() - (chain.len() as f64 * cfg.fit.burn_in).floor() as usize;
    let band = posterior_predictive(
        &chain,
        &PredictiveConfig {
            n_draws: cfg.fit.predictive_draws.clamp(1, kept),
            burn_in_fraction: cfg.fit.burn_in,
            init,
            times,
            observable: cfg.fit.observable,
            h: cfg.fit.h,
            seed: cfg.fit.seed.wrapping_add(1),
        },
    )
    .map_err(CliError::inference)?;

    let out = &args.common.out;
    write_atomic(out, "chain.csv", &to_bytes(|w| chain.write_csv(w)))?;
    write_atomic(out, "summary.csv", &to_bytes(|w| summary.write_csv(w)))?;
    write_atomic(out, "predictive.csv", &to_bytes(|w| band.write_csv(w, Some(&series.counts))))?;
    let mut m = Map::new();
    m.insert("series".into(), json!(series.label));
    m.insert("months".into(), json!(series.len()));
    m.insert("iterations".into(), json!(chain.len()));
    m.insert("acceptance_rate".into(), json!(chain.acceptance_rate()));
    m.insert("dr_accepted".into(), json!(chain.dr_accept_count));
    m.insert("low_acceptance".into(), json!(chain.low_acceptance()));
    m.insert("predictive_failed_draws".into(), json!(band.failed_draws));
    write_atomic(out, "fit.json", &json_bytes(&Value::Object(m)))?;

    if chain.low_acceptance() {
        eprintln!("warning: acceptance rate below 1%; the chain is barely moving");
    }
    println!("acceptance rate: {:.4}", chain.acceptance_rate());
    Ok(())
}

pub fn cmd_sensitivity(args: &SensitivityArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.common)?;
    if let Some(n) = args.n {
        cfg.sensitivity.n = n;
    }
    if let Some(h) = args.horizon {
        cfg.sensitivity.horizon = h;
    }
    if let Some(s) = args.common.seed {
        cfg.sensitivity.seed = s;
    }
    let (local, global) = match (args.local, args.global) {
        (false, false) => (true, true),
        flags => flags,
    };
    let out = &args.common.out;
    let params = cfg.parameters();

    if local {
        let idx = local_indices(&params).map_err(CliError::simulation)?;
        let path = write_atomic(out, "local_indices.csv", &to_bytes(|w| idx.write_csv(w, &params)))?;
        eprintln!("wrote {}", path.display());
    }

    if global {
        let mut g = GlobalConfig::new(cfg.sensitivity.n, cfg.init.state(), cfg.sensitivity.seed);
        g.ranges = cfg.sensitivity.ranges()?;
        g.h = cfg.sensitivity.h;
        g.horizon = cfg.sensitivity.horizon;
        let step = (g.n / 10).max(1);
        let report = global_analysis_with_progress(&g, |done, total| {
            if done % step == 0 || done == total {
                eprintln!("global sweep: {done}/{total} rows");
            }
        })
        .map_err(|e| match e {
            scamdyn_core::sensitivity::SensitivityError::InvalidRange { .. }
            | scamdyn_core::sensitivity::SensitivityError::InvalidDesign(_)
            | scamdyn_core::sensitivity::SensitivityError::Model(_) => CliError::config(e),
            other => CliError::simulation(other),
        })?;
        if report.dropped_rows > 0 {
            eprintln!("warning: {} rows failed to simulate and were dropped", report.dropped_rows);
        }
        if report.as_report.degrees_of_freedom < LOW_DF_WARNING {
            eprintln!(
                "warning: only {} degrees of freedom; PRCC p-values are unreliable",
                report.as_report.degrees_of_freedom
            );
        }
        let path = write_atomic(out, "prcc.csv", &to_bytes(|w| report.write_csv(w)))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
