//! Command-line front end. Every command is a batch job that reads the input
//! CSV, writes plain CSV/TOML files into the output directory (each written
//! to a temporary name and renamed into place) and echoes its effective
//! configuration next to them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::anomaly::{confidence_interval, AnomalyError, Decision, StreamConfig};
use crate::arima::{self, select_model, ArimaError, ArimaModel, SelectionBounds, MAX_HORIZON};
use crate::simulate::{inject_spikes, ArmaProcess, SimulationError};
use crate::sink::{
    ingest, regularize, run_pipeline, segment, Channel, DuplicatePolicy, Ingested, NodeKey,
    NodeRegistry, NodeStatus, PipelineConfig, Segment, SinkError,
};
use crate::timeseries::{
    acf, assess_stationarity, lag_plot_pairs, pacf, select_d, StationarityConfig, TimeSeries,
    TimeSeriesError,
};

#[derive(Debug, Parser)]
#[command(
    name = "sinkclean",
    version,
    about = "ARIMA-based anomaly detection and repair for sensor streams"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an ARIMA model per node; write the model plus ACF, PACF and lag-plot tables.
    Fit(ConfigArgs),
    /// Fit (or load) a model per node and write a forecast table with confidence bounds.
    Forecast(ConfigArgs),
    /// Like clean, but the output column keeps the observed values.
    Detect(ConfigArgs),
    /// Test every post-training reading and replace anomalies with forecasts.
    Clean(ConfigArgs),
    /// Generate a synthetic ARMA reading file with optional injected spikes.
    Simulate(ConfigArgs),
    /// Write ACF, PACF, lag-plot and stationarity tables per node.
    Acf(ConfigArgs),
}

impl Command {
    fn parts(self) -> (&'static str, ConfigArgs) {
        match self {
            Command::Fit(a) => ("fit", a),
            Command::Forecast(a) => ("forecast", a),
            Command::Detect(a) => ("detect", a),
            Command::Clean(a) => ("clean", a),
            Command::Simulate(a) => ("simulate", a),
            Command::Acf(a) => ("acf", a),
        }
    }
}

/// Flags shared by all commands. A `--config` TOML file may set any of these
/// (same names, snake_case); flags win over the file, the file over defaults.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigArgs {
    /// TOML file with default values for any of the other options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Input CSV with header node_id,timestamp,channel,value.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Directory for output files [default: .]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Only process this node id.
    #[arg(long)]
    pub node: Option<u32>,
    /// Only process this channel (temperature or light).
    #[arg(long)]
    pub channel: Option<String>,
    /// Confidence level of the acceptance interval [default: 0.95]
    #[arg(long)]
    pub level: Option<f64>,
    /// Largest AR order considered [default: 15]
    #[arg(long)]
    pub pmax: Option<usize>,
    /// Largest MA order considered [default: 35]
    #[arg(long)]
    pub qmax: Option<usize>,
    /// Largest differencing order considered [default: 2]
    #[arg(long)]
    pub dmax: Option<usize>,
    /// Samples per node used to fit the first model [default: 200]
    #[arg(long)]
    pub min_train: Option<usize>,
    /// Nominal sampling interval in seconds [default: 2]
    #[arg(long)]
    pub interval: Option<f64>,
    /// Snap tolerance as a fraction of the interval, in [0, 0.5) [default: 0.25]
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Segments of the regularized grid as label:start-end (0-based, inclusive), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub segments: Option<Vec<String>>,
    /// Random seed for simulate [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Forecast horizon, at most 25 [default: 25]
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Model document to forecast with instead of fitting one.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Largest lag in ACF/PACF tables [default: 40]
    #[arg(long)]
    pub max_lag: Option<usize>,
    /// Lag of the lag-plot table [default: 1]
    #[arg(long)]
    pub lag: Option<usize>,
    /// Refit on the history without the anomalous run instead of with its substitutions.
    #[arg(long)]
    pub refit_exclude_run: Option<bool>,
    /// AR coefficients for simulate, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub phi: Option<Vec<f64>>,
    /// MA coefficients for simulate, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    /// Process mean for simulate [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub mean: Option<f64>,
    /// Innovation variance for simulate [default: 1]
    #[arg(long)]
    pub variance: Option<f64>,
    /// Samples per node for simulate [default: 1000]
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of nodes for simulate, ids 1..=nodes [default: 1]
    #[arg(long)]
    pub nodes: Option<u32>,
    /// Sample indices that receive a spike in simulate, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub spikes: Option<Vec<usize>>,
    /// Spike height in innovation standard deviations [default: 6]
    #[arg(long)]
    pub spike_size: Option<f64>,
    /// Only inject spikes into this node (default: every node).
    #[arg(long)]
    pub spike_node: Option<u32>,
    /// Timestamp of the first simulated sample [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub start: Option<f64>,
}

macro_rules! merge_fields {
    ($flags:expr, $file:expr, $($f:ident),*) => {
        ConfigArgs { config: $flags.config.clone(), $($f: $flags.$f.or($file.$f),)* }
    };
}

impl ConfigArgs {
    fn merged_with(self, file: ConfigArgs) -> ConfigArgs {
        merge_fields!(
            self,
            file,
            input,
            out_dir,
            node,
            channel,
            level,
            pmax,
            qmax,
            dmax,
            min_train,
            interval,
            tolerance,
            segments,
            seed,
            horizon,
            model,
            max_lag,
            lag,
            refit_exclude_run,
            phi,
            theta,
            mean,
            variance,
            n,
            nodes,
            spikes,
            spike_size,
            spike_node,
            start
        )
    }
}

/// Effective configuration of one run after applying flags, file and defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub input: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub node: Option<u32>,
    pub channel: Option<String>,
    pub level: f64,
    pub p_max: usize,
    pub q_max: usize,
    pub d_max: usize,
    pub min_train: usize,
    pub interval: f64,
    pub tolerance: f64,
    pub segments: Vec<String>,
    pub seed: u64,
    pub horizon: usize,
    pub model: Option<PathBuf>,
    pub max_lag: usize,
    pub lag: usize,
    pub refit_exclude_run: bool,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub n: usize,
    pub nodes: u32,
    pub spikes: Vec<usize>,
    pub spike_size: f64,
    pub spike_node: Option<u32>,
    pub start: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExitClass {
    Usage = 1,
    Data = 2,
    Numerical = 3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub class: ExitClass,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            class: ExitClass::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            class: ExitClass::Data,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class as i32
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

fn series_class(e: &TimeSeriesError) -> ExitClass {
    match e {
        TimeSeriesError::NumericalSingularity(_) => ExitClass::Numerical,
        _ => ExitClass::Data,
    }
}

fn arima_class(e: &ArimaError) -> ExitClass {
    match e {
        ArimaError::Series(s) => series_class(s),
        ArimaError::DegenerateVariance(_)
        | ArimaError::NonConvergence(_)
        | ArimaError::AllFitsFailed => ExitClass::Numerical,
        ArimaError::HorizonTooLarge { .. } | ArimaError::InvalidHorizon(_) => ExitClass::Usage,
        _ => ExitClass::Data,
    }
}

impl From<ArimaError> for CliError {
    fn from(e: ArimaError) -> Self {
        Self {
            class: arima_class(&e),
            message: e.to_string(),
        }
    }
}

impl From<TimeSeriesError> for CliError {
    fn from(e: TimeSeriesError) -> Self {
        Self {
            class: series_class(&e),
            message: e.to_string(),
        }
    }
}

impl From<SinkError> for CliError {
    fn from(e: SinkError) -> Self {
        match e {
            SinkError::Series(s) => s.into(),
            other => CliError::data(other.to_string()),
        }
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<AnomalyError> for CliError {
    fn from(e: AnomalyError) -> Self {
        match e {
            AnomalyError::InvalidLevel(_) | AnomalyError::InvalidSigma(_) => {
                CliError::usage(e.to_string())
            }
            AnomalyError::Forecast(a)
            | AnomalyError::RefitFailed(a)
            | AnomalyError::TrainingFailed(a) => a.into(),
            other => CliError::data(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

impl RunConfig {
    pub fn resolve(command: &str, flags: ConfigArgs) -> CliResult<Self> {
        let file = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    CliError::usage(format!("cannot read config {}: {e}", path.display()))
                })?;
                toml::from_str::<ConfigArgs>(&text).map_err(|e| {
                    CliError::usage(format!("config {}: {}", path.display(), e.message()))
                })?
            }
            None => ConfigArgs::default(),
        };
        let a = flags.merged_with(file);
        let config = RunConfig {
            command: command.to_string(),
            input: a.input,
            out_dir: a.out_dir.unwrap_or_else(|| PathBuf::from(".")),
            node: a.node,
            channel: a.channel,
            level: a.level.unwrap_or(0.95),
            p_max: a.pmax.unwrap_or(15),
            q_max: a.qmax.unwrap_or(35),
            d_max: a.dmax.unwrap_or(2),
            min_train: a.min_train.unwrap_or(200),
            interval: a.interval.unwrap_or(2.0),
            tolerance: a.tolerance.unwrap_or(0.25),
            segments: a.segments.unwrap_or_default(),
            seed: a.seed.unwrap_or(0),
            horizon: a.horizon.unwrap_or(MAX_HORIZON),
            model: a.model,
            max_lag: a.max_lag.unwrap_or(40),
            lag: a.lag.unwrap_or(1),
            refit_exclude_run: a.refit_exclude_run.unwrap_or(false),
            phi: a.phi.unwrap_or_default(),
            theta: a.theta.unwrap_or_default(),
            mean: a.mean.unwrap_or(0.0),
            variance: a.variance.unwrap_or(1.0),
            n: a.n.unwrap_or(1000),
            nodes: a.nodes.unwrap_or(1),
            spikes: a.spikes.unwrap_or_default(),
            spike_size: a.spike_size.unwrap_or(6.0),
            spike_node: a.spike_node,
            start: a.start.unwrap_or(0.0),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> CliResult<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::usage(format!(
                "--level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if !(self.interval.is_finite() && self.interval > 0.0) {
            return Err(CliError::usage(format!(
                "--interval must be positive, got {}",
                self.interval
            )));
        }
        if !(0.0..0.5).contains(&self.tolerance) {
            return Err(CliError::usage(format!(
                "--tolerance must lie in [0, 0.5), got {}",
                self.tolerance
            )));
        }
        if self.horizon == 0 || self.horizon > MAX_HORIZON {
            return Err(CliError::usage(format!(
                "--horizon must lie in 1..={MAX_HORIZON}, got {}",
                self.horizon
            )));
        }
        if self.max_lag == 0 || self.lag == 0 {
            return Err(CliError::usage("--max-lag and --lag must be at least 1"));
        }
        if !(self.variance.is_finite() && self.variance >= 0.0) {
            return Err(CliError::usage(format!(
                "--variance must be non-negative, got {}",
                self.variance
            )));
        }
        if let Some(c) = &self.channel {
            c.parse::<Channel>().map_err(CliError::usage)?;
        }
        self.parsed_segments()?;
        Ok(())
    }

    fn channel_filter(&self) -> Option<Channel> {
        self.channel.as_deref().and_then(|c| c.parse().ok())
    }

    fn parsed_segments(&self) -> CliResult<Vec<Segment>> {
        self.segments
            .iter()
            .map(|s| {
                s.parse::<Segment>()
                    .map_err(|e| CliError::usage(e.to_string()))
            })
            .collect()
    }

    pub fn selection_bounds(&self) -> SelectionBounds {
        SelectionBounds {
            p_max: self.p_max,
            q_max: self.q_max,
            d_max: self.d_max,
            min_train: self.min_train,
            ..SelectionBounds::default()
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            interval: self.interval,
            tolerance: self.tolerance,
            min_train: self.min_train,
            stream: StreamConfig {
                level: self.level,
                bounds: self.selection_bounds(),
                refit_policy: if self.refit_exclude_run {
                    crate::anomaly::RefitPolicy::ExcludeAnomalousRun
                } else {
                    crate::anomaly::RefitPolicy::IncludeSubstituted
                },
            },
        }
    }
}

/// Writes to a sibling temporary file, then renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::usage(format!("invalid output path {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, contents)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn prepare_out_dir(config: &RunConfig) -> CliResult<()> {
    fs::create_dir_all(&config.out_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", config.out_dir.display())))?;
    let echo = toml::to_string(config).expect("run config serializes");
    write_atomic(&config.out_dir.join("effective_config.toml"), &echo)
}

fn load_input(config: &RunConfig) -> CliResult<Ingested> {
    let path = config
        .input
        .as_ref()
        .ok_or_else(|| CliError::usage("--input is required"))?;
    let file = fs::File::open(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let mut ingested = ingest(std::io::BufReader::new(file), DuplicatePolicy::Report)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let channel = config.channel_filter();
    ingested.groups.retain(|(node, ch), _| {
        config.node.is_none_or(|n| n == *node) && channel.is_none_or(|c| c == *ch)
    });
    Ok(ingested)
}

fn stem(key: &NodeKey, label: Option<&str>) -> String {
    match label {
        Some(l) => format!("n{}_{}_{}", key.0, key.1, l),
        None => format!("n{}_{}", key.0, key.1),
    }
}

/// Regularized, gap-filled series per group, split into segments when asked.
fn analysis_series(
    config: &RunConfig,
    ingested: &Ingested,
) -> CliResult<Vec<(NodeKey, Option<String>, TimeSeries)>> {
    let segments = config.parsed_segments()?;
    let mut out = Vec::new();
    for (key, readings) in &ingested.groups {
        let series = regularize(readings, config.interval, config.tolerance)?
            .grid
            .filled()?;
        if segments.is_empty() {
            out.push((*key, None, series));
        } else {
            for (label, sub) in segment(&series, &segments)? {
                out.push((*key, Some(label), sub));
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::data("no readings match the node/channel filter"));
    }
    Ok(out)
}

fn correlogram_table(values: &[f64], max_lag: usize, partial: bool) -> CliResult<String> {
    let max_lag = max_lag.min(values.len().saturating_sub(1));
    let c = if partial {
        pacf(values, max_lag)?
    } else {
        acf(values, max_lag)?
    };
    let mut s = format!("lag,{},band\n", if partial { "pacf" } else { "acf" });
    for (lag, v) in c.coefficients.iter().enumerate() {
        let _ = writeln!(s, "{lag},{v},{}", c.band);
    }
    Ok(s)
}

fn lag_plot_table(values: &[f64], lag: usize) -> CliResult<String> {
    let lp = lag_plot_pairs(values, lag)?;
    let mut s = format!("# lag={} correlation={}\nx,y\n", lp.lag, lp.correlation);
    for (x, y) in lp.pairs {
        let _ = writeln!(s, "{x},{y}");
    }
    Ok(s)
}

fn write_diagnostic_tables(config: &RunConfig, name: &str, values: &[f64]) -> CliResult<()> {
    let dir = &config.out_dir;
    write_atomic(
        &dir.join(format!("acf_{name}.csv")),
        &correlogram_table(values, config.max_lag, false)?,
    )?;
    write_atomic(
        &dir.join(format!("pacf_{name}.csv")),
        &correlogram_table(values, config.max_lag, true)?,
    )?;
    write_atomic(
        &dir.join(format!("lagplot_{name}.csv")),
        &lag_plot_table(values, config.lag)?,
    )
}

/// Reports per-target failures on stderr; fails with the most severe class
/// if any target failed.
fn finish(failures: Vec<(String, CliError)>) -> CliResult<()> {
    let Some(worst) = failures.iter().map(|(_, e)| e.class).max() else {
        return Ok(());
    };
    for (target, e) in &failures {
        eprintln!("{target}: {e}");
    }
    Err(CliError {
        class: worst,
        message: format!("{} target(s) failed", failures.len()),
    })
}

pub fn cmd_fit(config: &RunConfig) -> CliResult<()> {
    let ingested = load_input(config)?;
    let targets = analysis_series(config, &ingested)?;
    prepare_out_dir(config)?;
    let bounds = config.selection_bounds();
    let mut summary = String::from(
        "node_id,channel,segment,n,p,d,q,aic,sigma2,whiteness_fraction,whiteness_pass\n",
    );
    let mut failures = Vec::new();
    for (key, label, series) in targets {
        let name = stem(&key, label.as_deref());
        let result = select_model(&series, &bounds)
            .map_err(CliError::from)
            .and_then(|sel| {
                write_atomic(
                    &config.out_dir.join(format!("model_{name}.toml")),
                    &sel.model.to_toml(),
                )?;
                write_diagnostic_tables(config, &name, series.values())?;
                Ok(sel)
            });
        match result {
            Ok(sel) => {
                let m = &sel.model;
                let _ = writeln!(
                    summary,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    key.0,
                    key.1,
                    label.unwrap_or_default(),
                    series.len(),
                    m.p(),
                    m.d(),
                    m.q(),
                    m.aic(),
                    m.sigma2(),
                    sel.diagnostics.fraction_inside,
                    sel.diagnostics.pass
                );
            }
            Err(e) => failures.push((name, e)),
        }
    }
    write_atomic(&config.out_dir.join("fit_summary.csv"), &summary)?;
    finish(failures)
}

pub fn cmd_forecast(config: &RunConfig) -> CliResult<()> {
    let loaded = match &config.model {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
            Some(
                ArimaModel::from_toml(&text)
                    .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?,
            )
        }
        None => None,
    };
    let ingested = load_input(config)?;
    let targets = analysis_series(config, &ingested)?;
    prepare_out_dir(config)?;
    let bounds = config.selection_bounds();
    let mut failures = Vec::new();
    for (key, label, series) in targets {
        let name = stem(&key, label.as_deref());
        let result = (|| -> CliResult<()> {
            let model = match &loaded {
                Some(m) => m.clone(),
                None => select_model(&series, &bounds)?.model,
            };
            let f = arima::forecast(&model, &series, config.horizon)?;
            let mut s = String::from("step,point,std_err,lower,upper\n");
            for (k, (mu, sigma)) in f.points.iter().zip(&f.std_errors).enumerate() {
                let ci = confidence_interval(*mu, *sigma, config.level)?;
                let _ = writeln!(s, "{},{mu},{sigma},{},{}", k + 1, ci.lower, ci.upper);
            }
            write_atomic(&config.out_dir.join(format!("forecast_{name}.csv")), &s)
        })();
        if let Err(e) = result {
            failures.push((name, e));
        }
    }
    finish(failures)
}

pub fn cmd_acf(config: &RunConfig) -> CliResult<()> {
    let ingested = load_input(config)?;
    let targets = analysis_series(config, &ingested)?;
    prepare_out_dir(config)?;
    let stationarity = StationarityConfig::default();
    let mut summary = String::from("node_id,channel,segment,n,stationary,decay_lag,selected_d\n");
    let mut failures = Vec::new();
    for (key, label, series) in targets {
        let name = stem(&key, label.as_deref());
        let result = (|| -> CliResult<()> {
            write_diagnostic_tables(config, &name, series.values())?;
            let report = assess_stationarity(series.values(), &stationarity)?;
            let d = select_d(&series, config.d_max, &stationarity)
                .map(|d| d.to_string())
                .unwrap_or_else(|_| "none".to_string());
            let _ = writeln!(
                summary,
                "{},{},{},{},{},{},{d}",
                key.0,
                key.1,
                label.as_deref().unwrap_or(""),
                series.len(),
                report.stationary,
                report.decay_lag.map(|l| l.to_string()).unwrap_or_default()
            );
            Ok(())
        })();
        if let Err(e) = result {
            failures.push((name, e));
        }
    }
    write_atomic(&config.out_dir.join("stationarity.csv"), &summary)?;
    finish(failures)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `substitute = false` is detect mode: same verdicts, but the output column
/// carries the observed value.
pub fn cmd_clean(config: &RunConfig, substitute: bool) -> CliResult<()> {
    let ingested = load_input(config)?;
    let channels: std::collections::BTreeSet<Channel> =
        ingested.groups.keys().map(|k| k.1).collect();
    if channels.len() > 1 {
        return Err(CliError::data(
            "input has several channels; pick one with --channel",
        ));
    }
    prepare_out_dir(config)?;
    let mut registry = NodeRegistry::new(config.pipeline_config());
    let output = run_pipeline(&mut registry, &ingested);

    let mut rows = String::from(
        "node_id,timestamp,observed,decision,lower,upper,output_value,forecast_step,fault_flag\n",
    );
    let mut summary = String::from(
        "node_id,channel,status,accepted,rejected,substituted_missing,refits,fault_flag,displaced,out_of_tolerance,stale,p,d,q\n",
    );
    for report in &output.reports {
        for row in &report.rows {
            let v = &row.verdict;
            let output_value = if substitute {
                Some(v.output_value())
            } else {
                v.observed
            };
            let _ = writeln!(
                rows,
                "{},{},{},{},{},{},{},{},{}",
                report.key.0,
                row.timestamp,
                opt(v.observed),
                v.decision,
                v.interval.lower,
                v.interval.upper,
                opt(output_value),
                v.forecast_step,
                row.fault_flag
            );
        }
        let status = match &report.status {
            NodeStatus::Trained => "trained".to_string(),
            NodeStatus::Untrained { available, needed } => {
                format!("untrained ({available}/{needed} samples)")
            }
            NodeStatus::Failed(msg) => format!("failed: {}", msg.replace(',', ";")),
        };
        let (p, d, q) = report
            .model
            .as_ref()
            .map(|m| (m.p().to_string(), m.d().to_string(), m.q().to_string()))
            .unwrap_or_default();
        let _ = writeln!(
            summary,
            "{},{},{status},{},{},{},{},{},{},{},{},{p},{d},{q}",
            report.key.0,
            report.key.1,
            report.count(Decision::Accepted),
            report.count(Decision::Rejected),
            report.count(Decision::SubstitutedMissing),
            report.refits,
            report.fault_flag,
            report.displaced,
            report.out_of_tolerance,
            report.stale,
        );
    }
    let _ = writeln!(summary, "# duplicates,{}", output.duplicates);
    let name = if substitute {
        "cleaned.csv"
    } else {
        "detected.csv"
    };
    write_atomic(&config.out_dir.join(name), &rows)?;
    write_atomic(&config.out_dir.join("summary.csv"), &summary)
}

fn node_seed(seed: u64, node: u32) -> u64 {
    seed ^ u64::from(node).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn cmd_simulate(config: &RunConfig) -> CliResult<()> {
    let process = ArmaProcess::new(
        config.phi.clone(),
        config.theta.clone(),
        config.mean,
        config.variance.sqrt(),
    )?;
    if config.nodes == 0 || config.n == 0 {
        return Err(CliError::usage("--nodes and --n must be at least 1"));
    }
    let channel = config.channel_filter().unwrap_or(Channel::Temperature);
    prepare_out_dir(config)?;
    let magnitude = config.spike_size * config.variance.sqrt();
    let mut streams = BTreeMap::new();
    let mut truth = String::from("node_id,index,timestamp,clean_value,injected_value\n");
    for node in 1..=config.nodes {
        let mut values = process.generate(config.n, node_seed(config.seed, node));
        if config.spike_node.is_none_or(|s| s == node) {
            for spike in inject_spikes(&mut values, &config.spikes, magnitude) {
                let t = config.start + spike.index as f64 * config.interval;
                let _ = writeln!(
                    truth,
                    "{node},{},{t},{},{}",
                    spike.index, spike.clean, spike.injected
                );
            }
        }
        streams.insert(node, values);
    }
    let mut csv = String::from("node_id,timestamp,channel,value\n");
    for i in 0..config.n {
        let t = config.start + i as f64 * config.interval;
        for (node, values) in &streams {
            let _ = writeln!(csv, "{node},{t},{channel},{}", values[i]);
        }
    }
    write_atomic(&config.out_dir.join("readings.csv"), &csv)?;
    write_atomic(&config.out_dir.join("ground_truth.csv"), &truth)
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    let (name, args) = cli.command.parts();
    let config = RunConfig::resolve(name, args)?;
    match name {
        "fit" => cmd_fit(&config),
        "forecast" => cmd_forecast(&config),
        "detect" => cmd_clean(&config, false),
        "clean" => cmd_clean(&config, true),
        "simulate" => cmd_simulate(&config),
        "acf" => cmd_acf(&config),
        _ => unreachable!("clap rejects unknown subcommands"),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                ExitClass::Usage as i32
            } else {
                0
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
