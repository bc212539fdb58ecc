mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use monoloc::estimators::{default_bandwidth, estimate_lse, select_direction};
use monoloc::frames::{self, FrameBootstrap, PipelineOptions, SCHEMA};
use monoloc::inference::{bootstrap_m_of_n_at, bootstrap_wild_at, WildWeights};
use monoloc::simulation::{
    run_coverage_study, run_variance_study, CoverageSpec, ScenarioConfig,
};
use monoloc::{Direction, EstimatorSpec, LocationEstimate, Method, ParameterBox, SearchConfig, SensorDataset};

/// Exit status when the run finished but some fit did not converge.
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "monoloc", version, about = "Locate a signal source from monotone attenuation data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the source location from a sensor table.
    Fit(FitArgs),
    /// Bootstrap confidence ellipsoids for the score estimator.
    Bootstrap(BootstrapArgs),
    /// Run a variance or coverage study from a scenario file.
    Simulate(SimulateArgs),
    /// Locate a target in an image frame against empty background frames.
    Frame(FrameArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Ssce,
    Lse,
    Smoothed,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ssce => Method::Ssce,
            MethodArg::Lse => Method::Lse,
            MethodArg::Smoothed => Method::SmoothedScore,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum DirectionArg {
    /// Fit both directions and keep the smaller squared error.
    Auto,
    /// Nondecreasing attenuation.
    Inc,
    /// Nonincreasing attenuation.
    Dec,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum StudyArg {
    Variance,
    Coverage,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum BootArg {
    MOfN,
    Wild,
}

#[derive(Args, Clone)]
struct SearchArgs {
    /// Grid points per dimension for the coarse search.
    #[arg(long)]
    grid_points: Option<usize>,
    /// Local searches started from the best grid points.
    #[arg(long)]
    multistarts: Option<usize>,
    /// Objective evaluation budget.
    #[arg(long)]
    max_evals: Option<usize>,
    /// Score norm accepted as zero (default scales with the data).
    #[arg(long)]
    tol_objective: Option<f64>,
    /// Location resolution (default 1e-4 of the box diameter).
    #[arg(long)]
    tol_step: Option<f64>,
    /// Start from the smaller search preset used in resampling loops.
    #[arg(long)]
    light: bool,
}

impl SearchArgs {
    fn config(&self, seed: u64) -> SearchConfig {
        let mut c = if self.light {
            SearchConfig::light()
        } else {
            SearchConfig::default()
        };
        if let Some(g) = self.grid_points {
            c.grid_points_per_dim = g;
        }
        if let Some(k) = self.multistarts {
            c.multistarts = k;
        }
        c.max_evals = self.max_evals.or(c.max_evals);
        c.tol_objective = self.tol_objective.or(c.tol_objective);
        c.tol_step = self.tol_step.or(c.tol_step);
        c.seed = seed;
        c
    }
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Sensor CSV with header x1,..,xd,y.
    #[arg(long)]
    data: PathBuf,
    /// Lower corner of the monitoring region, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "upper")]
    lower: Option<Vec<f64>>,
    /// Upper corner of the monitoring region, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "lower")]
    upper: Option<Vec<f64>>,
}

impl DataArgs {
    fn load(&self) -> Result<SensorDataset> {
        let bounds = match (&self.lower, &self.upper) {
            (Some(l), Some(u)) => Some(ParameterBox::new(l.clone(), u.clone())?),
            _ => None,
        };
        io::read_sensor_file(&self.data, bounds)
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "ssce")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "dec")]
    direction: DirectionArg,
    /// Bandwidth of the smoothed score (default: data-driven).
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Include every evaluated point in the report.
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    search: SearchArgs,
    /// Report path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BootstrapArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "ssce")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "dec")]
    direction: DirectionArg,
    /// Resample size exponent, m = floor(n^m_exp).
    #[arg(long, default_value_t = 0.875)]
    m_exp: f64,
    /// Explicit resample size; overrides --m-exp.
    #[arg(long)]
    m: Option<usize>,
    /// Number of bootstrap replicates.
    #[arg(long = "B", default_value_t = 200)]
    b: usize,
    /// Wild bootstrap with Mammen weights instead of m-out-of-n.
    #[arg(long)]
    wild: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON scenario, or an array of scenarios.
    #[arg(long)]
    scenario: PathBuf,
    /// CSV results, one row per cell.
    #[arg(long)]
    out: PathBuf,
    /// Full JSON diagnostics.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "variance")]
    study: StudyArg,
    /// Sample sizes (default: the scenario's n).
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Override the number of Monte Carlo datasets.
    #[arg(long)]
    replications: Option<usize>,
    /// Estimators for the variance study.
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["ssce", "lse"])]
    methods: Vec<MethodArg>,
    /// Bootstrap schemes for the coverage study.
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["m-of-n", "wild"])]
    bootstrap: Vec<BootArg>,
    #[arg(long, default_value_t = 0.9)]
    level: f64,
    #[arg(long = "B", default_value_t = 200)]
    b: usize,
    #[arg(long, default_value_t = 0.875)]
    m_exp: f64,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args)]
struct FrameArgs {
    /// Target frame, one per channel (.pgm or .csv).
    #[arg(long, required = true)]
    target: Vec<PathBuf>,
    /// Directory of empty frames, one per channel in --target order.
    #[arg(long, required = true)]
    background_dir: Vec<PathBuf>,
    /// Pixels per side of the random subsample.
    #[arg(long, default_value_t = 100)]
    grid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "B", default_value_t = 200)]
    b: usize,
    #[arg(long, default_value_t = 0.875)]
    m_exp: f64,
    /// Skip the bootstrap ellipsoids.
    #[arg(long)]
    no_bootstrap: bool,
    /// Write the |M_n| field over the subsampled pixels to this CSV.
    #[arg(long)]
    score_field: Option<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn fixed_direction(d: DirectionArg) -> Option<Direction> {
    match d {
        DirectionArg::Auto => None,
        DirectionArg::Inc => Some(Direction::NonDecreasing),
        DirectionArg::Dec => Some(Direction::NonIncreasing),
    }
}

/// Fit under the requested direction; `auto` fits both and keeps the smaller SSE.
fn fit_with_direction(
    data: &SensorDataset,
    method: Method,
    direction: DirectionArg,
    bandwidth: Option<f64>,
    config: &SearchConfig,
) -> Result<(LocationEstimate, Option<[f64; 2]>)> {
    let spec_for = |d| EstimatorSpec {
        method,
        direction: d,
        config: config.clone(),
        bandwidth,
    };
    match fixed_direction(direction) {
        Some(d) => Ok((spec_for(d).run(data)?, None)),
        None if method == Method::Ssce => {
            let c = select_direction(data, config)?;
            Ok((c.chosen, Some([c.sse_non_increasing, c.sse_non_decreasing])))
        }
        None if method == Method::Lse => {
            let dec = estimate_lse(data, Direction::NonIncreasing, config)?;
            let inc = estimate_lse(data, Direction::NonDecreasing, config)?;
            let sses = [dec.sse, inc.sse];
            Ok((if inc.sse < dec.sse { inc } else { dec }, Some(sses)))
        }
        None => {
            let dec = spec_for(Direction::NonIncreasing).run(data)?;
            let inc = spec_for(Direction::NonDecreasing).run(data)?;
            let sses = [dec.sse, inc.sse];
            Ok((if inc.sse < dec.sse { inc } else { dec }, Some(sses)))
        }
    }
}

fn direction_json(sses: Option<[f64; 2]>) -> serde_json::Value {
    match sses {
        Some([dec, inc]) => json!({"sse_non_increasing": dec, "sse_non_decreasing": inc}),
        None => serde_json::Value::Null,
    }
}

fn status(converged: bool) -> ExitCode {
    if converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_NOT_CONVERGED)
    }
}

fn run_fit(a: FitArgs) -> Result<ExitCode> {
    let data = a.data.load()?;
    let mut config = a.search.config(a.seed);
    config.trace = a.trace;
    let method = Method::from(a.method);
    let bandwidth = match method {
        Method::SmoothedScore => Some(a.bandwidth.unwrap_or_else(|| default_bandwidth(&data))),
        _ => None,
    };
    let (est, sses) = fit_with_direction(&data, method, a.direction, bandwidth, &config)?;
    let converged = est.converged;
    let report = json!({
        "schema": SCHEMA,
        "command": "fit",
        "n": data.len(),
        "dim": data.dim(),
        "bounds": {"lower": data.bounds().lower(), "upper": data.bounds().upper()},
        "search": config,
        "bandwidth": bandwidth,
        "direction_selection": direction_json(sses),
        "estimate": est,
    });
    io::write_json(&report, a.out.as_deref())?;
    Ok(status(converged))
}

fn run_bootstrap(a: BootstrapArgs) -> Result<ExitCode> {
    let data = a.data.load()?;
    let config = a.search.config(a.seed);
    let method = Method::from(a.method);
    let bandwidth = (method == Method::SmoothedScore).then(|| default_bandwidth(&data));
    let (center, sses) = fit_with_direction(&data, method, a.direction, bandwidth, &config)?;
    let spec = EstimatorSpec {
        method,
        direction: center.direction,
        config: config.clone(),
        bandwidth,
    };
    let n = data.len();
    let summary = if a.wild {
        bootstrap_wild_at(&data, &spec, &center, a.b, a.seed, WildWeights::Mammen)?
    } else {
        let m = a
            .m
            .unwrap_or_else(|| ((n as f64).powf(a.m_exp).floor() as usize).clamp(1, n));
        bootstrap_m_of_n_at(&data, &spec, &center, m, a.b, a.seed)?
    };
    let report = json!({
        "schema": SCHEMA,
        "command": "bootstrap",
        "n": n,
        "search": config,
        "direction_selection": direction_json(sses),
        "estimate": center,
        "bootstrap": summary,
    });
    io::write_json(&report, a.out.as_deref())?;
    Ok(status(center.converged))
}

fn load_scenarios(path: &std::path::Path) -> Result<Vec<ScenarioConfig>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).context("parsing scenario JSON")?;
    let list = if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    };
    Ok(list)
}

fn run_simulate(a: SimulateArgs) -> Result<ExitCode> {
    let mut scenarios = load_scenarios(&a.scenario)?;
    if scenarios.is_empty() {
        bail!("scenario file lists no scenarios");
    }
    if let Some(r) = a.replications {
        scenarios.iter_mut().for_each(|s| s.replications = r);
    }
    let ns = a.n.clone().unwrap_or_else(|| vec![scenarios[0].n]);
    let seed = scenarios[0].seed;
    match a.study {
        StudyArg::Variance => {
            let methods: Vec<Method> = a.methods.iter().map(|&m| m.into()).collect();
            let config = a.search.config(seed);
            let table = run_variance_study(&scenarios, &ns, &methods, &config)?;
            table.save(&a.out, a.json.as_deref())?;
            let failures: usize = table.rows.iter().map(|r| r.failures).sum();
            Ok(status(failures == 0))
        }
        StudyArg::Coverage => {
            let mut search = a.search.clone();
            if a.search.grid_points.is_none() && a.search.multistarts.is_none() {
                search.light = true;
            }
            let spec = CoverageSpec {
                methods: a
                    .bootstrap
                    .iter()
                    .map(|b| match b {
                        BootArg::MOfN => monoloc::inference::BootstrapMethod::MOutOfN,
                        BootArg::Wild => monoloc::inference::BootstrapMethod::Wild,
                    })
                    .collect(),
                m_exponent: a.m_exp,
                replicates: a.b,
                search: search.config(seed),
            };
            let table = run_coverage_study(&scenarios, &ns, &spec, a.level)?;
            table.save(&a.out, a.json.as_deref())?;
            let failures: usize = table.rows.iter().map(|r| r.failures).sum();
            Ok(status(failures == 0))
        }
    }
}

#[derive(Serialize)]
struct FieldRow<'a> {
    channel: &'a str,
    x1: f64,
    x2: f64,
    score_norm: f64,
}

fn run_frame(a: FrameArgs) -> Result<ExitCode> {
    if a.target.len() != a.background_dir.len() {
        bail!(
            "{} --target files but {} --background-dir directories",
            a.target.len(),
            a.background_dir.len()
        );
    }
    let frames = a
        .target
        .iter()
        .map(|p| frames::read_frame(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let labels = a
        .target
        .iter()
        .map(|p| p.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned()))
        .collect();
    let target = frames::FrameStack::new(frames, labels)?;
    let backgrounds = a
        .background_dir
        .iter()
        .map(|d| frames::read_frame_dir(d).with_context(|| format!("reading {}", d.display())))
        .collect::<Result<Vec<_>>>()?;
    let opts = PipelineOptions {
        grid: a.grid,
        seed: a.seed,
        search: a.search.config(a.seed),
        bootstrap: (!a.no_bootstrap).then_some(FrameBootstrap {
            replicates: a.b,
            m_exponent: a.m_exp,
        }),
        score_field: a.score_field.is_some(),
    };
    let mut report = frames::locate_in_frame(&target, &backgrounds, &opts)?;
    if let Some(path) = &a.score_field {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        for ch in &mut report.channels {
            for row in ch.score_field.take().unwrap_or_default() {
                w.serialize(FieldRow {
                    channel: &ch.label,
                    x1: row[0],
                    x2: row[1],
                    score_norm: row[2],
                })?;
            }
        }
        w.flush()?;
    }
    for ch in &report.channels {
        if let Some(e) = &ch.error {
            eprintln!("channel {}: {e}", ch.label);
        }
    }
    io::write_json(&report, a.out.as_deref())?;
    Ok(status(report.all_converged()))
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MONOLOC_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("MONOLOC_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            bail!("MONOLOC_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Bootstrap(a) => run_bootstrap(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Frame(a) => run_frame(a),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
