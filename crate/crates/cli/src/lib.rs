//! `bhawkes` command line.
//!
//! Every subcommand resolves its parameters in the same order: the
//! `--config` manifest or else the `paper-example` preset, then individual
//! flags. Results go to `--out-dir` (or `BHAWKES_OUT_DIR`,
//! or the manifest's `out_dir`) when set, otherwise to stdout.
//!
//! Exit codes: 0 success, 1 invalid input, 2 failure while running.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self as stdio, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use bhawkes_core::cluster::{self, default_lookback};
use bhawkes_core::config::{ExperimentConfig, GridSpec};
use bhawkes_core::estimate::{default_bin_width, estimate_params, Estimates};
use bhawkes_core::exact::{self, path_to_grid, EventLog};
use bhawkes_core::io::{self, Metadata};
use bhawkes_core::moments;
use bhawkes_core::price::{simulate_price, PriceModel, SideSeeding};
use bhawkes_core::scaling::{run_scaling, StartMode};
use bhawkes_core::verify::{run_verify, VerifyOptions};
use bhawkes_core::{validate_params, Error, ModelParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "bhawkes", version, about = "Buffer-Hawkes order book simulation and moment analytics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one exact path and write its event log.
    Simulate(SimulateArgs),
    /// Simulate market-order times from the cluster representation.
    Cluster(ClusterArgs),
    /// Evaluate first and second moment curves on a grid.
    Moments(MomentsArgs),
    /// Run the diffusion-scaling experiment.
    Scaling(ScalingArgs),
    /// Simulate one price path.
    Price(PriceArgs),
    /// Estimate observable parameter combinations from event logs.
    Estimate(EstimateArgs),
    /// Run the cross-oracle verification suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// (λ₀, a, b, c, d) = (2, 1, 2, 1, 1), whose derived constants are rational.
    #[value(name = "paper-example")]
    RationalExample,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named parameter preset.
    #[arg(long, value_enum, conflicts_with = "config")]
    preset: Option<Preset>,
    #[arg(long, allow_negative_numbers = true)]
    lambda0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    c: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    d: Option<f64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files; stdout when unset.
    #[arg(long, env = "BHAWKES_OUT_DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_negative_numbers = true)]
    horizon: Option<f64>,
    /// Burn in from an empty book, then restart the clock and counters.
    #[arg(long, allow_negative_numbers = true)]
    burn_in: Option<f64>,
    /// Write the path on a uniform grid of this many points instead of the event log.
    #[arg(long)]
    n_points: Option<usize>,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_negative_numbers = true)]
    horizon: Option<f64>,
    /// Start immigrants this long before zero; `default` means 40/q₋.
    #[arg(long)]
    lookback: Option<String>,
    /// Write the size path of a single cascade rooted at zero instead.
    #[arg(long)]
    cascade: bool,
}

#[derive(Debug, Args)]
struct MomentsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_negative_numbers = true)]
    t_max: Option<f64>,
    #[arg(long)]
    n_points: Option<usize>,
}

#[derive(Debug, Args)]
struct ScalingArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<u32>>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    t_grid: Option<Vec<f64>>,
    /// Start each path from a burned-in book instead of an empty one.
    #[arg(long, allow_negative_numbers = true)]
    burn_in: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Midprice,
    InverseDepth,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Seeding {
    Independent,
    Mirrored,
}

#[derive(Debug, Args)]
struct PriceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    s0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    drift: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    horizon: Option<f64>,
    #[arg(long)]
    n_points: Option<usize>,
    #[arg(long, value_enum, default_value = "independent")]
    seeding: Seeding,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
    /// Event-log CSVs to pool; a fresh path is simulated when none is given.
    #[arg(long = "input", value_name = "FILE")]
    inputs: Vec<PathBuf>,
    /// Horizon of the simulated path.
    #[arg(long, allow_negative_numbers = true)]
    horizon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    bin_width: Option<f64>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Monte Carlo sample size per check.
    #[arg(long)]
    paths: Option<usize>,
}

/// Input errors detected by the CLI itself.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// A verification run completed but some checks failed.
#[derive(Debug)]
struct ChecksFailed(usize);

impl std::fmt::Display for ChecksFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} verification check(s) failed", self.0)
    }
}

impl std::error::Error for ChecksFailed {}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    if e.downcast_ref::<Usage>().is_some() {
        return EXIT_VALIDATION;
    }
    match e.downcast_ref::<Error>() {
        Some(core) if core.is_validation() => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Cluster(a) => cluster_cmd(a),
        Command::Moments(a) => moments_cmd(a),
        Command::Scaling(a) => scaling(a),
        Command::Price(a) => price(a),
        Command::Estimate(a) => estimate(a),
        Command::Verify(a) => verify(a),
    }
}

/// Parameters, seed and output directory after applying the override order.
struct Resolved {
    config: ExperimentConfig,
    out_dir: Option<PathBuf>,
}

impl Resolved {
    fn params(&self) -> &ModelParams {
        &self.config.params
    }

    fn seed(&self) -> u64 {
        self.config.seed
    }
}

fn resolve(common: &Common) -> Result<Resolved> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(ModelParams::rational_example(), DEFAULT_SEED),
    };
    let base = config.params;
    config.params = validate_params(
        common.lambda0.unwrap_or(base.lambda0()),
        common.a.unwrap_or(base.a()),
        common.b.unwrap_or(base.b()),
        common.c.unwrap_or(base.c()),
        common.d.unwrap_or(base.d()),
    )?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let out_dir = common.out_dir.clone().or_else(|| config.out_dir.clone());
    Ok(Resolved { config, out_dir })
}

/// Writes through `body` to `dir/name`, or to stdout without a directory.
fn emit<F>(dir: Option<&Path>, name: &str, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> bhawkes_core::Result<()>,
{
    match dir {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(name);
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            body(&mut w).with_context(|| format!("writing {}", path.display()))?;
            w.flush().with_context(|| format!("writing {}", path.display()))?;
            println!("{}", path.display());
        }
        None => {
            let stdout = stdio::stdout();
            let mut w = BufWriter::new(stdout.lock());
            body(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn with_params(meta: Metadata, prefix: &str, p: &ModelParams) -> Metadata {
    meta.with(&format!("{prefix}lambda0"), p.lambda0())
        .with(&format!("{prefix}a"), p.a())
        .with(&format!("{prefix}b"), p.b())
        .with(&format!("{prefix}c"), p.c())
        .with(&format!("{prefix}d"), p.d())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let r = resolve(&args.common)?;
    let p = *r.params();
    let cfg = r.config.simulate;
    let horizon = args.horizon.or(cfg.map(|s| s.horizon)).unwrap_or(50.0);
    let burn_in = args.burn_in.or(cfg.and_then(|s| s.burn_in));
    let log = match burn_in {
        Some(b) => exact::simulate_stationary_path(&p, horizon, b, r.seed())?,
        None => exact::simulate_path(&p, horizon, r.seed(), None)?,
    };
    let mut meta = io::event_log_metadata(&log);
    if let Some(b) = burn_in {
        meta = meta.with("burn_in", b);
    }
    match args.n_points {
        None => emit(r.out_dir.as_deref(), "events.csv", |w| io::write_event_log(w, &log, Some(meta))),
        Some(n_points) => {
            let grid = GridSpec { t_max: horizon, n_points };
            grid.validate()?;
            let path = path_to_grid(&log, &grid.points())?;
            let meta = Metadata { artifact: "grid-path".into(), ..meta }.with("n_points", n_points);
            emit(r.out_dir.as_deref(), "path.csv", |w| io::write_grid_path(w, &meta, &path))
        }
    }
}

fn cluster_cmd(args: ClusterArgs) -> Result<()> {
    let r = resolve(&args.common)?;
    let p = *r.params();
    let cfg = r.config.cluster;
    let horizon = args.horizon.or(cfg.map(|c| c.horizon)).unwrap_or(50.0);
    if args.cascade {
        let z = cluster::simulate_z(&p, horizon, r.seed())?;
        let meta = Metadata::new("cascade", &p, Some(r.seed())).with("horizon", horizon);
        return emit(r.out_dir.as_deref(), "cascade.csv", |w| io::write_z_path(w, &meta, &z));
    }
    let lookback = match args.lookback.as_deref() {
        None => cfg.map(|c| c.lookback).unwrap_or(0.0),
        Some("default") => default_lookback(&p),
        Some(s) => s
            .parse::<f64>()
            .map_err(|_| usage(format!("--lookback expects a number or `default`, got `{s}`")))?,
    };
    let sample = cluster::simulate_market_orders(&p, horizon, r.seed(), lookback)?;
    emit(r.out_dir.as_deref(), "orders.csv", |w| io::write_order_times(w, &sample))
}

fn moments_cmd(args: MomentsArgs) -> Result<()> {
    let r = resolve(&args.common)?;
    let cfg = r.config.grid;
    let grid = GridSpec {
        t_max: args.t_max.or(cfg.map(|g| g.t_max)).unwrap_or(50.0),
        n_points: args.n_points.or(cfg.map(|g| g.n_points)).unwrap_or(501),
    };
    grid.validate()?;
    let curves = moments::second_moments(r.params(), &grid.points())?;
    emit(r.out_dir.as_deref(), "moments.csv", |w| io::write_moment_curves(w, &curves))
}

fn scaling(args: ScalingArgs) -> Result<()> {
    let r = resolve(&args.common)?;
    let cfg = r.config.scaling.clone();
    let scales = args.scales.or(cfg.as_ref().map(|s| s.scales.clone())).unwrap_or(vec![10, 50, 200]);
    let n_paths = args.n_paths.or(cfg.as_ref().map(|s| s.n_paths)).unwrap_or(10_000);
    let t_grid = args
        .t_grid
        .or(cfg.as_ref().map(|s| s.t_grid.clone()))
        .unwrap_or(vec![0.25, 0.5, 1.0]);
    let start = match args.burn_in.or(cfg.as_ref().and_then(|s| s.burn_in)) {
        Some(burn_in) => StartMode::Stationary { burn_in },
        None => StartMode::EmptyBook,
    };
    let report = run_scaling(r.params(), &scales, n_paths, &t_grid, r.seed(), start)?;
    match r.out_dir.as_deref() {
        Some(dir) => {
            emit(Some(dir), "scaling.json", |w| io::write_json(w, "scaling", &report))?;
            emit(Some(dir), "scaling.csv", |w| io::write_scaling_csv(w, &report))
        }
        None => emit(None, "", |w| io::write_json(w, "scaling", &report)),
    }
}

fn price(args: PriceArgs) -> Result<()> {
    let r = resolve(&args.common)?;
    let p = *r.params();
    let cfg = r.config.price;
    let base = cfg.map(|c| c.model);
    let kind = args.model.unwrap_or(match base {
        Some(PriceModel::InverseDepth { .. }) => ModelKind::InverseDepth,
        Some(PriceModel::Geometric { .. }) => ModelKind::Geometric,
        _ => ModelKind::Midprice,
    });
    let model = match kind {
        ModelKind::Midprice | ModelKind::InverseDepth => {
            let base_alpha = match base {
                Some(PriceModel::Midprice { alpha }) | Some(PriceModel::InverseDepth { alpha }) => alpha,
                _ => 1.0,
            };
            let alpha = args.alpha.unwrap_or(base_alpha);
            if kind == ModelKind::Midprice {
                PriceModel::Midprice { alpha }
            } else {
                PriceModel::InverseDepth { alpha }
            }
        }
        ModelKind::Geometric => {
            let (s0, sigma, drift) = match base {
                Some(PriceModel::Geometric { s0, sigma, drift }) => (s0, sigma, drift),
                _ => (100.0, 0.01, 0.0),
            };
            PriceModel::Geometric {
                s0: args.s0.unwrap_or(s0),
                sigma: args.sigma.unwrap_or(sigma),
                drift: args.drift.unwrap_or(drift),
            }
        }
    };
    let horizon = args.horizon.or(cfg.map(|c| c.horizon)).unwrap_or(200.0);
    let n_points = args.n_points.or(cfg.map(|c| c.n_points)).unwrap_or(201);
    let grid = GridSpec { t_max: horizon, n_points };
    grid.validate()?;
    let minus = cfg.and_then(|c| c.minus).unwrap_or(p);
    let seeding = match args.seeding {
        Seeding::Independent => SideSeeding::Independent,
        Seeding::Mirrored => SideSeeding::Mirrored,
    };
    let path = simulate_price(&p, &minus, &model, horizon, &grid.points(), r.seed(), seeding)?;
    let mut meta = Metadata::new("price", &p, Some(r.seed()))
        .with("model", model.kind().as_str())
        .with("horizon", horizon)
        .with("n_points", n_points)
        .with("seeding", format!("{:?}", args.seeding).to_ascii_lowercase());
    meta = match model {
        PriceModel::Midprice { alpha } | PriceModel::InverseDepth { alpha } => meta.with("alpha", alpha),
        PriceModel::Geometric { s0, sigma, drift } => meta.with("s0", s0).with("sigma", sigma).with("drift", drift),
    };
    if minus != p {
        meta = with_params(meta, "minus_", &minus);
    }
    emit(r.out_dir.as_deref(), "price.csv", |w| io::write_price_path(w, &meta, &path))
}

#[derive(Serialize)]
struct EstimateOutput {
    /// Event logs the estimates were computed from.
    inputs: Vec<String>,
    /// Set when a path was simulated rather than read.
    #[serde(skip_serializing_if = "Option::is_none")]
    simulated: Option<SimulatedSource>,
    estimates: Estimates,
}

#[derive(Serialize)]
struct SimulatedSource {
    params: ModelParams,
    seed: u64,
    horizon: f64,
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let r = resolve(&args.common)?;
    let cfg = r.config.estimate;
    let (logs, simulated): (Vec<EventLog>, _) = if args.inputs.is_empty() {
        let horizon = args.horizon.or(cfg.map(|c| c.horizon)).unwrap_or(50_000.0);
        let log = exact::simulate_path(r.params(), horizon, r.seed(), None)?;
        let src = SimulatedSource {
            params: *r.params(),
            seed: r.seed(),
            horizon,
        };
        (vec![log], Some(src))
    } else {
        let logs = args
            .inputs
            .iter()
            .map(|path| {
                let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                io::read_event_log(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
            })
            .collect::<Result<Vec<_>>>()?;
        (logs, None)
    };
    let bin_width = match args.bin_width.or(cfg.and_then(|c| c.bin_width)) {
        Some(w) => w,
        None => default_bin_width(&logs[0].params),
    };
    let out = EstimateOutput {
        inputs: args.inputs.iter().map(|p| p.display().to_string()).collect(),
        simulated,
        estimates: estimate_params(&logs, bin_width)?,
    };
    let text = {
        let mut buf = Vec::new();
        io::write_json(&mut buf, "estimate", &out)?;
        String::from_utf8(buf).expect("serde_json writes UTF-8")
    };
    print!("{text}");
    if let Some(dir) = r.out_dir.as_deref() {
        emit(Some(dir), "estimate.json", |w| Ok(w.write_all(text.as_bytes())?))?;
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<()> {
    let r = resolve(&args.common)?;
    let defaults = VerifyOptions::default();
    let opts = VerifyOptions {
        seed: args.common.seed.unwrap_or(defaults.seed),
        paths: args.paths.unwrap_or(defaults.paths),
    };
    if opts.paths < 100 {
        return Err(usage(format!("--paths must be >= 100, got {}", opts.paths)));
    }
    let report = run_verify(r.params(), &opts)?;
    println!("{report}");
    if let Some(dir) = r.out_dir.as_deref() {
        emit(Some(dir), "verify.json", |w| io::write_json(w, "verify", &report))?;
    }
    let failed = report.failures().count();
    if failed > 0 {
        return Err(ChecksFailed(failed).into());
    }
    Ok(())
}
