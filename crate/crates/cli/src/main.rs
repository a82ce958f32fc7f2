//! `symreg`: evolve symbolic models of dynamical systems.
//!
//! Settings are resolved per key in this order: command-line flag, then
//! environment variable (where one exists), then the `--config` file, then
//! the built-in default.

mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use symreg_core::app::{self, AppError, Mode, RunControl, RunManifest, RunReport};
use symreg_core::lorenz::Channel;
use symreg_core::ConstOptSettings;

use config::ConfigFile;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "symreg", version, about = "Multi-objective genetic programming for symbolic regression")]
struct Cli {
    /// Log filter such as `info` or `symreg_core=debug` (default: RUST_LOG, else `info`).
    #[arg(long, global = true, value_name = "FILTER")]
    log: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve controllers for the Lorenz system, evaluated in-process.
    RunLocal(LocalArgs),
    /// Evolve against a remote experiment server.
    RunRemote(RemoteArgs),
    /// Serve the Lorenz experiment over TCP.
    LorenzServer(ServerArgs),
}

#[derive(Args)]
struct GpArgs {
    /// Seed of the run's random stream.
    #[arg(long)]
    seed: Option<u64>,
    /// Population size.
    #[arg(long, value_name = "N")]
    population: Option<usize>,
    /// Number of generations after the initial one.
    #[arg(long, value_name = "N")]
    generations: Option<usize>,
    /// Probability that an offspring comes from crossover.
    #[arg(long, value_name = "P")]
    p_crossover: Option<f64>,
    /// Probability that an offspring comes from mutation.
    #[arg(long, value_name = "P")]
    p_mutation: Option<f64>,
    #[arg(long, value_name = "N")]
    tournament_size: Option<usize>,
    /// Height range of initial trees.
    #[arg(long, value_name = "H")]
    init_min_height: Option<usize>,
    #[arg(long, value_name = "H")]
    init_max_height: Option<usize>,
    /// Height limit applied after crossover and mutation.
    #[arg(long, value_name = "H")]
    max_height: Option<usize>,
}

impl GpArgs {
    fn settings(&self) -> Vec<(String, String)> {
        let entries: [(&str, Option<String>); 9] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("population_size", self.population.map(|v| v.to_string())),
            ("max_generations", self.generations.map(|v| v.to_string())),
            ("p_crossover", self.p_crossover.map(|v| v.to_string())),
            ("p_mutation", self.p_mutation.map(|v| v.to_string())),
            ("tournament_size", self.tournament_size.map(|v| v.to_string())),
            ("init_min_height", self.init_min_height.map(|v| v.to_string())),
            ("init_max_height", self.init_max_height.map(|v| v.to_string())),
            ("variation_max_height", self.max_height.map(|v| v.to_string())),
        ];
        entries
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
            .collect()
    }
}

/// Options shared by both evolving modes.
#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    gp: GpArgs,
    /// `key=value` settings file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory for stats.csv, archive.csv and trajectories.
    #[arg(long, short, value_name = "DIR")]
    output: Option<PathBuf>,
    /// Persistent fitness cache (TSV).
    #[arg(long, env = "SYMREG_CACHE", value_name = "FILE")]
    cache: Option<PathBuf>,
    /// Checkpoint file, written at generation boundaries.
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Checkpoint every N generations (0: only on SIGUSR1 or shutdown).
    #[arg(long, value_name = "N")]
    checkpoint_every: Option<usize>,
    /// Continue from the checkpoint file.
    #[arg(long)]
    resume: bool,
    /// Optimize numeric constants with Levenberg-Marquardt.
    #[arg(long, value_name = "BOOL")]
    constopt: Option<bool>,
    /// Iteration budget per constant optimization.
    #[arg(long, value_name = "N")]
    constopt_iterations: Option<usize>,
}

#[derive(Args)]
struct LocalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Controlled state variable: y, z or none.
    #[arg(long)]
    channel: Option<Channel>,
    /// Samples per trajectory.
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
    /// Assessment threads (0: one per core).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Write a trajectory CSV for each archive member.
    #[arg(long)]
    trajectories: bool,
}

#[derive(Args)]
struct RemoteArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Server address as host:port.
    #[arg(long, env = "SYMREG_ENDPOINT")]
    endpoint: Option<String>,
    /// Seconds to wait for the CONFIG reply (0: forever).
    #[arg(long, value_name = "SECS")]
    config_timeout: Option<f64>,
    /// Seconds to wait for each EXPERIMENT reply (0: forever).
    #[arg(long, env = "SYMREG_EXPERIMENT_TIMEOUT", value_name = "SECS")]
    experiment_timeout: Option<f64>,
}

#[derive(Args)]
struct ServerArgs {
    /// Address to listen on as host:port (port 0 picks a free port).
    #[arg(long, env = "SYMREG_ENDPOINT")]
    endpoint: Option<String>,
    /// Controlled state variable: y, z or none.
    #[arg(long)]
    channel: Option<Channel>,
    /// Samples per trajectory.
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
    /// Evaluate the expressions of a batch concurrently.
    #[arg(long)]
    parallel: bool,
    /// `key=value` settings file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

fn load_file(path: &Option<PathBuf>) -> Result<ConfigFile, AppError> {
    match path {
        Some(p) => ConfigFile::load(p).map_err(AppError::Usage),
        None => Ok(ConfigFile::default()),
    }
}

/// The flag value if given, else the file's.
fn pick<T: std::str::FromStr>(flag: Option<T>, file: &ConfigFile, key: &str) -> Result<Option<T>, AppError> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.value(key).map_err(AppError::Usage),
    }
}

fn switch(flag: bool, file: &ConfigFile, key: &str) -> Result<bool, AppError> {
    Ok(flag || pick::<bool>(None, file, key)?.unwrap_or(false))
}

fn timeout(secs: Option<f64>, default: Option<Duration>) -> Result<Option<Duration>, AppError> {
    match secs {
        None => Ok(default),
        Some(0.0) => Ok(None),
        Some(s) => Duration::try_from_secs_f64(s)
            .map(Some)
            .map_err(|_| AppError::Usage(format!("invalid timeout {s}"))),
    }
}

fn run_manifest(mode: Mode, args: &RunArgs, file: &ConfigFile) -> Result<RunManifest, AppError> {
    let mut m = RunManifest::new(mode);
    m.gp_settings = file.gp_settings();
    m.gp_settings.extend(args.gp.settings());
    m.output_dir = pick(args.output.clone(), file, "output")?;
    m.cache_path = pick(args.cache.clone(), file, "cache")?;
    m.checkpoint_path = pick(args.checkpoint.clone(), file, "checkpoint")?;
    m.checkpoint_every = pick(args.checkpoint_every, file, "checkpoint_every")?.unwrap_or(0);
    m.resume = args.resume;
    let enabled = pick(args.constopt, file, "constopt")?.unwrap_or(m.constopt.is_some());
    m.constopt = enabled.then(ConstOptSettings::default);
    if let (Some(c), Some(n)) = (
        m.constopt.as_mut(),
        pick(args.constopt_iterations, file, "constopt_iterations")?,
    ) {
        c.max_iterations = n;
    }
    Ok(m)
}

fn apply_setup(m: &mut RunManifest, channel: Option<Channel>, samples: Option<usize>, file: &ConfigFile) -> Result<(), AppError> {
    if let Some(c) = pick(channel, file, "channel")? {
        m.setup.channel = c;
    }
    if let Some(n) = pick(samples, file, "samples")? {
        m.setup.n = n;
    }
    Ok(())
}

fn manifest(command: &Command) -> Result<RunManifest, AppError> {
    match command {
        Command::RunLocal(a) => {
            let file = load_file(&a.run.config)?;
            let mut m = run_manifest(Mode::Local, &a.run, &file)?;
            apply_setup(&mut m, a.channel, a.samples, &file)?;
            m.threads = pick(a.threads, &file, "threads")?.unwrap_or(1);
            m.trajectories = switch(a.trajectories, &file, "trajectories")?;
            Ok(m)
        }
        Command::RunRemote(a) => {
            let file = load_file(&a.run.config)?;
            let mut m = run_manifest(Mode::RemoteClient, &a.run, &file)?;
            m.endpoint = pick(a.endpoint.clone(), &file, "endpoint")?;
            let defaults = m.timeouts;
            m.timeouts.config = timeout(pick(a.config_timeout, &file, "config_timeout")?, defaults.config)?;
            m.timeouts.experiment = timeout(
                pick(a.experiment_timeout, &file, "experiment_timeout")?,
                defaults.experiment,
            )?;
            Ok(m)
        }
        Command::LorenzServer(a) => {
            let file = load_file(&a.config)?;
            let mut m = RunManifest::new(Mode::Server);
            m.endpoint = pick(a.endpoint.clone(), &file, "endpoint")?;
            apply_setup(&mut m, a.channel, a.samples, &file)?;
            m.server_parallel = switch(a.parallel, &file, "parallel")?;
            Ok(m)
        }
    }
}

/// SIGUSR1 requests a checkpoint; SIGINT and SIGTERM stop at the next
/// generation boundary. A second SIGINT or SIGTERM exits immediately.
#[cfg(unix)]
fn install_signals(control: &RunControl) -> std::io::Result<()> {
    use signal_hook::consts::{SIGINT, SIGTERM, SIGUSR1};
    use signal_hook::flag;

    flag::register(SIGUSR1, Arc::clone(&control.checkpoint_requested))?;
    for sig in [SIGINT, SIGTERM] {
        flag::register_conditional_shutdown(sig, 130, Arc::clone(&control.stop_requested))?;
        flag::register(sig, Arc::clone(&control.stop_requested))?;
    }
    Ok(())
}

#[cfg(not(unix))]
fn install_signals(control: &RunControl) -> std::io::Result<()> {
    use signal_hook::consts::{SIGINT, SIGTERM};
    for sig in [SIGINT, SIGTERM] {
        signal_hook::flag::register(sig, Arc::clone(&control.stop_requested))?;
    }
    Ok(())
}

fn summarize(report: &RunReport) {
    if report.history.is_empty() {
        return;
    }
    let state = if report.stopped_early { "stopped" } else { "finished" };
    log::info!(
        "{state} after generation {} with {} archive members",
        report.generation,
        report.archive.len()
    );
    if let Some(r) = report.requests {
        log::info!(
            "requests sent: {} CONFIG, {} EXPERIMENT, {} SHUTDOWN",
            r.config,
            r.experiment,
            r.shutdown
        );
    }
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(app::archive_csv(&report.archive, &report.objective_names).as_bytes());
}

fn execute(cli: &Cli) -> Result<(), AppError> {
    let manifest = manifest(&cli.command)?;
    let mut control = RunControl::default();
    if manifest.mode == Mode::Server {
        control.on_listening = Some(Box::new(|addr| {
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "listening on {addr}");
            let _ = out.flush();
        }));
    } else if let Err(e) = install_signals(&control) {
        log::warn!("signal handlers unavailable: {e}");
    }
    let report = app::run(&manifest, &control)?;
    summarize(&report);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut logger = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    if let Some(filter) = &cli.log {
        logger.parse_filters(filter);
    }
    logger.init();

    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                AppError::Usage(_) => EXIT_USAGE,
                _ => EXIT_FAILURE,
            })
        }
    }
}
