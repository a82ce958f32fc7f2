//! Run assembly shared by the command-line front end and the tests: local
//! runs, remote client runs, the Lorenz experiment server, artifacts and
//! checkpoint/resume.

mod checkpoint;
mod output;

use std::fs;
use std::io;
use std::net::{SocketAddr, TcpListener};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, run_digest, save_checkpoint, CheckpointError,
    CHECKPOINT_VERSION,
};
pub use output::{archive_csv, stats_csv, write_atomic};

use crate::assessment::{Assessment, CacheError, FitnessCache, LocalAssessment, ParallelMap, SerialMap, ThreadPoolMap};
use crate::constopt::ConstOptSettings;
use crate::evolution::{Evolution, EvolutionError, GPConfig, GenerationStats, Individual};
use crate::expr::PrimitiveSet;
use crate::lorenz::{lorenz_pset, lorenz_server, trajectory, LorenzObjectives, SimSetup, OBJECTIVE_NAMES};
use crate::protocol::{
    apply_server_options, pset_from_config, ClientTimeouts, Connection, ProtocolError, RemoteAssessment,
    RemoteConstOpt, RequestCounts,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Local,
    RemoteClient,
    Server,
}

/// Everything a run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub mode: Mode,
    /// Explicit GP settings as `key=value` pairs (see [`GPConfig::set`]).
    /// Unset keys take the defaults, or the server's suggestion in remote
    /// mode.
    pub gp_settings: Vec<(String, String)>,
    pub endpoint: Option<String>,
    /// Simulation setup for local runs and the server.
    pub setup: SimSetup,
    pub cache_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    /// Checkpoint every this many generations; 0 only on request.
    pub checkpoint_every: usize,
    /// Continue from `checkpoint_path` instead of starting fresh.
    pub resume: bool,
    pub output_dir: Option<PathBuf>,
    /// `None` disables constant optimization.
    pub constopt: Option<ConstOptSettings>,
    /// Assessment threads for local runs; 0 picks the core count.
    pub threads: usize,
    pub timeouts: ClientTimeouts,
    /// Write a trajectory CSV per archive member (local runs).
    pub trajectories: bool,
    /// Let the server evaluate batch entries concurrently.
    pub server_parallel: bool,
}

impl RunManifest {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            gp_settings: Vec::new(),
            endpoint: None,
            setup: SimSetup::default(),
            cache_path: None,
            checkpoint_path: None,
            checkpoint_every: 0,
            resume: false,
            output_dir: None,
            constopt: match mode {
                Mode::Local => Some(ConstOptSettings::default()),
                _ => None,
            },
            threads: 1,
            timeouts: ClientTimeouts::default(),
            trajectories: false,
            server_parallel: false,
        }
    }

    /// Defaults overlaid with `gp_settings`.
    pub fn gp_config(&self) -> Result<GPConfig, AppError> {
        let mut config = GPConfig::default();
        self.apply_settings(&mut config)?;
        Ok(config)
    }

    fn apply_settings(&self, config: &mut GPConfig) -> Result<(), AppError> {
        for (k, v) in &self.gp_settings {
            config.set(k, v).map_err(|e| AppError::Usage(e.to_string()))?;
        }
        Ok(())
    }

    /// Checks everything that can be checked without side effects.
    pub fn validate(&self) -> Result<(), AppError> {
        let usage = |m: &str| Err(AppError::Usage(m.to_string()));
        let mut probe = GPConfig::default();
        self.apply_settings(&mut probe)?;
        if self.mode == Mode::Local {
            probe.validate().map_err(|e| AppError::Usage(e.to_string()))?;
        }
        if self.mode != Mode::Local && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return usage("an endpoint (host:port) is required in this mode");
        }
        self.setup.validate().map_err(AppError::Usage)?;
        if self.resume && self.checkpoint_path.is_none() {
            return usage("resuming needs a checkpoint path");
        }
        if self.checkpoint_every > 0 && self.checkpoint_path.is_none() {
            return usage("a checkpoint period needs a checkpoint path");
        }
        if let Some(c) = &self.constopt {
            if c.max_iterations == 0 || c.tolerance.is_nan() || c.tolerance <= 0.0 || !c.initial_value.is_finite() {
                return usage("constant optimization settings are invalid");
            }
        }
        Ok(())
    }
}

/// External influence on a running evolution, checked at generation
/// boundaries.
#[derive(Default)]
pub struct RunControl {
    /// Write a checkpoint at the next boundary, then clear the flag.
    pub checkpoint_requested: Arc<AtomicBool>,
    /// Checkpoint (if a path is set) and stop at the next boundary.
    pub stop_requested: Arc<AtomicBool>,
    /// Stop after this generation as if `stop_requested` were set.
    pub stop_after_generation: Option<usize>,
    /// Told the bound address once the server listens.
    pub on_listening: Option<Box<dyn Fn(SocketAddr) + Send + Sync>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    /// Last completed generation.
    pub generation: usize,
    /// Stopped by request before `max_generations`.
    pub stopped_early: bool,
    /// Archive members, sorted.
    pub archive: Vec<Individual>,
    pub history: Vec<GenerationStats>,
    pub objective_names: Vec<String>,
    /// Requests sent, for remote runs.
    pub requests: Option<RequestCounts>,
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("run failed: {0}")]
    Evolution(#[from] EvolutionError),
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> AppError + '_ {
    move |source| AppError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Executes the manifest's mode.
pub fn run(manifest: &RunManifest, control: &RunControl) -> Result<RunReport, AppError> {
    manifest.validate()?;
    match manifest.mode {
        Mode::Local => run_local(manifest, control),
        Mode::RemoteClient => run_remote(manifest, control),
        Mode::Server => {
            let endpoint = manifest.endpoint.as_deref().unwrap_or_default();
            let listener = TcpListener::bind(endpoint).map_err(|e| AppError::Io {
                path: PathBuf::from(endpoint),
                source: e,
            })?;
            let addr = listener.local_addr().map_err(ProtocolError::from)?;
            log::info!("serving the Lorenz experiment ({} channel) on {addr}", manifest.setup.channel);
            if let Some(f) = &control.on_listening {
                f(addr);
            }
            lorenz_server(&listener, manifest.setup, manifest.server_parallel)?;
            Ok(RunReport {
                generation: 0,
                stopped_early: false,
                archive: Vec::new(),
                history: Vec::new(),
                objective_names: Vec::new(),
                requests: None,
            })
        }
    }
}

fn open_cache(manifest: &RunManifest) -> Result<FitnessCache, AppError> {
    Ok(match &manifest.cache_path {
        Some(p) => FitnessCache::load(p)?,
        None => FitnessCache::in_memory(),
    })
}

fn prepare_output(manifest: &RunManifest) -> Result<(), AppError> {
    if let Some(dir) = &manifest.output_dir {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
    }
    Ok(())
}

fn constopt_tag(c: &Option<ConstOptSettings>) -> String {
    match c {
        Some(c) => format!("{}/{:e}/{:e}", c.max_iterations, c.tolerance, c.initial_value),
        None => "off".into(),
    }
}

fn run_local(manifest: &RunManifest, control: &RunControl) -> Result<RunReport, AppError> {
    let config = manifest.gp_config()?;
    let pset = lorenz_pset();
    prepare_output(manifest)?;
    let pmap: Box<dyn ParallelMap> = if manifest.threads == 1 {
        Box::new(SerialMap)
    } else {
        Box::new(ThreadPoolMap::new(manifest.threads).map_err(|e| AppError::Usage(e.to_string()))?)
    };
    let mut assessment = LocalAssessment::new(Arc::new(LorenzObjectives { setup: manifest.setup }))
        .with_cache(open_cache(manifest)?)
        .with_pmap(pmap)
        .with_constopt(manifest.constopt);
    let s = &manifest.setup;
    let extra = vec![
        ("mode".to_string(), "local".to_string()),
        (
            "setup".to_string(),
            format!(
                "{:?}/{:?}/{:?}/{:?}/{}/{}/{}",
                [s.params.s, s.params.r, s.params.b],
                s.initial_state,
                s.t0,
                s.tn,
                s.n,
                s.channel,
                s.substeps
            ),
        ),
        ("constopt".to_string(), constopt_tag(&manifest.constopt)),
    ];
    let digest = run_digest(&config, &pset, &extra);
    let names: Vec<String> = OBJECTIVE_NAMES.iter().map(|s| s.to_string()).collect();
    let report = drive(manifest, control, config, pset, &mut assessment, &digest, |_| names.clone())?;

    if manifest.trajectories {
        if let Some(dir) = &manifest.output_dir {
            let dir = dir.join("trajectories");
            fs::create_dir_all(&dir).map_err(io_at(&dir))?;
            for (i, ind) in report.archive.iter().enumerate() {
                let path = dir.join(format!("archive_{i:03}.csv"));
                let t = trajectory(&ind.expr, &ind.constants, &manifest.setup).map_err(EvolutionError::from)?;
                output::write_csv_file(&path, |f| t.write_csv(f)).map_err(io_at(&path))?;
            }
        }
    }
    Ok(report)
}

fn run_remote(manifest: &RunManifest, control: &RunControl) -> Result<RunReport, AppError> {
    let endpoint = manifest.endpoint.as_deref().unwrap_or_default();
    let mut conn = Connection::connect(endpoint, manifest.timeouts)?;
    let prepared = (|| {
        let reply = conn.config()?;
        let pset = pset_from_config(&reply)?;
        let mut config = GPConfig::default();
        apply_server_options(&mut config, &reply.options)?;
        manifest.apply_settings(&mut config)?;
        config.validate().map_err(|e| AppError::Usage(e.to_string()))?;
        prepare_output(manifest)?;
        let cache = open_cache(manifest)?;
        Ok::<_, AppError>((pset, config, cache))
    })();
    let (pset, config, cache) = match prepared {
        Ok(p) => p,
        Err(e) => {
            let _ = conn.shutdown();
            return Err(e);
        }
    };

    let extra = vec![
        ("mode".to_string(), "remote".to_string()),
        ("constopt".to_string(), constopt_tag(&manifest.constopt)),
    ];
    let digest = run_digest(&config, &pset, &extra);
    let mut assessment = RemoteAssessment::new(conn, cache).with_constopt(manifest.constopt.map(|settings| {
        RemoteConstOpt {
            settings,
            residual_objectives: None,
        }
    }));
    let names = |m: usize| (1..=m).map(|i| format!("f{i}")).collect();
    let result = drive(manifest, control, config, pset, &mut assessment, &digest, names);

    let (mut conn, _) = assessment.into_parts();
    if let Err(e) = conn.shutdown() {
        log::warn!("SHUTDOWN request failed: {e}");
    }
    let mut report = result?;
    report.requests = Some(conn.counts());
    Ok(report)
}

fn write_progress(dir: Option<&Path>, evo: &Evolution, names: &[String]) -> Result<(), AppError> {
    let Some(dir) = dir else { return Ok(()) };
    let stats = dir.join("stats.csv");
    write_atomic(&stats, &stats_csv(evo.history(), names)).map_err(io_at(&stats))?;
    let archive = dir.join("archive.csv");
    write_atomic(&archive, &archive_csv(&evo.archive().sorted(), names)).map_err(io_at(&archive))
}

/// Runs or resumes the evolution, writing artifacts at every generation
/// boundary and checkpoints as configured or requested.
fn drive(
    manifest: &RunManifest,
    control: &RunControl,
    config: GPConfig,
    pset: PrimitiveSet,
    assessment: &mut dyn Assessment,
    digest: &str,
    objective_names: impl Fn(usize) -> Vec<String>,
) -> Result<RunReport, AppError> {
    let checkpoint_path = manifest.checkpoint_path.as_deref();
    let out_dir = manifest.output_dir.as_deref();
    let mut evo = match (manifest.resume, checkpoint_path) {
        (true, Some(path)) => {
            let state = load_checkpoint(path, &pset, digest)?;
            log::info!("resuming from {} at generation {}", path.display(), state.generation);
            Evolution::restore(config, pset, state)?
        }
        _ => Evolution::initialize(config, pset, assessment)?,
    };
    let m = evo.population().first().map_or(0, |i| i.fitness_values().len());
    let names = objective_names(m);
    if evo.generation() > 0 {
        write_progress(out_dir, &evo, &names)?;
    }

    let mut failure = None;
    let mut stopped_early = false;
    let result = evo.run(assessment, |stats, evo| {
        let g = stats.generation;
        log::info!(
            "generation {g}: {} assessed, archive {}, min {:?}",
            stats.evaluations,
            stats.archive_size,
            stats.min
        );
        if let Err(e) = write_progress(out_dir, evo, &names) {
            failure = Some(e);
            return ControlFlow::Break(());
        }
        let stop = control.stop_requested.load(Ordering::SeqCst) || control.stop_after_generation == Some(g);
        let requested = control.checkpoint_requested.swap(false, Ordering::SeqCst);
        let periodic = manifest.checkpoint_every > 0 && g > 0 && g % manifest.checkpoint_every == 0;
        if let Some(path) = checkpoint_path {
            if stop || requested || periodic {
                if let Err(e) = save_checkpoint(path, &evo.snapshot(), digest) {
                    failure = Some(e.into());
                    return ControlFlow::Break(());
                }
                log::info!("checkpoint written to {} at generation {g}", path.display());
            }
        }
        if stop && !evo.is_finished() {
            stopped_early = true;
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    });
    if let Some(e) = failure {
        return Err(e);
    }
    result?;
    Ok(RunReport {
        generation: evo.generation(),
        stopped_early,
        archive: evo.archive().sorted(),
        history: evo.history().to_vec(),
        objective_names: names,
        requests: None,
    })
}
