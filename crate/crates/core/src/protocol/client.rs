use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::ops::ControlFlow;
use std::time::Duration;

use serde_json::Value;

use super::message::{decode_message, encode_message, parse_experiment_reply, Action, ConfigReply, Message};
use super::ProtocolError;
use crate::assessment::{Assessment, AssessmentError, FitnessCache};
use crate::constopt::{optimize_constants, ConstOptProblem, ConstOptSettings};
use crate::evolution::{
    evolve, Evolution, EvolutionOutcome, EvolveAborted, FitnessVector, GPConfig, GenerationStats,
    Individual,
};
use crate::expr::{print_prefix, Constants, PrimitiveSet};

/// Reply deadlines per action. `None` waits indefinitely.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientTimeouts {
    pub config: Option<Duration>,
    pub experiment: Option<Duration>,
    pub shutdown: Option<Duration>,
}

impl Default for ClientTimeouts {
    fn default() -> Self {
        Self {
            config: Some(Duration::from_secs(10)),
            experiment: None,
            shutdown: Some(Duration::from_secs(10)),
        }
    }
}

/// Requests sent over a connection, by action.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RequestCounts {
    pub config: usize,
    pub experiment: usize,
    pub shutdown: usize,
}

/// Client end of a protocol connection.
pub struct Connection {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    timeouts: ClientTimeouts,
    counts: RequestCounts,
}

impl Connection {
    /// Connects to `endpoint` (`host:port`). The CONFIG timeout also bounds
    /// the connection attempt.
    pub fn connect(endpoint: &str, timeouts: ClientTimeouts) -> Result<Self, ProtocolError> {
        let mut last = None;
        for addr in endpoint.to_socket_addrs()? {
            let attempt = match timeouts.config {
                Some(t) => TcpStream::connect_timeout(&addr, t),
                None => TcpStream::connect(addr),
            };
            match attempt {
                Ok(stream) => return Self::from_stream(stream, timeouts),
                Err(e) => last = Some(e),
            }
        }
        Err(last
            .unwrap_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("{endpoint} resolves to nothing")))
            .into())
    }

    pub fn from_stream(stream: TcpStream, timeouts: ClientTimeouts) -> Result<Self, ProtocolError> {
        stream.set_nodelay(true)?;
        let writer = stream.try_clone()?;
        Ok(Self {
            reader: BufReader::new(stream),
            writer,
            timeouts,
            counts: RequestCounts::default(),
        })
    }

    pub fn counts(&self) -> RequestCounts {
        self.counts
    }

    /// Sends `request` and waits for the matching reply.
    pub fn request(&mut self, request: &Message) -> Result<Message, ProtocolError> {
        let timeout = match request.action {
            Action::Config => {
                self.counts.config += 1;
                self.timeouts.config
            }
            Action::Experiment => {
                self.counts.experiment += 1;
                self.timeouts.experiment
            }
            Action::Shutdown => {
                self.counts.shutdown += 1;
                self.timeouts.shutdown
            }
            Action::Error => return Err(ProtocolError::Malformed("ERROR is not a request".into())),
        };
        self.writer.write_all(&encode_message(request))?;
        self.writer.flush()?;
        self.reader.get_ref().set_read_timeout(timeout)?;

        let mut frame = Vec::new();
        match self.reader.read_until(b'\n', &mut frame) {
            Ok(0) => return Err(ProtocolError::ConnectionClosed),
            Ok(_) => {}
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                return Err(ProtocolError::Timeout(request.action))
            }
            Err(e) => return Err(e.into()),
        }
        let reply = decode_message(&frame)?;
        match reply.action {
            a if a == request.action => Ok(reply),
            Action::Error => Err(ProtocolError::Remote(match reply.payload {
                Value::String(s) => s,
                other => other.to_string(),
            })),
            other => Err(ProtocolError::BadReply(format!(
                "{} request answered with {other}",
                request.action
            ))),
        }
    }

    pub fn config(&mut self) -> Result<ConfigReply, ProtocolError> {
        let reply = self.request(&Message::config())?;
        ConfigReply::from_value(&reply.payload)
    }

    /// Evaluates a batch; the reply is checked to hold one tuple per
    /// expression.
    pub fn experiment<S: AsRef<str>>(&mut self, expressions: &[S]) -> Result<Vec<Vec<f64>>, ProtocolError> {
        let reply = self.request(&Message::experiment(expressions))?;
        let tuples = parse_experiment_reply(&reply.payload)?;
        if tuples.len() != expressions.len() {
            return Err(ProtocolError::LengthMismatch {
                expected: expressions.len(),
                found: tuples.len(),
            });
        }
        Ok(tuples)
    }

    pub fn shutdown(&mut self) -> Result<(), ProtocolError> {
        self.request(&Message::shutdown()).map(|_| ())
    }
}

/// Builds the primitive set announced in a CONFIG reply.
pub fn pset_from_config(reply: &ConfigReply) -> Result<PrimitiveSet, ProtocolError> {
    let (functions, arguments, constants) = reply.split();
    Ok(PrimitiveSet::new(functions, arguments, constants)?)
}

/// Applies server-suggested options to `config`. Unknown keys are ignored
/// with a warning.
pub fn apply_server_options(
    config: &mut GPConfig,
    options: &serde_json::Map<String, Value>,
) -> Result<(), ProtocolError> {
    for (key, value) in options {
        if !GPConfig::KEYS.contains(&key.as_str()) {
            log::warn!("ignoring unknown server option `{key}`");
            continue;
        }
        let text = match value {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        config
            .set(key, &text)
            .map_err(|e| ProtocolError::BadReply(format!("CONFIG option: {e}")))?;
    }
    Ok(())
}

/// Constant optimization through the experiment: every residual evaluation
/// is a one-expression EXPERIMENT request.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConstOpt {
    pub settings: ConstOptSettings,
    /// Objectives forming the residual vector; `None` uses all of them.
    pub residual_objectives: Option<Vec<usize>>,
}

/// Assessment over the protocol. All cache misses of one batch travel in a
/// single EXPERIMENT request.
///
/// Without constant optimization, expressions with constants are sent
/// symbolically and the server picks the constant values.
pub struct RemoteAssessment {
    conn: Connection,
    cache: FitnessCache,
    objectives: Option<usize>,
    constopt: Option<RemoteConstOpt>,
}

impl RemoteAssessment {
    pub fn new(conn: Connection, cache: FitnessCache) -> Self {
        Self {
            conn,
            cache,
            objectives: None,
            constopt: None,
        }
    }

    pub fn with_constopt(mut self, constopt: Option<RemoteConstOpt>) -> Self {
        self.constopt = constopt;
        self
    }

    pub fn connection(&mut self) -> &mut Connection {
        &mut self.conn
    }

    pub fn counts(&self) -> RequestCounts {
        self.conn.counts()
    }

    pub fn cache(&self) -> &FitnessCache {
        &self.cache
    }

    /// Returns the connection, e.g. to send SHUTDOWN.
    pub fn into_parts(self) -> (Connection, FitnessCache) {
        (self.conn, self.cache)
    }

    fn check_objectives(&mut self, tuples: &[Vec<f64>]) -> Result<(), ProtocolError> {
        for t in tuples {
            let expected = *self.objectives.get_or_insert(t.len());
            if t.len() != expected || expected == 0 {
                return Err(ProtocolError::ObjectiveCount {
                    expected,
                    found: t.len(),
                });
            }
        }
        Ok(())
    }

    fn evaluate_one(&mut self, key: String) -> Result<FitnessVector, ProtocolError> {
        if let Some(f) = self.cache.get(&key) {
            return Ok(f);
        }
        let tuples = self.conn.experiment(&[key.as_str()])?;
        self.check_objectives(&tuples)?;
        let f = FitnessVector::new(tuples.into_iter().next().unwrap_or_default());
        self.cache.insert(key, f.clone());
        Ok(f)
    }

    fn optimize(&mut self, ind: &Individual, opt: &RemoteConstOpt) -> Result<Constants, ProtocolError> {
        let names = ind.expr.constant_names();
        let mut failure = None;
        let result = {
            let this = &mut *self;
            let failure = &mut failure;
            let names = &names;
            let problem = ConstOptProblem::for_expression(&ind.expr, &opt.settings, move |values: &[f64]| {
                let trial: Constants = names.iter().cloned().zip(values.iter().copied()).collect();
                let key = print_prefix(&ind.expr.resolve_constants(&trial));
                let fitness = if failure.is_some() {
                    None
                } else {
                    match this.evaluate_one(key) {
                        Ok(f) => Some(f),
                        Err(e) => {
                            *failure = Some(e);
                            None
                        }
                    }
                };
                let m = this.objectives.unwrap_or(1);
                let all: Vec<usize> = (0..m).collect();
                let idx = opt.residual_objectives.as_deref().unwrap_or(&all);
                match fitness {
                    Some(f) => idx.iter().map(|&i| f.values().get(i).copied().unwrap_or(f64::INFINITY)).collect(),
                    None => vec![f64::INFINITY; idx.len()],
                }
            });
            optimize_constants(problem)
        };
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(names.into_iter().zip(result.values).collect())
    }
}

impl Assessment for RemoteAssessment {
    fn assess(&mut self, batch: &mut [Individual]) -> Result<(), AssessmentError> {
        if let Some(opt) = self.constopt.clone() {
            let mut solved: HashMap<String, Constants> = HashMap::new();
            for ind in batch.iter_mut() {
                if ind.is_evaluated() || !ind.expr.has_constants() || !ind.constants.is_empty() {
                    continue;
                }
                let symbolic = print_prefix(&ind.expr);
                let constants = match solved.get(&symbolic) {
                    Some(c) => c.clone(),
                    None => {
                        let c = self.optimize(ind, &opt)?;
                        solved.insert(symbolic, c.clone());
                        c
                    }
                };
                ind.constants = constants;
            }
        }

        let mut pending: Vec<String> = Vec::new();
        let mut position: HashMap<String, usize> = HashMap::new();
        let mut waiting: Vec<(usize, usize)> = Vec::new();
        for (i, ind) in batch.iter_mut().enumerate() {
            if ind.is_evaluated() {
                continue;
            }
            let key = ind.key();
            if let Some(f) = self.cache.get(&key) {
                ind.fitness = Some(f);
                continue;
            }
            let p = *position.entry(key.clone()).or_insert_with(|| {
                pending.push(key);
                pending.len() - 1
            });
            waiting.push((i, p));
        }
        if !pending.is_empty() {
            let tuples = self.conn.experiment(&pending)?;
            self.check_objectives(&tuples)?;
            let fitness: Vec<FitnessVector> = tuples.into_iter().map(FitnessVector::new).collect();
            for (key, f) in pending.into_iter().zip(&fitness) {
                self.cache.insert(key, f.clone());
            }
            for (i, p) in waiting {
                batch[i].fitness = Some(fitness[p].clone());
            }
        }
        self.cache.flush()?;
        Ok(())
    }
}

/// Settings for [`client_run`].
#[derive(Debug, Clone, Default)]
pub struct ClientSettings {
    /// `key=value` settings applied after the server's options, so they win
    /// on conflict.
    pub overrides: Vec<(String, String)>,
    pub timeouts: ClientTimeouts,
    pub constopt: Option<RemoteConstOpt>,
}

#[derive(Debug, thiserror::Error)]
pub enum ClientRunError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Aborted(Box<EvolveAborted>),
}

/// Complete remote run: CONFIG, evolution with batched EXPERIMENT requests,
/// then SHUTDOWN (attempted even when the run fails).
pub fn client_run<F>(
    endpoint: &str,
    settings: &ClientSettings,
    cache: FitnessCache,
    on_generation: F,
) -> Result<(EvolutionOutcome, RequestCounts), ClientRunError>
where
    F: FnMut(&GenerationStats, &Evolution) -> ControlFlow<()>,
{
    let mut conn = Connection::connect(endpoint, settings.timeouts)?;
    let reply = match conn.config() {
        Ok(r) => r,
        Err(e) => {
            let _ = conn.shutdown();
            return Err(e.into());
        }
    };
    let prepared = (|| {
        let pset = pset_from_config(&reply)?;
        let mut config = GPConfig::default();
        apply_server_options(&mut config, &reply.options)?;
        for (k, v) in &settings.overrides {
            config.set(k, v).map_err(|e| ClientRunError::Config(e.to_string()))?;
        }
        config.validate().map_err(|e| ClientRunError::Config(e.to_string()))?;
        Ok::<_, ClientRunError>((config, pset))
    })();
    let (config, pset) = match prepared {
        Ok(p) => p,
        Err(e) => {
            let _ = conn.shutdown();
            return Err(e);
        }
    };

    let mut assessment = RemoteAssessment::new(conn, cache).with_constopt(settings.constopt.clone());
    let outcome = evolve(config, pset, &mut assessment, on_generation);
    let (mut conn, _) = assessment.into_parts();
    if let Err(e) = conn.shutdown() {
        log::warn!("SHUTDOWN failed: {e}");
    }
    match outcome {
        Ok(o) => Ok((o, conn.counts())),
        Err(aborted) => Err(ClientRunError::Aborted(Box::new(aborted))),
    }
}
