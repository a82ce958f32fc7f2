//! Generation-boundary checkpoints.
//!
//! A checkpoint is a JSON document holding the schema version, the digest
//! of the run settings it belongs to, and an [`EvolutionState`]. Reals are
//! stored as shortest round-trip strings so that infinite fitness values
//! survive and every bit is preserved.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::evolution::{
    EvolutionState, FitnessVector, GPConfig, GenerationStats, Individual, RngState,
};
use crate::expr::{format_f64, parse_prefix, print_prefix, PrimitiveSet};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("checkpoint {path} is corrupt: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("checkpoint {path} has schema version {found}, this build reads version {expected}")]
    Version {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error(
        "checkpoint {path} was written by a run with different settings \
         (digest {found}, current settings give {expected}); \
         resume with the original configuration or start a new run"
    )]
    DigestMismatch {
        path: PathBuf,
        found: String,
        expected: String,
    },
}

/// Digest identifying everything that shapes a run's trajectory: the GP
/// configuration, the primitive set and any mode-specific settings passed
/// in `extra` as `key=value` lines.
pub fn run_digest(config: &GPConfig, pset: &PrimitiveSet, extra: &[(String, String)]) -> String {
    let mut text = format!(
        "population_size={}\nmax_generations={}\np_crossover={}\np_mutation={}\n\
         tournament_size={}\ninit_min_height={}\ninit_max_height={}\n\
         variation_max_height={}\nseed={}\n",
        config.population_size,
        config.max_generations,
        format_f64(config.p_crossover),
        format_f64(config.p_mutation),
        config.tournament_size,
        config.init_min_height,
        config.init_max_height,
        config.variation_max_height,
        config.seed,
    );
    for (name, arity) in pset.arities() {
        text.push_str(&format!("primitive={name}/{arity}\n"));
    }
    for c in pset.constants() {
        text.push_str(&format!("constant={c}\n"));
    }
    for (k, v) in extra {
        text.push_str(&format!("{k}={v}\n"));
    }
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize, Deserialize)]
struct StoredIndividual {
    expr: String,
    constants: BTreeMap<String, String>,
    fitness: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct StoredStats {
    generation: usize,
    evaluations: usize,
    min: Vec<String>,
    median: Vec<String>,
    archive_size: usize,
}

#[derive(Serialize, Deserialize)]
struct Stored {
    version: u32,
    digest: String,
    generation: usize,
    rng: String,
    population: Vec<StoredIndividual>,
    archive: Vec<StoredIndividual>,
    history: Vec<StoredStats>,
}

fn reals(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| format_f64(*v)).collect()
}

fn store(ind: &Individual) -> StoredIndividual {
    StoredIndividual {
        expr: print_prefix(&ind.expr),
        constants: ind
            .constants
            .iter()
            .map(|(k, v)| (k.clone(), format_f64(*v)))
            .collect(),
        fitness: reals(ind.fitness_values()),
    }
}

fn parse_real(s: &str) -> Result<f64, String> {
    s.parse().map_err(|_| format!("bad number `{s}`"))
}

fn parse_reals(items: &[String]) -> Result<Vec<f64>, String> {
    items.iter().map(|s| parse_real(s)).collect()
}

fn load_individual(s: &StoredIndividual, pset: &PrimitiveSet) -> Result<Individual, String> {
    let expr = parse_prefix(&s.expr, pset).map_err(|e| format!("`{}`: {e}", s.expr))?;
    let constants = s
        .constants
        .iter()
        .map(|(k, v)| Ok((k.clone(), parse_real(v)?)))
        .collect::<Result<_, String>>()?;
    Ok(Individual {
        expr,
        constants,
        fitness: Some(FitnessVector::new(parse_reals(&s.fitness)?)),
    })
}

/// Serializes `state` for the run identified by `digest`.
pub fn encode_checkpoint(state: &EvolutionState, digest: &str) -> String {
    let stored = Stored {
        version: CHECKPOINT_VERSION,
        digest: digest.to_string(),
        generation: state.generation,
        rng: state.rng.to_string(),
        population: state.population.iter().map(store).collect(),
        archive: state.archive.iter().map(store).collect(),
        history: state
            .history
            .iter()
            .map(|h| StoredStats {
                generation: h.generation,
                evaluations: h.evaluations,
                min: reals(&h.min),
                median: reals(&h.median),
                archive_size: h.archive_size,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&stored).expect("checkpoint serializes");
    text.push('\n');
    text
}

/// Writes a checkpoint atomically (temporary file, then rename).
pub fn save_checkpoint(path: &Path, state: &EvolutionState, digest: &str) -> Result<(), CheckpointError> {
    let io_err = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode_checkpoint(state, digest)).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

/// Reads a checkpoint, refusing version or digest mismatches.
pub fn load_checkpoint(
    path: &Path,
    pset: &PrimitiveSet,
    expected_digest: &str,
) -> Result<EvolutionState, CheckpointError> {
    let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_at(&text, pset, expected_digest, path)
}

/// Parses checkpoint text, refusing version or digest mismatches.
pub fn decode_checkpoint(
    text: &str,
    pset: &PrimitiveSet,
    expected_digest: &str,
) -> Result<EvolutionState, CheckpointError> {
    decode_at(text, pset, expected_digest, Path::new("<memory>"))
}

fn decode_at(
    text: &str,
    pset: &PrimitiveSet,
    expected_digest: &str,
    path: &Path,
) -> Result<EvolutionState, CheckpointError> {
    let corrupt = |reason: String| CheckpointError::Corrupt {
        path: path.to_path_buf(),
        reason,
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    match value.get("version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(CHECKPOINT_VERSION) => {}
        Some(v) => {
            return Err(CheckpointError::Version {
                path: path.to_path_buf(),
                found: v.try_into().unwrap_or(u32::MAX),
                expected: CHECKPOINT_VERSION,
            })
        }
        None => return Err(corrupt("missing schema version".into())),
    }
    let stored: Stored = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
    if stored.digest != expected_digest {
        return Err(CheckpointError::DigestMismatch {
            path: path.to_path_buf(),
            found: stored.digest,
            expected: expected_digest.to_string(),
        });
    }
    let rng: RngState = stored.rng.parse().map_err(|e: crate::evolution::RngStateError| corrupt(e.to_string()))?;
    let population = stored
        .population
        .iter()
        .map(|s| load_individual(s, pset))
        .collect::<Result<Vec<_>, _>>()
        .map_err(corrupt)?;
    let archive = stored
        .archive
        .iter()
        .map(|s| load_individual(s, pset))
        .collect::<Result<Vec<_>, _>>()
        .map_err(corrupt)?;
    let history = stored
        .history
        .iter()
        .map(|h| {
            Ok(GenerationStats {
                generation: h.generation,
                evaluations: h.evaluations,
                min: parse_reals(&h.min)?,
                median: parse_reals(&h.median)?,
                archive_size: h.archive_size,
            })
        })
        .collect::<Result<Vec<_>, String>>()
        .map_err(corrupt)?;
    if history.len() != stored.generation + 1 {
        return Err(corrupt(format!(
            "{} history rows for generation {}",
            history.len(),
            stored.generation
        )));
    }
    Ok(EvolutionState {
        generation: stored.generation,
        population,
        archive,
        rng,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::master_rng;
    use crate::lorenz::lorenz_pset;
    use rand::Rng;

    fn state() -> EvolutionState {
        let p = lorenz_pset();
        let ind = |text: &str, k: Option<f64>, f: Vec<f64>| Individual {
            expr: parse_prefix(text, &p).unwrap(),
            constants: k.map(|k| [("k".to_string(), k)].into()).unwrap_or_default(),
            fitness: Some(FitnessVector::new(f)),
        };
        let mut rng = master_rng(3);
        let _: u64 = rng.random();
        EvolutionState {
            generation: 1,
            population: vec![
                ind("Add Mul k x z", Some(-27.84), vec![0.1, 0.2, 0.3, 5.0]),
                ind("Exp Exp y", None, vec![f64::INFINITY, f64::INFINITY, f64::INFINITY, 3.0]),
            ],
            archive: vec![ind("Add Mul k x z", Some(-27.84), vec![0.1, 0.2, 0.3, 5.0])],
            rng: RngState::capture(&rng),
            history: vec![
                GenerationStats {
                    generation: 0,
                    evaluations: 2,
                    min: vec![0.1, 0.2, 0.3, 1.0 / 3.0],
                    median: vec![f64::INFINITY; 4],
                    archive_size: 1,
                },
                GenerationStats {
                    generation: 1,
                    evaluations: 1,
                    min: vec![0.1, 0.2, 0.3, 3.0],
                    median: vec![0.5; 4],
                    archive_size: 1,
                },
            ],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let p = lorenz_pset();
        let s = state();
        let text = encode_checkpoint(&s, "abc");
        assert_eq!(decode_checkpoint(&text, &p, "abc").unwrap(), s);
    }

    #[test]
    fn refuses_mismatches_and_corruption() {
        let p = lorenz_pset();
        let text = encode_checkpoint(&state(), "abc");
        assert!(matches!(
            decode_checkpoint(&text, &p, "def"),
            Err(CheckpointError::DigestMismatch { ref expected, .. }) if expected == "def"
        ));
        let bumped = text.replace("\"version\": 1", "\"version\": 99");
        assert!(matches!(
            decode_checkpoint(&bumped, &p, "abc"),
            Err(CheckpointError::Version { found: 99, .. })
        ));
        for bad in [&text[..text.len() / 2], "", "{}", &text.replace("Exp Exp y", "Exp Exp")] {
            assert!(
                matches!(decode_checkpoint(bad, &p, "abc"), Err(CheckpointError::Corrupt { .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn digest_tracks_settings() {
        let p = lorenz_pset();
        let base = GPConfig::default();
        let d = run_digest(&base, &p, &[]);
        assert_eq!(d.len(), 64);
        assert_eq!(d, run_digest(&base.clone(), &p, &[]));
        let other = GPConfig {
            population_size: 501,
            ..base.clone()
        };
        assert_ne!(d, run_digest(&other, &p, &[]));
        assert_ne!(d, run_digest(&base, &p, &[("channel".into(), "z".into())]));
    }
}
