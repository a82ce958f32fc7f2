//! Fitness cache keyed by canonical prefix strings.
//!
//! File format, one record per line:
//!
//! ```text
//! <prefix string>\t<objective count>\t<values separated by single spaces>\n
//! ```
//!
//! Values are written as the shortest decimal that round-trips (`inf` for
//! infinity). Every record, the last one included, ends with a newline; a
//! file that does not is treated as truncated.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::evolution::FitnessVector;
use crate::expr::format_f64;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cache file {path}, line {line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, Default)]
pub struct FitnessCache {
    entries: BTreeMap<String, FitnessVector>,
    path: Option<PathBuf>,
    hits: usize,
}

impl FitnessCache {
    /// A cache that is never written to disk.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path`, or starts empty if it does not exist. Later
    /// [`flush`](Self::flush) calls write back to the same path.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        let path = path.as_ref().to_path_buf();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Ok(Self {
                    path: Some(path),
                    ..Self::default()
                })
            }
            Err(source) => return Err(CacheError::Io { path, source }),
        };
        let entries = parse(&text).map_err(|(line, reason)| CacheError::Corrupt {
            path: path.clone(),
            line,
            reason,
        })?;
        Ok(Self {
            entries,
            path: Some(path),
            hits: 0,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&mut self, key: &str) -> Option<FitnessVector> {
        let hit = self.entries.get(key).cloned();
        if hit.is_some() {
            self.hits += 1;
        }
        hit
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn insert(&mut self, key: String, fitness: FitnessVector) {
        self.entries.insert(key, fitness);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Lookups answered from the cache so far.
    pub fn hits(&self) -> usize {
        self.hits
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &FitnessVector)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Writes every entry to the backing file, atomically replacing it.
    /// No-op for in-memory caches.
    pub fn flush(&self) -> Result<(), CacheError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let io_err = |source| CacheError::Io {
            path: path.clone(),
            source,
        };
        let tmp = path.with_extension("tmp");
        {
            let mut out = io::BufWriter::new(fs::File::create(&tmp).map_err(io_err)?);
            out.write_all(self.serialize().as_bytes()).map_err(io_err)?;
            out.flush().map_err(io_err)?;
        }
        fs::rename(&tmp, path).map_err(io_err)
    }

    pub fn serialize(&self) -> String {
        let mut s = String::new();
        for (key, fitness) in &self.entries {
            let values: Vec<String> = fitness.values().iter().map(|v| format_f64(*v)).collect();
            s.push_str(&format!("{key}\t{}\t{}\n", fitness.len(), values.join(" ")));
        }
        s
    }
}

fn parse(text: &str) -> Result<BTreeMap<String, FitnessVector>, (usize, String)> {
    let mut entries = BTreeMap::new();
    if text.is_empty() {
        return Ok(entries);
    }
    if !text.ends_with('\n') {
        return Err((text.lines().count(), "truncated record (no newline)".into()));
    }
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        let [key, count, values] = fields[..] else {
            return Err((line_no, format!("expected 3 tab-separated fields, got {}", fields.len())));
        };
        if key.is_empty() {
            return Err((line_no, "empty key".into()));
        }
        let count: usize = count
            .parse()
            .map_err(|_| (line_no, format!("bad objective count `{count}`")))?;
        let values: Vec<f64> = values
            .split(' ')
            .map(|v| v.parse::<f64>().map_err(|_| (line_no, format!("bad value `{v}`"))))
            .collect::<Result<_, _>>()?;
        if values.len() != count {
            return Err((line_no, format!("{} values, header says {count}", values.len())));
        }
        entries.insert(key.to_string(), FitnessVector::new(values));
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn missing_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let c = FitnessCache::load(dir.path().join("nope.tsv")).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn flush_and_load_hundred_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.tsv");
        let mut c = FitnessCache::load(&path).unwrap();
        for i in 0..100 {
            let v = i as f64;
            c.insert(
                format!("Add x {}", format_f64(v * 0.1)),
                FitnessVector::new(vec![v.sqrt(), 1.0 / (v + 3.0), f64::INFINITY, 5.0]),
            );
        }
        c.flush().unwrap();
        let back = FitnessCache::load(&path).unwrap();
        assert_eq!(back.len(), 100);
        assert!(c.entries().eq(back.entries()));
    }

    #[test]
    fn corrupt_files_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.tsv");
        for bad in [
            "x\t2\t1.0 2.0\nAdd x y\t2\t1.",
            "x\t2\t1.0\n",
            "x\t1\n",
            "x\tzz\t1.0\n",
            "x\t1\tabc\n",
        ] {
            fs::write(&path, bad).unwrap();
            assert!(
                matches!(FitnessCache::load(&path), Err(CacheError::Corrupt { .. })),
                "{bad:?}"
            );
        }
    }

    proptest! {
        #[test]
        fn values_round_trip_bit_exactly(values in proptest::collection::vec(any::<f64>(), 1..6)) {
            let mut c = FitnessCache::in_memory();
            let f = FitnessVector::new(values);
            c.insert("x".into(), f.clone());
            let back = parse(&c.serialize()).unwrap();
            let got = &back["x"];
            for (a, b) in f.values().iter().zip(got.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
