//! CSV artifacts of a run.

use std::fs;
use std::io;
use std::path::Path;

use crate::evolution::{GenerationStats, Individual};
use crate::expr::{format_f64, print_prefix};

fn csv_err(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

/// Renders per-generation statistics, one row per history entry.
pub fn stats_csv(history: &[GenerationStats], objective_names: &[String]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["generation".to_string(), "evaluations".into(), "archive_size".into()];
    header.extend(objective_names.iter().map(|n| format!("min_{n}")));
    header.extend(objective_names.iter().map(|n| format!("median_{n}")));
    w.write_record(&header).expect("in-memory write");
    for h in history {
        let mut row = vec![
            h.generation.to_string(),
            h.evaluations.to_string(),
            h.archive_size.to_string(),
        ];
        row.extend(h.min.iter().map(|v| format_f64(*v)));
        row.extend(h.median.iter().map(|v| format_f64(*v)));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV output is UTF-8")
}

/// Renders archive members: objectives, length (unless already an
/// objective), constants as `name=value` pairs joined by `;`, and the
/// symbolic prefix expression.
pub fn archive_csv(members: &[Individual], objective_names: &[String]) -> String {
    let with_length = !objective_names.iter().any(|n| n == "length");
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = objective_names.to_vec();
    if with_length {
        header.push("length".into());
    }
    header.push("constants".into());
    header.push("expression".into());
    w.write_record(&header).expect("in-memory write");
    for ind in members {
        let mut row: Vec<String> = ind.fitness_values().iter().map(|v| format_f64(*v)).collect();
        if with_length {
            row.push(ind.expr.len().to_string());
        }
        row.push(
            ind.constants
                .iter()
                .map(|(k, v)| format!("{k}={}", format_f64(*v)))
                .collect::<Vec<_>>()
                .join(";"),
        );
        row.push(print_prefix(&ind.expr));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV output is UTF-8")
}

/// Writes `contents` to `path` via a temporary file and rename.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

pub(crate) fn write_csv_file(path: &Path, write: impl FnOnce(fs::File) -> csv::Result<()>) -> io::Result<()> {
    write(fs::File::create(path)?).map_err(csv_err)
}
