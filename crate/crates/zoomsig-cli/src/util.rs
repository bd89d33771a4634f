//! Shared plumbing: error-to-exit-code mapping, input digesting, atomic
//! output writes, and model detection.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;
use thiserror::Error;
use zoomsig::ingest::{parse_log, Diagnostic, LogRecord};

use crate::report::InputDigest;

/// CLI failure split by exit code: 1 for bad invocations, 2 for bad data
/// or I/O.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn data(msg: impl Into<String>) -> CliError {
    CliError::Data(msg.into())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// All input logs concatenated, with per-file digests.
pub struct LoadedLogs {
    pub records: Vec<LogRecord>,
    pub inputs: Vec<InputDigest>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Read and parse one or more JSONL logs, digesting each file as read.
pub fn read_logs(paths: &[PathBuf]) -> Result<LoadedLogs, CliError> {
    let mut records = Vec::new();
    let mut inputs = Vec::new();
    let mut diagnostics = Vec::new();
    for path in paths {
        let bytes = fs::read(path)
            .map_err(|e| data(format!("cannot read `{}`: {e}", path.display())))?;
        inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        let parsed = parse_log(bytes.as_slice())
            .map_err(|e| data(format!("`{}`: {e}", path.display())))?;
        records.extend(parsed.records);
        diagnostics.extend(parsed.diagnostics);
    }
    Ok(LoadedLogs {
        records,
        inputs,
        diagnostics,
    })
}

/// Write via a temp file in the target directory plus rename, so readers
/// never observe a half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)
        .map_err(|e| data(format!("cannot create temp file in `{}`: {e}", dir.display())))?;
    tmp.write_all(contents)
        .map_err(|e| data(format!("cannot write `{}`: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| data(format!("cannot replace `{}`: {e}", path.display())))?;
    Ok(())
}

/// Write the JSON and markdown report views and print the markdown.
pub fn emit(
    report: &crate::report::Report,
    out: Option<&Path>,
    md: Option<&Path>,
) -> Result<(), CliError> {
    if let Some(path) = out {
        write_atomic(path, report.to_json().as_bytes())?;
    }
    let markdown = crate::report::render_markdown(report);
    if let Some(path) = md {
        write_atomic(path, markdown.as_bytes())?;
    }
    print!("{markdown}");
    Ok(())
}

/// Distinct model names in first-appearance order, skipping hybrid
/// `a->b` stage-split traces.
pub fn detect_models(records: &[LogRecord]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for rec in records {
        if rec.model.contains("->") {
            continue;
        }
        if seen.insert(rec.model.clone()) {
            out.push(rec.model.clone());
        }
    }
    out
}

/// Resolve the (reference, competitor) pair from flags and the log.
/// Returns `None` for the competitor on single-model logs.
pub fn resolve_models(
    records: &[LogRecord],
    model_a: Option<String>,
    model_b: Option<String>,
) -> Result<(String, Option<String>), CliError> {
    if model_a.is_none() && model_b.is_some() {
        return Err(usage("--model-b requires --model-a"));
    }
    let detected = detect_models(records);
    match (model_a, model_b) {
        (Some(a), Some(b)) => {
            if a == b {
                return Err(usage("--model-a and --model-b must differ"));
            }
            Ok((a, Some(b)))
        }
        (Some(a), None) => {
            let others: Vec<&String> = detected.iter().filter(|m| **m != a).collect();
            match others.len() {
                0 => Ok((a, None)),
                1 => Ok((a, Some(others[0].clone()))),
                _ => Err(data(format!(
                    "log contains several models besides `{a}` ({}); pass --model-b",
                    join(&detected)
                ))),
            }
        }
        (None, _) => match detected.len() {
            0 => Err(data("log contains no model records (only hybrid traces)")),
            1 => Ok((detected[0].clone(), None)),
            2 => Ok((detected[0].clone(), Some(detected[1].clone()))),
            _ => Err(data(format!(
                "log contains more than two models ({}); pass --model-a/--model-b",
                join(&detected)
            ))),
        },
    }
}

fn join(models: &[String]) -> String {
    models.join(", ")
}
