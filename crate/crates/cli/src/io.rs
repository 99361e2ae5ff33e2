//! Path resolution and dataset loading shared by the subcommands.

use std::path::{Path, PathBuf};

use blanc_core::data::{load_squad_json, read_jsonl};
use blanc_core::QAExample;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::Ctx;

/// Relative inputs are looked up under the data directory when one is set.
pub fn resolve_input(ctx: &Ctx, path: &Path) -> CliResult<PathBuf> {
    let full = match &ctx.data_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    };
    if !full.is_file() {
        return Err(CliError::Usage(format!("input file not found: {}", full.display())));
    }
    Ok(full)
}

/// Creates the parent directory if needed and rejects directory targets.
pub fn prepare_output(path: &Path) -> CliResult<()> {
    if path.is_dir() {
        return Err(CliError::Usage(format!("output {} is a directory", path.display())));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", parent.display())))?;
    }
    Ok(())
}

pub fn prepare_dir(dir: &Path) -> CliResult<()> {
    if dir.exists() && !dir.is_dir() {
        return Err(CliError::Usage(format!("{} exists and is not a directory", dir.display())));
    }
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Usage(format!("cannot create directory {}: {e}", dir.display())))
}

/// `.json` files are read as SQuAD; anything else as internal JSONL, with
/// every answer checked against its passage.
pub fn load_examples(path: &Path) -> CliResult<Vec<QAExample>> {
    if path.extension().is_some_and(|e| e == "json") {
        return Ok(load_squad_json(path)?);
    }
    let examples: Vec<QAExample> = read_jsonl(path)?;
    for ex in &examples {
        ex.validate()?;
    }
    Ok(examples)
}

pub fn jsonl_bytes<T: Serialize>(records: &[T]) -> CliResult<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

/// Scores are reported in percent.
pub fn pct(x: f64) -> f64 {
    100.0 * x
}
