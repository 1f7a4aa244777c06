//! Output helpers. CSV exports start with a `# generated_at_unix=...`
//! comment line — the only nondeterministic byte in otherwise reproducible
//! outputs — so determinism checks compare everything after the first line.
//! JSON and JSON-lines exports carry no timestamp to stay machine-parsable.

use std::path::Path;

use crate::CliError;

pub fn timestamp_header() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# generated_at_unix={secs}\n")
}

pub fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), CliError> {
    let mut content = timestamp_header();
    content.push_str(header);
    content.push('\n');
    for row in rows {
        content.push_str(row);
        content.push('\n');
    }
    write_file(path, &content)
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("serialization failed: {e}")))?;
    text.push('\n');
    write_file(path, &text)
}

/// Fixed-width float formatting keeps CSV bytes identical across runs.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.12e}")
}
