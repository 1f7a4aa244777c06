//! Dataset resolution shared by the subcommands: either a JSON-lines record
//! file (parsed, canonicalized, deduplicated) or the enumerated space.

use std::collections::BTreeSet;
use std::path::Path;

use dagvae_core::graph::{canonicalize, deserialize_record, enumerate_space, RecordMetrics};
use dagvae_core::{ArchGraph, SearchSpaceSpec};

use crate::config::ExperimentConfig;
use crate::CliError;

pub struct IngestOutcome {
    pub read: usize,
    pub invalid: usize,
    pub duplicates: usize,
    /// Canonical graphs in first-seen order.
    pub kept: Vec<(ArchGraph, Option<RecordMetrics>)>,
}

/// Reads a record file, canonicalizing every graph and dropping invalid
/// lines and canonical duplicates. Blank lines are ignored. Unparsable
/// lines are a hard error (with the line number); graphs that parse but
/// violate the space's validity rules only count as invalid.
pub fn ingest_file(path: &Path, spec: &SearchSpaceSpec) -> Result<IngestOutcome, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    let mut outcome = IngestOutcome {
        read: 0,
        invalid: 0,
        duplicates: 0,
        kept: Vec::new(),
    };
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        outcome.read += 1;
        let (graph, metrics) = deserialize_record(line, spec).map_err(|e| {
            CliError::Runtime(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        if let Some(m) = &metrics {
            if !(0.0..=1.0).contains(&m.val_acc) || !(0.0..=1.0).contains(&m.test_acc) {
                outcome.invalid += 1;
                continue;
            }
        }
        let canon = canonicalize(&graph);
        if !canon.check_validity(spec).is_valid {
            outcome.invalid += 1;
            continue;
        }
        if !seen.insert(canon.canonical_key()) {
            outcome.duplicates += 1;
            continue;
        }
        outcome.kept.push((canon, metrics));
    }
    if outcome.kept.is_empty() {
        return Err(CliError::Runtime(format!(
            "{}: no valid records",
            path.display()
        )));
    }
    Ok(outcome)
}

/// The dataset a command operates on: the ingested file when `data` is
/// configured, the enumerated space otherwise.
pub fn resolve(
    cfg: &ExperimentConfig,
    spec: &SearchSpaceSpec,
) -> Result<Vec<(ArchGraph, Option<RecordMetrics>)>, CliError> {
    match &cfg.data {
        Some(data) => Ok(ingest_file(&data.path, spec)?.kept),
        None => {
            let graphs = enumerate_space(spec, cfg.budget())
                .map_err(|e| CliError::Runtime(format!("enumeration failed: {e}")))?;
            Ok(graphs.into_iter().map(|g| (g, None)).collect())
        }
    }
}

/// Splits off the graphs, discarding metrics.
pub fn graphs_only(dataset: &[(ArchGraph, Option<RecordMetrics>)]) -> Vec<ArchGraph> {
    dataset.iter().map(|(g, _)| g.clone()).collect()
}
