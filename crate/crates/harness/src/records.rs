//! Line-delimited JSON run records with append-only resumability.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use resque_core::nn::RetrainMeasures;
use resque_core::shift::NoiseKind;

use crate::config::TaskMode;
use crate::error::{HarnessError, Result};

/// Whether a run starts from the trained original model or from scratch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Retrain,
    Scratch,
}

/// Identity of one experiment cell; the resumability key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "suite", rename_all = "snake_case")]
pub enum CellKey {
    Dist {
        kind: NoiseKind,
        level: u8,
        seed: u64,
        variant: Variant,
    },
    Task {
        original_seed: u64,
        original_classes: usize,
        target_seed: u64,
        target_classes: usize,
        seed: u64,
        mode: TaskMode,
    },
}

impl CellKey {
    /// Short human-readable form for error listings.
    pub fn describe(&self) -> String {
        match self {
            CellKey::Dist {
                kind,
                level,
                seed,
                variant,
            } => {
                format!("{kind}/level{level}/seed{seed}/{variant:?}")
            }
            CellKey::Task {
                original_seed,
                target_seed,
                seed,
                ..
            } => {
                format!("task{original_seed}->{target_seed}/seed{seed}")
            }
        }
    }
}

/// One run's outcome: the index value, the cost measures, or a failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: CellKey,
    /// The index value for the cell (shift index or task index).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measures: Option<RetrainMeasures>,
    /// Peak evaluation accuracy (task peak mode only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_accuracy: Option<f64>,
    #[serde(default)]
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Appends one record as a JSON line, flushing immediately.
pub fn append_record(path: impl AsRef<Path>, record: &RunRecord) -> Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let line = serde_json::to_string(record)
        .map_err(|e| HarnessError::Config(format!("cannot serialize record: {e}")))?;
    writeln!(file, "{line}")?;
    file.flush()?;
    Ok(())
}

/// Reads every record from a JSONL file; a missing file is an empty run set.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RunRecord = serde_json::from_str(&line).map_err(|e| {
            HarnessError::Config(format!("{}:{}: bad record: {e}", path.display(), i + 1))
        })?;
        records.push(record);
    }
    Ok(records)
}

/// The set of cells already present in a record file. Failed cells count as
/// done: reruns are deterministic, so retrying them would only duplicate.
pub fn completed_cells(records: &[RunRecord]) -> HashSet<CellKey> {
    records.iter().map(|r| r.cell.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record(level: u8) -> RunRecord {
        RunRecord {
            cell: CellKey::Dist {
                kind: NoiseKind::Gaussian,
                level,
                seed: 1,
                variant: Variant::Retrain,
            },
            index: Some(0.25),
            measures: None,
            peak_accuracy: None,
            failed: false,
            error: None,
        }
    }

    #[test]
    fn append_and_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        append_record(&path, &sample_record(1)).unwrap();
        append_record(&path, &sample_record(2)).unwrap();
        let records = read_records(&path).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0], sample_record(1));
        assert_eq!(completed_cells(&records).len(), 2);
    }

    #[test]
    fn missing_file_reads_empty() {
        assert!(read_records("/nonexistent/records.jsonl")
            .unwrap()
            .is_empty());
    }

    #[test]
    fn corrupt_line_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        std::fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(
            read_records(&path).unwrap_err(),
            HarnessError::Config(_)
        ));
    }
}
