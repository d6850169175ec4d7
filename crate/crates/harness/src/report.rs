//! Correlation tables and plot-data series from run records.
//!
//! Reporting is a pure function of the record file. Runs are averaged over
//! seeds per cell before correlating (one point per cell), matching how the
//! studies aggregate repeated runs; `average_seeds = false` correlates raw
//! runs instead.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use resque_core::shift::NoiseKind;
use resque_core::stats::{pearson, spearman, CorrelationResult};

use crate::config::TaskMode;
use crate::error::{HarnessError, Result};
use crate::records::{CellKey, RunRecord, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportMode {
    /// Distribution-shift records (retrain variant + scratch series).
    Dist,
    /// Task-change records in measures mode.
    Task,
    /// Task-change records in peak mode (index vs peak accuracy).
    Peak,
}

impl std::str::FromStr for ReportMode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dist" => Ok(ReportMode::Dist),
            "task" => Ok(ReportMode::Task),
            "peak" => Ok(ReportMode::Peak),
            other => Err(HarnessError::Config(format!(
                "unknown report mode `{other}`"
            ))),
        }
    }
}

type MeasureExtractor = fn(&RunRecord) -> Option<f64>;

/// The measures correlated against the index, with extractors.
const MEASURES: [(&str, MeasureExtractor); 5] = [
    ("epochs", |r| r.measures.as_ref().map(|m| m.epochs as f64)),
    ("total_grad_norm", |r| {
        r.measures.as_ref().map(|m| m.total_grad_norm)
    }),
    ("param_change", |r| {
        r.measures.as_ref().map(|m| m.param_change)
    }),
    ("wall_clock_s", |r| {
        r.measures.as_ref().map(|m| m.wall_clock_s)
    }),
    ("flops_estimate", |r| {
        r.measures.as_ref().map(|m| m.flops_estimate)
    }),
];

#[derive(Debug, Clone)]
pub struct CorrelationRow {
    pub measure: String,
    /// `None` when the correlation is undefined (constant series).
    pub pearson: Option<CorrelationResult>,
    pub spearman: Option<CorrelationResult>,
    pub n: usize,
}

/// One aggregated cell: the averaged index and measure values.
#[derive(Debug, Clone)]
pub struct CellRow {
    pub label: String,
    pub runs: usize,
    pub index: f64,
    pub values: Vec<f64>,
    /// Peak accuracy (peak mode only).
    pub peak_accuracy: Option<f64>,
}

/// Per-(kind, level) retrain-vs-scratch comparison series.
#[derive(Debug, Clone)]
pub struct ScratchRow {
    pub kind: NoiseKind,
    pub level: u8,
    pub retrain_epochs: f64,
    pub scratch_epochs: f64,
    pub retrain_grad_norm: f64,
    pub scratch_grad_norm: f64,
    pub retrain_flops: f64,
    pub scratch_flops: f64,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub mode: ReportMode,
    pub correlations: Vec<CorrelationRow>,
    pub cells: Vec<CellRow>,
    pub scratch: Vec<ScratchRow>,
}

/// Minimum aggregated points per correlation.
const MIN_POINTS: usize = 3;

/// Key identifying a cell irrespective of seed and variant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum GroupKey {
    Dist {
        kind_id: u8,
        level: u8,
    },
    Task {
        original_seed: u64,
        original_classes: usize,
        target_seed: u64,
        target_classes: usize,
    },
}

fn group_key(cell: &CellKey) -> (GroupKey, Option<Variant>) {
    match cell {
        CellKey::Dist {
            kind,
            level,
            variant,
            ..
        } => (
            GroupKey::Dist {
                kind_id: match kind {
                    NoiseKind::Gaussian => 0,
                    NoiseKind::Blur => 1,
                    NoiseKind::SaltPepper => 2,
                },
                level: *level,
            },
            Some(*variant),
        ),
        CellKey::Task {
            original_seed,
            original_classes,
            target_seed,
            target_classes,
            ..
        } => (
            GroupKey::Task {
                original_seed: *original_seed,
                original_classes: *original_classes,
                target_seed: *target_seed,
                target_classes: *target_classes,
            },
            None,
        ),
    }
}

fn kind_of(id: u8) -> NoiseKind {
    match id {
        0 => NoiseKind::Gaussian,
        1 => NoiseKind::Blur,
        _ => NoiseKind::SaltPepper,
    }
}

fn label_of(key: &GroupKey) -> String {
    match key {
        GroupKey::Dist { kind_id, level } => format!("{},{}", kind_of(*kind_id), level),
        GroupKey::Task {
            original_seed,
            original_classes,
            target_seed,
            target_classes,
        } => format!("{original_seed},{original_classes},{target_seed},{target_classes}"),
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn matches_mode(record: &RunRecord, mode: ReportMode) -> bool {
    match (&record.cell, mode) {
        (CellKey::Dist { .. }, ReportMode::Dist) => true,
        (CellKey::Task { mode: m, .. }, ReportMode::Task) => *m == TaskMode::Measures,
        (CellKey::Task { mode: m, .. }, ReportMode::Peak) => *m == TaskMode::Peak,
        _ => false,
    }
}

/// Builds the report from records. Fails with an under-powered error when
/// fewer than three aggregated cells are available for correlation.
pub fn build_report(
    records: &[RunRecord],
    mode: ReportMode,
    average_seeds: bool,
) -> Result<Report> {
    let relevant: Vec<&RunRecord> = records.iter().filter(|r| matches_mode(r, mode)).collect();

    // Aggregate completed records per cell group; track everything seen so
    // failed-only cells can be named in the under-powered error.
    let mut groups: BTreeMap<GroupKey, Vec<&RunRecord>> = BTreeMap::new();
    let mut scratch_groups: BTreeMap<GroupKey, Vec<&RunRecord>> = BTreeMap::new();
    let mut seen: BTreeMap<GroupKey, usize> = BTreeMap::new();
    for record in &relevant {
        let (key, variant) = group_key(&record.cell);
        *seen.entry(key.clone()).or_default() += 1;
        let complete = !record.failed && record.index.is_some() && record.measures.is_some();
        if !complete {
            continue;
        }
        match variant {
            Some(Variant::Scratch) => scratch_groups.entry(key).or_default().push(record),
            _ => groups.entry(key).or_default().push(record),
        }
    }

    let cells: Vec<(GroupKey, CellRow)> = groups
        .iter()
        .flat_map(|(key, runs)| -> Vec<(GroupKey, CellRow)> {
            let rows: Vec<&&RunRecord> = if average_seeds {
                Vec::new() // aggregated below
            } else {
                runs.iter().collect()
            };
            if average_seeds {
                let index = mean(&runs.iter().map(|r| r.index.unwrap()).collect::<Vec<_>>());
                let values = MEASURES
                    .iter()
                    .map(|(_, get)| mean(&runs.iter().map(|r| get(r).unwrap()).collect::<Vec<_>>()))
                    .collect();
                let peaks: Vec<f64> = runs.iter().filter_map(|r| r.peak_accuracy).collect();
                vec![(
                    key.clone(),
                    CellRow {
                        label: label_of(key),
                        runs: runs.len(),
                        index,
                        values,
                        peak_accuracy: (!peaks.is_empty()).then(|| mean(&peaks)),
                    },
                )]
            } else {
                rows.into_iter()
                    .map(|r| {
                        (
                            key.clone(),
                            CellRow {
                                label: label_of(key),
                                runs: 1,
                                index: r.index.unwrap(),
                                values: MEASURES.iter().map(|(_, get)| get(r).unwrap()).collect(),
                                peak_accuracy: r.peak_accuracy,
                            },
                        )
                    })
                    .collect()
            }
        })
        .collect();

    if cells.len() < MIN_POINTS {
        let missing: Vec<String> = seen
            .keys()
            .filter(|key| !groups.contains_key(*key))
            .map(label_of)
            .collect();
        return Err(HarnessError::UnderPowered {
            need: MIN_POINTS,
            have: cells.len(),
            missing,
        });
    }

    let index_series: Vec<f64> = cells.iter().map(|(_, c)| c.index).collect();
    let correlations = match mode {
        ReportMode::Peak => {
            let peaks: Vec<f64> = cells
                .iter()
                .map(|(_, c)| c.peak_accuracy.unwrap_or(f64::NAN))
                .collect();
            vec![correlation_row("peak_accuracy", &index_series, &peaks)]
        }
        _ => MEASURES
            .iter()
            .enumerate()
            .map(|(i, (name, _))| {
                let series: Vec<f64> = cells.iter().map(|(_, c)| c.values[i]).collect();
                correlation_row(name, &index_series, &series)
            })
            .collect(),
    };

    // Scratch-vs-retrain series per cell (dist mode, when both sides exist).
    let mut scratch = Vec::new();
    if mode == ReportMode::Dist {
        for (key, scratch_runs) in &scratch_groups {
            let Some(retrain_runs) = groups.get(key) else {
                continue;
            };
            let GroupKey::Dist { kind_id, level } = key else {
                continue;
            };
            let avg = |runs: &[&RunRecord], get: fn(&RunRecord) -> Option<f64>| {
                mean(&runs.iter().map(|r| get(r).unwrap()).collect::<Vec<_>>())
            };
            scratch.push(ScratchRow {
                kind: kind_of(*kind_id),
                level: *level,
                retrain_epochs: avg(retrain_runs, MEASURES[0].1),
                scratch_epochs: avg(scratch_runs, MEASURES[0].1),
                retrain_grad_norm: avg(retrain_runs, MEASURES[1].1),
                scratch_grad_norm: avg(scratch_runs, MEASURES[1].1),
                retrain_flops: avg(retrain_runs, MEASURES[4].1),
                scratch_flops: avg(scratch_runs, MEASURES[4].1),
            });
        }
    }

    Ok(Report {
        mode,
        correlations,
        cells: cells.into_iter().map(|(_, c)| c).collect(),
        scratch,
    })
}

fn correlation_row(name: &str, index: &[f64], series: &[f64]) -> CorrelationRow {
    CorrelationRow {
        measure: name.to_string(),
        pearson: pearson(index, series).ok(),
        spearman: spearman(index, series).ok(),
        n: index.len(),
    }
}

/// Renders the correlation table for stdout.
pub fn format_table(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>10} {:>12} {:>10} {:>12} {:>4}",
        "measure", "pearson_r", "pearson_p", "spearman", "spearman_p", "n"
    );
    for row in &report.correlations {
        let fmt = |c: &Option<CorrelationResult>, coefficient: bool| match c {
            Some(c) => format!(
                "{:.4}",
                if coefficient {
                    c.coefficient
                } else {
                    c.p_value
                }
            ),
            None => "undefined".to_string(),
        };
        let _ = writeln!(
            out,
            "{:<16} {:>10} {:>12} {:>10} {:>12} {:>4}",
            row.measure,
            fmt(&row.pearson, true),
            fmt(&row.pearson, false),
            fmt(&row.spearman, true),
            fmt(&row.spearman, false),
            row.n
        );
    }
    out
}

/// Writes the report's CSV files into `dir`, returning the paths written.
pub fn write_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let mut correlations = String::from("measure,pearson_r,pearson_p,spearman_rho,spearman_p,n\n");
    for row in &report.correlations {
        let cell = |c: &Option<CorrelationResult>| match c {
            Some(c) => format!("{},{}", c.coefficient, c.p_value),
            None => ",".to_string(),
        };
        let _ = writeln!(
            correlations,
            "{},{},{},{}",
            row.measure,
            cell(&row.pearson),
            cell(&row.spearman),
            row.n
        );
    }
    written.push(write_file(dir, "correlations.csv", &correlations)?);

    let (cells_name, label_header) = match report.mode {
        ReportMode::Dist => ("cells.csv", "kind,level"),
        ReportMode::Task => (
            "tasks.csv",
            "original_seed,original_classes,target_seed,target_classes",
        ),
        ReportMode::Peak => (
            "peak.csv",
            "original_seed,original_classes,target_seed,target_classes",
        ),
    };
    let mut cells = format!(
        "{label_header},runs,index,epochs,total_grad_norm,param_change,wall_clock_s,flops_estimate{}\n",
        if report.mode == ReportMode::Peak { ",peak_accuracy" } else { "" }
    );
    for row in &report.cells {
        let _ = write!(cells, "{},{},{}", row.label, row.runs, row.index);
        for v in &row.values {
            let _ = write!(cells, ",{v}");
        }
        if report.mode == ReportMode::Peak {
            let _ = write!(cells, ",{}", row.peak_accuracy.unwrap_or(f64::NAN));
        }
        cells.push('\n');
    }
    written.push(write_file(dir, cells_name, &cells)?);

    if report.mode == ReportMode::Dist && !report.scratch.is_empty() {
        let mut s = String::from(
            "kind,level,retrain_epochs,scratch_epochs,retrain_grad_norm,scratch_grad_norm,retrain_flops,scratch_flops\n",
        );
        for row in &report.scratch {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                row.kind,
                row.level,
                row.retrain_epochs,
                row.scratch_epochs,
                row.retrain_grad_norm,
                row.scratch_grad_norm,
                row.retrain_flops,
                row.scratch_flops
            );
        }
        written.push(write_file(dir, "scratch_vs_retrain.csv", &s)?);
    }

    Ok(written)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}
