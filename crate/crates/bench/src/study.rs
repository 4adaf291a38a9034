//! Grid files and parameter sweeps.
//!
//! A grid file holds one `key = v1, v2, ...` line per varied field of
//! [`TrialConfig`]; `#` starts a comment and blank lines are ignored. The
//! study runs the Cartesian product of all lines, the first key varying
//! slowest. Fields not listed keep their defaults. A file without entries
//! describes no trials.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use crate::config::TrialConfig;
use crate::error::{BenchError, Result};
use crate::trial::{run_trial, TrialRecord, CSV_HEADER};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StudyGrid {
    pub entries: Vec<(String, Vec<String>)>,
}

pub fn parse_grid(text: &str) -> Result<StudyGrid> {
    let mut grid = StudyGrid::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| BenchError::Usage(format!("grid line {}: {msg}", lineno + 1));
        let (key, values) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected 'key = values', got '{line}'")))?;
        let key = key.trim();
        if grid.entries.iter().any(|(k, _)| k == key) {
            return Err(bad(format!("duplicate key '{key}'")));
        }
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
        if values.iter().any(String::is_empty) {
            return Err(bad(format!("empty value for '{key}'")));
        }
        let mut probe = TrialConfig::default();
        for v in &values {
            probe.set(key, v).map_err(|e| bad(e.to_string()))?;
        }
        grid.entries.push((key.to_string(), values));
    }
    Ok(grid)
}

impl StudyGrid {
    /// Every combination of the listed values.
    pub fn configs(&self) -> Result<Vec<TrialConfig>> {
        if self.entries.is_empty() {
            return Ok(Vec::new());
        }
        let mut configs = vec![TrialConfig::default()];
        for (key, values) in &self.entries {
            let mut next = Vec::with_capacity(configs.len() * values.len());
            for c in &configs {
                for v in values {
                    let mut c = c.clone();
                    c.set(key, v)?;
                    next.push(c);
                }
            }
            configs = next;
        }
        Ok(configs)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StudySummary {
    pub trials: usize,
    pub failed: usize,
}

fn rows_for(config: &TrialConfig) -> Vec<TrialRecord> {
    run_trial(config).unwrap_or_else(|e| vec![TrialRecord::failed(config, format!("invalid: {e}"))])
}

/// Runs every configuration and streams its rows to `out` as it finishes.
///
/// Trials run one after another unless `parallel` is set. In parallel mode
/// trials compete for cores, so wall times lose their meaning; every other
/// column is unchanged, though rows arrive in completion order.
pub fn run_study<W: Write>(
    configs: &[TrialConfig],
    out: W,
    parallel: bool,
) -> Result<StudySummary> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    w.flush()?;
    let mut summary = StudySummary::default();
    let mut emit = |rows: Vec<TrialRecord>| -> Result<()> {
        summary.trials += 1;
        if rows.iter().any(|r| !r.is_ok()) {
            summary.failed += 1;
        }
        for r in &rows {
            w.write_record(r.csv_row())?;
        }
        w.flush()?;
        Ok(())
    };

    if !parallel {
        for c in configs {
            emit(rows_for(c))?;
        }
    } else {
        let workers = std::thread::available_parallelism()
            .map_or(1, |n| n.get())
            .min(configs.len().max(1));
        let next = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel();
        std::thread::scope(|scope| -> Result<()> {
            for _ in 0..workers {
                let tx = tx.clone();
                let next = &next;
                scope.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(c) = configs.get(i) else { break };
                    if tx.send(rows_for(c)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            for rows in rx {
                emit(rows)?;
            }
            Ok(())
        })?;
    }
    Ok(summary)
}
