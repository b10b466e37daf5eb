//! Campaign execution with crash-resume.
//!
//! An output directory holds three files:
//!
//! * `results.jsonl`: one [`TrialResult`] per line, append-only, in
//!   `(depth, trial)` order for a fresh run;
//! * `results.idx`: the sidecar index, one `depth trial offset length` line
//!   per stored result;
//! * `manifest.json`: the config and a creation timestamp.
//!
//! Rerunning a campaign against the same directory keeps every complete row
//! and computes only the missing cells. A torn final line left by a crash is
//! cut off before appending.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};
use crate::experiments::{run_trial, trial_seed, TrialResult};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const INDEX_FILE: &str = "results.idx";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    /// Seconds since the Unix epoch when the directory was first used.
    pub created_unix: u64,
    pub cells: usize,
    pub version: String,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    /// All rows of the campaign in `(depth, trial)` order.
    pub results: Vec<TrialResult>,
    pub computed: usize,
    pub reused: usize,
}

/// Every cell of the sweep, in canonical order.
pub fn cells(config: &ExperimentConfig) -> Vec<(u32, u32)> {
    config
        .depths
        .iter()
        .flat_map(|&d| (0..config.trials).map(move |t| (d, t)))
        .collect()
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn write_manifest(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    if path.exists() {
        let text = std::fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?;
        let old: Manifest = serde_json::from_str(&text)?;
        if old.config != *config {
            return Err(LabError::Config(format!(
                "{} holds results of a different configuration",
                dir.display()
            )));
        }
        return Ok(());
    }
    let manifest = Manifest {
        config: config.clone(),
        created_unix: now_unix(),
        cells: cells(config).len(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| LabError::io(&path, e))
}

/// Reads the complete, well-formed rows of an existing results file that
/// belong to `config`, truncating the file after the last good row.
fn recover(config: &ExperimentConfig, dir: &Path) -> Result<Vec<(TrialResult, u64, u64)>> {
    let path = dir.join(RESULTS_FILE);
    let Ok(file) = File::open(&path) else {
        return Ok(Vec::new());
    };
    let wanted: BTreeSet<(u32, u32)> = cells(config).into_iter().collect();
    let mut reader = BufReader::new(file);
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    let mut offset = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| LabError::io(&path, e))?;
        if n == 0 || !line.ends_with('\n') {
            break;
        }
        let Ok(row) = serde_json::from_str::<TrialResult>(line.trim_end()) else {
            break;
        };
        let cell = (row.depth, row.trial);
        if row.experiment != config.id
            || !wanted.contains(&cell)
            || row.seed != trial_seed(config, row.depth, row.trial)
            || !seen.insert(cell)
        {
            break;
        }
        rows.push((row, offset, n as u64));
        offset += n as u64;
    }
    let file = OpenOptions::new()
        .write(true)
        .open(&path)
        .map_err(|e| LabError::io(&path, e))?;
    file.set_len(offset).map_err(|e| LabError::io(&path, e))?;
    Ok(rows)
}

fn index_line(row: &TrialResult, offset: u64, len: u64) -> String {
    format!("{} {} {offset} {len}\n", row.depth, row.trial)
}

/// Runs (or resumes) a campaign, writing rows through a single writer in
/// canonical order while `threads` workers compute cells.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    config.validate()?;
    let dir = &opts.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    write_manifest(config, dir)?;
    let done = recover(config, dir)?;

    // The index is rebuilt from the recovered rows so that it always matches.
    let idx_path = dir.join(INDEX_FILE);
    let mut index = String::new();
    for (row, off, len) in &done {
        index.push_str(&index_line(row, *off, *len));
    }
    std::fs::write(&idx_path, &index).map_err(|e| LabError::io(&idx_path, e))?;

    let have: BTreeSet<(u32, u32)> = done.iter().map(|(r, _, _)| (r.depth, r.trial)).collect();
    let missing: Vec<(u32, u32)> = cells(config).into_iter().filter(|c| !have.contains(c)).collect();
    let reused = done.len();
    let mut offset = done.last().map_or(0, |(_, o, l)| o + l);
    let mut all: BTreeMap<(u32, u32), TrialResult> =
        done.into_iter().map(|(r, _, _)| ((r.depth, r.trial), r)).collect();

    let res_path = dir.join(RESULTS_FILE);
    let mut results = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&res_path)
        .map_err(|e| LabError::io(&res_path, e))?;
    let mut idx = OpenOptions::new()
        .append(true)
        .open(&idx_path)
        .map_err(|e| LabError::io(&idx_path, e))?;

    let threads = opts.threads.max(1).min(missing.len().max(1));
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, TrialResult)>();
    std::thread::scope(|scope| -> Result<()> {
        for _ in 0..threads {
            let tx = tx.clone();
            let (next, missing) = (&next, &missing);
            scope.spawn(move || loop {
                let job = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(depth, trial)) = missing.get(job) else {
                    break;
                };
                if tx.send((job, run_trial(config, depth, trial))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // Rows arrive in any order; hold them until their turn comes.
        let mut pending = BTreeMap::new();
        let mut turn = 0;
        for (job, row) in rx {
            pending.insert(job, row);
            while let Some(row) = pending.remove(&turn) {
                let line = serde_json::to_string(&row)? + "\n";
                results
                    .write_all(line.as_bytes())
                    .and_then(|_| results.flush())
                    .map_err(|e| LabError::io(&res_path, e))?;
                idx.write_all(index_line(&row, offset, line.len() as u64).as_bytes())
                    .map_err(|e| LabError::io(&idx_path, e))?;
                offset += line.len() as u64;
                all.insert((row.depth, row.trial), row);
                turn += 1;
            }
        }
        Ok(())
    })?;

    Ok(RunReport {
        results: all.into_values().collect(),
        computed: missing.len(),
        reused,
    })
}

/// Reads a results file, rejecting malformed lines.
pub fn read_results(path: &Path) -> Result<Vec<TrialResult>> {
    let file = File::open(path).map_err(|e| LabError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LabError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line)
            .map_err(|e| LabError::Input(format!("{}:{}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}
