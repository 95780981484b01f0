//! Many cycles across a worker pool, committed to an append-only store in
//! cycle-index order with a resumable cursor.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cycle::{run_cycle, CycleEndpoints, CycleOptions};
use super::SynthesizedTask;
use crate::jsonl::{self, JsonlError};
use crate::par::{map_range, with_workers};
use crate::pools::{cycle_id, derive_seed, sample_config, ConfigBounds, ExemplarPool, SeedPool};
use crate::tools::Registry;

#[derive(Debug, thiserror::Error)]
pub enum BatchError {
    #[error(transparent)]
    Store(#[from] JsonlError),
    #[error("cursor file {path}: {reason}")]
    Cursor { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Cursor {
    next_cycle: u64,
}

/// Record of a cycle that produced no task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedCycle {
    pub cycle_id: String,
    pub error: String,
}

/// Directory holding `tasks.jsonl`, `dropped.jsonl` and `cursor.json`.
#[derive(Debug, Clone)]
pub struct TaskStore {
    dir: PathBuf,
}

impl TaskStore {
    pub fn open(dir: &Path) -> Result<Self, BatchError> {
        std::fs::create_dir_all(dir).map_err(|e| BatchError::Cursor {
            path: dir.display().to_string(),
            reason: e.to_string(),
        })?;
        Ok(TaskStore { dir: dir.to_path_buf() })
    }

    pub fn tasks_path(&self) -> PathBuf {
        self.dir.join("tasks.jsonl")
    }

    pub fn dropped_path(&self) -> PathBuf {
        self.dir.join("dropped.jsonl")
    }

    pub fn cursor_path(&self) -> PathBuf {
        self.dir.join("cursor.json")
    }

    pub fn read_tasks(&self) -> Result<Vec<SynthesizedTask>, BatchError> {
        if !self.tasks_path().exists() {
            return Ok(Vec::new());
        }
        Ok(jsonl::read_file(&self.tasks_path())?)
    }

    fn committed_ids(&self) -> Result<HashSet<String>, BatchError> {
        let mut ids = HashSet::new();
        for path in [self.tasks_path(), self.dropped_path()] {
            if path.exists() {
                let rows: Vec<serde_json::Value> = jsonl::read_file(&path)?;
                ids.extend(rows.iter().filter_map(|r| r["cycle_id"].as_str().map(str::to_string)));
            }
        }
        Ok(ids)
    }

    fn read_cursor(&self) -> Result<u64, BatchError> {
        let path = self.cursor_path();
        if !path.exists() {
            return Ok(0);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| self.cursor_err(e.to_string()))?;
        let c: Cursor = serde_json::from_str(&text).map_err(|e| self.cursor_err(e.to_string()))?;
        Ok(c.next_cycle)
    }

    fn write_cursor(&self, next_cycle: u64) -> Result<(), BatchError> {
        let tmp = self.dir.join("cursor.json.tmp");
        let body = serde_json::to_string(&Cursor { next_cycle }).expect("cursor serializes");
        std::fs::write(&tmp, body)
            .and_then(|_| std::fs::rename(&tmp, self.cursor_path()))
            .map_err(|e| self.cursor_err(e.to_string()))
    }

    fn cursor_err(&self, reason: String) -> BatchError {
        BatchError::Cursor {
            path: self.cursor_path().display().to_string(),
            reason,
        }
    }
}

/// Everything a batch of cycles shares.
pub struct SynthesisRun<'a> {
    pub registry: &'a Registry,
    pub seeds: &'a SeedPool,
    pub exemplars: &'a ExemplarPool,
    pub bounds: ConfigBounds,
    pub options: CycleOptions,
    pub global_seed: u64,
    pub endpoints: CycleEndpoints<'a>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SynthesisSummary {
    pub resumed_from: u64,
    pub synthesized: usize,
    pub dropped: usize,
    pub skipped_existing: usize,
}

impl SynthesisRun<'_> {
    /// Samples and runs cycle `index`. The outcome depends only on the run
    /// and the index.
    pub fn run_one(&self, index: u64) -> Result<SynthesizedTask, String> {
        let id = cycle_id(index);
        let config = sample_config(
            self.seeds,
            self.exemplars,
            self.registry,
            &self.bounds,
            derive_seed(self.global_seed, index),
            &id,
        )
        .map_err(|e| e.to_string())?;
        run_cycle(&config, &self.endpoints, self.registry, &self.options).map_err(|e| e.to_string())
    }
}

/// Runs cycles `[cursor, n_cycles)` on `workers` threads. Results are
/// committed in index order, and the cursor advances after each commit, so
/// an interrupted run resumes without duplicating a cycle id.
pub fn synthesize(
    run: &SynthesisRun<'_>,
    store: &TaskStore,
    n_cycles: u64,
    workers: usize,
) -> Result<SynthesisSummary, BatchError> {
    let start = store.read_cursor()?;
    let committed = store.committed_ids()?;
    let mut summary = SynthesisSummary {
        resumed_from: start,
        ..SynthesisSummary::default()
    };
    let batch = (workers.max(1) * 4) as u64;
    with_workers(workers, |exec| -> Result<(), BatchError> {
        let mut lo = start;
        while lo < n_cycles {
            let hi = (lo + batch).min(n_cycles);
            let results = map_range(exec, (hi - lo) as usize, |j| {
                let index = lo + j as u64;
                if committed.contains(&cycle_id(index)) {
                    None
                } else {
                    Some(run.run_one(index))
                }
            });
            for (j, outcome) in results.into_iter().enumerate() {
                let index = lo + j as u64;
                match outcome {
                    None => summary.skipped_existing += 1,
                    Some(Ok(task)) => {
                        jsonl::append_record(&store.tasks_path(), &task)?;
                        summary.synthesized += 1;
                    }
                    Some(Err(error)) => {
                        tracing::warn!(cycle = index, "dropping cycle: {error}");
                        let dropped = DroppedCycle {
                            cycle_id: cycle_id(index),
                            error,
                        };
                        jsonl::append_record(&store.dropped_path(), &dropped)?;
                        summary.dropped += 1;
                    }
                }
                store.write_cursor(index + 1)?;
            }
            lo = hi;
        }
        Ok(())
    })?;
    Ok(summary)
}
