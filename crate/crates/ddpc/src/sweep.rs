//! Parallel sweep over training cells.
//!
//! Cells are scheduled on a rayon pool. Finished cells go through a single
//! collector that releases them in canonical order, so the output does not
//! depend on the thread count or on scheduling.

use std::collections::BTreeMap;
use std::sync::mpsc;

use ddpc_core::bench::{cells, oracle_plan, run_cell, ControllerKind, ExperimentConfig, RunResult, RunStatus};
use rayon::prelude::*;

use crate::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub results: Vec<RunResult>,
    /// `(N_bar, train index, message)` for cells whose training failed.
    pub failed_cells: Vec<(usize, usize, String)>,
}

impl SweepOutcome {
    pub fn any_infeasible(&self) -> bool {
        self.results.iter().any(|r| r.status == RunStatus::Infeasible)
    }
}

/// Placeholder rows, in `evaluate_cell` order, for a cell that could not be trained.
fn failed_rows(config: &ExperimentConfig, total: usize, train_index: usize) -> Vec<RunResult> {
    let train_seed = config.train_seed(total, train_index);
    let mut out = Vec::new();
    for k in 0..config.noise_realizations {
        for &c in &config.controllers {
            let grid: Vec<Option<f64>> = if c == ControllerKind::Deepc {
                config.lambda2.iter().map(|&l| Some(l)).collect()
            } else {
                vec![None]
            };
            for lambda2 in grid {
                out.push(RunResult {
                    controller: c,
                    total_samples: total,
                    lambda2,
                    train_index,
                    noise_index: k,
                    train_seed,
                    noise_seed: config.noise_seed(k),
                    j_star: f64::NAN,
                    j_oracle: f64::NAN,
                    slack_ms: f64::NAN,
                    status: RunStatus::Error,
                });
            }
        }
    }
    out
}

/// Runs the full factorial. `sink` sees each cell's rows in canonical order
/// as soon as all earlier cells are done.
pub fn run_sweep<F>(config: &ExperimentConfig, jobs: Option<usize>, mut sink: F) -> Result<SweepOutcome>
where
    F: FnMut(&[RunResult]) -> Result<()>,
{
    config.validate()?;
    let oracle = oracle_plan(config)?;
    let grid = cells(config);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = jobs {
        builder = builder.num_threads(k.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let (tx, rx) = mpsc::channel();
    let mut outcome = SweepOutcome::default();
    std::thread::scope(|scope| -> Result<()> {
        let grid = &grid;
        let oracle = &oracle;
        scope.spawn(move || {
            pool.install(|| {
                grid.par_iter().enumerate().for_each_with(tx, |tx, (i, &(total, t))| {
                    let _ = tx.send((i, run_cell(config, oracle, total, t)));
                });
            });
        });
        let mut pending = BTreeMap::new();
        let mut next = 0;
        for (i, res) in rx {
            pending.insert(i, res);
            while let Some(res) = pending.remove(&next) {
                let (total, t) = grid[next];
                let rows = match res {
                    Ok(rows) => rows,
                    Err(e) => {
                        eprintln!("cell N_bar={total} train={t} failed: {e}");
                        outcome.failed_cells.push((total, t, e.to_string()));
                        failed_rows(config, total, t)
                    }
                };
                sink(&rows)?;
                outcome.results.extend(rows);
                next += 1;
            }
        }
        Ok(())
    })?;
    Ok(outcome)
}
