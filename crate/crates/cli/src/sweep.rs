//! Grids over `c` and `s`: every cell is validated before any runs.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::experiment::{execute_prepared, Outcome, Prepared};
use crate::ConfigError;

/// Environment variable holding the number of worker threads for a sweep.
pub const THREADS_ENV: &str = "PDHG_SWEEP_THREADS";

pub const SWEEP_HEADER: [&str; 9] =
    ["cell", "c", "s", "steps", "termination", "rate_slope", "max_contraction", "final_dist_x_sq", "all_passed"];

#[derive(Debug, Clone)]
pub struct Cell {
    pub index: usize,
    pub c: Option<f64>,
    pub s: Option<f64>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub dir: PathBuf,
    pub outcome: Outcome,
}

/// Cartesian product of the grid, each cell resolved against the shared instance.
pub fn plan(config: &ExperimentConfig, prepared: &Prepared) -> Result<Vec<Cell>, ConfigError> {
    let grid = config.sweep.clone().unwrap_or_default();
    let cs: Vec<Option<f64>> = if grid.c.is_empty() { vec![None] } else { grid.c.iter().copied().map(Some).collect() };
    let ss: Vec<Option<f64>> = if grid.s.is_empty() { vec![None] } else { grid.s.iter().copied().map(Some).collect() };
    let mut cells = Vec::with_capacity(cs.len() * ss.len());
    for &c in &cs {
        for &s in &ss {
            let index = cells.len();
            let resolved = config.with_overrides(c, s, &prepared.instance).map_err(|e| ConfigError::Cell {
                index,
                c,
                s,
                source: Box::new(e),
            })?;
            cells.push(Cell { index, c, s, config: resolved });
        }
    }
    Ok(cells)
}

pub fn thread_count() -> Result<usize, ConfigError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(ConfigError::Invalid {
                key: THREADS_ENV.into(),
                reason: format!("must be a positive integer, got {v:?}"),
            }),
        },
    }
}

/// Run every cell (in parallel across `threads` workers) and write the
/// aggregate `sweep.csv`. Cells write into `cell-<index>` subdirectories.
pub fn sweep(config: &ExperimentConfig, threads: usize) -> Result<(Vec<CellResult>, PathBuf), ConfigError> {
    let prepared = Prepared::new(config)?;
    let cells = plan(config, &prepared)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ConfigError::Io(format!("thread pool: {e}")))?;
    let results: Vec<Result<CellResult, ConfigError>> = pool.install(|| {
        cells
            .into_par_iter()
            .map(|cell| {
                let dir = config.output.join(format!("cell-{}", cell.index));
                let (outcome, _) = execute_prepared(&cell.config, &prepared, &dir, false)?;
                Ok(CellResult { cell, dir, outcome })
            })
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let path = config.output.join("sweep.csv");
    let io = |e: csv::Error| ConfigError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(io)?;
    w.write_record(SWEEP_HEADER).map_err(io)?;
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.16e}")).unwrap_or_default();
    for r in &results {
        let s = &r.outcome.summary;
        w.write_record([
            r.cell.index.to_string(),
            opt(s.c),
            format!("{:.16e}", s.s),
            s.steps.to_string(),
            s.termination.clone(),
            opt(s.rate_slope),
            opt(s.max_contraction),
            format!("{:.16e}", s.final_dist_x_sq),
            s.all_passed.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    Ok((results, path))
}
