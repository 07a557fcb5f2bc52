//! Ablation grid over {acceleration, conditioning, reflow} and the velocity
//! scale `h`.
//!
//! The six labeled configurations:
//!
//! | cell | acceleration | ivc | reflow | h   |
//! |------|--------------|-----|--------|-----|
//! | A    | off          | -   | off    | -   | (1-rectified flow)
//! | B    | off          | -   | on     | -   | (2-rectified flow)
//! | C    | on           | off | on     | 1.5 |
//! | D    | on           | on  | on     | 0.5 |
//! | E    | on           | on  | on     | 1.0 |
//! | F    | on           | on  | on     | 1.5 |
//!
//! plus `H05/H10/H15/H20` sweep rows (acceleration + ivc + reflow at each
//! `h`). Every cell is a full pipeline with its own output subtree; the
//! combined ledger keeps one row per metric per cell, in fixed cell order,
//! so reruns are byte-identical.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::config::ExperimentConfig;
use crate::pipeline::Pipeline;
use crate::CliError;

pub const LEDGER_HEADER: &str = "cell,name,value,ci,n,config";

/// The default grid: labeled cells A-F plus the h sweep.
pub fn default_grid(base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
    let mut cells = Vec::new();
    let cell = |label: &str,
                acceleration: bool,
                ivc: bool,
                reflow: bool,
                h: Option<f64>|
     -> (String, ExperimentConfig) {
        let mut cfg = base.clone();
        cfg.ablation.acceleration_on = acceleration;
        cfg.ablation.ivc_on = ivc;
        cfg.ablation.reflow_on = reflow;
        if let Some(h) = h {
            cfg.flow.h = h;
        }
        (label.to_string(), cfg)
    };
    cells.push(cell("A", false, false, false, Some(1.0)));
    cells.push(cell("B", false, false, true, Some(1.0)));
    cells.push(cell("C", true, false, true, Some(1.5)));
    cells.push(cell("D", true, true, true, Some(0.5)));
    cells.push(cell("E", true, true, true, Some(1.0)));
    cells.push(cell("F", true, true, true, Some(1.5)));
    for (label, h) in [("H05", 0.5), ("H10", 1.0), ("H15", 1.5), ("H20", 2.0)] {
        cells.push(cell(label, true, true, true, Some(h)));
    }
    cells
}

/// Runs every cell (in parallel up to `jobs`), then writes the combined
/// ledger in fixed cell order. A failed cell is recorded and the grid
/// continues.
pub fn run_ablation_grid(
    cells: Vec<(String, ExperimentConfig)>,
    out_dir: &Path,
    force: bool,
    jobs: usize,
) -> Result<PathBuf, CliError> {
    let jobs = jobs.max(1);
    let n_cells = cells.len();
    let queue: Mutex<VecDeque<(usize, String, ExperimentConfig)>> = Mutex::new(
        cells
            .into_iter()
            .enumerate()
            .map(|(i, (label, cfg))| (i, label, cfg))
            .collect(),
    );
    let results: Mutex<Vec<Option<(String, Result<Vec<String>, String>)>>> =
        Mutex::new((0..n_cells).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..jobs.min(n_cells) {
            scope.spawn(|| loop {
                let job = queue.lock().expect("queue lock").pop_front();
                let Some((index, label, cfg)) = job else {
                    break;
                };
                let outcome = run_cell(&cfg, out_dir, force);
                results.lock().expect("results lock")[index] = Some((label, outcome));
            });
        }
    });

    let mut ledger = String::from(LEDGER_HEADER);
    ledger.push('\n');
    for slot in results.into_inner().expect("results lock") {
        let (label, outcome) = slot.expect("every cell ran");
        match outcome {
            Ok(rows) => {
                for row in rows {
                    ledger.push_str(&format!("{label},{row}\n"));
                }
            }
            Err(message) => {
                let clean = message.replace([',', '\n'], ";");
                ledger.push_str(&format!("{label},cell_failed,0,0,0,{clean}\n"));
            }
        }
    }
    let path = out_dir.join("ablation.csv");
    std::fs::write(&path, ledger).map_err(CliError::io("writing ablation ledger"))?;
    Ok(path)
}

/// One pipeline run; returns the cell's metric rows without the header.
fn run_cell(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    force: bool,
) -> Result<Vec<String>, String> {
    let pipeline = Pipeline::new(cfg.clone(), out_dir, force)
        .map_err(|e| e.to_string())?
        .quiet();
    let ledger = pipeline.ensure_metrics().map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(ledger).map_err(|e| e.to_string())?;
    Ok(text.lines().skip(1).map(str::to_string).collect())
}
