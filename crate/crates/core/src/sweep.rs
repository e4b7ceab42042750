//! Closed/open-loop comparisons over a grid of depression parameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{selection_indicator_from_finals, SampleStats};
use crate::embodiment::{EventKind, LoopMode};
use crate::error::{Error, Result};
use crate::experiment::{run_experiment, ExperimentSpec, TaskConfig, WeightSnapshot};
use crate::plasticity::{stdp_integral, StdpParams};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Closed,
    Open,
}

impl Condition {
    pub const BOTH: [Condition; 2] = [Condition::Closed, Condition::Open];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Closed => "closed",
            Condition::Open => "open",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "closed" => Some(Condition::Closed),
            "open" => Some(Condition::Open),
            _ => None,
        }
    }

    fn mode(self) -> LoopMode {
        match self {
            Condition::Closed => LoopMode::Closed,
            Condition::Open => LoopMode::Open,
        }
    }

    fn code(self) -> u64 {
        match self {
            Condition::Closed => 1,
            Condition::Open => 2,
        }
    }
}

/// One `(a_ltd, tau_ltd)` grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub a_ltd: f64,
    pub tau_ltd: f64,
}

fn default_a_ltd() -> Vec<f64> {
    (0..=14).map(|k| 0.8 + 0.05 * k as f64).map(round_grid).collect()
}

fn default_tau_ltd() -> Vec<f64> {
    (20..=30).map(f64::from).collect()
}

fn default_repeats() -> usize {
    20
}

fn round_grid(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default = "default_a_ltd")]
    pub a_ltd: Vec<f64>,
    #[serde(default = "default_tau_ltd")]
    pub tau_ltd: Vec<f64>,
    /// Explicit cells; when non-empty they replace the product grid.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<Cell>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            a_ltd: default_a_ltd(),
            tau_ltd: default_tau_ltd(),
            cells: Vec::new(),
            repeats: default_repeats(),
        }
    }
}

/// A grid of plasticity cells sharing one base experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub sweep: SweepGrid,
    pub base: ExperimentSpec,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cells().is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if self.sweep.repeats == 0 {
            return Err(Error::Config("sweep repeats must be >= 1".into()));
        }
        if !matches!(self.base.task, TaskConfig::Loop(_)) {
            return Err(Error::Config("sweeps need a loop task".into()));
        }
        self.base.validate()
    }

    /// Cells in row-major order (`a_ltd` outer).
    pub fn cells(&self) -> Vec<Cell> {
        if !self.sweep.cells.is_empty() {
            return self.sweep.cells.clone();
        }
        self.sweep
            .a_ltd
            .iter()
            .flat_map(|&a_ltd| {
                self.sweep
                    .tau_ltd
                    .iter()
                    .map(move |&tau_ltd| Cell { a_ltd, tau_ltd })
            })
            .collect()
    }
}

/// Seed of one run, a function of its identity only.
pub fn run_seed(base_seed: u64, condition: Condition, cell: Cell, repeat: usize) -> u64 {
    derive_seed(
        base_seed,
        &[
            condition.code(),
            cell.a_ltd.to_bits(),
            cell.tau_ltd.to_bits(),
            repeat as u64,
        ],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub condition: Condition,
    pub repeat: usize,
    pub seed: u64,
    pub n_removals: usize,
    pub snapshots: Vec<WeightSnapshot>,
}

impl RunRecord {
    pub fn initial_weight(&self) -> f64 {
        self.snapshots.first().map_or(f64::NAN, |s| s.mean_input_weight)
    }

    pub fn final_weight(&self) -> f64 {
        self.snapshots.last().map_or(f64::NAN, |s| s.mean_input_weight)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub stdp_integral: f64,
    pub closed: Vec<RunRecord>,
    pub open: Vec<RunRecord>,
    /// Mean selection indicator; `None` when the cell failed.
    pub mean_si: Option<f64>,
    pub error: Option<String>,
}

impl CellResult {
    pub fn finals(&self, condition: Condition) -> Vec<f64> {
        self.runs(condition).iter().map(RunRecord::final_weight).collect()
    }

    pub fn initials(&self, condition: Condition) -> Vec<f64> {
        self.runs(condition).iter().map(RunRecord::initial_weight).collect()
    }

    pub fn runs(&self, condition: Condition) -> &[RunRecord] {
        match condition {
            Condition::Closed => &self.closed,
            Condition::Open => &self.open,
        }
    }

    /// Selection indicator of each repeat's closed/open pair.
    pub fn paired_si(&self) -> Vec<f64> {
        self.closed
            .iter()
            .zip(&self.open)
            .map(|(c, o)| c.final_weight() - o.final_weight())
            .collect()
    }

    pub fn final_stats(&self, condition: Condition) -> Option<SampleStats> {
        SampleStats::of(&self.finals(condition))
    }
}

struct Job {
    cell_index: usize,
    condition: Condition,
    repeat: usize,
    spec: ExperimentSpec,
}

/// Runs every cell of `sweep`. `jobs` bounds the worker count (0 lets the
/// pool decide). Results do not depend on scheduling.
pub fn run_parameter_sweep(sweep: &SweepSpec, jobs: usize) -> Result<Vec<CellResult>> {
    sweep.validate()?;
    run_cells(&sweep.base, &sweep.cells(), sweep.sweep.repeats, jobs)
}

pub fn run_cells(
    base: &ExperimentSpec,
    cells: &[Cell],
    repeats: usize,
    jobs: usize,
) -> Result<Vec<CellResult>> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be >= 1".into()));
    }
    base.validate()?;
    let mut results: Vec<CellResult> = Vec::with_capacity(cells.len());
    let mut work = Vec::new();
    for (cell_index, &cell) in cells.iter().enumerate() {
        let stdp = StdpParams::new(
            base.plasticity.stdp.a_ltp,
            cell.a_ltd,
            base.plasticity.stdp.tau_ltp,
            cell.tau_ltd,
        );
        let mut result = CellResult {
            cell,
            stdp_integral: f64::NAN,
            closed: Vec::new(),
            open: Vec::new(),
            mean_si: None,
            error: None,
        };
        match stdp {
            Ok(stdp) => {
                result.stdp_integral = stdp_integral(&stdp);
                for condition in Condition::BOTH {
                    for repeat in 0..repeats {
                        let mut spec = base.with_mode(condition.mode());
                        spec.plasticity.stdp = stdp;
                        spec.seed = run_seed(base.seed, condition, cell, repeat);
                        work.push(Job {
                            cell_index,
                            condition,
                            repeat,
                            spec,
                        });
                    }
                }
            }
            Err(e) => result.error = Some(e.to_string()),
        }
        results.push(result);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<(usize, Result<RunRecord>)> = pool.install(|| {
        work.par_iter()
            .map(|job| (job.cell_index, run_one(job)))
            .collect()
    });

    for (cell_index, outcome) in outcomes {
        let cell = &mut results[cell_index];
        match outcome {
            Ok(rec) => match rec.condition {
                Condition::Closed => cell.closed.push(rec),
                Condition::Open => cell.open.push(rec),
            },
            Err(e) => {
                cell.error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    for cell in &mut results {
        if cell.error.is_none() {
            cell.mean_si = Some(selection_indicator_from_finals(
                &cell.finals(Condition::Closed),
                &cell.finals(Condition::Open),
            )?);
        }
    }
    Ok(results)
}

fn run_one(job: &Job) -> Result<RunRecord> {
    let r = run_experiment(&job.spec)?;
    if let Some(f) = r.fault {
        return Err(Error::NumericFault(f));
    }
    Ok(RunRecord {
        condition: job.condition,
        repeat: job.repeat,
        seed: job.spec.seed,
        n_removals: r
            .events
            .iter()
            .filter(|e| e.kind == EventKind::RemovalOn)
            .count(),
        snapshots: r.snapshots,
    })
}
