//! Solver comparison on seeded synthetic frame problems.

use std::path::Path;

use crowdtrack_core::instances::{frame_instance, FrameInstanceConfig};
use crowdtrack_core::solver::{
    brute_force_solve, fw_solve_with_clock, SolverConfig, SolverError, SolverTrace, Variant, MAX_ENUMERATION,
};

use crate::clock::MonotonicClock;
use crate::formats::FormatError;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub seeds: u64,
    pub candidates_per_target: usize,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Keep per-iteration traces in the rows (slows the solves down).
    pub keep_traces: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![25, 50, 100, 200],
            seeds: 5,
            candidates_per_target: 30,
            epsilon: 0.01,
            max_iterations: 5000,
            keep_traces: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub size: usize,
    pub seed: u64,
    pub variant: Variant,
    pub variables: usize,
    pub iterations: usize,
    pub wall_time_us: u64,
    pub final_objective: f64,
    pub final_gap: f64,
    pub converged: bool,
    /// Objective of the rounded assignment.
    pub rounded_objective: f64,
    pub trace: Option<SolverTrace>,
}

/// One row per size, seed and variant. The exhaustive solver runs only when
/// the vertex count is within [`MAX_ENUMERATION`]. Runs are sequential.
pub fn bench_solvers(cfg: &BenchConfig) -> Result<Vec<BenchRow>, SolverError> {
    let clock = MonotonicClock::new();
    let mut rows = Vec::new();
    for &size in &cfg.sizes {
        for seed in 0..cfg.seeds {
            let p = frame_instance(seed, &FrameInstanceConfig::new(size, cfg.candidates_per_target));
            for variant in Variant::ITERATIVE {
                let sc = SolverConfig {
                    variant,
                    epsilon: cfg.epsilon,
                    max_iterations: cfg.max_iterations,
                    record_iterations: cfg.keep_traces,
                    ..SolverConfig::default()
                };
                let r = fw_solve_with_clock(&p, &sc, None, &clock)?;
                rows.push(BenchRow {
                    size,
                    seed,
                    variant,
                    variables: p.len(),
                    iterations: r.trace.iterations,
                    wall_time_us: r.trace.wall_time_us,
                    final_objective: r.trace.final_objective,
                    final_gap: r.trace.final_gap,
                    converged: r.converged,
                    rounded_objective: p.assignment_objective(&r.rounded),
                    trace: cfg.keep_traces.then_some(r.trace),
                });
            }
            if p.layout().vertex_count() <= MAX_ENUMERATION {
                let start = std::time::Instant::now();
                let (a, f) = brute_force_solve(&p, false)?;
                rows.push(BenchRow {
                    size,
                    seed,
                    variant: Variant::Exact,
                    variables: p.len(),
                    iterations: 0,
                    wall_time_us: start.elapsed().as_micros() as u64,
                    final_objective: f,
                    final_gap: 0.0,
                    converged: true,
                    rounded_objective: p.assignment_objective(&a),
                    trace: None,
                });
            }
        }
    }
    Ok(rows)
}

pub const BENCH_HEADER: [&str; 10] = [
    "size",
    "seed",
    "variant",
    "variables",
    "iterations",
    "wall_time_us",
    "final_objective",
    "final_gap",
    "converged",
    "rounded_objective",
];

pub fn write_bench(path: &Path, rows: &[BenchRow]) -> Result<(), FormatError> {
    let err = |source| FormatError::Csv { path: path.into(), source };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(BENCH_HEADER).map_err(err)?;
    for r in rows {
        w.write_record([
            r.size.to_string(),
            r.seed.to_string(),
            r.variant.name().to_string(),
            r.variables.to_string(),
            r.iterations.to_string(),
            r.wall_time_us.to_string(),
            format!("{:.12e}", r.final_objective),
            format!("{:.6e}", r.final_gap),
            r.converged.to_string(),
            format!("{:.12e}", r.rounded_objective),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| err(e.into()))
}
