//! Reference constructive solvers over freshly generated puzzles, one
//! metrics row per instance and a per-group summary.

use anyhow::Result;
use rayon::prelude::*;

use seqdenoise::bench::sudoku::{
    generate_solution, oracle_solve, sample_mask, OracleOrder, SudokuGrid, ALL_DIFFICULTIES,
};

use crate::config::ExperimentConfig;
use crate::output::{stream_rng, write_manifest, write_metrics, MetricsRow};

const ORDERS: [OracleOrder; 2] = [OracleOrder::Random, OracleOrder::Greedy];

pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    let dir = cfg.run_dir("oracle");
    write_manifest(&dir, "oracle", cfg)?;

    let mut rows = Vec::with_capacity(ALL_DIFFICULTIES.len() * ORDERS.len() * cfg.instances);
    for difficulty in ALL_DIFFICULTIES {
        for order in ORDERS {
            let batch: Vec<MetricsRow> = (0..cfg.instances)
                .into_par_iter()
                .map(|i| {
                    let mut rng =
                        stream_rng(cfg.seed, &format!("orc-{order}-{difficulty}"), i as u64);
                    let solution = generate_solution(&mut rng, cfg.boxn)?;
                    let mask = sample_mask(&mut rng, cfg.boxn, difficulty)?;
                    let mut puzzle = SudokuGrid::empty(cfg.boxn)?;
                    for (idx, &keep) in mask.iter().enumerate() {
                        if keep {
                            puzzle.set(idx, solution.get(idx));
                        }
                    }
                    let solved = oracle_solve(&mut rng, &puzzle, order);
                    let accuracy = solved.is_valid() && solved.matches_clues(&solution, &mask);
                    Ok(MetricsRow {
                        instance_id: i,
                        difficulty: difficulty.to_string(),
                        mode: "oracle".into(),
                        order: order.to_string(),
                        overlap: 0.0,
                        steps: 0,
                        accuracy: accuracy as u8,
                        l1: solved.l1_error(),
                        eval_count: 0,
                        seed: cfg.seed,
                    })
                })
                .collect::<seqdenoise::error::Result<_>>()?;
            let hits: usize = batch.iter().map(|r| r.accuracy as usize).sum();
            eprintln!(
                "{difficulty} {order}: accuracy {:.3} over {} instances",
                hits as f64 / batch.len() as f64,
                batch.len()
            );
            rows.extend(batch);
        }
    }
    write_metrics(&dir.join("metrics.csv"), &rows)?;
    eprintln!("wrote {}", dir.join("metrics.csv").display());
    Ok(())
}
