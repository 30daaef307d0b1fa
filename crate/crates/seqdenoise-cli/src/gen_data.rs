//! Dataset generation: train/test solution splits plus masked test
//! instances per difficulty (Sudoku), or a training image set (Even Pixels).

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::Rng;

use seqdenoise::bench::evenpixels::{self, EvenPixelsImage};
use seqdenoise::bench::sudoku::{self, Difficulty, SudokuGrid, ALL_DIFFICULTIES};

use crate::config::{Benchmark, ExperimentConfig};
use crate::output::{stream_rng, write_manifest};

pub fn train_grids_path(cfg: &ExperimentConfig) -> std::path::PathBuf {
    cfg.data_dir.join("train.grids")
}

pub fn test_grids_path(cfg: &ExperimentConfig) -> std::path::PathBuf {
    cfg.data_dir.join("test.grids")
}

pub fn masked_path(cfg: &ExperimentConfig, difficulty: Difficulty) -> std::path::PathBuf {
    cfg.data_dir.join(format!("test_{difficulty}.grids"))
}

pub fn train_images_path(cfg: &ExperimentConfig) -> std::path::PathBuf {
    cfg.data_dir.join("train.images")
}

/// Disjoint solution sets. Box size 2 splits the full enumeration; larger
/// boards sample fresh solutions and deduplicate.
fn solution_split(cfg: &ExperimentConfig) -> Result<(Vec<SudokuGrid>, Vec<SudokuGrid>)> {
    let total = cfg.train_solutions + cfg.test_solutions;
    let mut rng = stream_rng(cfg.seed, "solutions", 0);
    let mut all = if cfg.boxn == 2 {
        let mut all = sudoku::enumerate_solutions(2)?;
        if total > all.len() {
            bail!(
                "train_solutions + test_solutions = {total} exceeds the {} distinct 4x4 grids",
                all.len()
            );
        }
        all.shuffle(&mut rng);
        all.truncate(total);
        all
    } else {
        let mut seen = std::collections::HashSet::new();
        let mut all = Vec::with_capacity(total);
        while all.len() < total {
            let g = sudoku::generate_solution(&mut rng, cfg.boxn)?;
            if seen.insert(g.cells().to_vec()) {
                all.push(g);
            }
        }
        all
    };
    let test = all.split_off(cfg.train_solutions);
    Ok((all, test))
}

fn mask_solution(solution: &SudokuGrid, mask: &[bool]) -> SudokuGrid {
    let mut puzzle = SudokuGrid::empty(solution.boxn()).unwrap();
    for (i, &keep) in mask.iter().enumerate() {
        if keep {
            puzzle.set(i, solution.get(i));
        }
    }
    puzzle
}

pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.data_dir)
        .with_context(|| format!("creating {}", cfg.data_dir.display()))?;
    match cfg.benchmark()? {
        Benchmark::Sudoku => {
            let (train, test) = solution_split(cfg)?;
            if test.is_empty() && cfg.instances > 0 {
                bail!("cannot draw masked instances from an empty test split");
            }
            sudoku::write_grids(&train_grids_path(cfg), &train)?;
            sudoku::write_grids(&test_grids_path(cfg), &test)?;
            eprintln!("wrote {} train / {} test solutions", train.len(), test.len());
            for difficulty in ALL_DIFFICULTIES {
                let instances: Vec<SudokuGrid> = (0..cfg.instances)
                    .map(|i| {
                        let mut rng =
                            stream_rng(cfg.seed, &format!("mask-{difficulty}"), i as u64);
                        let solution = &test[rng.gen_range(0..test.len())];
                        let mask = sudoku::sample_mask(&mut rng, cfg.boxn, difficulty)?;
                        Ok(mask_solution(solution, &mask))
                    })
                    .collect::<Result<_>>()?;
                sudoku::write_grids(&masked_path(cfg, difficulty), &instances)?;
                eprintln!("wrote {} {difficulty} instances", instances.len());
            }
        }
        Benchmark::EvenPixels => {
            let mut rng = stream_rng(cfg.seed, "images", 0);
            let images: Vec<EvenPixelsImage> = (0..cfg.train_images)
                .map(|_| EvenPixelsImage::sample(&mut rng, cfg.width, cfg.height))
                .collect::<seqdenoise::error::Result<_>>()?;
            evenpixels::write_images(&train_images_path(cfg), &images)?;
            eprintln!("wrote {} train images", images.len());
        }
    }
    write_manifest(&cfg.data_dir, "gen-data", cfg)
}
