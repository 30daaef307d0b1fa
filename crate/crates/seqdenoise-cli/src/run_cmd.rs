//! Inference over test instances: one metrics row per instance, optional
//! frame dumps, and an overlap-grid sweep variant.

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use seqdenoise::bench::evenpixels::EvenPixelsImage;
use seqdenoise::bench::sudoku::{self, SudokuGrid};
use seqdenoise::denoiser::{Corpus, Denoiser, ExactDenoiser, NetDenoiser, NetParams};
use seqdenoise::policy::{plan_schedule, run_inference, InferenceConfig, Trace};
use seqdenoise::types::VariableSet;

use crate::config::{Benchmark, ExperimentConfig};
use crate::gen_data::masked_path;
use crate::output::{
    even_pixels_frame_pgm, even_pixels_frame_text, mode_name, stream_rng, sudoku_frame_pgm,
    sudoku_frame_text, write_manifest, write_metrics, MetricsRow,
};
use crate::train_cmd::load_train_data;

pub fn build_denoiser(cfg: &ExperimentConfig) -> Result<Box<dyn Denoiser + Sync>> {
    Ok(match cfg.denoiser.as_str() {
        "net" => {
            let path = cfg.checkpoint_path();
            let params = NetParams::load(&path)
                .with_context(|| format!("loading checkpoint {}", path.display()))?;
            let shape = params.shape();
            if shape.n != cfg.n()? || shape.dim != cfg.dim()? {
                bail!(
                    "checkpoint is {}x{} but the configured benchmark needs {}x{}",
                    shape.n,
                    shape.dim,
                    cfg.n()?,
                    cfg.dim()?
                );
            }
            Box::new(NetDenoiser::new(params, cfg.schedule()?))
        }
        "exact" => {
            let corpus = Corpus::from_sets(&load_train_data(cfg)?)?;
            Box::new(ExactDenoiser::new(corpus, cfg.schedule()?))
        }
        other => bail!("unknown denoiser '{other}' (expected net or exact)"),
    })
}

struct InstanceResult {
    row: MetricsRow,
    frames: Vec<(usize, String, Vec<u8>)>,
}

fn inference_config(cfg: &ExperimentConfig) -> Result<InferenceConfig> {
    Ok(InferenceConfig {
        schedule: cfg.schedule()?,
        eta: cfg.eta,
        variance_mode: cfg.variance_mode()?,
        frame_every: cfg.frame_every,
    })
}

/// Frames rendered as (step, text, graymap); cells count as resolved once
/// their level reaches 0.
fn render_frames(
    trace: &Trace,
    render: impl Fn(&VariableSet, &[bool]) -> Result<(String, Vec<u8>)>,
) -> Result<Vec<(usize, String, Vec<u8>)>> {
    trace
        .frames
        .iter()
        .map(|(step, x)| {
            let resolved: Vec<bool> = trace.rows[*step].t.iter().map(|&t| t == 0.0).collect();
            let (text, gray) = render(x, &resolved)?;
            Ok((*step, text, gray))
        })
        .collect()
}

fn eval_sudoku_instance(
    cfg: &ExperimentConfig,
    den: &dyn Denoiser,
    puzzle: &SudokuGrid,
    overlap: f64,
    instance_id: usize,
) -> Result<InstanceResult> {
    let mut rng = stream_rng(cfg.seed, "run", instance_id as u64);
    let (values, observed) = sudoku::encode_clues(puzzle)?;
    let n_active = observed.iter().filter(|&&o| !o).count();
    let plan = plan_schedule(n_active.max(1), cfg.steps_total, overlap)?;
    let policy = cfg.order_policy(&mut rng)?;
    let (out, trace) = match run_inference(
        &mut rng,
        &plan,
        &policy,
        den,
        &inference_config(cfg)?,
        &observed,
        &values,
    ) {
        Ok(r) => r,
        // the exact backend cannot condition on clue patterns absent from
        // its corpus; score the instance as a miss instead of aborting
        Err(seqdenoise::error::Error::InconsistentConditioning) => {
            return Ok(InstanceResult {
                row: MetricsRow {
                    instance_id,
                    difficulty: cfg.difficulty.clone(),
                    mode: mode_name(overlap).into(),
                    order: cfg.order.clone(),
                    overlap,
                    steps: cfg.steps_total,
                    accuracy: 0,
                    l1: puzzle.l1_error(),
                    eval_count: 0,
                    seed: cfg.seed,
                },
                frames: Vec::new(),
            });
        }
        Err(e) => return Err(e.into()),
    };
    let decoded = sudoku::decode(&out, cfg.boxn)?;
    // any valid completion consistent with the clues counts; the clue cells
    // of the puzzle itself are the reference
    let accuracy = decoded.is_valid() && decoded.matches_clues(puzzle, &observed);
    let frames = render_frames(&trace, |x, resolved| {
        let grid = sudoku::decode(x, cfg.boxn)?;
        Ok((sudoku_frame_text(&grid, resolved), sudoku_frame_pgm(&grid, resolved)))
    })?;
    Ok(InstanceResult {
        row: MetricsRow {
            instance_id,
            difficulty: cfg.difficulty.clone(),
            mode: mode_name(overlap).into(),
            order: cfg.order.clone(),
            overlap,
            steps: cfg.steps_total,
            accuracy: accuracy as u8,
            l1: decoded.l1_error(),
            eval_count: trace.eval_count,
            seed: cfg.seed,
        },
        frames,
    })
}

fn eval_even_pixels_instance(
    cfg: &ExperimentConfig,
    den: &dyn Denoiser,
    overlap: f64,
    instance_id: usize,
) -> Result<InstanceResult> {
    let mut rng = stream_rng(cfg.seed, "run", instance_id as u64);
    let n = cfg.n()?;
    let plan = plan_schedule(n, cfg.steps_total, overlap)?;
    let policy = cfg.order_policy(&mut rng)?;
    let observed = vec![false; n];
    let values = VariableSet::zeros(n, 1);
    let (out, trace) = run_inference(
        &mut rng,
        &plan,
        &policy,
        den,
        &inference_config(cfg)?,
        &observed,
        &values,
    )?;
    let decoded = EvenPixelsImage::decode(cfg.width, cfg.height, &out)?;
    let frames = render_frames(&trace, |x, resolved| {
        let im = EvenPixelsImage::decode(cfg.width, cfg.height, x)?;
        Ok((even_pixels_frame_text(&im, resolved), even_pixels_frame_pgm(&im, resolved)))
    })?;
    Ok(InstanceResult {
        row: MetricsRow {
            instance_id,
            difficulty: "-".into(),
            mode: mode_name(overlap).into(),
            order: cfg.order.clone(),
            overlap,
            steps: cfg.steps_total,
            accuracy: decoded.is_balanced() as u8,
            l1: decoded.count_error(),
            eval_count: trace.eval_count,
            seed: cfg.seed,
        },
        frames,
    })
}

fn eval_overlap(
    cfg: &ExperimentConfig,
    den: &(dyn Denoiser + Sync),
    overlap: f64,
) -> Result<Vec<InstanceResult>> {
    match cfg.benchmark()? {
        Benchmark::Sudoku => {
            let path = masked_path(cfg, cfg.difficulty()?);
            let puzzles = sudoku::read_grids(&path)
                .with_context(|| format!("reading {} (run gen-data first)", path.display()))?;
            if puzzles.len() < cfg.instances {
                bail!(
                    "{} holds {} instances but the config asks for {}",
                    path.display(),
                    puzzles.len(),
                    cfg.instances
                );
            }
            (0..cfg.instances)
                .into_par_iter()
                .map(|i| eval_sudoku_instance(cfg, den, &puzzles[i], overlap, i))
                .collect()
        }
        Benchmark::EvenPixels => (0..cfg.instances)
            .into_par_iter()
            .map(|i| eval_even_pixels_instance(cfg, den, overlap, i))
            .collect(),
    }
}

pub fn run(cfg: &ExperimentConfig, sweep: bool) -> Result<()> {
    let command = if sweep { "sweep" } else { "run" };
    let den = build_denoiser(cfg)?;
    let overlaps: Vec<f64> =
        if sweep { cfg.overlap_grid.clone() } else { vec![cfg.overlap] };

    let dir = cfg.run_dir(command);
    write_manifest(&dir, command, cfg)?;
    let frames_dir = dir.join("frames");
    if cfg.frame_every > 0 {
        std::fs::create_dir_all(&frames_dir)?;
    }

    let mut rows = Vec::with_capacity(overlaps.len() * cfg.instances);
    for &overlap in &overlaps {
        let results = eval_overlap(cfg, den.as_ref(), overlap)?;
        let hits: usize = results.iter().map(|r| r.row.accuracy as usize).sum();
        eprintln!(
            "overlap {overlap}: accuracy {:.3} over {} instances",
            hits as f64 / results.len() as f64,
            results.len()
        );
        for r in results {
            for (step, text, gray) in &r.frames {
                let stem = format!("o{overlap}_i{:04}_s{step:04}", r.row.instance_id);
                std::fs::write(frames_dir.join(format!("{stem}.txt")), text)?;
                std::fs::write(frames_dir.join(format!("{stem}.pgm")), gray)?;
            }
            rows.push(r.row);
        }
    }
    write_metrics(&dir.join("metrics.csv"), &rows)?;
    eprintln!("wrote {}", dir.join("metrics.csv").display());
    Ok(())
}
