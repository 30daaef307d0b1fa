//! Trains the network denoiser on a generated dataset and writes the
//! checkpoint plus a loss log.

use anyhow::{bail, Context, Result};

use seqdenoise::bench::{evenpixels, sudoku};
use seqdenoise::denoiser::{train, NetParams, NetShape, TrainConfig};
use seqdenoise::tsampler::{estimate_loss_weights, LevelSampler, LossWeightTable};
use seqdenoise::types::VariableSet;

use crate::config::{Benchmark, ExperimentConfig};
use crate::gen_data::{train_grids_path, train_images_path};
use crate::output::{stream_rng, write_manifest};

pub fn load_train_data(cfg: &ExperimentConfig) -> Result<Vec<VariableSet>> {
    Ok(match cfg.benchmark()? {
        Benchmark::Sudoku => {
            let path = train_grids_path(cfg);
            let grids = sudoku::read_grids(&path)
                .with_context(|| format!("reading {} (run gen-data first)", path.display()))?;
            if grids.iter().any(|g| g.boxn() != cfg.boxn) {
                bail!("dataset box size does not match configured boxn {}", cfg.boxn);
            }
            grids.iter().map(sudoku::encode).collect::<seqdenoise::error::Result<_>>()?
        }
        Benchmark::EvenPixels => {
            let path = train_images_path(cfg);
            let images = evenpixels::read_images(&path)
                .with_context(|| format!("reading {} (run gen-data first)", path.display()))?;
            if images.iter().any(|im| im.width() != cfg.width || im.height() != cfg.height) {
                bail!("dataset image size does not match configured {}x{}", cfg.width, cfg.height);
            }
            images.iter().map(evenpixels::EvenPixelsImage::encode).collect()
        }
    })
}

/// Loss weight table matched to the sampler's per-element level density;
/// the flat-density sampler needs no correction.
pub fn loss_weights(cfg: &ExperimentConfig, sampler: &LevelSampler) -> Result<LossWeightTable> {
    Ok(match sampler {
        LevelSampler::UniformT => LossWeightTable::flat(cfg.weight_bins),
        s => {
            let mut rng = stream_rng(cfg.seed, "weights", 0);
            estimate_loss_weights(&mut rng, s, cfg.n()?, cfg.weight_bins, cfg.weight_samples)?
        }
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    let data = load_train_data(cfg)?;
    let sampler = cfg.sampler()?;
    let weights = loss_weights(cfg, &sampler)?;
    let shape = NetShape {
        n: cfg.n()?,
        dim: cfg.dim()?,
        hidden: cfg.hidden,
        hidden_layers: cfg.hidden_layers,
    };
    let mut params = NetParams::init(&mut stream_rng(cfg.seed, "init", 0), shape)?;
    let train_cfg = TrainConfig {
        steps: cfg.train_steps,
        batch: cfg.batch,
        lr: cfg.lr,
        lambda_nll: cfg.lambda_nll,
        log_every: cfg.log_every,
        ..TrainConfig::default()
    };
    eprintln!(
        "training {} params on {} samples for {} steps",
        shape.param_count(),
        data.len(),
        cfg.train_steps
    );
    let report = train(
        &mut params,
        &data,
        &sampler,
        &weights,
        cfg.schedule()?,
        &train_cfg,
        &mut stream_rng(cfg.seed, "train", 0),
    )?;

    let dir = cfg.run_dir("train");
    write_manifest(&dir, "train", cfg)?;
    let ckpt = cfg.checkpoint_path();
    if let Some(parent) = ckpt.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    params.save(&ckpt)?;

    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("losses.csv"))?);
    writeln!(f, "step,loss")?;
    for (step, loss) in &report.losses {
        writeln!(f, "{step},{loss}")?;
    }
    eprintln!("final loss {:.4}; checkpoint {}", report.final_loss, ckpt.display());
    Ok(())
}
