//! Joint histogram of per-element noise levels against their vector mean,
//! for inspecting what a level sampler actually produces.

use anyhow::Result;

use seqdenoise::stats::mean;

use crate::config::ExperimentConfig;
use crate::output::{stream_rng, write_manifest};

pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    let sampler = cfg.sampler()?;
    let n = cfg.n()?;
    let bins = cfg.stats_bins;
    let draws = cfg.weight_samples;
    let bin_of = |x: f64| ((x * bins as f64) as usize).min(bins - 1);

    let mut hist = vec![0u64; bins * bins];
    let mut rng = stream_rng(cfg.seed, "stats", 0);
    for _ in 0..draws {
        let levels = sampler.sample(&mut rng, n)?;
        let tbar_bin = bin_of(mean(levels.as_slice()));
        for &t in levels.as_slice() {
            hist[bin_of(t) * bins + tbar_bin] += 1;
        }
    }

    let dir = cfg.run_dir("tsample-stats");
    write_manifest(&dir, "tsample-stats", cfg)?;
    use std::io::Write;
    let path = dir.join("stats.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(f, "t_bin,tbar_bin,count")?;
    for tb in 0..bins {
        for tbb in 0..bins {
            writeln!(f, "{tb},{tbb},{}", hist[tb * bins + tbb])?;
        }
    }
    eprintln!(
        "{} over {draws} draws of {n} levels; wrote {}",
        sampler.name(),
        path.display()
    );
    Ok(())
}
