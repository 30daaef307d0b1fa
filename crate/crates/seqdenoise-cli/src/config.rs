//! Experiment configuration: a TOML file supplies defaults, command-line
//! flags override individual keys, and every run echoes the fully resolved
//! result into its manifest so artifacts can be regenerated bit-identically.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use seqdenoise::bench::sudoku::{self, Difficulty};
use seqdenoise::bench::evenpixels;
use seqdenoise::policy::OrderPolicy;
use seqdenoise::process::VarianceMode;
use seqdenoise::schedule::NoiseSchedule;
use seqdenoise::tsampler::LevelSampler;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Sudoku,
    EvenPixels,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Subdirectory of `out_dir` for this run's artifacts; empty means the
    /// command name.
    pub run_name: String,
    pub out_dir: PathBuf,
    pub data_dir: PathBuf,
    /// Model file written by `train` and read by `run`/`sweep`; empty means
    /// `<out_dir>/model.ckpt`.
    pub checkpoint: PathBuf,

    pub benchmark: String,
    pub boxn: usize,
    pub width: usize,
    pub height: usize,
    pub train_solutions: usize,
    pub test_solutions: usize,
    pub train_images: usize,
    /// Evaluation instances per difficulty (generation and inference).
    pub instances: usize,
    pub difficulty: String,

    pub schedule: String,
    pub tsampler: String,
    pub sharpness: f64,
    pub weight_bins: usize,
    pub weight_samples: usize,

    /// Inference backend: `net` (trained checkpoint) or `exact` (Bayes
    /// posterior over the training corpus).
    pub denoiser: String,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub train_steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub lambda_nll: f64,
    pub log_every: usize,

    pub steps_total: usize,
    pub overlap: f64,
    pub order: String,
    pub eta: f64,
    pub variance_mode: String,
    pub frame_every: usize,
    pub overlap_grid: Vec<f64>,
    pub stats_bins: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            run_name: String::new(),
            out_dir: "runs".into(),
            data_dir: "data".into(),
            checkpoint: PathBuf::new(),
            benchmark: "sudoku".into(),
            boxn: 2,
            width: 4,
            height: 4,
            train_solutions: 200,
            test_solutions: 88,
            train_images: 2000,
            instances: 500,
            difficulty: "hard".into(),
            schedule: "linear".into(),
            tsampler: "uniform_tbar".into(),
            sharpness: 1.0,
            weight_bins: 64,
            weight_samples: 100_000,
            denoiser: "net".into(),
            hidden: 256,
            hidden_layers: 3,
            train_steps: 20_000,
            batch: 128,
            lr: 1e-3,
            lambda_nll: 0.01,
            log_every: 1000,
            steps_total: 320,
            overlap: 0.0,
            order: "uncertainty".into(),
            eta: 1.0,
            variance_mode: "lower".into(),
            frame_every: 0,
            overlap_grid: vec![0.0, 0.5, 0.9, 0.95, 1.0],
            stats_bins: 20,
        }
    }
}

impl ExperimentConfig {
    pub fn benchmark(&self) -> Result<Benchmark> {
        match self.benchmark.as_str() {
            "sudoku" => Ok(Benchmark::Sudoku),
            "even_pixels" => Ok(Benchmark::EvenPixels),
            other => bail!("unknown benchmark '{other}' (expected sudoku or even_pixels)"),
        }
    }

    /// Variable count of the configured benchmark.
    pub fn n(&self) -> Result<usize> {
        Ok(match self.benchmark()? {
            Benchmark::Sudoku => {
                let side = self.boxn * self.boxn;
                side * side
            }
            Benchmark::EvenPixels => self.width * self.height,
        })
    }

    /// Per-variable dimension of the configured benchmark.
    pub fn dim(&self) -> Result<usize> {
        Ok(match self.benchmark()? {
            Benchmark::Sudoku => self.boxn * self.boxn,
            Benchmark::EvenPixels => 1,
        })
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        self.schedule.parse().context("config key 'schedule'")
    }

    pub fn variance_mode(&self) -> Result<VarianceMode> {
        self.variance_mode.parse().context("config key 'variance_mode'")
    }

    pub fn difficulty(&self) -> Result<Difficulty> {
        self.difficulty.parse().context("config key 'difficulty'")
    }

    pub fn sampler(&self) -> Result<LevelSampler> {
        match self.tsampler.as_str() {
            "uniform_t" => Ok(LevelSampler::UniformT),
            "uniform_tbar" => Ok(LevelSampler::uniform_tbar(self.sharpness)),
            other => bail!("unknown tsampler '{other}' (expected uniform_t or uniform_tbar)"),
        }
    }

    /// Builds the order policy; `rng` feeds the random permutation.
    pub fn order_policy<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<OrderPolicy> {
        let n = self.n()?;
        Ok(match self.order.as_str() {
            "random" => OrderPolicy::random(rng, n),
            "fixed" => OrderPolicy::fixed((0..n).collect())?,
            "uncertainty" => OrderPolicy::Uncertainty,
            "graph" => OrderPolicy::graph(match self.benchmark()? {
                Benchmark::Sudoku => sudoku::sudoku_adjacency(self.boxn)?,
                Benchmark::EvenPixels => evenpixels::grid_adjacency(self.width, self.height)?,
            }),
            other => bail!("unknown order '{other}' (expected random, fixed, graph or uncertainty)"),
        })
    }

    pub fn run_dir(&self, command: &str) -> PathBuf {
        let name = if self.run_name.is_empty() { command } else { &self.run_name };
        self.out_dir.join(name)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        if self.checkpoint.as_os_str().is_empty() {
            self.out_dir.join("model.ckpt")
        } else {
            self.checkpoint.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        self.benchmark()?;
        self.schedule()?;
        self.variance_mode()?;
        self.difficulty()?;
        self.sampler()?;
        if !(2..=3).contains(&self.boxn) {
            bail!("boxn {} outside the supported range 2..=3", self.boxn);
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            bail!("overlap {} outside [0, 1]", self.overlap);
        }
        if let Some(&bad) = self.overlap_grid.iter().find(|o| !(0.0..=1.0).contains(*o)) {
            bail!("overlap_grid entry {bad} outside [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.eta) {
            bail!("eta {} outside [0, 1]", self.eta);
        }
        if self.stats_bins == 0 || self.weight_bins == 0 {
            bail!("histogram bin counts must be positive");
        }
        Ok(())
    }
}

/// Per-key command-line overrides; unset flags leave the config untouched.
#[derive(Debug, Clone, Args)]
pub struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    run_name: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// sudoku or even_pixels
    #[arg(long)]
    benchmark: Option<String>,
    #[arg(long)]
    boxn: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    train_solutions: Option<usize>,
    #[arg(long)]
    test_solutions: Option<usize>,
    #[arg(long)]
    train_images: Option<usize>,
    #[arg(long)]
    instances: Option<usize>,
    /// easy, medium or hard
    #[arg(long)]
    difficulty: Option<String>,
    /// linear or cosine
    #[arg(long)]
    schedule: Option<String>,
    /// uniform_t or uniform_tbar
    #[arg(long)]
    tsampler: Option<String>,
    #[arg(long)]
    sharpness: Option<f64>,
    #[arg(long)]
    weight_bins: Option<usize>,
    #[arg(long)]
    weight_samples: Option<usize>,
    /// net or exact
    #[arg(long)]
    denoiser: Option<String>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    hidden_layers: Option<usize>,
    #[arg(long)]
    train_steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda_nll: Option<f64>,
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long)]
    steps_total: Option<usize>,
    #[arg(long)]
    overlap: Option<f64>,
    /// random, fixed, graph or uncertainty
    #[arg(long)]
    order: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    /// lower or upper
    #[arg(long)]
    variance_mode: Option<String>,
    #[arg(long)]
    frame_every: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    overlap_grid: Option<Vec<f64>>,
    #[arg(long)]
    stats_bins: Option<usize>,
}

macro_rules! apply_keys {
    ($ov:expr, $cfg:expr, $($key:ident),+ $(,)?) => {
        $(if let Some(v) = $ov.$key.clone() { $cfg.$key = v; })+
    };
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        apply_keys!(
            self, cfg, seed, run_name, out_dir, data_dir, checkpoint, benchmark, boxn, width,
            height, train_solutions, test_solutions, train_images, instances, difficulty,
            schedule, tsampler, sharpness, weight_bins, weight_samples, denoiser, hidden,
            hidden_layers, train_steps, batch, lr, lambda_nll, log_every, steps_total, overlap,
            order, eta, variance_mode, frame_every, overlap_grid, stats_bins,
        );
    }
}

pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}
