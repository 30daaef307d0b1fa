//! Run artifacts: metrics CSV, resolved-config manifest, frame dumps, and
//! the per-instance RNG streams that make all of them reproducible.

use std::path::Path;

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use seqdenoise::bench::evenpixels::EvenPixelsImage;
use seqdenoise::bench::sudoku::SudokuGrid;

use crate::config::ExperimentConfig;

/// Independent RNG stream keyed by (base seed, stream label, instance).
/// Labels longer than 16 bytes are truncated; keep them short and distinct.
pub fn stream_rng(seed: u64, label: &str, instance: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&instance.to_le_bytes());
    let lab = label.as_bytes();
    let len = lab.len().min(16);
    key[16..16 + len].copy_from_slice(&lab[..len]);
    ChaCha8Rng::from_seed(key)
}

#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub instance_id: usize,
    pub difficulty: String,
    pub mode: String,
    pub order: String,
    pub overlap: f64,
    pub steps: usize,
    pub accuracy: u8,
    pub l1: usize,
    pub eval_count: usize,
    pub seed: u64,
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut f = std::io::BufWriter::new(file);
    writeln!(f, "instance_id,difficulty,mode,order,overlap,steps,accuracy,l1,eval_count,seed")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{}",
            r.instance_id,
            r.difficulty,
            r.mode,
            r.order,
            r.overlap,
            r.steps,
            r.accuracy,
            r.l1,
            r.eval_count,
            r.seed
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a ExperimentConfig,
}

/// Echo of the fully resolved config; `dir` is created if missing.
pub fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = toml::to_string_pretty(&Manifest { command, config: cfg })?;
    std::fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

/// Mode column value for a metrics row: a window covering every step means
/// all variables denoise in lockstep.
pub fn mode_name(overlap: f64) -> &'static str {
    if overlap >= 1.0 {
        "parallel"
    } else {
        "sequential"
    }
}

const PGM_MAX: u32 = 255;

fn pgm(width: usize, height: usize, gray: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{PGM_MAX}\n").into_bytes();
    out.extend_from_slice(gray);
    out
}

/// Text frame: digits row by row, `0` where the cell is still noisy.
pub fn sudoku_frame_text(decoded: &SudokuGrid, resolved: &[bool]) -> String {
    let side = decoded.side();
    let mut out = String::new();
    for r in 0..side {
        for c in 0..side {
            let i = r * side + c;
            let d = if resolved[i] { decoded.get(i) } else { 0 };
            out.push(char::from_digit(d as u32, 10).unwrap());
        }
        out.push('\n');
    }
    out
}

/// Binary graymap frame: digit d maps to d * 255 / side, unresolved to 0.
pub fn sudoku_frame_pgm(decoded: &SudokuGrid, resolved: &[bool]) -> Vec<u8> {
    let side = decoded.side();
    let gray: Vec<u8> = (0..decoded.n_cells())
        .map(|i| {
            if resolved[i] {
                (decoded.get(i) as u32 * PGM_MAX / side as u32) as u8
            } else {
                0
            }
        })
        .collect();
    pgm(side, side, &gray)
}

/// Text frame: `+`/`-` pixels row by row, `.` where still noisy.
pub fn even_pixels_frame_text(decoded: &EvenPixelsImage, resolved: &[bool]) -> String {
    let (w, h) = (decoded.width(), decoded.height());
    let mut out = String::new();
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            out.push(if !resolved[i] {
                '.'
            } else if decoded.pixels()[i] == 1 {
                '+'
            } else {
                '-'
            });
        }
        out.push('\n');
    }
    out
}

/// Binary graymap frame: +1 maps to 255, -1 to 128, unresolved to 0.
pub fn even_pixels_frame_pgm(decoded: &EvenPixelsImage, resolved: &[bool]) -> Vec<u8> {
    let gray: Vec<u8> = decoded
        .pixels()
        .iter()
        .zip(resolved)
        .map(|(&p, &r)| if !r { 0 } else if p == 1 { 255 } else { 128 })
        .collect();
    pgm(decoded.width(), decoded.height(), &gray)
}
