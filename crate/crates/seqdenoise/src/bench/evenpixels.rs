//! Balanced binary images: every pixel is +/-1 and exactly half are +1.
//!
//! The constraint is global, so no pixel is decidable from a strict subset
//! of the others; it stresses how inference handles coupling that spans the
//! whole variable set.

use rand::Rng;

use crate::error::{Error, Result};
use crate::policy::Adjacency;
use crate::types::VariableSet;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvenPixelsImage {
    width: usize,
    height: usize,
    /// row-major, each +1 or -1
    pixels: Vec<i8>,
}

impl EvenPixelsImage {
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<i8>) -> Result<Self> {
        if width * height == 0 || width * height % 2 != 0 {
            return Err(Error::Config(format!(
                "{width}x{height} image cannot split its pixels evenly"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Contract(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if pixels.iter().any(|&p| p != 1 && p != -1) {
            return Err(Error::Contract("pixels must be +1 or -1".into()));
        }
        Ok(Self { width, height, pixels })
    }

    /// Uniform draw from the constraint set: a random half of the pixels up.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, width: usize, height: usize) -> Result<Self> {
        let total = width * height;
        if total == 0 || total % 2 != 0 {
            return Err(Error::Config(format!(
                "{width}x{height} image cannot split its pixels evenly"
            )));
        }
        let mut pixels = vec![-1i8; total];
        for i in rand::seq::index::sample(rng, total, total / 2) {
            pixels[i] = 1;
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[i8] {
        &self.pixels
    }

    /// How far the up-count sits from exactly half.
    pub fn count_error(&self) -> usize {
        let up = self.pixels.iter().filter(|&&p| p == 1).count();
        up.abs_diff(self.pixels.len() / 2)
    }

    pub fn is_balanced(&self) -> bool {
        self.count_error() == 0
    }

    pub fn encode(&self) -> VariableSet {
        let data = self.pixels.iter().map(|&p| p as f64).collect();
        VariableSet::new(self.pixels.len(), 1, data).expect("image shape is valid")
    }

    /// Thresholds continuous values back to pixels: positive becomes +1.
    pub fn decode(width: usize, height: usize, vars: &VariableSet) -> Result<Self> {
        if vars.n() != width * height || vars.dim() != 1 {
            return Err(Error::Contract(format!(
                "decode expects {}x1 variables, got {}x{}",
                width * height,
                vars.n(),
                vars.dim()
            )));
        }
        let pixels = vars.as_slice().iter().map(|&v| if v > 0.0 { 1i8 } else { -1 }).collect();
        Self::from_pixels(width, height, pixels)
    }
}

/// 4-neighborhood adjacency over the pixel grid, row-major indexing.
pub fn grid_adjacency(width: usize, height: usize) -> Result<Adjacency> {
    if width == 0 || height == 0 {
        return Err(Error::Domain("empty pixel grid".into()));
    }
    let mut adj = Adjacency::new(width * height);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if x + 1 < width {
                adj.connect(i, i + 1);
            }
            if y + 1 < height {
                adj.connect(i, i + width);
            }
        }
    }
    Ok(adj)
}

/// Writes images as a `w=<width> h=<height>` header plus one line per image
/// of `+` and `-` characters.
pub fn write_images(path: &std::path::Path, images: &[EvenPixelsImage]) -> Result<()> {
    use std::io::Write;
    let (w, h) = match images.first() {
        Some(im) => (im.width, im.height),
        None => return Err(Error::Contract("refusing to write an empty image file".into())),
    };
    if images.iter().any(|im| im.width != w || im.height != h) {
        return Err(Error::Contract("mixed image sizes in one file".into()));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "w={w} h={h}")?;
    for im in images {
        let line: String = im.pixels.iter().map(|&p| if p == 1 { '+' } else { '-' }).collect();
        writeln!(f, "{line}")?;
    }
    Ok(())
}

pub fn read_images(path: &std::path::Path) -> Result<Vec<EvenPixelsImage>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Contract("empty image file".into()))?;
    let parse = |tok: Option<&str>, key: &str| -> Result<usize> {
        tok.and_then(|t| t.strip_prefix(key))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Contract(format!("bad image header {header:?}")))
    };
    let mut toks = header.split_whitespace();
    let w = parse(toks.next(), "w=")?;
    let h = parse(toks.next(), "h=")?;
    let mut images = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let pixels = line
            .chars()
            .map(|c| match c {
                '+' => Ok(1i8),
                '-' => Ok(-1),
                other => Err(Error::Contract(format!("bad pixel {other:?} on line {}", ln + 2))),
            })
            .collect::<Result<Vec<i8>>>()?;
        if pixels.len() != w * h {
            return Err(Error::Contract(format!("line {} has {} pixels", ln + 2, pixels.len())));
        }
        images.push(EvenPixelsImage { width: w, height: h, pixels });
    }
    Ok(images)
}
