//! Training-time samplers for the per-variable noise level vector.
//!
//! Drawing every t_i independently from U(0, 1) concentrates the vector mean
//! near 1/2 (its variance shrinks like 1/(12 n)), so states whose mean level
//! is close to 0 or 1 are almost never visited during training even though
//! inference has to traverse them. The mean-uniform sampler fixes this: it
//! draws the target mean uniformly, then splits the implied total recursively
//! between the two halves of the vector with a Beta-distributed ratio whose
//! concentration mimics an i.i.d. uniform split, and finally permutes.
//!
//! The resulting per-element marginal is denser near 0 and 1 than uniform;
//! `estimate_loss_weights` builds a histogram-based importance table that
//! training uses to undo that bias.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::types::NoiseLevelVector;

/// Exponent of the Beta concentration parameter; tuned so a split of d
/// elements matches the spread of an i.i.d. uniform split at sharpness 1.
pub const DEFAULT_ALPHA_EXPONENT: f64 = 1.05;

/// Concentration parameters are floored here so extreme sharpness values
/// still yield a valid Beta distribution.
pub const ALPHA_FLOOR: f64 = 1e-3;

/// Splits a total `s` across `d` elements of [0, 1] so they sum to `s`
/// exactly (up to roundoff). Halves the index range recursively; each split
/// draws the left share from a Beta(alpha, alpha) stretched over the
/// feasible interval, with alpha = (d - 1 - d mod 2)^exp * sharpness.
pub fn allocate_sum<R: Rng + ?Sized>(
    rng: &mut R,
    s: f64,
    d: usize,
    sharpness: f64,
) -> Result<Vec<f64>> {
    allocate_sum_with_exponent(rng, s, d, sharpness, DEFAULT_ALPHA_EXPONENT)
}

pub fn allocate_sum_with_exponent<R: Rng + ?Sized>(
    rng: &mut R,
    s: f64,
    d: usize,
    sharpness: f64,
    exponent: f64,
) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::Domain("allocate_sum needs d >= 1".into()));
    }
    if !s.is_finite() || !(0.0..=d as f64).contains(&s) {
        return Err(Error::Domain(format!("allocate_sum: s = {s} outside [0, {d}]")));
    }
    if !(sharpness > 0.0) {
        return Err(Error::Domain(format!("allocate_sum: sharpness = {sharpness} must be > 0")));
    }
    let mut out = Vec::with_capacity(d);
    split(rng, s, d, sharpness, exponent, &mut out);
    Ok(out)
}

fn split<R: Rng + ?Sized>(
    rng: &mut R,
    s: f64,
    d: usize,
    sharpness: f64,
    exponent: f64,
    out: &mut Vec<f64>,
) {
    if d == 1 {
        out.push(s.clamp(0.0, 1.0));
        return;
    }
    let s = s.clamp(0.0, d as f64);
    let d1 = d / 2;
    let d2 = d - d1;
    let s1_max = s.min(d1 as f64);
    let s2_max = s.min(d2 as f64);
    let s1_min = (s - s2_max).max(0.0);
    let alpha = ((d as f64 - 1.0 - (d % 2) as f64).powf(exponent) * sharpness).max(ALPHA_FLOOR);
    let r = Beta::new(alpha, alpha).expect("alpha > 0").sample(rng);
    let s1 = s1_min + (s1_max - s1_min) * r;
    split(rng, s1, d1, sharpness, exponent, out);
    split(rng, s - s1, d2, sharpness, exponent, out);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelSampler {
    /// every t_i i.i.d. from U(0, 1)
    UniformT,
    /// vector mean from U(0, 1), spread by recursive allocation, then permuted
    UniformTbar { sharpness: f64, alpha_exponent: f64 },
}

impl LevelSampler {
    pub fn uniform_tbar(sharpness: f64) -> Self {
        LevelSampler::UniformTbar { sharpness, alpha_exponent: DEFAULT_ALPHA_EXPONENT }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LevelSampler::UniformT => "uniform_t",
            LevelSampler::UniformTbar { .. } => "uniform_tbar",
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<NoiseLevelVector> {
        if n == 0 {
            return Err(Error::Domain("sampler needs n >= 1".into()));
        }
        match *self {
            LevelSampler::UniformT => {
                NoiseLevelVector::new((0..n).map(|_| rng.gen::<f64>()).collect())
            }
            LevelSampler::UniformTbar { sharpness, alpha_exponent } => {
                let tbar: f64 = rng.gen::<f64>();
                let mut levels =
                    allocate_sum_with_exponent(rng, tbar * n as f64, n, sharpness, alpha_exponent)?;
                levels.shuffle(rng);
                NoiseLevelVector::new(levels)
            }
        }
    }
}

/// Histogram-based inverse-density weights over t in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeightTable {
    weights: Vec<f64>,
}

impl LossWeightTable {
    /// A table of all ones: weighting becomes a no-op.
    pub fn flat(bins: usize) -> Self {
        Self { weights: vec![1.0; bins.max(1)] }
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::Contract("loss weights must be finite and positive".into()));
        }
        Ok(Self { weights })
    }

    pub fn bins(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lookup(&self, t: f64) -> f64 {
        let b = ((t * self.weights.len() as f64) as usize).min(self.weights.len() - 1);
        self.weights[b]
    }
}

/// Estimates w(t) = 1 / p(t) from `num_samples` sampler draws, flooring the
/// per-bin mass at 1/(10 bins) so empty bins cannot explode, and normalizing
/// so the weight has mean 1 under the sampled distribution itself.
pub fn estimate_loss_weights<R: Rng + ?Sized>(
    rng: &mut R,
    sampler: &LevelSampler,
    n: usize,
    bins: usize,
    num_samples: usize,
) -> Result<LossWeightTable> {
    if bins == 0 {
        return Err(Error::Domain("estimate_loss_weights needs bins >= 1".into()));
    }
    if num_samples < 10 * bins {
        return Err(Error::Domain(format!(
            "estimate_loss_weights: num_samples = {num_samples} below 10 x bins = {}",
            10 * bins
        )));
    }
    let mut counts = vec![0u64; bins];
    for _ in 0..num_samples {
        let levels = sampler.sample(rng, n)?;
        for &t in levels.as_slice() {
            let b = ((t * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    let total = (num_samples * n) as f64;
    let floor = 1.0 / (10.0 * bins as f64);
    let phat: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let raw: Vec<f64> = phat.iter().map(|&p| 1.0 / p.max(floor)).collect();
    let z: f64 = phat.iter().zip(&raw).map(|(p, w)| p * w).sum();
    LossWeightTable::from_weights(raw.into_iter().map(|w| w / z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_statistic_uniform, variance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn allocation_conserves_the_sum_and_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let d = rng.gen_range(1..=128);
            let s = rng.gen_range(0.0..=d as f64);
            let sharpness = rng.gen_range(0.05..8.0);
            let xs = allocate_sum(&mut rng, s, d, sharpness).unwrap();
            assert_eq!(xs.len(), d);
            assert!(xs.iter().all(|&x| (0.0..=1.0).contains(&x)));
            let total: f64 = xs.iter().sum();
            assert!((total - s).abs() < 1e-9, "sum {total} != {s} at d = {d}");
        }
    }

    #[test]
    fn allocation_rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        assert!(allocate_sum(&mut rng, 0.5, 0, 1.0).is_err());
        assert!(allocate_sum(&mut rng, 3.5, 3, 1.0).is_err());
        assert!(allocate_sum(&mut rng, -0.1, 3, 1.0).is_err());
        assert!(allocate_sum(&mut rng, 1.0, 3, 0.0).is_err());
    }

    #[test]
    fn allocation_is_symmetric_across_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let m = 20_000;
        let mut sums = [0.0f64; 4];
        for _ in 0..m {
            let xs = allocate_sum(&mut rng, 2.0, 4, 1.0).unwrap();
            for (acc, x) in sums.iter_mut().zip(&xs) {
                *acc += x;
            }
        }
        // each position has mean 1/2; element std is below 1/2
        let se = 3.0 * 0.5 / (m as f64).sqrt();
        for (k, acc) in sums.iter().enumerate() {
            let avg = acc / m as f64;
            assert!((avg - 0.5).abs() < se, "position {k}: mean {avg}");
        }
    }

    #[test]
    fn iid_sampler_elements_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let n = 81;
        let draws = 100_000;
        let mut per_element: Vec<Vec<f64>> = vec![Vec::with_capacity(draws); n];
        for _ in 0..draws {
            let t = LevelSampler::UniformT.sample(&mut rng, n).unwrap();
            for (c, &v) in per_element.iter_mut().zip(t.as_slice()) {
                c.push(v);
            }
        }
        for (i, xs) in per_element.iter().enumerate() {
            let d = ks_statistic_uniform(xs);
            assert!(d < 0.01, "element {i}: KS = {d}");
        }
    }

    #[test]
    fn iid_sampler_mean_concentrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let n = 81;
        let means: Vec<f64> = (0..100_000)
            .map(|_| LevelSampler::UniformT.sample(&mut rng, n).unwrap().mean())
            .collect();
        let target = 1.0 / (12.0 * n as f64);
        let v = variance(&means);
        assert!((v - target).abs() < 0.05 * target, "Var = {v}, want ~{target}");
    }

    #[test]
    fn mean_uniform_sampler_has_uniform_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let sampler = LevelSampler::uniform_tbar(1.0);
        let means: Vec<f64> =
            (0..100_000).map(|_| sampler.sample(&mut rng, 81).unwrap().mean()).collect();
        let d = ks_statistic_uniform(&means);
        assert!(d < 0.01, "KS of vector means = {d}");
    }

    #[test]
    fn allocation_mean_tracks_requested_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        for _ in 0..1000 {
            let tbar: f64 = rng.gen::<f64>();
            let xs = allocate_sum(&mut rng, tbar * 81.0, 81, 1.0).unwrap();
            let m = xs.iter().sum::<f64>() / 81.0;
            assert!((m - tbar).abs() < 1e-9);
        }
    }

    /// Conditioned on a vector mean of 1/2, the allocation approximates an
    /// i.i.d. uniform draw, so each element's marginal is close to U(0, 1).
    /// The Beta split is an approximation; its error grows mildly with n.
    #[test]
    fn midpoint_allocation_resembles_iid_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        for (n, bound) in [(16usize, 0.02), (81, 0.03)] {
            let draws = 100_000;
            let mut first = Vec::with_capacity(draws);
            for _ in 0..draws {
                let mut t = allocate_sum(&mut rng, n as f64 / 2.0, n, 1.0).unwrap();
                t.shuffle(&mut rng);
                first.push(t[0]);
            }
            let d = ks_statistic_uniform(&first);
            assert!(d < bound, "n = {n}: KS = {d}");
        }
    }

    /// Marginalized over the uniform vector mean, elements pile up near 0 and
    /// 1 (the bias the loss-weight table corrects). The excess is symmetric.
    #[test]
    fn marginalized_elements_oversample_the_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let sampler = LevelSampler::uniform_tbar(1.0);
        let draws = 50_000;
        let bins = 20;
        let mut hist = vec![0u64; bins];
        for _ in 0..draws {
            let t = sampler.sample(&mut rng, 16).unwrap();
            for &v in t.as_slice() {
                hist[((v * bins as f64) as usize).min(bins - 1)] += 1;
            }
        }
        let total: f64 = hist.iter().sum::<u64>() as f64;
        let dens = |b: usize| hist[b] as f64 / total * bins as f64;
        assert!(dens(0) > 1.5 && dens(bins - 1) > 1.5, "no edge excess");
        assert!(dens(bins / 2) < 0.8, "no central deficit");
        assert!((dens(0) - dens(bins - 1)).abs() < 0.15, "edge excess asymmetric");
    }

    #[test]
    fn sharpness_tightens_vectors_around_their_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let n = 81;
        let mut spreads = Vec::new();
        for sharpness in [0.5, 1.0, 2.0, 4.0] {
            let sampler = LevelSampler::uniform_tbar(sharpness);
            let mut acc = 0.0;
            let draws = 20_000;
            for _ in 0..draws {
                let t = sampler.sample(&mut rng, n).unwrap();
                let m = t.mean();
                acc += t.as_slice().iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            }
            spreads.push(acc / draws as f64);
        }
        for pair in spreads.windows(2) {
            assert!(pair[1] < pair[0], "within-vector variance not decreasing: {spreads:?}");
        }
    }

    #[test]
    fn weights_are_flat_for_the_iid_sampler() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let table =
            estimate_loss_weights(&mut rng, &LevelSampler::UniformT, 16, 64, 20_000).unwrap();
        for (b, &w) in table.weights().iter().enumerate() {
            assert!((w - 1.0).abs() < 0.05, "bin {b}: weight {w}");
        }
    }

    #[test]
    fn weights_dip_where_the_mean_uniform_sampler_oversamples() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let sampler = LevelSampler::uniform_tbar(1.0);
        let table = estimate_loss_weights(&mut rng, &sampler, 16, 64, 50_000).unwrap();
        let w = table.weights();
        let mid = w[w.len() / 2];
        assert!(w[0] < mid, "w[0] = {} vs mid {mid}", w[0]);
        assert!(w[w.len() - 1] < mid, "w[last] = {} vs mid {mid}", w[w.len() - 1]);
        let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(w[0] == min || w[w.len() - 1] == min);
    }

    #[test]
    fn reweighted_histogram_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let sampler = LevelSampler::uniform_tbar(1.0);
        let n = 16;
        let bins = 64;
        let table = estimate_loss_weights(&mut rng, &sampler, n, bins, 100_000).unwrap();
        let mut acc = vec![0.0f64; bins];
        let draws = 100_000;
        for _ in 0..draws {
            let t = sampler.sample(&mut rng, n).unwrap();
            for &v in t.as_slice() {
                let b = ((v * bins as f64) as usize).min(bins - 1);
                acc[b] += table.lookup(v);
            }
        }
        let total: f64 = acc.iter().sum();
        for (b, &a) in acc.iter().enumerate() {
            let density = a / total * bins as f64;
            assert!((density - 1.0).abs() < 0.05, "bin {b}: effective density {density}");
        }
    }

    #[test]
    fn lookup_maps_levels_to_their_bin() {
        let table = LossWeightTable::from_weights(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(table.lookup(0.0), 1.0);
        assert_eq!(table.lookup(0.26), 2.0);
        assert_eq!(table.lookup(0.99), 4.0);
        assert_eq!(table.lookup(1.0), 4.0);
    }

    #[test]
    fn mean_weight_is_one_under_the_sampler() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let sampler = LevelSampler::uniform_tbar(1.0);
        let table = estimate_loss_weights(&mut rng, &sampler, 16, 64, 50_000).unwrap();
        let mut acc = 0.0;
        let draws = 50_000;
        for _ in 0..draws {
            let t = sampler.sample(&mut rng, 16).unwrap();
            for &v in t.as_slice() {
                acc += table.lookup(v);
            }
        }
        let m = acc / (draws * 16) as f64;
        assert!((m - 1.0).abs() < 0.02, "mean weight {m}");
    }

    #[test]
    fn single_element_allocation_is_the_total_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for s in [0.0, 0.25, 1.0] {
            assert_eq!(allocate_sum(&mut rng, s, 1, 1.0).unwrap(), vec![s]);
        }
    }
}
