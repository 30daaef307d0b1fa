//! Exact Bayes posterior denoiser over a finite corpus.
//!
//! Given x_t with per-variable levels t, the posterior weight of corpus
//! sample x^(k) is proportional to prod_i N(x_{t,i}; a_{t_i} x_i^(k),
//! b_{t_i}^2 I). Variables whose level is effectively clean (b below a small
//! floor) degenerate to a hard match filter. The posterior mean over the
//! corpus yields x0_hat, from which the noise estimate and its per-variable
//! variance follow in closed form.

use crate::denoiser::{Denoiser, DenoiserOutput};
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::types::{NoiseLevelVector, VariableSet};

/// Levels with b at or below this are treated as exact conditioning.
pub const B_FLOOR: f64 = 1e-4;

/// Max-norm tolerance of the hard match filter at clean variables.
pub const MATCH_TOL: f64 = 1e-6;

/// Posterior noise variance is floored here before taking the log.
pub const VAR_FLOOR: f64 = 1e-12;

/// K samples, each n variables of dim scalars.
#[derive(Debug, Clone)]
pub struct Corpus {
    n: usize,
    dim: usize,
    data: Vec<f64>,
    count: usize,
}

impl Corpus {
    pub fn from_sets(sets: &[VariableSet]) -> Result<Self> {
        let first = sets.first().ok_or_else(|| Error::Contract("empty corpus".into()))?;
        let (n, dim) = (first.n(), first.dim());
        let mut data = Vec::with_capacity(sets.len() * n * dim);
        for s in sets {
            if s.n() != n || s.dim() != dim {
                return Err(Error::Contract("corpus samples differ in shape".into()));
            }
            data.extend_from_slice(s.as_slice());
        }
        Ok(Self { n, dim, data, count: sets.len() })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Variable i of sample k.
    fn var(&self, k: usize, i: usize) -> &[f64] {
        let stride = self.n * self.dim;
        &self.data[k * stride + i * self.dim..k * stride + (i + 1) * self.dim]
    }

    /// Posterior-weighted mean across samples.
    pub fn mean(&self) -> VariableSet {
        let stride = self.n * self.dim;
        let mut acc = vec![0.0; stride];
        for k in 0..self.count {
            for (a, v) in acc.iter_mut().zip(&self.data[k * stride..(k + 1) * stride]) {
                *a += v;
            }
        }
        for a in &mut acc {
            *a /= self.count as f64;
        }
        VariableSet::new(self.n, self.dim, acc).expect("corpus shape is valid")
    }
}

/// Exact corpus posterior at one noisy state.
#[derive(Debug, Clone)]
pub struct Posterior {
    /// normalized weight of each corpus sample
    pub weights: Vec<f64>,
    pub x0_mean: VariableSet,
    /// per-variable posterior variance of x0, averaged over dimensions
    pub x0_var: Vec<f64>,
}

pub fn posterior(
    corpus: &Corpus,
    schedule: NoiseSchedule,
    x_t: &VariableSet,
    t: &NoiseLevelVector,
) -> Result<Posterior> {
    if x_t.n() != corpus.n || x_t.dim() != corpus.dim {
        return Err(Error::Contract(format!(
            "input shape {}x{} does not match corpus {}x{}",
            x_t.n(),
            x_t.dim(),
            corpus.n,
            corpus.dim
        )));
    }
    if t.len() != corpus.n {
        return Err(Error::Contract(format!(
            "level count {} does not match corpus variables {}",
            t.len(),
            corpus.n
        )));
    }
    let coeffs: Vec<(f64, f64)> =
        t.as_slice().iter().map(|&ti| schedule.eval(ti)).collect::<Result<_>>()?;

    let mut logw = vec![0.0f64; corpus.count];
    for (k, lw) in logw.iter_mut().enumerate() {
        'vars: for i in 0..corpus.n {
            let (a, b) = coeffs[i];
            let xi = x_t.var(i);
            let ci = corpus.var(k, i);
            if b > B_FLOOR {
                let d2: f64 =
                    xi.iter().zip(ci).map(|(&x, &c)| (x - a * c) * (x - a * c)).sum();
                *lw -= d2 / (2.0 * b * b);
            } else {
                let linf =
                    xi.iter().zip(ci).map(|(&x, &c)| (x - c).abs()).fold(0.0f64, f64::max);
                if linf >= MATCH_TOL {
                    *lw = f64::NEG_INFINITY;
                    break 'vars;
                }
            }
        }
    }

    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::InconsistentConditioning);
    }
    let mut weights: Vec<f64> = logw.iter().map(|&lw| (lw - max).exp()).collect();
    let z: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= z;
    }

    let mut mean = vec![0.0; corpus.n * corpus.dim];
    let mut second = vec![0.0; corpus.n * corpus.dim];
    let stride = corpus.n * corpus.dim;
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (j, &v) in corpus.data[k * stride..(k + 1) * stride].iter().enumerate() {
            mean[j] += w * v;
            second[j] += w * v * v;
        }
    }
    let x0_var = (0..corpus.n)
        .map(|i| {
            let lo = i * corpus.dim;
            (lo..lo + corpus.dim)
                .map(|j| (second[j] - mean[j] * mean[j]).max(0.0))
                .sum::<f64>()
                / corpus.dim as f64
        })
        .collect();
    Ok(Posterior { weights, x0_mean: VariableSet::new(corpus.n, corpus.dim, mean)?, x0_var })
}

/// Evaluates the exact posterior denoiser. Errors with
/// [`Error::InconsistentConditioning`] when no corpus sample matches the
/// clean variables.
pub fn exact_evaluate(
    corpus: &Corpus,
    schedule: NoiseSchedule,
    x_t: &VariableSet,
    t: &NoiseLevelVector,
) -> Result<DenoiserOutput> {
    let post = posterior(corpus, schedule, x_t, t)?;
    let n = corpus.n;
    let dim = corpus.dim;
    let mut eps = Vec::with_capacity(n * dim);
    let mut log_var = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = schedule.eval(t[i])?;
        if b > B_FLOOR {
            let xi = x_t.var(i);
            let mi = post.x0_mean.var(i);
            eps.extend(xi.iter().zip(mi).map(|(&x, &m)| (x - a * m) / b));
            let ratio = a / b;
            log_var.push((ratio * ratio * post.x0_var[i]).max(VAR_FLOOR).ln());
        } else {
            eps.extend(std::iter::repeat(0.0).take(dim));
            log_var.push(VAR_FLOOR.ln());
        }
    }
    DenoiserOutput::new(VariableSet::new(n, dim, eps)?, log_var)
}

#[derive(Debug, Clone)]
pub struct ExactDenoiser {
    corpus: Corpus,
    schedule: NoiseSchedule,
}

impl ExactDenoiser {
    pub fn new(corpus: Corpus, schedule: NoiseSchedule) -> Self {
        Self { corpus, schedule }
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }
}

impl Denoiser for ExactDenoiser {
    fn evaluate(&self, x_t: &VariableSet, t: &NoiseLevelVector) -> Result<DenoiserOutput> {
        exact_evaluate(&self.corpus, self.schedule, x_t, t)
    }

    /// The posterior mean itself; finite and informative at every level,
    /// including t = 1 where the noise parameterization degenerates.
    fn predict_x0(
        &self,
        x_t: &VariableSet,
        t: &NoiseLevelVector,
        _out: &DenoiserOutput,
    ) -> Result<VariableSet> {
        Ok(posterior(&self.corpus, self.schedule, x_t, t)?.x0_mean)
    }

    fn schedule(&self) -> NoiseSchedule {
        self.schedule
    }
}
