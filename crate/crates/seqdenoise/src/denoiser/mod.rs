//! Denoisers consume a corrupted variable set with per-variable noise levels
//! and predict the noise (plus a per-variable uncertainty). Two backends:
//! an exact Bayes posterior over a finite corpus ([`exact`]) and a small
//! trainable MLP ([`net`]).

pub mod exact;
pub mod net;

use crate::error::{Error, Result};
use crate::process::{eps_to_x0, A_SINGULAR};
use crate::schedule::NoiseSchedule;
use crate::types::{NoiseLevelVector, VariableSet};

/// Noise prediction per variable and dimension plus one log-variance scalar
/// per variable (uncertainty of the noise estimate).
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserOutput {
    pub eps_hat: VariableSet,
    pub log_var: Vec<f64>,
}

impl DenoiserOutput {
    pub fn new(eps_hat: VariableSet, log_var: Vec<f64>) -> Result<Self> {
        if log_var.len() != eps_hat.n() {
            return Err(Error::Contract(format!(
                "log_var length {} != variable count {}",
                log_var.len(),
                eps_hat.n()
            )));
        }
        Ok(Self { eps_hat, log_var })
    }

    /// Per-variable predicted noise standard deviation.
    pub fn sigma(&self) -> Vec<f64> {
        self.log_var.iter().map(|lv| (0.5 * lv).exp()).collect()
    }
}

pub trait Denoiser {
    fn evaluate(&self, x_t: &VariableSet, t: &NoiseLevelVector) -> Result<DenoiserOutput>;

    /// Clean-signal estimate consistent with `evaluate`'s noise prediction.
    ///
    /// The default inverts eps_hat wherever that is well conditioned. At
    /// a_t below the singular threshold the noise parameterization carries no
    /// information about x0 (eps equals x_t there), so the default falls back
    /// to the standardized prior mean of zero; backends with a real posterior
    /// override this.
    fn predict_x0(
        &self,
        x_t: &VariableSet,
        t: &NoiseLevelVector,
        out: &DenoiserOutput,
    ) -> Result<VariableSet> {
        let schedule = self.schedule();
        let n = x_t.n();
        let dim = x_t.dim();
        let mut data = Vec::with_capacity(n * dim);
        for i in 0..n {
            let (a, _) = schedule.eval(t[i])?;
            if a < A_SINGULAR {
                data.extend(std::iter::repeat(0.0).take(dim));
            } else {
                data.extend(eps_to_x0(schedule, x_t.var(i), out.eps_hat.var(i), t[i], false)?);
            }
        }
        VariableSet::new(n, dim, data)
    }

    /// Schedule the denoiser was built against.
    fn schedule(&self) -> NoiseSchedule;
}

pub use exact::{exact_evaluate, Corpus, ExactDenoiser, Posterior};
pub use net::{train, NetDenoiser, NetParams, NetShape, TrainConfig, TrainReport};
