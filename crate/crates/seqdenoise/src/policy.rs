//! Sequentialization of the reverse process and variable-order policies.
//!
//! A plan stretches `steps_total` denoiser evaluations over `n_active`
//! variables. Each variable denoises inside its own window of `window`
//! steps, walking a linear level grid from 1 to 0; window starts are spaced
//! by `(1 - overlap) * window`, so overlap 1 recovers the fully parallel
//! sampler and overlap 0 a strict one-at-a-time schedule. Which variable
//! claims the next window is the order policy's call: a seeded permutation, a
//! constraint-graph heuristic that prefers neighbors of already-denoised
//! variables, the denoiser's own per-variable uncertainty (lowest first), or
//! a fixed user order.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::process::{denoising_step, StepSpec, VarianceMode};
use crate::schedule::NoiseSchedule;
use crate::types::{NoiseLevelVector, VariableSet};

/// Symmetric, zero-diagonal adjacency over n variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    n: usize,
    bits: Vec<bool>,
}

impl Adjacency {
    pub fn new(n: usize) -> Self {
        Self { n, bits: vec![false; n * n] }
    }

    pub fn from_matrix(n: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != n * n {
            return Err(Error::Contract(format!("adjacency length {} != {n}^2", bits.len())));
        }
        let adj = Self { n, bits };
        for i in 0..n {
            if adj.get(i, i) {
                return Err(Error::Contract(format!("adjacency has a self-edge at {i}")));
            }
            for j in 0..i {
                if adj.get(i, j) != adj.get(j, i) {
                    return Err(Error::Contract(format!("adjacency not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(adj)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn connect(&mut self, i: usize, j: usize) {
        if i != j {
            self.bits[i * self.n + j] = true;
            self.bits[j * self.n + i] = true;
        }
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.get(i, j)).count()
    }
}

/// Window placement for all active variables.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentializationPlan {
    pub n_active: usize,
    pub steps_total: usize,
    pub overlap: f64,
    pub window: usize,
    /// global step at which the k-th started window opens
    pub starts: Vec<usize>,
}

/// Computes window length and start offsets.
///
/// The nominal start of window k is round(k * (1 - overlap) * window); starts
/// are clamped to steps_total - window so every variable reaches level 0
/// within the evaluation budget even when rounding would overshoot it.
pub fn plan_schedule(
    n_active: usize,
    steps_total: usize,
    overlap: f64,
) -> Result<SequentializationPlan> {
    if n_active == 0 {
        return Err(Error::Domain("plan needs at least one active variable".into()));
    }
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::Domain(format!("overlap = {overlap} outside [0, 1]")));
    }
    if steps_total < n_active {
        return Err(Error::Infeasible(format!(
            "steps_total = {steps_total} cannot cover {n_active} variables"
        )));
    }
    let stretch = 1.0 + (n_active as f64 - 1.0) * (1.0 - overlap);
    let window = ((steps_total as f64 / stretch).round() as usize).clamp(1, steps_total);
    let cap = steps_total - window;
    let stride = (1.0 - overlap) * window as f64;
    let starts = (0..n_active)
        .map(|k| ((k as f64 * stride).round() as usize).min(cap))
        .collect();
    Ok(SequentializationPlan { n_active, steps_total, overlap, window, starts })
}

#[derive(Debug, Clone)]
pub enum OrderPolicy {
    /// seeded permutation, consumed front to back
    Random { permutation: Vec<usize> },
    /// user-supplied permutation
    Fixed { permutation: Vec<usize> },
    /// most constraint mass from already-denoised neighbors first
    Graph { adjacency: Adjacency },
    /// lowest predicted uncertainty first
    Uncertainty,
}

impl OrderPolicy {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Self {
        let mut permutation: Vec<usize> = (0..n).collect();
        permutation.shuffle(rng);
        OrderPolicy::Random { permutation }
    }

    pub fn fixed(permutation: Vec<usize>) -> Result<Self> {
        let n = permutation.len();
        let mut seen = vec![false; n];
        for &i in &permutation {
            if i >= n || seen[i] {
                return Err(Error::Contract("fixed order is not a permutation".into()));
            }
            seen[i] = true;
        }
        Ok(OrderPolicy::Fixed { permutation })
    }

    pub fn graph(adjacency: Adjacency) -> Self {
        OrderPolicy::Graph { adjacency }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OrderPolicy::Random { .. } => "random",
            OrderPolicy::Fixed { .. } => "fixed",
            OrderPolicy::Graph { .. } => "graph",
            OrderPolicy::Uncertainty => "uncertainty",
        }
    }

    fn needs_uncertainty(&self) -> bool {
        matches!(self, OrderPolicy::Uncertainty)
    }
}

/// Mutable inference state visible to order policies.
#[derive(Debug, Clone)]
pub struct InferenceState {
    pub x: VariableSet,
    pub t: Vec<f64>,
    pub started: Vec<bool>,
    pub observed: Vec<bool>,
    pub step: usize,
}

impl InferenceState {
    fn candidates(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.t.len()).filter(|&i| !self.started[i] && !self.observed[i])
    }
}

/// Picks the next variable to start denoising. Ties break toward the lowest
/// index. `uncertainty` carries the denoiser's current per-variable sigma and
/// is required by the uncertainty policy.
pub fn next_variable(
    policy: &OrderPolicy,
    state: &InferenceState,
    uncertainty: Option<&[f64]>,
) -> Result<usize> {
    let pick = match policy {
        OrderPolicy::Random { permutation } | OrderPolicy::Fixed { permutation } => permutation
            .iter()
            .copied()
            .find(|&i| !state.started[i] && !state.observed[i]),
        OrderPolicy::Graph { adjacency } => {
            if adjacency.n() != state.t.len() {
                return Err(Error::Contract(format!(
                    "adjacency over {} variables, state has {}",
                    adjacency.n(),
                    state.t.len()
                )));
            }
            state
                .candidates()
                .map(|i| {
                    let score: f64 = (0..state.t.len())
                        .filter(|&j| adjacency.get(i, j))
                        .map(|j| 1.0 - state.t[j])
                        .sum();
                    (i, score)
                })
                .fold(None::<(usize, f64)>, |best, (i, s)| match best {
                    Some((_, bs)) if bs >= s => best,
                    _ => Some((i, s)),
                })
                .map(|(i, _)| i)
        }
        OrderPolicy::Uncertainty => {
            let sigma = uncertainty.ok_or_else(|| {
                Error::Contract("uncertainty policy called without uncertainty input".into())
            })?;
            if sigma.len() != state.t.len() {
                return Err(Error::Contract("uncertainty length mismatch".into()));
            }
            state
                .candidates()
                .fold(None::<(usize, f64)>, |best, i| match best {
                    Some((_, bs)) if bs <= sigma[i] => best,
                    _ => Some((i, sigma[i])),
                })
                .map(|(i, _)| i)
        }
    };
    pick.ok_or_else(|| Error::Contract("no unstarted variable left to select".into()))
}

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub step: usize,
    pub t: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub frames: Vec<(usize, VariableSet)>,
    pub eval_count: usize,
    /// denoiser queries made purely for order selection (none: selection
    /// reuses the step's evaluation, which sees the identical state)
    pub extra_eval_count: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct InferenceConfig {
    pub schedule: NoiseSchedule,
    pub eta: f64,
    pub variance_mode: VarianceMode,
    /// record an x snapshot every this many steps (0 = never)
    pub frame_every: usize,
}

/// Runs the full reverse process under a plan and an order policy.
///
/// Observed variables stay pinned at level 0 with their given values; every
/// other variable is initialized from N(0, I) at level 1 and denoised inside
/// its window. One denoiser evaluation per global step, shared by the
/// denoising updates and (at window starts) order selection.
pub fn run_inference<R: Rng + ?Sized>(
    rng: &mut R,
    plan: &SequentializationPlan,
    policy: &OrderPolicy,
    denoiser: &dyn Denoiser,
    cfg: &InferenceConfig,
    observed: &[bool],
    values: &VariableSet,
) -> Result<(VariableSet, Trace)> {
    let n = values.n();
    if observed.len() != n {
        return Err(Error::Contract(format!(
            "observed mask length {} != {n} variables",
            observed.len()
        )));
    }
    if !(0.0..=1.0).contains(&cfg.eta) {
        return Err(Error::Domain(format!("eta = {} outside [0, 1]", cfg.eta)));
    }
    let n_active = observed.iter().filter(|&&o| !o).count();
    let mut trace = Trace::default();
    if n_active == 0 {
        return Ok((values.clone(), trace));
    }
    if plan.n_active != n_active {
        return Err(Error::Contract(format!(
            "plan covers {} variables, mask leaves {} active",
            plan.n_active, n_active
        )));
    }

    let w = plan.window;
    let mut state = InferenceState {
        x: values.clone(),
        t: observed.iter().map(|&o| if o { 0.0 } else { 1.0 }).collect(),
        started: vec![false; n],
        observed: observed.to_vec(),
        step: 0,
    };
    for i in 0..n {
        if !observed[i] {
            for v in state.x.var_mut(i) {
                *v = rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let mut start_step = vec![usize::MAX; n];
    let mut starts_at = vec![0usize; plan.steps_total];
    for &s in &plan.starts {
        starts_at[s] += 1;
    }

    for g in 0..plan.steps_total {
        state.step = g;
        let out = denoiser.evaluate(&state.x, &NoiseLevelVector::new(state.t.clone())?)?;
        trace.eval_count += 1;
        let sigma = out.sigma();

        for _ in 0..starts_at[g] {
            let need = policy.needs_uncertainty();
            let idx = next_variable(policy, &state, if need { Some(&sigma) } else { None })?;
            state.started[idx] = true;
            start_step[idx] = g;
        }

        let levels = NoiseLevelVector::new(state.t.clone())?;
        let x0_hat = denoiser.predict_x0(&state.x, &levels, &out)?;
        for i in 0..n {
            if state.observed[i] || !state.started[i] {
                continue;
            }
            let j = g - start_step[i];
            if j >= w {
                continue;
            }
            let t_cur = (w - j) as f64 / w as f64;
            let t_next = (w - j - 1) as f64 / w as f64;
            let spec = StepSpec::new(t_cur, t_next, cfg.eta)?;
            let stepped = denoising_step(
                rng,
                cfg.schedule,
                state.x.var(i),
                x0_hat.var(i),
                &spec,
                cfg.variance_mode,
            )?;
            state.x.var_mut(i).copy_from_slice(&stepped);
            if t_next >= state.t[i] {
                return Err(Error::Contract(format!(
                    "noise level for variable {i} failed to decrease at step {g}"
                )));
            }
            state.t[i] = t_next;
        }
        for i in 0..n {
            if state.observed[i] {
                state.x.var_mut(i).copy_from_slice(values.var(i));
                state.t[i] = 0.0;
            }
        }
        if !state.x.is_finite() {
            return Err(Error::NonFinite(format!("inference state at step {g}")));
        }

        trace.rows.push(TraceRow { step: g, t: state.t.clone(), sigma });
        if cfg.frame_every > 0 && (g % cfg.frame_every == 0 || g + 1 == plan.steps_total) {
            trace.frames.push((g, state.x.clone()));
        }
    }

    if state.t.iter().any(|&t| t != 0.0) {
        return Err(Error::Contract("inference ended with a variable above level 0".into()));
    }
    Ok((state.x, trace))
}
