//! Small dense network denoiser.
//!
//! Input is the concatenation, per variable, of the noisy value and a
//! sinusoidal embedding of that variable's noise level, so the net can treat
//! every variable at its own point on the schedule. A SiLU trunk feeds two
//! linear heads: predicted noise for every variable, and a per-variable
//! log variance. The variance head is trained with a Gaussian NLL on the
//! detached noise residual, so its gradients never reach the trunk or the
//! noise head and the uncertainty estimate cannot distort the denoising fit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::denoiser::{Denoiser, DenoiserOutput};
use crate::error::{Error, Result};
use crate::process::forward_corrupt;
use crate::schedule::NoiseSchedule;
use crate::tsampler::{LevelSampler, LossWeightTable};
use crate::types::{NoiseLevelVector, VariableSet};

pub const EMB_FREQS: usize = 8;
pub const EMB_DIM: usize = 2 * EMB_FREQS;
pub const LOG_VAR_MIN: f64 = -20.0;
pub const LOG_VAR_MAX: f64 = 10.0;

/// samples per rayon work item; fixed so gradient summation order (and the
/// trained weights) do not depend on the thread count
const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    pub n: usize,
    pub dim: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
}

impl NetShape {
    pub fn input_len(&self) -> usize {
        self.n * (self.dim + EMB_DIM)
    }

    pub fn eps_len(&self) -> usize {
        self.n * self.dim
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.dim == 0 || self.hidden == 0 || self.hidden_layers == 0 {
            return Err(Error::Config(format!("degenerate net shape {self:?}")));
        }
        Ok(())
    }

    /// (fan_in, fan_out) for the trunk layers, then the two heads.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![(self.input_len(), self.hidden)];
        for _ in 1..self.hidden_layers {
            dims.push((self.hidden, self.hidden));
        }
        dims.push((self.hidden, self.eps_len()));
        dims.push((self.hidden, self.n));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerSpec {
    w: usize,
    fan_in: usize,
    fan_out: usize,
}

fn layer_specs(shape: &NetShape) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    let mut off = 0;
    for (fan_in, fan_out) in shape.layer_dims() {
        specs.push(LayerSpec { w: off, fan_in, fan_out });
        off += fan_in * fan_out + fan_out;
    }
    specs
}

/// Named half-open range into the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: String,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    shape: NetShape,
    theta: Vec<f64>,
}

impl NetParams {
    /// Fan-in scaled Gaussian weights, zero biases.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, shape: NetShape) -> Result<Self> {
        shape.validate()?;
        let mut theta = vec![0.0; shape.param_count()];
        for spec in layer_specs(&shape) {
            let scale = (1.0 / spec.fan_in as f64).sqrt();
            for w in &mut theta[spec.w..spec.w + spec.fan_in * spec.fan_out] {
                *w = rng.sample::<f64, _>(StandardNormal) * scale;
            }
        }
        Ok(Self { shape, theta })
    }

    pub fn shape(&self) -> NetShape {
        self.shape
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn blocks(&self) -> Vec<ParamBlock> {
        let specs = layer_specs(&self.shape);
        let mut names = Vec::new();
        for l in 0..self.shape.hidden_layers {
            names.push(format!("trunk{l}"));
        }
        names.push("eps".into());
        names.push("logvar".into());
        let mut blocks = Vec::new();
        for (spec, name) in specs.iter().zip(&names) {
            let wb = spec.w + spec.fan_in * spec.fan_out;
            blocks.push(ParamBlock { name: format!("{name}.w"), range: spec.w..wb });
            blocks.push(ParamBlock { name: format!("{name}.b"), range: wb..wb + spec.fan_out });
        }
        blocks
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        writeln!(
            f,
            "seqdenoise-net v1 n={} dim={} hidden={} layers={}",
            self.shape.n, self.shape.dim, self.shape.hidden, self.shape.hidden_layers
        )?;
        for w in &self.theta {
            f.write_all(&w.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = BufReader::new(File::open(path)?);
        let mut header = String::new();
        f.read_line(&mut header)?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != "seqdenoise-net" || fields[1] != "v1" {
            return Err(Error::Contract(format!("unrecognized checkpoint header: {header:?}")));
        }
        let field = |idx: usize, key: &str| -> Result<usize> {
            fields[idx]
                .strip_prefix(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Contract(format!("bad checkpoint field {:?}", fields[idx])))
        };
        let shape = NetShape {
            n: field(2, "n=")?,
            dim: field(3, "dim=")?,
            hidden: field(4, "hidden=")?,
            hidden_layers: field(5, "layers=")?,
        };
        shape.validate()?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes)?;
        let count = shape.param_count();
        if bytes.len() != count * 8 {
            return Err(Error::Contract(format!(
                "checkpoint holds {} bytes, shape needs {}",
                bytes.len(),
                count * 8
            )));
        }
        let theta = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { shape, theta })
    }
}

fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn silu_prime(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s * (1.0 + z * (1.0 - s))
}

fn embed_level(t: f64, out: &mut [f64]) {
    for k in 0..EMB_FREQS {
        let w = std::f64::consts::PI * (1u64 << k) as f64 * t;
        out[2 * k] = w.sin();
        out[2 * k + 1] = w.cos();
    }
}

fn build_input(shape: &NetShape, x_t: &VariableSet, t: &NoiseLevelVector) -> Vec<f64> {
    let stride = shape.dim + EMB_DIM;
    let mut input = vec![0.0; shape.input_len()];
    for i in 0..shape.n {
        let slot = &mut input[i * stride..(i + 1) * stride];
        slot[..shape.dim].copy_from_slice(x_t.var(i));
        embed_level(t[i], &mut slot[shape.dim..]);
    }
    input
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    for ((o, row), bias) in out.iter_mut().zip(w.chunks_exact(x.len())).zip(b) {
        *o = bias + row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
    }
}

struct ForwardPass {
    input: Vec<f64>,
    /// trunk pre-activations per layer
    zs: Vec<Vec<f64>>,
    /// trunk activations per layer
    hs: Vec<Vec<f64>>,
    eps: Vec<f64>,
    lv_raw: Vec<f64>,
}

impl ForwardPass {
    fn lv_clamped(&self) -> Vec<f64> {
        self.lv_raw.iter().map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX)).collect()
    }
}

fn forward(params: &NetParams, x_t: &VariableSet, t: &NoiseLevelVector) -> Result<ForwardPass> {
    let shape = &params.shape;
    if x_t.n() != shape.n || x_t.dim() != shape.dim {
        return Err(Error::Contract(format!(
            "net expects {}x{} variables, got {}x{}",
            shape.n,
            shape.dim,
            x_t.n(),
            x_t.dim()
        )));
    }
    if t.len() != shape.n {
        return Err(Error::Contract(format!(
            "net expects {} noise levels, got {}",
            shape.n,
            t.len()
        )));
    }
    let specs = layer_specs(shape);
    let theta = &params.theta;
    let input = build_input(shape, x_t, t);

    let mut zs = Vec::with_capacity(shape.hidden_layers);
    let mut hs = Vec::with_capacity(shape.hidden_layers);
    let mut cur = &input;
    for spec in &specs[..shape.hidden_layers] {
        let mut z = vec![0.0; spec.fan_out];
        let wb = spec.w + spec.fan_in * spec.fan_out;
        affine(&theta[spec.w..wb], &theta[wb..wb + spec.fan_out], cur, &mut z);
        let h = z.iter().map(|&v| silu(v)).collect::<Vec<_>>();
        zs.push(z);
        hs.push(h);
        cur = hs.last().unwrap();
    }

    let head = |spec: &LayerSpec| {
        let mut out = vec![0.0; spec.fan_out];
        let wb = spec.w + spec.fan_in * spec.fan_out;
        affine(&theta[spec.w..wb], &theta[wb..wb + spec.fan_out], cur, &mut out);
        out
    };
    let eps = head(&specs[shape.hidden_layers]);
    let lv_raw = head(&specs[shape.hidden_layers + 1]);
    Ok(ForwardPass { input, zs, hs, eps, lv_raw })
}

pub fn net_evaluate(
    params: &NetParams,
    x_t: &VariableSet,
    t: &NoiseLevelVector,
) -> Result<DenoiserOutput> {
    let pass = forward(params, x_t, t)?;
    let shape = params.shape;
    let lv = pass.lv_clamped();
    DenoiserOutput::new(VariableSet::new(shape.n, shape.dim, pass.eps)?, lv)
}

#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub weighted_mse: f64,
    pub nll: f64,
}

impl LossParts {
    pub fn total(&self, lambda: f64) -> f64 {
        self.weighted_mse + lambda * self.nll
    }
}

fn residuals(
    shape: &NetShape,
    pass: &ForwardPass,
    eps_true: &VariableSet,
    weights: &LossWeightTable,
    t: &NoiseLevelVector,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut diff = vec![0.0; shape.eps_len()];
    let mut sq = vec![0.0; shape.n];
    let mut w = vec![0.0; shape.n];
    for i in 0..shape.n {
        let mut acc = 0.0;
        for d in 0..shape.dim {
            let k = i * shape.dim + d;
            diff[k] = pass.eps[k] - eps_true.var(i)[d];
            acc += diff[k] * diff[k];
        }
        sq[i] = acc;
        w[i] = weights.lookup(t[i]);
    }
    (diff, sq, w)
}

/// Both loss terms, unscaled: callers apply the NLL weight themselves.
pub fn loss_parts(
    params: &NetParams,
    x_t: &VariableSet,
    t: &NoiseLevelVector,
    eps_true: &VariableSet,
    weights: &LossWeightTable,
) -> Result<LossParts> {
    let shape = params.shape;
    let pass = forward(params, x_t, t)?;
    let lv = pass.lv_clamped();
    let (_, sq, w) = residuals(&shape, &pass, eps_true, weights, t);
    let weighted_mse = sq.iter().zip(&w).map(|(s, wi)| wi * s).sum();
    let nll = lv
        .iter()
        .zip(&sq)
        .map(|(&lvi, &s)| lvi + (s / shape.dim as f64) * (-lvi).exp())
        .sum();
    Ok(LossParts { weighted_mse, nll })
}

/// Loss and its gradient for one training sample.
///
/// The NLL term sees the squared residual as a constant, so its gradient
/// reaches only the log-variance head; everything upstream is fit by the
/// weighted noise regression alone.
pub fn loss_and_grad(
    params: &NetParams,
    x_t: &VariableSet,
    t: &NoiseLevelVector,
    eps_true: &VariableSet,
    weights: &LossWeightTable,
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; params.theta.len()];
    let loss = accumulate_loss_grad(params, x_t, t, eps_true, weights, lambda, &mut grad)?;
    Ok((loss, grad))
}

/// Same as [`loss_and_grad`] but adds into an existing gradient buffer, so a
/// batch loop touches one accumulator instead of allocating per sample. Every
/// parameter receives exactly one addition per call.
fn accumulate_loss_grad(
    params: &NetParams,
    x_t: &VariableSet,
    t: &NoiseLevelVector,
    eps_true: &VariableSet,
    weights: &LossWeightTable,
    lambda: f64,
    grad: &mut [f64],
) -> Result<f64> {
    let shape = params.shape;
    let specs = layer_specs(&shape);
    let theta = &params.theta;
    if grad.len() != theta.len() {
        return Err(Error::Contract(format!(
            "gradient buffer holds {}, parameters need {}",
            grad.len(),
            theta.len()
        )));
    }
    let pass = forward(params, x_t, t)?;
    let lv = pass.lv_clamped();
    let (diff, sq, w) = residuals(&shape, &pass, eps_true, weights, t);

    let mut loss = 0.0;
    let mut g_eps = vec![0.0; shape.eps_len()];
    let mut g_lv = vec![0.0; shape.n];
    for i in 0..shape.n {
        let r = sq[i] / shape.dim as f64;
        loss += w[i] * sq[i] + lambda * (lv[i] + r * (-lv[i]).exp());
        for d in 0..shape.dim {
            let k = i * shape.dim + d;
            g_eps[k] = 2.0 * w[i] * diff[k];
        }
        let raw = pass.lv_raw[i];
        if raw > LOG_VAR_MIN && raw < LOG_VAR_MAX {
            g_lv[i] = lambda * (1.0 - r * (-lv[i]).exp());
        }
    }

    let last_h = pass.hs.last().unwrap();
    let head_back = |spec: &LayerSpec, g_out: &[f64], grad: &mut [f64], carry: Option<&mut [f64]>| {
        let wb = spec.w + spec.fan_in * spec.fan_out;
        for (o, &go) in g_out.iter().enumerate() {
            let row = &mut grad[spec.w + o * spec.fan_in..spec.w + (o + 1) * spec.fan_in];
            for (dw, &hk) in row.iter_mut().zip(last_h) {
                *dw += go * hk;
            }
            grad[wb + o] += go;
        }
        if let Some(carry) = carry {
            for (o, &go) in g_out.iter().enumerate() {
                let row = &theta[spec.w + o * spec.fan_in..spec.w + (o + 1) * spec.fan_in];
                for (c, &wk) in carry.iter_mut().zip(row) {
                    *c += go * wk;
                }
            }
        }
    };

    let mut carry = vec![0.0; shape.hidden];
    head_back(&specs[shape.hidden_layers], &g_eps, grad, Some(&mut carry));
    // variance head reads detached features: no carry into the trunk
    head_back(&specs[shape.hidden_layers + 1], &g_lv, grad, None);

    let mut delta = carry;
    for l in (0..shape.hidden_layers).rev() {
        let spec = &specs[l];
        let wb = spec.w + spec.fan_in * spec.fan_out;
        for (dz, &z) in delta.iter_mut().zip(&pass.zs[l]) {
            *dz *= silu_prime(z);
        }
        let below: &[f64] = if l == 0 { &pass.input } else { &pass.hs[l - 1] };
        let mut next = vec![0.0; spec.fan_in];
        for (o, &go) in delta.iter().enumerate() {
            let row = &mut grad[spec.w + o * spec.fan_in..spec.w + (o + 1) * spec.fan_in];
            for (dw, &hk) in row.iter_mut().zip(below) {
                *dw += go * hk;
            }
            grad[wb + o] += go;
            let wrow = &theta[spec.w + o * spec.fan_in..spec.w + (o + 1) * spec.fan_in];
            for (nx, &wk) in next.iter_mut().zip(wrow) {
                *nx += go * wk;
            }
        }
        delta = next;
    }

    Ok(loss)
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub lambda_nll: f64,
    /// record the batch loss every this many steps (0 = final only)
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch: 128,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            lambda_nll: 0.01,
            log_every: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub losses: Vec<(usize, f64)>,
    pub final_loss: f64,
}

/// Adam on the summed per-sample losses, averaged over the batch. Batches are
/// drawn sequentially from `rng` (examples uniformly, levels from `sampler`),
/// then differentiated in parallel; the result is bit-identical for a given
/// seed regardless of thread count.
pub fn train<R: Rng + ?Sized>(
    params: &mut NetParams,
    data: &[VariableSet],
    sampler: &LevelSampler,
    weights: &LossWeightTable,
    schedule: NoiseSchedule,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainReport> {
    let shape = params.shape;
    if data.is_empty() {
        return Err(Error::Config("training needs a non-empty dataset".into()));
    }
    for (k, ex) in data.iter().enumerate() {
        if ex.n() != shape.n || ex.dim() != shape.dim {
            return Err(Error::Contract(format!(
                "training example {k} is {}x{}, net expects {}x{}",
                ex.n(),
                ex.dim(),
                shape.n,
                shape.dim
            )));
        }
    }
    if cfg.batch == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }

    let p = params.theta.len();
    let mut m = vec![0.0; p];
    let mut v = vec![0.0; p];
    let mut report = TrainReport::default();

    for step in 0..cfg.steps {
        let mut samples = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let k = rng.gen_range(0..data.len());
            let levels = sampler.sample(rng, shape.n)?;
            let mut x_t = Vec::with_capacity(shape.eps_len());
            let mut eps = Vec::with_capacity(shape.eps_len());
            for i in 0..shape.n {
                let (xi, ei) = forward_corrupt(rng, schedule, data[k].var(i), levels[i])?;
                x_t.extend(xi);
                eps.extend(ei);
            }
            samples.push((
                VariableSet::new(shape.n, shape.dim, x_t)?,
                levels,
                VariableSet::new(shape.n, shape.dim, eps)?,
            ));
        }

        let partials: Vec<(f64, Vec<f64>)> = samples
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut loss = 0.0;
                let mut grad = vec![0.0; p];
                for (x_t, levels, eps) in chunk {
                    loss += accumulate_loss_grad(
                        params,
                        x_t,
                        levels,
                        eps,
                        weights,
                        cfg.lambda_nll,
                        &mut grad,
                    )?;
                }
                Ok((loss, grad))
            })
            .collect::<Result<_>>()?;

        let mut loss = 0.0;
        let mut grad = vec![0.0; p];
        for (l, g) in &partials {
            loss += l;
            for (acc, gi) in grad.iter_mut().zip(g) {
                *acc += gi;
            }
        }
        let scale = 1.0 / cfg.batch as f64;
        loss *= scale;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at step {step}: {loss}")));
        }

        let bc1 = 1.0 - cfg.beta1.powi(step as i32 + 1);
        let bc2 = 1.0 - cfg.beta2.powi(step as i32 + 1);
        for i in 0..p {
            let gi = grad[i] * scale;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            params.theta[i] -= cfg.lr * mh / (vh.sqrt() + cfg.adam_eps);
        }

        if (cfg.log_every > 0 && step % cfg.log_every == 0) || step + 1 == cfg.steps {
            report.losses.push((step, loss));
            report.final_loss = loss;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct NetDenoiser {
    params: NetParams,
    schedule: NoiseSchedule,
}

impl NetDenoiser {
    pub fn new(params: NetParams, schedule: NoiseSchedule) -> Self {
        Self { params, schedule }
    }

    pub fn params(&self) -> &NetParams {
        &self.params
    }
}

impl Denoiser for NetDenoiser {
    fn evaluate(&self, x_t: &VariableSet, t: &NoiseLevelVector) -> Result<DenoiserOutput> {
        net_evaluate(&self.params, x_t, t)
    }

    fn schedule(&self) -> NoiseSchedule {
        self.schedule
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_shape() -> NetShape {
        NetShape { n: 2, dim: 2, hidden: 8, hidden_layers: 2 }
    }

    fn sample_case(rng: &mut ChaCha8Rng, shape: NetShape) -> (VariableSet, NoiseLevelVector, VariableSet) {
        let x_t = VariableSet::new(
            shape.n,
            shape.dim,
            (0..shape.eps_len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let t = NoiseLevelVector::new((0..shape.n).map(|_| rng.gen_range(0.05..0.95)).collect())
            .unwrap();
        let eps = VariableSet::new(
            shape.n,
            shape.dim,
            (0..shape.eps_len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        (x_t, t, eps)
    }

    #[test]
    fn blocks_tile_the_parameter_vector() {
        let shape = small_shape();
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let params = NetParams::init(&mut rng, shape).unwrap();
        let blocks = params.blocks();
        assert_eq!(blocks.len(), 2 * (shape.hidden_layers + 2));
        let mut cursor = 0;
        for b in &blocks {
            assert_eq!(b.range.start, cursor);
            cursor = b.range.end;
        }
        assert_eq!(cursor, shape.param_count());
        assert_eq!(params.theta().len(), cursor);
        let names: Vec<&str> = blocks.iter().map(|b| b.name.as_str()).collect();
        assert_eq!(
            names,
            ["trunk0.w", "trunk0.b", "trunk1.w", "trunk1.b", "eps.w", "eps.b", "logvar.w", "logvar.b"]
        );
    }

    #[test]
    fn evaluate_checks_input_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let params = NetParams::init(&mut rng, small_shape()).unwrap();
        let bad = VariableSet::zeros(3, 2);
        let t = NoiseLevelVector::uniform(3, 0.5).unwrap();
        assert!(matches!(net_evaluate(&params, &bad, &t), Err(Error::Contract(_))));
    }

    #[test]
    fn finite_differences_match_the_training_gradient() {
        let shape = small_shape();
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        let mut params = NetParams::init(&mut rng, shape).unwrap();
        let (x_t, t, eps) = sample_case(&mut rng, shape);
        let weights = LossWeightTable::from_weights(vec![0.6, 1.8, 0.9, 1.2]).unwrap();
        let lambda = 0.5;

        let (_, grad) = loss_and_grad(&params, &x_t, &t, &eps, &weights, lambda).unwrap();
        let h = 1e-5;
        for block in params.blocks() {
            let full = block.name.starts_with("logvar");
            let probes: Vec<usize> = block.range.clone().step_by(7).take(4).collect();
            for idx in probes {
                let eval = |params: &NetParams| {
                    let parts = loss_parts(params, &x_t, &t, &eps, &weights).unwrap();
                    if full {
                        parts.total(lambda)
                    } else {
                        parts.weighted_mse
                    }
                };
                let orig = params.theta()[idx];
                params.theta_mut()[idx] = orig + h;
                let up = eval(&params);
                params.theta_mut()[idx] = orig - h;
                let down = eval(&params);
                params.theta_mut()[idx] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grad[idx];
                let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-6);
                assert!(
                    rel < 1e-4 || (fd - an).abs() < 1e-8,
                    "{}[{idx}]: fd {fd} vs analytic {an}",
                    block.name
                );
            }
        }
    }

    #[test]
    fn nll_gradients_touch_only_the_variance_head() {
        let shape = small_shape();
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let params = NetParams::init(&mut rng, shape).unwrap();
        let (x_t, t, eps) = sample_case(&mut rng, shape);
        let weights = LossWeightTable::flat(4);
        let (_, g0) = loss_and_grad(&params, &x_t, &t, &eps, &weights, 0.0).unwrap();
        let (_, g1) = loss_and_grad(&params, &x_t, &t, &eps, &weights, 1.0).unwrap();
        let mut lv_changed = false;
        for block in params.blocks() {
            let is_lv = block.name.starts_with("logvar");
            for i in block.range {
                if is_lv {
                    lv_changed |= g0[i] != g1[i];
                    assert_eq!(g0[i], 0.0);
                } else {
                    assert_eq!(g0[i], g1[i], "{} leaked NLL gradient", block.name);
                }
            }
        }
        assert!(lv_changed);
    }

    #[test]
    fn flat_weights_reduce_to_the_plain_squared_error() {
        let shape = small_shape();
        let mut rng = ChaCha8Rng::seed_from_u64(74);
        let params = NetParams::init(&mut rng, shape).unwrap();
        let (x_t, t, eps) = sample_case(&mut rng, shape);
        let parts = loss_parts(&params, &x_t, &t, &eps, &LossWeightTable::flat(6)).unwrap();
        let out = net_evaluate(&params, &x_t, &t).unwrap();
        let mse: f64 = out
            .eps_hat
            .as_slice()
            .iter()
            .zip(eps.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!((parts.weighted_mse - mse).abs() < 1e-12);
        let nll: f64 = (0..shape.n)
            .map(|i| {
                let lv = 2.0 * out.sigma()[i].ln();
                let r: f64 = out.eps_hat.var(i)
                    .iter()
                    .zip(eps.var(i))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    / shape.dim as f64;
                lv + r * (-lv).exp()
            })
            .sum();
        assert!((parts.nll - nll).abs() < 1e-9);
    }

    #[test]
    fn checkpoints_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let mut rng = ChaCha8Rng::seed_from_u64(75);
        let params = NetParams::init(&mut rng, small_shape()).unwrap();
        params.save(&path).unwrap();
        let back = NetParams::load(&path).unwrap();
        assert_eq!(back, params);

        std::fs::write(&path, b"not a checkpoint\n").unwrap();
        assert!(matches!(NetParams::load(&path), Err(Error::Contract(_))));
    }

    #[test]
    fn training_descends_and_is_seed_deterministic() {
        let shape = NetShape { n: 2, dim: 1, hidden: 16, hidden_layers: 2 };
        let data = vec![
            VariableSet::new(2, 1, vec![1.0, -1.0]).unwrap(),
            VariableSet::new(2, 1, vec![-1.0, 1.0]).unwrap(),
        ];
        let sampler = LevelSampler::UniformT;
        let weights = LossWeightTable::flat(8);
        let cfg = TrainConfig { steps: 300, batch: 32, log_every: 50, ..TrainConfig::default() };

        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut params = NetParams::init(&mut rng, shape).unwrap();
            let report = train(
                &mut params,
                &data,
                &sampler,
                &weights,
                NoiseSchedule::Linear,
                &cfg,
                &mut rng,
            )
            .unwrap();
            (params, report)
        };
        let (pa, ra) = run(76);
        let (pb, rb) = run(76);
        assert_eq!(pa.theta(), pb.theta());
        assert_eq!(ra.losses, rb.losses);
        assert!(ra.final_loss < ra.losses[0].1, "loss failed to drop: {:?}", ra.losses);

        let (pc, _) = run(77);
        assert_ne!(pa.theta(), pc.theta());
    }
}
