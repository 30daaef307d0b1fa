//! Forward corruption and the generalized reverse step.
//!
//! The forward process draws x_t = a_t * x0 + b_t * eps with eps ~ N(0, I).
//! The reverse step from level t to t_star < t samples
//!
//!   x_{t_star} ~ N( a_{t_star} * x0_hat
//!                   + sqrt(b_{t_star}^2 - sigma^2) * (x_t - a_t * x0_hat) / b_t,
//!                   sigma^2 I )
//!
//! which is written in terms of x0_hat rather than eps_hat so it stays finite
//! at t = 1 where a_t = 0. The noise scale sigma interpolates between a
//! deterministic step (eta = 0) and the fully Markovian forward process
//! (eta = 1).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;

/// Threshold below which a_t is treated as singular when inverting eps to x0.
pub const A_SINGULAR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceMode {
    /// step variance sigma^2
    Lower,
    /// step variance (b_t / b_{t_star}) * sigma^2
    Upper,
}

impl std::str::FromStr for VarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(VarianceMode::Lower),
            "upper" => Ok(VarianceMode::Upper),
            other => Err(Error::Config(format!("unknown variance mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for VarianceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VarianceMode::Lower => "lower",
            VarianceMode::Upper => "upper",
        })
    }
}

/// One reverse decrement t -> t_star for a single variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSpec {
    pub t: f64,
    pub t_star: f64,
    pub eta: f64,
}

impl StepSpec {
    pub fn new(t: f64, t_star: f64, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) || !(0.0..=1.0).contains(&t_star) || t_star >= t {
            return Err(Error::Domain(format!(
                "invalid step levels: need 0 <= t_star < t <= 1, got t_star = {t_star}, t = {t}"
            )));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Domain(format!("eta = {eta} outside [0, 1]")));
        }
        Ok(Self { t, t_star, eta })
    }
}

/// Mean and (scalar) standard deviation of the Gaussian reverse step.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStepParams {
    pub mean: Vec<f64>,
    pub std: f64,
}

/// Draws x_t from the forward process and returns it together with the noise
/// that produced it, so training can supervise eps directly.
pub fn forward_corrupt<R: Rng + ?Sized>(
    rng: &mut R,
    schedule: NoiseSchedule,
    x0: &[f64],
    t: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (a, b) = schedule.eval(t)?;
    let mut x_t = Vec::with_capacity(x0.len());
    let mut eps = Vec::with_capacity(x0.len());
    for &v in x0 {
        let e: f64 = rng.sample(StandardNormal);
        x_t.push(a * v + b * e);
        eps.push(e);
    }
    Ok((x_t, eps))
}

/// Noise scale of the reverse step. eta = 0 gives the deterministic step,
/// eta = 1 the unique scale under which the forward process is Markovian.
pub fn sigma_eta(schedule: NoiseSchedule, t_star: f64, t: f64, eta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Domain(format!("eta = {eta} outside [0, 1]")));
    }
    if !(0.0..=1.0).contains(&t) || !(0.0..=1.0).contains(&t_star) || t_star >= t {
        return Err(Error::Domain(format!(
            "sigma_eta needs 0 <= t_star < t <= 1, got t_star = {t_star}, t = {t}"
        )));
    }
    let (a_t, b_t) = schedule.eval(t)?;
    let (a_s, b_s) = schedule.eval(t_star)?;
    if b_s == 0.0 {
        return Ok(0.0);
    }
    if a_s == 0.0 {
        return Err(Error::Domain("sigma_eta undefined at a(t_star) = 0".into()));
    }
    let ratio = (a_t * b_s) / (a_s * b_t);
    // roundoff can push the argument a hair below zero; t_star < t keeps ratio <= 1
    let arg = (1.0 - ratio * ratio).max(0.0);
    Ok(eta * b_s * arg.sqrt())
}

/// Gaussian parameters of the reverse step given an estimate of the clean x0.
pub fn reverse_posterior(
    schedule: NoiseSchedule,
    x_t: &[f64],
    x0_hat: &[f64],
    spec: &StepSpec,
) -> Result<GaussianStepParams> {
    if x_t.len() != x0_hat.len() {
        return Err(Error::Contract(format!(
            "x_t length {} != x0_hat length {}",
            x_t.len(),
            x0_hat.len()
        )));
    }
    let (a_t, b_t) = schedule.eval(spec.t)?;
    let (a_s, b_s) = schedule.eval(spec.t_star)?;
    let sigma = sigma_eta(schedule, spec.t_star, spec.t, spec.eta)?;
    let keep = (b_s * b_s - sigma * sigma).max(0.0).sqrt();
    let mean = x_t
        .iter()
        .zip(x0_hat)
        .map(|(&xt, &x0)| a_s * x0 + (xt - a_t * x0) / b_t * keep)
        .collect();
    Ok(GaussianStepParams { mean, std: sigma })
}

/// Inverts the corruption: x0_hat = (x_t - b_t * eps_hat) / a_t.
///
/// Near t = 1 the division is singular; callers must opt in via
/// `allow_singular`, which clamps the divisor to `A_SINGULAR`. Denoisers
/// provide a better x0 estimate there.
pub fn eps_to_x0(
    schedule: NoiseSchedule,
    x_t: &[f64],
    eps_hat: &[f64],
    t: f64,
    allow_singular: bool,
) -> Result<Vec<f64>> {
    if x_t.len() != eps_hat.len() {
        return Err(Error::Contract(format!(
            "x_t length {} != eps_hat length {}",
            x_t.len(),
            eps_hat.len()
        )));
    }
    let (a, b) = schedule.eval(t)?;
    let a = if a < A_SINGULAR {
        if !allow_singular {
            return Err(Error::Singular(format!(
                "eps_to_x0 at t = {t}: a_t = {a} below {A_SINGULAR}"
            )));
        }
        A_SINGULAR
    } else {
        a
    };
    Ok(x_t.iter().zip(eps_hat).map(|(&xt, &e)| (xt - b * e) / a).collect())
}

/// Applies one reverse decrement to a single variable, drawing fresh noise
/// when the step is stochastic. eta = 0 returns the posterior mean exactly.
pub fn denoising_step<R: Rng + ?Sized>(
    rng: &mut R,
    schedule: NoiseSchedule,
    x_t: &[f64],
    x0_hat: &[f64],
    spec: &StepSpec,
    mode: VarianceMode,
) -> Result<Vec<f64>> {
    let params = reverse_posterior(schedule, x_t, x0_hat, spec)?;
    let mut var = params.std * params.std;
    if mode == VarianceMode::Upper && var > 0.0 {
        let (_, b_t) = schedule.eval(spec.t)?;
        let (_, b_s) = schedule.eval(spec.t_star)?;
        var *= b_t / b_s;
    }
    if var == 0.0 {
        return Ok(params.mean);
    }
    let std = var.sqrt();
    Ok(params
        .mean
        .iter()
        .map(|&m| m + std * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ALL_SCHEDULES;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_corrupt_matches_declared_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = 200_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..m {
            let (x, _) = forward_corrupt(&mut rng, NoiseSchedule::Linear, &[1.0], 0.4).unwrap();
            sum += x[0];
            sumsq += x[0] * x[0];
        }
        let mean = sum / m as f64;
        let var = sumsq / m as f64 - mean * mean;
        assert!((mean - 0.6).abs() < 3.0 * 0.4 / (m as f64).sqrt());
        assert!((var - 0.16).abs() < 3.0 * 0.16 * (2.0 / m as f64).sqrt());
    }

    #[test]
    fn forward_corrupt_returns_the_noise_it_used() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x0 = [0.3, -1.2, 2.0];
        let (x_t, eps) = forward_corrupt(&mut rng, NoiseSchedule::Cosine, &x0, 0.7).unwrap();
        let (a, b) = NoiseSchedule::Cosine.eval(0.7).unwrap();
        for i in 0..3 {
            assert!((x_t[i] - (a * x0[i] + b * eps[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn sigma_eta_known_value() {
        let s = sigma_eta(NoiseSchedule::Linear, 0.25, 0.5, 1.0).unwrap();
        assert!((s - 0.23570226039551584).abs() < 1e-12, "sigma = {s}");
    }

    #[test]
    fn sigma_eta_is_zero_when_deterministic() {
        for sched in ALL_SCHEDULES {
            assert_eq!(sigma_eta(sched, 0.3, 0.8, 0.0).unwrap(), 0.0);
            // t_star = 0 has b = 0, so sigma vanishes for every eta
            assert_eq!(sigma_eta(sched, 0.0, 0.5, 1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn sigma_eta_never_exceeds_target_level_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for sched in ALL_SCHEDULES {
            for _ in 0..1000 {
                let t_star: f64 = rng.gen_range(0.0..0.98);
                let t: f64 = rng.gen_range(t_star + 0.01..1.0);
                let eta: f64 = rng.gen_range(0.0..=1.0);
                let s = sigma_eta(sched, t_star, t, eta).unwrap();
                let (_, b_s) = sched.eval(t_star).unwrap();
                assert!(s <= b_s + 1e-12, "{sched}: sigma {s} > b {b_s}");
            }
        }
    }

    /// With sigma at its Markov value, the mean of q(x_t | x_{t_star}, x0)
    /// must not depend on x0. The coefficient below is the closed form of
    /// that dependence.
    #[test]
    fn markov_sigma_removes_x0_from_forward_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for sched in ALL_SCHEDULES {
            for _ in 0..200 {
                let t_star: f64 = rng.gen_range(0.05..0.9);
                let t: f64 = rng.gen_range(t_star + 0.02..1.0);
                let (a_t, b_t) = sched.eval(t).unwrap();
                let (a_s, b_s) = sched.eval(t_star).unwrap();
                let sigma = sigma_eta(sched, t_star, t, 1.0).unwrap();
                let keep = (b_s * b_s - sigma * sigma).max(0.0).sqrt();
                let coef = (b_t * b_t * sigma * sigma / (b_s * b_s))
                    * ((keep / (b_t * sigma * sigma)) * ((a_t / b_t) * keep - a_s)
                        + a_t / (b_t * b_t));
                assert!(coef.abs() < 1e-9, "{sched}: x0 coefficient {coef}");
            }
        }
    }

    #[test]
    fn eps_inversion_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let sched = if rng.gen_bool(0.5) { NoiseSchedule::Linear } else { NoiseSchedule::Cosine };
            let t: f64 = rng.gen_range(0.01..0.9);
            let x0: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (x_t, eps) = forward_corrupt(&mut rng, sched, &x0, t).unwrap();
            let back = eps_to_x0(sched, &x_t, &eps, t, false).unwrap();
            for (u, v) in x0.iter().zip(&back) {
                assert!((u - v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn eps_inversion_guards_the_singular_endpoint() {
        let err = eps_to_x0(NoiseSchedule::Linear, &[0.5], &[0.5], 1.0, false);
        assert!(matches!(err, Err(Error::Singular(_))));
        assert!(eps_to_x0(NoiseSchedule::Linear, &[0.5], &[0.5], 1.0, true).is_ok());
    }

    #[test]
    fn deterministic_step_returns_posterior_mean_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let spec = StepSpec::new(0.6, 0.3, 0.0).unwrap();
        let x_t = [0.4, -0.9];
        let x0 = [1.0, 0.5];
        let params = reverse_posterior(NoiseSchedule::Linear, &x_t, &x0, &spec).unwrap();
        let stepped =
            denoising_step(&mut rng, NoiseSchedule::Linear, &x_t, &x0, &spec, VarianceMode::Lower)
                .unwrap();
        assert_eq!(params.std, 0.0);
        assert_eq!(stepped, params.mean);
        let again =
            denoising_step(&mut rng, NoiseSchedule::Linear, &x_t, &x0, &spec, VarianceMode::Lower)
                .unwrap();
        assert_eq!(stepped, again);
    }

    #[test]
    fn posterior_mean_is_finite_at_full_noise() {
        let spec = StepSpec::new(1.0, 0.95, 1.0).unwrap();
        let params =
            reverse_posterior(NoiseSchedule::Linear, &[1.7, -0.2], &[0.5, 0.5], &spec).unwrap();
        assert!(params.mean.iter().all(|m| m.is_finite()));
        assert!(params.std.is_finite());
    }

    #[test]
    fn upper_variance_widens_the_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let spec = StepSpec::new(0.8, 0.4, 1.0).unwrap();
        let (_, b_t) = NoiseSchedule::Linear.eval(0.8).unwrap();
        let (_, b_s) = NoiseSchedule::Linear.eval(0.4).unwrap();
        let sigma = sigma_eta(NoiseSchedule::Linear, 0.4, 0.8, 1.0).unwrap();
        let m = 100_000;
        let mut lower_var = 0.0;
        let mut upper_var = 0.0;
        let params = reverse_posterior(NoiseSchedule::Linear, &[0.2], &[1.0], &spec).unwrap();
        for _ in 0..m {
            let lo = denoising_step(&mut rng, NoiseSchedule::Linear, &[0.2], &[1.0], &spec, VarianceMode::Lower)
                .unwrap();
            let hi = denoising_step(&mut rng, NoiseSchedule::Linear, &[0.2], &[1.0], &spec, VarianceMode::Upper)
                .unwrap();
            lower_var += (lo[0] - params.mean[0]).powi(2);
            upper_var += (hi[0] - params.mean[0]).powi(2);
        }
        lower_var /= m as f64;
        upper_var /= m as f64;
        let se = sigma * sigma * (2.0 / m as f64).sqrt() * 3.0;
        assert!((lower_var - sigma * sigma).abs() < se);
        assert!((upper_var - sigma * sigma * b_t / b_s).abs() < se * b_t / b_s);
    }

    #[test]
    fn step_spec_rejects_bad_levels() {
        assert!(StepSpec::new(0.5, 0.5, 0.0).is_err());
        assert!(StepSpec::new(0.4, 0.5, 0.0).is_err());
        assert!(StepSpec::new(1.1, 0.5, 0.0).is_err());
        assert!(StepSpec::new(0.5, 0.2, 1.5).is_err());
    }

    /// Stepping 1 -> 0.5 -> 0.25 and 1 -> 0.25 with the true x0 must produce
    /// the same marginal N(a * x0, b^2).
    #[test]
    fn two_step_marginal_matches_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x0 = [0.8];
        let m = 200_000;
        let (a, b) = NoiseSchedule::Linear.eval(0.25).unwrap();
        let mut acc = |xs: &mut dyn FnMut(&mut ChaCha8Rng) -> f64, rng: &mut ChaCha8Rng| {
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..m {
                let v = xs(rng);
                s += v;
                s2 += v * v;
            }
            let mean = s / m as f64;
            (mean, s2 / m as f64 - mean * mean)
        };
        let spec_a = StepSpec::new(1.0, 0.5, 1.0).unwrap();
        let spec_b = StepSpec::new(0.5, 0.25, 1.0).unwrap();
        let spec_direct = StepSpec::new(1.0, 0.25, 1.0).unwrap();
        let (m2, v2) = acc(
            &mut |rng| {
                let (x1, _) = forward_corrupt(rng, NoiseSchedule::Linear, &x0, 1.0).unwrap();
                let xh = denoising_step(rng, NoiseSchedule::Linear, &x1, &x0, &spec_a, VarianceMode::Lower)
                    .unwrap();
                denoising_step(rng, NoiseSchedule::Linear, &xh, &x0, &spec_b, VarianceMode::Lower)
                    .unwrap()[0]
            },
            &mut rng,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (m1, v1) = acc(
            &mut |rng| {
                let (x1, _) = forward_corrupt(rng, NoiseSchedule::Linear, &x0, 1.0).unwrap();
                denoising_step(rng, NoiseSchedule::Linear, &x1, &x0, &spec_direct, VarianceMode::Lower)
                    .unwrap()[0]
            },
            &mut rng,
        );
        let se_mean = 3.0 * b / (m as f64).sqrt();
        let se_var = 3.0 * b * b * (2.0 / m as f64).sqrt();
        for (mean, var) in [(m1, v1), (m2, v2)] {
            assert!((mean - a * x0[0]).abs() < se_mean, "mean {mean}");
            assert!((var - b * b).abs() < se_var, "var {var}");
        }
    }
}
