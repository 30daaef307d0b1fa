//! Noise schedules map a level t in [0, 1] to coefficients (a_t, b_t) of the
//! corruption x_t = a_t * x0 + b_t * eps. Both schedules hit the endpoints
//! exactly: (a, b) = (1, 0) at t = 0 and (0, 1) at t = 1, with a strictly
//! decreasing and b strictly increasing in between.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseSchedule {
    /// a = 1 - t, b = t
    Linear,
    /// a = cos(pi t / 2), b = sin(pi t / 2); variance preserving
    Cosine,
}

impl NoiseSchedule {
    pub fn eval(self, t: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("schedule evaluated at t = {t} outside [0, 1]")));
        }
        Ok(match self {
            NoiseSchedule::Linear => (1.0 - t, t),
            NoiseSchedule::Cosine => {
                // cos(FRAC_PI_2) rounds to ~6e-17; pin the endpoints so that
                // a(1) = 0 and b(0) = 0 hold exactly for every schedule.
                if t == 0.0 {
                    (1.0, 0.0)
                } else if t == 1.0 {
                    (0.0, 1.0)
                } else {
                    let h = std::f64::consts::FRAC_PI_2 * t;
                    (h.cos(), h.sin())
                }
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            NoiseSchedule::Linear => "linear",
            NoiseSchedule::Cosine => "cosine",
        }
    }
}

impl std::str::FromStr for NoiseSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(NoiseSchedule::Linear),
            "cosine" => Ok(NoiseSchedule::Cosine),
            other => Err(Error::Config(format!("unknown schedule '{other}'"))),
        }
    }
}

impl std::fmt::Display for NoiseSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub const ALL_SCHEDULES: [NoiseSchedule; 2] = [NoiseSchedule::Linear, NoiseSchedule::Cosine];
