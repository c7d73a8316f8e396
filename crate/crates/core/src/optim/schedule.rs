use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `η_t = η₀ (t + 2)^(-a)`
    Polynomial,
    /// `η_t = η₀`
    Constant,
}

/// Learning-rate schedule indexed by the zero-based step counter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub eta0: f64,
    #[serde(default = "default_exponent")]
    pub a: f64,
}

fn default_exponent() -> f64 {
    0.8
}

impl Schedule {
    pub fn polynomial(eta0: f64, a: f64) -> Self {
        Schedule {
            kind: ScheduleKind::Polynomial,
            eta0,
            a,
        }
    }

    pub fn constant(eta0: f64) -> Self {
        Schedule {
            kind: ScheduleKind::Constant,
            eta0,
            a: 0.0,
        }
    }

    /// `η_t = 0.1 (t + 2)^(-0.8)`, used by every Adam and Signum experiment.
    pub fn experiment_default() -> Self {
        Self::polynomial(0.1, 0.8)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::Config(format!("eta0 must be positive, got {}", self.eta0)));
        }
        if self.kind == ScheduleKind::Polynomial && !(self.a > 0.0 && self.a <= 1.0) {
            return Err(Error::Config(format!("exponent a must lie in (0, 1], got {}", self.a)));
        }
        Ok(())
    }

    #[inline]
    pub fn eta_unchecked(&self, t: u64) -> f64 {
        match self.kind {
            ScheduleKind::Polynomial => self.eta0 * (t as f64 + 2.0).powf(-self.a),
            ScheduleKind::Constant => self.eta0,
        }
    }
}

pub fn schedule_eta(s: &Schedule, t: u64) -> Result<f64> {
    s.validate()?;
    Ok(s.eta_unchecked(t))
}
