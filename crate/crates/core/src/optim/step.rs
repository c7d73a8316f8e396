//! Single-step updates. Steppers mutate their state in place.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sign;
use crate::problem::{sample_grads, Dataset, LossKind};

fn check_beta(name: &str, b: f64) -> Result<()> {
    if !(0.0..1.0).contains(&b) {
        return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
    }
    Ok(())
}

fn check_grad(g: &[f64], d: usize) -> Result<()> {
    if g.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: g.len(),
        });
    }
    if g.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("gradient"));
    }
    Ok(())
}

/// Adam without bias correction or an epsilon term. Moments start at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub w: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
}

impl AdamState {
    pub fn new(w0: Vec<f64>, beta1: f64, beta2: f64) -> Result<Self> {
        check_beta("beta1", beta1)?;
        check_beta("beta2", beta2)?;
        let d = w0.len();
        Ok(AdamState {
            w: w0,
            m: vec![0.0; d],
            v: vec![0.0; d],
            t: 0,
            beta1,
            beta2,
        })
    }

    /// `m ← β₁m + (1-β₁)g`, `v ← β₂v + (1-β₂)g²`, `w ← w - η m/√v`.
    ///
    /// A coordinate with `v = 0` has seen only zero gradients, so `m = 0` there
    /// too; its update is taken to be zero.
    pub fn step(&mut self, g: &[f64], eta: f64) -> Result<()> {
        check_grad(g, self.w.len())?;
        let (b1, b2) = (self.beta1, self.beta2);
        for k in 0..self.w.len() {
            let gk = g[k];
            let m = b1 * self.m[k] + (1.0 - b1) * gk;
            let v = b2 * self.v[k] + (1.0 - b2) * gk * gk;
            self.m[k] = m;
            self.v[k] = v;
            if v > 0.0 {
                self.w[k] -= eta * m / v.sqrt();
            }
        }
        self.t += 1;
        Ok(())
    }
}

pub fn adam_step(mut state: AdamState, g: &[f64], eta: f64) -> Result<AdamState> {
    state.step(g, eta)?;
    Ok(state)
}

/// Signum: sign of an EMA of (mini-batch) gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignumState {
    pub w: Vec<f64>,
    pub m: Vec<f64>,
    pub t: u64,
    pub beta: f64,
    pub batch_size: usize,
}

impl SignumState {
    pub fn new(w0: Vec<f64>, beta: f64, batch_size: usize, n: usize) -> Result<Self> {
        check_beta("beta", beta)?;
        if batch_size == 0 || batch_size > n || n % batch_size != 0 {
            return Err(Error::Config(format!(
                "batch size {batch_size} must divide N = {n}"
            )));
        }
        let d = w0.len();
        Ok(SignumState {
            w: w0,
            m: vec![0.0; d],
            t: 0,
            beta,
            batch_size,
        })
    }

    /// `m ← βm + (1-β)g`, `w ← w - η sign(m)` with `sign(0) = 0`.
    pub fn step(&mut self, g: &[f64], eta: f64) -> Result<()> {
        check_grad(g, self.w.len())?;
        let b = self.beta;
        for k in 0..self.w.len() {
            let m = b * self.m[k] + (1.0 - b) * g[k];
            self.m[k] = m;
            self.w[k] -= eta * sign(m);
        }
        self.t += 1;
        Ok(())
    }
}

pub fn signum_step(mut state: SignumState, g: &[f64], eta: f64) -> Result<SignumState> {
    state.step(g, eta)?;
    Ok(state)
}

/// The AdamProxy direction `∇L(w) / √(Σ_i ∇L_i(w)²)`, entrywise.
pub fn adamproxy_direction(w: &[f64], data: &Dataset, kind: LossKind) -> Result<Vec<f64>> {
    let grads = sample_grads(w, data, kind)?;
    let n = data.n() as f64;
    let mut out = vec![0.0; data.d()];
    for (k, o) in out.iter_mut().enumerate() {
        let (mut sum, mut sq) = (0.0, 0.0);
        for g in &grads {
            sum += g[k];
            sq += g[k] * g[k];
        }
        if sq <= 0.0 || !sq.is_finite() {
            return Err(Error::ZeroDenominator(k));
        }
        *o = (sum / n) / sq.sqrt();
    }
    Ok(out)
}

/// `w - η · ∇L(w) / √(Σ_i ∇L_i(w)²)`.
pub fn adamproxy_step(w: &[f64], data: &Dataset, kind: LossKind, eta: f64) -> Result<Vec<f64>> {
    let delta = adamproxy_direction(w, data, kind)?;
    Ok(w.iter().zip(&delta).map(|(wk, dk)| wk - eta * dk).collect())
}
