//! The dual fixed-point map `T(c) = λ(c)/‖λ(c)‖₁` and its Picard iteration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::margin::{solve_p_adam_from, MarginSolution, SimplexVector, DEFAULT_TOL};
use crate::problem::Dataset;

pub const DEFAULT_THRESHOLD: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub c_star: SimplexVector,
    pub w_star: Vec<f64>,
    pub iterations: usize,
    pub final_delta: f64,
    pub converged: bool,
    pub licq_warnings: usize,
}

impl FixedPointResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

fn normalize_dual(sol: &MarginSolution) -> Result<SimplexVector> {
    SimplexVector::normalize(sol.lambda.clone()).map_err(|e| match e {
        Error::ZeroVector => Error::Numeric("P_Adam(c) returned an all-zero dual".into()),
        other => other,
    })
}

/// `T(c)`: the normalized dual of `P_Adam(c)`.
pub fn t_map(c: &SimplexVector, data: &Dataset) -> Result<SimplexVector> {
    let sol = solve_p_adam_from(data, c, DEFAULT_TOL, None)?;
    normalize_dual(&sol)
}

/// Picard iteration `c ← T(c)` until `‖T(c) − c‖₂ ≤ thr` or `max_iter` solves.
/// Exhausting the budget is reported through `converged = false`.
pub fn fixed_point_iterate(
    data: &Dataset,
    c0: &SimplexVector,
    thr: f64,
    max_iter: usize,
) -> Result<FixedPointResult> {
    if !(thr > 0.0) {
        return Err(Error::Config(format!("threshold must be positive, got {thr}")));
    }
    if max_iter == 0 {
        return Err(Error::Config("max_iter must be at least 1".into()));
    }
    let mut c = c0.clone();
    let mut warm: Option<Vec<f64>> = None;
    let mut licq_warnings = 0;
    let mut delta = f64::INFINITY;
    let mut w_star = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter {
        let sol = solve_p_adam_from(data, &c, DEFAULT_TOL, warm.as_deref())?;
        iterations += 1;
        if sol.licq_warning() {
            licq_warnings += 1;
        }
        let next = normalize_dual(&sol)?;
        delta = norm2(
            &next
                .as_slice()
                .iter()
                .zip(c.as_slice())
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        w_star = sol.w.clone();
        warm = Some(sol.lambda);
        if delta <= thr {
            break;
        }
        c = next;
    }
    Ok(FixedPointResult {
        c_star: c,
        w_star,
        iterations,
        final_delta: delta,
        converged: delta <= thr,
        licq_warnings,
    })
}

/// Unit direction of `Σ_i c_i x_i / √(Σ_i c_i² x_i²)` (entrywise).
pub fn fixed_point_direction(data: &Dataset, c: &SimplexVector) -> Result<Vec<f64>> {
    let m = crate::margin::preconditioner(data, c)?;
    let mut v = vec![0.0; data.d()];
    for (x, &ci) in data.rows().zip(c.as_slice()) {
        for (vk, xk) in v.iter_mut().zip(x) {
            *vk += ci * xk;
        }
    }
    for (vk, mk) in v.iter_mut().zip(&m) {
        *vk /= mk;
    }
    crate::linalg::normalized(&v)
}
