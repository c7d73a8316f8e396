//! Max-margin solvers: the diagonal energy-norm QP `P_Adam(c)` (ℓ2 margin as
//! `M = I`), the ℓ∞ margin LP, KKT certification and brute-force oracles.

mod lp;
pub mod oracle;
mod qp;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_inf};
use crate::problem::Dataset;

pub use lp::solve_linf_margin;
pub use oracle::{brute_force_qp_oracle, linf_vertex_oracle};
pub use qp::{solve_l2_margin, solve_p_adam, solve_p_adam_from, solve_weighted_qp};

/// Default KKT tolerance for the QP solver.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Relative singular-value threshold used for rank decisions.
pub const RANK_TOL: f64 = 1e-8;

/// A point of the probability simplex in `R^N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::Config("simplex vector must be non-empty".into()));
        }
        if c.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("simplex vector entries must be finite and nonnegative".into()));
        }
        let s: f64 = c.iter().sum();
        if (s - 1.0).abs() > 1e-12 * c.len().max(1) as f64 {
            return Err(Error::Config(format!("simplex vector sums to {s}, expected 1")));
        }
        Ok(SimplexVector(c))
    }

    /// Rescales a nonnegative, nonzero vector onto the simplex.
    pub fn normalize(v: Vec<f64>) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config("cannot normalize a vector with negative or non-finite entries".into()));
        }
        let s: f64 = v.iter().sum();
        if s <= 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(SimplexVector(v.into_iter().map(|x| x / s).collect()))
    }

    pub fn uniform(n: usize) -> Self {
        SimplexVector(vec![1.0 / n as f64; n])
    }

    pub fn vertex(n: usize, i: usize) -> Self {
        let mut c = vec![0.0; n];
        c[i] = 1.0;
        SimplexVector(c)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Diagonal of `M(c)`: `M[k] = √(Σ_j c_j² x_j[k]²)`.
pub fn preconditioner(data: &Dataset, c: &SimplexVector) -> Result<Vec<f64>> {
    if c.len() != data.n() {
        return Err(Error::Dimension {
            expected: data.n(),
            got: c.len(),
        });
    }
    let mut m = vec![0.0; data.d()];
    for (x, &cj) in data.rows().zip(c.as_slice()) {
        for (mk, xk) in m.iter_mut().zip(x) {
            *mk += cj * cj * xk * xk;
        }
    }
    for (k, mk) in m.iter_mut().enumerate() {
        *mk = mk.sqrt();
        if !(*mk > 0.0) {
            return Err(Error::Assumption {
                assumption: "nonzero entries",
                detail: format!("M(c) has a zero diagonal entry at coordinate {k}"),
            });
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResidual {
    pub stationarity: f64,
    pub primal_feas: f64,
    pub dual_feas: f64,
    pub comp_slack: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_feas)
            .max(self.dual_feas)
            .max(self.comp_slack)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolutionFlags {
    /// Support vectors are linearly dependent, so the dual may not be unique.
    pub licq_warning: bool,
    /// The LP has alternative optimal vertices.
    pub non_unique: bool,
}

/// Primal/dual pair of `min ½ wᵀMw s.t. w·x_i ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginSolution {
    pub w: Vec<f64>,
    pub lambda: Vec<f64>,
    pub support: Vec<usize>,
    pub objective: f64,
    pub kkt: KktResidual,
    pub flags: SolutionFlags,
}

impl MarginSolution {
    pub(crate) fn assemble(data: &Dataset, m: &[f64], w: Vec<f64>, lambda: Vec<f64>) -> Self {
        let objective = 0.5 * w.iter().zip(m).map(|(wk, mk)| mk * wk * wk).sum::<f64>();
        let support = support_set(data, &w);
        let kkt = kkt_residual_diag(&w, &lambda, data, m);
        let licq_warning = !support_independent(data, &support);
        MarginSolution {
            w,
            lambda,
            support,
            objective,
            kkt,
            flags: SolutionFlags {
                licq_warning,
                non_unique: false,
            },
        }
    }

    pub fn licq_warning(&self) -> bool {
        self.flags.licq_warning
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Minimum-‖·‖∞ separator and the normalized ℓ∞ margin `γ∞ = 1/‖w‖∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinfSolution {
    pub w: Vec<f64>,
    pub gamma_inf: f64,
    pub support: Vec<usize>,
    pub objective: f64,
    pub flags: SolutionFlags,
}

impl LinfSolution {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Scale-aware threshold for calling a constraint active.
pub fn support_tolerance(w: &[f64]) -> f64 {
    1e-6 * (1.0 + norm_inf(w))
}

/// `{i : |w·x_i − 1| ≤ tol_support}`.
pub fn support_set(data: &Dataset, w: &[f64]) -> Vec<usize> {
    let tol = support_tolerance(w);
    data.rows()
        .enumerate()
        .filter(|(_, x)| (dot(w, x) - 1.0).abs() <= tol)
        .map(|(i, _)| i)
        .collect()
}

/// True when the rows indexed by `support` are linearly independent.
pub fn support_independent(data: &Dataset, support: &[usize]) -> bool {
    if support.is_empty() {
        return true;
    }
    if support.len() > data.d() {
        return false;
    }
    let a = DMatrix::from_fn(support.len(), data.d(), |r, k| data.row(support[r])[k]);
    let sv = a.singular_values();
    let top = sv.max();
    let rank = sv.iter().filter(|s| **s > RANK_TOL * top).count();
    rank == support.len()
}

pub(crate) fn kkt_residual_diag(w: &[f64], lambda: &[f64], data: &Dataset, m: &[f64]) -> KktResidual {
    let mut stat = vec![0.0; data.d()];
    for ((sk, mk), wk) in stat.iter_mut().zip(m).zip(w) {
        *sk = mk * wk;
    }
    let mut primal = 0.0f64;
    let mut comp = 0.0f64;
    for (x, &l) in data.rows().zip(lambda) {
        for (sk, xk) in stat.iter_mut().zip(x) {
            *sk -= l * xk;
        }
        let slack = dot(w, x) - 1.0;
        primal = primal.max(-slack);
        comp = comp.max((l * slack).abs());
    }
    let dual = lambda.iter().fold(0.0f64, |acc, l| acc.max(-l));
    KktResidual {
        stationarity: norm_inf(&stat),
        primal_feas: primal.max(0.0),
        dual_feas: dual,
        comp_slack: comp,
    }
}

/// The four KKT residuals of `sol` for `P_Adam(c)`.
pub fn kkt_residual(sol: &MarginSolution, data: &Dataset, c: &SimplexVector) -> Result<KktResidual> {
    data.check_dim(&sol.w)?;
    if sol.lambda.len() != data.n() {
        return Err(Error::Dimension {
            expected: data.n(),
            got: sol.lambda.len(),
        });
    }
    let m = preconditioner(data, c)?;
    Ok(kkt_residual_diag(&sol.w, &sol.lambda, data, &m))
}

/// KKT residuals for the ℓ2 problem (`M = I`).
pub fn kkt_residual_l2(sol: &MarginSolution, data: &Dataset) -> Result<KktResidual> {
    data.check_dim(&sol.w)?;
    Ok(kkt_residual_diag(&sol.w, &sol.lambda, data, &vec![1.0; data.d()]))
}
