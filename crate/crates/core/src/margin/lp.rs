//! ℓ∞ max-margin LP via a dense-tableau primal simplex with Bland's rule.
//!
//! With `u = w + 1 ∈ [0, 2]^d`, `D = max_i ‖x_i‖₁` and `σ = s + D`, the
//! problem `max s s.t. w·x_i ≥ s, ‖w‖∞ ≤ 1` becomes
//!
//! ```text
//! max σ  s.t.  σ − x_i·u ≤ D − Σ_k x_i[k],   u_k ≤ 2,   σ, u ≥ 0
//! ```
//!
//! whose right-hand side is nonnegative, so the origin is a feasible basis.

use nalgebra::{DMatrix, DVector};

use super::{support_set, LinfSolution, SolutionFlags};
use crate::error::{Error, Result};
use crate::linalg::norm_inf;
use crate::problem::Dataset;

const PIVOT_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 100_000;

struct Tableau {
    rows: usize,
    cols: usize,
    /// `rows` constraint rows then the objective row, each `cols + 1` wide.
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.at(pr, pc);
        for c in 0..w {
            self.t[pr * w + c] /= p;
        }
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f != 0.0 {
                for c in 0..w {
                    self.t[r * w + c] -= f * self.t[pr * w + c];
                }
            }
        }
        self.basis[pr] = pc;
    }

    /// Row chosen by the ratio test for entering column `pc`, ties broken by
    /// the smallest basic index.
    fn ratio_row(&self, pc: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.rows {
            let a = self.at(r, pc);
            if a > PIVOT_TOL {
                let ratio = self.rhs(r).max(0.0) / a;
                best = match best {
                    None => Some((r, ratio)),
                    Some((br, bv)) => {
                        if ratio < bv - 1e-14 || (ratio <= bv + 1e-14 && self.basis[r] < self.basis[br]) {
                            Some((r, ratio))
                        } else {
                            Some((br, bv))
                        }
                    }
                }
            }
        }
        best
    }

    /// Reduced cost of column `c` (positive means improving).
    fn reduced(&self, c: usize) -> f64 {
        -self.at(self.rows, c)
    }
}

/// Solves the ℓ∞ max-margin problem. Returns the minimum-‖·‖∞ separator
/// `w` with `min_i w·x_i = 1` and `γ∞ = 1/‖w‖∞`.
pub fn solve_linf_margin(data: &Dataset) -> Result<LinfSolution> {
    let (n, d) = (data.n(), data.d());
    let m = n + d;
    let cols = 1 + d + m;
    let big_d = data.max_l1_norm();
    if !(big_d > 0.0) {
        return Err(Error::Infeasible);
    }
    let mut a = DMatrix::<f64>::zeros(m, cols);
    let mut b = DVector::<f64>::zeros(m);
    for (i, x) in data.rows().enumerate() {
        a[(i, 0)] = 1.0;
        for k in 0..d {
            a[(i, 1 + k)] = -x[k];
        }
        b[i] = (big_d - x.iter().sum::<f64>()).max(0.0);
    }
    for k in 0..d {
        a[(n + k, 1 + k)] = 1.0;
        b[n + k] = 2.0;
    }
    for r in 0..m {
        a[(r, 1 + d + r)] = 1.0;
    }

    let w = cols + 1;
    let mut t = vec![0.0; (m + 1) * w];
    for r in 0..m {
        for c in 0..cols {
            t[r * w + c] = a[(r, c)];
        }
        t[r * w + cols] = b[r];
    }
    t[m * w] = -1.0;
    let mut tab = Tableau {
        rows: m,
        cols,
        t,
        basis: (1 + d..cols).collect(),
    };

    let mut pivots = 0;
    loop {
        let Some(pc) = (0..cols).find(|&c| tab.reduced(c) > PIVOT_TOL) else {
            break;
        };
        let Some((pr, _)) = tab.ratio_row(pc) else {
            return Err(Error::Numeric("ℓ∞ margin LP reported unbounded".into()));
        };
        tab.pivot(pr, pc);
        pivots += 1;
        if pivots > MAX_PIVOTS {
            return Err(Error::Numeric("ℓ∞ margin LP exceeded the pivot limit".into()));
        }
    }

    let non_unique = has_alternative_optimum(&tab, d);

    // Recompute the final vertex from the original data for accuracy.
    let bmat = DMatrix::from_fn(m, m, |r, c| a[(r, tab.basis[c])]);
    let zb = bmat
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numeric("singular final simplex basis".into()))?;
    let mut z = vec![0.0; cols];
    for (r, &j) in tab.basis.iter().enumerate() {
        z[j] = zb[r];
    }
    let sigma = z[0];
    let gamma = sigma - big_d;
    if !(gamma > 1e-12 * big_d) {
        return Err(Error::Infeasible);
    }
    let w_unit: Vec<f64> = z[1..=d].iter().map(|u| (u - 1.0).clamp(-1.0, 1.0)).collect();
    let margin = data
        .rows()
        .map(|x| crate::linalg::dot(&w_unit, x))
        .fold(f64::INFINITY, f64::min);
    let gamma = gamma.min(margin);
    let w_min: Vec<f64> = w_unit.iter().map(|v| v / gamma).collect();
    let objective = norm_inf(&w_min);
    let support = support_set(data, &w_min);
    Ok(LinfSolution {
        w: w_min,
        gamma_inf: 1.0 / objective,
        support,
        objective,
        flags: SolutionFlags {
            licq_warning: false,
            non_unique,
        },
    })
}

/// True when some zero-reduced-cost nonbasic column can move the `u` block a
/// strictly positive distance while staying optimal.
fn has_alternative_optimum(tab: &Tableau, d: usize) -> bool {
    let u_cols = 1..=d;
    for c in 0..tab.cols {
        if tab.basis.contains(&c) || tab.reduced(c).abs() > 1e-9 {
            continue;
        }
        let step = match tab.ratio_row(c) {
            Some((_, s)) => s,
            None => f64::INFINITY,
        };
        if step <= 1e-9 {
            continue;
        }
        let moves_u = u_cols.contains(&c)
            || (0..tab.rows).any(|r| u_cols.contains(&tab.basis[r]) && tab.at(r, c).abs() > 1e-9);
        if moves_u {
            return true;
        }
    }
    false
}
