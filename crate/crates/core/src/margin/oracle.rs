//! Exhaustive reference solvers for small instances.

use nalgebra::{DMatrix, DVector};

use super::{preconditioner, MarginSolution, SimplexVector};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::problem::Dataset;

/// Largest `N` accepted by [`brute_force_qp_oracle`].
pub const ORACLE_MAX_N: usize = 12;

/// Solves `P_Adam(c)` by enumerating every candidate active set `S`, solving
/// the equality-constrained problem on `S`, and keeping the cheapest feasible
/// point with nonnegative multipliers.
pub fn brute_force_qp_oracle(data: &Dataset, c: &SimplexVector) -> Result<MarginSolution> {
    let (n, d) = (data.n(), data.d());
    if n > ORACLE_MAX_N {
        return Err(Error::Config(format!("brute-force oracle needs N <= {ORACLE_MAX_N}, got {n}")));
    }
    let m = preconditioner(data, c)?;
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for mask in 1u32..(1u32 << n) {
        let s: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let q = DMatrix::from_fn(s.len(), s.len(), |a, b| {
            (0..d).map(|k| data.row(s[a])[k] * data.row(s[b])[k] / m[k]).sum::<f64>()
        });
        let Some(ls) = q.lu().solve(&DVector::from_element(s.len(), 1.0)) else {
            continue;
        };
        if ls.iter().any(|v| !v.is_finite() || *v < -1e-12) {
            continue;
        }
        let mut lambda = vec![0.0; n];
        let mut w = vec![0.0; d];
        for (&i, &l) in s.iter().zip(ls.iter()) {
            lambda[i] = l.max(0.0);
            for k in 0..d {
                w[k] += l * data.row(i)[k] / m[k];
            }
        }
        if data.rows().any(|x| dot(&w, x) < 1.0 - 1e-9) {
            continue;
        }
        let obj = 0.5 * w.iter().zip(&m).map(|(wk, mk)| mk * wk * wk).sum::<f64>();
        if best.as_ref().map_or(true, |(b, _, _)| obj < *b) {
            best = Some((obj, w, lambda));
        }
    }
    let (_, w, lambda) = best.ok_or(Error::Infeasible)?;
    Ok(MarginSolution::assemble(data, &m, w, lambda))
}

fn combinations(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// ℓ∞ margin by vertex enumeration of `min t s.t. w·x_i ≥ 1, −t ≤ w_k ≤ t`.
/// Returns `(γ∞, w)` for the best vertex.
pub fn linf_vertex_oracle(data: &Dataset) -> Result<(f64, Vec<f64>)> {
    let (n, d) = (data.n(), data.d());
    // Constraint rows `a·(w, t) ≥ β`.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 2 * d);
    for x in data.rows() {
        let mut a = x.to_vec();
        a.push(0.0);
        rows.push((a, 1.0));
    }
    for k in 0..d {
        for s in [1.0, -1.0] {
            let mut a = vec![0.0; d + 1];
            a[k] = s;
            a[d] = 1.0;
            rows.push((a, 0.0));
        }
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    combinations(rows.len(), d + 1, |active| {
        let a = DMatrix::from_fn(d + 1, d + 1, |r, c| rows[active[r]].0[c]);
        let b = DVector::from_fn(d + 1, |r, _| rows[active[r]].1);
        let Some(z) = a.lu().solve(&b) else {
            return;
        };
        let z: Vec<f64> = z.iter().copied().collect();
        if z.iter().any(|v| !v.is_finite()) {
            return;
        }
        let feasible = rows.iter().all(|(a, b)| dot(a, &z) >= b - 1e-9 * (1.0 + b.abs()));
        if feasible && best.as_ref().map_or(true, |(t, _)| z[d] < *t) {
            best = Some((z[d], z[..d].to_vec()));
        }
    });
    match best {
        Some((t, w)) if t > 0.0 => Ok((1.0 / t, w)),
        _ => Err(Error::Infeasible),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    #[test]
    fn single_point_matches_closed_form() {
        let data = Dataset::custom(vec![vec![1.0, 2.0]]).unwrap();
        let s = brute_force_qp_oracle(&data, &SimplexVector::uniform(1)).unwrap();
        assert!(max_abs_diff(&s.w, &[1.0 / 3.0, 1.0 / 3.0]) < 1e-14);
        assert!(!s.support.is_empty());
        let (g, w) = linf_vertex_oracle(&data).unwrap();
        assert!((g - 3.0).abs() < 1e-12);
        assert!(max_abs_diff(&w, &[1.0 / 3.0, 1.0 / 3.0]) < 1e-12);
    }

    #[test]
    fn rejects_large_n() {
        let rows = vec![vec![1.0]; ORACLE_MAX_N + 1];
        let data = Dataset::custom(rows).unwrap();
        assert!(matches!(
            brute_force_qp_oracle(&data, &SimplexVector::uniform(ORACLE_MAX_N + 1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn combinations_count() {
        let mut count = 0;
        combinations(6, 3, |_| count += 1);
        assert_eq!(count, 20);
    }
}
