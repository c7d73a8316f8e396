//! Dual projected-gradient ascent for `min ½ wᵀMw s.t. Xw ≥ 1` with diagonal
//! `M`, followed by an active-set refinement of the dual support.

use nalgebra::{DMatrix, DVector};

use super::{preconditioner, MarginSolution, SimplexVector, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::problem::Dataset;

const MAX_ITERS: usize = 1_000_000;
const POLISH_EVERY: usize = 64;

struct DualQp<'a> {
    data: &'a Dataset,
    minv: Vec<f64>,
    q: Vec<f64>,
    xmax: f64,
}

impl<'a> DualQp<'a> {
    fn new(data: &'a Dataset, m: &[f64]) -> Self {
        let n = data.n();
        let minv: Vec<f64> = m.iter().map(|v| 1.0 / v).collect();
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v: f64 = data
                    .row(i)
                    .iter()
                    .zip(data.row(j))
                    .zip(&minv)
                    .map(|((a, b), s)| a * b * s)
                    .sum();
                q[i * n + j] = v;
                q[j * n + i] = v;
            }
        }
        let xmax = data.rows().map(crate::linalg::norm1).fold(0.0, f64::max);
        DualQp { data, minv, q, xmax }
    }

    fn n(&self) -> usize {
        self.data.n()
    }

    fn primal(&self, lambda: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.data.d()];
        for (x, &l) in self.data.rows().zip(lambda) {
            if l != 0.0 {
                for (wk, xk) in w.iter_mut().zip(x) {
                    *wk += l * xk;
                }
            }
        }
        for (wk, s) in w.iter_mut().zip(&self.minv) {
            *wk *= s;
        }
        w
    }

    fn lipschitz(&self) -> f64 {
        let n = self.n();
        (0..n)
            .map(|i| self.q[i * n..(i + 1) * n].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Solves `Q_SS λ_S = 1` in the least-squares sense.
    fn equality_dual(&self, s: &[usize]) -> Option<Vec<f64>> {
        let n = self.n();
        let qs = DMatrix::from_fn(s.len(), s.len(), |a, b| self.q[s[a] * n + s[b]]);
        let rhs = DVector::from_element(s.len(), 1.0);
        let svd = qs.clone().svd(true, true);
        let eps = super::RANK_TOL * svd.singular_values.max();
        let sol = svd.solve(&rhs, eps).ok()?;
        let resid = (&qs * &sol - &rhs).amax();
        if !(resid <= 1e-9) {
            return None;
        }
        Some(sol.iter().copied().collect())
    }

    /// Primal-dual active-set refinement from a guessed support.
    fn polish(&self, mut s: Vec<usize>) -> Option<Vec<f64>> {
        let n = self.n();
        for _ in 0..4 * n + 4 {
            if s.is_empty() {
                let worst = (0..n).max_by(|&a, &b| self.q[a * n + a].partial_cmp(&self.q[b * n + b]).unwrap())?;
                s.push(worst);
            }
            let ls = self.equality_dual(&s)?;
            let (neg_pos, neg_val) = ls
                .iter()
                .enumerate()
                .fold((usize::MAX, 0.0), |acc, (p, &v)| if v < acc.1 { (p, v) } else { acc });
            let lmax = ls.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if neg_val < -1e-13 * (1.0 + lmax) {
                s.remove(neg_pos);
                continue;
            }
            let mut lambda = vec![0.0; n];
            for (&i, &v) in s.iter().zip(&ls) {
                lambda[i] = v.max(0.0);
            }
            let w = self.primal(&lambda);
            let viol = self
                .data
                .rows()
                .enumerate()
                .filter(|(i, _)| !s.contains(i))
                .map(|(i, x)| (i, 1.0 - crate::linalg::dot(&w, x)))
                .fold((usize::MAX, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
            if viol.1 > 1e-13 * (1.0 + crate::linalg::norm_inf(&w) * self.xmax) {
                s.push(viol.0);
                s.sort_unstable();
                continue;
            }
            return Some(lambda);
        }
        None
    }

    /// KKT residual relative to `(1 + ‖w‖∞)(1 + ‖λ‖∞)`.
    fn residual(&self, m: &[f64], lambda: &[f64]) -> f64 {
        let w = self.primal(lambda);
        let scale = (1.0 + crate::linalg::norm_inf(&w)) * (1.0 + crate::linalg::norm_inf(lambda));
        super::kkt_residual_diag(&w, lambda, self.data, m).max() / scale
    }

    fn solve(&self, m: &[f64], tol: f64, start: Option<&[f64]>) -> Result<Vec<f64>> {
        let n = self.n();
        let mut lambda: Vec<f64> = match start {
            Some(s) => s.iter().map(|v| v.max(0.0)).collect(),
            None => vec![0.0; n],
        };
        let step = 1.0 / self.lipschitz();
        let mut grad = vec![0.0; n];
        let mut best: Option<(f64, Vec<f64>)> = None;
        for it in 1..=MAX_ITERS {
            for i in 0..n {
                let row = &self.q[i * n..(i + 1) * n];
                grad[i] = 1.0 - row.iter().zip(&lambda).map(|(a, b)| a * b).sum::<f64>();
            }
            for (l, g) in lambda.iter_mut().zip(&grad) {
                *l = (*l + step * g).max(0.0);
            }
            if !lambda.iter().all(|v| v.is_finite()) || lambda.iter().any(|v| *v > 1e15) {
                return Err(Error::Infeasible);
            }
            if it % POLISH_EVERY == 0 || it == MAX_ITERS {
                let guess: Vec<usize> = (0..n).filter(|&i| lambda[i] > 0.0).collect();
                for cand in [self.polish(guess), Some(lambda.clone())].into_iter().flatten() {
                    let r = self.residual(m, &cand);
                    if best.as_ref().map_or(true, |(br, _)| r < *br) {
                        best = Some((r, cand));
                    }
                }
                if let Some((r, l)) = &best {
                    if *r <= tol {
                        return Ok(l.clone());
                    }
                }
            }
        }
        let (r, _) = best.unwrap_or((f64::INFINITY, lambda));
        Err(Error::Numeric(format!(
            "QP stopped after {MAX_ITERS} iterations with KKT residual {r:.3e} > {tol:.1e}"
        )))
    }
}

fn ensure_separable(data: &Dataset) -> Result<()> {
    super::solve_linf_margin(data).map(|_| ())
}

/// Solves `min ½ Σ_k m[k] w[k]² s.t. w·x_i ≥ 1` for a positive diagonal `m`.
/// Stops once every KKT residual is at most `tol · (1 + ‖w‖∞)(1 + ‖λ‖∞)`.
pub fn solve_weighted_qp(data: &Dataset, m: &[f64], tol: f64, start: Option<&[f64]>) -> Result<MarginSolution> {
    data.check_dim(m)?;
    if m.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Config("metric diagonal must be positive and finite".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    if let Some(s) = start {
        if s.len() != data.n() {
            return Err(Error::Dimension {
                expected: data.n(),
                got: s.len(),
            });
        }
    }
    ensure_separable(data)?;
    let qp = DualQp::new(data, m);
    let lambda = qp.solve(m, tol, start)?;
    let w = qp.primal(&lambda);
    Ok(MarginSolution::assemble(data, m, w, lambda))
}

/// `P_Adam(c)`: `min ½‖w‖²_{M(c)} s.t. w·x_i ≥ 1`.
pub fn solve_p_adam(data: &Dataset, c: &SimplexVector, tol: f64) -> Result<MarginSolution> {
    solve_p_adam_from(data, c, tol, None)
}

/// [`solve_p_adam`] warm-started from a dual guess.
pub fn solve_p_adam_from(
    data: &Dataset,
    c: &SimplexVector,
    tol: f64,
    start: Option<&[f64]>,
) -> Result<MarginSolution> {
    let m = preconditioner(data, c)?;
    solve_weighted_qp(data, &m, tol, start)
}

/// ℓ2 max-margin SVM: `min ½‖w‖₂² s.t. w·x_i ≥ 1`.
pub fn solve_l2_margin(data: &Dataset) -> Result<MarginSolution> {
    solve_weighted_qp(data, &vec![1.0; data.d()], DEFAULT_TOL, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::gen_gr_fig2;
    use crate::linalg::{cosine_similarity, max_abs_diff, norm2};
    use crate::margin::{brute_force_qp_oracle, kkt_residual};
    use proptest::prelude::*;

    #[test]
    fn single_point_closed_form() {
        let data = Dataset::custom(vec![vec![1.0, 2.0]]).unwrap();
        let sol = solve_p_adam(&data, &SimplexVector::uniform(1), DEFAULT_TOL).unwrap();
        assert!(max_abs_diff(&sol.w, &[1.0 / 3.0, 1.0 / 3.0]) < 1e-12);
        assert!((sol.lambda[0] - 1.0 / 3.0).abs() < 1e-12);
        let l2 = solve_l2_margin(&data).unwrap();
        assert!(max_abs_diff(&l2.w, &[0.2, 0.4]) < 1e-12);
        assert!((1.0 / norm2(&l2.w) - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair() {
        let data = Dataset::custom(vec![vec![1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let sol = solve_l2_margin(&data).unwrap();
        assert!(max_abs_diff(&sol.w, &[1.0, 0.0]) < 1e-12);
        assert_eq!(sol.support, vec![0, 1]);
    }

    #[test]
    fn gr_l2_golden() {
        let sol = solve_l2_margin(&gen_gr_fig2()).unwrap();
        let expect = [19.0 / 48.0, 13.0 / 48.0, 11.0 / 48.0, 5.0 / 48.0];
        assert!(max_abs_diff(&sol.w, &expect) < 1e-12, "{:?}", sol.w);
        assert!(sol.kkt.max() < 1e-12);
    }

    #[test]
    fn gr_p_adam_direction_is_l2_direction() {
        let data = gen_gr_fig2();
        let l2 = solve_l2_margin(&data).unwrap();
        for c in [vec![0.25; 4], vec![0.7, 0.1, 0.1, 0.1], vec![0.0, 0.0, 0.5, 0.5], vec![0.0, 0.0, 0.0, 1.0]] {
            let c = SimplexVector::new(c).unwrap();
            let s = solve_p_adam(&data, &c, DEFAULT_TOL).unwrap();
            assert!(1.0 - cosine_similarity(&s.w, &l2.w).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn shifted_diagonal_vertex() {
        let data = crate::datagen::gen_shifted_diagonal(&[1.0, 2.0, 4.0, 8.0], 0.1).unwrap();
        let sol = solve_p_adam(&data, &SimplexVector::vertex(4, 0), DEFAULT_TOL).unwrap();
        assert!(max_abs_diff(&sol.w, &[1.0 / 1.3; 4]) < 1e-12);
        assert_eq!(sol.support, vec![0]);
    }

    #[test]
    fn non_separable_is_infeasible() {
        let data = Dataset::custom(vec![vec![1.0], vec![-1.0]]).unwrap();
        assert!(matches!(solve_l2_margin(&data), Err(Error::Infeasible)));
    }

    #[test]
    fn warm_start_gives_same_primal() {
        let data = gen_gr_fig2();
        let c = SimplexVector::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let a = solve_p_adam(&data, &c, DEFAULT_TOL).unwrap();
        let b = solve_p_adam_from(&data, &c, DEFAULT_TOL, Some(&[5.0, 0.0, 3.0, 1.0])).unwrap();
        assert!(max_abs_diff(&a.w, &b.w) <= 1e-8);
    }

    fn small_instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (1usize..=5, 1usize..=5).prop_flat_map(|(n, d)| {
            let entry = prop_oneof![0.2f64..3.0, -3.0f64..-0.2];
            (
                proptest::collection::vec(proptest::collection::vec(entry, d), n),
                proptest::collection::vec(0.0f64..1.0, n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_brute_force((rows, raw_c) in small_instance()) {
            let data = Dataset::custom(rows).unwrap();
            let gamma = crate::margin::solve_linf_margin(&data).map(|s| s.gamma_inf).unwrap_or(0.0);
            prop_assume!(gamma >= 0.2);
            let mut raw_c = raw_c;
            raw_c[0] += 0.05;
            let c = SimplexVector::normalize(raw_c).unwrap();
            let sol = solve_p_adam(&data, &c, 1e-11).unwrap();
            let oracle = brute_force_qp_oracle(&data, &c).unwrap();
            let scale = 1.0 + crate::linalg::norm_inf(&oracle.w);
            prop_assert!(max_abs_diff(&sol.w, &oracle.w) <= 1e-6 * scale);
            prop_assert!((sol.objective - oracle.objective).abs() <= 1e-8 * (1.0 + oracle.objective));
            prop_assert!(kkt_residual(&sol, &data, &c).unwrap().max() <= 1e-9);
        }

        #[test]
        fn scale_equivariance((rows, _c) in small_instance(), s in 0.1f64..10.0) {
            let data = Dataset::custom(rows).unwrap();
            prop_assume!(crate::margin::solve_linf_margin(&data).is_ok());
            let a = solve_l2_margin(&data).unwrap();
            let b = solve_l2_margin(&data.scaled(s)).unwrap();
            let scaled: Vec<f64> = a.w.iter().map(|v| v / s).collect();
            prop_assert!(max_abs_diff(&b.w, &scaled) <= 1e-7 * (1.0 + crate::linalg::norm_inf(&scaled)));
        }
    }
}
