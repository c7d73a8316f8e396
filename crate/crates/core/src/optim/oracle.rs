//! Closed-form constants and the epoch-wise approximations of incremental Adam.
//!
//! With per-sample gradients `g_j = ∇L_j(w)` and cyclic weights
//! `β^{(i,j)} = β^{(i-j) mod N}`, one epoch of incremental Adam started at `w`
//! is approximated by
//!
//! ```text
//! -η · C_inc(β₁, β₂) · Σ_i [Σ_j β₁^{(i,j)} g_j] / √(Σ_j β₂^{(i,j)} g_j²)
//! ```
//!
//! and, as `β₂ → 1`, by `-η √((1-β₂^N)/(1-β₂)) · Σ_j g_j / √(Σ_j g_j²)`.

use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::problem::{sample_grads, Dataset, LossKind};

/// `C_inc = (1-β₁)/(1-β₁^N) · √((1-β₂^N)/(1-β₂))`.
pub fn c_inc(beta1: f64, beta2: f64, n: usize) -> f64 {
    let n = n as i32;
    let first = (1.0 - beta1) / (1.0 - beta1.powi(n));
    let second = ((1.0 - beta2.powi(n)) / (1.0 - beta2)).sqrt();
    first * second
}

fn cyclic_powers(beta: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| beta.powi(k as i32)).collect()
}

/// Main term of the epoch-wise incremental Adam update at `w`.
pub fn epoch_update_oracle(
    w: &[f64],
    data: &Dataset,
    kind: LossKind,
    beta1: f64,
    beta2: f64,
    eta: f64,
) -> Result<Vec<f64>> {
    let grads = sample_grads(w, data, kind)?;
    let n = data.n();
    let p1 = cyclic_powers(beta1, n);
    let p2 = cyclic_powers(beta2, n);
    let scale = -eta * c_inc(beta1, beta2, n);
    let mut out = vec![0.0; data.d()];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in 0..n {
            let (mut num, mut den) = (0.0, 0.0);
            for (j, g) in grads.iter().enumerate() {
                let lag = (i + n - j) % n;
                num += p1[lag] * g[k];
                den += p2[lag] * g[k] * g[k];
            }
            if den <= 0.0 || !den.is_finite() {
                return Err(Error::ZeroDenominator(k));
            }
            acc += num / den.sqrt();
        }
        *o = scale * acc;
    }
    Ok(out)
}

/// The `β₂ → 1` limit of [`epoch_update_oracle`] (independent of `β₁`).
///
/// The numerator is the sum of per-sample gradients `Σ_j ∇L_j = N ∇L`, which
/// keeps it on the same scale as one epoch of `N` steps.
pub fn proxy_limit_update(
    w: &[f64],
    data: &Dataset,
    kind: LossKind,
    beta2: f64,
    eta: f64,
) -> Result<Vec<f64>> {
    let grads = sample_grads(w, data, kind)?;
    let n = data.n() as i32;
    let scale = -eta * ((1.0 - beta2.powi(n)) / (1.0 - beta2)).sqrt();
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
        *o = scale * sum / sq.sqrt();
    }
    Ok(out)
}

/// Per-sample weights `a_j` for data whose points have equal-magnitude
/// coordinates. With them the epoch oracle reads
/// `-η Σ_j a_j ∇L_j(w) / ‖∇L(w)‖₂`.
pub fn equal_magnitude_epoch_weights(
    w: &[f64],
    data: &Dataset,
    kind: LossKind,
    beta1: f64,
    beta2: f64,
) -> Result<Vec<f64>> {
    let n = data.n();
    let mags: Vec<f64> = data.rows().map(|x| x[0].abs()).collect();
    for (x, m) in data.rows().zip(&mags) {
        if x.iter().any(|v| (v.abs() - m).abs() > 1e-12 * m.max(1.0)) {
            return Err(Error::Config("points do not have equal-magnitude coordinates".into()));
        }
    }
    let grad = crate::problem::grad_full(w, data, kind)?;
    let gnorm = norm2(&grad);
    let derivs: Vec<f64> = data
        .rows()
        .map(|x| kind.deriv(crate::linalg::dot(w, x)))
        .collect();
    let p1 = cyclic_powers(beta1, n);
    let p2 = cyclic_powers(beta2, n);
    let dens: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .map(|l| p2[(i + n - l) % n] * (derivs[l] * mags[l]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let c = c_inc(beta1, beta2, n);
    Ok((0..n)
        .map(|j| c * (0..n).map(|i| p1[(i + n - j) % n] * gnorm / dens[i]).sum::<f64>())
        .collect())
}

/// `α = √(β₂(1-β₁)² / ((1-β₂)(β₂-β₁²)))`, the bound `|m[k]| ≤ α√v[k]`.
pub fn momentum_alpha(beta1: f64, beta2: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta1) || !(beta2 > 0.0 && beta2 < 1.0) {
        return Err(Error::Config(format!(
            "need beta1 in [0,1) and beta2 in (0,1), got ({beta1}, {beta2})"
        )));
    }
    if beta1 * beta1 >= beta2 {
        return Err(Error::Config(format!(
            "momentum bound needs beta1^2 < beta2, got ({beta1}, {beta2})"
        )));
    }
    Ok((beta2 * (1.0 - beta1).powi(2) / ((1.0 - beta2) * (beta2 - beta1 * beta1))).sqrt())
}

/// Momentum gap `ε` such that Signum with `β ∈ (1-ε, 1)` keeps a normalized
/// ℓ∞ margin within `delta` of `gamma_inf`.
pub fn signum_epsilon(delta: f64, gamma_inf: f64, d_max: f64, n: usize, b: usize) -> Result<f64> {
    if !(delta > 0.0 && gamma_inf > 0.0 && d_max > 0.0) {
        return Err(Error::Config("delta, gamma_inf and D must be positive".into()));
    }
    if b == 0 || b > n || n % b != 0 {
        return Err(Error::Config(format!("batch size {b} must divide N = {n}")));
    }
    if b == n {
        return Ok(1.0);
    }
    let k = (n / b) as f64;
    Ok(delta.min(gamma_inf / 2.0) / (2.0 * d_max * k * (k - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sign;
    use crate::problem::grad_sample;

    fn gr() -> Dataset {
        Dataset::custom(vec![
            vec![1.0, 1.0, 1.0, 1.0],
            vec![2.0, 2.0, 2.0, -2.0],
            vec![3.0, 3.0, -3.0, -3.0],
            vec![4.0, -4.0, 4.0, -4.0],
        ])
        .unwrap()
    }

    #[test]
    fn c_inc_values() {
        assert!((c_inc(0.9, 0.95, 1) - 1.0).abs() < 1e-15);
        assert!((c_inc(0.0, 0.5, 2) - 1.5f64.sqrt()).abs() < 1e-15);
        // 30-digit evaluation of the closed form
        assert!((c_inc(0.9, 0.95, 10) - 0.434944791277268282).abs() < 1e-14);
    }

    #[test]
    fn momentum_alpha_values() {
        assert!((momentum_alpha(0.0, 0.5).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((momentum_alpha(0.0, 0.75).unwrap() - 2.0).abs() < 1e-15);
        assert!((momentum_alpha(0.9, 0.95).unwrap() - 1.164964745021435034).abs() < 1e-14);
        assert!(momentum_alpha(0.9, 0.5).is_err());
    }

    #[test]
    fn signum_epsilon_values() {
        assert_eq!(signum_epsilon(0.3, 1.0, 2.0, 6, 6).unwrap(), 1.0);
        assert_eq!(signum_epsilon(10.0, 1.0, 1.0, 2, 1).unwrap(), 0.125);
        let small = signum_epsilon(1e-3, 1.0, 1.0, 4, 1).unwrap();
        let smaller = signum_epsilon(1e-6, 1.0, 1.0, 4, 1).unwrap();
        assert!(smaller < small && smaller > 0.0);
        assert!(signum_epsilon(1.0, 1.0, 1.0, 5, 2).is_err());
    }

    #[test]
    fn single_point_oracles_are_sign_descent() {
        let data = Dataset::custom(vec![vec![0.3, -1.0, 2.0]]).unwrap();
        let w = [0.5, 0.5, -0.1];
        let g = grad_sample(&w, &data, 0, LossKind::Exponential).unwrap();
        let a = epoch_update_oracle(&w, &data, LossKind::Exponential, 0.9, 0.95, 0.2).unwrap();
        let b = proxy_limit_update(&w, &data, LossKind::Exponential, 0.95, 0.2).unwrap();
        for k in 0..3 {
            assert!((a[k] + 0.2 * sign(g[k])).abs() < 1e-15);
            assert!((b[k] + 0.2 * sign(g[k])).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_betas_sum_signs() {
        let data = gr();
        let w = [0.1, -0.2, 0.05, 0.3];
        let got = epoch_update_oracle(&w, &data, LossKind::Logistic, 0.0, 0.0, 0.5).unwrap();
        let mut want = [0.0; 4];
        for i in 0..4 {
            let g = grad_sample(&w, &data, i, LossKind::Logistic).unwrap();
            for k in 0..4 {
                want[k] -= 0.5 * sign(g[k]);
            }
        }
        for k in 0..4 {
            assert!((got[k] - want[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn weighted_normalized_form_agrees_on_equal_magnitude_data() {
        let data = gr();
        for w in [[0.0; 4], [0.3, 0.1, -0.2, 0.05], [1.0, 0.5, 0.5, 0.1]] {
            for (b1, b2) in [(0.9, 0.95), (0.5, 0.5), (0.1, 0.9)] {
                let direct = epoch_update_oracle(&w, &data, LossKind::Exponential, b1, b2, 1.0).unwrap();
                let a = equal_magnitude_epoch_weights(&w, &data, LossKind::Exponential, b1, b2).unwrap();
                let gnorm = norm2(&crate::problem::grad_full(&w, &data, LossKind::Exponential).unwrap());
                let mut weighted = [0.0; 4];
                for (j, aj) in a.iter().enumerate() {
                    let g = grad_sample(&w, &data, j, LossKind::Exponential).unwrap();
                    for k in 0..4 {
                        weighted[k] -= aj * g[k] / gnorm;
                    }
                }
                for k in 0..4 {
                    assert!((direct[k] - weighted[k]).abs() <= 1e-10, "{direct:?} vs {weighted:?}");
                }
                assert!(a.iter().all(|&x| x > 0.0));
            }
        }
    }

    #[test]
    fn proxy_scale_tends_to_sqrt_n() {
        let n = 7;
        let scale = |b2: f64| ((1.0 - f64::powi(b2, n)) / (1.0 - b2)).sqrt();
        assert!((scale(1.0 - 1e-9) - (n as f64).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn oracle_near_one_matches_adamproxy_direction() {
        // β₁ = β₂ → 1: the epoch oracle approaches -η N^{3/2} δ(w).
        let data = gr();
        let beta = 1.0 - 1e-9;
        let n = data.n() as f64;
        for w in [[0.0; 4], [0.2, -0.1, 0.3, 0.0]] {
            let o = epoch_update_oracle(&w, &data, LossKind::Exponential, beta, beta, 1.0).unwrap();
            let delta = crate::optim::step::adamproxy_direction(&w, &data, LossKind::Exponential).unwrap();
            for k in 0..4 {
                let want = -n.powf(1.5) * delta[k];
                assert!((o[k] - want).abs() <= 1e-6 * want.abs().max(1.0), "{} vs {want}", o[k]);
            }
        }
    }
}
