//! Dense vector helpers on plain slices.

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

#[inline]
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest absolute entrywise difference.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Sign with `sign(0) = 0`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn normalized(a: &[f64]) -> Result<Vec<f64>> {
    let n = norm2(a);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(a.iter().map(|x| x / n).collect())
}

/// `u·v / (‖u‖₂‖v‖₂)`, clamped to `[-1, 1]`. A zero vector is an error.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            expected: u.len(),
            got: v.len(),
        });
    }
    let nu = norm2(u);
    let nv = norm2(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}
