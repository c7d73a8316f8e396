//! Seeded generators for Gaussian, generalized-Rademacher and shifted-diagonal
//! datasets, plus a report-only validator.
//!
//! Gaussian entries come from ChaCha8 (stream 0) seeded with
//! `seed_from_u64(seed)`, mapped to normals by Box–Muller so the bit pattern of
//! a dataset depends only on the seed.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margin::{solve_linf_margin, support_independent};
use crate::problem::{Dataset, DatasetKind};

/// Seed used for the Gaussian experiments unless overridden.
pub const CANONICAL_SEED: u64 = 0;

/// ChaCha stream reserved for dataset generation.
pub const DATA_STREAM: u64 = 0;

pub const DEFAULT_MIN_MARGIN: f64 = 1e-3;

const MAX_RESAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenSpec {
    Gaussian {
        n: usize,
        d: usize,
        seed: u64,
        #[serde(default = "default_min_margin")]
        min_margin: f64,
    },
    Gr {
        magnitudes: Vec<f64>,
        signs: Vec<Vec<i8>>,
    },
    ShiftedDiagonal {
        values: Vec<f64>,
        delta: f64,
    },
}

fn default_min_margin() -> f64 {
    DEFAULT_MIN_MARGIN
}

impl GenSpec {
    /// The N=10, d=50 Gaussian instance used by the experiments.
    pub fn canonical_gaussian(seed: u64) -> Self {
        GenSpec::Gaussian {
            n: 10,
            d: 50,
            seed,
            min_margin: DEFAULT_MIN_MARGIN,
        }
    }

    pub fn fig2_gr() -> Self {
        GenSpec::Gr {
            magnitudes: vec![1.0, 2.0, 3.0, 4.0],
            signs: vec![vec![1, 1, 1, 1], vec![1, 1, 1, -1], vec![1, 1, -1, -1], vec![1, -1, 1, -1]],
        }
    }

    pub fn fig5_shifted_diagonal() -> Self {
        GenSpec::ShiftedDiagonal {
            values: vec![1.0, 2.0, 4.0, 8.0],
            delta: 0.1,
        }
    }

    pub fn generate(&self) -> Result<Dataset> {
        match self {
            GenSpec::Gaussian { n, d, seed, min_margin } => gen_gaussian(*n, *d, *seed, *min_margin),
            GenSpec::Gr { magnitudes, signs } => gen_gr(magnitudes, signs),
            GenSpec::ShiftedDiagonal { values, delta } => gen_shifted_diagonal(values, *delta),
        }
    }
}

fn standard_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let mut chunks = out.chunks_mut(2);
    for pair in &mut chunks {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        pair[0] = r * (TAU * u2).cos();
        if pair.len() > 1 {
            pair[1] = r * (TAU * u2).sin();
        }
    }
}

/// I.i.d. standard normal `n × d` data, redrawn until `γ∞ ≥ min_margin`.
pub fn gen_gaussian(n: usize, d: usize, seed: u64, min_margin: f64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::Config("gaussian data needs n >= 1 and d >= 1".into()));
    }
    if !(min_margin > 0.0) {
        return Err(Error::Config(format!("min_margin must be positive, got {min_margin}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DATA_STREAM);
    let mut x = vec![0.0; n * d];
    for _ in 0..MAX_RESAMPLES {
        standard_normals(&mut rng, &mut x);
        let rows: Vec<Vec<f64>> = x.chunks(d).map(|r| r.to_vec()).collect();
        let data = Dataset::from_rows(DatasetKind::Gaussian, Some(seed), rows)?;
        if data.first_zero_entry().is_some() {
            continue;
        }
        match solve_linf_margin(&data) {
            Ok(sol) if sol.gamma_inf >= min_margin => return Ok(data),
            Ok(_) | Err(Error::Infeasible) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Assumption {
        assumption: "linear separability",
        detail: format!(
            "no draw out of {MAX_RESAMPLES} reached margin {min_margin} for n={n}, d={d}; try a larger d"
        ),
    })
}

/// `x_i[k] = magnitudes[i] · signs[i][k]`.
pub fn gen_gr(magnitudes: &[f64], signs: &[Vec<i8>]) -> Result<Dataset> {
    if magnitudes.is_empty() || magnitudes.len() != signs.len() {
        return Err(Error::Config(format!(
            "{} magnitudes for {} sign rows",
            magnitudes.len(),
            signs.len()
        )));
    }
    if magnitudes.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
        return Err(Error::Config("GR magnitudes must be positive".into()));
    }
    let d = signs[0].len();
    if d == 0 || signs.iter().any(|r| r.len() != d) {
        return Err(Error::Config("GR sign rows must share a nonzero length".into()));
    }
    if signs.iter().flatten().any(|s| *s != 1 && *s != -1) {
        return Err(Error::Config("GR signs must be +1 or -1".into()));
    }
    let rows = magnitudes
        .iter()
        .zip(signs)
        .map(|(m, r)| r.iter().map(|s| m * f64::from(*s)).collect())
        .collect();
    let data = Dataset::from_rows(DatasetKind::Gr, None, rows)?;
    data.check_assumptions()?;
    Ok(data)
}

/// The 4 × 4 GR instance with magnitudes (1, 2, 3, 4).
pub fn gen_gr_fig2() -> Dataset {
    GenSpec::fig2_gr().generate().expect("fixed GR instance is valid")
}

/// `x_i = values[i]·e_i + δ Σ_{j≠i} e_j`.
pub fn gen_shifted_diagonal(values: &[f64], delta: f64) -> Result<Dataset> {
    if values.is_empty() {
        return Err(Error::Config("shifted-diagonal data needs at least one value".into()));
    }
    if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) || values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("values must be positive and strictly increasing".into()));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    let n = values.len();
    let rows = (0..n)
        .map(|i| (0..n).map(|k| if k == i { values[i] } else { delta }).collect())
        .collect();
    Dataset::from_rows(DatasetKind::ShiftedDiagonal, None, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n: usize,
    pub d: usize,
    pub nonzero: bool,
    pub separable: bool,
    pub gamma_inf: Option<f64>,
    /// Every row has entries of equal magnitude.
    pub gr_structure: bool,
    /// All rows linearly independent, so every support set satisfies LICQ.
    pub licq: bool,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.nonzero && self.separable
    }
}

pub fn validate(data: &Dataset) -> ValidationReport {
    let nonzero = data.first_zero_entry().is_none();
    let gamma_inf = solve_linf_margin(data).ok().map(|s| s.gamma_inf);
    let gr_structure = data.rows().all(|x| {
        let a = x[0].abs();
        x.iter().all(|v| (v.abs() - a).abs() <= 1e-12 * a.max(1.0))
    });
    let all: Vec<usize> = (0..data.n()).collect();
    ValidationReport {
        n: data.n(),
        d: data.d(),
        nonzero,
        separable: gamma_inf.is_some(),
        gamma_inf,
        gr_structure,
        licq: support_independent(data, &all),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig2_instance_rows() {
        let data = gen_gr_fig2();
        assert_eq!(
            data.to_rows(),
            vec![
                vec![1.0, 1.0, 1.0, 1.0],
                vec![2.0, 2.0, 2.0, -2.0],
                vec![3.0, 3.0, -3.0, -3.0],
                vec![4.0, -4.0, 4.0, -4.0],
            ]
        );
        let r = validate(&data);
        assert!(r.gr_structure && r.separable && r.nonzero);
        assert!((r.gamma_inf.unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn gr_edge_cases() {
        let one = gen_gr(&[1.0], &[vec![1, 1, 1]]).unwrap();
        assert_eq!(one.to_rows(), vec![vec![1.0, 1.0, 1.0]]);
        assert!(gen_gr(&[1.0, 1.0], &[vec![1], vec![-1]]).is_err());
        assert!(gen_gr(&[1.0], &[vec![1, 0]]).is_err());
        assert!(gen_gr(&[-1.0], &[vec![1]]).is_err());
    }

    #[test]
    fn shifted_diagonal_instance() {
        let data = gen_shifted_diagonal(&[1.0, 2.0, 4.0, 8.0], 0.1).unwrap();
        assert_eq!(data.row(0), &[1.0, 0.1, 0.1, 0.1]);
        assert_eq!(data.row(3), &[0.1, 0.1, 0.1, 8.0]);
        assert!((validate(&data).gamma_inf.unwrap() - 1.3).abs() < 1e-12);
        assert_eq!(gen_shifted_diagonal(&[2.5], 0.1).unwrap().to_rows(), vec![vec![2.5]]);
        assert!(gen_shifted_diagonal(&[2.0, 1.0], 0.1).is_err());
        assert!(gen_shifted_diagonal(&[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn gaussian_is_deterministic_and_separable() {
        let a = gen_gaussian(10, 50, 7, 1e-3).unwrap();
        let b = gen_gaussian(10, 50, 7, 1e-3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_gaussian(10, 50, 8, 1e-3).unwrap());
        let r = validate(&a);
        assert!(r.separable && r.gamma_inf.unwrap() > 0.0 && r.licq);
        let single = gen_gaussian(1, 3, 1, 1e-3).unwrap();
        let g = validate(&single).gamma_inf.unwrap();
        assert!((g - crate::linalg::norm1(single.row(0))).abs() < 1e-12);
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = vec![0.0; 10_000];
        standard_normals(&mut rng, &mut x);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
        assert!(mean.abs() < 3.0 / 100.0);
        // sd of the sample variance is about √(2/n)
        assert!((var - 1.0).abs() < 3.0 * (2.0f64 / 10_000.0).sqrt());
    }

    #[test]
    fn impossible_margin_errors() {
        assert!(matches!(gen_gaussian(40, 1, 0, 1e-3), Err(Error::Assumption { .. })));
        assert!(gen_gaussian(0, 3, 0, 1e-3).is_err());
    }

    #[test]
    fn zero_entry_is_reported() {
        let data = Dataset::custom(vec![vec![1.0, 0.0]]).unwrap();
        assert!(!validate(&data).nonzero);
    }

    #[test]
    fn spec_json_roundtrip() {
        for s in [GenSpec::canonical_gaussian(3), GenSpec::fig2_gr(), GenSpec::fig5_shifted_diagonal()] {
            let j = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<GenSpec>(&j).unwrap(), s);
        }
    }
}
