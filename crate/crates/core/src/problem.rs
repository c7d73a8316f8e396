//! Datasets, losses and gradients for linear classification with labels
//! folded into the points (every `y_i = +1`).

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm1};

/// Entries with magnitude at or below this are treated as zero.
pub const NONZERO_TOL: f64 = 1e-12;

/// Exponent arguments below this flush to zero in both loss and gradient.
const EXP_FLUSH: f64 = -745.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Gaussian,
    Gr,
    ShiftedDiagonal,
    Custom,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DatasetKind::Gaussian => "gaussian",
            DatasetKind::Gr => "gr",
            DatasetKind::ShiftedDiagonal => "shifted_diagonal",
            DatasetKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Exponential,
    Logistic,
}

impl LossKind {
    pub fn value(self, z: f64) -> f64 {
        match self {
            LossKind::Exponential => {
                if -z < EXP_FLUSH {
                    0.0
                } else {
                    (-z).exp()
                }
            }
            LossKind::Logistic => {
                if -z < EXP_FLUSH {
                    0.0
                } else if z > 0.0 {
                    (-z).exp().ln_1p()
                } else {
                    -z + z.exp().ln_1p()
                }
            }
        }
    }

    /// `ℓ'(z)`, always `<= 0`.
    pub fn deriv(self, z: f64) -> f64 {
        match self {
            LossKind::Exponential => -self.value(z),
            LossKind::Logistic => {
                if -z < EXP_FLUSH {
                    0.0
                } else {
                    -1.0 / (1.0 + z.exp())
                }
            }
        }
    }

    pub fn second_deriv(self, z: f64) -> f64 {
        match self {
            LossKind::Exponential => self.value(z),
            LossKind::Logistic => {
                if -z < EXP_FLUSH {
                    0.0
                } else {
                    let s = 1.0 / (1.0 + z.exp());
                    s * (1.0 - s)
                }
            }
        }
    }
}

/// `N` points in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    kind: DatasetKind,
    seed: Option<u64>,
    n: usize,
    d: usize,
    x: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    kind: DatasetKind,
    seed: Option<u64>,
    n: usize,
    d: usize,
    x: Vec<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset from rows. Checks shape and finiteness only; use
    /// [`Dataset::check_assumptions`] for the separability and nonzero checks.
    pub fn from_rows(kind: DatasetKind, seed: Option<u64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Config("dataset has no points".into()));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::Config("dataset has zero dimension".into()));
        }
        let mut x = Vec::with_capacity(n * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("dataset entries"));
            }
            x.extend(row);
        }
        Ok(Dataset { kind, seed, n, d, x })
    }

    pub fn custom(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(DatasetKind::Custom, None, rows)
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.x.chunks_exact(self.d)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Every point multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Dataset {
        Dataset {
            x: self.x.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }

    /// `D = max_i ‖x_i‖₁`.
    pub fn max_l1_norm(&self) -> f64 {
        self.rows().map(norm1).fold(0.0, f64::max)
    }

    /// First `(i, k)` with `|x_i[k]| <= 1e-12`, if any.
    pub fn first_zero_entry(&self) -> Option<(usize, usize)> {
        self.x
            .iter()
            .position(|v| v.abs() <= NONZERO_TOL)
            .map(|p| (p / self.d, p % self.d))
    }

    /// Rejects data with a zero entry or no strictly separating direction.
    /// Returns the normalized ℓ∞ margin on success.
    pub fn check_assumptions(&self) -> Result<f64> {
        if let Some((i, k)) = self.first_zero_entry() {
            return Err(Error::Assumption {
                assumption: "nonzero entries",
                detail: format!("x[{i}][{k}] is zero"),
            });
        }
        match crate::margin::solve_linf_margin(self) {
            Ok(sol) => Ok(sol.gamma_inf),
            Err(Error::Infeasible) => Err(Error::Assumption {
                assumption: "linear separability",
                detail: "no w with w·x_i > 0 for every i".into(),
            }),
            Err(e) => Err(e),
        }
    }

    pub fn check_dim(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                got: w.len(),
            });
        }
        Ok(())
    }

    /// `w·x_i` for every `i`.
    pub fn margins(&self, w: &[f64]) -> Vec<f64> {
        self.rows().map(|x| dot(w, x)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = DatasetFile {
            kind: self.kind,
            seed: self.seed,
            n: self.n,
            d: self.d,
            x: self.to_rows(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parses and validates. Fails with the name of the violated assumption.
    pub fn from_json(s: &str) -> Result<Self> {
        let data = Self::from_json_unchecked(s)?;
        data.check_assumptions()?;
        Ok(data)
    }

    /// Parses with shape checks only.
    pub fn from_json_unchecked(s: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(s)?;
        if file.x.len() != file.n {
            return Err(Error::Config(format!(
                "header says n={} but {} points given",
                file.n,
                file.x.len()
            )));
        }
        let data = Self::from_rows(file.kind, file.seed, file.x)?;
        if data.d != file.d {
            return Err(Error::Config(format!(
                "header says d={} but points have dimension {}",
                file.d, data.d
            )));
        }
        Ok(data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn load_unchecked(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_unchecked(&s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// `L(w) = (1/N) Σ ℓ(w·x_i)`.
pub fn loss_full(w: &[f64], data: &Dataset, kind: LossKind) -> Result<f64> {
    data.check_dim(w)?;
    let s: f64 = data.rows().map(|x| kind.value(dot(w, x))).sum();
    Ok(s / data.n() as f64)
}

/// `∇L_i(w) = ℓ'(w·x_i) x_i`.
pub fn grad_sample(w: &[f64], data: &Dataset, i: usize, kind: LossKind) -> Result<Vec<f64>> {
    data.check_dim(w)?;
    if i >= data.n() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: data.n(),
        });
    }
    let x = data.row(i);
    let s = kind.deriv(dot(w, x));
    Ok(x.iter().map(|v| s * v).collect())
}

/// Adds `scale · ∇L_i(w)` into `out` without allocating.
#[inline]
pub(crate) fn accumulate_grad(out: &mut [f64], w: &[f64], x: &[f64], kind: LossKind, scale: f64) {
    let s = scale * kind.deriv(dot(w, x));
    for (o, v) in out.iter_mut().zip(x) {
        *o += s * v;
    }
}

/// `∇L(w) = (1/N) Σ ∇L_i(w)`.
pub fn grad_full(w: &[f64], data: &Dataset, kind: LossKind) -> Result<Vec<f64>> {
    data.check_dim(w)?;
    let mut g = vec![0.0; data.d()];
    let inv = 1.0 / data.n() as f64;
    for x in data.rows() {
        accumulate_grad(&mut g, w, x, kind, inv);
    }
    Ok(g)
}

/// Every per-sample gradient `∇L_i(w)`, one row per sample.
pub fn sample_grads(w: &[f64], data: &Dataset, kind: LossKind) -> Result<Vec<Vec<f64>>> {
    data.check_dim(w)?;
    Ok(data
        .rows()
        .map(|x| {
            let s = kind.deriv(dot(w, x));
            x.iter().map(|v| s * v).collect()
        })
        .collect())
}

/// Proxy `G(w) = -(1/N) Σ ℓ'(w·x_i)`.
pub fn proxy_g(w: &[f64], data: &Dataset, kind: LossKind) -> Result<f64> {
    data.check_dim(w)?;
    let s: f64 = data.rows().map(|x| -kind.deriv(dot(w, x))).sum();
    Ok(s / data.n() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

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
    fn loss_at_origin() {
        let data = gr();
        let w = [0.0; 4];
        assert_eq!(loss_full(&w, &data, LossKind::Exponential).unwrap(), 1.0);
        let l = loss_full(&w, &data, LossKind::Logistic).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn loss_on_gr_data() {
        // margins of w = e_0 are 1, 2, 3, 4
        let expected = ((-1.0f64).exp() + (-2.0f64).exp() + (-3.0f64).exp() + (-4.0f64).exp()) / 4.0;
        let l = loss_full(&[1.0, 0.0, 0.0, 0.0], &gr(), LossKind::Exponential).unwrap();
        assert!((l - expected).abs() < 1e-16);
        assert!((l - 0.14282935791616328).abs() < 1e-15);
    }

    #[test]
    fn sample_gradient_examples() {
        let data = Dataset::custom(vec![vec![1.0, 2.0]]).unwrap();
        let g = grad_sample(&[0.0, 0.0], &data, 0, LossKind::Exponential).unwrap();
        assert_eq!(g, vec![-1.0, -2.0]);
        let g = grad_sample(&[0.0, 0.0], &data, 0, LossKind::Logistic).unwrap();
        assert_eq!(g, vec![-0.5, -1.0]);

        let data = Dataset::custom(vec![vec![1.0, 1.0]]).unwrap();
        let g = grad_sample(&[std::f64::consts::LN_2, 0.0], &data, 0, LossKind::Exponential).unwrap();
        assert!((g[0] + 0.5).abs() < 1e-15 && (g[1] + 0.5).abs() < 1e-15);

        assert!(matches!(
            grad_sample(&[0.0, 0.0], &data, 1, LossKind::Exponential),
            Err(Error::IndexOutOfRange { index: 1, len: 1 })
        ));
        assert!(matches!(
            loss_full(&[0.0], &data, LossKind::Exponential),
            Err(Error::Dimension { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn full_gradient_examples() {
        let one = Dataset::custom(vec![vec![0.3, -1.2]]).unwrap();
        let w = [0.7, 0.1];
        assert_eq!(
            grad_full(&w, &one, LossKind::Logistic).unwrap(),
            grad_sample(&w, &one, 0, LossKind::Logistic).unwrap()
        );

        let two = Dataset::custom(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(grad_full(&[0.0, 0.0], &two, LossKind::Exponential).unwrap(), vec![-0.5, -0.5]);

        // brute force: mean of the four rows, negated
        let data = gr();
        let mut oracle = vec![0.0; 4];
        for x in data.rows() {
            for k in 0..4 {
                oracle[k] -= x[k] / 4.0;
            }
        }
        let g = grad_full(&[0.0; 4], &data, LossKind::Exponential).unwrap();
        assert_eq!(g, oracle);
        assert_eq!(g, vec![-2.5, -0.5, -1.0, 2.0]);
    }

    #[test]
    fn proxy_examples() {
        let data = gr();
        assert_eq!(proxy_g(&[0.0; 4], &data, LossKind::Exponential).unwrap(), 1.0);
        assert_eq!(proxy_g(&[0.0; 4], &data, LossKind::Logistic).unwrap(), 0.5);
        let w = [0.3, -0.2, 0.5, 0.1];
        assert_eq!(
            proxy_g(&w, &data, LossKind::Exponential).unwrap(),
            loss_full(&w, &data, LossKind::Exponential).unwrap()
        );
    }

    #[test]
    fn extreme_margins_flush_consistently() {
        for kind in [LossKind::Exponential, LossKind::Logistic] {
            assert_eq!(kind.value(800.0), 0.0);
            assert_eq!(kind.deriv(800.0), 0.0);
            assert!(kind.value(-30.0).is_finite());
        }
        // stable logistic derivative far on the wrong side
        assert!((LossKind::Logistic.deriv(-800.0) + 1.0).abs() < 1e-15);
        assert!((LossKind::Logistic.value(-800.0) - 800.0).abs() < 1e-12);
    }

    #[test]
    fn json_roundtrip_and_rejections() {
        let data = Dataset::from_rows(DatasetKind::Gr, Some(7), gr().to_rows()).unwrap();
        let back = Dataset::from_json(&data.to_json().unwrap()).unwrap();
        assert_eq!(back, data);

        let zero = r#"{"kind":"custom","seed":null,"n":1,"d":2,"x":[[1.0,0.0]]}"#;
        match Dataset::from_json(zero) {
            Err(Error::Assumption { assumption, .. }) => assert_eq!(assumption, "nonzero entries"),
            other => panic!("{other:?}"),
        }
        let opposite = r#"{"kind":"custom","seed":null,"n":2,"d":1,"x":[[1.0],[-1.0]]}"#;
        match Dataset::from_json(opposite) {
            Err(Error::Assumption { assumption, .. }) => assert_eq!(assumption, "linear separability"),
            other => panic!("{other:?}"),
        }
        let bad_n = r#"{"kind":"custom","seed":null,"n":3,"d":1,"x":[[1.0]]}"#;
        assert!(matches!(Dataset::from_json(bad_n), Err(Error::Config(_))));
    }

    fn loss_ratio_bound(kind: LossKind, z1: f64, z2: f64) -> (f64, f64) {
        let lhs = (kind.deriv(z1) / kind.deriv(z2) - 1.0).abs();
        let rhs = (z1 - z2).abs().exp() - 1.0;
        (lhs, rhs)
    }

    proptest! {
        #[test]
        fn derivative_ratio_is_controlled(z1 in -20.0f64..20.0, z2 in -20.0f64..20.0) {
            for kind in [LossKind::Exponential, LossKind::Logistic] {
                let (lhs, rhs) = loss_ratio_bound(kind, z1, z2);
                prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12, "{kind:?} {lhs} > {rhs}");
            }
        }

        #[test]
        fn gradient_matches_central_differences(
            w in proptest::collection::vec(-1.0f64..1.0, 4),
            logistic in any::<bool>(),
        ) {
            let kind = if logistic { LossKind::Logistic } else { LossKind::Exponential };
            let data = gr();
            let g = grad_full(&w, &data, kind).unwrap();
            let mut fd = vec![0.0; 4];
            for k in 0..4 {
                let h = 1e-6 * (1.0 + w[k].abs());
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[k] += h;
                wm[k] -= h;
                fd[k] = (loss_full(&wp, &data, kind).unwrap() - loss_full(&wm, &data, kind).unwrap()) / (2.0 * h);
            }
            let scale = crate::linalg::norm_inf(&g).max(1e-300);
            for k in 0..4 {
                prop_assert!((g[k] - fd[k]).abs() / scale <= 1e-6, "k={k} {} vs {}", g[k], fd[k]);
            }
        }
    }
}
