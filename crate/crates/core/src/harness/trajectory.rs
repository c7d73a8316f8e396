use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::fixed_point_iterate;
use crate::linalg::{cosine_similarity, dot, norm2, norm_inf, normalized};
use crate::margin::{solve_l2_margin, solve_linf_margin, SimplexVector};
use crate::optim::{run, Recorder, RunConfig};
use crate::problem::{loss_full, Dataset, LossKind};

/// One checkpoint of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub step: u64,
    pub epoch: u64,
    pub loss: f64,
    pub norm_l2: f64,
    pub norm_linf: f64,
    pub cos_l2: Option<f64>,
    pub cos_linf: Option<f64>,
    pub cos_fp: Option<f64>,
    /// `min_i x_i·w / ‖w‖∞`
    pub normalized_linf_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<Record>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }
}

/// Unit reference directions a trajectory is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refs {
    pub l2: Vec<f64>,
    pub linf: Vec<f64>,
    pub fp: Option<Vec<f64>>,
    pub gamma_inf: f64,
    pub linf_non_unique: bool,
    pub fp_iterations: Option<usize>,
    pub fp_converged: Option<bool>,
}

impl Refs {
    /// Solves the ℓ2 and ℓ∞ margin problems and, when asked, runs the
    /// fixed-point iteration from the uniform simplex vector.
    pub fn compute(data: &Dataset, with_fp: bool) -> Result<Refs> {
        let l2 = solve_l2_margin(data)?;
        let linf = solve_linf_margin(data)?;
        let fp = if with_fp {
            let r = fixed_point_iterate(
                data,
                &SimplexVector::uniform(data.n()),
                crate::fixedpoint::DEFAULT_THRESHOLD,
                crate::fixedpoint::DEFAULT_MAX_ITER,
            )?;
            Some(r)
        } else {
            None
        };
        Ok(Refs {
            l2: normalized(&l2.w)?,
            linf: normalized(&linf.w)?,
            gamma_inf: linf.gamma_inf,
            linf_non_unique: linf.flags.non_unique,
            fp_iterations: fp.as_ref().map(|r| r.iterations),
            fp_converged: fp.as_ref().map(|r| r.converged),
            fp: fp.map(|r| normalized(&r.w_star)).transpose()?,
        })
    }
}

/// Builds the record for iterate `w` at `step`.
pub fn make_record(
    data: &Dataset,
    loss: LossKind,
    steps_per_epoch: u64,
    refs: &Refs,
    step: u64,
    w: &[f64],
) -> Result<Record> {
    let l = loss_full(w, data, loss)?;
    if !l.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    let cos = |r: &[f64]| cosine_similarity(w, r).ok();
    let ninf = norm_inf(w);
    let margin = (ninf > 0.0).then(|| data.rows().map(|x| dot(w, x)).fold(f64::INFINITY, f64::min) / ninf);
    Ok(Record {
        step,
        epoch: step / steps_per_epoch.max(1),
        loss: l,
        norm_l2: norm2(w),
        norm_linf: ninf,
        cos_l2: cos(&refs.l2),
        cos_linf: cos(&refs.linf),
        cos_fp: refs.fp.as_deref().and_then(cos),
        normalized_linf_margin: margin,
    })
}

struct Tracker<'a> {
    data: &'a Dataset,
    loss: LossKind,
    steps_per_epoch: u64,
    refs: &'a Refs,
    records: Vec<Record>,
    error: Option<Error>,
}

impl Recorder for Tracker<'_> {
    fn record(&mut self, step: u64, w: &[f64]) {
        if self.error.is_some() {
            return;
        }
        match make_record(self.data, self.loss, self.steps_per_epoch, self.refs, step, w) {
            Ok(r) => self.records.push(r),
            Err(e) => self.error = Some(e),
        }
    }
}

/// Turns stored iterates into a trajectory.
pub fn track(
    data: &Dataset,
    loss: LossKind,
    steps_per_epoch: u64,
    steps: &[u64],
    iterates: &[Vec<f64>],
    refs: &Refs,
) -> Result<Trajectory> {
    let records = steps
        .iter()
        .zip(iterates)
        .map(|(&t, w)| make_record(data, loss, steps_per_epoch, refs, t, w))
        .collect::<Result<_>>()?;
    Ok(Trajectory { records })
}

/// Runs `cfg` and records a trajectory at its checkpoints without storing
/// the iterates.
pub fn run_tracked(data: &Dataset, cfg: &RunConfig, refs: &Refs) -> Result<(Trajectory, Vec<f64>)> {
    let b = cfg.effective_batch(data.n()).max(1);
    let mut tracker = Tracker {
        data,
        loss: cfg.loss,
        steps_per_epoch: (data.n() / b) as u64,
        refs,
        records: Vec::new(),
        error: None,
    };
    let w = run(data, cfg, &mut tracker)?;
    if let Some(e) = tracker.error {
        return Err(e);
    }
    Ok((Trajectory { records: tracker.records }, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::gen_gr_fig2;

    fn refs() -> Refs {
        Refs::compute(&gen_gr_fig2(), true).unwrap()
    }

    #[test]
    fn exact_reference_has_unit_cosine() {
        let data = gen_gr_fig2();
        let r = refs();
        let rec = make_record(&data, LossKind::Exponential, 4, &r, 8, &r.l2).unwrap();
        assert!((rec.cos_l2.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(rec.epoch, 2);
    }

    #[test]
    fn orthogonal_iterate_has_zero_cosine() {
        let data = gen_gr_fig2();
        let mut r = refs();
        r.linf = vec![1.0, 0.0, 0.0, 0.0];
        let rec = make_record(&data, LossKind::Exponential, 4, &r, 0, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(rec.cos_linf, Some(0.0));
    }

    #[test]
    fn zero_iterate_omits_cosines() {
        let data = gen_gr_fig2();
        let rec = make_record(&data, LossKind::Exponential, 4, &refs(), 0, &[0.0; 4]).unwrap();
        assert_eq!(rec.loss, 1.0);
        assert!(rec.cos_l2.is_none() && rec.cos_linf.is_none() && rec.cos_fp.is_none());
        assert!(rec.normalized_linf_margin.is_none());
    }

    #[test]
    fn gr_refs() {
        let r = refs();
        assert!((r.gamma_inf - 3.0).abs() < 1e-12);
        assert!(r.linf_non_unique);
        assert!(r.fp_converged.unwrap());
        assert!((cosine_similarity(r.fp.as_ref().unwrap(), &r.l2).unwrap() - 1.0).abs() < 1e-9);
    }
}
