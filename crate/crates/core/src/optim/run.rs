//! Drives a stepper over `T` steps and reports checkpoints to a [`Recorder`].

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schedule::Schedule;
use super::step::{adamproxy_direction, AdamState, SignumState};
use crate::error::{Error, Result};
use crate::problem::{accumulate_grad, loss_full, Dataset, LossKind};

/// ChaCha stream used for mini-batch sampling. Dataset generation uses stream 0.
pub const SAMPLING_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Algo {
    Adam { beta1: f64, beta2: f64 },
    Signum { beta: f64 },
    Signgd,
    Gd,
    Adamproxy,
}

impl Algo {
    pub fn label(&self) -> &'static str {
        match self {
            Algo::Adam { .. } => "adam",
            Algo::Signum { .. } => "signum",
            Algo::Signgd => "signgd",
            Algo::Gd => "gd",
            Algo::Adamproxy => "adamproxy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    FullBatch,
    /// Batches `{(t·b + i) mod N}` in fixed cyclic order.
    Incremental,
    /// A fresh uniform permutation per epoch, consumed in consecutive batches.
    RandomReshuffle,
    /// `b` indices drawn uniformly with replacement at every step.
    WithReplacement,
}

impl SamplingMode {
    pub fn label(self) -> &'static str {
        match self {
            SamplingMode::FullBatch => "full",
            SamplingMode::Incremental => "inc",
            SamplingMode::RandomReshuffle => "rr",
            SamplingMode::WithReplacement => "wr",
        }
    }
}

/// Which steps are reported to the recorder. Step `0` (the initial iterate)
/// and the final step are always included.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cadence {
    /// Every step up to 100, then multiplicatively by 1.05 (rounded up).
    #[default]
    LogSpaced,
    Every { interval: u64 },
}

impl Cadence {
    pub fn checkpoints(self, steps: u64) -> Vec<u64> {
        let mut out = Vec::new();
        match self {
            Cadence::LogSpaced => {
                let mut t = 0u64;
                while t <= steps {
                    out.push(t);
                    t = if t < 100 {
                        t + 1
                    } else {
                        ((t as f64) * 1.05).ceil() as u64
                    };
                }
            }
            Cadence::Every { interval } => {
                let interval = interval.max(1);
                out.extend((0..=steps).step_by(interval as usize));
            }
        }
        if out.last() != Some(&steps) {
            out.push(steps);
        }
        out
    }
}

/// Reference directions a run should be compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefDirection {
    L2,
    Linf,
    FixedPoint,
}

fn default_refs() -> Vec<RefDirection> {
    vec![RefDirection::L2, RefDirection::Linf]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algo: Algo,
    pub sampling: SamplingMode,
    #[serde(default = "one")]
    pub batch_size: usize,
    pub schedule: Schedule,
    pub steps: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub cadence: Cadence,
    /// Initial iterate; zero when absent.
    #[serde(default)]
    pub w0: Option<Vec<f64>>,
    #[serde(default = "default_refs")]
    pub refs: Vec<RefDirection>,
}

fn one() -> usize {
    1
}

impl RunConfig {
    pub fn new(algo: Algo, sampling: SamplingMode, schedule: Schedule, steps: u64) -> Self {
        RunConfig {
            algo,
            sampling,
            batch_size: 1,
            schedule,
            steps,
            seed: 0,
            loss: LossKind::Exponential,
            cadence: Cadence::LogSpaced,
            w0: None,
            refs: default_refs(),
        }
    }

    pub fn with_batch_size(mut self, b: usize) -> Self {
        self.batch_size = b;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_cadence(mut self, cadence: Cadence) -> Self {
        self.cadence = cadence;
        self
    }

    pub fn with_loss(mut self, loss: LossKind) -> Self {
        self.loss = loss;
        self
    }

    /// Batch size actually used: `N` in full-batch mode.
    pub fn effective_batch(&self, n: usize) -> usize {
        match self.sampling {
            SamplingMode::FullBatch => n,
            _ => self.batch_size,
        }
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        self.schedule.validate()?;
        let n = data.n();
        let b = self.effective_batch(n);
        if b == 0 || b > n || n % b != 0 {
            return Err(Error::Config(format!("batch size {b} must divide N = {n}")));
        }
        if let Some(w0) = &self.w0 {
            data.check_dim(w0)?;
        }
        match self.algo {
            Algo::Adam { beta1, beta2 } => {
                for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
                    if !(0.0..1.0).contains(&b) {
                        return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
                    }
                }
            }
            Algo::Signum { beta } => {
                if !(0.0..1.0).contains(&beta) {
                    return Err(Error::Config(format!("beta must lie in [0, 1), got {beta}")));
                }
            }
            Algo::Adamproxy if self.sampling != SamplingMode::FullBatch => {
                return Err(Error::Config("adamproxy uses every sample; use full_batch sampling".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Short identifier such as `adam_inc_b1`.
    pub fn label(&self) -> String {
        match self.sampling {
            SamplingMode::FullBatch => format!("{}_full", self.algo.label()),
            s => format!("{}_{}_b{}", self.algo.label(), s.label(), self.batch_size),
        }
    }
}

pub trait Recorder {
    fn record(&mut self, step: u64, w: &[f64]);
}

/// Stores a copy of the iterate at every checkpoint.
#[derive(Debug, Clone, Default)]
pub struct Snapshots {
    pub steps: Vec<u64>,
    pub iterates: Vec<Vec<f64>>,
}

impl Recorder for Snapshots {
    fn record(&mut self, step: u64, w: &[f64]) {
        self.steps.push(step);
        self.iterates.push(w.to_vec());
    }
}

impl<F: FnMut(u64, &[f64])> Recorder for F {
    fn record(&mut self, step: u64, w: &[f64]) {
        self(step, w)
    }
}

struct BatchSampler {
    mode: SamplingMode,
    n: usize,
    b: usize,
    rng: ChaCha8Rng,
    perm: Vec<usize>,
    batch: Vec<usize>,
}

impl BatchSampler {
    fn new(mode: SamplingMode, n: usize, b: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SAMPLING_STREAM);
        BatchSampler {
            mode,
            n,
            b,
            rng,
            perm: (0..n).collect(),
            batch: Vec::with_capacity(b),
        }
    }

    fn next(&mut self, t: u64) -> &[usize] {
        self.batch.clear();
        let start = ((t as u128 * self.b as u128) % self.n as u128) as usize;
        match self.mode {
            SamplingMode::FullBatch => self.batch.extend(0..self.n),
            SamplingMode::Incremental => self.batch.extend((0..self.b).map(|i| (start + i) % self.n)),
            SamplingMode::RandomReshuffle => {
                if start == 0 {
                    self.perm.shuffle(&mut self.rng);
                }
                self.batch.extend_from_slice(&self.perm[start..start + self.b]);
            }
            SamplingMode::WithReplacement => {
                for _ in 0..self.b {
                    let i = self.rng.random_range(0..self.n);
                    self.batch.push(i);
                }
            }
        }
        &self.batch
    }
}

enum Stepper {
    Adam(AdamState),
    Signum(SignumState),
    SignGd(Vec<f64>),
    Gd(Vec<f64>),
    Proxy(Vec<f64>),
}

impl Stepper {
    fn w(&self) -> &[f64] {
        match self {
            Stepper::Adam(s) => &s.w,
            Stepper::Signum(s) => &s.w,
            Stepper::SignGd(w) | Stepper::Gd(w) | Stepper::Proxy(w) => w,
        }
    }
}

/// Runs `cfg.steps` updates from `w0` (zero by default) and returns the final
/// iterate. The recorder sees `w_t` for every checkpoint `t`.
///
/// A non-finite gradient, iterate or checkpoint loss aborts the run with
/// [`Error::Diverged`] carrying the last iterate known to be finite.
pub fn run(data: &Dataset, cfg: &RunConfig, recorder: &mut dyn Recorder) -> Result<Vec<f64>> {
    cfg.validate(data)?;
    let (n, d) = (data.n(), data.d());
    let b = cfg.effective_batch(n);
    let w0 = cfg.w0.clone().unwrap_or_else(|| vec![0.0; d]);
    let mut stepper = match cfg.algo {
        Algo::Adam { beta1, beta2 } => Stepper::Adam(AdamState::new(w0, beta1, beta2)?),
        Algo::Signum { beta } => Stepper::Signum(SignumState::new(w0, beta, b, n)?),
        Algo::Signgd => Stepper::SignGd(w0),
        Algo::Gd => Stepper::Gd(w0),
        Algo::Adamproxy => Stepper::Proxy(w0),
    };
    let mut sampler = BatchSampler::new(cfg.sampling, n, b, cfg.seed);
    let checkpoints = cfg.cadence.checkpoints(cfg.steps);
    let mut next_cp = 0usize;
    let mut g = vec![0.0; d];
    let mut last_good = stepper.w().to_vec();
    let inv_b = 1.0 / b as f64;

    for t in 0..=cfg.steps {
        if next_cp < checkpoints.len() && checkpoints[next_cp] == t {
            let loss = loss_full(stepper.w(), data, cfg.loss)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step: t,
                    last_good,
                });
            }
            recorder.record(t, stepper.w());
            next_cp += 1;
        }
        if t == cfg.steps {
            break;
        }
        last_good.copy_from_slice(stepper.w());
        let eta = cfg.schedule.eta_unchecked(t);

        if let Stepper::Proxy(w) = &mut stepper {
            let delta = adamproxy_direction(w, data, cfg.loss).map_err(|e| match e {
                Error::ZeroDenominator(_) => Error::Diverged {
                    step: t,
                    last_good: last_good.clone(),
                },
                other => other,
            })?;
            for (wk, dk) in w.iter_mut().zip(&delta) {
                *wk -= eta * dk;
            }
        } else {
            g.iter_mut().for_each(|v| *v = 0.0);
            let w = stepper.w();
            for &i in sampler.next(t) {
                accumulate_grad(&mut g, w, data.row(i), cfg.loss, inv_b);
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { step: t, last_good });
            }
            match &mut stepper {
                Stepper::Adam(s) => s.step(&g, eta)?,
                Stepper::Signum(s) => s.step(&g, eta)?,
                Stepper::SignGd(w) => {
                    for (wk, gk) in w.iter_mut().zip(&g) {
                        *wk -= eta * crate::linalg::sign(*gk);
                    }
                }
                Stepper::Gd(w) => {
                    for (wk, gk) in w.iter_mut().zip(&g) {
                        *wk -= eta * gk;
                    }
                }
                Stepper::Proxy(_) => unreachable!(),
            }
        }
        if stepper.w().iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: t, last_good });
        }
    }
    Ok(stepper.w().to_vec())
}

/// Runs and keeps every checkpoint iterate.
pub fn run_with_snapshots(data: &Dataset, cfg: &RunConfig) -> Result<Snapshots> {
    let mut snaps = Snapshots::default();
    run(data, cfg, &mut snaps)?;
    Ok(snaps)
}

/// Incremental Adam iterates at the start of every epoch `0..=epochs`, plus the
/// moment buffers at those points.
pub fn inc_adam_epoch_starts(
    data: &Dataset,
    loss: LossKind,
    beta1: f64,
    beta2: f64,
    schedule: &Schedule,
    epochs: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = data.n();
    let cfg = RunConfig::new(
        Algo::Adam { beta1, beta2 },
        SamplingMode::Incremental,
        *schedule,
        (epochs * n) as u64,
    )
    .with_loss(loss)
    .with_cadence(Cadence::Every { interval: n as u64 });
    let snaps = run_with_snapshots(data, &cfg)?;
    Ok(snaps.iterates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cosine_similarity;

    fn gr() -> Dataset {
        Dataset::custom(vec![
            vec![1.0, 1.0, 1.0, 1.0],
            vec![2.0, 2.0, 2.0, -2.0],
            vec![3.0, 3.0, -3.0, -3.0],
            vec![4.0, -4.0, 4.0, -4.0],
        ])
        .unwrap()
    }

    fn adam() -> Algo {
        Algo::Adam {
            beta1: 0.9,
            beta2: 0.95,
        }
    }

    #[test]
    fn log_cadence_shape() {
        let cps = Cadence::LogSpaced.checkpoints(1000);
        assert_eq!(&cps[..3], &[0, 1, 2]);
        assert!(cps.contains(&100) && cps.contains(&105) && cps.contains(&111));
        assert_eq!(*cps.last().unwrap(), 1000);
        assert!(cps.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(Cadence::LogSpaced.checkpoints(0), vec![0]);
        assert_eq!(Cadence::Every { interval: 4 }.checkpoints(10), vec![0, 4, 8, 10]);
    }

    #[test]
    fn zero_steps_records_initial_only() {
        let cfg = RunConfig::new(adam(), SamplingMode::Incremental, Schedule::experiment_default(), 0);
        let s = run_with_snapshots(&gr(), &cfg).unwrap();
        assert_eq!(s.steps, vec![0]);
        assert_eq!(s.iterates, vec![vec![0.0; 4]]);
    }

    #[test]
    fn gd_below_smoothness_bound_decreases_loss() {
        // exponential loss on this data is L-smooth with L <= max ‖x_i‖² · max L_i ≤ 64 · L(w)·N
        // near the origin; η = 0.005 is well inside 2/L for the whole trajectory.
        let data = gr();
        let cfg = RunConfig::new(Algo::Gd, SamplingMode::FullBatch, Schedule::constant(0.005), 2000)
            .with_cadence(Cadence::Every { interval: 1 });
        let s = run_with_snapshots(&data, &cfg).unwrap();
        let losses: Vec<f64> = s
            .iterates
            .iter()
            .map(|w| loss_full(w, &data, LossKind::Exponential).unwrap())
            .collect();
        assert!(losses.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn runs_are_deterministic() {
        let data = gr();
        for sampling in [SamplingMode::RandomReshuffle, SamplingMode::WithReplacement] {
            let cfg = RunConfig::new(adam(), sampling, Schedule::experiment_default(), 5000).with_seed(42);
            let a = run_with_snapshots(&data, &cfg).unwrap();
            let b = run_with_snapshots(&data, &cfg).unwrap();
            assert_eq!(a.iterates, b.iterates);
            let c = run_with_snapshots(&data, &cfg.clone().with_seed(43)).unwrap();
            assert_ne!(a.iterates.last(), c.iterates.last());
        }
    }

    #[test]
    fn reshuffle_visits_every_sample_each_epoch() {
        let mut s = BatchSampler::new(SamplingMode::RandomReshuffle, 6, 2, 9);
        for epoch in 0..5u64 {
            let mut seen = Vec::new();
            for t in epoch * 3..epoch * 3 + 3 {
                seen.extend_from_slice(s.next(t));
            }
            seen.sort();
            assert_eq!(seen, vec![0, 1, 2, 3, 4, 5]);
        }
        let mut inc = BatchSampler::new(SamplingMode::Incremental, 6, 2, 0);
        assert_eq!(inc.next(0), &[0, 1]);
        assert_eq!(inc.next(2), &[4, 5]);
        assert_eq!(inc.next(3), &[0, 1]);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let data = gr();
        let cfg = RunConfig::new(adam(), SamplingMode::Incremental, Schedule::experiment_default(), 10).with_batch_size(3);
        assert!(matches!(run_with_snapshots(&data, &cfg), Err(Error::Config(_))));
        let cfg = RunConfig::new(Algo::Adamproxy, SamplingMode::Incremental, Schedule::experiment_default(), 10);
        assert!(matches!(run_with_snapshots(&data, &cfg), Err(Error::Config(_))));
        let cfg = RunConfig::new(adam(), SamplingMode::FullBatch, Schedule::polynomial(0.1, 2.0), 10);
        assert!(matches!(run_with_snapshots(&data, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn divergence_keeps_last_good_iterate() {
        // exp(1000) overflows, so the loss at the very first checkpoint is infinite
        let data = Dataset::custom(vec![vec![1.0]]).unwrap();
        let mut cfg = RunConfig::new(Algo::Gd, SamplingMode::FullBatch, Schedule::constant(0.1), 5);
        cfg.w0 = Some(vec![-1000.0]);
        match run_with_snapshots(&data, &cfg) {
            Err(Error::Diverged { step, last_good }) => {
                assert_eq!(step, 0);
                assert_eq!(last_good, vec![-1000.0]);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn full_batch_adam_sign_agreement_late_in_training() {
        // Late in a full-batch run the update on every coordinate with a
        // sizeable gradient has the opposite sign of that gradient.
        let data = gr();
        let sched = Schedule::experiment_default();
        let cfg = RunConfig::new(adam(), SamplingMode::FullBatch, sched, 20_000)
            .with_cadence(Cadence::Every { interval: 1 });
        let mut prev: Option<Vec<f64>> = None;
        let mut checked = 0;
        let mut rec = |t: u64, w: &[f64]| {
            if let Some(p) = &prev {
                let tp = t - 1;
                let l = loss_full(p, &data, LossKind::Exponential).unwrap();
                if l < 1e-3 {
                    let g = crate::problem::grad_full(p, &data, LossKind::Exponential).unwrap();
                    let thresh = sched.eta_unchecked(tp).sqrt() * l;
                    for k in 0..4 {
                        if g[k].abs() > thresh {
                            assert_eq!(crate::linalg::sign(w[k] - p[k]), -crate::linalg::sign(g[k]), "t={tp} k={k}");
                            checked += 1;
                        }
                    }
                }
            }
            prev = Some(w.to_vec());
        };
        run(&data, &cfg, &mut rec).unwrap();
        assert!(checked > 100);
    }

    #[test]
    fn labels() {
        let cfg = RunConfig::new(adam(), SamplingMode::Incremental, Schedule::experiment_default(), 1);
        assert_eq!(cfg.label(), "adam_inc_b1");
        let cfg = RunConfig::new(Algo::Signum { beta: 0.9 }, SamplingMode::FullBatch, Schedule::experiment_default(), 1);
        assert_eq!(cfg.label(), "signum_full");
        let _ = cosine_similarity(&[1.0], &[1.0]);
    }
}
