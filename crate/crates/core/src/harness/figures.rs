//! Figure reproductions: dataset + run list + panels, written as one CSV per
//! curve, one SVG per panel, a reference-direction cache and a manifest.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::csvio::{emit_csv, CSV_SCHEMA_VERSION};
use super::svg::{emit_svg, Axes, Curve};
use super::trajectory::{run_tracked, Record, Refs, Trajectory};
use crate::datagen::GenSpec;
use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::optim::{Algo, RunConfig, SamplingMode, Schedule};
use crate::problem::Dataset;

pub const GAUSSIAN_STEPS: u64 = 1_000_000;
pub const SMALL_STEPS: u64 = 200_000;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REFS_FILE: &str = "refs.json";
pub const DATASET_FILE: &str = "dataset.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FigureName {
    Fig1,
    Fig2,
    Fig4,
    Fig5,
    Fig6,
    AppABatch,
    AppABeta1,
    AppABeta2,
    AppBGr,
    AppBSignum,
}

impl FigureName {
    pub const ALL: [FigureName; 10] = [
        FigureName::Fig1,
        FigureName::Fig2,
        FigureName::Fig4,
        FigureName::Fig5,
        FigureName::Fig6,
        FigureName::AppABatch,
        FigureName::AppABeta1,
        FigureName::AppABeta2,
        FigureName::AppBGr,
        FigureName::AppBSignum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FigureName::Fig1 => "fig1",
            FigureName::Fig2 => "fig2",
            FigureName::Fig4 => "fig4",
            FigureName::Fig5 => "fig5",
            FigureName::Fig6 => "fig6",
            FigureName::AppABatch => "appA_batch",
            FigureName::AppABeta1 => "appA_beta1",
            FigureName::AppABeta2 => "appA_beta2",
            FigureName::AppBGr => "appB_gr",
            FigureName::AppBSignum => "appB_signum",
        }
    }
}

impl fmt::Display for FigureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureName::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<&str> = FigureName::ALL.iter().map(|f| f.as_str()).collect();
                Error::Config(format!("unknown figure {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Trajectory column shown in a panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    CosL2,
    CosLinf,
    CosFp,
    NormalizedLinfMargin,
    Loss,
}

impl Column {
    pub fn name(self) -> &'static str {
        match self {
            Column::CosL2 => "cos_l2",
            Column::CosLinf => "cos_linf",
            Column::CosFp => "cos_fp",
            Column::NormalizedLinfMargin => "normalized_linf_margin",
            Column::Loss => "loss",
        }
    }

    pub fn value(self, r: &Record) -> Option<f64> {
        match self {
            Column::CosL2 => r.cos_l2,
            Column::CosLinf => r.cos_linf,
            Column::CosFp => r.cos_fp,
            Column::NormalizedLinfMargin => r.normalized_linf_margin,
            Column::Loss => Some(r.loss),
        }
    }

    fn axes(self, figure: &str) -> Axes {
        let title = format!("{figure}: {}", self.name());
        match self {
            Column::CosL2 => Axes::cosine(&title, "cosine similarity to l2 max-margin"),
            Column::CosLinf => Axes::cosine(&title, "cosine similarity to l-inf max-margin"),
            Column::CosFp => Axes::cosine(&title, "cosine similarity to fixed point"),
            Column::NormalizedLinfMargin | Column::Loss => Axes {
                title,
                x_label: "step".into(),
                y_label: self.name().into(),
                y_range: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRun {
    pub label: String,
    pub config: RunConfig,
}

/// Everything needed to produce a figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub figure: String,
    pub dataset: GenSpec,
    pub runs: Vec<FigureRun>,
    pub panels: Vec<Column>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.runs.is_empty() {
            return Err(Error::Config("an experiment needs at least one run".into()));
        }
        if self.panels.is_empty() {
            return Err(Error::Config("an experiment needs at least one panel".into()));
        }
        let mut labels: Vec<&str> = self.runs.iter().map(|r| r.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("run labels must be unique".into()));
        }
        if let Some(bad) = self
            .runs
            .iter()
            .find(|r| r.label.is_empty() || !r.label.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)))
        {
            return Err(Error::Config(format!("run label {:?} is not a safe file name", bad.label)));
        }
        Ok(())
    }

    fn needs_fp(&self) -> bool {
        self.panels.contains(&Column::CosFp)
    }
}

fn adam(beta1: f64, beta2: f64) -> Algo {
    Algo::Adam { beta1, beta2 }
}

fn cfg(algo: Algo, sampling: SamplingMode, b: usize, steps: u64) -> RunConfig {
    RunConfig::new(algo, sampling, Schedule::experiment_default(), steps).with_batch_size(b)
}

fn adam_family(beta1: f64, beta2: f64, steps: u64, suffix: &str) -> Vec<(String, RunConfig)> {
    let a = adam(beta1, beta2);
    vec![
        (format!("adam_full{suffix}"), cfg(a, SamplingMode::FullBatch, 1, steps)),
        (format!("adam_inc{suffix}"), cfg(a, SamplingMode::Incremental, 1, steps)),
        (format!("adam_rr{suffix}"), cfg(a, SamplingMode::RandomReshuffle, 1, steps)),
        (format!("adam_wr{suffix}"), cfg(a, SamplingMode::WithReplacement, 1, steps)),
    ]
}

fn minibatch_family(beta1: f64, beta2: f64, steps: u64, suffix: &str) -> Vec<(String, RunConfig)> {
    adam_family(beta1, beta2, steps, suffix).into_iter().skip(1).collect()
}

/// The experiment behind each figure. Run `i` uses sampling seed `seed + 1 + i`;
/// Gaussian data uses `seed` itself.
pub fn figure_spec(name: FigureName, seed: u64, steps: Option<u64>) -> ExperimentSpec {
    use Column::*;
    let gauss = GenSpec::canonical_gaussian(seed);
    let long = steps.unwrap_or(GAUSSIAN_STEPS);
    let short = steps.unwrap_or(SMALL_STEPS);
    let (dataset, runs, panels): (GenSpec, Vec<(String, RunConfig)>, Vec<Column>) = match name {
        FigureName::Fig1 => (gauss, adam_family(0.9, 0.95, long, ""), vec![CosL2, CosLinf]),
        FigureName::Fig2 => {
            let mut runs = adam_family(0.9, 0.95, short, "");
            runs.push((
                "gd_full".into(),
                RunConfig::new(Algo::Gd, SamplingMode::FullBatch, Schedule::constant(0.1), short),
            ));
            (GenSpec::fig2_gr(), runs, vec![CosL2, CosLinf])
        }
        FigureName::Fig4 => {
            let mut runs = adam_family(0.9, 0.95, long, "");
            runs.push(("adamproxy".into(), cfg(Algo::Adamproxy, SamplingMode::FullBatch, 1, long)));
            (gauss, runs, vec![CosL2, CosFp])
        }
        FigureName::Fig5 => {
            let mut runs = adam_family(0.9, 0.95, short, "");
            runs.push(("adamproxy".into(), cfg(Algo::Adamproxy, SamplingMode::FullBatch, 1, short)));
            (GenSpec::fig5_shifted_diagonal(), runs, vec![CosL2, CosLinf])
        }
        FigureName::Fig6 => {
            let s = Algo::Signum { beta: 0.99 };
            let mut runs = vec![("signum_full".to_string(), cfg(s, SamplingMode::FullBatch, 1, long))];
            for b in [5, 2, 1] {
                runs.push((format!("signum_inc_b{b}"), cfg(s, SamplingMode::Incremental, b, long)));
            }
            (gauss, runs, vec![CosL2, CosLinf])
        }
        FigureName::AppABatch => {
            let runs = [1, 2, 5, 10]
                .into_iter()
                .map(|b| (format!("adam_inc_b{b}"), cfg(adam(0.9, 0.95), SamplingMode::Incremental, b, long)))
                .collect();
            (gauss, runs, vec![CosL2, CosLinf])
        }
        FigureName::AppABeta1 => {
            let runs = [0.9, 0.5, 0.1]
                .into_iter()
                .flat_map(|b1| minibatch_family(b1, 0.95, long, &format!("_beta1_{b1}")))
                .collect();
            (gauss, runs, vec![CosFp])
        }
        FigureName::AppABeta2 => {
            let runs = [0.9, 0.5, 0.1]
                .into_iter()
                .flat_map(|b2| minibatch_family(0.1, b2, long, &format!("_beta2_{b2}")))
                .collect();
            (gauss, runs, vec![CosFp])
        }
        FigureName::AppBGr => {
            let mut runs: Vec<_> = [(0.1, 0.1), (0.5, 0.5), (0.9, 0.95)]
                .into_iter()
                .flat_map(|(b1, b2)| minibatch_family(b1, b2, short, &format!("_beta_{b1}_{b2}")))
                .collect();
            runs.insert(0, ("adam_full_beta_0.9_0.95".into(), cfg(adam(0.9, 0.95), SamplingMode::FullBatch, 1, short)));
            (GenSpec::fig2_gr(), runs, vec![CosL2, CosLinf])
        }
        FigureName::AppBSignum => {
            let mut runs = Vec::new();
            for beta in [0.5, 0.9, 0.95, 0.99] {
                for b in [1, 2, 5, 10] {
                    runs.push((
                        format!("signum_beta{beta}_b{b}"),
                        cfg(Algo::Signum { beta }, SamplingMode::Incremental, b, long),
                    ));
                }
            }
            (gauss, runs, vec![CosL2, CosLinf])
        }
    };
    let runs = runs
        .into_iter()
        .enumerate()
        .map(|(i, (label, config))| FigureRun {
            label,
            config: config.with_seed(seed.wrapping_add(1 + i as u64)),
        })
        .collect();
    ExperimentSpec {
        figure: name.as_str().into(),
        dataset,
        runs,
        panels,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub label: String,
    pub config: RunConfig,
    pub csv: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestPanel {
    pub column: Column,
    pub svg: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub figure: String,
    pub csv_schema_version: u32,
    pub dataset: GenSpec,
    pub dataset_file: String,
    pub refs_file: String,
    pub runs: Vec<ManifestRun>,
    pub panels: Vec<ManifestPanel>,
    /// Every file written for this figure, relative to the output directory.
    pub files: Vec<String>,
    pub errors: Vec<String>,
    pub note: String,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            figure: self.figure.clone(),
            dataset: self.dataset.clone(),
            runs: self
                .runs
                .iter()
                .map(|r| FigureRun {
                    label: r.label.clone(),
                    config: r.config.clone(),
                })
                .collect(),
            panels: self.panels.iter().map(|p| p.column).collect(),
        }
    }

    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RefsCache {
    n: usize,
    d: usize,
    x: Vec<f64>,
    refs: Refs,
}

/// Loads cached references for `data` from `path`, or solves and caches them.
pub fn cached_refs(data: &Dataset, with_fp: bool, path: &Path) -> Result<Refs> {
    let x: Vec<f64> = data.rows().flatten().copied().collect();
    if let Ok(s) = std::fs::read_to_string(path) {
        if let Ok(c) = serde_json::from_str::<RefsCache>(&s) {
            if c.n == data.n() && c.d == data.d() && c.x == x && (!with_fp || c.refs.fp.is_some()) {
                return Ok(c.refs);
            }
        }
    }
    let refs = Refs::compute(data, with_fp)?;
    let cache = RefsCache {
        n: data.n(),
        d: data.d(),
        x,
        refs: refs.clone(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&cache)? + "\n").map_err(|e| Error::io(path, e))?;
    Ok(refs)
}

fn curves(column: Column, runs: &[(String, Trajectory)]) -> Vec<Curve> {
    runs.iter()
        .map(|(label, t)| Curve {
            label: label.clone(),
            points: t
                .records
                .iter()
                .filter_map(|r| column.value(r).map(|v| (r.step as f64, v)))
                .collect(),
        })
        .collect()
}

/// Runs every curve of `spec` (in parallel when enabled) and writes all
/// outputs under `out_dir`. Failed runs are listed in the manifest; the
/// remaining outputs are still written.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let data = spec.dataset.generate()?;
    data.save(out_dir.join(DATASET_FILE))?;
    let refs = cached_refs(&data, spec.needs_fp(), &out_dir.join(REFS_FILE))?;

    let results = par_map(&spec.runs, |r| run_tracked(&data, &r.config, &refs).map(|(t, _)| t));

    let mut files = vec![DATASET_FILE.to_string(), REFS_FILE.to_string()];
    let mut manifest_runs = Vec::new();
    let mut errors = Vec::new();
    let mut done = Vec::new();
    for (run, res) in spec.runs.iter().zip(results) {
        match res {
            Ok(traj) => {
                let name = format!("{}.csv", run.label);
                emit_csv(&traj, out_dir.join(&name))?;
                files.push(name.clone());
                manifest_runs.push(ManifestRun {
                    label: run.label.clone(),
                    config: run.config.clone(),
                    csv: Some(name),
                    error: None,
                });
                done.push((run.label.clone(), traj));
            }
            Err(e) => {
                errors.push(format!("{}: {e}", run.label));
                manifest_runs.push(ManifestRun {
                    label: run.label.clone(),
                    config: run.config.clone(),
                    csv: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let mut panels = Vec::new();
    if !done.is_empty() {
        for &col in &spec.panels {
            let name = format!("{}_{}.svg", spec.figure, col.name());
            emit_svg(&curves(col, &done), &col.axes(&spec.figure), out_dir.join(&name))?;
            files.push(name.clone());
            panels.push(ManifestPanel { column: col, svg: name });
        }
    }
    files.push(MANIFEST_FILE.to_string());
    let manifest = Manifest {
        figure: spec.figure.clone(),
        csv_schema_version: CSV_SCHEMA_VERSION,
        dataset: spec.dataset.clone(),
        dataset_file: DATASET_FILE.into(),
        refs_file: REFS_FILE.into(),
        runs: manifest_runs,
        panels,
        files,
        errors,
        note: "x axes span the desk-scale step counts recorded in each run config; the original figures' exact ranges are not recoverable".into(),
    };
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Produces figure `name` under `out_dir`.
pub fn run_figure(name: FigureName, seed: u64, steps: Option<u64>, out_dir: &Path) -> Result<Manifest> {
    run_experiment(&figure_spec(name, seed, steps), out_dir)
}

/// Re-runs the experiment recorded in a manifest into `out_dir`.
pub fn rerun_manifest(manifest_path: &Path, out_dir: &Path) -> Result<Manifest> {
    let m = Manifest::load(manifest_path)?;
    if m.csv_schema_version != CSV_SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "manifest uses CSV schema {}, this build writes {CSV_SCHEMA_VERSION}",
            m.csv_schema_version
        )));
    }
    run_experiment(&m.spec(), out_dir)
}

/// Default output directory for a figure below `root`.
pub fn figure_dir(root: &Path, name: FigureName) -> PathBuf {
    root.join(name.as_str())
}
