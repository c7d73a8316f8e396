use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ibl_core::datagen::{self, GenSpec, CANONICAL_SEED, DEFAULT_MIN_MARGIN};
use ibl_core::fixedpoint::{fixed_point_iterate, DEFAULT_MAX_ITER, DEFAULT_THRESHOLD};
use ibl_core::harness::figures::{figure_dir, MANIFEST_FILE};
use ibl_core::harness::{emit_csv, rerun_manifest, run_figure, run_tracked, FigureName, Manifest, Refs};
use ibl_core::margin::{solve_l2_margin, solve_linf_margin, solve_p_adam, SimplexVector, DEFAULT_TOL};
use ibl_core::optim::{RefDirection, RunConfig};
use ibl_core::{Dataset, Error, Result};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "ibl", version, about = "Implicit-bias experiments for mini-batch Adam and Signum")]
struct Cli {
    /// Seed for data generation and sampling.
    #[arg(long, global = true, default_value_t = CANONICAL_SEED)]
    seed: u64,
    /// Directory for generated files.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for parallel sub-runs (IBL_THREADS takes precedence).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset and write it as JSON.
    Gen(GenArgs),
    /// Train one optimizer configuration and write its trajectory.
    Train(TrainArgs),
    /// Solve a max-margin problem.
    Margin(MarginArgs),
    /// Run the dual fixed-point iteration.
    FixedPoint(FixedPointArgs),
    /// Reproduce a figure (CSV per curve, SVG per panel, manifest).
    Figure(FigureArgs),
    /// Check a dataset against the standing assumptions.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Gaussian,
    Gr,
    ShiftedDiagonal,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    d: usize,
    /// Comma-separated positive magnitudes (gr).
    #[arg(long, value_delimiter = ',')]
    magnitudes: Option<Vec<f64>>,
    /// Comma-separated sign rows such as `++++,+++-` (gr).
    #[arg(long, value_delimiter = ',')]
    signs: Option<Vec<String>>,
    /// Comma-separated increasing diagonal values (shifted-diagonal).
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MIN_MARGIN)]
    min_margin: f64,
    /// Output file; defaults to `<out-dir>/dataset.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Run config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's step count.
    #[arg(long)]
    steps: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MarginKind {
    L2,
    Linf,
    PAdam,
}

#[derive(Args)]
struct MarginArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "l2")]
    kind: MarginKind,
    /// Simplex weights for p-adam; uniform when omitted.
    #[arg(long, value_delimiter = ',')]
    c: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Write the solution here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FixedPointArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    thr: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Starting simplex vector; uniform when omitted.
    #[arg(long, value_delimiter = ',')]
    c0: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FigureArgs {
    /// fig1, fig2, fig4, fig5, fig6, appA_batch, appA_beta1, appA_beta2, appB_gr, appB_signum
    name: Option<String>,
    /// Produce every figure.
    #[arg(long, conflicts_with_all = ["name", "from_manifest"])]
    all: bool,
    /// Override the step count of every run.
    #[arg(long)]
    steps: Option<u64>,
    /// Re-run the experiment recorded in a manifest.
    #[arg(long, conflicts_with = "name")]
    from_manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    data: PathBuf,
}

fn write_or_print(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            }
            std::fs::write(p, format!("{text}\n")).map_err(|e| io_err(p, e))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_signs(rows: &[String]) -> Result<Vec<Vec<i8>>> {
    rows.iter()
        .map(|r| {
            r.trim()
                .chars()
                .map(|c| match c {
                    '+' => Ok(1),
                    '-' => Ok(-1),
                    other => Err(Error::Config(format!("sign rows use + and -, found {other:?}"))),
                })
                .collect()
        })
        .collect()
}

fn cmd_gen(cli: &Cli, a: &GenArgs) -> Result<()> {
    let spec = match a.kind {
        Kind::Gaussian => GenSpec::Gaussian {
            n: a.n,
            d: a.d,
            seed: cli.seed,
            min_margin: a.min_margin,
        },
        Kind::Gr => match (&a.magnitudes, &a.signs) {
            (None, None) => GenSpec::fig2_gr(),
            (Some(m), Some(s)) => GenSpec::Gr {
                magnitudes: m.clone(),
                signs: parse_signs(s)?,
            },
            _ => return Err(Error::Config("gr needs both --magnitudes and --signs".into())),
        },
        Kind::ShiftedDiagonal => match (&a.values, a.delta) {
            (None, None) => GenSpec::fig5_shifted_diagonal(),
            (Some(v), Some(d)) => GenSpec::ShiftedDiagonal {
                values: v.clone(),
                delta: d,
            },
            _ => return Err(Error::Config("shifted-diagonal needs both --values and --delta".into())),
        },
    };
    let data = spec.generate()?;
    let report = datagen::validate(&data);
    if !report.ok() {
        return Err(Error::Assumption {
            assumption: "generated data",
            detail: format!("{report:?}"),
        });
    }
    let out = a.out.clone().unwrap_or_else(|| cli.out_dir.join("dataset.json"));
    write_or_print(&data.to_json()?, Some(&out))?;
    eprintln!("wrote {} (gamma_inf = {:.6})", out.display(), report.gamma_inf.unwrap_or(f64::NAN));
    Ok(())
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let data = Dataset::load(&a.data)?;
    let text = std::fs::read_to_string(&a.config).map_err(|e| io_err(&a.config, e))?;
    let mut cfg: RunConfig = serde_json::from_str(&text)?;
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    cfg.validate(&data)?;
    let refs = Refs::compute(&data, cfg.refs.contains(&RefDirection::FixedPoint))?;
    let (traj, w) = run_tracked(&data, &cfg, &refs)?;
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| io_err(&cli.out_dir, e))?;
    let label = cfg.label();
    let csv = cli.out_dir.join(format!("{label}.csv"));
    emit_csv(&traj, &csv)?;
    let last = traj.last().expect("a run always records its final step");
    let summary = serde_json::json!({
        "config": cfg,
        "w": w,
        "final": last,
        "csv": csv,
    });
    write_or_print(
        &serde_json::to_string_pretty(&summary)?,
        Some(&cli.out_dir.join(format!("{label}.json"))),
    )?;
    eprintln!(
        "{label}: T={} loss={:.3e} cos_l2={} cos_linf={} -> {}",
        last.step,
        last.loss,
        fmt_opt(last.cos_l2),
        fmt_opt(last.cos_linf),
        csv.display()
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

fn cmd_margin(a: &MarginArgs) -> Result<()> {
    let data = Dataset::load(&a.data)?;
    let text = match a.kind {
        MarginKind::L2 => solve_l2_margin(&data)?.to_json()?,
        MarginKind::Linf => solve_linf_margin(&data)?.to_json()?,
        MarginKind::PAdam => {
            let c = match &a.c {
                Some(c) => SimplexVector::new(c.clone())?,
                None => SimplexVector::uniform(data.n()),
            };
            solve_p_adam(&data, &c, a.tol)?.to_json()?
        }
    };
    write_or_print(&text, a.out.as_deref())
}

fn cmd_fixed_point(a: &FixedPointArgs) -> Result<()> {
    let data = Dataset::load(&a.data)?;
    let c0 = match &a.c0 {
        Some(c) => SimplexVector::new(c.clone())?,
        None => SimplexVector::uniform(data.n()),
    };
    let r = fixed_point_iterate(&data, &c0, a.thr, a.max_iter)?;
    if !r.converged {
        eprintln!(
            "warning: not converged after {} iterations (delta {:.3e})",
            r.iterations, r.final_delta
        );
    }
    write_or_print(&r.to_json()?, a.out.as_deref())
}

fn report_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    eprintln!("{}: {} runs -> {}", m.figure, m.runs.len(), dir.display());
    if m.ok() {
        return Ok(());
    }
    for e in &m.errors {
        eprintln!("  failed: {e}");
    }
    Err(Error::Numeric(format!("{} of {} runs failed", m.errors.len(), m.runs.len())))
}

fn cmd_figure(cli: &Cli, a: &FigureArgs) -> Result<()> {
    if let Some(path) = &a.from_manifest {
        if a.steps.is_some() {
            return Err(Error::Config("--steps cannot be combined with --from-manifest".into()));
        }
        let m = rerun_manifest(path, &cli.out_dir)?;
        return report_manifest(&cli.out_dir, &m);
    }
    let names: Vec<FigureName> = if a.all {
        FigureName::ALL.to_vec()
    } else {
        match &a.name {
            Some(n) => vec![n.parse()?],
            None => return Err(Error::Config("name a figure or pass --all".into())),
        }
    };
    let mut failures = Vec::new();
    for name in names {
        let dir = figure_dir(&cli.out_dir, name);
        let m = run_figure(name, cli.seed, a.steps, &dir)?;
        if let Err(e) = report_manifest(&dir, &m) {
            failures.push(format!("{name}: {e}"));
        }
        eprintln!("  manifest: {}", dir.join(MANIFEST_FILE).display());
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::Numeric(failures.join("; ")))
    }
}

fn cmd_validate(a: &ValidateArgs) -> Result<bool> {
    let data = Dataset::load_unchecked(&a.data)?;
    let report = datagen::validate(&data);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(report.ok())
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var("IBL_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("IBL_THREADS must be a positive integer, got {v:?}"))),
        _ => Ok(flag),
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else {
        EXIT_CONFIG
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = thread_count(cli.threads).and_then(|t| {
        ibl_core::exec::init_threads(t);
        match &cli.command {
            Command::Gen(a) => cmd_gen(&cli, a),
            Command::Train(a) => cmd_train(&cli, a),
            Command::Margin(a) => cmd_margin(a),
            Command::FixedPoint(a) => cmd_fixed_point(a),
            Command::Figure(a) => cmd_figure(&cli, a),
            Command::Validate(a) => cmd_validate(a).and_then(|ok| {
                if ok {
                    Ok(())
                } else {
                    Err(Error::Assumption {
                        assumption: "validation",
                        detail: "dataset fails the nonzero or separability check".into(),
                    })
                }
            }),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
