use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sphere4::cdl::ScaleConvention;
use sphere4::harness::{
    self, InitKind, LandscapeOutput, ModelKind, OutputFormat, PointSource, RunContext, SolveRequest, SweepAxes,
    SweepObjective, SweepSpec,
};
use sphere4::io::read_matrix_csv;
use sphere4::landscape::{self, RegionParams};
use sphere4::model::{make_untf, UntfConfig};
use sphere4::optimize::{Escape, Method, SolveConfig, StepPolicy};
use sphere4::recovery::EPS_CDL;
use sphere4::{Dictionary, Error, Result};

#[derive(Parser)]
#[command(name = "sphere4", version, about = "l4-norm maximization on the sphere for dictionary learning")]
struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "SPHERE4_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Odl,
    Cdl,
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Random,
    Data,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Power,
    Rgd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    MainText,
    AppendixH,
    TightFrame,
}

#[derive(Clone, Copy, ValueEnum)]
enum Objective {
    PhiT,
    PhiDl,
    PhiCdl,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic ODL or CDL instance.
    Gen {
        #[arg(long, value_enum)]
        model: Model,
        #[arg(long)]
        n: usize,
        /// Number of atoms (odl).
        #[arg(long)]
        m: Option<usize>,
        /// Number of filters (cdl).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        p: usize,
    },
    /// Solve from one initial point and report recovery.
    Solve(SolveArgs),
    /// Success-rate grid over (n, m, p, theta, K).
    Sweep(SweepArgs),
    /// Region, critical-point and curvature report for one or many points.
    Landscape(LandscapeArgs),
    /// Shift/sign alignment of estimated filters against references.
    Align {
        #[arg(long)]
        estimates: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = EPS_CDL)]
        eps: f64,
    },
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value_t = Solver::Power)]
    method: Solver,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    grad_tol: f64,
    /// Fixed RGD step; backtracking when absent.
    #[arg(long)]
    tau: Option<f64>,
    /// Enable negative-curvature escape with this curvature tolerance.
    #[arg(long)]
    escape_curv_tol: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    escape_step: f64,
}

impl SolverArgs {
    fn config(&self, seed: u64) -> SolveConfig {
        SolveConfig {
            method: match self.method {
                Solver::Power => Method::Power,
                Solver::Rgd => Method::Rgd,
            },
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            step: match self.tau {
                Some(tau) => StepPolicy::Fixed { tau },
                None => StepPolicy::default(),
            },
            escape: match self.escape_curv_tol {
                Some(curv_tol) => Escape::Eig {
                    curv_tol,
                    step: self.escape_step,
                },
                None => Escape::Off,
            },
            seed,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_enum)]
    model: Model,
    #[arg(long)]
    dictionary: Option<PathBuf>,
    #[arg(long)]
    observations: Option<PathBuf>,
    #[arg(long)]
    filters: Option<PathBuf>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    init: Option<Init>,
    #[arg(long, value_enum, default_value_t = Convention::MainText)]
    convention: Convention,
    #[arg(long)]
    emit_trace: bool,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep spec; overrides the grid flags.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overcompleteness transition on phi_T at m = floor(n²/2) and ceil(1.5 n²).
    #[arg(long)]
    overcompleteness: bool,
    #[arg(long, value_enum, default_value_t = Objective::PhiT)]
    objective: Objective,
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    m: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    p: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    theta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    k: Vec<usize>,
    #[arg(long, default_value_t = 12)]
    repeats: usize,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct LandscapeArgs {
    /// Dictionary CSV; a fresh UNTF of size n×m when absent.
    #[arg(long)]
    dictionary: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Points CSV, one point per row.
    #[arg(long)]
    points: Option<PathBuf>,
    /// Number of uniform random points when no points file is given.
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = landscape::XI_DL)]
    xi: f64,
    /// CDL-mode region threshold with this κ.
    #[arg(long)]
    kappa: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sphere4: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    }
    let command = std::env::args().collect::<Vec<_>>().join(" ");
    let ctx = RunContext::new(&cli.out_dir, cli.seed, command)?;
    let format = match cli.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    match cli.cmd {
        Cmd::Gen { model, n, m, k, theta, p } => {
            let paths = match model {
                Model::Odl => {
                    let m = m.ok_or_else(|| Error::InvalidParameter("--m is required for odl".into()))?;
                    harness::gen_odl(&ctx, n, m, theta, p)?
                }
                Model::Cdl => {
                    let k = k.ok_or_else(|| Error::InvalidParameter("--k is required for cdl".into()))?;
                    harness::gen_cdl(&ctx, n, k, theta, p)?
                }
            };
            for p in paths {
                println!("{}", p.display());
            }
        }
        Cmd::Solve(a) => {
            let req = SolveRequest {
                model: match a.model {
                    Model::Odl => ModelKind::Odl,
                    Model::Cdl => ModelKind::Cdl,
                },
                dictionary: a.dictionary,
                observations: a.observations,
                filters: a.filters,
                theta: a.theta,
                k: a.k,
                init: a.init.map(|i| match i {
                    Init::Random => InitKind::Random,
                    Init::Data => InitKind::Data,
                }),
                solver: a.solver.config(cli.seed),
                convention: match a.convention {
                    Convention::MainText => ScaleConvention::MainText,
                    Convention::AppendixH => ScaleConvention::AppendixH,
                    Convention::TightFrame => ScaleConvention::TightFrame,
                },
                emit_trace: a.emit_trace,
            };
            let rep = harness::cmd_solve(&ctx, &req)?;
            match format {
                OutputFormat::Json => println!("{}", rep.result.to_json(a.emit_trace)?),
                OutputFormat::Csv => {
                    println!("objective,iterations,final_grad_norm,termination,rho_e,success");
                    let (rho, ok) = rep
                        .recovery
                        .map_or((String::new(), String::new()), |r| (sphere4::io::fmt_f64(r.rho_e), r.success.to_string()));
                    println!(
                        "{},{},{},{},{rho},{ok}",
                        rep.objective,
                        rep.result.iterations,
                        sphere4::io::fmt_f64(rep.result.final_grad_norm),
                        harness::termination_str(rep.result.termination)
                    );
                }
            }
        }
        Cmd::Sweep(a) => {
            let spec = if let Some(path) = &a.spec {
                serde_json::from_str::<SweepSpec>(&std::fs::read_to_string(path)?)?
            } else if a.overcompleteness {
                SweepSpec {
                    repeats: a.repeats,
                    solver: a.solver.config(cli.seed),
                    ..SweepSpec::overcompleteness(&a.n)
                }
            } else {
                let objective = match a.objective {
                    Objective::PhiT => SweepObjective::PhiT,
                    Objective::PhiDl => SweepObjective::PhiDl,
                    Objective::PhiCdl => SweepObjective::PhiCdl,
                };
                let m = if a.m.is_empty() { vec![0] } else { a.m };
                let axes = SweepAxes {
                    n: a.n,
                    m,
                    p: a.p,
                    theta: a.theta,
                    k: a.k,
                };
                SweepSpec::grid(&axes, a.repeats, objective, a.solver.config(cli.seed))
            };
            let rates = harness::cmd_sweep(&ctx, &spec)?;
            match format {
                OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&rates)?),
                OutputFormat::Csv => {
                    print!("{}", std::fs::read_to_string(ctx.path(harness::RATES_CSV))?);
                }
            }
        }
        Cmd::Landscape(a) => {
            let dict = match (&a.dictionary, a.n, a.m) {
                (Some(p), _, _) => Dictionary::new(read_matrix_csv(p)?)?,
                (None, Some(n), Some(m)) => make_untf(n, m, cli.seed, UntfConfig::default())?.0,
                _ => return Err(Error::InvalidParameter("landscape needs --dictionary or --n and --m".into())),
            };
            let points = match a.points {
                Some(p) => PointSource::File(p),
                None => PointSource::Random { count: a.count },
            };
            let mut region = RegionParams::dl(dict.coherence());
            region.xi = a.xi;
            if let Some(kappa) = a.kappa {
                region.kappa = kappa;
            }
            match harness::cmd_landscape(&ctx, &dict, &points, &region, a.kappa.is_some(), format)? {
                LandscapeOutput::Single(r) => println!("{}", r.to_json()?),
                LandscapeOutput::Batch(rows) => {
                    let name = match format {
                        OutputFormat::Csv => "landscape.csv",
                        OutputFormat::Json => "landscape.json",
                    };
                    println!("{} rows -> {}", rows.len(), ctx.path(name).display());
                }
            }
        }
        Cmd::Align { estimates, truth, eps } => {
            let al = harness::cmd_align(&ctx, &estimates, &truth, eps)?;
            match format {
                OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&al)?),
                OutputFormat::Csv => print!("{}", std::fs::read_to_string(ctx.path("alignment.csv"))?),
            }
        }
    }
    Ok(())
}
