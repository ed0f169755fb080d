//! Argument parsing and dispatch for the `meshless-ops` binary.
//!
//! Exit codes: 0 on success, 1 when a computation fails, 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::assembly::{Sampling, SolverConfig, SolverKind, StarDomain};
use crate::error::Error;
use crate::experiments::{
    run_experiment, Command, ConsistencyParams, ConvergenceParams, ExperimentConfig, LbAssembleParams,
    LbEigenParams, LbSampleParams, PoissonParams, ReconstructParams, ShapeSweepParams, SurfaceInput,
    DEFAULT_RECONSTRUCT_CR2, DEFAULT_RECONSTRUCT_GHOSTS,
};
use crate::functions::TestFunction;
use crate::ghosts::GhostStrategy;
use crate::kernels::KernelFamily;
use crate::spectral::DEFAULT_EIG_BUDGET;
use crate::stencil::{StencilConfig, StencilMethod};
use crate::surface::{Surface, DEFAULT_LB_NEIGHBORS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPUTATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "MESHLESS_OPS_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "meshless-ops",
    version,
    about = "CLS-GSP meshless operators, Poisson solves and surface spectra",
    args_conflicts_with_subcommands = true
)]
pub struct Cli {
    /// Re-run a saved `config.json` instead of a subcommand.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Overrides the output directory of `--config`.
    #[arg(long, requires = "config")]
    pub output_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Sub>,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// 1D local reconstructions: CLS-GSP against plain polynomial least squares.
    Reconstruct(ReconstructArgs),
    /// Laplacian error at a stencil center as the stencil shrinks.
    Consistency(ConsistencyArgs),
    /// Error and rank over a decade sweep of the shape parameter.
    ShapeSweep(ShapeSweepArgs),
    /// Poisson problem on a disc or flower domain.
    Poisson(PoissonArgs),
    /// Grid-based particle sampling of a surface.
    LbSample(LbSampleArgs),
    /// Laplace-Beltrami differential matrix of a surface cloud.
    LbAssemble(LbAssembleArgs),
    /// Full spectrum of the Laplace-Beltrami matrix.
    LbEigen(LbEigenArgs),
    /// Eigenvalue errors over a list of sampling resolutions.
    Convergence(ConvergenceArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Directory receiving CSV/JSON artifacts.
    #[arg(long, alias = "out")]
    pub output_dir: Option<PathBuf>,
}

/// Stencil flags shared by every subcommand; unset flags keep the
/// subcommand's defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct StencilArgs {
    /// ga, mq, iq or imq.
    #[arg(long)]
    pub kernel: Option<KernelFamily>,
    /// Target `c rbar^2`.
    #[arg(long)]
    pub cr2: Option<f64>,
    /// circle:<d>, disc:<count> or segment:<d>.
    #[arg(long)]
    pub ghosts: Option<GhostStrategy>,
    /// cls-gsp, ls-gsp or rbf-fd.
    #[arg(long)]
    pub method: Option<StencilMethod>,
    #[arg(long)]
    pub neighbors: Option<usize>,
    #[arg(long)]
    pub poly_degree: Option<usize>,
    /// Absolute singular-value threshold for reported ranks.
    #[arg(long)]
    pub rank_eps: Option<f64>,
    /// Relative singular-value cutoff for the solve.
    #[arg(long)]
    pub rank_tol: Option<f64>,
}

impl StencilArgs {
    fn apply(&self, mut base: StencilConfig) -> StencilConfig {
        if let Some(v) = self.kernel {
            base.kernel = v;
        }
        if let Some(v) = self.cr2 {
            base.cr2 = v;
        }
        if let Some(v) = self.ghosts {
            base.ghosts = v;
        }
        if let Some(v) = self.method {
            base.method = v;
        }
        if let Some(v) = self.neighbors {
            base.neighbors = v;
        }
        if let Some(v) = self.poly_degree {
            base.degree = v;
        }
        if let Some(v) = self.rank_eps {
            base.rank_eps = v;
        }
        if let Some(v) = self.rank_tol {
            base.rank_tol = v;
        }
        base
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub stencil: StencilArgs,
    /// Test functions, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [TestFunction::Cos4x, TestFunction::Kink])]
    pub function: Vec<TestFunction>,
    /// Kernel families fitted side by side.
    #[arg(long, value_delimiter = ',', default_values_t = [KernelFamily::Ga, KernelFamily::Mq])]
    pub kernels: Vec<KernelFamily>,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    #[arg(long, default_value_t = 401)]
    pub grid: usize,
    #[arg(long, default_value_t = 0.25)]
    pub near: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ConsistencyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub stencil: StencilArgs,
    #[arg(long, default_value_t = TestFunction::U2)]
    pub function: TestFunction,
    /// `c h^2`; defaults to 1 for u2 and 0.1 otherwise.
    #[arg(long)]
    pub ch2: Option<f64>,
    /// Polynomial degrees, comma separated.
    #[arg(long = "k", value_delimiter = ',', default_values_t = [2usize, 3, 4])]
    pub degrees: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[arg(long, default_value_t = 2, allow_negative_numbers = true)]
    pub h_lo: i32,
    #[arg(long, default_value_t = 6, allow_negative_numbers = true)]
    pub h_hi: i32,
}

#[derive(Debug, Clone, Args)]
pub struct ShapeSweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub stencil: StencilArgs,
    #[arg(long, default_value_t = TestFunction::ShapeSweep)]
    pub function: TestFunction,
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [StencilMethod::ClsGsp, StencilMethod::RbfFd])]
    pub methods: Vec<StencilMethod>,
    #[arg(long, value_delimiter = ',', default_values_t = KernelFamily::ALL)]
    pub families: Vec<KernelFamily>,
    #[arg(long, default_value_t = -8, allow_negative_numbers = true)]
    pub cr2_lo: i32,
    #[arg(long, default_value_t = 5, allow_negative_numbers = true)]
    pub cr2_hi: i32,
}

#[derive(Debug, Clone, Args)]
pub struct PoissonArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub stencil: StencilArgs,
    /// disc, disc:<radius> or flower.
    #[arg(long, default_value = "disc")]
    pub domain: StarDomain,
    /// uniform or random.
    #[arg(long, default_value_t = Sampling::Random)]
    pub sampling: Sampling,
    /// Target interior count; 3159 for the disc and 2677 for the flower.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub band: f64,
    #[arg(long, default_value_t = TestFunction::PoissonExact)]
    pub function: TestFunction,
    /// Boundary-node values from the radial projection onto the boundary.
    #[arg(long)]
    pub normal_extension: bool,
    /// sparse-lu or bicgstab.
    #[arg(long, default_value = "sparse-lu", value_parser = parse_solver)]
    pub solver: SolverKind,
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
    /// Write the operator as Matrix Market.
    #[arg(long)]
    pub dump_matrix: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SurfaceArgs {
    #[arg(long, default_value = "sphere")]
    pub surface: Surface,
    #[arg(long)]
    pub dx: Option<f64>,
    /// Band half-width in units of `dx`.
    #[arg(long, default_value_t = 1.5)]
    pub band: f64,
}

#[derive(Debug, Clone, Args)]
pub struct LbSampleArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub surface: SurfaceArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CloudArgs {
    #[command(flatten)]
    pub surface: SurfaceArgs,
    /// XYZ, CSV, PLY or OBJ point cloud instead of sampling `--surface`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Analytic normals of `--surface` instead of PCA frames.
    #[arg(long)]
    pub exact_normals: bool,
    /// Neighbors for the PCA normal; defaults to `--neighbors`.
    #[arg(long)]
    pub n_frame: Option<usize>,
}

impl CloudArgs {
    fn source(&self, default_dx: f64) -> SurfaceInput {
        SurfaceInput {
            input: self.input.clone(),
            sample: LbSampleParams {
                surface: self.surface.surface,
                dx: self.surface.dx.unwrap_or(default_dx),
                band: self.surface.band,
            },
            exact_normals: self.exact_normals,
            n_frame: self.n_frame,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct LbAssembleArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub stencil: StencilArgs,
    #[command(flatten)]
    pub cloud: CloudArgs,
    #[arg(long)]
    pub dump_matrix: bool,
}

#[derive(Debug, Clone, Args)]
pub struct LbEigenArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub stencil: StencilArgs,
    #[command(flatten)]
    pub cloud: CloudArgs,
    /// Highest spherical-harmonic degree in the error table; 0 skips it.
    #[arg(long, default_value_t = 7)]
    pub m_max: usize,
    /// Largest matrix handed to the dense eigensolver.
    #[arg(long, default_value_t = DEFAULT_EIG_BUDGET)]
    pub eig_budget: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub stencil: StencilArgs,
    #[arg(long, default_value = "sphere")]
    pub surface: Surface,
    /// Sampling resolutions, comma separated.
    #[arg(long = "dx", value_delimiter = ',', default_values_t = [0.2, 0.1])]
    pub dx_list: Vec<f64>,
    #[arg(long, default_value_t = 1.5)]
    pub band: f64,
    #[arg(long, default_value_t = 7)]
    pub m_max: usize,
    #[arg(long)]
    pub exact_normals: bool,
    #[arg(long, default_value_t = DEFAULT_EIG_BUDGET)]
    pub eig_budget: usize,
}

fn parse_solver(s: &str) -> Result<SolverKind, String> {
    match s {
        "sparse-lu" | "lu" => Ok(SolverKind::SparseLu),
        "bicgstab" => Ok(SolverKind::BiCgStab),
        other => Err(format!("unknown solver `{other}` (sparse-lu, bicgstab)")),
    }
}

fn lb_stencil() -> StencilConfig {
    StencilConfig {
        neighbors: DEFAULT_LB_NEIGHBORS,
        ..Default::default()
    }
}

fn finish(run: &RunArgs, name: &str, stencil: StencilConfig, command: Command) -> ExperimentConfig {
    ExperimentConfig {
        seed: run.seed,
        output_dir: run
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("meshless-ops-out").join(name)),
        stencil,
        command,
    }
}

impl Sub {
    /// The experiment configuration described by these arguments.
    pub fn to_config(&self) -> ExperimentConfig {
        match self {
            Sub::Reconstruct(a) => {
                let stencil = a.stencil.apply(StencilConfig {
                    ghosts: DEFAULT_RECONSTRUCT_GHOSTS,
                    cr2: DEFAULT_RECONSTRUCT_CR2,
                    ..Default::default()
                });
                let params = ReconstructParams {
                    functions: a.function.clone(),
                    kernels: a.kernels.clone(),
                    samples: a.samples,
                    grid: a.grid,
                    near: a.near,
                };
                finish(&a.run, "reconstruct", stencil, Command::Reconstruct(params))
            }
            Sub::Consistency(a) => {
                let ch2 = a
                    .ch2
                    .unwrap_or(if a.function == TestFunction::U2 { 1.0 } else { 0.1 });
                let params = ConsistencyParams {
                    function: a.function,
                    ch2,
                    degrees: a.degrees.clone(),
                    points: a.points,
                    h_lo: a.h_lo,
                    h_hi: a.h_hi,
                };
                let stencil = a.stencil.apply(StencilConfig::default());
                finish(&a.run, "consistency", stencil, Command::Consistency(params))
            }
            Sub::ShapeSweep(a) => {
                let params = ShapeSweepParams {
                    function: a.function,
                    points: a.points,
                    methods: a.methods.clone(),
                    families: a.families.clone(),
                    cr2_lo: a.cr2_lo,
                    cr2_hi: a.cr2_hi,
                };
                let stencil = a.stencil.apply(StencilConfig {
                    neighbors: a.points,
                    ..Default::default()
                });
                finish(&a.run, "shape-sweep", stencil, Command::ShapeSweep(params))
            }
            Sub::Poisson(a) => {
                let n = a
                    .n
                    .unwrap_or(if a.domain.name == "flower" { 2677 } else { 3159 });
                let params = PoissonParams {
                    domain: a.domain.clone(),
                    sampling: a.sampling,
                    n,
                    band: a.band,
                    function: a.function,
                    normal_extension: a.normal_extension,
                    solver: SolverConfig {
                        kind: a.solver,
                        tolerance: a.tolerance,
                        ..Default::default()
                    },
                    dump_matrix: a.dump_matrix,
                };
                let stencil = a.stencil.apply(StencilConfig {
                    ghosts: GhostStrategy::Disc(49),
                    ..Default::default()
                });
                finish(&a.run, "poisson", stencil, Command::Poisson(params))
            }
            Sub::LbSample(a) => {
                let params = LbSampleParams {
                    surface: a.surface.surface,
                    dx: a.surface.dx.unwrap_or(0.1),
                    band: a.surface.band,
                };
                finish(&a.run, "lb-sample", lb_stencil(), Command::LbSample(params))
            }
            Sub::LbAssemble(a) => {
                let params = LbAssembleParams {
                    source: a.cloud.source(0.1),
                    dump_matrix: a.dump_matrix,
                };
                finish(&a.run, "lb-assemble", a.stencil.apply(lb_stencil()), Command::LbAssemble(params))
            }
            Sub::LbEigen(a) => {
                let params = LbEigenParams {
                    source: a.cloud.source(0.2),
                    m_max: a.m_max,
                    eig_budget: a.eig_budget,
                };
                finish(&a.run, "lb-eigen", a.stencil.apply(lb_stencil()), Command::LbEigen(params))
            }
            Sub::Convergence(a) => {
                let params = ConvergenceParams {
                    surface: a.surface,
                    dx_list: a.dx_list.clone(),
                    band: a.band,
                    m_max: a.m_max,
                    exact_normals: a.exact_normals,
                    eig_budget: a.eig_budget,
                };
                finish(&a.run, "convergence", a.stencil.apply(lb_stencil()), Command::Convergence(params))
            }
        }
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got `{raw}`"))?;
    // A pool may already exist when called twice in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_) | Error::Json(_) => EXIT_USAGE,
        _ => EXIT_COMPUTATION,
    }
}

/// Parses `args` (program name first), runs the experiment and returns the
/// process exit code.
pub fn run(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return EXIT_USAGE;
    }
    let config = match (&cli.config, &cli.command) {
        (Some(path), None) => {
            let loaded = fs::read_to_string(path)
                .map_err(Error::from)
                .and_then(|t| ExperimentConfig::from_json(&t));
            match loaded {
                Ok(mut c) => {
                    if let Some(dir) = &cli.output_dir {
                        c.output_dir = dir.clone();
                    }
                    c
                }
                Err(e) => {
                    eprintln!("error: cannot load {}: {e}", path.display());
                    return EXIT_USAGE;
                }
            }
        }
        (None, Some(sub)) => sub.to_config(),
        _ => {
            eprintln!("error: a subcommand or --config is required; see --help");
            return EXIT_USAGE;
        }
    };
    match run_experiment(&config) {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.summary).unwrap_or_default());
            eprintln!("artifacts written to {}", config.output_dir.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn parser_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(run(["meshless-ops", "poisson", "--no-such-flag"]), EXIT_USAGE);
        assert_eq!(run(["meshless-ops"]), EXIT_USAGE);
        assert_eq!(run(["meshless-ops", "shape-sweep", "--kernel", "gauss"]), EXIT_USAGE);
    }

    #[test]
    fn per_command_defaults() {
        let cli = Cli::try_parse_from(["meshless-ops", "poisson", "--domain", "flower", "--cr2", "0.1"]).unwrap();
        let c = cli.command.unwrap().to_config();
        assert_eq!(c.stencil.ghosts, GhostStrategy::Disc(49));
        assert_eq!(c.stencil.neighbors, 60);
        assert_eq!(c.stencil.cr2, 0.1);
        match c.command {
            Command::Poisson(p) => assert_eq!(p.n, 2677),
            other => panic!("{other:?}"),
        }
        let cli = Cli::try_parse_from(["meshless-ops", "consistency", "--function", "u1", "--k", "2,4"]).unwrap();
        match cli.command.unwrap().to_config().command {
            Command::Consistency(p) => {
                assert_eq!(p.ch2, 0.1);
                assert_eq!(p.degrees, vec![2, 4]);
            }
            other => panic!("{other:?}"),
        }
        let cli = Cli::try_parse_from(["meshless-ops", "shape-sweep", "--cr2-lo", "-3"]).unwrap();
        match cli.command.unwrap().to_config().command {
            Command::ShapeSweep(p) => assert_eq!(p.cr2_lo, -3),
            other => panic!("{other:?}"),
        }
    }
}
