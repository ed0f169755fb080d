//! Experiment configuration and artifact writing.
//!
//! Every run writes its primary CSV tables, a `summary.json`, the echoed
//! `config.json` and a `metadata.json` into `output_dir`. CSV contents depend
//! only on the configuration, so a fixed seed reproduces them byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::assembly::{
    assemble_dm, generate_domain_cloud, normal_extension_values, solve_poisson, PoissonProblem, Sampling,
    SolverConfig, StarDomain,
};
use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::geometry::Neighborhood;
use crate::ghosts::{place_ghosts, GhostStrategy};
use crate::io::{read_point_cloud, write_xyz};
use crate::kernels::{KernelFamily, KernelSpec, PolyBasis};
use crate::spectral::{
    decade_cr2, dyadic_h, eig_full, run_consistency_study, run_shape_sweep, sphere_eigen_errors, ConsistencyConfig,
    SpectrumReport, DEFAULT_EIG_BUDGET,
};
use crate::stencil::{cls_gsp_fit, poly_ls_fit, shape_for, StencilConfig, StencilMethod};
use crate::surface::{assemble_lb_dm, gbpm_sample, LbConfig, Surface, SurfaceCloud, SurfaceSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub stencil: StencilConfig,
    pub command: Command,
}

impl ExperimentConfig {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    Reconstruct(ReconstructParams),
    Consistency(ConsistencyParams),
    ShapeSweep(ShapeSweepParams),
    Poisson(PoissonParams),
    LbSample(LbSampleParams),
    LbAssemble(LbAssembleParams),
    LbEigen(LbEigenParams),
    Convergence(ConvergenceParams),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Reconstruct(_) => "reconstruct",
            Command::Consistency(_) => "consistency",
            Command::ShapeSweep(_) => "shape-sweep",
            Command::Poisson(_) => "poisson",
            Command::LbSample(_) => "lb-sample",
            Command::LbAssemble(_) => "lb-assemble",
            Command::LbEigen(_) => "lb-eigen",
            Command::Convergence(_) => "convergence",
        }
    }
}

/// Ghost layout for 1D reconstructions.
pub const DEFAULT_RECONSTRUCT_GHOSTS: GhostStrategy = GhostStrategy::Segment(4);
pub const DEFAULT_RECONSTRUCT_CR2: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructParams {
    pub functions: Vec<TestFunction>,
    pub kernels: Vec<KernelFamily>,
    /// Random samples drawn in `[-1, 1]`.
    pub samples: usize,
    /// Evaluation grid size over `[-1, 1]`.
    pub grid: usize,
    /// Half-width of the window used for the near-center error.
    pub near: f64,
}

impl Default for ReconstructParams {
    fn default() -> Self {
        Self {
            functions: vec![TestFunction::Cos4x, TestFunction::Kink],
            kernels: vec![KernelFamily::Ga, KernelFamily::Mq],
            samples: 10,
            grid: 401,
            near: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyParams {
    pub function: TestFunction,
    pub ch2: f64,
    pub degrees: Vec<usize>,
    /// Random neighbors in `[-1, 1]^2` before scaling.
    pub points: usize,
    /// `h = 2^-k` for `k` in `h_lo..=h_hi`.
    pub h_lo: i32,
    pub h_hi: i32,
}

impl Default for ConsistencyParams {
    fn default() -> Self {
        Self {
            function: TestFunction::U2,
            ch2: 1.0,
            degrees: vec![2, 3, 4],
            points: 20,
            h_lo: 2,
            h_hi: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSweepParams {
    pub function: TestFunction,
    pub points: usize,
    pub methods: Vec<StencilMethod>,
    pub families: Vec<KernelFamily>,
    /// `c rbar^2 = 10^k` for `k` in `cr2_lo..=cr2_hi`.
    pub cr2_lo: i32,
    pub cr2_hi: i32,
}

impl Default for ShapeSweepParams {
    fn default() -> Self {
        Self {
            function: TestFunction::ShapeSweep,
            points: 20,
            methods: vec![StencilMethod::ClsGsp, StencilMethod::RbfFd],
            families: KernelFamily::ALL.to_vec(),
            cr2_lo: -8,
            cr2_hi: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonParams {
    pub domain: StarDomain,
    pub sampling: Sampling,
    /// Target interior point count.
    pub n: usize,
    pub band: f64,
    pub function: TestFunction,
    /// Boundary-node values from the radial projection instead of direct
    /// evaluation.
    pub normal_extension: bool,
    pub solver: SolverConfig,
    pub dump_matrix: bool,
}

impl Default for PoissonParams {
    fn default() -> Self {
        Self {
            domain: StarDomain::disc(2.0),
            sampling: Sampling::Random,
            n: 3159,
            band: 0.5,
            function: TestFunction::PoissonExact,
            normal_extension: false,
            solver: SolverConfig::default(),
            dump_matrix: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbSampleParams {
    pub surface: Surface,
    pub dx: f64,
    pub band: f64,
}

impl Default for LbSampleParams {
    fn default() -> Self {
        Self {
            surface: Surface::unit_sphere(),
            dx: 0.1,
            band: 1.5,
        }
    }
}

/// Where a surface cloud comes from: a file, or GBPM sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct SurfaceInput {
    pub input: Option<PathBuf>,
    pub sample: LbSampleParams,
    /// Analytic normals from `sample.surface` instead of PCA frames.
    pub exact_normals: bool,
    /// Neighbors for the PCA normal; `None` uses the stencil size.
    pub n_frame: Option<usize>,
}


#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LbAssembleParams {
    pub source: SurfaceInput,
    pub dump_matrix: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbEigenParams {
    pub source: SurfaceInput,
    pub m_max: usize,
    pub eig_budget: usize,
}

impl Default for LbEigenParams {
    fn default() -> Self {
        Self {
            source: SurfaceInput {
                sample: LbSampleParams {
                    dx: 0.2,
                    ..Default::default()
                },
                ..Default::default()
            },
            m_max: 7,
            eig_budget: DEFAULT_EIG_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceParams {
    pub surface: Surface,
    pub dx_list: Vec<f64>,
    pub band: f64,
    pub m_max: usize,
    pub exact_normals: bool,
    pub eig_budget: usize,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        Self {
            surface: Surface::unit_sphere(),
            dx_list: vec![0.2, 0.1],
            band: 1.5,
            m_max: 7,
            exact_normals: false,
            eig_budget: DEFAULT_EIG_BUDGET,
        }
    }
}

/// Paths written by a run plus the summary that went into `summary.json`.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub artifacts: Vec<PathBuf>,
    pub summary: Value,
}

/// `n` points uniform in `[-1, 1]^dim` from `ChaCha8(seed)`, as offsets
/// from a center at the origin.
pub fn random_neighborhood(seed: u64, n: usize, dim: usize) -> Result<Neighborhood> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    Neighborhood::from_offsets(dim, &offsets)
}

/// Column-oriented reconstruction curves for one test function.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub function: TestFunction,
    pub samples: Vec<f64>,
    pub x: Vec<f64>,
    pub exact: Vec<f64>,
    /// One curve per kernel family, in request order.
    pub cls: Vec<(KernelFamily, Vec<f64>)>,
    pub poly_ls: Vec<f64>,
    /// `|u_c(0) - u(0)|` per kernel family.
    pub center_residual: Vec<(KernelFamily, f64)>,
    pub poly_center_residual: f64,
}

impl Reconstruction {
    /// Max error over grid points with `|x| <= near` for each CLS curve, then
    /// the polynomial fit.
    pub fn near_center_errors(&self, near: f64) -> (Vec<(KernelFamily, f64)>, f64) {
        let err = |curve: &[f64]| {
            self.x
                .iter()
                .zip(curve.iter().zip(&self.exact))
                .filter(|(x, _)| x.abs() <= near)
                .map(|(_, (c, e))| (c - e).abs())
                .fold(0.0, f64::max)
        };
        (
            self.cls.iter().map(|(k, c)| (*k, err(c))).collect(),
            err(&self.poly_ls),
        )
    }
}

/// Fits CLS-GSP (one curve per kernel) and plain polynomial least squares to
/// `samples` random points in `[-1, 1]` around a center at 0.
///
/// The stencil config supplies the ghost layout, the polynomial degree, the
/// shape constant `cr2` and the solve tolerance.
pub fn reconstruct_local(
    function: TestFunction,
    kernels: &[KernelFamily],
    samples: usize,
    grid: usize,
    stencil: &StencilConfig,
    seed: u64,
) -> Result<Reconstruction> {
    if samples == 0 || grid < 2 {
        return Err(Error::InvalidParameter("need at least one sample and two grid points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..samples).map(|_| rng.random_range(-1.0..1.0)).collect();
    let offsets: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let nb = Neighborhood::from_offsets(1, &offsets)?;
    let values: Vec<f64> = xs.iter().map(|&x| function.value(&[x])).collect();
    let u0 = function.value(&[0.0]);
    let ghosts = place_ghosts(&nb, stencil.ghosts)?;
    let cls_basis = PolyBasis::new(1, stencil.degree, false);
    let x: Vec<f64> = (0..grid).map(|i| -1.0 + 2.0 * i as f64 / (grid - 1) as f64).collect();
    let exact: Vec<f64> = x.iter().map(|&t| function.value(&[t])).collect();
    let mut cls = Vec::with_capacity(kernels.len());
    let mut center_residual = Vec::with_capacity(kernels.len());
    for &family in kernels {
        let kernel = KernelSpec::new(family, shape_for(nb.mean_radius, stencil.cr2)?)?;
        let fit = cls_gsp_fit(&nb, &ghosts, &kernel, &cls_basis, &values, u0, stencil.rank_tol)?;
        cls.push((family, x.iter().map(|&t| fit.eval(&[t])).collect()));
        center_residual.push((family, (fit.eval(&[0.0]) - u0).abs()));
    }
    let ls_basis = PolyBasis::new(1, stencil.degree, true);
    let coeffs = poly_ls_fit(&nb, &ls_basis, &values, u0, stencil.rank_tol)?;
    let ls_eval = |t: f64| -> Result<f64> {
        Ok(ls_basis.values(&[t])?.iter().zip(&coeffs).map(|(p, c)| p * c).sum())
    };
    let poly_ls = x.iter().map(|&t| ls_eval(t)).collect::<Result<Vec<_>>>()?;
    let poly_center_residual = (ls_eval(0.0)? - u0).abs();
    Ok(Reconstruction {
        function,
        samples: xs,
        x,
        exact,
        cls,
        poly_ls,
        center_residual,
        poly_center_residual,
    })
}

struct Csv {
    text: String,
}

impl Csv {
    fn new(header: &[&str]) -> Self {
        Self {
            text: header.join(",") + "\n",
        }
    }

    fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }
}

fn f(v: f64) -> String {
    format!("{v:e}")
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.written.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, csv: Csv) -> Result<()> {
        self.write(name, csv.text)
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<()> {
        self.write(name, serde_json::to_string_pretty(value)? + "\n")
    }
}

/// Runs the configured command and writes its artifacts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    let started = Instant::now();
    let mut out = Artifacts::new(&config.output_dir)?;
    out.write("config.json", config.to_json()? + "\n")?;
    let (summary, extra_meta) = match &config.command {
        Command::Reconstruct(p) => run_reconstruct(config, p, &mut out)?,
        Command::Consistency(p) => run_consistency(config, p, &mut out)?,
        Command::ShapeSweep(p) => run_sweep(config, p, &mut out)?,
        Command::Poisson(p) => run_poisson(config, p, &mut out)?,
        Command::LbSample(p) => run_lb_sample(p, &mut out)?,
        Command::LbAssemble(p) => run_lb_assemble(config, p, &mut out)?,
        Command::LbEigen(p) => run_lb_eigen(config, p, &mut out)?,
        Command::Convergence(p) => run_convergence(config, p, &mut out)?,
    };
    out.json("summary.json", &summary)?;
    let mut meta = json!({
        "crate": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": config.command.name(),
        "seed": config.seed,
        "threads": rayon::current_num_threads(),
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    if let (Value::Object(m), Value::Object(extra)) = (&mut meta, extra_meta) {
        m.extend(extra);
    }
    out.json("metadata.json", &meta)?;
    Ok(RunOutcome {
        artifacts: out.written,
        summary,
    })
}

type Step = Result<(Value, Value)>;

fn run_reconstruct(config: &ExperimentConfig, p: &ReconstructParams, out: &mut Artifacts) -> Step {
    let mut entries = Vec::new();
    for (k, &function) in p.functions.iter().enumerate() {
        let rec = reconstruct_local(function, &p.kernels, p.samples, p.grid, &config.stencil, config.seed.wrapping_add(k as u64))?;
        let mut header = vec!["x".to_string(), "u_exact".to_string()];
        header.extend(rec.cls.iter().map(|(fam, _)| format!("u_cls_{fam}")));
        header.push("u_poly_ls".into());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut csv = Csv::new(&header);
        for i in 0..rec.x.len() {
            let mut row = vec![f(rec.x[i]), f(rec.exact[i])];
            row.extend(rec.cls.iter().map(|(_, c)| f(c[i])));
            row.push(f(rec.poly_ls[i]));
            csv.row(&row);
        }
        out.csv(&format!("reconstruct_{function}.csv"), csv)?;
        let mut samples = Csv::new(&["x", "u"]);
        for &x in &rec.samples {
            samples.row(&[f(x), f(function.value(&[x]))]);
        }
        out.csv(&format!("samples_{function}.csv"), samples)?;
        let (near_cls, near_ls) = rec.near_center_errors(p.near);
        entries.push(json!({
            "function": function,
            "center_residual": rec.center_residual.iter().map(|(k, r)| json!({"kernel": k, "value": r})).collect::<Vec<_>>(),
            "poly_ls_center_residual": rec.poly_center_residual,
            "near_center_max_error": near_cls.iter().map(|(k, r)| json!({"kernel": k, "value": r})).collect::<Vec<_>>(),
            "poly_ls_near_center_max_error": near_ls,
        }));
    }
    Ok((json!({ "functions": entries }), json!({})))
}

fn run_consistency(config: &ExperimentConfig, p: &ConsistencyParams, out: &mut Artifacts) -> Step {
    let nb = random_neighborhood(config.seed, p.points, 2)?;
    let h = dyadic_h(p.h_lo, p.h_hi);
    let u = p.function;
    let exact = u.laplacian(&[0.0, 0.0], 2);
    let mut csv = Csv::new(&["k", "h", "estimate", "error"]);
    let mut slopes = Vec::new();
    for &degree in &p.degrees {
        let cc = ConsistencyConfig {
            degree,
            kernel: config.stencil.kernel,
            ch2: p.ch2,
            ghosts: config.stencil.ghosts,
            rank_tol: config.stencil.rank_tol,
        };
        let study = run_consistency_study(&|x: &[f64]| u.value(x), exact, &nb, &cc, &h)?;
        for (i, hi) in h.iter().enumerate() {
            csv.row(&[degree.to_string(), f(*hi), f(study.estimates[i]), f(study.errors[i])]);
        }
        slopes.push(json!({"k": degree, "slope": study.fitted_slope, "exact_regime": study.exact_regime}));
    }
    out.csv("consistency.csv", csv)?;
    Ok((
        json!({"function": u, "exact_laplacian": exact, "ch2": p.ch2, "slopes": slopes}),
        json!({}),
    ))
}

fn run_sweep(config: &ExperimentConfig, p: &ShapeSweepParams, out: &mut Artifacts) -> Step {
    let nb = random_neighborhood(config.seed, p.points, 2)?;
    let u = p.function;
    let exact = u.laplacian(&[0.0, 0.0], 2);
    let cr2 = decade_cr2(p.cr2_lo, p.cr2_hi);
    let rows = run_shape_sweep(&nb, &|x: &[f64]| u.value(x), exact, &p.methods, &p.families, &cr2, &config.stencil)?;
    let mut csv = Csv::new(&["family", "method", "cr2", "error", "rank", "full_rank"]);
    for r in &rows {
        csv.row(&[
            r.family.to_string(),
            r.method.to_string(),
            f(r.cr2),
            f(r.error),
            r.abs_rank.to_string(),
            r.full_rank.to_string(),
        ]);
    }
    out.csv("shape_sweep.csv", csv)?;
    let mut cells = Vec::new();
    for &family in &p.families {
        for &method in &p.methods {
            let sel: Vec<_> = rows.iter().filter(|r| r.family == family && r.method == method).collect();
            let best = sel.iter().min_by(|a, b| a.error.total_cmp(&b.error));
            let full: Vec<f64> = sel.iter().filter(|r| r.abs_rank == r.full_rank).map(|r| r.cr2).collect();
            cells.push(json!({
                "family": family,
                "method": method,
                "min_error": best.map(|r| r.error),
                "argmin_cr2": best.map(|r| r.cr2),
                "full_rank_cr2": full,
            }));
        }
    }
    Ok((json!({"exact_laplacian": exact, "cells": cells}), json!({})))
}

fn run_poisson(config: &ExperimentConfig, p: &PoissonParams, out: &mut Artifacts) -> Step {
    let t = Instant::now();
    let (interior, boundary) = generate_domain_cloud(&p.domain, p.n, p.sampling, p.band, config.seed)?;
    let dm = assemble_dm(&interior, &boundary, &config.stencil)?;
    let u = p.function;
    let g_values = if p.normal_extension {
        normal_extension_values(&boundary, &p.domain, |x| u.value(x))?
    } else {
        boundary.points().map(|x| u.value(x)).collect()
    };
    let f_values = interior.points().map(|x| u.laplacian(x, 2)).collect();
    let problem = PoissonProblem::new(interior.clone(), boundary.clone(), f_values, g_values)?;
    let sol = solve_poisson(&dm, &problem, &p.solver)?;
    let wall = t.elapsed().as_secs_f64();
    let mut csv = Csv::new(&["x", "y", "u", "u_exact", "error"]);
    let (mut linf, mut l2) = (0.0f64, 0.0f64);
    for (x, &v) in interior.points().zip(&sol.u) {
        let e = u.value(x);
        let err = (v - e).abs();
        linf = linf.max(err);
        l2 += err * err;
        csv.row(&[f(x[0]), f(x[1]), f(v), f(e), f(err)]);
    }
    l2 = (l2 / interior.len() as f64).sqrt();
    out.csv("solution.csv", csv)?;
    if p.dump_matrix {
        let mut buf = Vec::new();
        dm.write_matrix_market(&mut buf)?;
        out.write("matrix.mtx", buf)?;
    }
    Ok((
        json!({
            "domain": p.domain.name,
            "sampling": p.sampling,
            "N": interior.len(),
            "N_b": boundary.len(),
            "linf": linf,
            "l2": l2,
            "residual": sol.residual,
            "iterations": sol.iterations,
            "wall_time_s": wall,
        }),
        json!({}),
    ))
}

fn lattice_meta(cloud: &SurfaceCloud) -> Value {
    match &cloud.source {
        SurfaceSource::Gbpm { lattice, dx, band, .. } => json!({
            "lattice_origin": lattice.origin,
            "lattice_extent": lattice.extent,
            "dx": dx,
            "band": band,
        }),
        SurfaceSource::FileImport { path } => json!({ "input": path }),
    }
}

fn run_lb_sample(p: &LbSampleParams, out: &mut Artifacts) -> Step {
    let cloud = gbpm_sample(&p.surface, p.dx, p.band)?;
    let mut buf = Vec::new();
    write_xyz(&cloud.points, &mut buf)?;
    out.write("points.xyz", buf)?;
    let max_dev = cloud
        .points
        .points()
        .map(|x| p.surface.level_set(x).abs())
        .fold(0.0, f64::max);
    Ok((
        json!({"surface": p.surface.to_string(), "N": cloud.len(), "max_level_set": max_dev}),
        lattice_meta(&cloud),
    ))
}

fn load_surface(src: &SurfaceInput) -> Result<SurfaceCloud> {
    match &src.input {
        Some(path) => SurfaceCloud::from_file_points(read_point_cloud(path)?, path),
        None => gbpm_sample(&src.sample.surface, src.sample.dx, src.sample.band),
    }
}

fn lb_config(config: &ExperimentConfig, src: &SurfaceInput) -> LbConfig {
    LbConfig {
        stencil: config.stencil,
        n_frame: src.n_frame,
        exact_normals: src.exact_normals.then_some(src.sample.surface),
    }
}

fn run_lb_assemble(config: &ExperimentConfig, p: &LbAssembleParams, out: &mut Artifacts) -> Step {
    let cloud = load_surface(&p.source)?;
    let dm = assemble_lb_dm(&cloud, &lb_config(config, &p.source))?;
    let max_row_sum = dm.row_sums().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut csv = Csv::new(&["row", "diag", "off_diag_abs_sum"]);
    for i in 0..dm.rows() {
        let off: f64 = dm.row(i).map(|(_, w)| w.abs()).sum();
        csv.row(&[i.to_string(), f(dm.diagonal()[i]), f(off)]);
    }
    out.csv("rows.csv", csv)?;
    if p.dump_matrix {
        let mut buf = Vec::new();
        dm.write_matrix_market(&mut buf)?;
        out.write("matrix.mtx", buf)?;
    }
    Ok((
        json!({"N": dm.rows(), "nnz": dm.nnz(), "max_abs_row_sum": max_row_sum}),
        lattice_meta(&cloud),
    ))
}

fn spectrum_csv(report: &SpectrumReport) -> Csv {
    let mut csv = Csv::new(&["re", "im"]);
    for e in &report.eigenvalues {
        csv.row(&[f(e.re), f(e.im)]);
    }
    csv
}

fn spectrum_summary(report: &SpectrumReport) -> Value {
    json!({
        "N": report.eigenvalues.len(),
        "min_real": report.min_real,
        "max_abs": report.max_abs,
        "near_zero_count": report.near_zero_count(1e-6),
        "count_below_60": report.count_below(60.0),
    })
}

fn run_lb_eigen(config: &ExperimentConfig, p: &LbEigenParams, out: &mut Artifacts) -> Step {
    let cloud = load_surface(&p.source)?;
    let dm = assemble_lb_dm(&cloud, &lb_config(config, &p.source))?;
    let report = eig_full(&dm, p.eig_budget)?;
    out.csv("spectrum.csv", spectrum_csv(&report))?;
    let mut summary = spectrum_summary(&report);
    if p.source.input.is_none() && p.m_max > 0 {
        let rows = sphere_eigen_errors(&report, p.m_max)?;
        let mut csv = Csv::new(&["m", "lambda_exact", "E2", "Einf"]);
        for r in &rows {
            csv.row(&[r.m.to_string(), f(r.lambda_exact), f(r.e2), f(r.einf)]);
        }
        out.csv("eigen_errors.csv", csv)?;
        summary["eigen_errors"] = serde_json::to_value(&rows)?;
    }
    Ok((summary, lattice_meta(&cloud)))
}

fn run_convergence(config: &ExperimentConfig, p: &ConvergenceParams, out: &mut Artifacts) -> Step {
    if p.dx_list.is_empty() {
        return Err(Error::InvalidParameter("convergence needs at least one dx".into()));
    }
    let mut csv = Csv::new(&["dx", "N", "m", "lambda_exact", "E2", "Einf"]);
    let mut levels = Vec::new();
    let mut e21 = Vec::new();
    for &dx in &p.dx_list {
        let src = SurfaceInput {
            input: None,
            sample: LbSampleParams {
                surface: p.surface,
                dx,
                band: p.band,
            },
            exact_normals: p.exact_normals,
            n_frame: None,
        };
        let cloud = load_surface(&src)?;
        let dm = assemble_lb_dm(&cloud, &lb_config(config, &src))?;
        let report = eig_full(&dm, p.eig_budget)?;
        let rows = sphere_eigen_errors(&report, p.m_max)?;
        for r in &rows {
            csv.row(&[f(dx), cloud.len().to_string(), r.m.to_string(), f(r.lambda_exact), f(r.e2), f(r.einf)]);
        }
        e21.push(rows.first().map(|r| r.e2).unwrap_or(f64::NAN));
        let mut s = spectrum_summary(&report);
        s["dx"] = json!(dx);
        levels.push(s);
    }
    out.csv("convergence.csv", csv)?;
    let ratios: Vec<f64> = e21.windows(2).map(|w| w[0] / w[1]).collect();
    let mut note = String::new();
    for (w, r) in p.dx_list.windows(2).zip(&ratios) {
        let _ = write!(note, "E2,1({})/E2,1({}) = {r:.3}; ", w[0], w[1]);
    }
    Ok((
        json!({"levels": levels, "e21_ratios": ratios, "note": note.trim_end_matches("; ")}),
        json!({"lattice_origin": crate::surface::Lattice::default().origin}),
    ))
}
