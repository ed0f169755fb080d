//! Spectra of differential matrices, sphere eigenvalue errors, consistency
//! studies and shape-parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::DifferentialMatrix;
use crate::error::{Error, Result};
use crate::geometry::Neighborhood;
use crate::ghosts::{place_ghosts, GhostStrategy};
use crate::kernels::{KernelFamily, KernelSpec, PolyBasis};
use crate::linalg::ABSOLUTE_RANK_EPS;
use crate::stencil::{cls_gsp_weights, stencil_weights, OperatorTag, StencilConfig, StencilMethod};

/// Largest matrix handed to the dense eigensolver by default.
pub const DEFAULT_EIG_BUDGET: usize = 6_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl Eigenvalue {
    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Eigenvalues of `-L` sorted by real part, then imaginary part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Eigenvalue>,
    pub min_real: f64,
    pub max_abs: f64,
}

impl SpectrumReport {
    pub fn from_eigenvalues(mut eigenvalues: Vec<Eigenvalue>) -> Self {
        eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let min_real = eigenvalues.first().map_or(0.0, |e| e.re);
        let max_abs = eigenvalues.iter().map(Eigenvalue::abs).fold(0.0, f64::max);
        Self {
            eigenvalues,
            min_real,
            max_abs,
        }
    }

    /// Eigenvalues with `|lambda| <= rel_tol * max|lambda|`.
    pub fn near_zero_count(&self, rel_tol: f64) -> usize {
        let bound = rel_tol * self.max_abs;
        self.eigenvalues.iter().filter(|e| e.abs() <= bound).count()
    }

    /// Number of eigenvalues with real part below `value`.
    pub fn count_below(&self, value: f64) -> usize {
        self.eigenvalues.iter().filter(|e| e.re < value).count()
    }
}

/// Dense nonsymmetric eigenvalues of `-L` for a square matrix.
pub fn eig_full(dm: &DifferentialMatrix, budget: usize) -> Result<SpectrumReport> {
    if !dm.is_square() {
        return Err(Error::InvalidParameter(format!(
            "eigenvalues need a square matrix, got {}x{}",
            dm.rows(),
            dm.cols()
        )));
    }
    if dm.rows() > budget {
        return Err(Error::EigenBudgetExceeded {
            size: dm.rows(),
            budget,
        });
    }
    let neg = -dm.to_dense_interior();
    let values = neg
        .eigenvalues()
        .map_err(|e| Error::LinearAlgebra(format!("eigensolver failed: {e:?}")))?;
    Ok(SpectrumReport::from_eigenvalues(
        values.into_iter().map(|z| Eigenvalue { re: z.re, im: z.im }).collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenErrorRow {
    pub m: usize,
    pub lambda_exact: f64,
    pub e2: f64,
    pub einf: f64,
}

/// Normalised errors against `m (m + 1)` with multiplicity `2m + 1`, using
/// sorted order after dropping the lowest eigenvalue.
pub fn sphere_eigen_errors(report: &SpectrumReport, m_max: usize) -> Result<Vec<EigenErrorRow>> {
    let needed = (m_max + 1) * (m_max + 1);
    if report.eigenvalues.len() < needed {
        return Err(Error::InvalidParameter(format!(
            "need {needed} eigenvalues for m <= {m_max}, have {}",
            report.eigenvalues.len()
        )));
    }
    let mut start = 1;
    let mut rows = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        let exact = (m * (m + 1)) as f64;
        let group = &report.eigenvalues[start..start + 2 * m + 1];
        let rel: Vec<f64> = group.iter().map(|e| (e.re - exact) / exact).collect();
        let e2 = (rel.iter().map(|r| r * r).sum::<f64>() / rel.len() as f64).sqrt();
        let einf = rel.iter().map(|r| r.abs()).fold(0.0, f64::max);
        rows.push(EigenErrorRow {
            m,
            lambda_exact: exact,
            e2,
            einf,
        });
        start += 2 * m + 1;
    }
    Ok(rows)
}

/// Settings for shrinking a stencil with `c h^2` held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub degree: usize,
    pub kernel: KernelFamily,
    pub ch2: f64,
    pub ghosts: GhostStrategy,
    pub rank_tol: f64,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            degree: 2,
            kernel: KernelFamily::Ga,
            ch2: 0.1,
            ghosts: GhostStrategy::Circle(8),
            rank_tol: crate::linalg::DEFAULT_RELATIVE_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyStudy {
    pub h_values: Vec<f64>,
    pub estimates: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log h` over the four
    /// smallest `h`.
    pub fitted_slope: f64,
    /// All errors sit at roundoff level; the slope carries no information.
    pub exact_regime: bool,
}

/// Number of trailing (smallest) `h` values used for the slope fit.
pub const SLOPE_TAIL: usize = 4;

/// Ordinary least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `h_k = 2^-k` for `k` in `lo..=hi`.
pub fn dyadic_h(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 2f64.powi(-k)).collect()
}

/// Laplacian error at the center as the neighborhood shrinks by `h` with
/// `c = ch2 / h^2`.
pub fn run_consistency_study(
    u: &(dyn Fn(&[f64]) -> f64 + Sync),
    exact: f64,
    nb: &Neighborhood,
    config: &ConsistencyConfig,
    h_list: &[f64],
) -> Result<ConsistencyStudy> {
    if h_list.len() < 2 || h_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("h values must be strictly decreasing, at least two".into()));
    }
    let basis = PolyBasis::new(nb.dim(), config.degree, false);
    let estimates = h_list
        .par_iter()
        .map(|&h| {
            let scaled = nb.scaled(h)?;
            let ghosts = place_ghosts(&scaled, config.ghosts)?;
            let kernel = KernelSpec::new(config.kernel, config.ch2 / (h * h))?;
            let w = cls_gsp_weights(&scaled, &ghosts, &kernel, &basis, OperatorTag::Laplacian, config.rank_tol)?;
            Ok(w.apply_fn(&scaled, u))
        })
        .collect::<Result<Vec<f64>>>()?;
    let errors: Vec<f64> = estimates.iter().map(|e| (e - exact).abs()).collect();
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite);
    }
    let scale = exact.abs().max(1.0);
    let exact_regime = errors.iter().all(|&e| e <= 1e-6 * scale);
    let tail = SLOPE_TAIL.min(h_list.len());
    let k0 = h_list.len() - tail;
    let floor = f64::MIN_POSITIVE;
    let lx: Vec<f64> = h_list[k0..].iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errors[k0..].iter().map(|e| e.max(floor).ln()).collect();
    Ok(ConsistencyStudy {
        h_values: h_list.to_vec(),
        estimates,
        errors,
        fitted_slope: ols_slope(&lx, &ly),
        exact_regime,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSweepRow {
    pub family: KernelFamily,
    pub method: StencilMethod,
    pub cr2: f64,
    pub estimate: f64,
    pub error: f64,
    /// Rank at the absolute threshold.
    pub abs_rank: usize,
    pub full_rank: usize,
}

/// `c rbar^2 = 10^k` for `k` in `lo..=hi`.
pub fn decade_cr2(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 10f64.powi(k)).collect()
}

/// Error and absolute-threshold rank for every family, method and shape.
/// Rows come out ordered by family, method, then shape.
pub fn run_shape_sweep(
    nb: &Neighborhood,
    u: &(dyn Fn(&[f64]) -> f64 + Sync),
    exact: f64,
    methods: &[StencilMethod],
    families: &[KernelFamily],
    cr2_list: &[f64],
    base: &StencilConfig,
) -> Result<Vec<ShapeSweepRow>> {
    let cells: Vec<(KernelFamily, StencilMethod, f64)> = families
        .iter()
        .flat_map(|&f| methods.iter().flat_map(move |&m| cr2_list.iter().map(move |&c| (f, m, c))))
        .collect();
    cells
        .into_par_iter()
        .map(|(family, method, cr2)| {
            let config = StencilConfig {
                method,
                kernel: family,
                cr2,
                rank_eps: if base.rank_eps > 0.0 { base.rank_eps } else { ABSOLUTE_RANK_EPS },
                ..*base
            };
            let w = stencil_weights(nb, &config)?;
            let estimate = w.apply_fn(nb, u);
            Ok(ShapeSweepRow {
                family,
                method,
                cr2,
                estimate,
                error: (estimate - exact).abs(),
                abs_rank: w.abs_rank,
                full_rank: w.full_rank_expected,
            })
        })
        .collect()
}
