//! Global differential matrices `[L | L1]` and Poisson solves on star-shaped
//! domains surrounded by a layer of boundary nodes.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{NeighborIndex, PointCloud, PointTag};
use crate::stencil::{stencil_weights, StencilConfig, StencilMethod};

/// How the diagonal of each row was formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagPolicy {
    /// `L_ii = -sum_j L_ij`, from `sum_j w_j (u_j - u_i)`.
    NegativeRowSum,
}

/// Sparse `rows x cols` operator. Row `i` is centered on column `i`; columns
/// `rows..cols` address boundary nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<f64>,
    pub diag_policy: DiagPolicy,
}

impl DifferentialMatrix {
    /// Builds from per-row off-diagonal `(col, weight)` lists. Entries in a row
    /// are sorted by column; repeated columns are summed.
    pub fn from_rows(rows: usize, cols: usize, entries: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if entries.len() != rows || rows > cols {
            return Err(Error::DimensionMismatch {
                expected: rows,
                got: entries.len(),
            });
        }
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut diag = Vec::with_capacity(rows);
        row_ptr.push(0);
        for (i, mut row) in entries.into_iter().enumerate() {
            row.sort_by_key(|&(c, _)| c);
            let start = col_idx.len();
            for (c, w) in row {
                if c >= cols || c == i {
                    return Err(Error::InvalidParameter(format!("bad column {c} in row {i}")));
                }
                if col_idx.len() > start && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += w;
                } else {
                    col_idx.push(c);
                    values.push(w);
                }
            }
            diag.push(-values[start..].iter().sum::<f64>());
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
            diag,
            diag_policy: DiagPolicy::NegativeRowSum,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn boundary_cols(&self) -> usize {
        self.cols - self.rows
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len() + self.rows
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Off-diagonal `(col, weight)` entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    /// All entries, diagonal included, ordered by row then column.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            let mut placed = false;
            for (c, w) in self.row(i) {
                if !placed && c > i {
                    out.push((i, i, self.diag[i]));
                    placed = true;
                }
                out.push((i, c, w));
            }
            if !placed {
                out.push((i, i, self.diag[i]));
            }
        }
        out
    }

    /// `y_i = sum_j w_ij (x_j - x_i)`; constant vectors map to exactly zero.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).map(|(c, w)| w * (x[c] - x[i])).sum())
            .collect())
    }

    /// Plain matrix-vector product with the stored diagonal.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.diag[i] * x[i] + self.row(i).map(|(c, w)| w * x[c]).sum::<f64>())
            .collect())
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.diag[i] + self.values[self.row_ptr[i]..self.row_ptr[i + 1]].iter().sum::<f64>())
            .collect()
    }

    /// `L1 g` for boundary values `g` (length `cols - rows`).
    pub fn boundary_apply(&self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.boundary_cols() {
            return Err(Error::DimensionMismatch {
                expected: self.boundary_cols(),
                got: g.len(),
            });
        }
        let n = self.rows;
        Ok((0..n)
            .map(|i| self.row(i).filter(|&(c, _)| c >= n).map(|(c, w)| w * g[c - n]).sum())
            .collect())
    }

    /// The square interior block `L` as faer triplets.
    fn interior_triplets(&self) -> Vec<Triplet<usize, usize, f64>> {
        self.triplets()
            .into_iter()
            .filter(|&(_, c, _)| c < self.rows)
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect()
    }

    /// Dense copy of the interior block.
    pub fn to_dense_interior(&self) -> faer::Mat<f64> {
        let mut m = faer::Mat::<f64>::zeros(self.rows, self.rows);
        for (r, c, v) in self.triplets() {
            if c < self.rows {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// Matrix Market coordinate export of the full `[L | L1]`.
    pub fn write_matrix_market(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.rows, self.cols, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(out, "{} {} {:.17e}", r + 1, c + 1, v)?;
        }
        Ok(())
    }
}

/// Domain `r <= r_max(theta)` with `r_max` a finite Fourier series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarDomain {
    pub name: String,
    pub base: f64,
    /// `(k, a)` adds `a sin(k theta)`.
    pub sin_terms: Vec<(u32, f64)>,
    /// `(k, a)` adds `a cos(k theta)`.
    pub cos_terms: Vec<(u32, f64)>,
}

impl StarDomain {
    pub fn disc(radius: f64) -> Self {
        Self {
            name: "disc".into(),
            base: radius,
            sin_terms: Vec::new(),
            cos_terms: Vec::new(),
        }
    }

    /// `r <= 1.4 + 0.4 sin 5t + 0.4 sin 2t`
    pub fn flower() -> Self {
        Self {
            name: "flower".into(),
            base: 1.4,
            sin_terms: vec![(5, 0.4), (2, 0.4)],
            cos_terms: Vec::new(),
        }
    }

    pub fn r_max(&self, theta: f64) -> f64 {
        self.base
            + self.sin_terms.iter().map(|&(k, a)| a * (k as f64 * theta).sin()).sum::<f64>()
            + self.cos_terms.iter().map(|&(k, a)| a * (k as f64 * theta).cos()).sum::<f64>()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p[0].hypot(p[1]) <= self.r_max(p[1].atan2(p[0]))
    }

    /// Inside `r_max < r <= r_max + band`.
    pub fn in_band(&self, p: &[f64], band: f64) -> bool {
        let r = p[0].hypot(p[1]);
        let rm = self.r_max(p[1].atan2(p[0]));
        r > rm && r <= rm + band
    }

    pub fn area(&self) -> f64 {
        let m = 4096;
        let dt = 2.0 * PI / m as f64;
        0.5 * (0..m).map(|i| self.r_max(i as f64 * dt).powi(2)).sum::<f64>() * dt
    }

    /// Upper bound on `r_max` over all angles.
    pub fn outer_radius(&self) -> f64 {
        self.base.abs()
            + self.sin_terms.iter().chain(&self.cos_terms).map(|&(_, a)| a.abs()).sum::<f64>()
    }

    /// Radial projection onto the boundary curve.
    pub fn project(&self, p: &[f64]) -> Result<[f64; 2]> {
        if p[0] == 0.0 && p[1] == 0.0 {
            return Err(Error::InvalidParameter(
                "cannot project the origin radially onto the boundary".into(),
            ));
        }
        let t = p[1].atan2(p[0]);
        let r = self.r_max(t);
        Ok([r * t.cos(), r * t.sin()])
    }
}

impl FromStr for StarDomain {
    type Err = Error;

    /// `disc`, `disc:<radius>` or `flower`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        match (name, arg) {
            ("disc", None) => Ok(StarDomain::disc(2.0)),
            ("disc", Some(r)) => {
                let r: f64 = r
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad disc radius `{r}`")))?;
                if !(r > 0.0) {
                    return Err(Error::InvalidParameter("disc radius must be positive".into()));
                }
                Ok(StarDomain::disc(r))
            }
            ("flower", None) => Ok(StarDomain::flower()),
            _ => Err(Error::InvalidParameter(format!("unknown domain `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    Uniform,
    Random,
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampling::Uniform => "uniform",
            Sampling::Random => "random",
        })
    }
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Sampling::Uniform),
            "random" => Ok(Sampling::Random),
            other => Err(Error::InvalidParameter(format!("unknown sampling `{other}`"))),
        }
    }
}

/// Interior points tagged `Interior` and band points tagged `BoundaryNode`.
///
/// Uniform sampling filters the lattice `h Z^2` with `h = sqrt(area / n_target)`;
/// random sampling draws uniformly in the bounding square until `n_target`
/// interior points are found, keeping every band point drawn on the way.
pub fn generate_domain_cloud(
    domain: &StarDomain,
    n_target: usize,
    sampling: Sampling,
    band: f64,
    seed: u64,
) -> Result<(PointCloud, PointCloud)> {
    if n_target == 0 {
        return Err(Error::InvalidParameter("target point count must be positive".into()));
    }
    if !(band >= 0.0) {
        return Err(Error::InvalidParameter(format!("band width must be non-negative, got {band}")));
    }
    match sampling {
        Sampling::Uniform => uniform_domain_cloud(domain, (domain.area() / n_target as f64).sqrt(), band),
        Sampling::Random => {
            let reach = domain.outer_radius() + band;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut interior = Vec::with_capacity(2 * n_target);
            let mut boundary = Vec::new();
            while interior.len() < 2 * n_target {
                let p = [rng.random_range(-reach..=reach), rng.random_range(-reach..=reach)];
                if domain.contains(&p) {
                    interior.extend_from_slice(&p);
                } else if domain.in_band(&p, band) {
                    boundary.extend_from_slice(&p);
                }
            }
            Ok((
                PointCloud::from_flat(2, interior)?.with_tag(PointTag::Interior),
                PointCloud::from_flat(2, boundary)?.with_tag(PointTag::BoundaryNode),
            ))
        }
    }
}

/// Lattice `h Z^2` filtered by domain and band membership, row-major.
pub fn uniform_domain_cloud(domain: &StarDomain, h: f64, band: f64) -> Result<(PointCloud, PointCloud)> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("spacing must be positive, got {h}")));
    }
    let m = ((domain.outer_radius() + band) / h).ceil() as i64;
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    for j in -m..=m {
        for i in -m..=m {
            let p = [i as f64 * h, j as f64 * h];
            if domain.contains(&p) {
                interior.extend_from_slice(&p);
            } else if domain.in_band(&p, band) {
                boundary.extend_from_slice(&p);
            }
        }
    }
    Ok((
        PointCloud::from_flat(2, interior)?.with_tag(PointTag::Interior),
        PointCloud::from_flat(2, boundary)?.with_tag(PointTag::BoundaryNode),
    ))
}

/// CLS-GSP rows for every interior point, neighbors drawn from
/// `interior ∪ boundary_nodes`.
pub fn assemble_dm(
    interior: &PointCloud,
    boundary_nodes: &PointCloud,
    config: &StencilConfig,
) -> Result<DifferentialMatrix> {
    if config.method != StencilMethod::ClsGsp {
        return Err(Error::InvalidParameter(format!(
            "global assembly uses the difference form and needs cls-gsp rows, got {}",
            config.method
        )));
    }
    let combined = interior.concat(boundary_nodes)?;
    let index = NeighborIndex::new(&combined);
    let n = interior.len();
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let nb = index.knn(i, config.neighbors).map_err(|e| match e {
                Error::InsufficientNeighbors { requested, available } => Error::InsufficientNeighborsAt {
                    index: i,
                    requested,
                    available,
                },
                other => other,
            })?;
            let w = stencil_weights(&nb, config)?;
            Ok(nb.neighbor_indices.iter().copied().zip(w.weights).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    DifferentialMatrix::from_rows(n, combined.len(), rows)
}

/// Right-hand side and Dirichlet data aligned with an interior cloud and
/// its boundary nodes.
#[derive(Debug, Clone)]
pub struct PoissonProblem {
    pub cloud: PointCloud,
    pub boundary_nodes: PointCloud,
    pub f_values: Vec<f64>,
    pub g_values: Vec<f64>,
}

impl PoissonProblem {
    pub fn new(cloud: PointCloud, boundary_nodes: PointCloud, f_values: Vec<f64>, g_values: Vec<f64>) -> Result<Self> {
        if f_values.len() != cloud.len() {
            return Err(Error::DimensionMismatch {
                expected: cloud.len(),
                got: f_values.len(),
            });
        }
        if g_values.len() != boundary_nodes.len() {
            return Err(Error::DimensionMismatch {
                expected: boundary_nodes.len(),
                got: g_values.len(),
            });
        }
        Ok(Self {
            cloud,
            boundary_nodes,
            f_values,
            g_values,
        })
    }

    /// Samples `f` at interior points and `g` at boundary nodes.
    pub fn from_functions(
        cloud: PointCloud,
        boundary_nodes: PointCloud,
        f: impl Fn(&[f64]) -> f64,
        g: impl Fn(&[f64]) -> f64,
    ) -> Self {
        let f_values = cloud.points().map(&f).collect();
        let g_values = boundary_nodes.points().map(&g).collect();
        Self {
            cloud,
            boundary_nodes,
            f_values,
            g_values,
        }
    }
}

/// Boundary-node values from `g` at each node's radial projection onto the
/// domain boundary, so that `g` is constant along normals.
pub fn normal_extension_values(
    boundary_nodes: &PointCloud,
    domain: &StarDomain,
    g: impl Fn(&[f64]) -> f64,
) -> Result<Vec<f64>> {
    boundary_nodes
        .points()
        .map(|p| domain.project(p).map(|q| g(&q)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    #[default]
    SparseLu,
    BiCgStab,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// Bound on `|L u - b|_2 / |b|_2`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolverKind::SparseLu,
            tolerance: 1e-10,
            max_iterations: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution {
    pub u: Vec<f64>,
    /// Relative residual `|L u - (f - L1 g)|_2 / |f - L1 g|_2`.
    pub residual: f64,
    pub iterations: usize,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn interior_residual(dm: &DifferentialMatrix, u: &[f64], b: &[f64]) -> Vec<f64> {
    let n = dm.rows;
    (0..n)
        .map(|i| {
            let lu = dm.diag[i] * u[i]
                + dm.row(i).filter(|&(c, _)| c < n).map(|(c, w)| w * u[c]).sum::<f64>();
            b[i] - lu
        })
        .collect()
}

/// Solves `L u = f - L1 g` for the interior values.
pub fn solve_poisson(dm: &DifferentialMatrix, problem: &PoissonProblem, solver: &SolverConfig) -> Result<PoissonSolution> {
    let n = dm.rows;
    if problem.f_values.len() != n || problem.g_values.len() != dm.boundary_cols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: problem.f_values.len(),
        });
    }
    let lg = dm.boundary_apply(&problem.g_values)?;
    let b: Vec<f64> = problem.f_values.iter().zip(&lg).map(|(f, l)| f - l).collect();
    let bnorm = norm2(&b);
    if bnorm == 0.0 {
        return Ok(PoissonSolution {
            u: vec![0.0; n],
            residual: 0.0,
            iterations: 0,
        });
    }
    match solver.kind {
        SolverKind::SparseLu => solve_lu(dm, &b, bnorm, solver),
        SolverKind::BiCgStab => solve_bicgstab(dm, &b, bnorm, solver),
    }
}

fn singular_report(dm: &DifferentialMatrix) -> String {
    let empty_rows = (0..dm.rows).filter(|&i| dm.diag[i] == 0.0).count();
    format!(
        "interior block {}x{} is numerically singular ({} rows with zero diagonal)",
        dm.rows, dm.rows, empty_rows
    )
}

fn solve_lu(dm: &DifferentialMatrix, b: &[f64], bnorm: f64, solver: &SolverConfig) -> Result<PoissonSolution> {
    let n = dm.rows;
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &dm.interior_triplets())
        .map_err(|e| Error::LinearAlgebra(format!("sparse matrix construction failed: {e:?}")))?;
    let lu = a
        .sp_lu()
        .map_err(|_| Error::SingularSystem(singular_report(dm)))?;
    let solve = |rhs: &[f64]| -> Vec<f64> {
        let col = Col::<f64>::from_fn(n, |i| rhs[i]);
        let x = lu.solve(&col);
        (0..n).map(|i| x[i]).collect()
    };
    let mut u = solve(b);
    let mut residual = f64::INFINITY;
    let mut iterations = 1;
    for _ in 0..3 {
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem(singular_report(dm)));
        }
        let r = interior_residual(dm, &u, b);
        residual = norm2(&r) / bnorm;
        if residual <= solver.tolerance {
            break;
        }
        let du = solve(&r);
        u.iter_mut().zip(&du).for_each(|(x, d)| *x += d);
        iterations += 1;
    }
    let r = interior_residual(dm, &u, b);
    residual = residual.min(norm2(&r) / bnorm);
    if !(residual <= solver.tolerance) {
        return Err(Error::NoConvergence { residual, iterations });
    }
    Ok(PoissonSolution { u, residual, iterations })
}

/// Compressed rows of the interior block with an ILU(0) factorisation.
struct Ilu0 {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    a: Vec<f64>,
    lu: Vec<f64>,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    fn new(dm: &DifferentialMatrix) -> Result<Self> {
        let n = dm.rows;
        let mut ptr = vec![0];
        let mut idx = Vec::new();
        let mut a = Vec::new();
        let mut diag_pos = Vec::with_capacity(n);
        let trip = dm.triplets();
        let mut k = 0;
        for i in 0..n {
            while k < trip.len() && trip[k].0 == i {
                let (_, c, v) = trip[k];
                if c < n {
                    if c == i {
                        diag_pos.push(idx.len());
                    }
                    idx.push(c);
                    a.push(v);
                }
                k += 1;
            }
            ptr.push(idx.len());
        }
        let mut lu = a.clone();
        for i in 0..n {
            for kk in ptr[i]..diag_pos[i] {
                let col = idx[kk];
                let piv = lu[diag_pos[col]];
                if piv == 0.0 {
                    return Err(Error::SingularSystem(singular_report(dm)));
                }
                lu[kk] /= piv;
                let factor = lu[kk];
                let (mut p, mut q) = (kk + 1, diag_pos[col] + 1);
                while p < ptr[i + 1] && q < ptr[col + 1] {
                    match idx[p].cmp(&idx[q]) {
                        std::cmp::Ordering::Less => p += 1,
                        std::cmp::Ordering::Greater => q += 1,
                        std::cmp::Ordering::Equal => {
                            lu[p] -= factor * lu[q];
                            p += 1;
                            q += 1;
                        }
                    }
                }
            }
            if lu[diag_pos[i]] == 0.0 {
                return Err(Error::SingularSystem(singular_report(dm)));
            }
        }
        Ok(Self { ptr, idx, a, lu, diag_pos })
    }

    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (self.ptr[i]..self.ptr[i + 1]).map(|k| self.a[k] * x[self.idx[k]]).sum();
        }
    }

    fn precondition(&self, r: &[f64], out: &mut [f64]) {
        let n = r.len();
        for i in 0..n {
            let mut s = r[i];
            for k in self.ptr[i]..self.diag_pos[i] {
                s -= self.lu[k] * out[self.idx[k]];
            }
            out[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = out[i];
            for k in self.diag_pos[i] + 1..self.ptr[i + 1] {
                s -= self.lu[k] * out[self.idx[k]];
            }
            out[i] = s / self.lu[self.diag_pos[i]];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn solve_bicgstab(dm: &DifferentialMatrix, b: &[f64], bnorm: f64, solver: &SolverConfig) -> Result<PoissonSolution> {
    let n = dm.rows;
    let ilu = Ilu0::new(dm)?;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut residual = 1.0;
    for it in 1..=solver.max_iterations {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(Error::NoConvergence {
                residual,
                iterations: it,
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        ilu.precondition(&p, &mut phat);
        ilu.matvec(&phat, &mut v);
        alpha = rho / dot(&r0, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm2(&s) / bnorm <= solver.tolerance {
            x.iter_mut().zip(&phat).for_each(|(xi, pi)| *xi += alpha * pi);
            residual = norm2(&interior_residual(dm, &x, b)) / bnorm;
            return Ok(PoissonSolution { u: x, residual, iterations: it });
        }
        ilu.precondition(&s, &mut shat);
        ilu.matvec(&shat, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        residual = norm2(&r) / bnorm;
        if !residual.is_finite() {
            break;
        }
        if residual <= solver.tolerance {
            residual = norm2(&interior_residual(dm, &x, b)) / bnorm;
            return Ok(PoissonSolution { u: x, residual, iterations: it });
        }
    }
    Err(Error::NoConvergence {
        residual,
        iterations: solver.max_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ghosts::GhostStrategy;

    fn small_config() -> StencilConfig {
        StencilConfig {
            neighbors: 20,
            ..Default::default()
        }
    }

    #[test]
    fn row_of_boundary_neighbors_sums_to_zero() {
        let interior = PointCloud::new(2, &[vec![0.0, 0.0]]).unwrap();
        let pts: Vec<Vec<f64>> = (0..12)
            .map(|k| {
                let t = k as f64 * std::f64::consts::FRAC_PI_6 + 0.1;
                vec![(1.0 + 0.05 * k as f64) * t.cos(), (1.0 + 0.05 * k as f64) * t.sin()]
            })
            .collect();
        let boundary = PointCloud::new(2, &pts).unwrap();
        let config = StencilConfig {
            neighbors: 12,
            ..Default::default()
        };
        let dm = assemble_dm(&interior, &boundary, &config).unwrap();
        assert_eq!(dm.row_sums(), vec![0.0]);
        assert_eq!(dm.rows(), 1);
        assert_eq!(dm.cols(), 13);
    }

    #[test]
    fn quadratic_maps_to_four() {
        let domain = StarDomain::disc(1.0);
        let (interior, boundary) = uniform_domain_cloud(&domain, 0.1, 0.4).unwrap();
        let dm = assemble_dm(&interior, &boundary, &small_config()).unwrap();
        let all = interior.concat(&boundary).unwrap();
        let vals: Vec<f64> = all.points().map(|p| p[0] * p[0] + p[1] * p[1]).collect();
        let lap = dm.apply(&vals).unwrap();
        let worst = lap.iter().map(|v| (v - 4.0).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
        let ones = vec![1.0; all.len()];
        assert!(dm.apply(&ones).unwrap().iter().all(|&v| v == 0.0));
        assert!(dm.row_sums().iter().all(|&v| v.abs() <= 1e-14 * 1e4));
    }

    #[test]
    fn triplets_keep_diagonal_and_sorting() {
        let dm = DifferentialMatrix::from_rows(2, 3, vec![vec![(2, 1.0), (1, 2.0)], vec![(0, 0.5)]]).unwrap();
        assert_eq!(
            dm.triplets(),
            vec![(0, 0, -3.0), (0, 1, 2.0), (0, 2, 1.0), (1, 0, 0.5), (1, 1, -0.5)]
        );
        let mut buf = Vec::new();
        dm.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real general\n2 3 5\n1 1 "));
    }

    #[test]
    fn domain_membership() {
        let disc = StarDomain::disc(2.0);
        let (i, b) = generate_domain_cloud(&disc, 500, Sampling::Random, 0.5, 3).unwrap();
        assert_eq!(i.len(), 500);
        assert!(i.points().all(|p| p[0] * p[0] + p[1] * p[1] <= 4.0));
        assert!(b.points().all(|p| {
            let r2 = p[0] * p[0] + p[1] * p[1];
            r2 > 4.0 && r2 <= 6.25 + 1e-12
        }));
        let again = generate_domain_cloud(&disc, 500, Sampling::Random, 0.5, 3).unwrap();
        assert_eq!(again.0, i);
        let flower = StarDomain::flower();
        let (fi, _) = generate_domain_cloud(&flower, 300, Sampling::Random, 0.5, 1).unwrap();
        assert!(fi.points().all(|p| p[0].hypot(p[1]) <= 1.4 + 0.8));
    }

    #[test]
    fn uniform_disc_count_matches_area() {
        let h = 0.05;
        let (i, _) = uniform_domain_cloud(&StarDomain::disc(2.0), h, 0.5).unwrap();
        let expect = PI * 4.0 / (h * h);
        assert!((i.len() as f64 - expect).abs() < 0.05 * expect);
        assert!((StarDomain::disc(2.0).area() - 4.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn radial_projection() {
        let disc = StarDomain::disc(2.0);
        let q = disc.project(&[2.5, 0.0]).unwrap();
        assert!((q[0] - 2.0).abs() < 1e-15 && q[1].abs() < 1e-15);
        let flower = StarDomain::flower();
        let t = 0.7f64;
        let r = flower.r_max(t) + 0.3;
        let q = flower.project(&[r * t.cos(), r * t.sin()]).unwrap();
        assert!((q[0].hypot(q[1]) - flower.r_max(t)).abs() < 1e-12);
        let nodes = PointCloud::new(2, &[vec![2.5, 0.0]]).unwrap();
        let g = normal_extension_values(&nodes, &disc, |p| p[0] + 10.0 * p[1]).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn constant_solution_is_reproduced() {
        let domain = StarDomain::disc(1.0);
        let (interior, boundary) = uniform_domain_cloud(&domain, 0.1, 0.4).unwrap();
        let dm = assemble_dm(&interior, &boundary, &small_config()).unwrap();
        let problem = PoissonProblem::from_functions(interior, boundary, |_| 0.0, |_| 7.0);
        for kind in [SolverKind::SparseLu, SolverKind::BiCgStab] {
            let sol = solve_poisson(
                &dm,
                &problem,
                &SolverConfig {
                    kind,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(sol.u.iter().all(|v| (v - 7.0).abs() < 1e-8), "{kind:?}");
        }
    }

    #[test]
    fn small_poisson_converges() {
        let exact = |p: &[f64]| 1.0 + (4.0 * p[0]).sin() + (3.0 * p[0]).cos() + (2.0 * p[1]).sin();
        let f = |p: &[f64]| -16.0 * (4.0 * p[0]).sin() - 9.0 * (3.0 * p[0]).cos() - 4.0 * (2.0 * p[1]).sin();
        let domain = StarDomain::disc(1.0);
        let mut errs = Vec::new();
        for h in [0.1, 0.05] {
            let (interior, boundary) = uniform_domain_cloud(&domain, h, 0.3).unwrap();
            let config = StencilConfig {
                neighbors: 30,
                ghosts: GhostStrategy::Circle(8),
                ..Default::default()
            };
            let dm = assemble_dm(&interior, &boundary, &config).unwrap();
            let problem = PoissonProblem::from_functions(interior.clone(), boundary, f, exact);
            let sol = solve_poisson(&dm, &problem, &SolverConfig::default()).unwrap();
            assert!(sol.residual <= 1e-10);
            let err = interior
                .points()
                .zip(&sol.u)
                .map(|(p, u)| (u - exact(p)).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[0] / errs[1] >= 2.0, "{errs:?}");
    }

    #[test]
    fn rejects_non_cls_rows() {
        let c = PointCloud::new(2, &[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let config = StencilConfig {
            method: StencilMethod::RbfFd,
            ..Default::default()
        };
        assert!(assemble_dm(&c, &c, &config).is_err());
    }

    #[test]
    fn insufficient_neighbors_names_point() {
        let c = PointCloud::new(2, &[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let empty = PointCloud::from_flat(2, Vec::new()).unwrap();
        let err = assemble_dm(&c, &empty, &small_config()).unwrap_err();
        assert!(matches!(err, Error::InsufficientNeighborsAt { index: 0, .. }));
    }
}
