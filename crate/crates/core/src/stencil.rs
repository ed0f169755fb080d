//! Local least-squares systems and the stencil weights they produce.
//!
//! Three variants share one code path:
//!
//! - CLS-GSP: shifted kernels `psi_m(x) = phi(|x - g_m|) - phi(|g_m|)` at the
//!   ghosts plus monomials without the constant. The fit passes through the
//!   center value, so `L u(0) ~ sum_i w_i (u(x_i) - u(0))`.
//! - LS-GSP: plain kernels at the ghosts plus monomials with the constant;
//!   `L u(0) ~ sum_i w_i u(x_i)`.
//! - RBF-FD: LS-GSP with the ghosts placed on the neighbors themselves.
//!
//! Weights are the first `n` entries of `(Psi^T Phat; P^T 0)^+ (L psi; L P)`
//! evaluated at the center.

use std::fmt;
use std::str::FromStr;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{norm, Neighborhood};
use crate::ghosts::{place_ghosts, place_on_samples, GhostSet, GhostStrategy};
use crate::kernels::{kernel_laplacian_at_center, KernelFamily, KernelSpec, PolyBasis};
use crate::linalg::{numerical_rank, pseudoinverse_solve, DEFAULT_RELATIVE_TOL, ABSOLUTE_RANK_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StencilMethod {
    ClsGsp,
    LsGsp,
    RbfFd,
}

impl fmt::Display for StencilMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StencilMethod::ClsGsp => "cls-gsp",
            StencilMethod::LsGsp => "ls-gsp",
            StencilMethod::RbfFd => "rbf-fd",
        })
    }
}

impl FromStr for StencilMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cls-gsp" => Ok(StencilMethod::ClsGsp),
            "ls-gsp" => Ok(StencilMethod::LsGsp),
            "rbf-fd" => Ok(StencilMethod::RbfFd),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }
}

/// Linear operator approximated by a stencil. Only the Laplacian ships.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorTag {
    #[default]
    Laplacian,
}

impl OperatorTag {
    fn kernel_rhs(self, kernel: &KernelSpec, ghost_radius: f64, dim: usize, shifted: bool) -> Result<f64> {
        match self {
            OperatorTag::Laplacian if shifted => kernel_laplacian_at_center(kernel, ghost_radius, dim),
            OperatorTag::Laplacian => Ok(kernel.laplacian(ghost_radius, dim)),
        }
    }

    fn poly_rhs(self, basis: &PolyBasis) -> Vec<f64> {
        match self {
            OperatorTag::Laplacian => basis.laplacian_at_origin(),
        }
    }
}

/// The blocks of one local system.
#[derive(Debug, Clone)]
pub struct StencilSystem {
    pub mode: StencilMethod,
    /// `n x d`: `Psi` for CLS-GSP, `Phi` otherwise.
    pub psi_block: Mat<f64>,
    /// `n x l`: monomials at the neighbors.
    pub p_block: Mat<f64>,
    /// `d x l`: monomials at the ghosts.
    pub phat_block: Mat<f64>,
    pub rhs_psi: Vec<f64>,
    pub rhs_poly: Vec<f64>,
    pub basis: PolyBasis,
}

impl StencilSystem {
    pub fn n(&self) -> usize {
        self.psi_block.nrows()
    }

    pub fn d(&self) -> usize {
        self.psi_block.ncols()
    }

    pub fn l(&self) -> usize {
        self.p_block.ncols()
    }

    /// `(Psi P; Phat^T 0)`, of size `(n + l) x (d + l)`.
    pub fn forward_matrix(&self) -> Mat<f64> {
        let (n, d, l) = (self.n(), self.d(), self.l());
        Mat::from_fn(n + l, d + l, |i, j| match (i < n, j < d) {
            (true, true) => self.psi_block[(i, j)],
            (true, false) => self.p_block[(i, j - d)],
            (false, true) => self.phat_block[(j, i - n)],
            (false, false) => 0.0,
        })
    }

    /// `(Psi^T Phat; P^T 0)`, of size `(d + l) x (n + l)`.
    pub fn transpose_matrix(&self) -> Mat<f64> {
        let (n, d, l) = (self.n(), self.d(), self.l());
        Mat::from_fn(d + l, n + l, |i, j| match (i < d, j < n) {
            (true, true) => self.psi_block[(j, i)],
            (true, false) => self.phat_block[(i, j - n)],
            (false, true) => self.p_block[(j, i - d)],
            (false, false) => 0.0,
        })
    }

    pub fn rhs(&self) -> Vec<f64> {
        let mut r = self.rhs_psi.clone();
        r.extend_from_slice(&self.rhs_poly);
        r
    }
}

fn check_dims(nb: &Neighborhood, ghosts: &GhostSet, basis: &PolyBasis) -> Result<()> {
    if ghosts.is_empty() {
        return Err(Error::InvalidParameter("no ghost points".into()));
    }
    if nb.is_empty() {
        return Err(Error::InvalidParameter("empty neighborhood".into()));
    }
    for dim in [ghosts.dim(), basis.dim()] {
        if dim != nb.dim() {
            return Err(Error::DimensionMismatch {
                expected: nb.dim(),
                got: dim,
            });
        }
    }
    Ok(())
}

fn build_system(
    mode: StencilMethod,
    nb: &Neighborhood,
    ghosts: &GhostSet,
    kernel: &KernelSpec,
    basis: &PolyBasis,
    operator: OperatorTag,
) -> Result<StencilSystem> {
    check_dims(nb, ghosts, basis)?;
    let shifted = mode == StencilMethod::ClsGsp;
    let (n, d, l) = (nb.len(), ghosts.len(), basis.len());
    let ghost_radii = ghosts.radii();
    let ghost_offsets: Vec<f64> = if shifted {
        ghost_radii.iter().map(|&r| kernel.eval(r)).collect()
    } else {
        vec![0.0; d]
    };

    let mut psi_block = Mat::<f64>::zeros(n, d);
    let mut p_block = Mat::<f64>::zeros(n, l);
    let mut row = vec![0.0; l];
    for (i, x) in nb.offsets().enumerate() {
        for (m, g) in ghosts.iter().enumerate() {
            let r = x
                .iter()
                .zip(g)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            psi_block[(i, m)] = kernel.eval(r) - ghost_offsets[m];
        }
        basis.values_into(x, &mut row);
        for (j, v) in row.iter().enumerate() {
            p_block[(i, j)] = *v;
        }
    }
    let mut phat_block = Mat::<f64>::zeros(d, l);
    for (m, g) in ghosts.iter().enumerate() {
        basis.values_into(g, &mut row);
        for (j, v) in row.iter().enumerate() {
            phat_block[(m, j)] = *v;
        }
    }
    let rhs_psi = ghost_radii
        .iter()
        .map(|&r| operator.kernel_rhs(kernel, r, nb.dim(), shifted))
        .collect::<Result<Vec<_>>>()?;
    Ok(StencilSystem {
        mode,
        psi_block,
        p_block,
        phat_block,
        rhs_psi,
        rhs_poly: operator.poly_rhs(basis),
        basis: basis.clone(),
    })
}

/// Assembles the CLS-GSP blocks. The basis must exclude the constant.
pub fn build_cls_system(
    nb: &Neighborhood,
    ghosts: &GhostSet,
    kernel: &KernelSpec,
    basis: &PolyBasis,
    operator: OperatorTag,
) -> Result<StencilSystem> {
    if basis.includes_constant() {
        return Err(Error::InvalidParameter(
            "CLS-GSP polynomial basis must exclude the constant monomial".into(),
        ));
    }
    build_system(StencilMethod::ClsGsp, nb, ghosts, kernel, basis, operator)
}

/// Assembles the LS-GSP blocks (`Phi` instead of `Psi`). The basis must
/// include the constant.
pub fn build_ls_system(
    nb: &Neighborhood,
    ghosts: &GhostSet,
    kernel: &KernelSpec,
    basis: &PolyBasis,
    operator: OperatorTag,
) -> Result<StencilSystem> {
    if !basis.includes_constant() {
        return Err(Error::InvalidParameter(
            "LS-GSP polynomial basis must include the constant monomial".into(),
        ));
    }
    build_system(StencilMethod::LsGsp, nb, ghosts, kernel, basis, operator)
}

/// Weights for one stencil center plus solve diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilWeights {
    pub method: StencilMethod,
    /// One weight per neighbor.
    pub weights: Vec<f64>,
    /// Trailing `l` entries of the solution vector.
    pub aux: Vec<f64>,
    pub neighbor_indices: Vec<usize>,
    /// Rank at the relative solve tolerance.
    pub matrix_rank: usize,
    /// Rank at the absolute threshold [`ABSOLUTE_RANK_EPS`].
    pub abs_rank: usize,
    pub full_rank_expected: usize,
    pub shape_used: f64,
    pub singular_values: Vec<f64>,
}

impl StencilWeights {
    pub fn is_full_rank(&self) -> bool {
        self.matrix_rank == self.full_rank_expected
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn sigma_min(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }

    pub fn rank_above(&self, eps: f64) -> usize {
        numerical_rank(&self.singular_values, eps)
    }

    /// Operator estimate at the center from values at the neighbors.
    pub fn apply(&self, neighbor_values: &[f64], center_value: f64) -> f64 {
        match self.method {
            StencilMethod::ClsGsp => self
                .weights
                .iter()
                .zip(neighbor_values)
                .map(|(w, u)| w * (u - center_value))
                .sum(),
            StencilMethod::LsGsp | StencilMethod::RbfFd => self
                .weights
                .iter()
                .zip(neighbor_values)
                .map(|(w, u)| w * u)
                .sum(),
        }
    }

    /// Estimate for a function given in center-relative coordinates.
    pub fn apply_fn(&self, nb: &Neighborhood, u: impl Fn(&[f64]) -> f64) -> f64 {
        let zero = vec![0.0; nb.dim()];
        let values: Vec<f64> = nb.offsets().map(&u).collect();
        self.apply(&values, u(&zero))
    }
}

/// Column scaling `sqrt(|a|! / a!) / s^|a|` for every monomial `x^a`.
///
/// Solving with `P D` in place of `P` leaves the polynomial block invariant
/// under `x -> h x, s -> h s`, so minimum-norm weights scale exactly by
/// `h^-2`; the multinomial factor makes plane rotations act orthogonally on
/// each homogeneous degree.
pub fn poly_scaling(basis: &PolyBasis, s: f64) -> Vec<f64> {
    let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
    basis
        .monomials()
        .iter()
        .map(|m| {
            let total: u32 = m.iter().sum();
            let multinomial = fact(total) / m.iter().map(|&e| fact(e)).product::<f64>();
            multinomial.sqrt() / s.powi(total as i32)
        })
        .collect()
}

fn solve_system(
    system: &StencilSystem,
    nb: &Neighborhood,
    kernel: &KernelSpec,
    full_rank_expected: usize,
    tol: f64,
) -> Result<StencilWeights> {
    let (n, d) = (system.n(), system.d());
    let s = if nb.mean_radius > 0.0 { nb.mean_radius } else { 1.0 };
    let scale = poly_scaling(&system.basis, s);
    let mut t = system.transpose_matrix();
    for (j, s) in scale.iter().enumerate() {
        for i in 0..t.nrows() {
            t[(i, n + j)] *= s;
        }
        for c in 0..t.ncols() {
            t[(d + j, c)] *= s;
        }
    }
    let mut rhs = system.rhs();
    for (j, s) in scale.iter().enumerate() {
        rhs[d + j] *= s;
    }
    let sol = pseudoinverse_solve(t.as_ref(), &rhs, tol)?;
    Ok(StencilWeights {
        method: system.mode,
        weights: sol.x[..n].to_vec(),
        aux: sol.x[n..].iter().zip(&scale).map(|(a, s)| a * s).collect(),
        neighbor_indices: nb.neighbor_indices.clone(),
        matrix_rank: sol.rank,
        abs_rank: sol.abs_rank,
        full_rank_expected,
        shape_used: kernel.shape,
        singular_values: sol.singular_values,
    })
}

/// CLS-GSP weights: `L u(0) ~ sum_i w_i (u(x_i) - u(0))`.
///
/// A rank below `d + l` is reported through the diagnostics, not as an error.
pub fn cls_gsp_weights(
    nb: &Neighborhood,
    ghosts: &GhostSet,
    kernel: &KernelSpec,
    basis: &PolyBasis,
    operator: OperatorTag,
    tol: f64,
) -> Result<StencilWeights> {
    if !(nb.mean_radius > 0.0) {
        return Err(Error::DegenerateNeighborhood);
    }
    let system = build_cls_system(nb, ghosts, kernel, basis, operator)?;
    solve_system(&system, nb, kernel, ghosts.len() + basis.len(), tol)
}

/// LS-GSP weights: `L u(0) ~ sum_i w_i u(x_i)`.
pub fn ls_gsp_weights(
    nb: &Neighborhood,
    ghosts: &GhostSet,
    kernel: &KernelSpec,
    basis: &PolyBasis,
    operator: OperatorTag,
    tol: f64,
) -> Result<StencilWeights> {
    if !(nb.mean_radius > 0.0) {
        return Err(Error::DegenerateNeighborhood);
    }
    let system = build_ls_system(nb, ghosts, kernel, basis, operator)?;
    solve_system(&system, nb, kernel, ghosts.len() + basis.len(), tol)
}

/// Classical RBF-FD weights: kernels centered at the neighbors, square
/// saddle-point system `(Phi P; P^T 0)`.
pub fn rbf_fd_weights(
    nb: &Neighborhood,
    kernel: &KernelSpec,
    basis: &PolyBasis,
    operator: OperatorTag,
    tol: f64,
) -> Result<StencilWeights> {
    if !(nb.mean_radius > 0.0) {
        return Err(Error::DegenerateNeighborhood);
    }
    let ghosts = place_on_samples(nb);
    let mut system = build_ls_system(nb, &ghosts, kernel, basis, operator)?;
    system.mode = StencilMethod::RbfFd;
    solve_system(&system, nb, kernel, nb.len() + basis.len(), tol)
}

/// Shape parameter from the policy `c * rbar^2 = cr2`.
pub fn shape_for(mean_radius: f64, cr2: f64) -> Result<f64> {
    if !(mean_radius > 0.0) {
        return Err(Error::DegenerateNeighborhood);
    }
    if !(cr2 > 0.0) || !cr2.is_finite() {
        return Err(Error::InvalidParameter(format!("c*r^2 target must be positive, got {cr2}")));
    }
    Ok(cr2 / (mean_radius * mean_radius))
}

/// Everything needed to turn a neighborhood into weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StencilConfig {
    pub method: StencilMethod,
    pub kernel: KernelFamily,
    /// Target `c * rbar^2`; the shape parameter is set per stencil.
    pub cr2: f64,
    pub ghosts: GhostStrategy,
    pub neighbors: usize,
    pub degree: usize,
    /// Relative singular-value cutoff for the solve.
    pub rank_tol: f64,
    /// Absolute singular-value cutoff for reported ranks.
    pub rank_eps: f64,
    #[serde(default)]
    pub operator: OperatorTag,
}

impl Default for StencilConfig {
    fn default() -> Self {
        Self {
            method: StencilMethod::ClsGsp,
            kernel: KernelFamily::Ga,
            cr2: 1e-2,
            ghosts: GhostStrategy::Circle(8),
            neighbors: 60,
            degree: 2,
            rank_tol: DEFAULT_RELATIVE_TOL,
            rank_eps: ABSOLUTE_RANK_EPS,
            operator: OperatorTag::Laplacian,
        }
    }
}

impl StencilConfig {
    pub fn kernel_for(&self, nb: &Neighborhood) -> Result<KernelSpec> {
        KernelSpec::new(self.kernel, shape_for(nb.mean_radius, self.cr2)?)
    }

    pub fn basis_for(&self, dim: usize) -> PolyBasis {
        PolyBasis::new(dim, self.degree, self.method != StencilMethod::ClsGsp)
    }
}

/// Weights for `nb` following `config` (shape policy, ghost layout, basis).
pub fn stencil_weights(nb: &Neighborhood, config: &StencilConfig) -> Result<StencilWeights> {
    let kernel = config.kernel_for(nb)?;
    let basis = config.basis_for(nb.dim());
    let mut w = match config.method {
        StencilMethod::ClsGsp => {
            let ghosts = place_ghosts(nb, config.ghosts)?;
            cls_gsp_weights(nb, &ghosts, &kernel, &basis, config.operator, config.rank_tol)?
        }
        StencilMethod::LsGsp => {
            let ghosts = place_ghosts(nb, config.ghosts)?;
            ls_gsp_weights(nb, &ghosts, &kernel, &basis, config.operator, config.rank_tol)?
        }
        StencilMethod::RbfFd => rbf_fd_weights(nb, &kernel, &basis, config.operator, config.rank_tol)?,
    };
    w.abs_rank = w.rank_above(config.rank_eps);
    Ok(w)
}

/// A solved local CLS-GSP fit `u_c(x) = u(0) + sum lambda_m psi_m(x) + sum mu_j P_j(x)`.
#[derive(Debug, Clone)]
pub struct LocalFit {
    pub center_value: f64,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub ghosts: GhostSet,
    pub kernel: KernelSpec,
    pub basis: PolyBasis,
    pub rank: usize,
}

impl LocalFit {
    /// Evaluates the reconstruction at a center-relative point.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.center_value;
        for (lam, g) in self.lambda.iter().zip(self.ghosts.iter()) {
            let r = x
                .iter()
                .zip(g)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            v += lam * (self.kernel.eval(r) - self.kernel.eval(norm(g)));
        }
        let mut p = vec![0.0; self.basis.len()];
        self.basis.values_into(x, &mut p);
        v + self.mu.iter().zip(&p).map(|(m, q)| m * q).sum::<f64>()
    }
}

/// Least-squares CLS-GSP reconstruction from values at the neighbors.
pub fn cls_gsp_fit(
    nb: &Neighborhood,
    ghosts: &GhostSet,
    kernel: &KernelSpec,
    basis: &PolyBasis,
    neighbor_values: &[f64],
    center_value: f64,
    tol: f64,
) -> Result<LocalFit> {
    if neighbor_values.len() != nb.len() {
        return Err(Error::DimensionMismatch {
            expected: nb.len(),
            got: neighbor_values.len(),
        });
    }
    let system = build_cls_system(nb, ghosts, kernel, basis, OperatorTag::Laplacian)?;
    let d = ghosts.len();
    let scale = poly_scaling(basis, if nb.mean_radius > 0.0 { nb.mean_radius } else { 1.0 });
    let mut a = system.forward_matrix();
    for (j, s) in scale.iter().enumerate() {
        for i in 0..a.nrows() {
            a[(i, d + j)] *= s;
        }
        for c in 0..a.ncols() {
            a[(nb.len() + j, c)] *= s;
        }
    }
    let mut rhs: Vec<f64> = neighbor_values.iter().map(|u| u - center_value).collect();
    rhs.extend(std::iter::repeat_n(0.0, basis.len()));
    let sol = pseudoinverse_solve(a.as_ref(), &rhs, tol)?;
    Ok(LocalFit {
        center_value,
        lambda: sol.x[..d].to_vec(),
        mu: sol.x[d..].iter().zip(&scale).map(|(m, s)| m * s).collect(),
        ghosts: ghosts.clone(),
        kernel: *kernel,
        basis: basis.clone(),
        rank: sol.rank,
    })
}

/// Ordinary polynomial least squares (constant included) over the
/// neighbors and the center; returns coefficients in basis order.
pub fn poly_ls_fit(
    nb: &Neighborhood,
    basis: &PolyBasis,
    neighbor_values: &[f64],
    center_value: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let rows = nb.len() + 1;
    let l = basis.len();
    let mut a = Mat::<f64>::zeros(rows, l);
    let mut row = vec![0.0; l];
    let zero = vec![0.0; nb.dim()];
    let mut b = Vec::with_capacity(rows);
    for (i, x) in std::iter::once(zero.as_slice()).chain(nb.offsets()).enumerate() {
        basis.values_into(x, &mut row);
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    b.push(center_value);
    b.extend_from_slice(neighbor_values);
    Ok(pseudoinverse_solve(a.as_ref(), &b, tol)?.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ghosts::place_circle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_nb(seed: u64, n: usize, scale: f64) -> Neighborhood {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let offsets: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                vec![
                    scale * rng.random_range(-1.0..1.0),
                    scale * rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        Neighborhood::from_offsets(2, &offsets).unwrap()
    }

    fn cls(nb: &Neighborhood, family: KernelFamily, cr2: f64, k: usize) -> StencilWeights {
        let config = StencilConfig {
            kernel: family,
            cr2,
            degree: k,
            ..Default::default()
        };
        stencil_weights(nb, &config).unwrap()
    }

    #[test]
    fn single_entry_system() {
        let nb = Neighborhood::from_offsets(2, &[vec![1.0, 0.0]]).unwrap();
        let ghosts = GhostSet::from_offsets(2, vec![1.0, 0.0], 1.0, GhostStrategy::Circle(1));
        let kernel = KernelSpec::new(KernelFamily::Ga, 1.0).unwrap();
        let sys = build_cls_system(&nb, &ghosts, &kernel, &PolyBasis::new(2, 1, false), OperatorTag::Laplacian)
            .unwrap();
        assert!((sys.psi_block[(0, 0)] - (1.0 - (-1f64).exp())).abs() < 1e-15);
        assert_eq!(sys.forward_matrix().nrows(), 3);
        assert_eq!(sys.transpose_matrix().ncols(), 3);
    }

    #[test]
    fn quadratic_rhs_matches_displayed_vector() {
        let nb = random_nb(1, 20, 1.0);
        let ghosts = place_circle(&nb, 8).unwrap();
        let kernel = KernelSpec::new(KernelFamily::Ga, 1.0).unwrap();
        let sys = build_cls_system(&nb, &ghosts, &kernel, &PolyBasis::new(2, 2, false), OperatorTag::Laplacian)
            .unwrap();
        assert_eq!(sys.rhs_poly, vec![0.0, 0.0, 2.0, 0.0, 2.0]);
        // psi_m(0) = 0 for every ghost column
        let zero = [0.0, 0.0];
        for g in ghosts.iter() {
            assert_eq!(crate::kernels::shifted_basis_value(&kernel, &zero, g), 0.0);
        }
    }

    #[test]
    fn cls_rejects_constant_basis() {
        let nb = random_nb(1, 10, 1.0);
        let ghosts = place_circle(&nb, 8).unwrap();
        let kernel = KernelSpec::new(KernelFamily::Ga, 1.0).unwrap();
        assert!(build_cls_system(&nb, &ghosts, &kernel, &PolyBasis::new(2, 2, true), OperatorTag::Laplacian).is_err());
        assert!(build_ls_system(&nb, &ghosts, &kernel, &PolyBasis::new(2, 2, false), OperatorTag::Laplacian).is_err());
    }

    #[test]
    fn cls_is_exact_on_quadratics() {
        let nb = random_nb(5, 20, 0.1);
        let w = cls(&nb, KernelFamily::Ga, 1e-1, 2);
        assert!(w.is_full_rank());
        let est = w.apply_fn(&nb, |x| x[0] * x[0] + x[1] * x[1]);
        assert!((est - 4.0).abs() < 4e-8, "{est}");
    }

    #[test]
    fn cls_annihilates_constants_exactly() {
        let nb = random_nb(9, 20, 0.3);
        let w = cls(&nb, KernelFamily::Mq, 1e-2, 2);
        assert_eq!(w.apply_fn(&nb, |_| 3.25), 0.0);
    }

    #[test]
    fn ls_gsp_reproduces_constants_and_quadratics() {
        let nb = random_nb(12, 20, 0.1);
        let config = StencilConfig {
            method: StencilMethod::LsGsp,
            cr2: 1e-1,
            ..Default::default()
        };
        let w = stencil_weights(&nb, &config).unwrap();
        assert!(w.is_full_rank());
        assert!(w.apply_fn(&nb, |_| 1.0).abs() < 1e-8);
        let q = w.apply_fn(&nb, |x| x[0] * x[0] + x[1] * x[1]);
        assert!((q - 4.0).abs() < 4e-8, "{q}");
    }

    #[test]
    fn ls_and_cls_both_approximate_smooth_laplacian() {
        let nb = random_nb(21, 20, 0.05);
        let u = |x: &[f64]| (x[0] + 0.3).sin() * (0.5 * x[1]).exp();
        // Laplacian at 0: -sin(0.3) + 0.25 sin(0.3)
        let exact = -0.75 * 0.3f64.sin();
        let c = cls(&nb, KernelFamily::Ga, 1e-1, 2).apply_fn(&nb, u);
        let config = StencilConfig {
            method: StencilMethod::LsGsp,
            cr2: 1e-1,
            ..Default::default()
        };
        let l = stencil_weights(&nb, &config).unwrap().apply_fn(&nb, u);
        assert!((c - exact).abs() < 0.05, "cls {c} vs {exact}");
        assert!((l - exact).abs() < 0.05, "ls {l} vs {exact}");
        assert!((c - l).abs() > 0.0);
    }

    #[test]
    fn rbf_fd_full_rank_count() {
        let nb = random_nb(2, 20, 1.0);
        let config = StencilConfig {
            method: StencilMethod::RbfFd,
            kernel: KernelFamily::Iq,
            cr2: 1.0,
            ..Default::default()
        };
        let w = stencil_weights(&nb, &config).unwrap();
        assert_eq!(w.full_rank_expected, 26);
        assert_eq!(w.matrix_rank, 26);
        let q = w.apply_fn(&nb, |x| x[0] * x[0] + x[1] * x[1]);
        assert!((q - 4.0).abs() < 1e-8, "{q}");
    }

    #[test]
    fn rbf_fd_flags_duplicates() {
        let mut offsets: Vec<Vec<f64>> = random_nb(4, 10, 1.0).offsets().map(|o| o.to_vec()).collect();
        offsets.push(offsets[0].clone());
        let nb = Neighborhood::from_offsets(2, &offsets).unwrap();
        let config = StencilConfig {
            method: StencilMethod::RbfFd,
            kernel: KernelFamily::Iq,
            cr2: 1.0,
            ..Default::default()
        };
        let w = stencil_weights(&nb, &config).unwrap();
        assert!(!w.is_full_rank());
        assert_eq!(w.weights.len(), 11);
        assert!(w.weights.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn scaling_law_holds() {
        let nb = random_nb(33, 20, 1.0);
        let ghosts = place_circle(&nb, 8).unwrap();
        let basis = PolyBasis::new(2, 2, false);
        let c = 0.5;
        let base = cls_gsp_weights(
            &nb,
            &ghosts,
            &KernelSpec::new(KernelFamily::Ga, c).unwrap(),
            &basis,
            OperatorTag::Laplacian,
            1e-12,
        )
        .unwrap();
        for h in [0.5, 0.25] {
            let scaled = nb.scaled(h).unwrap();
            let g = place_circle(&scaled, 8).unwrap();
            let w = cls_gsp_weights(
                &scaled,
                &g,
                &KernelSpec::new(KernelFamily::Ga, c / (h * h)).unwrap(),
                &basis,
                OperatorTag::Laplacian,
                1e-12,
            )
            .unwrap();
            for (a, b) in w.weights.iter().zip(&base.weights) {
                let expect = b / (h * h);
                assert!((a - expect).abs() <= 1e-10 * expect.abs().max(1.0), "{a} vs {expect}");
            }
        }
    }

    #[test]
    fn local_fit_passes_through_center() {
        let nb = random_nb(8, 12, 1.0);
        let ghosts = place_circle(&nb, 8).unwrap();
        let kernel = KernelSpec::new(KernelFamily::Ga, shape_for(nb.mean_radius, 1.0).unwrap()).unwrap();
        let basis = PolyBasis::new(2, 2, false);
        let u = |x: &[f64]| (3.0 * x[0]).cos() + x[1];
        let vals: Vec<f64> = nb.offsets().map(u).collect();
        let fit = cls_gsp_fit(&nb, &ghosts, &kernel, &basis, &vals, u(&[0.0, 0.0]), 1e-12).unwrap();
        assert_eq!(fit.eval(&[0.0, 0.0]), 1.0);
    }

    #[test]
    fn method_names_round_trip() {
        for m in [StencilMethod::ClsGsp, StencilMethod::LsGsp, StencilMethod::RbfFd] {
            assert_eq!(m.to_string().parse::<StencilMethod>().unwrap(), m);
        }
    }
}
