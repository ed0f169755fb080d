//! Radial kernels of the form `phi(r) = f(c r^2)` and monomial bases.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// Gaussian, `exp(-c r^2)`.
    Ga,
    /// Multiquadric, `sqrt(1 + c r^2)`.
    Mq,
    /// Inverse quadratic, `1 / (1 + c r^2)`.
    Iq,
    /// Inverse multiquadric, `1 / sqrt(1 + c r^2)`.
    Imq,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::Ga,
        KernelFamily::Mq,
        KernelFamily::Iq,
        KernelFamily::Imq,
    ];

    /// `(f(s), f'(s), f''(s))` for the profile `f`.
    pub fn profile(self, s: f64) -> (f64, f64, f64) {
        match self {
            KernelFamily::Ga => {
                let e = (-s).exp();
                (e, -e, e)
            }
            KernelFamily::Mq => {
                let q = (1.0 + s).sqrt();
                (q, 0.5 / q, -0.25 / (q * q * q))
            }
            KernelFamily::Iq => {
                let t = 1.0 / (1.0 + s);
                (t, -t * t, 2.0 * t * t * t)
            }
            KernelFamily::Imq => {
                let t = 1.0 / (1.0 + s);
                let q = t.sqrt();
                (q, -0.5 * q * t, 0.75 * q * t * t)
            }
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Ga => "ga",
            KernelFamily::Mq => "mq",
            KernelFamily::Iq => "iq",
            KernelFamily::Imq => "imq",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ga" => Ok(KernelFamily::Ga),
            "mq" => Ok(KernelFamily::Mq),
            "iq" => Ok(KernelFamily::Iq),
            "imq" => Ok(KernelFamily::Imq),
            other => Err(Error::InvalidParameter(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// A kernel family together with its shape parameter `c > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub shape: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, shape: f64) -> Result<Self> {
        if !(shape > 0.0) || !shape.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "shape parameter must be positive and finite, got {shape}"
            )));
        }
        Ok(Self { family, shape })
    }

    /// `phi(r)` without argument checks.
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        self.family.profile(self.shape * r * r).0
    }

    /// Laplacian in `dim` dimensions of `x -> phi(|x - a|)` at a point at
    /// distance `r` from `a`.
    ///
    /// Uses `r phi' = 2 s f'(s)` and `r^2 phi'' = 2 s f' + 4 s^2 f''` with
    /// `s = c r^2`, which gives `2 D c f'(s) + 4 c s f''(s)` and stays finite
    /// at `r = 0`.
    #[inline]
    pub fn laplacian(&self, r: f64, dim: usize) -> f64 {
        let c = self.shape;
        let s = c * r * r;
        let (_, d1, d2) = self.family.profile(s);
        2.0 * dim as f64 * c * d1 + 4.0 * c * s * d2
    }
}

pub fn kernel_value(spec: &KernelSpec, r: f64) -> Result<f64> {
    if r < 0.0 || r.is_nan() {
        return Err(Error::InvalidParameter(format!("negative radius {r}")));
    }
    Ok(spec.eval(r))
}

/// `psi(x) = phi(|x - ghost|) - phi(|ghost|)`, zero at the origin.
pub fn shifted_basis_value(spec: &KernelSpec, x: &[f64], ghost: &[f64]) -> f64 {
    let dx: f64 = x
        .iter()
        .zip(ghost)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    spec.eval(dx) - spec.eval(norm(ghost))
}

/// Laplacian of the shifted basis function at the stencil center, for a
/// ghost at distance `ghost_radius`.
pub fn kernel_laplacian_at_center(spec: &KernelSpec, ghost_radius: f64, dim: usize) -> Result<f64> {
    if ghost_radius == 0.0 {
        return Err(Error::SingularGhost);
    }
    if ghost_radius < 0.0 || ghost_radius.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "ghost radius must be positive, got {ghost_radius}"
        )));
    }
    Ok(spec.laplacian(ghost_radius, dim))
}

/// Monomials of total degree `<= degree` in `dim` variables, graded and
/// lexicographic within each degree (`x, y, x^2, xy, y^2, ...`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyBasis {
    dim: usize,
    degree: usize,
    include_constant: bool,
    monomials: Vec<Vec<u32>>,
}

impl PolyBasis {
    pub fn new(dim: usize, degree: usize, include_constant: bool) -> Self {
        let mut monomials = Vec::new();
        let first = if include_constant { 0 } else { 1 };
        for total in first..=degree {
            let mut exps = vec![0u32; dim];
            push_exponents(&mut monomials, &mut exps, 0, total as u32);
        }
        Self {
            dim,
            degree,
            include_constant,
            monomials,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn includes_constant(&self) -> bool {
        self.include_constant
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Vec<u32>] {
        &self.monomials
    }

    pub fn values(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.len()];
        self.values_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn values_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, m) in out.iter_mut().zip(&self.monomials) {
            *o = m
                .iter()
                .zip(x)
                .map(|(&e, &xi)| xi.powi(e as i32))
                .product();
        }
    }

    /// Laplacian of every monomial at the origin: 2 for each pure square,
    /// zero otherwise.
    pub fn laplacian_at_origin(&self) -> Vec<f64> {
        self.monomials
            .iter()
            .map(|m| {
                let pure_square = m.iter().filter(|&&e| e == 2).count() == 1
                    && m.iter().map(|&e| e as usize).sum::<usize>() == 2;
                if pure_square {
                    2.0
                } else {
                    0.0
                }
            })
            .collect()
    }
}

fn push_exponents(out: &mut Vec<Vec<u32>>, exps: &mut Vec<u32>, axis: usize, remaining: u32) {
    if axis + 1 == exps.len() {
        exps[axis] = remaining;
        out.push(exps.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        exps[axis] = e;
        push_exponents(out, exps, axis + 1, remaining - e);
    }
    exps[axis] = 0;
}

/// Number of monomials of degree `<= k` in `dim` variables, constant included.
pub fn monomial_count(dim: usize, k: usize) -> usize {
    match dim {
        1 => k + 1,
        2 => (k + 1) * (k + 2) / 2,
        3 => (k * k * k + 11 * k) / 6 + k * k + 1,
        _ => {
            // binomial(k + dim, dim)
            (1..=dim).fold(1usize, |acc, i| acc * (k + i) / i)
        }
    }
}

pub fn poly_values(basis: &PolyBasis, x: &[f64]) -> Result<Vec<f64>> {
    basis.values(x)
}

pub fn poly_laplacian_at_origin(basis: &PolyBasis) -> Vec<f64> {
    basis.laplacian_at_origin()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(family: KernelFamily, c: f64) -> KernelSpec {
        KernelSpec::new(family, c).unwrap()
    }

    #[test]
    fn kernel_values_at_known_points() {
        assert_eq!(kernel_value(&spec(KernelFamily::Ga, 1.0), 0.0).unwrap(), 1.0);
        for f in KernelFamily::ALL {
            assert_eq!(kernel_value(&spec(f, 3.0), 0.0).unwrap(), 1.0);
        }
        let mq = kernel_value(&spec(KernelFamily::Mq, 4.0), 0.5).unwrap();
        assert!((mq - 2f64.sqrt()).abs() < 1e-15);
        let iq = kernel_value(&spec(KernelFamily::Iq, 10.0), 0.3).unwrap();
        assert!((iq - 1.0 / 1.9).abs() < 1e-15);
        assert!(kernel_value(&spec(KernelFamily::Ga, 1.0), -0.1).is_err());
    }

    #[test]
    fn shape_must_be_positive() {
        assert!(KernelSpec::new(KernelFamily::Ga, 0.0).is_err());
        assert!(KernelSpec::new(KernelFamily::Ga, -1.0).is_err());
    }

    #[test]
    fn shifted_basis_vanishes_at_origin() {
        let s = spec(KernelFamily::Imq, 2.5);
        assert_eq!(shifted_basis_value(&s, &[0.0, 0.0], &[0.3, -0.7]), 0.0);
        let ga = spec(KernelFamily::Ga, 1.0);
        let v = shifted_basis_value(&ga, &[1.0, 0.0], &[1.0, 0.0]);
        assert!((v - (1.0 - (-1f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn ga_laplacian_closed_form() {
        // c r^2 = 1 makes the 2D Gaussian Laplacian vanish
        let s = spec(KernelFamily::Ga, 4.0);
        assert!(kernel_laplacian_at_center(&s, 0.5, 2).unwrap().abs() < 1e-15);
        let s = spec(KernelFamily::Ga, 1.7);
        let r: f64 = 0.8;
        let expect = 4.0 * 1.7 * (1.7 * r * r - 1.0) * (-1.7 * r * r).exp();
        assert!((kernel_laplacian_at_center(&s, r, 2).unwrap() - expect).abs() < 1e-14);
        assert!(matches!(
            kernel_laplacian_at_center(&s, 0.0, 2),
            Err(Error::SingularGhost)
        ));
    }

    /// Second-order central differences of psi along each axis at 0.
    fn fd_laplacian(s: &KernelSpec, ghost: &[f64]) -> f64 {
        let h = 1e-4;
        let dim = ghost.len();
        let mut total = 0.0;
        for axis in 0..dim {
            let mut xp = vec![0.0; dim];
            let mut xm = vec![0.0; dim];
            xp[axis] = h;
            xm[axis] = -h;
            let zero = vec![0.0; dim];
            total += (shifted_basis_value(s, &xp, ghost) - 2.0 * shifted_basis_value(s, &zero, ghost)
                + shifted_basis_value(s, &xm, ghost))
                / (h * h);
        }
        total
    }

    #[test]
    fn laplacian_matches_finite_differences() {
        let cases = [
            (KernelFamily::Ga, 1.0, vec![1.0, 0.0, 0.0]),
            (KernelFamily::Iq, 2.0, vec![0.3, 0.4]),
        ];
        for (family, c, ghost) in cases {
            let s = spec(family, c);
            let exact = kernel_laplacian_at_center(&s, norm(&ghost), ghost.len()).unwrap();
            let fd = fd_laplacian(&s, &ghost);
            assert!(
                (exact - fd).abs() <= 1e-6 * exact.abs().max(1.0),
                "{family}: {exact} vs {fd}"
            );
        }
    }

    #[test]
    fn laplacian_grid_against_finite_differences() {
        for family in KernelFamily::ALL {
            for &c in &[0.1, 1.0, 5.0] {
                for &r in &[0.3, 0.7, 1.2] {
                    for dim in [2usize, 3] {
                        let s = spec(family, c);
                        let mut ghost = vec![0.0; dim];
                        // off-axis direction so every axis contributes
                        let w = 1.0 / (dim as f64).sqrt();
                        ghost.iter_mut().for_each(|g| *g = r * w);
                        let exact = kernel_laplacian_at_center(&s, r, dim).unwrap();
                        let fd = fd_laplacian(&s, &ghost);
                        let rel = (exact - fd).abs() / exact.abs().max(1e-3);
                        assert!(rel < 1e-6, "{family} c={c} r={r} D={dim}: {exact} vs {fd}");
                    }
                }
            }
        }
    }

    #[test]
    fn poly_ordering_and_values() {
        let b = PolyBasis::new(2, 2, false);
        assert_eq!(
            b.monomials(),
            &[vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
        assert_eq!(b.values(&[0.0, 0.0]).unwrap(), vec![0.0; 5]);
        assert_eq!(b.values(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0, 1.0, 2.0, 4.0]);
        let b1 = PolyBasis::new(2, 1, true);
        assert_eq!(b1.values(&[3.0, -1.0]).unwrap(), vec![1.0, 3.0, -1.0]);
        assert!(b1.values(&[1.0]).is_err());
    }

    #[test]
    fn poly_laplacians() {
        assert_eq!(
            PolyBasis::new(2, 2, false).laplacian_at_origin(),
            vec![0.0, 0.0, 2.0, 0.0, 2.0]
        );
        assert_eq!(PolyBasis::new(2, 1, false).laplacian_at_origin(), vec![0.0, 0.0]);
        let b3 = PolyBasis::new(3, 2, false);
        let lap = b3.laplacian_at_origin();
        for (m, l) in b3.monomials().iter().zip(&lap) {
            let square = m.contains(&2);
            assert_eq!(*l, if square { 2.0 } else { 0.0 });
        }
        assert_eq!(lap.iter().filter(|&&v| v == 2.0).count(), 3);
    }

    #[test]
    fn poly_counts_match_enumeration() {
        for dim in [2usize, 3] {
            for k in 0..=6 {
                let mut count = 0;
                let limit = k as u32;
                // brute-force enumeration of exponent tuples
                let ranges: Vec<u32> = vec![limit + 1; dim];
                let total: u32 = ranges.iter().product();
                for code in 0..total {
                    let mut c = code;
                    let mut deg = 0;
                    for r in &ranges {
                        deg += c % r;
                        c /= r;
                    }
                    if deg <= limit {
                        count += 1;
                    }
                }
                assert_eq!(monomial_count(dim, k), count);
                assert_eq!(PolyBasis::new(dim, k, true).len(), count);
                assert_eq!(PolyBasis::new(dim, k, false).len(), count - 1);
            }
        }
    }
}
