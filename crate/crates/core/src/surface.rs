//! Point-cloud surfaces: grid-based particle sampling, PCA tangent frames and
//! Laplace-Beltrami differential matrices built from tangent-plane stencils.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use faer::{Mat, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::DifferentialMatrix;
use crate::error::{Error, Result};
use crate::geometry::{norm, NeighborIndex, Neighborhood, PointCloud};
use crate::stencil::{stencil_weights, StencilConfig, StencilMethod};

/// Implicit surfaces with a closed-form closest-point map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Surface {
    /// `|p - center| = radius`
    Sphere { center: [f64; 3], radius: f64 },
}

impl Surface {
    pub fn unit_sphere() -> Self {
        Surface::Sphere {
            center: [0.0; 3],
            radius: 1.0,
        }
    }

    /// Signed distance to the surface.
    pub fn level_set(&self, p: &[f64]) -> f64 {
        match self {
            Surface::Sphere { center, radius } => {
                let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
                norm(&d) - radius
            }
        }
    }

    /// Closest surface point; `None` where the map is undefined.
    pub fn closest_point(&self, p: &[f64]) -> Option<[f64; 3]> {
        match self {
            Surface::Sphere { center, radius } => {
                let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
                let r = norm(&d);
                if r == 0.0 {
                    return None;
                }
                Some([
                    center[0] + radius * d[0] / r,
                    center[1] + radius * d[1] / r,
                    center[2] + radius * d[2] / r,
                ])
            }
        }
    }

    /// Outward unit normal at a surface point.
    pub fn normal(&self, p: &[f64]) -> Option<[f64; 3]> {
        match self {
            Surface::Sphere { center, .. } => {
                let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
                let r = norm(&d);
                (r > 0.0).then(|| [d[0] / r, d[1] / r, d[2] / r])
            }
        }
    }
}

impl fmt::Display for Surface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Surface::Sphere { center, radius } if *center == [0.0; 3] && *radius == 1.0 => f.write_str("sphere"),
            Surface::Sphere { center, radius } => {
                write!(f, "sphere:{},{},{},{}", center[0], center[1], center[2], radius)
            }
        }
    }
}

impl FromStr for Surface {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(Surface::unit_sphere()),
            other => Err(Error::InvalidParameter(format!("unknown surface `{other}`"))),
        }
    }
}

/// Uniform lattice `origin + dx * (i, j, k)` covering `[origin, origin + extent]^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub origin: [f64; 3],
    pub extent: f64,
}

impl Default for Lattice {
    fn default() -> Self {
        Self {
            origin: [-2.0; 3],
            extent: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SurfaceSource {
    Gbpm {
        surface: Surface,
        dx: f64,
        band: f64,
        lattice: Lattice,
    },
    FileImport {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceCloud {
    pub points: PointCloud,
    pub source: SurfaceSource,
}

impl SurfaceCloud {
    pub fn from_file_points(points: PointCloud, path: impl Into<PathBuf>) -> Result<Self> {
        if points.dim() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: points.dim(),
            });
        }
        Ok(Self {
            points,
            source: SurfaceSource::FileImport { path: path.into() },
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Closest points of every lattice node within `band * dx` of the surface,
/// in lattice order. Coincident samples are kept.
pub fn gbpm_sample(surface: &Surface, dx: f64, band: f64) -> Result<SurfaceCloud> {
    gbpm_sample_on(surface, dx, band, Lattice::default())
}

pub fn gbpm_sample_on(surface: &Surface, dx: f64, band: f64, lattice: Lattice) -> Result<SurfaceCloud> {
    if !(dx > 0.0) || !(band > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "grid spacing and band must be positive, got dx={dx}, band={band}"
        )));
    }
    let m = (lattice.extent / dx).round() as usize;
    let width = band * dx;
    let planes: Vec<Vec<f64>> = (0..=m)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            for j in 0..=m {
                for k in 0..=m {
                    let p = [
                        lattice.origin[0] + i as f64 * dx,
                        lattice.origin[1] + j as f64 * dx,
                        lattice.origin[2] + k as f64 * dx,
                    ];
                    if surface.level_set(&p).abs() < width {
                        if let Some(q) = surface.closest_point(&p) {
                            out.extend_from_slice(&q);
                        }
                    }
                }
            }
            out
        })
        .collect();
    Ok(SurfaceCloud {
        points: PointCloud::from_flat(3, planes.concat())?,
        source: SurfaceSource::Gbpm {
            surface: *surface,
            dx,
            band,
            lattice,
        },
    })
}

/// Orthonormal frame with `tangent_u x tangent_v = normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceFrame {
    pub origin: [f64; 3],
    pub normal: [f64; 3],
    pub tangent_u: [f64; 3],
    pub tangent_v: [f64; 3],
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot3(a: &[f64], b: &[f64]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl SurfaceFrame {
    /// Completes a frame around a unit normal.
    pub fn from_normal(origin: [f64; 3], normal: [f64; 3]) -> Self {
        let axis = (0..3)
            .min_by(|&a, &b| normal[a].abs().total_cmp(&normal[b].abs()))
            .unwrap();
        let mut e = [0.0; 3];
        e[axis] = 1.0;
        let proj = dot3(&e, &normal);
        let mut u = [e[0] - proj * normal[0], e[1] - proj * normal[1], e[2] - proj * normal[2]];
        let un = norm(&u);
        u.iter_mut().for_each(|x| *x /= un);
        let v = cross(&normal, &u);
        Self {
            origin,
            normal,
            tangent_u: u,
            tangent_v: v,
        }
    }

    /// In-plane rotation of the tangents by `angle`.
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let mut u = [0.0; 3];
        let mut v = [0.0; 3];
        for k in 0..3 {
            u[k] = c * self.tangent_u[k] + s * self.tangent_v[k];
            v[k] = -s * self.tangent_u[k] + c * self.tangent_v[k];
        }
        Self {
            tangent_u: u,
            tangent_v: v,
            ..*self
        }
    }

    /// Largest deviation of `[u v n]^T [u v n]` from the identity, and of
    /// `u x v` from `n`.
    pub fn orthonormality_residual(&self) -> f64 {
        let basis = [self.tangent_u, self.tangent_v, self.normal];
        let mut worst: f64 = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot3(&basis[a], &basis[b]) - target).abs());
            }
        }
        let c = cross(&self.tangent_u, &self.tangent_v);
        for (ck, nk) in c.iter().zip(&self.normal) {
            worst = worst.max((ck - nk).abs());
        }
        worst
    }
}

/// PCA frame from the point and its `n_frame` nearest neighbors: the normal
/// is the eigenvector of the smallest covariance eigenvalue.
pub fn estimate_frame(cloud: &SurfaceCloud, index: usize, n_frame: usize) -> Result<SurfaceFrame> {
    let idx = NeighborIndex::new(&cloud.points);
    frame_from_index(&idx, index, n_frame)
}

fn frame_from_index(idx: &NeighborIndex<'_>, index: usize, n_frame: usize) -> Result<SurfaceFrame> {
    if n_frame < 3 {
        return Err(Error::InvalidParameter(format!("frame needs at least 3 neighbors, got {n_frame}")));
    }
    let nb = idx.knn(index, n_frame)?;
    let p = idx.cloud().point(index);
    frame_from_neighborhood([p[0], p[1], p[2]], &nb)
}

fn frame_from_neighborhood(origin: [f64; 3], nb: &Neighborhood) -> Result<SurfaceFrame> {
    let m = (nb.len() + 1) as f64;
    let mut mean = [0.0; 3];
    for o in nb.offsets() {
        for k in 0..3 {
            mean[k] += o[k] / m;
        }
    }
    let mut cov = Mat::<f64>::zeros(3, 3);
    let center = [0.0; 3];
    for o in nb.offsets().chain(std::iter::once(&center[..])) {
        for a in 0..3 {
            for b in 0..3 {
                cov[(a, b)] += (o[a] - mean[a]) * (o[b] - mean[b]);
            }
        }
    }
    let eig = cov
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::DegenerateFrame { index: nb.center_index })?;
    let s = eig.S().column_vector();
    let (lo, mid, hi) = (s[0], s[1], s[2]);
    if !(hi > 0.0) || mid <= 1e-12 * hi || lo.is_nan() {
        return Err(Error::DegenerateFrame { index: nb.center_index });
    }
    let u = eig.U();
    let n = [u[(0, 0)], u[(1, 0)], u[(2, 0)]];
    let nn = norm(&n);
    Ok(SurfaceFrame::from_normal(origin, [n[0] / nn, n[1] / nn, n[2] / nn]))
}

/// Tangent-plane coordinates `(x . u, x . v)` of every offset.
pub fn project_neighborhood(frame: &SurfaceFrame, nb: &Neighborhood) -> Result<Neighborhood> {
    if nb.dim() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: nb.dim(),
        });
    }
    let mut rel = Vec::with_capacity(2 * nb.len());
    for o in nb.offsets() {
        rel.push(dot3(o, &frame.tangent_u));
        rel.push(dot3(o, &frame.tangent_v));
    }
    Ok(Neighborhood::from_parts(nb.center_index, nb.neighbor_indices.clone(), 2, rel))
}

/// Stencil size for surface rows.
pub const DEFAULT_LB_NEIGHBORS: usize = 22;

/// Settings for Laplace-Beltrami assembly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbConfig {
    pub stencil: StencilConfig,
    /// Neighbors used for the PCA normal; `None` means the stencil size.
    pub n_frame: Option<usize>,
    /// Use the analytic normal of this surface instead of PCA.
    pub exact_normals: Option<Surface>,
}

impl Default for LbConfig {
    fn default() -> Self {
        Self {
            stencil: StencilConfig {
                neighbors: DEFAULT_LB_NEIGHBORS,
                ..Default::default()
            },
            n_frame: None,
            exact_normals: None,
        }
    }
}

/// Square CLS-GSP matrix approximating `Delta_S` (spectra of `-L` are
/// reported downstream).
pub fn assemble_lb_dm(cloud: &SurfaceCloud, config: &LbConfig) -> Result<DifferentialMatrix> {
    if cloud.points.dim() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: cloud.points.dim(),
        });
    }
    if config.stencil.method != StencilMethod::ClsGsp {
        return Err(Error::InvalidParameter(format!(
            "surface assembly needs cls-gsp rows, got {}",
            config.stencil.method
        )));
    }
    let idx = NeighborIndex::new(&cloud.points);
    let n = config.stencil.neighbors;
    let n_frame = config.n_frame.unwrap_or(n);
    let rows = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let located = |e: Error| match e {
                Error::InsufficientNeighbors { requested, available } => Error::InsufficientNeighborsAt {
                    index: i,
                    requested,
                    available,
                },
                other => other,
            };
            let nb = idx.knn(i, n).map_err(located)?;
            let p = cloud.points.point(i);
            let origin = [p[0], p[1], p[2]];
            let frame = match &config.exact_normals {
                Some(surface) => {
                    let normal = surface.normal(p).ok_or(Error::DegenerateFrame { index: i })?;
                    SurfaceFrame::from_normal(origin, normal)
                }
                None if n_frame == n => frame_from_neighborhood(origin, &nb)?,
                None => frame_from_index(&idx, i, n_frame).map_err(located)?,
            };
            let flat = project_neighborhood(&frame, &nb)?;
            let w = stencil_weights(&flat, &config.stencil)?;
            Ok(nb.neighbor_indices.iter().copied().zip(w.weights).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    DifferentialMatrix::from_rows(cloud.len(), cloud.len(), rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sphere_counts_near_published() {
        let c = gbpm_sample(&Surface::unit_sphere(), 0.2, 1.5).unwrap();
        // the symmetric lattice only admits 962 or 1010 points around 984
        assert_eq!(c.len(), 1010);
        assert!(c.points.points().all(|p| (norm(p) - 1.0).abs() <= 1e-12));
        let again = gbpm_sample(&Surface::unit_sphere(), 0.2, 1.5).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn plane_normal_is_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0])
            .collect();
        let cloud = SurfaceCloud::from_file_points(PointCloud::new(3, &pts).unwrap(), "plane").unwrap();
        let f = estimate_frame(&cloud, 0, 20).unwrap();
        assert!((f.normal[2].abs() - 1.0).abs() < 1e-10);
        assert!(f.orthonormality_residual() < 1e-12);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64, 0.0]).collect();
        let cloud = SurfaceCloud::from_file_points(PointCloud::new(3, &pts).unwrap(), "line").unwrap();
        assert!(matches!(estimate_frame(&cloud, 3, 5), Err(Error::DegenerateFrame { index: 3 })));
    }

    #[test]
    fn sphere_normals_are_radial() {
        for (dx, n_frame) in [(0.1, 20), (0.2, 60)] {
            let c = gbpm_sample(&Surface::unit_sphere(), dx, 1.5).unwrap();
            for i in (0..c.len()).step_by(7) {
                let f = estimate_frame(&c, i, n_frame).unwrap();
                let p = c.points.point(i);
                assert!(dot3(&f.normal, p).abs() >= 1.0 - 1e-3, "dx {dx} point {i}");
            }
        }
    }

    #[test]
    fn projection_examples() {
        let frame = SurfaceFrame::from_normal([0.0; 3], [0.0, 0.6, 0.8]);
        let u = frame.tangent_u;
        let nb = Neighborhood::from_offsets(3, &[vec![0.0, 0.6, 0.8], u.to_vec(), vec![0.3, -0.2, 0.5]]).unwrap();
        let flat = project_neighborhood(&frame, &nb).unwrap();
        assert!(flat.rel(0).iter().all(|v| v.abs() < 1e-15));
        assert!((flat.rel(1)[0] - 1.0).abs() < 1e-15 && flat.rel(1)[1].abs() < 1e-15);
        for i in 0..3 {
            assert!(norm(flat.rel(i)) <= norm(nb.rel(i)) + 1e-15);
        }
    }

    #[test]
    fn lb_rows_annihilate_constants() {
        let c = gbpm_sample(&Surface::unit_sphere(), 0.2, 1.5).unwrap();
        let dm = assemble_lb_dm(&c, &LbConfig::default()).unwrap();
        assert!(dm.is_square());
        assert!(dm.row_sums().iter().all(|&v| v == 0.0));
        assert!(dm.apply(&vec![1.0; c.len()]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_harmonic_is_eigenfunction() {
        let mut errs = Vec::new();
        for dx in [0.2, 0.1] {
            let c = gbpm_sample(&Surface::unit_sphere(), dx, 1.5).unwrap();
            let config = LbConfig {
                exact_normals: Some(Surface::unit_sphere()),
                ..Default::default()
            };
            let dm = assemble_lb_dm(&c, &config).unwrap();
            let z: Vec<f64> = c.points.points().map(|p| p[2]).collect();
            let lz = dm.apply(&z).unwrap();
            let err = lz.iter().zip(&z).map(|(l, z)| (l + 2.0 * z).abs()).fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[1] < errs[0], "{errs:?}");
        assert!(errs[1] < 0.1, "{errs:?}");
    }
}
