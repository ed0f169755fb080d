//! Point-cloud storage, neighbor search and center-relative neighborhoods.

mod kdtree;

pub use kdtree::KdTree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clouds at or below this size are searched by brute force.
pub const DEFAULT_KDTREE_CUTOFF: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointTag {
    Interior,
    BoundaryNode,
}

/// An ordered set of `dim`-dimensional samples.
///
/// Coordinates are stored flat, point after point. Coincident points are
/// allowed and never merged.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    tags: Vec<PointTag>,
}

impl PointCloud {
    pub fn new(dim: usize, points: &[Vec<f64>]) -> Result<Self> {
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords)
    }

    /// Builds a cloud from flat coordinates; every point is tagged interior.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: coords.len() % dim,
            });
        }
        let n = coords.len() / dim;
        Ok(Self {
            dim,
            coords,
            tags: vec![PointTag::Interior; n],
        })
    }

    pub fn with_tag(mut self, tag: PointTag) -> Self {
        self.tags.iter_mut().for_each(|t| *t = tag);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn tag(&self, i: usize) -> PointTag {
        self.tags[i]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Appends `other` after `self`, keeping both sets of tags.
    pub fn concat(&self, other: &PointCloud) -> Result<PointCloud> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        let mut tags = self.tags.clone();
        tags.extend_from_slice(&other.tags);
        Ok(PointCloud {
            dim: self.dim,
            coords,
            tags,
        })
    }

    pub fn translated(&self, offset: &[f64]) -> Result<PointCloud> {
        if offset.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: offset.len(),
            });
        }
        let coords = self
            .coords
            .chunks_exact(self.dim)
            .flat_map(|p| p.iter().zip(offset).map(|(a, b)| a + b))
            .collect();
        Ok(PointCloud {
            dim: self.dim,
            coords,
            tags: self.tags.clone(),
        })
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A stencil center and its `n` neighbors in center-relative coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub center_index: usize,
    pub neighbor_indices: Vec<usize>,
    dim: usize,
    rel_coords: Vec<f64>,
    pub mean_radius: f64,
    pub max_radius: f64,
}

impl Neighborhood {
    /// Builds a neighborhood directly from relative offsets. Neighbor
    /// indices are numbered `1..=n` and the center is index 0.
    pub fn from_offsets(dim: usize, offsets: &[Vec<f64>]) -> Result<Self> {
        let mut rel = Vec::with_capacity(dim * offsets.len());
        for o in offsets {
            if o.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: o.len(),
                });
            }
            rel.extend_from_slice(o);
        }
        Ok(Self::from_parts(0, (1..=offsets.len()).collect(), dim, rel))
    }

    pub(crate) fn from_parts(
        center_index: usize,
        neighbor_indices: Vec<usize>,
        dim: usize,
        rel_coords: Vec<f64>,
    ) -> Self {
        let radii: Vec<f64> = rel_coords.chunks_exact(dim).map(norm).collect();
        let n = radii.len();
        let mean_radius = if n == 0 {
            0.0
        } else {
            radii.iter().sum::<f64>() / n as f64
        };
        let max_radius = radii.iter().cloned().fold(0.0, f64::max);
        Self {
            center_index,
            neighbor_indices,
            dim,
            rel_coords,
            mean_radius,
            max_radius,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.neighbor_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbor_indices.is_empty()
    }

    /// Offset `x_i - x_0` of the `i`-th neighbor.
    pub fn rel(&self, i: usize) -> &[f64] {
        &self.rel_coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rel_coords(&self) -> &[f64] {
        &self.rel_coords
    }

    pub fn offsets(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.rel_coords.chunks_exact(self.dim)
    }

    /// Shrinks (or stretches) the neighborhood toward the center by `h`.
    pub fn scaled(&self, h: f64) -> Result<Neighborhood> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "scale factor must be positive, got {h}"
            )));
        }
        Ok(Neighborhood {
            center_index: self.center_index,
            neighbor_indices: self.neighbor_indices.clone(),
            dim: self.dim,
            rel_coords: self.rel_coords.iter().map(|x| x * h).collect(),
            mean_radius: self.mean_radius * h,
            max_radius: self.max_radius * h,
        })
    }
}

/// Free-function form of [`Neighborhood::scaled`].
pub fn scale_neighborhood(nb: &Neighborhood, h: f64) -> Result<Neighborhood> {
    nb.scaled(h)
}

/// Reusable k-nearest-neighbor index over one cloud.
///
/// Small clouds are scanned by brute force, large ones go through a
/// [`KdTree`]. Both paths order candidates by `(squared distance, index)`
/// and return identical results.
pub struct NeighborIndex<'a> {
    cloud: &'a PointCloud,
    tree: Option<KdTree>,
}

impl<'a> NeighborIndex<'a> {
    pub fn new(cloud: &'a PointCloud) -> Self {
        Self::with_cutoff(cloud, DEFAULT_KDTREE_CUTOFF)
    }

    pub fn with_cutoff(cloud: &'a PointCloud, cutoff: usize) -> Self {
        let tree = (cloud.len() > cutoff).then(|| KdTree::build(cloud));
        Self { cloud, tree }
    }

    pub fn brute_force(cloud: &'a PointCloud) -> Self {
        Self { cloud, tree: None }
    }

    pub fn uses_tree(&self) -> bool {
        self.tree.is_some()
    }

    pub fn cloud(&self) -> &PointCloud {
        self.cloud
    }

    /// Indices of the `n` points nearest to point `center`, the center
    /// itself excluded.
    pub fn nearest_indices(&self, center: usize, n: usize) -> Result<Vec<usize>> {
        let available = self.cloud.len().saturating_sub(1);
        if n == 0 || n > available {
            return Err(Error::InsufficientNeighbors {
                requested: n,
                available,
            });
        }
        let query = self.cloud.point(center);
        let found = match &self.tree {
            Some(tree) => tree.nearest(self.cloud, query, n, Some(center)),
            None => brute_nearest(self.cloud, query, n, Some(center)),
        };
        Ok(found.into_iter().map(|(_, i)| i).collect())
    }

    pub fn knn(&self, center: usize, n: usize) -> Result<Neighborhood> {
        let indices = self.nearest_indices(center, n)?;
        let x0 = self.cloud.point(center);
        let dim = self.cloud.dim();
        let mut rel = Vec::with_capacity(n * dim);
        for &j in &indices {
            rel.extend(self.cloud.point(j).iter().zip(x0).map(|(a, b)| a - b));
        }
        Ok(Neighborhood::from_parts(center, indices, dim, rel))
    }
}

/// The `n` nearest neighbors of `cloud[center_index]`.
pub fn knn_neighbors(cloud: &PointCloud, center_index: usize, n: usize) -> Result<Neighborhood> {
    if center_index >= cloud.len() {
        return Err(Error::InvalidParameter(format!(
            "center index {center_index} out of range for {} points",
            cloud.len()
        )));
    }
    NeighborIndex::new(cloud).knn(center_index, n)
}

pub(crate) fn brute_nearest(
    cloud: &PointCloud,
    query: &[f64],
    n: usize,
    exclude: Option<usize>,
) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = (0..cloud.len())
        .filter(|&i| Some(i) != exclude)
        .map(|i| (dist2(cloud.point(i), query), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(n);
    all
}
