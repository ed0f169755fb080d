//! Placement of the ghost sample points around a stencil center.
//!
//! Ghost locations depend only on a neighborhood radius and the requested
//! count, never on the angular positions of the neighbors.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{norm, Neighborhood};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GhostStrategy {
    /// `d` ghosts evenly spaced on the circle of radius `mean_radius`.
    Circle(usize),
    /// `count` ghosts on a lattice filling the disc of radius `max_radius / 2`.
    Disc(usize),
    /// A circle laid out in tangent-plane coordinates of a surface point.
    TangentCircle(usize),
    /// One-dimensional stencils: `d` ghosts at `±mean_radius * j / (d/2)`.
    Segment(usize),
    /// Ghosts coinciding with the `n` neighbor samples (the RBF-FD limit).
    Samples(usize),
}

impl Default for GhostStrategy {
    fn default() -> Self {
        GhostStrategy::Circle(8)
    }
}

impl fmt::Display for GhostStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GhostStrategy::Circle(d) => write!(f, "circle:{d}"),
            GhostStrategy::Disc(d) => write!(f, "disc:{d}"),
            GhostStrategy::TangentCircle(d) => write!(f, "tangent-circle:{d}"),
            GhostStrategy::Segment(d) => write!(f, "segment:{d}"),
            GhostStrategy::Samples(d) => write!(f, "samples:{d}"),
        }
    }
}

impl FromStr for GhostStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, count) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidParameter(format!("expected <kind>:<count>, got `{s}`")))?;
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad ghost count in `{s}`")))?;
        match kind.trim() {
            "circle" => Ok(GhostStrategy::Circle(count)),
            "disc" => Ok(GhostStrategy::Disc(count)),
            "tangent-circle" => Ok(GhostStrategy::TangentCircle(count)),
            "segment" => Ok(GhostStrategy::Segment(count)),
            "samples" => Ok(GhostStrategy::Samples(count)),
            other => Err(Error::InvalidParameter(format!("unknown ghost layout `{other}`"))),
        }
    }
}

/// Center-relative ghost coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostSet {
    dim: usize,
    coords: Vec<f64>,
    pub radius_scale: f64,
    pub strategy: GhostStrategy,
}

impl GhostSet {
    /// Ghosts at explicit offsets, e.g. for RBF-FD where they coincide with
    /// the neighbors.
    pub fn from_offsets(dim: usize, coords: Vec<f64>, radius_scale: f64, strategy: GhostStrategy) -> Self {
        debug_assert_eq!(coords.len() % dim, 0);
        Self {
            dim,
            coords,
            radius_scale,
            strategy,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn ghost(&self, m: usize) -> &[f64] {
        &self.coords[m * self.dim..(m + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn radii(&self) -> Vec<f64> {
        self.iter().map(norm).collect()
    }
}

fn require_dim(nb: &Neighborhood, dim: usize) -> Result<()> {
    if nb.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: nb.dim(),
        });
    }
    Ok(())
}

fn circle(radius: f64, d: usize, strategy: GhostStrategy) -> GhostSet {
    let mut coords = Vec::with_capacity(2 * d);
    for m in 1..=d {
        let theta = 2.0 * PI * m as f64 / d as f64;
        coords.push(radius * theta.cos());
        coords.push(radius * theta.sin());
    }
    GhostSet::from_offsets(2, coords, radius, strategy)
}

/// `d` ghosts on the circle of radius `nb.mean_radius`, at angles
/// `2 pi m / d` for `m = 1..=d`.
pub fn place_circle(nb: &Neighborhood, d: usize) -> Result<GhostSet> {
    require_dim(nb, 2)?;
    if d < 3 {
        return Err(Error::InvalidParameter(format!("circle needs at least 3 ghosts, got {d}")));
    }
    if !(nb.mean_radius > 0.0) {
        return Err(Error::DegenerateNeighborhood);
    }
    Ok(circle(nb.mean_radius, d, GhostStrategy::Circle(d)))
}

/// `count` ghosts inside the disc of radius `nb.max_radius / 2`.
///
/// The layout is an `m x m` lattice (`m = ceil(sqrt(count))`) spanning the
/// disc's bounding square. Nodes outside the disc are pulled radially onto
/// its rim, the center node is moved to `(0, spacing / 2)`, and the `count`
/// nodes closest to the center are kept (ties in lattice order). A single
/// ghost sits at `(R, 0)`.
pub fn place_disc(nb: &Neighborhood, count: usize) -> Result<GhostSet> {
    require_dim(nb, 2)?;
    if count == 0 {
        return Err(Error::InvalidParameter("disc needs at least one ghost".into()));
    }
    if !(nb.max_radius > 0.0) {
        return Err(Error::DegenerateNeighborhood);
    }
    let radius = 0.5 * nb.max_radius;
    if count == 1 {
        return Ok(GhostSet::from_offsets(
            2,
            vec![radius, 0.0],
            radius,
            GhostStrategy::Disc(1),
        ));
    }
    let m = (count as f64).sqrt().ceil() as usize;
    let m = m.max(2);
    let spacing = 2.0 * radius / (m - 1) as f64;
    let mut nodes: Vec<(f64, usize, [f64; 2])> = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            // integer offsets keep the lattice exactly mirror-symmetric
            let x = (2 * i) as f64 - (m - 1) as f64;
            let y = (2 * j) as f64 - (m - 1) as f64;
            let mut p = [0.5 * spacing * x, 0.5 * spacing * y];
            if x == 0.0 && y == 0.0 {
                p = [0.0, 0.5 * spacing];
            }
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            if r > radius {
                let s = radius / r;
                p = [p[0] * s, p[1] * s];
            }
            nodes.push((x * x + y * y, j * m + i, p));
        }
    }
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let coords = nodes
        .iter()
        .take(count)
        .flat_map(|(_, _, p)| p.iter().copied())
        .collect();
    Ok(GhostSet::from_offsets(2, coords, radius, GhostStrategy::Disc(count)))
}

/// Circle ghosts for a neighborhood already expressed in tangent-plane
/// coordinates.
pub fn place_tangent_circle(nb: &Neighborhood, d: usize) -> Result<GhostSet> {
    let mut g = place_circle(nb, d)?;
    g.strategy = GhostStrategy::TangentCircle(d);
    Ok(g)
}

/// One-dimensional ghosts at `±r j / (d/2)`, `j = 1..=d/2`; `d` must be even.
pub fn place_segment(nb: &Neighborhood, d: usize) -> Result<GhostSet> {
    require_dim(nb, 1)?;
    if d < 2 || !d.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "segment ghosts need an even count >= 2, got {d}"
        )));
    }
    if !(nb.mean_radius > 0.0) {
        return Err(Error::DegenerateNeighborhood);
    }
    let half = d / 2;
    let r = nb.mean_radius;
    let mut coords = Vec::with_capacity(d);
    for j in 1..=half {
        let x = r * j as f64 / half as f64;
        coords.push(-x);
        coords.push(x);
    }
    Ok(GhostSet::from_offsets(1, coords, r, GhostStrategy::Segment(d)))
}

/// Ghosts placed exactly on the neighbor samples.
pub fn place_on_samples(nb: &Neighborhood) -> GhostSet {
    GhostSet::from_offsets(
        nb.dim(),
        nb.rel_coords().to_vec(),
        nb.mean_radius,
        GhostStrategy::Samples(nb.len()),
    )
}

pub fn place_ghosts(nb: &Neighborhood, strategy: GhostStrategy) -> Result<GhostSet> {
    match strategy {
        GhostStrategy::Samples(n) => {
            if n != nb.len() {
                return Err(Error::InvalidParameter(format!(
                    "samples:{n} requested for a neighborhood of {}",
                    nb.len()
                )));
            }
            Ok(place_on_samples(nb))
        }
        GhostStrategy::Circle(d) => place_circle(nb, d),
        GhostStrategy::Disc(c) => place_disc(nb, c),
        GhostStrategy::TangentCircle(d) => place_tangent_circle(nb, d),
        GhostStrategy::Segment(d) => place_segment(nb, d),
    }
}
