//! Finite metric measure spaces: weighted point clouds standing in for an
//! Ahlfors regular continuum at a fixed resolution.
//!
//! Integrals become weighted sums over the cloud. Balls are open,
//! `B(xi, r) = { eta : d(xi, eta) < r }`.

mod audit;
mod descriptor;
mod ifs;

pub use audit::{
    ahlfors_fit, codim_regularity_check, default_porosity_grid, doubling_constant,
    porosity_scan, AhlforsFit, CodimBand, PorosityScan, MAX_AUDIT_CENTERS,
};
pub use descriptor::{IfsPreset, SpaceDescriptor, SubsetDescriptor};
pub use ifs::{
    ifs_attractor, ifs_attractor_with_budget, snap_attractor_mask, IfsSystem, Similitude,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of points any constructor will produce.
pub const DEFAULT_POINT_BUDGET: usize = 1 << 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Sup,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Sup => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        }
    }
}

/// A weighted point cloud `(Z, d, mu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMetricMeasureSpace {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
    metric: Metric,
    pub(crate) resolution: f64,
    declared_q: f64,
    declared_diam: f64,
}

impl FiniteMetricMeasureSpace {
    /// Builds a space from explicit points and weights.
    ///
    /// `declared_diam` defaults to the diameter of the cloud.
    pub fn new(
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
        metric: Metric,
        resolution: f64,
        declared_q: f64,
        declared_diam: Option<f64>,
    ) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("a space needs at least one point"))?;
        if dim == 0 {
            return Err(Error::invalid("points must have at least one coordinate"));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::invalid("all points must have the same dimension"));
        }
        let coords: Vec<f64> = points.into_iter().flatten().collect();
        Self::from_flat(dim, coords, weights, metric, resolution, declared_q, declared_diam)
    }

    pub(crate) fn from_flat(
        dim: usize,
        coords: Vec<f64>,
        weights: Vec<f64>,
        metric: Metric,
        resolution: f64,
        declared_q: f64,
        declared_diam: Option<f64>,
    ) -> Result<Self> {
        let n = coords.len() / dim;
        if n == 0 || coords.len() != n * dim {
            return Err(Error::invalid("coordinate buffer does not match the dimension"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("coordinates must be finite"));
        }
        if weights.len() != n {
            return Err(Error::invalid(format!(
                "{} weights given for {n} points",
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid(format!(
                "weight of point {i} must be strictly positive and finite"
            )));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::invalid("resolution must be a positive real"));
        }
        if !(declared_q.is_finite() && declared_q > 0.0) {
            return Err(Error::invalid("declared dimension Q must be a positive real"));
        }
        let mut space = Self {
            dim,
            coords,
            weights,
            metric,
            resolution,
            declared_q,
            declared_diam: 1.0,
        };
        space.declared_diam = match declared_diam {
            Some(d) => d,
            None => space.cloud_diameter(),
        };
        if !(space.declared_diam.is_finite() && space.declared_diam > 0.0) {
            return Err(Error::invalid(
                "declared diameter must be positive (single-point spaces need an explicit diameter)",
            ));
        }
        Ok(space)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn declared_q(&self) -> f64 {
        self.declared_q
    }

    pub fn declared_diam(&self) -> f64 {
        self.declared_diam
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.metric.distance(self.point(i), self.point(j))
    }

    pub fn distance_to(&self, i: usize, coords: &[f64]) -> f64 {
        self.metric.distance(self.point(i), coords)
    }

    /// Indices of the points in the open ball `B(point i, r)`, ascending.
    pub fn ball(&self, center: usize, radius: f64) -> Vec<usize> {
        let c = self.point(center);
        (0..self.len())
            .filter(|&j| self.metric.distance(c, self.point(j)) < radius)
            .collect()
    }

    pub fn ball_mass(&self, center: usize, radius: f64) -> f64 {
        let c = self.point(center);
        (0..self.len())
            .filter(|&j| self.metric.distance(c, self.point(j)) < radius)
            .map(|j| self.weights[j])
            .sum()
    }

    /// Largest pairwise distance in the cloud.
    pub fn cloud_diameter(&self) -> f64 {
        let n = self.len();
        let mut diam: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                diam = diam.max(self.distance(i, j));
            }
        }
        diam
    }

    /// The sub-cloud on `indices` with the given weights (e.g. `(F, d|F, nu)`).
    pub fn subspace(&self, indices: &[usize], weights: Vec<f64>, declared_q: f64) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("subspace needs at least one point"));
        }
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::OutOfRange {
                    what: "space points",
                    index: i,
                    len: self.len(),
                });
            }
            coords.extend_from_slice(self.point(i));
        }
        let diam = {
            let mut d: f64 = 0.0;
            for (a, &i) in indices.iter().enumerate() {
                for &j in &indices[a + 1..] {
                    d = d.max(self.distance(i, j));
                }
            }
            if d > 0.0 {
                d
            } else {
                self.declared_diam
            }
        };
        Self::from_flat(
            self.dim,
            coords,
            weights,
            self.metric,
            self.resolution,
            declared_q,
            Some(diam),
        )
    }
}

/// Canonical `d`-regular example: the dyadic grid of `2^{dN}` cell centres in
/// `[0,1]^d`, equal weights summing to one, Euclidean metric.
pub fn unit_cube_space(dim: usize, n: u32) -> Result<FiniteMetricMeasureSpace> {
    unit_cube_space_with(dim, n, Metric::Euclidean, DEFAULT_POINT_BUDGET)
}

pub fn unit_cube_space_with(
    dim: usize,
    n: u32,
    metric: Metric,
    budget: usize,
) -> Result<FiniteMetricMeasureSpace> {
    if !(1..=3).contains(&dim) {
        return Err(Error::invalid("cube dimension must be 1, 2 or 3"));
    }
    if !(1..=12).contains(&n) {
        return Err(Error::invalid("cube level N must lie in 1..=12"));
    }
    let side = 1usize << n;
    let requested = (side as u128).pow(dim as u32);
    if requested > budget as u128 {
        return Err(Error::BudgetExceeded { requested, budget });
    }
    let count = requested as usize;
    let h = 1.0 / side as f64;
    let mut coords = Vec::with_capacity(count * dim);
    for idx in 0..count {
        let mut rest = idx;
        let mut cell = [0usize; 3];
        for slot in cell.iter_mut().take(dim) {
            *slot = rest % side;
            rest /= side;
        }
        // Most significant axis first keeps the ordering lexicographic.
        for k in (0..dim).rev() {
            coords.push((cell[k] as f64 + 0.5) * h);
        }
    }
    let weights = vec![1.0 / count as f64; count];
    let span = 1.0 - h;
    let diam = match metric {
        Metric::Euclidean => span * (dim as f64).sqrt(),
        Metric::Sup => span,
    };
    FiniteMetricMeasureSpace::from_flat(
        dim,
        coords,
        weights,
        metric,
        h,
        dim as f64,
        Some(if diam > 0.0 { diam } else { h }),
    )
}

/// A distinguished closed subset `F` of a space, with its measure `nu` and
/// declared dimension `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetMask {
    members: Vec<bool>,
    lambda: f64,
    weights: Vec<f64>,
}

impl SubsetMask {
    /// Validated constructor. Weights must be positive exactly on members.
    pub fn new(members: Vec<bool>, lambda: f64, weights: Vec<f64>) -> Result<Self> {
        if !members.iter().any(|&m| m) {
            return Err(Error::invalid("a subset needs at least one member"));
        }
        if weights.len() != members.len() {
            return Err(Error::invalid("subset weights must be given per point"));
        }
        for (i, (&m, &w)) in members.iter().zip(&weights).enumerate() {
            let ok = if m { w.is_finite() && w > 0.0 } else { w == 0.0 };
            if !ok {
                return Err(Error::invalid(format!(
                    "subset weight at point {i} must be positive on members and zero elsewhere"
                )));
            }
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid("subset dimension lambda must be positive"));
        }
        Ok(Self {
            members,
            lambda,
            weights,
        })
    }

    /// Members with uniform weights summing to one.
    pub fn uniform(members: Vec<bool>, lambda: f64) -> Result<Self> {
        let count = members.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::invalid("a subset needs at least one member"));
        }
        let w = 1.0 / count as f64;
        let weights = members.iter().map(|&m| if m { w } else { 0.0 }).collect();
        Self::new(members, lambda, weights)
    }

    pub fn from_indices(n_points: usize, indices: &[usize], lambda: f64) -> Result<Self> {
        let mut members = vec![false; n_points];
        for &i in indices {
            if i >= n_points {
                return Err(Error::OutOfRange {
                    what: "space points",
                    index: i,
                    len: n_points,
                });
            }
            members[i] = true;
        }
        Self::uniform(members, lambda)
    }

    /// Checks that the mask fits `space` and that `gamma = Q - lambda >= 0`.
    pub fn check_against(&self, space: &FiniteMetricMeasureSpace) -> Result<()> {
        if self.members.len() != space.len() {
            return Err(Error::invalid(format!(
                "mask has {} flags but the space has {} points",
                self.members.len(),
                space.len()
            )));
        }
        if self.lambda > space.declared_q() + 1e-12 {
            return Err(Error::invalid(format!(
                "subset dimension {} exceeds the ambient dimension {}",
                self.lambda,
                space.declared_q()
            )));
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gamma(&self, space: &FiniteMetricMeasureSpace) -> f64 {
        (space.declared_q() - self.lambda).max(0.0)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members[i]
    }

    pub fn flags(&self) -> &[bool] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Member indices, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.members
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    /// `dist(xi, F)` for every point of `space`, by exhaustive minimum.
    pub fn distances_to(&self, space: &FiniteMetricMeasureSpace) -> Vec<f64> {
        let members = self.indices();
        (0..space.len())
            .map(|i| {
                members
                    .iter()
                    .map(|&j| space.distance(i, j))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    /// The subset as a space of its own, `(F, d|F, nu)`, with `Q = lambda`.
    pub fn to_space(&self, space: &FiniteMetricMeasureSpace) -> Result<FiniteMetricMeasureSpace> {
        let idx = self.indices();
        let w = idx.iter().map(|&i| self.weights[i]).collect();
        space.subspace(&idx, w, self.lambda)
    }
}
