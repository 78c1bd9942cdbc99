//! Hyperbolic fillings `(X, E)`: per level a maximal separated net of ball
//! centres, with edges between distinct balls of equal or adjacent levels that
//! share a point of the cloud.

mod audit;
mod io;
mod nested;

pub use audit::{audit_filling, overlap_audit, FillingAudit, LevelAudit};
pub use io::{EdgeRecord, FillingFile, GraphRecord, LoadedFilling, NestedRecord};
pub use nested::{build_nested_filling, NestedFilling};

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::PartitionOfUnity;
use crate::error::{Error, Result};
use crate::space::FiniteMetricMeasureSpace;

/// `2^{-n}`, exact for every level used here.
pub fn dyadic(n: i32) -> f64 {
    2f64.powi(-n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vertex {
    /// Index of the ball centre in the filling's point cloud.
    pub center: usize,
    pub radius: f64,
    pub level: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    /// `min(|tail|, |head|)`.
    pub level: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Plain,
    Nested,
}

/// A filling over a fixed level window `n_min..=n_max`.
///
/// Vertices are numbered level by level. Every edge joins a smaller id to a
/// larger one and is stored as `tail < head`, which orients level-crossing
/// edges towards the deeper vertex and same-level edges by id.
#[derive(Debug, Clone)]
pub struct Filling {
    space: Arc<FiniteMetricMeasureSpace>,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    n_min: i32,
    n_max: i32,
    flavor: Flavor,
    members: Vec<Vec<u32>>,
    vertex_starts: Vec<usize>,
    edge_starts: Vec<usize>,
    edge_index: HashMap<(u32, u32), u32>,
    edge_mass: Vec<f64>,
    vertex_mass: Vec<f64>,
    partition: OnceLock<Result<Arc<PartitionOfUnity>>>,
}

impl PartialEq for Filling {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
            && self.edges == other.edges
            && self.n_min == other.n_min
            && self.n_max == other.n_max
            && self.flavor == other.flavor
            && *self.space == *other.space
    }
}

pub(crate) fn check_level_window(space: &FiniteMetricMeasureSpace, n_min: i32, n_max: i32) -> Result<()> {
    if n_min > n_max {
        return Err(Error::invalid(format!("level window {n_min}..={n_max} is empty")));
    }
    if n_max - n_min > 60 || n_min.abs() > 500 || n_max.abs() > 500 {
        return Err(Error::invalid("level window is unreasonably large"));
    }
    if dyadic(n_min) < space.declared_diam() {
        return Err(Error::invalid(format!(
            "root level {n_min} is too deep: 2^-{n_min} < diameter {}",
            space.declared_diam()
        )));
    }
    if dyadic(n_max) < 4.0 * space.resolution() {
        return Err(Error::invalid(format!(
            "finest level {n_max} is below the resolution floor 4 * {}",
            space.resolution()
        )));
    }
    Ok(())
}

/// Greedy maximal `sep`-separated subset of `candidates`, scanned in order.
pub(crate) fn greedy_net(
    space: &FiniteMetricMeasureSpace,
    candidates: impl IntoIterator<Item = usize>,
    sep: f64,
) -> Vec<usize> {
    let mut net: Vec<usize> = Vec::new();
    for c in candidates {
        if net.iter().all(|&x| space.distance(x, c) >= sep) {
            net.push(c);
        }
    }
    net
}

impl Filling {
    /// Assembles a filling from vertices already grouped by ascending level.
    /// Ball members and the edge set are derived from the space.
    pub(crate) fn assemble(
        space: Arc<FiniteMetricMeasureSpace>,
        vertices: Vec<Vertex>,
        n_min: i32,
        n_max: i32,
        flavor: Flavor,
    ) -> Result<Self> {
        let n_levels = (n_max - n_min + 1) as usize;
        let mut vertex_starts = vec![0usize; n_levels + 1];
        for (i, v) in vertices.iter().enumerate() {
            if v.level < n_min || v.level > n_max {
                return Err(Error::invalid(format!("vertex {i} lies outside the level window")));
            }
            if i > 0 && vertices[i - 1].level > v.level {
                return Err(Error::invalid("vertices must be grouped by ascending level"));
            }
            if v.center >= space.len() {
                return Err(Error::OutOfRange {
                    what: "space points",
                    index: v.center,
                    len: space.len(),
                });
            }
            if !(v.radius.is_finite() && v.radius > 0.0) {
                return Err(Error::invalid(format!("vertex {i} has a non-positive radius")));
            }
            vertex_starts[(v.level - n_min) as usize + 1] += 1;
        }
        for k in 0..n_levels {
            vertex_starts[k + 1] += vertex_starts[k];
        }
        for k in 0..n_levels {
            if vertex_starts[k] == vertex_starts[k + 1] {
                return Err(Error::invalid(format!("level {} has no vertices", n_min + k as i32)));
            }
        }

        let members: Vec<Vec<u32>> = vertices
            .par_iter()
            .map(|v| {
                let c = space.point(v.center);
                (0..space.len() as u32)
                    .filter(|&j| space.metric().distance(c, space.point(j as usize)) < v.radius)
                    .collect()
            })
            .collect();
        if let Some(i) = members.iter().position(Vec::is_empty) {
            return Err(Error::EmptyBall {
                vertex: i,
                level: vertices[i].level,
            });
        }

        // Point -> vertices incidence, one table per level.
        let n_points = space.len();
        let incidence: Vec<Vec<Vec<u32>>> = (0..n_levels)
            .into_par_iter()
            .map(|k| {
                let mut table = vec![Vec::new(); n_points];
                for x in vertex_starts[k]..vertex_starts[k + 1] {
                    for &p in &members[x] {
                        table[p as usize].push(x as u32);
                    }
                }
                table
            })
            .collect();

        let per_level: Vec<BTreeSet<(u32, u32)>> = (0..n_levels)
            .into_par_iter()
            .map(|k| {
                let mut set = BTreeSet::new();
                for p in 0..n_points {
                    let here = &incidence[k][p];
                    for (a, &x) in here.iter().enumerate() {
                        for &y in &here[a + 1..] {
                            set.insert((x.min(y), x.max(y)));
                        }
                    }
                    if k + 1 < n_levels {
                        for &x in here {
                            for &y in &incidence[k + 1][p] {
                                set.insert((x, y));
                            }
                        }
                    }
                }
                set
            })
            .collect();

        let mut edges = Vec::new();
        let mut edge_starts = vec![0usize; n_levels + 1];
        for (k, set) in per_level.into_iter().enumerate() {
            let level = n_min + k as i32;
            for (a, b) in set {
                edges.push(Edge {
                    tail: a as usize,
                    head: b as usize,
                    level,
                });
            }
            edge_starts[k + 1] = edges.len();
        }
        let edge_index = edges
            .iter()
            .enumerate()
            .map(|(i, e)| ((e.tail as u32, e.head as u32), i as u32))
            .collect();

        let vertex_mass: Vec<f64> = members
            .iter()
            .map(|m| m.iter().map(|&p| space.weight(p as usize)).sum())
            .collect();
        let mut filling = Self {
            space,
            vertices,
            edges,
            n_min,
            n_max,
            flavor,
            members,
            vertex_starts,
            edge_starts,
            edge_index,
            edge_mass: Vec::new(),
            vertex_mass,
            partition: OnceLock::new(),
        };
        filling.edge_mass = (0..filling.edges.len())
            .into_par_iter()
            .map(|e| {
                filling
                    .edge_members(e)
                    .iter()
                    .map(|&p| filling.space.weight(p))
                    .sum()
            })
            .collect();
        Ok(filling)
    }

    pub fn space(&self) -> &FiniteMetricMeasureSpace {
        &self.space
    }

    /// The tent partition of unity of every level, built on first use.
    pub fn partition(&self) -> Result<Arc<PartitionOfUnity>> {
        self.partition
            .get_or_init(|| PartitionOfUnity::build(self).map(Arc::new))
            .clone()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex(&self, x: usize) -> &Vertex {
        &self.vertices[x]
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn level_range(&self) -> (i32, i32) {
        (self.n_min, self.n_max)
    }

    pub fn n_min(&self) -> i32 {
        self.n_min
    }

    pub fn n_max(&self) -> i32 {
        self.n_max
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn has_level(&self, n: i32) -> bool {
        n >= self.n_min && n <= self.n_max
    }

    /// Vertex ids of level `n` (empty outside the window).
    pub fn vertices_at_level(&self, n: i32) -> Range<usize> {
        if !self.has_level(n) {
            return 0..0;
        }
        let k = (n - self.n_min) as usize;
        self.vertex_starts[k]..self.vertex_starts[k + 1]
    }

    /// Edge ids with `|e| = k` (empty outside the window).
    pub fn edges_at_level(&self, k: i32) -> Range<usize> {
        if !self.has_level(k) {
            return 0..0;
        }
        let i = (k - self.n_min) as usize;
        self.edge_starts[i]..self.edge_starts[i + 1]
    }

    /// Members of `B(x)`, ascending.
    pub fn ball_members(&self, x: usize) -> Result<Vec<usize>> {
        self.check_vertex(x)?;
        Ok(self.members[x].iter().map(|&p| p as usize).collect())
    }

    pub(crate) fn members_raw(&self, x: usize) -> &[u32] {
        &self.members[x]
    }

    /// Members of `B(e) = B(e_-) ∪ B(e_+)`, ascending.
    pub fn edge_ball_members(&self, e: usize) -> Result<Vec<usize>> {
        if e >= self.edges.len() {
            return Err(Error::OutOfRange {
                what: "filling edges",
                index: e,
                len: self.edges.len(),
            });
        }
        Ok(self.edge_members(e))
    }

    pub(crate) fn edge_members(&self, e: usize) -> Vec<usize> {
        let a = &self.members[self.edges[e].tail];
        let b = &self.members[self.edges[e].head];
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let next = match (a.get(i), b.get(j)) {
                (Some(&x), Some(&y)) if x == y => {
                    i += 1;
                    j += 1;
                    x
                }
                (Some(&x), Some(&y)) if x < y => {
                    i += 1;
                    x
                }
                (Some(_), Some(&y)) => {
                    j += 1;
                    y
                }
                (Some(&x), None) => {
                    i += 1;
                    x
                }
                (None, Some(&y)) => {
                    j += 1;
                    y
                }
                (None, None) => unreachable!(),
            };
            out.push(next as usize);
        }
        out
    }

    /// `mu(B(x))`.
    pub fn vertex_mass(&self, x: usize) -> f64 {
        self.vertex_mass[x]
    }

    /// `mu(B(e))`.
    pub fn edge_mass(&self, e: usize) -> f64 {
        self.edge_mass[e]
    }

    /// The directed edge joining `a` and `b`, in either order.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        let key = (a.min(b) as u32, a.max(b) as u32);
        self.edge_index.get(&key).map(|&e| e as usize)
    }

    pub fn contains_point(&self, x: usize, point: usize) -> bool {
        self.members[x].binary_search(&(point as u32)).is_ok()
    }

    fn check_vertex(&self, x: usize) -> Result<()> {
        if x >= self.vertices.len() {
            return Err(Error::OutOfRange {
                what: "filling vertices",
                index: x,
                len: self.vertices.len(),
            });
        }
        Ok(())
    }
}

/// Plain filling: on each level a greedy maximal `2^{-n-1}`-separated net in
/// ascending point order, with balls of radius `2^{-n}`.
pub fn build_filling(
    space: &FiniteMetricMeasureSpace,
    n_min: i32,
    n_max: i32,
) -> Result<Filling> {
    build_filling_shared(Arc::new(space.clone()), n_min, n_max)
}

pub(crate) fn build_filling_shared(
    space: Arc<FiniteMetricMeasureSpace>,
    n_min: i32,
    n_max: i32,
) -> Result<Filling> {
    check_level_window(&space, n_min, n_max)?;
    let mut vertices = Vec::new();
    for n in n_min..=n_max {
        for c in greedy_net(&space, 0..space.len(), dyadic(n + 1)) {
            vertices.push(Vertex {
                center: c,
                radius: dyadic(n),
                level: n,
            });
        }
    }
    Filling::assemble(space, vertices, n_min, n_max, Flavor::Plain)
}
