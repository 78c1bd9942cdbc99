use std::sync::Arc;

use super::{check_level_window, dyadic, greedy_net, Filling, Flavor, Vertex};
use crate::error::{Error, Result};
use crate::space::{FiniteMetricMeasureSpace, SubsetMask};

/// A filling of `Z` whose vertices with balls meeting `F` form, restricted to
/// `F`, a filling of `(F, d|F)`.
///
/// The trace filling lives on the subspace of `F` points (ascending ambient
/// index, weights `nu`); `f_points` maps its point indices back to `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedFilling {
    ambient: Filling,
    trace: Filling,
    mask: SubsetMask,
    f_points: Vec<usize>,
    vertex_embedding: Vec<usize>,
    edge_embedding: Vec<usize>,
}

/// Per level: first a greedy maximal `2^{-n}`-separated subset of `F` with
/// radius `2^{-n+2}`, then a greedy maximal `2^{-n-1}`-separated subset of
/// `{dist(xi, F) >= 2^{-n}}` with radius `2^{-n}`.
pub fn build_nested_filling(
    space: &FiniteMetricMeasureSpace,
    mask: &SubsetMask,
    n_min: i32,
    n_max: i32,
) -> Result<NestedFilling> {
    mask.check_against(space)?;
    check_level_window(space, n_min, n_max)?;
    let dist_f = mask.distances_to(space);
    let f_points = mask.indices();
    let mut local = vec![usize::MAX; space.len()];
    for (k, &p) in f_points.iter().enumerate() {
        local[p] = k;
    }

    let mut ambient_vertices = Vec::new();
    let mut trace_vertices = Vec::new();
    let mut vertex_embedding = Vec::new();
    for n in n_min..=n_max {
        let inner = greedy_net(space, f_points.iter().copied(), dyadic(n));
        let far = (0..space.len()).filter(|&i| dist_f[i] >= dyadic(n));
        let outer = greedy_net(space, far, dyadic(n + 1));
        for &c in &inner {
            vertex_embedding.push(ambient_vertices.len());
            ambient_vertices.push(Vertex {
                center: c,
                radius: dyadic(n - 2),
                level: n,
            });
            trace_vertices.push(Vertex {
                center: local[c],
                radius: dyadic(n - 2),
                level: n,
            });
        }
        for &c in &outer {
            ambient_vertices.push(Vertex {
                center: c,
                radius: dyadic(n),
                level: n,
            });
        }
    }

    let f_space = Arc::new(mask.to_space(space)?);
    let ambient = Filling::assemble(
        Arc::new(space.clone()),
        ambient_vertices,
        n_min,
        n_max,
        Flavor::Nested,
    )?;
    let trace = Filling::assemble(f_space, trace_vertices, n_min, n_max, Flavor::Nested)?;
    let edge_embedding = trace
        .edges()
        .iter()
        .map(|e| {
            ambient
                .edge_between(vertex_embedding[e.tail], vertex_embedding[e.head])
                .ok_or_else(|| Error::invalid("a trace edge has no ambient counterpart"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NestedFilling {
        ambient,
        trace,
        mask: mask.clone(),
        f_points,
        vertex_embedding,
        edge_embedding,
    })
}

impl NestedFilling {
    pub fn ambient(&self) -> &Filling {
        &self.ambient
    }

    pub fn trace(&self) -> &Filling {
        &self.trace
    }

    pub fn mask(&self) -> &SubsetMask {
        &self.mask
    }

    /// Ambient index of each trace-space point.
    pub fn f_points(&self) -> &[usize] {
        &self.f_points
    }

    pub fn vertex_embedding(&self) -> &[usize] {
        &self.vertex_embedding
    }

    pub fn edge_embedding(&self) -> &[usize] {
        &self.edge_embedding
    }

    /// The basepoint `xi_0`: the member of `F` with the smallest point index.
    /// Returned as (trace-space index, ambient index).
    pub fn basepoint(&self) -> (usize, usize) {
        (0, self.f_points[0])
    }

    /// `Q - lambda`.
    pub fn gamma(&self) -> f64 {
        self.mask.gamma(self.ambient.space())
    }

    /// Ambient vertex flags: true exactly on the embedding image.
    pub fn embedded_vertices(&self) -> Vec<bool> {
        let mut flags = vec![false; self.ambient.n_vertices()];
        for &x in &self.vertex_embedding {
            flags[x] = true;
        }
        flags
    }

    /// Ambient edge flags: true exactly on the image of `E^F`.
    pub fn embedded_edges(&self) -> Vec<bool> {
        let mut flags = vec![false; self.ambient.n_edges()];
        for &e in &self.edge_embedding {
            flags[e] = true;
        }
        flags
    }

    /// Samples on `Z` restricted to `F` (trace-space order).
    pub fn restrict(&self, f: &[f64]) -> Vec<f64> {
        self.f_points.iter().map(|&p| f[p]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{unit_cube_space, SpaceDescriptor};

    #[test]
    fn whole_space_has_no_outer_vertices() {
        let space = unit_cube_space(1, 6).unwrap();
        let mask = SubsetMask::new(vec![true; space.len()], 1.0, space.weights().to_vec()).unwrap();
        let nested = build_nested_filling(&space, &mask, 0, 4).unwrap();
        assert_eq!(nested.ambient().n_vertices(), nested.trace().n_vertices());
        assert_eq!(nested.ambient().n_edges(), nested.trace().n_edges());
    }

    #[test]
    fn corner_point_gives_one_trace_vertex_per_level() {
        let space = unit_cube_space(1, 10).unwrap();
        let mask = SubsetMask::from_indices(space.len(), &[0], 0.5).unwrap();
        let nested = build_nested_filling(&space, &mask, 0, 8).unwrap();
        let embedded = nested.embedded_vertices();
        for n in 0..=8 {
            assert_eq!(nested.trace().vertices_at_level(n).len(), 1);
        }
        for x in 0..nested.ambient().n_vertices() {
            assert_eq!(nested.ambient().contains_point(x, 0), embedded[x], "vertex {x}");
        }
    }

    #[test]
    fn embedding_preserves_orientation_and_levels() {
        let (space, mask) = SpaceDescriptor::interval_cantor().build().unwrap();
        let nested = build_nested_filling(&space, &mask.unwrap(), 0, 6).unwrap();
        let a = nested.ambient();
        let t = nested.trace();
        for (te, &ae) in nested.edge_embedding().iter().enumerate() {
            let (e, f) = (t.edge(te), a.edge(ae));
            assert_eq!(nested.vertex_embedding()[e.tail], f.tail);
            assert_eq!(nested.vertex_embedding()[e.head], f.head);
            assert_eq!(e.level, f.level);
        }
        for (tv, &av) in nested.vertex_embedding().iter().enumerate() {
            assert_eq!(t.vertex(tv).level, a.vertex(av).level);
            assert_eq!(nested.f_points()[t.vertex(tv).center], a.vertex(av).center);
        }
    }
}
