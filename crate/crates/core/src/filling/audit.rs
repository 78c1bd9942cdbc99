use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dyadic, Filling};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelAudit {
    pub level: i32,
    pub vertices: usize,
    pub edges: usize,
    /// Max over points of the number of level balls containing the point.
    pub max_multiplicity: usize,
    /// Min distance between distinct centres, in units of `2^{-n}`.
    pub min_separation: f64,
    /// Max over points of `min_x d(xi, xi_x) / r_x`; covering by half-balls
    /// holds when this is below one half.
    pub max_cover_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillingAudit {
    pub levels: Vec<LevelAudit>,
    /// Every level is `2^{-n-1}`-separated.
    pub separation_ok: bool,
    /// Every point lies in some `B(x)/2` on every level.
    pub covering_ok: bool,
    pub max_multiplicity: usize,
}

/// Per level, the maximal number of balls containing a single point.
pub fn overlap_audit(filling: &Filling) -> Vec<(i32, usize)> {
    let (lo, hi) = filling.level_range();
    (lo..=hi)
        .into_par_iter()
        .map(|n| {
            let mut count = vec![0usize; filling.space().len()];
            for x in filling.vertices_at_level(n) {
                for &p in filling.members_raw(x) {
                    count[p as usize] += 1;
                }
            }
            (n, count.into_iter().max().unwrap_or(0))
        })
        .collect()
}

/// Separation, covering and overlap of every level.
pub fn audit_filling(filling: &Filling) -> FillingAudit {
    let space = filling.space();
    let (lo, hi) = filling.level_range();
    let overlaps = overlap_audit(filling);
    let levels: Vec<LevelAudit> = (lo..=hi)
        .into_par_iter()
        .map(|n| {
            let ids: Vec<usize> = filling.vertices_at_level(n).collect();
            let mut min_sep = f64::INFINITY;
            for (a, &x) in ids.iter().enumerate() {
                for &y in &ids[a + 1..] {
                    let d = space.distance(filling.vertex(x).center, filling.vertex(y).center);
                    min_sep = min_sep.min(d / dyadic(n));
                }
            }
            let max_cover_ratio = (0..space.len())
                .map(|p| {
                    ids.iter()
                        .map(|&x| {
                            let v = filling.vertex(x);
                            space.distance(p, v.center) / v.radius
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max);
            LevelAudit {
                level: n,
                vertices: ids.len(),
                edges: filling.edges_at_level(n).len(),
                max_multiplicity: overlaps[(n - lo) as usize].1,
                min_separation: min_sep,
                max_cover_ratio,
            }
        })
        .collect();
    FillingAudit {
        separation_ok: levels.iter().all(|l| l.min_separation >= 0.5),
        covering_ok: levels.iter().all(|l| l.max_cover_ratio < 0.5),
        max_multiplicity: levels.iter().map(|l| l.max_multiplicity).max().unwrap_or(0),
        levels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filling::{build_filling, build_nested_filling};
    use crate::space::{unit_cube_space, SpaceDescriptor};

    #[test]
    fn interval_overlap_is_bounded() {
        let space = unit_cube_space(1, 8).unwrap();
        let filling = build_filling(&space, 0, 6).unwrap();
        let audit = audit_filling(&filling);
        assert!(audit.separation_ok && audit.covering_ok);
        assert!(audit.max_multiplicity <= 5, "{audit:?}");
    }

    #[test]
    fn single_vertex_level_has_multiplicity_one() {
        let space = unit_cube_space(1, 8).unwrap();
        let filling = build_filling(&space, -1, 3).unwrap();
        assert_eq!(filling.vertices_at_level(-1).len(), 1);
        assert_eq!(overlap_audit(&filling)[0], (-1, 1));
    }

    #[test]
    fn nested_cantor_overlap_and_trace_admissibility() {
        let (space, mask) = SpaceDescriptor::interval_cantor().build().unwrap();
        let nested = build_nested_filling(&space, &mask.unwrap(), 0, 8).unwrap();
        let ambient = audit_filling(nested.ambient());
        assert!(ambient.separation_ok && ambient.covering_ok);
        assert!(ambient.max_multiplicity <= 8, "{ambient:?}");
        let trace = audit_filling(nested.trace());
        assert!(trace.separation_ok && trace.covering_ok, "{trace:?}");
    }
}
