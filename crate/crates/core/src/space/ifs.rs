use serde::{Deserialize, Serialize};

use super::{FiniteMetricMeasureSpace, Metric, SubsetMask, DEFAULT_POINT_BUDGET};
use crate::error::{Error, Result};

/// `x -> ratio * R(angle) x + offset`. Rotation is only meaningful in the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Similitude {
    pub ratio: f64,
    pub offset: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<f64>,
}

impl Similitude {
    pub fn new(ratio: f64, offset: Vec<f64>) -> Self {
        Self {
            ratio,
            offset,
            rotation: None,
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        match (self.rotation, x.len()) {
            (Some(theta), 2) => {
                let (s, c) = theta.sin_cos();
                out[0] = self.ratio * (c * x[0] - s * x[1]) + self.offset[0];
                out[1] = self.ratio * (s * x[0] + c * x[1]) + self.offset[1];
            }
            _ => {
                for ((o, xi), b) in out.iter_mut().zip(x).zip(&self.offset) {
                    *o = self.ratio * xi + b;
                }
            }
        }
    }
}

/// A finite family of contracting similitudes iterated to a fixed depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IfsSystem {
    pub maps: Vec<Similitude>,
    pub depth: u32,
    /// Required when the ratios differ; otherwise the similarity dimension is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_q: Option<f64>,
    #[serde(default)]
    pub metric: Metric,
}

impl IfsSystem {
    /// `{x/3, x/3 + 2/3}` on the line.
    pub fn middle_thirds_cantor(depth: u32) -> Self {
        Self {
            maps: vec![
                Similitude::new(1.0 / 3.0, vec![0.0]),
                Similitude::new(1.0 / 3.0, vec![2.0 / 3.0]),
            ],
            depth,
            declared_q: None,
            metric: Metric::Euclidean,
        }
    }

    /// Three half-size copies of the unit equilateral triangle.
    pub fn sierpinski_triangle(depth: u32) -> Self {
        let h = 3f64.sqrt() / 4.0;
        Self {
            maps: vec![
                Similitude::new(0.5, vec![0.0, 0.0]),
                Similitude::new(0.5, vec![0.5, 0.0]),
                Similitude::new(0.5, vec![0.25, h]),
            ],
            depth,
            declared_q: None,
            metric: Metric::Euclidean,
        }
    }

    fn validate(&self) -> Result<usize> {
        if self.maps.is_empty() {
            return Err(Error::invalid("an IFS needs at least one map"));
        }
        if self.depth == 0 {
            return Err(Error::invalid("IFS depth must be positive"));
        }
        let dim = self.maps[0].offset.len();
        if dim == 0 {
            return Err(Error::invalid("map offsets must have at least one coordinate"));
        }
        for (i, m) in self.maps.iter().enumerate() {
            if !(m.ratio > 0.0 && m.ratio < 1.0) {
                return Err(Error::invalid(format!("ratio of map {i} must lie in (0,1)")));
            }
            if m.offset.len() != dim {
                return Err(Error::invalid("all map offsets must share one dimension"));
            }
            if m.offset.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("offset of map {i} is not finite")));
            }
            if m.rotation.is_some() && dim != 2 {
                return Err(Error::invalid("rotations are only supported in the plane"));
            }
        }
        Ok(dim)
    }

    fn common_ratio(&self, maps: &[usize]) -> Option<f64> {
        let r = self.maps[maps[0]].ratio;
        maps.iter()
            .all(|&i| (self.maps[i].ratio - r).abs() <= 1e-12 * r)
            .then_some(r)
    }

    /// Similarity dimension `log k / log(1/r)` of the subsystem `maps`.
    pub fn similarity_dimension(&self, maps: &[usize]) -> Result<f64> {
        let r = self.common_ratio(maps).ok_or_else(|| {
            Error::invalid("ratios differ, so the similarity dimension formula does not apply")
        })?;
        Ok((maps.len() as f64).ln() / (1.0 / r).ln())
    }

    fn fixed_point(&self, map: usize, dim: usize) -> Vec<f64> {
        let mut x = vec![0.0; dim];
        let mut y = vec![0.0; dim];
        for _ in 0..4096 {
            self.maps[map].apply(&x, &mut y);
            let delta = Metric::Sup.distance(&x, &y);
            std::mem::swap(&mut x, &mut y);
            if delta == 0.0 {
                break;
            }
        }
        x
    }
}

/// Samples the attractor of `sys`: one point `S_w(base)` per word `w` of length
/// `depth`, words in lexicographic order, each carrying weight `k^{-depth}`.
///
/// With `submaps`, also returns the mask of the sub-attractor generated by
/// those maps (words over the subalphabet), weighted uniformly.
pub fn ifs_attractor(
    sys: &IfsSystem,
    submaps: Option<&[usize]>,
) -> Result<(FiniteMetricMeasureSpace, Option<SubsetMask>)> {
    ifs_attractor_with_budget(sys, submaps, DEFAULT_POINT_BUDGET)
}

pub fn ifs_attractor_with_budget(
    sys: &IfsSystem,
    submaps: Option<&[usize]>,
    budget: usize,
) -> Result<(FiniteMetricMeasureSpace, Option<SubsetMask>)> {
    let dim = sys.validate()?;
    let k = sys.maps.len();
    let requested = (k as u128).checked_pow(sys.depth).unwrap_or(u128::MAX);
    if requested > budget as u128 {
        return Err(Error::BudgetExceeded { requested, budget });
    }
    let count = requested as usize;
    let all: Vec<usize> = (0..k).collect();
    let declared_q = match sys.declared_q {
        Some(q) => q,
        None => sys.similarity_dimension(&all)?,
    };

    let sub = match submaps {
        None => None,
        Some(list) => {
            let mut list = list.to_vec();
            list.sort_unstable();
            list.dedup();
            if list.is_empty() {
                return Err(Error::invalid("subcollection of maps is empty"));
            }
            if let Some(&bad) = list.iter().find(|&&i| i >= k) {
                return Err(Error::OutOfRange {
                    what: "IFS maps",
                    index: bad,
                    len: k,
                });
            }
            if list.len() == k {
                return Err(Error::invalid("subcollection must be a proper subset of the maps"));
            }
            let lambda = sys.similarity_dimension(&list)?;
            if lambda <= 0.0 {
                return Err(Error::invalid(
                    "a one-map subsystem generates a single point (lambda = 0)",
                ));
            }
            Some((list, lambda))
        }
    };

    // Base point in the (sub-)attractor so every subword image lies in F.
    let base_map = sub.as_ref().map_or(0, |(list, _)| list[0]);
    let base = sys.fixed_point(base_map, dim);

    let depth = sys.depth as usize;
    let mut coords = vec![0.0; count * dim];
    let mut word = vec![0usize; depth];
    let mut cur = vec![0.0; dim];
    let mut next = vec![0.0; dim];
    let mut in_sub = vec![false; count];
    for (idx, slot) in coords.chunks_exact_mut(dim).enumerate() {
        let mut rest = idx;
        for letter in word.iter_mut().rev() {
            *letter = rest % k;
            rest /= k;
        }
        // S_{w_1} o ... o S_{w_D}(base): innermost map is the last letter.
        cur.copy_from_slice(&base);
        for &letter in word.iter().rev() {
            sys.maps[letter].apply(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        slot.copy_from_slice(&cur);
        if let Some((list, _)) = &sub {
            in_sub[idx] = word.iter().all(|l| list.binary_search(l).is_ok());
        }
    }

    let r_max = sys.maps.iter().map(|m| m.ratio).fold(0.0, f64::max);
    let weights = vec![1.0 / count as f64; count];
    let mut space =
        FiniteMetricMeasureSpace::from_flat(dim, coords, weights, sys.metric, 1.0, declared_q, None)?;
    space.resolution = r_max.powi(sys.depth as i32) * space.declared_diam();

    let mask = match sub {
        None => None,
        Some((_, lambda)) => Some(SubsetMask::uniform(in_sub, lambda)?),
    };
    Ok((space, mask))
}

/// Marks the ambient points nearest to each point of `attractor` (ties to the
/// lower index). Duplicates collapse, and the resulting mask is uniform.
pub fn snap_attractor_mask(
    space: &FiniteMetricMeasureSpace,
    attractor: &FiniteMetricMeasureSpace,
    lambda: f64,
) -> Result<SubsetMask> {
    if attractor.dim() != space.dim() {
        return Err(Error::invalid("attractor and ambient space have different dimensions"));
    }
    let mut members = vec![false; space.len()];
    for p in attractor.points() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for j in 0..space.len() {
            let d = space.distance_to(j, p);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        members[best] = true;
    }
    SubsetMask::uniform(members, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cantor_depth_eight() {
        let (space, mask) = ifs_attractor(&IfsSystem::middle_thirds_cantor(8), None).unwrap();
        assert_eq!(space.len(), 256);
        assert!(mask.is_none());
        assert!((space.declared_q() - 2f64.ln() / 3f64.ln()).abs() < 1e-15);
        assert_eq!(space.point(0)[0], 0.0);
        assert!((space.point(255)[0] - (1.0 - 3f64.powi(-8))).abs() < 1e-12);
        assert!((space.weight(7) - 1.0 / 256.0).abs() < 1e-18);
    }

    #[test]
    fn one_map_subsystem_is_rejected() {
        let err = ifs_attractor(&IfsSystem::middle_thirds_cantor(4), Some(&[0])).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn sierpinski_bottom_edge() {
        let (space, mask) =
            ifs_attractor(&IfsSystem::sierpinski_triangle(5), Some(&[0, 1])).unwrap();
        assert_eq!(space.len(), 243);
        let mask = mask.unwrap();
        assert_eq!(mask.count(), 32);
        assert!((mask.lambda() - 1.0).abs() < 1e-15);
        for i in mask.indices() {
            assert!(space.point(i)[1].abs() < 1e-15);
        }
        let gamma = mask.gamma(&space);
        assert!((gamma - (3f64.ln() / 2f64.ln() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn unequal_ratios_need_declared_dimension() {
        let mut sys = IfsSystem::middle_thirds_cantor(3);
        sys.maps[1].ratio = 0.25;
        assert!(ifs_attractor(&sys, None).is_err());
        sys.declared_q = Some(0.55);
        let (space, _) = ifs_attractor(&sys, None).unwrap();
        assert_eq!(space.declared_q(), 0.55);
    }

    #[test]
    fn rotation_preserves_distances_up_to_ratio() {
        let m = Similitude {
            ratio: 0.5,
            offset: vec![1.0, 2.0],
            rotation: Some(0.7),
        };
        let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
        m.apply(&[0.3, -0.2], &mut a);
        m.apply(&[-1.0, 0.4], &mut b);
        let d0 = Metric::Euclidean.distance(&[0.3, -0.2], &[-1.0, 0.4]);
        let d1 = Metric::Euclidean.distance(&a, &b);
        assert!((d1 - 0.5 * d0).abs() < 1e-14);
    }

    #[test]
    fn point_count_is_exact() {
        for depth in 1..6 {
            let (space, _) = ifs_attractor(&IfsSystem::sierpinski_triangle(depth), None).unwrap();
            assert_eq!(space.len(), 3usize.pow(depth));
        }
    }
}
