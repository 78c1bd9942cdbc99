//! JSON descriptions of spaces and subsets.
//!
//! ```json
//! { "kind": "cube", "dim": 1, "level": 10,
//!   "subset": { "kind": "ifs", "preset": "cantor", "depth": 6 } }
//! ```

use serde::{Deserialize, Serialize};

use super::{
    ifs_attractor, snap_attractor_mask, unit_cube_space_with, FiniteMetricMeasureSpace,
    IfsSystem, Metric, Similitude, SubsetMask, DEFAULT_POINT_BUDGET,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IfsPreset {
    Cantor,
    Sierpinski,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SpaceDescriptor {
    /// `unit_cube_space(dim, level)`.
    Cube {
        dim: usize,
        level: u32,
        #[serde(default)]
        metric: Metric,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subset: Option<SubsetDescriptor>,
    },
    /// IFS attractor given by a preset or by explicit maps.
    Ifs {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preset: Option<IfsPreset>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        maps: Option<Vec<Similitude>>,
        depth: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        declared_q: Option<f64>,
        #[serde(default)]
        metric: Metric,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subset: Option<SubsetDescriptor>,
    },
    /// Explicit points; weights default to uniform with total mass one.
    Pointset {
        points: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
        resolution: f64,
        declared_q: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        declared_diam: Option<f64>,
        #[serde(default)]
        metric: Metric,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subset: Option<SubsetDescriptor>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SubsetDescriptor {
    /// Sub-attractor of an IFS space generated by the listed maps.
    Submaps { maps: Vec<usize> },
    /// Listed point indices with uniform weights.
    Explicit { indices: Vec<usize>, lambda: f64 },
    /// Attractor of a second IFS, snapped to the nearest ambient points.
    Ifs {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preset: Option<IfsPreset>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        maps: Option<Vec<Similitude>>,
        depth: u32,
        /// Defaults to the similarity dimension.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
    },
}

fn ifs_system(
    preset: Option<IfsPreset>,
    maps: &Option<Vec<Similitude>>,
    depth: u32,
    declared_q: Option<f64>,
    metric: Metric,
) -> Result<IfsSystem> {
    let mut sys = match (preset, maps) {
        (Some(IfsPreset::Cantor), None) => IfsSystem::middle_thirds_cantor(depth),
        (Some(IfsPreset::Sierpinski), None) => IfsSystem::sierpinski_triangle(depth),
        (None, Some(maps)) => IfsSystem {
            maps: maps.clone(),
            depth,
            declared_q: None,
            metric,
        },
        _ => {
            return Err(Error::invalid(
                "an IFS needs exactly one of `preset` and `maps`",
            ))
        }
    };
    sys.declared_q = declared_q;
    sys.metric = metric;
    Ok(sys)
}

impl SpaceDescriptor {
    /// The unit interval at level 10 with the depth-6 middle-thirds Cantor set
    /// snapped onto the grid.
    pub fn interval_cantor() -> Self {
        SpaceDescriptor::Cube {
            dim: 1,
            level: 10,
            metric: Metric::Euclidean,
            subset: Some(SubsetDescriptor::Ifs {
                preset: Some(IfsPreset::Cantor),
                maps: None,
                depth: 6,
                lambda: None,
            }),
        }
    }

    /// Sierpinski gasket with the bottom-edge sub-fractal generated by two maps.
    pub fn sierpinski_edge(depth: u32) -> Self {
        SpaceDescriptor::Ifs {
            preset: Some(IfsPreset::Sierpinski),
            maps: None,
            depth,
            declared_q: None,
            metric: Metric::Euclidean,
            subset: Some(SubsetDescriptor::Submaps { maps: vec![0, 1] }),
        }
    }

    pub fn subset(&self) -> Option<&SubsetDescriptor> {
        match self {
            SpaceDescriptor::Cube { subset, .. }
            | SpaceDescriptor::Ifs { subset, .. }
            | SpaceDescriptor::Pointset { subset, .. } => subset.as_ref(),
        }
    }

    pub fn without_subset(&self) -> Self {
        let mut copy = self.clone();
        match &mut copy {
            SpaceDescriptor::Cube { subset, .. }
            | SpaceDescriptor::Ifs { subset, .. }
            | SpaceDescriptor::Pointset { subset, .. } => *subset = None,
        }
        copy
    }

    /// Builds the space and, when described, its subset mask.
    pub fn build(&self) -> Result<(FiniteMetricMeasureSpace, Option<SubsetMask>)> {
        let (space, sub_mask) = match self {
            SpaceDescriptor::Cube {
                dim, level, metric, ..
            } => (unit_cube_space_with(*dim, *level, *metric, DEFAULT_POINT_BUDGET)?, None),
            SpaceDescriptor::Ifs {
                preset,
                maps,
                depth,
                declared_q,
                metric,
                subset,
            } => {
                let sys = ifs_system(*preset, maps, *depth, *declared_q, *metric)?;
                let submaps = match subset {
                    Some(SubsetDescriptor::Submaps { maps }) => Some(maps.as_slice()),
                    _ => None,
                };
                ifs_attractor(&sys, submaps)?
            }
            SpaceDescriptor::Pointset {
                points,
                weights,
                resolution,
                declared_q,
                declared_diam,
                metric,
                ..
            } => {
                let n = points.len();
                let w = match weights {
                    Some(w) => w.clone(),
                    None if n > 0 => vec![1.0 / n as f64; n],
                    None => Vec::new(),
                };
                let space = FiniteMetricMeasureSpace::new(
                    points.clone(),
                    w,
                    *metric,
                    *resolution,
                    *declared_q,
                    *declared_diam,
                )?;
                (space, None)
            }
        };
        let mask = match self.subset() {
            None => None,
            Some(SubsetDescriptor::Submaps { .. }) => {
                if !matches!(self, SpaceDescriptor::Ifs { .. }) {
                    return Err(Error::invalid("`submaps` subsets need an IFS space"));
                }
                sub_mask
            }
            Some(SubsetDescriptor::Explicit { indices, lambda }) => {
                Some(SubsetMask::from_indices(space.len(), indices, *lambda)?)
            }
            Some(SubsetDescriptor::Ifs {
                preset,
                maps,
                depth,
                lambda,
            }) => {
                let sys = ifs_system(*preset, maps, *depth, None, space.metric())?;
                let (attractor, _) = ifs_attractor(&sys, None)?;
                let lambda = lambda.unwrap_or(attractor.declared_q());
                Some(snap_attractor_mask(&space, &attractor, lambda)?)
            }
        };
        if let Some(mask) = &mask {
            mask.check_against(&space)?;
        }
        Ok((space, mask))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_cantor_pair() {
        let (space, mask) = SpaceDescriptor::interval_cantor().build().unwrap();
        let mask = mask.unwrap();
        assert_eq!(space.len(), 1024);
        assert_eq!(mask.count(), 64);
        assert!((mask.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((mask.lambda() - 2f64.ln() / 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let d = SpaceDescriptor::sierpinski_edge(4);
        let text = serde_json::to_string(&d).unwrap();
        let back: SpaceDescriptor = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
        let bad = r#"{"kind":"cube","dim":1,"level":3,"colour":"red"}"#;
        assert!(serde_json::from_str::<SpaceDescriptor>(bad).is_err());
    }

    #[test]
    fn pointset_defaults_to_uniform_weights() {
        let text = r#"{"kind":"pointset","points":[[0.0],[1.0]],"resolution":0.0625,"declared_q":1.0,
            "subset":{"kind":"explicit","indices":[1],"lambda":0.5}}"#;
        let d: SpaceDescriptor = serde_json::from_str(text).unwrap();
        let (space, mask) = d.build().unwrap();
        assert_eq!(space.weights(), &[0.5, 0.5]);
        assert_eq!(mask.unwrap().indices(), vec![1]);
    }

    #[test]
    fn ambiguous_ifs_is_rejected() {
        let text = r#"{"kind":"ifs","depth":3}"#;
        let d: SpaceDescriptor = serde_json::from_str(text).unwrap();
        assert!(d.build().is_err());
    }
}
