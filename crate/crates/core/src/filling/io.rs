use serde::{Deserialize, Serialize};

use super::{build_filling, build_nested_filling, Filling, Flavor, NestedFilling, Vertex};
use crate::error::{Error, Result};
use crate::space::SpaceDescriptor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub tail: usize,
    pub head: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphRecord {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<EdgeRecord>,
}

impl GraphRecord {
    fn of(filling: &Filling) -> Self {
        Self {
            vertices: filling.vertices().to_vec(),
            edges: filling
                .edges()
                .iter()
                .map(|e| EdgeRecord {
                    tail: e.tail,
                    head: e.head,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NestedRecord {
    /// Vertices and edges of the filling of `F`; centres index `F` points.
    pub trace: GraphRecord,
    pub vertex_embedding: Vec<usize>,
    pub edge_embedding: Vec<usize>,
}

/// Serialized filling. The space descriptor is embedded so that the file is
/// self-contained; loading rebuilds from it and checks the stored graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FillingFile {
    pub space: SpaceDescriptor,
    pub n_min: i32,
    pub n_max: i32,
    pub flavor: Flavor,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<EdgeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nested: Option<NestedRecord>,
}

/// A loaded filling file.
#[derive(Debug, Clone)]
pub enum LoadedFilling {
    Plain(Filling),
    Nested(NestedFilling),
}

impl LoadedFilling {
    /// The filling of the whole space.
    pub fn ambient(&self) -> &Filling {
        match self {
            LoadedFilling::Plain(f) => f,
            LoadedFilling::Nested(n) => n.ambient(),
        }
    }
}

impl FillingFile {
    pub fn from_plain(space: SpaceDescriptor, filling: &Filling) -> Self {
        let graph = GraphRecord::of(filling);
        Self {
            space,
            n_min: filling.n_min(),
            n_max: filling.n_max(),
            flavor: Flavor::Plain,
            vertices: graph.vertices,
            edges: graph.edges,
            nested: None,
        }
    }

    pub fn from_nested(space: SpaceDescriptor, nested: &NestedFilling) -> Self {
        let graph = GraphRecord::of(nested.ambient());
        Self {
            space,
            n_min: nested.ambient().n_min(),
            n_max: nested.ambient().n_max(),
            flavor: Flavor::Nested,
            vertices: graph.vertices,
            edges: graph.edges,
            nested: Some(NestedRecord {
                trace: GraphRecord::of(nested.trace()),
                vertex_embedding: nested.vertex_embedding().to_vec(),
                edge_embedding: nested.edge_embedding().to_vec(),
            }),
        }
    }

    /// Rebuilds the filling and verifies that the stored graph matches.
    pub fn load(&self) -> Result<LoadedFilling> {
        let (space, mask) = self.space.build()?;
        let loaded = match self.flavor {
            Flavor::Plain => {
                if self.nested.is_some() {
                    return Err(Error::invalid("a plain filling carries no nested section"));
                }
                LoadedFilling::Plain(build_filling(&space, self.n_min, self.n_max)?)
            }
            Flavor::Nested => {
                let mask = mask
                    .ok_or_else(|| Error::invalid("a nested filling needs a subset descriptor"))?;
                LoadedFilling::Nested(build_nested_filling(&space, &mask, self.n_min, self.n_max)?)
            }
        };
        let expected = match &loaded {
            LoadedFilling::Plain(f) => FillingFile::from_plain(self.space.clone(), f),
            LoadedFilling::Nested(n) => FillingFile::from_nested(self.space.clone(), n),
        };
        if expected != *self {
            return Err(Error::invalid(
                "stored vertices or edges do not match the filling of the embedded space",
            ));
        }
        Ok(loaded)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_json() {
        let desc = SpaceDescriptor::interval_cantor();
        let (space, mask) = desc.build().unwrap();
        let nested = build_nested_filling(&space, &mask.unwrap(), 0, 5).unwrap();
        let file = FillingFile::from_nested(desc, &nested);
        let text = crate::json::to_string(&file).unwrap();
        let back: FillingFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, file);
        let LoadedFilling::Nested(again) = back.load().unwrap() else {
            panic!("expected a nested filling")
        };
        assert_eq!(again, nested);
    }

    #[test]
    fn tampered_file_is_rejected() {
        let desc = SpaceDescriptor::Cube {
            dim: 1,
            level: 6,
            metric: Default::default(),
            subset: None,
        };
        let (space, _) = desc.build().unwrap();
        let filling = build_filling(&space, 0, 4).unwrap();
        let mut file = FillingFile::from_plain(desc, &filling);
        file.edges.pop();
        assert!(file.load().is_err());
    }
}
