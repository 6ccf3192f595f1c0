//! JSON graph configuration.
//!
//! ```json
//! {"edges": [
//!   {"id": "e1", "length": 1.0, "sigma": 1.0,
//!    "left_vertex": "a", "right_vertex": "hub",
//!    "l": 0.0, "r": 2.0, "l_to": {}, "r_to": {"e2": 1.5, "e3": 0.5}}
//! ]}
//! ```
//!
//! Edge indices follow file order. Vertex identifiers may be strings or
//! integers; `l`, `r`, `l_to`, `r_to` default to zero / empty.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeSpec, Issue, MetricGraph, Side, ValidationReport};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VertexKey {
    Name(String),
    Number(i64),
}

impl VertexKey {
    fn label(&self) -> String {
        match self {
            VertexKey::Name(s) => s.clone(),
            VertexKey::Number(n) => n.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    pub id: String,
    pub length: f64,
    pub sigma: f64,
    pub left_vertex: VertexKey,
    pub right_vertex: VertexKey,
    #[serde(default)]
    pub l: f64,
    #[serde(default)]
    pub r: f64,
    #[serde(default)]
    pub l_to: BTreeMap<String, f64>,
    #[serde(default)]
    pub r_to: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub edges: Vec<EdgeConfig>,
}

impl GraphConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Resolves string ids into indices. Dangling references are returned as
    /// a failed validation report.
    pub fn build<'a>(&'a self) -> std::result::Result<MetricGraph, ValidationReport> {
        let mut keys: Vec<&VertexKey> = Vec::new();
        let mut intern = |key: &'a VertexKey| match keys.iter().position(|k| *k == key) {
            Some(v) => v,
            None => {
                keys.push(key);
                keys.len() - 1
            }
        };
        let mut issues = Vec::new();
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let left_vertex = intern(&e.left_vertex);
            let right_vertex = intern(&e.right_vertex);
            let mut resolve = |map: &BTreeMap<String, f64>| {
                let mut out = BTreeMap::new();
                for (target, &c) in map {
                    match self.edges.iter().position(|x| &x.id == target) {
                        Some(j) => {
                            out.insert(j, c);
                        }
                        None => issues.push(Issue::UnknownEdgeId {
                            edge: e.id.clone(),
                            target: target.clone(),
                        }),
                    }
                }
                out
            };
            let l_to = resolve(&e.l_to);
            let r_to = resolve(&e.r_to);
            edges.push(EdgeSpec {
                id: e.id.clone(),
                length: e.length,
                sigma: e.sigma,
                left_vertex,
                right_vertex,
                l: e.l,
                r: e.r,
                l_to,
                r_to,
            });
        }
        let vertices = keys.iter().map(|k| k.label()).collect();
        let graph = MetricGraph { vertices, edges };
        if issues.is_empty() {
            Ok(graph)
        } else {
            let mut report = graph.validate();
            issues.append(&mut report.issues);
            report.issues = issues;
            report.conservative = false;
            Err(report)
        }
    }

    /// [`build`](Self::build) followed by validation.
    pub fn graph(&self) -> Result<MetricGraph> {
        let graph = self.build().map_err(Error::InvalidGraph)?;
        graph.ensure_valid()?;
        Ok(graph)
    }

    pub fn from_graph(graph: &MetricGraph) -> Self {
        let names = |m: &BTreeMap<usize, f64>| {
            m.iter()
                .map(|(&j, &c)| (graph.edges[j].id.clone(), c))
                .collect()
        };
        GraphConfig {
            edges: graph
                .edges
                .iter()
                .map(|e| EdgeConfig {
                    id: e.id.clone(),
                    length: e.length,
                    sigma: e.sigma,
                    left_vertex: VertexKey::Name(graph.vertices[e.vertex(Side::Left)].clone()),
                    right_vertex: VertexKey::Name(graph.vertices[e.vertex(Side::Right)].clone()),
                    l: e.l,
                    r: e.r,
                    l_to: names(&e.l_to),
                    r_to: names(&e.r_to),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph config serializes")
    }
}

/// Reads, resolves and validates a graph file.
pub fn load_graph(path: impl AsRef<Path>) -> Result<MetricGraph> {
    GraphConfig::load(path)?.graph()
}
