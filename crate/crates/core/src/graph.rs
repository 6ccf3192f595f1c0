//! Metric graphs with semipermeable membrane vertices.
//!
//! A graph is an ordered list of edges. Edge `i` is an interval of length
//! `d_i` oriented from its left endpoint `L_i` to its right endpoint `R_i`,
//! carrying a diffusion coefficient `σ_i`. The membrane at each endpoint is
//! described by a total permeability (`l_i` on the left, `r_i` on the right)
//! and pass-through coefficients `l_ij`, `r_ij` naming the edges a particle
//! may enter after crossing the membrane.
//!
//! Only lengths matter; no embedding of the graph is stored.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Absolute slack used when comparing coefficient sums against totals.
const SUM_SLACK: f64 = 1e-12;

/// Which end of an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Left => f.write_str("L"),
            Side::Right => f.write_str("R"),
        }
    }
}

/// An endpoint of an edge, addressed by edge index and side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EndpointRef {
    pub edge: usize,
    pub side: Side,
}

impl EndpointRef {
    pub fn new(edge: usize, side: Side) -> Self {
        Self { edge, side }
    }

    pub fn left(edge: usize) -> Self {
        Self::new(edge, Side::Left)
    }

    pub fn right(edge: usize) -> Self {
        Self::new(edge, Side::Right)
    }
}

/// One edge of the graph together with the membranes at its ends.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSpec {
    pub id: String,
    pub length: f64,
    pub sigma: f64,
    /// Index into [`MetricGraph::vertices`].
    pub left_vertex: usize,
    pub right_vertex: usize,
    /// Total permeability of the left membrane, `l_i`.
    pub l: f64,
    /// Total permeability of the right membrane, `r_i`.
    pub r: f64,
    /// `l_ij` keyed by target edge index `j`.
    pub l_to: BTreeMap<usize, f64>,
    /// `r_ij` keyed by target edge index `j`.
    pub r_to: BTreeMap<usize, f64>,
}

impl EdgeSpec {
    pub fn vertex(&self, side: Side) -> usize {
        match side {
            Side::Left => self.left_vertex,
            Side::Right => self.right_vertex,
        }
    }

    pub fn total(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.l,
            Side::Right => self.r,
        }
    }

    pub fn couplings(&self, side: Side) -> &BTreeMap<usize, f64> {
        match side {
            Side::Left => &self.l_to,
            Side::Right => &self.r_to,
        }
    }

    /// `l_ij` if `side` is left, `r_ij` if right; zero when absent.
    pub fn coupling(&self, side: Side, target: usize) -> f64 {
        self.couplings(side).get(&target).copied().unwrap_or(0.0)
    }

    /// `l_ij + r_ij`
    pub fn coupling_total(&self, target: usize) -> f64 {
        self.coupling(Side::Left, target) + self.coupling(Side::Right, target)
    }
}

/// A finite metric graph. Construct it freely, then check it with
/// [`MetricGraph::validate`]; every numerical routine refuses inadmissible
/// graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeSpec>,
}

/// A single violated invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    NoEdges,
    DuplicateEdgeId {
        id: String,
    },
    UnknownEdgeId {
        edge: String,
        target: String,
    },
    UnknownVertex {
        edge: String,
        vertex: usize,
    },
    Loop {
        edge: String,
    },
    BadLength {
        edge: String,
        value: f64,
    },
    BadSigma {
        edge: String,
        value: f64,
    },
    NegativeTotal {
        edge: String,
        side: Side,
        value: f64,
    },
    NegativeCoupling {
        edge: String,
        side: Side,
        target: String,
        value: f64,
    },
    SelfCoupling {
        edge: String,
        side: Side,
    },
    NotIncident {
        edge: String,
        side: Side,
        target: String,
    },
    SumExceedsTotal {
        edge: String,
        side: Side,
        sum: f64,
        total: f64,
    },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::NoEdges => write!(f, "graph has no edges"),
            Issue::DuplicateEdgeId { id } => write!(f, "duplicate edge id '{id}'"),
            Issue::UnknownEdgeId { edge, target } => {
                write!(
                    f,
                    "edge '{edge}': coupling references unknown edge '{target}'"
                )
            }
            Issue::UnknownVertex { edge, vertex } => {
                write!(f, "edge '{edge}': unknown vertex index {vertex}")
            }
            Issue::Loop { edge } => write!(f, "edge '{edge}': both endpoints at the same vertex"),
            Issue::BadLength { edge, value } => {
                write!(
                    f,
                    "edge '{edge}': length must be positive and finite, got {value}"
                )
            }
            Issue::BadSigma { edge, value } => {
                write!(
                    f,
                    "edge '{edge}': sigma must be positive and finite, got {value}"
                )
            }
            Issue::NegativeTotal { edge, side, value } => {
                write!(
                    f,
                    "edge '{edge}': {side} permeability must be nonnegative, got {value}"
                )
            }
            Issue::NegativeCoupling {
                edge,
                side,
                target,
                value,
            } => write!(
                f,
                "edge '{edge}': {side} coupling to '{target}' must be nonnegative, got {value}"
            ),
            Issue::SelfCoupling { edge, side } => {
                write!(f, "edge '{edge}': {side} coupling to itself")
            }
            Issue::NotIncident { edge, side, target } => write!(
                f,
                "edge '{edge}': {side} coupling to '{target}', which is not incident at that vertex"
            ),
            Issue::SumExceedsTotal {
                edge,
                side,
                sum,
                total,
            } => write!(
                f,
                "edge '{edge}': {side} couplings sum to {sum} which exceeds the total {total}"
            ),
        }
    }
}

/// Outcome of [`MetricGraph::validate`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
    /// Every membrane passes all of its permeability on to neighbours.
    /// Only meaningful when `issues` is empty.
    pub conservative: bool,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            writeln!(f, "valid: true")?;
        } else {
            writeln!(f, "valid: false")?;
            for issue in &self.issues {
                writeln!(f, "  - {issue}")?;
            }
        }
        write!(f, "conservative: {}", self.is_valid() && self.conservative)
    }
}

/// A linear functional on endpoint traces: `Σ coef · φ(endpoint)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceFunctional {
    pub terms: Vec<(EndpointRef, f64)>,
}

impl TraceFunctional {
    /// Applies the functional to a trace lookup.
    pub fn apply(&self, mut trace: impl FnMut(EndpointRef) -> f64) -> f64 {
        self.terms.iter().map(|&(at, c)| c * trace(at)).sum()
    }

    /// Coefficient attached to `at` (summing duplicates, which never occur
    /// for functionals built from a valid graph).
    pub fn coefficient(&self, at: EndpointRef) -> f64 {
        self.terms
            .iter()
            .filter(|(e, _)| *e == at)
            .map(|(_, c)| c)
            .sum()
    }
}

/// The membrane functionals `F_{L,i}` and `F_{R,i}` of every edge, so that
/// the dual transmission conditions read `κ φ'(L_i) = F_{L,i} φ` and
/// `κ φ'(R_i) = F_{R,i} φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFunctionalTable {
    pub left: Vec<TraceFunctional>,
    pub right: Vec<TraceFunctional>,
}

impl TraceFunctionalTable {
    pub fn at(&self, end: EndpointRef) -> &TraceFunctional {
        match end.side {
            Side::Left => &self.left[end.edge],
            Side::Right => &self.right[end.edge],
        }
    }
}

impl MetricGraph {
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.length).collect()
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    pub fn vertex_of(&self, at: EndpointRef) -> usize {
        self.edges[at.edge].vertex(at.side)
    }

    /// The side through which `edge` touches `vertex`, if it does.
    fn side_at(&self, edge: usize, vertex: usize) -> Option<Side> {
        let e = &self.edges[edge];
        if e.left_vertex == vertex {
            Some(Side::Left)
        } else if e.right_vertex == vertex {
            Some(Side::Right)
        } else {
            None
        }
    }

    /// Checks every structural invariant and reports all violations.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        if self.edges.is_empty() {
            issues.push(Issue::NoEdges);
        }
        let name = |j: usize| {
            self.edges
                .get(j)
                .map(|e| e.id.clone())
                .unwrap_or_else(|| format!("#{j}"))
        };
        for (i, e) in self.edges.iter().enumerate() {
            if self.edges[..i].iter().any(|p| p.id == e.id) {
                issues.push(Issue::DuplicateEdgeId { id: e.id.clone() });
            }
            let mut vertices_ok = true;
            for v in [e.left_vertex, e.right_vertex] {
                if v >= self.vertices.len() {
                    vertices_ok = false;
                    issues.push(Issue::UnknownVertex {
                        edge: e.id.clone(),
                        vertex: v,
                    });
                }
            }
            if e.left_vertex == e.right_vertex {
                issues.push(Issue::Loop { edge: e.id.clone() });
            }
            if !(e.length.is_finite() && e.length > 0.0) {
                issues.push(Issue::BadLength {
                    edge: e.id.clone(),
                    value: e.length,
                });
            }
            if !(e.sigma.is_finite() && e.sigma > 0.0) {
                issues.push(Issue::BadSigma {
                    edge: e.id.clone(),
                    value: e.sigma,
                });
            }
            for side in [Side::Left, Side::Right] {
                let total = e.total(side);
                if !(total.is_finite() && total >= 0.0) {
                    issues.push(Issue::NegativeTotal {
                        edge: e.id.clone(),
                        side,
                        value: total,
                    });
                }
                let mut sum = 0.0;
                for (&j, &c) in e.couplings(side) {
                    if j >= self.edges.len() {
                        issues.push(Issue::UnknownEdgeId {
                            edge: e.id.clone(),
                            target: format!("#{j}"),
                        });
                        continue;
                    }
                    if !(c.is_finite() && c >= 0.0) {
                        issues.push(Issue::NegativeCoupling {
                            edge: e.id.clone(),
                            side,
                            target: name(j),
                            value: c,
                        });
                    }
                    if j == i {
                        issues.push(Issue::SelfCoupling {
                            edge: e.id.clone(),
                            side,
                        });
                    } else if vertices_ok && c != 0.0 && self.side_at(j, e.vertex(side)).is_none() {
                        issues.push(Issue::NotIncident {
                            edge: e.id.clone(),
                            side,
                            target: name(j),
                        });
                    }
                    sum += c;
                }
                if sum > total + SUM_SLACK * total.abs().max(1.0) {
                    issues.push(Issue::SumExceedsTotal {
                        edge: e.id.clone(),
                        side,
                        sum,
                        total,
                    });
                }
            }
        }
        let conservative = issues.is_empty()
            && self.edges.iter().all(|e| {
                [Side::Left, Side::Right].into_iter().all(|side| {
                    let sum: f64 = e.couplings(side).values().sum();
                    (sum - e.total(side)).abs() <= SUM_SLACK * e.total(side).max(1.0)
                })
            });
        ValidationReport {
            issues,
            conservative,
        }
    }

    /// Returns an error carrying the report unless the graph is admissible.
    pub fn ensure_valid(&self) -> Result<ValidationReport> {
        let report = self.validate();
        if report.is_valid() {
            Ok(report)
        } else {
            Err(Error::InvalidGraph(report))
        }
    }

    pub fn is_conservative(&self) -> bool {
        let report = self.validate();
        report.is_valid() && report.conservative
    }

    /// Edges `j ≠ at.edge` sharing the vertex of `at`, each tagged with the
    /// unique end of `j` lying at that vertex.
    pub fn incident_edges(&self, at: EndpointRef) -> Result<Vec<EndpointRef>> {
        let edge = self.edges.get(at.edge).ok_or(Error::UnknownEdge(at.edge))?;
        let vertex = edge.vertex(at.side);
        Ok((0..self.edges.len())
            .filter(|&j| j != at.edge)
            .filter_map(|j| self.side_at(j, vertex).map(|s| EndpointRef::new(j, s)))
            .collect())
    }

    /// Builds `F_{L,i}` and `F_{R,i}` for every edge:
    ///
    /// `F_{L,i}φ = l_i φ(L_i) − σ_i⁻¹ Σ'_j σ_j c_ji φ(end of j at L_i)`
    ///
    /// `F_{R,i}φ = σ_i⁻¹ Σ'_j σ_j c_ji φ(end of j at R_i) − r_i φ(R_i)`
    ///
    /// where `c_ji` is `l_ji` or `r_ji` depending on which end of `j` touches
    /// the shared vertex.
    pub fn trace_functionals(&self) -> Result<TraceFunctionalTable> {
        self.ensure_valid()?;
        let build = |i: usize, side: Side| -> Result<TraceFunctional> {
            let e = &self.edges[i];
            let sign = match side {
                Side::Left => -1.0,
                Side::Right => 1.0,
            };
            let mut terms = vec![(EndpointRef::new(i, side), -sign * e.total(side))];
            for nb in self.incident_edges(EndpointRef::new(i, side))? {
                let other = &self.edges[nb.edge];
                let c = other.coupling(nb.side, i);
                if c != 0.0 {
                    terms.push((nb, sign * other.sigma / e.sigma * c));
                }
            }
            Ok(TraceFunctional { terms })
        };
        let n = self.edges.len();
        Ok(TraceFunctionalTable {
            left: (0..n)
                .map(|i| build(i, Side::Left))
                .collect::<Result<_>>()?,
            right: (0..n)
                .map(|i| build(i, Side::Right))
                .collect::<Result<_>>()?,
        })
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn single_edge_is_valid_and_conservative() {
        let report = single_edge(1.0).validate();
        assert!(report.is_valid());
        assert!(report.conservative);
    }

    #[test]
    fn coupling_to_non_incident_edge_is_reported() {
        // e1: a -> hub, e2: hub -> b. A left coupling of e1 can only reach
        // edges at a, and e2 is not there.
        let mut g = MetricGraph {
            vertices: vec!["a".into(), "hub".into(), "b".into()],
            edges: vec![edge("e1", 1.0, 1.0, 0, 1), edge("e2", 1.0, 1.0, 1, 2)],
        };
        g.edges[0].l = 1.0;
        g.edges[0].l_to.insert(1, 0.5);
        let report = g.validate();
        assert!(!report.is_valid());
        assert!(report
            .issues
            .iter()
            .any(|i| matches!(i, Issue::NotIncident { .. })));
    }

    #[test]
    fn star_is_conservative() {
        let g = star();
        let report = g.validate();
        assert!(report.is_valid(), "{report}");
        assert!(report.conservative);
        for e in &g.edges {
            let l: f64 = e.l_to.values().sum();
            let r: f64 = e.r_to.values().sum();
            assert_eq!(l, e.l);
            assert_eq!(r, e.r);
        }
    }

    #[test]
    fn sub_conservative_star_is_valid_but_not_conservative() {
        let mut g = star();
        g.edges[1].l_to.insert(0, 0.125);
        let report = g.validate();
        assert!(report.is_valid());
        assert!(!report.conservative);
    }

    #[test]
    fn excess_sum_and_loops_and_bad_numbers() {
        let mut g = chain((1.0, 1.0), (1.0, 1.0));
        g.edges[0].r_to.insert(1, 2.0);
        g.edges[1].right_vertex = 1;
        g.edges[1].sigma = 0.0;
        g.edges[1].length = -1.0;
        let issues = g.validate().issues;
        assert!(issues
            .iter()
            .any(|i| matches!(i, Issue::SumExceedsTotal { edge, .. } if edge == "e1")));
        assert!(issues.iter().any(|i| matches!(i, Issue::Loop { .. })));
        assert!(issues.iter().any(|i| matches!(i, Issue::BadSigma { .. })));
        assert!(issues.iter().any(|i| matches!(i, Issue::BadLength { .. })));
    }

    #[test]
    fn self_coupling_is_rejected() {
        let mut g = single_edge(1.0);
        g.edges[0].l = 1.0;
        g.edges[0].l_to.insert(0, 1.0);
        assert!(g.validate().issues.contains(&Issue::SelfCoupling {
            edge: "e".into(),
            side: Side::Left
        }));
    }

    #[test]
    fn empty_graph_is_invalid() {
        let g = MetricGraph {
            vertices: vec![],
            edges: vec![],
        };
        assert_eq!(g.validate().issues, vec![Issue::NoEdges]);
    }

    #[test]
    fn incident_edges_examples() {
        assert!(single_edge(1.0)
            .incident_edges(EndpointRef::left(0))
            .unwrap()
            .is_empty());
        let g = star();
        assert_eq!(
            g.incident_edges(EndpointRef::right(0)).unwrap(),
            vec![EndpointRef::left(1), EndpointRef::left(2)]
        );
        let parallel = MetricGraph {
            vertices: vec!["u".into(), "v".into()],
            edges: vec![edge("e1", 1.0, 1.0, 0, 1), edge("e2", 2.0, 1.0, 0, 1)],
        };
        assert_eq!(
            parallel.incident_edges(EndpointRef::left(0)).unwrap(),
            vec![EndpointRef::left(1)]
        );
        assert!(matches!(
            g.incident_edges(EndpointRef::left(7)),
            Err(Error::UnknownEdge(7))
        ));
    }

    #[test]
    fn incidence_is_symmetric() {
        let g = star();
        for i in 0..g.num_edges() {
            for side in [Side::Left, Side::Right] {
                let at = EndpointRef::new(i, side);
                for nb in g.incident_edges(at).unwrap() {
                    assert!(g.incident_edges(nb).unwrap().contains(&at));
                }
            }
        }
    }

    #[test]
    fn zero_permeability_functionals_vanish() {
        let t = single_edge(2.0).trace_functionals().unwrap();
        assert!(t.left[0].terms.iter().all(|(_, c)| *c == 0.0));
        assert!(t.right[0].terms.iter().all(|(_, c)| *c == 0.0));
    }

    #[test]
    fn chain_functionals_by_hand() {
        let t = chain((1.0, 1.0), (1.0, 1.0)).trace_functionals().unwrap();
        let r1 = &t.right[0];
        assert_eq!(r1.coefficient(EndpointRef::left(1)), 1.0);
        assert_eq!(r1.coefficient(EndpointRef::right(0)), -1.0);
        let l2 = &t.left[1];
        assert_eq!(l2.coefficient(EndpointRef::left(1)), 1.0);
        assert_eq!(l2.coefficient(EndpointRef::right(0)), -1.0);

        let t = chain((2.0, 1.0), (1.0, 1.0)).trace_functionals().unwrap();
        assert_eq!(t.right[0].coefficient(EndpointRef::left(1)), 0.5);
        assert_eq!(t.right[0].coefficient(EndpointRef::right(0)), -1.0);
        assert_eq!(t.left[1].coefficient(EndpointRef::right(0)), -2.0);
    }

    #[test]
    fn functional_self_coefficients_and_bookkeeping() {
        let g = star();
        let t = g.trace_functionals().unwrap();
        let mut lhs = 0.0;
        for (i, e) in g.edges.iter().enumerate() {
            assert_eq!(t.left[i].coefficient(EndpointRef::left(i)), e.l);
            assert_eq!(t.right[i].coefficient(EndpointRef::right(i)), -e.r);
            let off: f64 = t.left[i]
                .terms
                .iter()
                .chain(&t.right[i].terms)
                .filter(|(at, _)| at.edge != i)
                .map(|(_, c)| c.abs())
                .sum();
            lhs += e.sigma * off;
        }
        let rhs: f64 = g.edges.iter().map(|e| e.sigma * (e.l + e.r)).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn functionals_refuse_invalid_graph() {
        let mut g = single_edge(1.0);
        g.edges[0].sigma = -1.0;
        assert!(matches!(g.trace_functionals(), Err(Error::InvalidGraph(_))));
    }
}
