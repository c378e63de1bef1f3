//! Metric graphs, finite subgraph views and ℤ^ν lattice boxes.
//!
//! A [`MetricGraph`] is a finite combinatorial graph whose edges carry
//! lengths. Each edge is identified with the interval `[0, length]`, running
//! from its initial vertex `iota` to its terminal vertex `tau`. Loops and
//! parallel edges are allowed.
//!
//! Operators are never built on a whole graph directly but on a
//! [`SubgraphView`]: a finite edge set together with the induced vertex set,
//! split into boundary vertices (exactly one incident edge-end in the view)
//! and interior vertices.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("edge `{edge}` references unknown vertex `{vertex}`")]
    UnknownVertex { edge: String, vertex: String },
    #[error("edge `{edge}` has length {length} outside [{l_minus}, {l_plus}]")]
    LengthOutOfBounds {
        edge: String,
        length: f64,
        l_minus: f64,
        l_plus: f64,
    },
    #[error("edge `{edge}` has non-positive length {length}")]
    NonPositiveLength { edge: String, length: f64 },
    #[error("invalid length bounds [{l_minus}, {l_plus}]")]
    InvalidLengthBounds { l_minus: f64, l_plus: f64 },
    #[error("duplicate edge id `{0}`")]
    DuplicateEdge(String),
    #[error("unknown edge `{0}`")]
    UnknownEdge(String),
    #[error("graph must have at least one vertex and one edge")]
    EmptyGraph,
    #[error("subgraph edge set is empty")]
    EmptySelection,
    #[error("lattice dimension must be at least 1")]
    ZeroDimension,
    #[error("box side l = {0} is too small (need l >= 3)")]
    BoxTooSmall(i64),
    #[error("invalid lattice box: {0}")]
    InvalidBox(String),
    #[error("graph file: {0}")]
    Io(String),
}

/// One edge of a metric graph, parametrized by `[0, length]` from `iota` to `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    pub iota: String,
    pub tau: String,
    pub length: f64,
}

impl Edge {
    pub fn new(
        id: impl Into<String>,
        iota: impl Into<String>,
        tau: impl Into<String>,
        length: f64,
    ) -> Self {
        Self {
            id: id.into(),
            iota: iota.into(),
            tau: tau.into(),
            length,
        }
    }

    pub fn is_loop(&self) -> bool {
        self.iota == self.tau
    }
}

/// Which end of an edge touches a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeEnd {
    /// The end at `x = 0`, i.e. the initial vertex.
    Initial,
    /// The end at `x = length`, i.e. the terminal vertex.
    Terminal,
}

/// A validated finite metric graph. Edges are kept sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    vertices: BTreeSet<String>,
    edges: Vec<Edge>,
    index: BTreeMap<String, usize>,
    l_minus: f64,
    l_plus: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphFile {
    vertices: Vec<String>,
    edges: Vec<Edge>,
    l_minus: f64,
    l_plus: f64,
}

impl MetricGraph {
    /// Validates and builds a graph.
    pub fn new<I, S>(
        vertices: I,
        edges: Vec<Edge>,
        l_minus: f64,
        l_plus: f64,
    ) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let vertices: BTreeSet<String> = vertices.into_iter().map(Into::into).collect();
        if vertices.is_empty() || edges.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        if !(l_minus > 0.0 && l_minus <= l_plus && l_plus.is_finite()) {
            return Err(GraphError::InvalidLengthBounds { l_minus, l_plus });
        }
        let mut edges = edges;
        edges.sort_by(|a, b| a.id.cmp(&b.id));
        let mut index = BTreeMap::new();
        for (i, e) in edges.iter().enumerate() {
            for v in [&e.iota, &e.tau] {
                if !vertices.contains(v) {
                    return Err(GraphError::UnknownVertex {
                        edge: e.id.clone(),
                        vertex: v.clone(),
                    });
                }
            }
            if !(e.length > 0.0) {
                return Err(GraphError::NonPositiveLength {
                    edge: e.id.clone(),
                    length: e.length,
                });
            }
            if e.length < l_minus || e.length > l_plus {
                return Err(GraphError::LengthOutOfBounds {
                    edge: e.id.clone(),
                    length: e.length,
                    l_minus,
                    l_plus,
                });
            }
            if index.insert(e.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateEdge(e.id.clone()));
            }
        }
        Ok(Self {
            vertices,
            edges,
            index,
            l_minus,
            l_plus,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let file: GraphFile =
            serde_json::from_str(text).map_err(|e| GraphError::Io(e.to_string()))?;
        Self::new(file.vertices, file.edges, file.l_minus, file.l_plus)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GraphError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            vertices: self.vertices.iter().cloned().collect(),
            edges: self.edges.clone(),
            l_minus: self.l_minus,
            l_plus: self.l_plus,
        };
        serde_json::to_string_pretty(&file).expect("graph serializes")
    }

    pub fn vertices(&self) -> &BTreeSet<String> {
        &self.vertices
    }

    /// Edges in canonical (id) order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: &str) -> Option<&Edge> {
        self.index.get(id).map(|&i| &self.edges[i])
    }

    pub fn l_minus(&self) -> f64 {
        self.l_minus
    }

    pub fn l_plus(&self) -> f64 {
        self.l_plus
    }

    /// Degree in the whole graph; a loop contributes 2.
    pub fn degree(&self, vertex: &str) -> usize {
        self.edges
            .iter()
            .map(|e| (e.iota == vertex) as usize + (e.tau == vertex) as usize)
            .sum()
    }

    /// A view over every edge of the graph.
    pub fn full_view(self: &Arc<Self>) -> SubgraphView {
        let ids: BTreeSet<String> = self.index.keys().cloned().collect();
        SubgraphView::from_parts(Arc::clone(self), ids)
    }
}

/// A finite edge set Λ of a parent graph with its induced vertex split.
#[derive(Debug, Clone)]
pub struct SubgraphView {
    parent: Arc<MetricGraph>,
    lambda: BTreeSet<String>,
    degrees: BTreeMap<String, usize>,
    boundary: BTreeSet<String>,
    interior: BTreeSet<String>,
}

impl PartialEq for SubgraphView {
    fn eq(&self, other: &Self) -> bool {
        self.lambda == other.lambda
            && self.degrees == other.degrees
            && (Arc::ptr_eq(&self.parent, &other.parent) || self.parent == other.parent)
    }
}

/// Builds the view of `lambda` inside `graph`.
pub fn subgraph_view<I, S>(graph: &Arc<MetricGraph>, lambda: I) -> Result<SubgraphView, GraphError>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let lambda: BTreeSet<String> = lambda.into_iter().map(Into::into).collect();
    if lambda.is_empty() {
        return Err(GraphError::EmptySelection);
    }
    if let Some(bad) = lambda.iter().find(|id| graph.edge(id).is_none()) {
        return Err(GraphError::UnknownEdge(bad.clone()));
    }
    Ok(SubgraphView::from_parts(Arc::clone(graph), lambda))
}

impl SubgraphView {
    fn from_parts(parent: Arc<MetricGraph>, lambda: BTreeSet<String>) -> Self {
        let mut degrees: BTreeMap<String, usize> = BTreeMap::new();
        for id in &lambda {
            let e = parent.edge(id).expect("edge ids checked by caller");
            *degrees.entry(e.iota.clone()).or_default() += 1;
            *degrees.entry(e.tau.clone()).or_default() += 1;
        }
        let (boundary, interior) = degrees
            .iter()
            .map(|(v, _)| v.clone())
            .partition(|v| degrees[v] == 1);
        Self {
            parent,
            lambda,
            degrees,
            boundary,
            interior,
        }
    }

    pub fn parent(&self) -> &Arc<MetricGraph> {
        &self.parent
    }

    /// The edge ids of Λ, in canonical order.
    pub fn lambda(&self) -> &BTreeSet<String> {
        &self.lambda
    }

    pub fn edge_count(&self) -> usize {
        self.lambda.len()
    }

    /// Edges of Λ in canonical order.
    pub fn edges(&self) -> impl Iterator<Item = &Edge> + '_ {
        self.lambda
            .iter()
            .map(|id| self.parent.edge(id).expect("view edges exist in parent"))
    }

    pub fn edge(&self, id: &str) -> Option<&Edge> {
        if self.lambda.contains(id) {
            self.parent.edge(id)
        } else {
            None
        }
    }

    pub fn contains_edge(&self, id: &str) -> bool {
        self.lambda.contains(id)
    }

    pub fn contains_vertex(&self, v: &str) -> bool {
        self.degrees.contains_key(v)
    }

    /// V_Λ, the endpoints of edges in Λ.
    pub fn vertices(&self) -> impl Iterator<Item = &String> + '_ {
        self.degrees.keys()
    }

    pub fn vertex_count(&self) -> usize {
        self.degrees.len()
    }

    pub fn boundary_vertices(&self) -> &BTreeSet<String> {
        &self.boundary
    }

    pub fn interior_vertices(&self) -> &BTreeSet<String> {
        &self.interior
    }

    /// Degree in G_Λ (loops count twice); zero for vertices outside V_Λ.
    pub fn degree(&self, v: &str) -> usize {
        self.degrees.get(v).copied().unwrap_or(0)
    }

    /// Edge-ends of Λ incident to `v`, in canonical edge order.
    pub fn incident_ends(&self, v: &str) -> Vec<(&Edge, EdgeEnd)> {
        let mut out = Vec::new();
        for e in self.edges() {
            if e.iota == v {
                out.push((e, EdgeEnd::Initial));
            }
            if e.tau == v {
                out.push((e, EdgeEnd::Terminal));
            }
        }
        out
    }

    /// Total length of Λ.
    pub fn total_length(&self) -> f64 {
        self.edges().map(|e| e.length).sum()
    }

    /// The view of a subset of Λ inside the same parent graph.
    pub fn restrict<I, S>(&self, edges: I) -> Result<SubgraphView, GraphError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let subset: BTreeSet<String> = edges.into_iter().map(Into::into).collect();
        if let Some(bad) = subset.iter().find(|id| !self.lambda.contains(*id)) {
            return Err(GraphError::UnknownEdge(bad.clone()));
        }
        subgraph_view(&self.parent, subset)
    }
}

/// Dimension and side length of the cube box (0, l)^ν.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    nu: usize,
    l: i64,
}

impl LatticeSpec {
    pub fn new(nu: usize, l: i64) -> Result<Self, GraphError> {
        if nu == 0 {
            return Err(GraphError::ZeroDimension);
        }
        if l < 3 {
            return Err(GraphError::BoxTooSmall(l));
        }
        Ok(Self { nu, l })
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn l(&self) -> i64 {
        self.l
    }

    /// ν·(l−1)^(ν−1)·(l−2), the number of edges in Λ_l.
    pub fn expected_edge_count(&self) -> usize {
        let l = self.l as usize;
        self.nu * (l - 1).pow(self.nu as u32 - 1) * (l - 2)
    }

    pub fn as_box(&self) -> LatticeBox {
        LatticeBox::cube(self.nu, self.l)
    }
}

/// An integer box Q = Π (lower_i, upper_i) in ℤ^ν. Λ_Q consists of the unit
/// lattice edges lying entirely in the open box.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeBox {
    lower: Vec<i64>,
    upper: Vec<i64>,
}

impl LatticeBox {
    pub fn new(lower: Vec<i64>, upper: Vec<i64>) -> Result<Self, GraphError> {
        if lower.is_empty() {
            return Err(GraphError::ZeroDimension);
        }
        if lower.len() != upper.len() {
            return Err(GraphError::InvalidBox(format!(
                "corner dimensions differ ({} vs {})",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(a, b)| b <= a) {
            return Err(GraphError::InvalidBox(format!(
                "upper corner {upper:?} must exceed lower corner {lower:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn cube(nu: usize, l: i64) -> Self {
        Self {
            lower: vec![0; nu],
            upper: vec![l; nu],
        }
    }

    pub fn nu(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[i64] {
        &self.lower
    }

    pub fn upper(&self) -> &[i64] {
        &self.upper
    }

    pub fn volume(&self) -> i64 {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).product()
    }

    pub fn shifted(&self, x: &[i64]) -> Self {
        assert_eq!(x.len(), self.nu(), "shift dimension mismatch");
        Self {
            lower: self.lower.iter().zip(x).map(|(a, s)| a + s).collect(),
            upper: self.upper.iter().zip(x).map(|(b, s)| b + s).collect(),
        }
    }

    /// Whether `other` lies inside the closure of this box.
    pub fn contains_box(&self, other: &LatticeBox) -> bool {
        other.nu() == self.nu()
            && (0..self.nu()).all(|i| self.lower[i] <= other.lower[i] && other.upper[i] <= self.upper[i])
    }

    /// Whether the open interiors of the two boxes intersect.
    pub fn interiors_overlap(&self, other: &LatticeBox) -> bool {
        (0..self.nu()).all(|i| self.lower[i].max(other.lower[i]) < self.upper[i].min(other.upper[i]))
    }

    /// Whether the unit edge from `start` along `axis` lies in the open box.
    pub fn holds_edge(&self, start: &[i64], axis: usize) -> bool {
        (0..self.nu()).all(|j| {
            let end = start[j] + (j == axis) as i64;
            start[j] > self.lower[j] && end < self.upper[j]
        })
    }

    /// Edge ids of Λ_Q in canonical order.
    pub fn edge_ids(&self) -> Vec<String> {
        let inner = LatticeBox {
            lower: self.lower.iter().map(|a| a + 1).collect(),
            upper: self.upper.iter().map(|b| b - 1).collect(),
        };
        let mut ids: Vec<String> = lattice_points(&inner.lower, &inner.upper)
            .into_iter()
            .flat_map(|p| {
                (0..self.nu())
                    .filter(|&axis| self.holds_edge(&p, axis))
                    .map(|axis| lattice_edge_id(&p, axis))
                    .collect::<Vec<_>>()
            })
            .collect();
        ids.sort();
        ids
    }
}

impl fmt::Display for LatticeBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| format!("({a},{b})"))
            .collect();
        write!(f, "{}", parts.join("x"))
    }
}

/// All integer points of the closed box [lower, upper].
fn lattice_points(lower: &[i64], upper: &[i64]) -> Vec<Vec<i64>> {
    let mut points = vec![Vec::new()];
    for (a, b) in lower.iter().zip(upper) {
        let mut next = Vec::new();
        for p in &points {
            for c in *a..=*b {
                let mut q = p.clone();
                q.push(c);
                next.push(q);
            }
        }
        points = next;
    }
    points
}

/// Vertex id of a lattice point, e.g. `(1,-2)`.
pub fn lattice_vertex_id(point: &[i64]) -> String {
    let coords: Vec<String> = point.iter().map(|c| c.to_string()).collect();
    format!("({})", coords.join(","))
}

/// Edge id of the unit edge from `start` along `axis`, e.g. `(1,2)+1`.
pub fn lattice_edge_id(start: &[i64], axis: usize) -> String {
    format!("{}+{axis}", lattice_vertex_id(start))
}

/// Inverse of [`lattice_edge_id`].
pub fn parse_lattice_edge_id(id: &str) -> Option<(Vec<i64>, usize)> {
    let (point, axis) = id.rsplit_once('+')?;
    let axis: usize = axis.parse().ok()?;
    let inner = point.strip_prefix('(')?.strip_suffix(')')?;
    let coords: Result<Vec<i64>, _> = inner.split(',').map(str::parse).collect();
    let coords = coords.ok()?;
    (axis < coords.len()).then_some((coords, axis))
}

/// Translates a lattice edge id by `shift`.
pub fn shift_lattice_edge_id(id: &str, shift: &[i64]) -> Option<String> {
    let (start, axis) = parse_lattice_edge_id(id)?;
    if start.len() != shift.len() {
        return None;
    }
    let moved: Vec<i64> = start.iter().zip(shift).map(|(a, s)| a + s).collect();
    Some(lattice_edge_id(&moved, axis))
}

/// The unit-edge lattice on the closed box with the view Λ_Q of its open interior.
///
/// Fails with [`GraphError::EmptySelection`] when no edge fits inside the box.
pub fn lattice_region(region: &LatticeBox) -> Result<(Arc<MetricGraph>, SubgraphView), GraphError> {
    let points = lattice_points(region.lower(), region.upper());
    let vertices: Vec<String> = points.iter().map(|p| lattice_vertex_id(p)).collect();
    let mut edges = Vec::new();
    for p in &points {
        for axis in 0..region.nu() {
            if p[axis] < region.upper()[axis] {
                let mut q = p.clone();
                q[axis] += 1;
                edges.push(Edge::new(
                    lattice_edge_id(p, axis),
                    lattice_vertex_id(p),
                    lattice_vertex_id(&q),
                    1.0,
                ));
            }
        }
    }
    let graph = Arc::new(MetricGraph::new(vertices, edges, 1.0, 1.0)?);
    let view = subgraph_view(&graph, region.edge_ids())?;
    Ok((graph, view))
}

/// Λ_l for the cube (0, l)^ν.
pub fn lattice_box(spec: LatticeSpec) -> Result<(Arc<MetricGraph>, SubgraphView), GraphError> {
    lattice_region(&spec.as_box())
}
