//! Finite-element assembly of H_Λ(ω) = −Δ_Λ + W_Λ(ω).
//!
//! Every edge is split into a uniform P1 mesh. Vertex conditions decide how
//! the end nodes of incident edges are glued:
//!
//! - [`VertexCondition::Coupled`]: all incident edge-ends share one DOF.
//!   Continuity is imposed strongly; the Kirchhoff flux balance is the
//!   natural condition of the weak form.
//! - [`VertexCondition::DecoupledNeumann`]: one free DOF per edge-end.
//! - [`VertexCondition::DecoupledDirichlet`]: every incident edge-end is
//!   pinned to zero and eliminated.
//!
//! Element integrals are exact because W is constant on each element (the
//! mesh is required to contain every profile breakpoint).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Edge, EdgeEnd, SubgraphView};
use crate::potential::{AlloyConfig, DisorderSample, PotentialError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssemblyError {
    #[error("mesh on edge `{edge}` ({elements} elements) does not resolve breakpoint {point}")]
    MeshMisaligned {
        edge: String,
        elements: usize,
        point: f64,
    },
    #[error("no vertex condition for `{0}`")]
    MissingVertexCondition(String),
    #[error("mesh has no entry for edge `{0}`")]
    MissingMeshEntry(String),
    #[error("edge `{edge}` needs at least 2 elements, got {elements}")]
    TooFewElements { edge: String, elements: usize },
    #[error("invalid mesh policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VertexCondition {
    Coupled,
    DecoupledDirichlet,
    DecoupledNeumann,
}

/// One condition per vertex. Entries for vertices outside a view are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BoundaryConditionMap {
    conditions: BTreeMap<String, VertexCondition>,
}

impl BoundaryConditionMap {
    /// Kirchhoff at interior vertices, Dirichlet at the boundary V_Λ^∂.
    pub fn default_for(view: &SubgraphView) -> Self {
        let conditions = view
            .vertices()
            .map(|v| {
                let c = if view.boundary_vertices().contains(v) {
                    VertexCondition::DecoupledDirichlet
                } else {
                    VertexCondition::Coupled
                };
                (v.clone(), c)
            })
            .collect();
        Self { conditions }
    }

    /// The same condition at every vertex of `view`.
    pub fn uniform(view: &SubgraphView, condition: VertexCondition) -> Self {
        Self {
            conditions: view.vertices().map(|v| (v.clone(), condition)).collect(),
        }
    }

    pub fn get(&self, vertex: &str) -> Option<VertexCondition> {
        self.conditions.get(vertex).copied()
    }

    pub fn set(&mut self, vertex: impl Into<String>, condition: VertexCondition) {
        self.conditions.insert(vertex.into(), condition);
    }

    pub fn with(mut self, vertex: impl Into<String>, condition: VertexCondition) -> Self {
        self.set(vertex, condition);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &VertexCondition)> {
        self.conditions.iter()
    }
}

/// How to choose per-edge element counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshPolicy {
    /// Upper bound on the element size.
    pub h_max: f64,
    pub min_elements: usize,
    /// Give up looking for an aligned mesh beyond this many elements.
    pub max_elements: usize,
}

impl Default for MeshPolicy {
    fn default() -> Self {
        Self {
            h_max: 1.0 / 16.0,
            min_elements: 2,
            max_elements: 4096,
        }
    }
}

impl MeshPolicy {
    pub fn with_h_max(h_max: f64) -> Self {
        Self {
            h_max,
            ..Self::default()
        }
    }
}

/// Uniform element counts per edge.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Mesh {
    elements: BTreeMap<String, usize>,
}

fn resolves(point: f64, length: f64, elements: usize) -> bool {
    let t = point / length * elements as f64;
    (t - t.round()).abs() <= 1e-9 * (elements as f64).max(1.0)
}

impl Mesh {
    /// `n` elements on every edge of `view`.
    pub fn uniform(view: &SubgraphView, n: usize) -> Self {
        Self {
            elements: view.lambda().iter().map(|id| (id.clone(), n)).collect(),
        }
    }

    /// Smallest aligned counts with spacing at most `policy.h_max`.
    pub fn from_policy(
        view: &SubgraphView,
        config: &AlloyConfig,
        policy: &MeshPolicy,
    ) -> Result<Self, AssemblyError> {
        if !(policy.h_max > 0.0) || policy.min_elements < 2 {
            return Err(AssemblyError::InvalidPolicy(format!(
                "h_max = {}, min_elements = {}",
                policy.h_max, policy.min_elements
            )));
        }
        let mut elements = BTreeMap::new();
        for edge in view.edges() {
            let points = config.site_for(edge)?.breakpoints();
            let start = ((edge.length / policy.h_max) - 1e-9).ceil().max(1.0) as usize;
            let start = start.max(policy.min_elements);
            let n = (start..=policy.max_elements.max(start))
                .find(|&n| points.iter().all(|&p| resolves(p, edge.length, n)))
                .ok_or_else(|| AssemblyError::MeshMisaligned {
                    edge: edge.id.clone(),
                    elements: policy.max_elements,
                    point: points
                        .iter()
                        .copied()
                        .find(|&p| !resolves(p, edge.length, policy.max_elements))
                        .unwrap_or(f64::NAN),
                })?;
            elements.insert(edge.id.clone(), n);
        }
        Ok(Self { elements })
    }

    pub fn elements(&self, edge: &str) -> Option<usize> {
        self.elements.get(edge).copied()
    }

    pub fn set(&mut self, edge: impl Into<String>, n: usize) {
        self.elements.insert(edge.into(), n);
    }

    /// Every element count doubled (a nested refinement).
    pub fn refined(&self) -> Self {
        Self {
            elements: self.elements.iter().map(|(k, n)| (k.clone(), 2 * n)).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &usize)> {
        self.elements.iter()
    }
}

/// Discretization data of one edge inside an [`AssembledSystem`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDiscretization {
    pub edge: String,
    pub length: f64,
    pub elements: usize,
    /// Global DOF of each of the `elements + 1` nodes; `None` where pinned to zero.
    pub dofs: Vec<Option<usize>>,
    /// u_e on each element.
    pub profile: Vec<f64>,
    pub coupling: f64,
}

impl EdgeDiscretization {
    pub fn spacing(&self) -> f64 {
        self.length / self.elements as f64
    }

    /// Nodal values of a global vector on this edge.
    pub fn node_values(&self, v: &DVector<f64>) -> Vec<f64> {
        self.dofs.iter().map(|d| d.map_or(0.0, |i| v[i])).collect()
    }

    /// Exact ∫ weight·|ψ|² over elements `first..last`, weight constant per element.
    fn weighted_mass(&self, v: &DVector<f64>, first: usize, last: usize, weight: impl Fn(usize) -> f64) -> f64 {
        let h = self.spacing();
        (first..last)
            .map(|k| {
                let a = self.dofs[k].map_or(0.0, |i| v[i]);
                let b = self.dofs[k + 1].map_or(0.0, |i| v[i]);
                weight(k) * h / 3.0 * (a * a + a * b + b * b)
            })
            .sum()
    }

    /// ∫ |ψ|² over the node range `[first, last]`.
    pub fn mass_between(&self, v: &DVector<f64>, first: usize, last: usize) -> f64 {
        self.weighted_mass(v, first, last, |_| 1.0)
    }

    /// ⟨ψ, u_e ψ⟩, the derivative of the quadratic form in ω_e.
    pub fn profile_form(&self, v: &DVector<f64>) -> f64 {
        self.weighted_mass(v, 0, self.elements, |k| self.profile[k])
    }

    /// Node index of coordinate `x`, if `x` is a mesh node.
    pub fn node_of(&self, x: f64) -> Option<usize> {
        resolves(x, self.length, self.elements)
            .then(|| (x / self.length * self.elements as f64).round() as usize)
            .filter(|&k| k <= self.elements)
    }
}

/// The symmetric pencil (K, M) of the discretized operator.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    stiffness: DMatrix<f64>,
    mass: DMatrix<f64>,
    edges: Vec<EdgeDiscretization>,
    index: BTreeMap<String, usize>,
}

impl AssembledSystem {
    pub fn dimension(&self) -> usize {
        self.stiffness.nrows()
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn edges(&self) -> &[EdgeDiscretization] {
        &self.edges
    }

    pub fn edge(&self, id: &str) -> Option<&EdgeDiscretization> {
        self.index.get(id).map(|&i| &self.edges[i])
    }
}

enum Slot {
    Pinned,
    Fresh,
    Shared(String),
}

fn end_slot(
    edge: &Edge,
    end: EdgeEnd,
    bc: &BoundaryConditionMap,
) -> Result<Slot, AssemblyError> {
    let v = match end {
        EdgeEnd::Initial => &edge.iota,
        EdgeEnd::Terminal => &edge.tau,
    };
    match bc.get(v) {
        None => Err(AssemblyError::MissingVertexCondition(v.clone())),
        Some(VertexCondition::DecoupledDirichlet) => Ok(Slot::Pinned),
        Some(VertexCondition::DecoupledNeumann) => Ok(Slot::Fresh),
        Some(VertexCondition::Coupled) => Ok(Slot::Shared(v.clone())),
    }
}

/// Assembles K and M for `view` under `bc` on `mesh`.
///
/// DOFs are numbered edge by edge in canonical order: initial end, interior
/// nodes, terminal end, with shared vertex DOFs numbered on first use.
pub fn assemble_system(
    view: &SubgraphView,
    config: &AlloyConfig,
    sample: &DisorderSample,
    bc: &BoundaryConditionMap,
    mesh: &Mesh,
) -> Result<AssembledSystem, AssemblyError> {
    for v in view.vertices() {
        if bc.get(v).is_none() {
            return Err(AssemblyError::MissingVertexCondition(v.clone()));
        }
    }

    let mut next = 0usize;
    let mut shared: BTreeMap<String, usize> = BTreeMap::new();
    let mut edges = Vec::with_capacity(view.edge_count());
    for edge in view.edges() {
        let n = mesh
            .elements(&edge.id)
            .ok_or_else(|| AssemblyError::MissingMeshEntry(edge.id.clone()))?;
        if n < 2 {
            return Err(AssemblyError::TooFewElements {
                edge: edge.id.clone(),
                elements: n,
            });
        }
        let site = config.site_for(edge)?;
        if let Some(&p) = site
            .breakpoints()
            .iter()
            .find(|&&p| !resolves(p, edge.length, n))
        {
            return Err(AssemblyError::MeshMisaligned {
                edge: edge.id.clone(),
                elements: n,
                point: p,
            });
        }
        let coupling = sample
            .get(&edge.id)
            .ok_or_else(|| PotentialError::MissingCoupling(edge.id.clone()))?;

        let mut take = |slot: Slot| -> Option<usize> {
            match slot {
                Slot::Pinned => None,
                Slot::Fresh => {
                    next += 1;
                    Some(next - 1)
                }
                Slot::Shared(v) => Some(*shared.entry(v).or_insert_with(|| {
                    next += 1;
                    next - 1
                })),
            }
        };
        let mut dofs = Vec::with_capacity(n + 1);
        dofs.push(take(end_slot(edge, EdgeEnd::Initial, bc)?));
        for _ in 1..n {
            dofs.push(take(Slot::Fresh));
        }
        dofs.push(take(end_slot(edge, EdgeEnd::Terminal, bc)?));

        let h = edge.length / n as f64;
        let profile = (0..n)
            .map(|k| site.profile.value_at((k as f64 + 0.5) * h))
            .collect();
        edges.push(EdgeDiscretization {
            edge: edge.id.clone(),
            length: edge.length,
            elements: n,
            dofs,
            profile,
            coupling,
        });
    }

    let dim = next;
    let mut stiffness = DMatrix::zeros(dim, dim);
    let mut mass = DMatrix::zeros(dim, dim);
    for ed in &edges {
        let h = ed.spacing();
        for k in 0..ed.elements {
            let w = ed.coupling * ed.profile[k];
            let local_m = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
            let local_k = [
                [1.0 / h + w * local_m[0][0], -1.0 / h + w * local_m[0][1]],
                [-1.0 / h + w * local_m[1][0], 1.0 / h + w * local_m[1][1]],
            ];
            let nodes = [ed.dofs[k], ed.dofs[k + 1]];
            for a in 0..2 {
                let Some(i) = nodes[a] else { continue };
                for b in 0..2 {
                    let Some(j) = nodes[b] else { continue };
                    stiffness[(i, j)] += local_k[a][b];
                    mass[(i, j)] += local_m[a][b];
                }
            }
        }
    }
    let index = edges
        .iter()
        .enumerate()
        .map(|(i, e)| (e.edge.clone(), i))
        .collect();
    Ok(AssembledSystem {
        stiffness,
        mass,
        edges,
        index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::MetricGraph;
    use std::sync::Arc;

    fn path() -> SubgraphView {
        let g = Arc::new(
            MetricGraph::new(
                ["a", "b", "c"],
                vec![Edge::new("ab", "a", "b", 1.0), Edge::new("bc", "b", "c", 1.0)],
                1.0,
                1.0,
            )
            .unwrap(),
        );
        g.full_view()
    }

    fn zero(view: &SubgraphView) -> (AlloyConfig, DisorderSample) {
        (AlloyConfig::free(), DisorderSample::constant(view, 0.0))
    }

    #[test]
    fn dof_counts() {
        let g = Arc::new(MetricGraph::new(["a", "b"], vec![Edge::new("e", "a", "b", 1.0)], 1.0, 1.0).unwrap());
        let v = g.full_view();
        let (cfg, s) = zero(&v);
        let sys = assemble_system(&v, &cfg, &s, &BoundaryConditionMap::default_for(&v), &Mesh::uniform(&v, 4)).unwrap();
        assert_eq!(sys.dimension(), 3);

        let v = path();
        let (cfg, s) = zero(&v);
        let bc = BoundaryConditionMap::default_for(&v);
        let mesh = Mesh::uniform(&v, 4);
        assert_eq!(assemble_system(&v, &cfg, &s, &bc, &mesh).unwrap().dimension(), 7);
        let bc = bc.with("b", VertexCondition::DecoupledNeumann);
        assert_eq!(assemble_system(&v, &cfg, &s, &bc, &mesh).unwrap().dimension(), 8);
    }

    #[test]
    fn matrices_symmetric_and_mass_positive() {
        let v = path();
        let cfg = AlloyConfig::unit_uniform(0.0, 1.0).unwrap();
        let s = DisorderSample::constant(&v, 0.3);
        let sys = assemble_system(&v, &cfg, &s, &BoundaryConditionMap::default_for(&v), &Mesh::uniform(&v, 5)).unwrap();
        assert_eq!(sys.stiffness(), &sys.stiffness().transpose());
        assert_eq!(sys.mass(), &sys.mass().transpose());
        assert!(sys.mass().clone().cholesky().is_some());
        // 1ᵀM1 = ∫ (Σ free hats)², which is 1 except on the two end elements
        // where it ramps as x/h and contributes h/3 each.
        let ones = DVector::from_element(sys.dimension(), 1.0);
        let total: f64 = (sys.mass() * &ones).sum();
        assert!((total - (2.0 - 4.0 * 0.2 / 3.0)).abs() < 1e-12, "{total}");
    }

    #[test]
    fn loop_shares_vertex_dof() {
        let g = Arc::new(MetricGraph::new(["a"], vec![Edge::new("l", "a", "a", 1.0)], 1.0, 1.0).unwrap());
        let v = g.full_view();
        let (cfg, s) = zero(&v);
        let mesh = Mesh::uniform(&v, 4);
        let coupled = assemble_system(&v, &cfg, &s, &BoundaryConditionMap::default_for(&v), &mesh).unwrap();
        assert_eq!(coupled.dimension(), 4);
        let ed = coupled.edge("l").unwrap();
        assert_eq!(ed.dofs.first(), ed.dofs.last());
        let neumann = assemble_system(&v, &cfg, &s, &BoundaryConditionMap::uniform(&v, VertexCondition::DecoupledNeumann), &mesh).unwrap();
        assert_eq!(neumann.dimension(), 5);
    }

    #[test]
    fn misaligned_mesh_and_missing_condition() {
        let g = Arc::new(MetricGraph::new(["a", "b"], vec![Edge::new("e", "a", "b", 1.0)], 1.0, 1.0).unwrap());
        let v = g.full_view();
        let text = r#"{"law": {"omega_minus": 0, "omega_plus": 1},
                       "sites": {"template": {"support": [0.25, 0.75]}}}"#;
        let cfg = AlloyConfig::from_json(text).unwrap();
        let s = DisorderSample::constant(&v, 0.5);
        let bc = BoundaryConditionMap::default_for(&v);
        assert!(matches!(
            assemble_system(&v, &cfg, &s, &bc, &Mesh::uniform(&v, 6)),
            Err(AssemblyError::MeshMisaligned { .. })
        ));
        assert!(assemble_system(&v, &cfg, &s, &bc, &Mesh::uniform(&v, 8)).is_ok());
        let policy = MeshPolicy { h_max: 0.3, ..MeshPolicy::default() };
        assert_eq!(Mesh::from_policy(&v, &cfg, &policy).unwrap().elements("e"), Some(4));

        let empty = BoundaryConditionMap::default();
        assert!(matches!(
            assemble_system(&v, &cfg, &s, &empty, &Mesh::uniform(&v, 8)),
            Err(AssemblyError::MissingVertexCondition(_))
        ));
    }
}
