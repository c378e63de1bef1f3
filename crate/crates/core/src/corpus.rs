//! Seeded random graphs with random alloy potentials for property checks.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::assembly::Mesh;
use crate::graph::{Edge, MetricGraph, SubgraphView};
use crate::potential::{
    sample_disorder, AlloyConfig, CouplingLaw, DisorderSample, PiecewiseConstant, Segment,
    SingleSitePotential, Sites,
};

/// A graph, a valid alloy config with a realized coupling field and an aligned mesh.
#[derive(Debug, Clone)]
pub struct CorpusInstance {
    pub graph: Arc<MetricGraph>,
    pub view: SubgraphView,
    pub config: AlloyConfig,
    pub sample: DisorderSample,
    pub mesh: Mesh,
}

/// A connected graph with up to `max_edges` edges and lengths in [0.5, 2].
///
/// Loops and parallel edges appear with small probability.
pub fn random_graph<R: Rng>(rng: &mut R, max_edges: usize) -> MetricGraph {
    let max_edges = max_edges.max(1);
    let n_edges = rng.random_range(1..=max_edges);
    let n_vertices = rng.random_range(2..=n_edges + 1);
    let vertices: Vec<String> = (0..n_vertices).map(|i| format!("v{i}")).collect();
    let mut ends: Vec<(usize, usize)> = (1..n_vertices)
        .map(|i| (rng.random_range(0..i), i))
        .collect();
    while ends.len() < n_edges {
        let a = rng.random_range(0..n_vertices);
        let b = if rng.random_bool(0.15) {
            a
        } else {
            rng.random_range(0..n_vertices)
        };
        ends.push((a, b));
    }
    let edges = ends
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            let length = 0.5 + 0.25 * rng.random_range(0..=6) as f64 + rng.random_range(0.0..0.2);
            let length = length.min(2.0);
            let (a, b) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
            Edge::new(format!("e{i}"), vertices[a].clone(), vertices[b].clone(), length)
        })
        .collect();
    MetricGraph::new(vertices, edges, 0.5, 2.0).expect("generated graph is valid")
}

fn random_site<R: Rng>(rng: &mut R, edge: &Edge) -> SingleSitePotential {
    let l = edge.length;
    let q = |k: usize| k as f64 * l / 4.0;
    let (a, b) = match rng.random_range(0..3) {
        0 => (0.0, l),
        1 => (q(1), q(3)),
        _ => (0.0, q(2)),
    };
    let c_minus = rng.random_range(0.5..1.0);
    let c_plus = 1.0;
    let mut segments = Vec::new();
    if a > 0.0 {
        segments.push(Segment { from: 0.0, to: a, value: 0.0 });
    }
    // The midpoint of each support choice is a quarter point.
    let mid = 0.5 * (a + b);
    segments.push(Segment { from: a, to: mid, value: c_plus });
    segments.push(Segment { from: mid, to: b, value: c_minus });
    if b < l {
        segments.push(Segment { from: b, to: l, value: 0.0 });
    }
    SingleSitePotential {
        edge: edge.id.clone(),
        support: (a, b),
        profile: PiecewiseConstant::new(segments).expect("segments tile the edge"),
        c_minus,
        c_plus,
    }
}

/// One corpus instance drawn from `seed`.
///
/// Every edge gets a multiple of 4 elements with spacing at most 1/32, so
/// quarter-point breakpoints are nodes and Dirichlet spectra have at least
/// 15 eigenvalues per edge.
pub fn random_instance(seed: u64) -> CorpusInstance {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let graph = Arc::new(random_graph(&mut rng, 8));
    let view = graph.full_view();
    let sites: BTreeMap<String, SingleSitePotential> = graph
        .edges()
        .iter()
        .map(|e| (e.id.clone(), random_site(&mut rng, e)))
        .collect();
    let s = sites
        .values()
        .map(SingleSitePotential::support_length)
        .fold(f64::INFINITY, f64::min);
    let omega_plus = rng.random_range(1.0..20.0);
    let law = CouplingLaw::uniform(0.0, omega_plus).expect("non-degenerate law");
    let config = AlloyConfig::new(law, Sites::PerEdge(sites), s);
    let sample = sample_disorder(&config, &view, seed, 0);
    let mut mesh = Mesh::default();
    for e in graph.edges() {
        mesh.set(e.id.clone(), 4 * (8.0 * e.length).ceil() as usize);
    }
    CorpusInstance {
        graph,
        view,
        config,
        sample,
        mesh,
    }
}

/// `count` instances with seeds derived from `master_seed`.
pub fn random_corpus(master_seed: u64, count: usize) -> Vec<CorpusInstance> {
    (0..count as u64)
        .map(|i| random_instance(master_seed.wrapping_mul(1_000_003).wrapping_add(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_system, BoundaryConditionMap};

    #[test]
    fn instances_are_valid_and_assemble() {
        for inst in random_corpus(5, 30) {
            assert!(inst.graph.edges().len() <= 8);
            assert!(inst.config.validate(&inst.view).is_valid());
            let bc = BoundaryConditionMap::default_for(&inst.view);
            assemble_system(&inst.view, &inst.config, &inst.sample, &bc, &inst.mesh).unwrap();
        }
    }

    #[test]
    fn deterministic() {
        let a = random_instance(9);
        let b = random_instance(9);
        assert_eq!(a.graph.to_json(), b.graph.to_json());
        assert_eq!(a.sample, b.sample);
    }
}
