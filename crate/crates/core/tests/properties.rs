use std::sync::Arc;

use proptest::prelude::*;
use qgraph::bracketing::{apply_decoupling, DecouplingPlan, DecouplingTarget, Flavor};
use qgraph::corpus::random_instance;
use qgraph::graph::{lattice_box, LatticeSpec};
use qgraph::ids::ids_curve;
use qgraph::potential::potential_value;
use qgraph::stats::{correlation, ks_distance};
use qgraph::*;

fn all_eigenvalues(
    view: &SubgraphView,
    config: &AlloyConfig,
    sample: &DisorderSample,
    bc: &BoundaryConditionMap,
    mesh: &Mesh,
) -> Vec<f64> {
    let system = assemble_system(view, config, sample, bc, mesh).unwrap();
    solve_spectrum(&system, SpectrumRequest::All, false).unwrap().eigenvalues().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn degree_sum_is_twice_edge_count(seed in 0u64..10_000, keep in 1usize..8) {
        let inst = random_instance(seed);
        let sum: usize = inst.view.vertices().map(|v| inst.view.degree(v)).sum();
        prop_assert_eq!(sum, 2 * inst.view.edge_count());
        let ids: Vec<String> = inst.view.lambda().iter().take(keep).cloned().collect();
        let sub = inst.view.restrict(&ids).unwrap();
        let sum: usize = sub.vertices().map(|v| sub.degree(v)).sum();
        prop_assert_eq!(sum, 2 * sub.edge_count());
        let again = sub.restrict(sub.lambda().iter()).unwrap();
        prop_assert_eq!(again.boundary_vertices(), sub.boundary_vertices());
        prop_assert_eq!(again.interior_vertices(), sub.interior_vertices());
    }

    #[test]
    fn decoupling_is_idempotent(seed in 0u64..10_000, pick in 0usize..16, dirichlet in any::<bool>()) {
        let inst = random_instance(seed);
        let vertices: Vec<String> = inst.view.vertices().cloned().collect();
        let edges: Vec<String> = inst.view.lambda().iter().cloned().collect();
        let target = if pick % 2 == 0 {
            DecouplingTarget::Vertex(vertices[pick % vertices.len()].clone())
        } else {
            DecouplingTarget::Edge(edges[pick % edges.len()].clone())
        };
        let flavor = if dirichlet { Flavor::Dirichlet } else { Flavor::Neumann };
        let plan = DecouplingPlan::new(target, flavor);
        let bc = BoundaryConditionMap::default_for(&inst.view);
        let once = apply_decoupling(&inst.view, &bc, &plan).unwrap();
        let twice = apply_decoupling(&inst.view, &once, &plan).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn refinement_never_raises_eigenvalues(seed in 0u64..10_000) {
        let inst = random_instance(seed);
        let bc = BoundaryConditionMap::default_for(&inst.view);
        let coarse = all_eigenvalues(&inst.view, &inst.config, &inst.sample, &bc, &inst.mesh);
        let fine = all_eigenvalues(&inst.view, &inst.config, &inst.sample, &bc, &inst.mesh.refined());
        prop_assert!(fine.len() >= coarse.len());
        for (n, (f, c)) in fine.iter().zip(&coarse).enumerate() {
            prop_assert!(*f <= c + 1e-6, "n={} fine {} coarse {}", n + 1, f, c);
        }
    }

    #[test]
    fn raising_a_coupling_never_lowers_eigenvalues(seed in 0u64..10_000, pick in 0usize..16, bump in 0.0f64..5.0) {
        let inst = random_instance(seed);
        let edges: Vec<String> = inst.view.lambda().iter().cloned().collect();
        let e = &edges[pick % edges.len()];
        let raised = inst.sample.with_value(e, inst.sample.get(e).unwrap() + bump);
        let bc = BoundaryConditionMap::default_for(&inst.view);
        let before = all_eigenvalues(&inst.view, &inst.config, &inst.sample, &bc, &inst.mesh);
        let after = all_eigenvalues(&inst.view, &inst.config, &raised, &bc, &inst.mesh);
        for (n, (a, b)) in after.iter().zip(&before).enumerate() {
            prop_assert!(*a >= b - 1e-9, "n={} {} < {}", n + 1, a, b);
        }
    }

    #[test]
    fn potential_is_bounded_by_k(seed in 0u64..10_000) {
        let inst = random_instance(seed);
        let k = inst.config.potential_bound();
        for edge in inst.view.edges() {
            for i in 0..=200 {
                let x = (edge.length * i as f64 / 200.0).min(edge.length);
                let w = potential_value(&inst.config, &inst.sample, edge, x).unwrap();
                prop_assert!(w.abs() <= k + 1e-12, "W = {} > K = {}", w, k);
            }
        }
    }

    #[test]
    fn disjoint_union_merges_spectra(l1 in 0.5f64..2.0, l2 in 0.5f64..2.0, w1 in 0.0f64..5.0, w2 in 0.0f64..5.0) {
        let g = Arc::new(
            MetricGraph::new(
                ["a", "b", "c", "d"],
                vec![Edge::new("e1", "a", "b", l1), Edge::new("e2", "c", "d", l2)],
                0.5,
                2.0,
            )
            .unwrap(),
        );
        let whole = g.full_view();
        let config = AlloyConfig::unit_uniform(0.0, 5.0).unwrap();
        let sample = DisorderSample::constant(&whole, 0.0).with_value("e1", w1).with_value("e2", w2);
        let mesh = Mesh::uniform(&whole, 40);
        let spectrum_of = |view: &SubgraphView| {
            all_eigenvalues(view, &config, &sample, &BoundaryConditionMap::default_for(view), &mesh)
        };
        let both = spectrum_of(&whole);
        let mut merged = spectrum_of(&whole.restrict(["e1"]).unwrap());
        merged.extend(spectrum_of(&whole.restrict(["e2"]).unwrap()));
        merged.sort_by(f64::total_cmp);
        prop_assert_eq!(both.len(), merged.len());
        for (x, y) in both.iter().zip(&merged) {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn ids_curves_are_monotone(seed in 0u64..10_000, l in 3i64..10, nu in 1usize..3) {
        let spec = LatticeSpec::new(nu, l).unwrap();
        let (_, view) = lattice_box(spec).unwrap();
        let config = AlloyConfig::unit_uniform(0.0, 4.0).unwrap();
        let sample = sample_disorder(&config, &view, seed, 0);
        let mesh = Mesh::uniform(&view, 8);
        let grid: Vec<f64> = (0..30).map(|i| i as f64 * 1.5).collect();
        let curve = ids_curve(spec, &config, &sample, &mesh, &grid).unwrap();
        prop_assert!(curve.is_monotone());
    }
}

#[test]
fn lattice_edge_counts() {
    for nu in 1..=3usize {
        for l in 3..=12i64 {
            if nu == 3 && l > 8 {
                continue;
            }
            let spec = LatticeSpec::new(nu, l).unwrap();
            let (_, view) = lattice_box(spec).unwrap();
            let expected = nu * ((l - 1) as usize).pow(nu as u32 - 1) * (l - 2) as usize;
            assert_eq!(view.edge_count(), expected, "ν={nu} l={l}");
            assert_eq!(spec.expected_edge_count(), expected);
        }
    }
}

#[test]
fn coupling_draws_match_the_law_and_are_uncorrelated() {
    let spec = LatticeSpec::new(1, 4).unwrap();
    let (_, view) = lattice_box(spec).unwrap();
    let config = AlloyConfig::unit_uniform(1.0, 3.0).unwrap();
    let law = CouplingLaw::uniform(1.0, 3.0).unwrap();
    let draws: Vec<DisorderSample> = (0..10_000).map(|i| sample_disorder(&config, &view, 11, i)).collect();
    let edges: Vec<String> = view.lambda().iter().cloned().collect();
    let column = |e: &str| draws.iter().map(|s| s.get(e).unwrap()).collect::<Vec<f64>>();
    for e in &edges {
        let d = ks_distance(&column(e), |x| law.cdf(x));
        assert!(d <= 0.02, "edge {e}: KS distance {d}");
    }
    let r = correlation(&column(&edges[0]), &column(&edges[1]));
    assert!(r.abs() < 0.05, "correlation {r}");
}
