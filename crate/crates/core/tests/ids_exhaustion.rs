use qgraph::graph::{lattice_box, LatticeSpec};
use qgraph::ids::{exhaustion_run, ids_curve, IdsExperiment};
use qgraph::*;

// 0 ≤ W ≤ K, so form monotonicity traps the disordered count between the free
// counts at λ − K and λ on the same mesh.
#[test]
fn disordered_chain_sits_between_free_curves() {
    let k = 3.0;
    let config = AlloyConfig::unit_uniform(0.0, k).unwrap();
    let free = AlloyConfig::free();
    let grid: Vec<f64> = (1..=40).map(f64::from).collect();
    let shifted: Vec<f64> = grid.iter().map(|l| l - k).collect();
    for l in [10, 20, 40] {
        let spec = LatticeSpec::new(1, l).unwrap();
        let (_, view) = lattice_box(spec).unwrap();
        let mesh = Mesh::uniform(&view, 32);
        let sample = sample_disorder(&config, &view, 5, l as u64);
        let zero = DisorderSample::constant(&view, 0.0);
        let disordered = ids_curve(spec, &config, &sample, &mesh, &grid).unwrap();
        let upper = ids_curve(spec, &free, &zero, &mesh, &grid).unwrap();
        let lower = ids_curve(spec, &free, &zero, &mesh, &shifted).unwrap();
        for i in 0..grid.len() {
            assert!(
                lower.counts[i] <= disordered.counts[i] && disordered.counts[i] <= upper.counts[i],
                "l={l} λ={}: {} ≤ {} ≤ {}",
                grid[i],
                lower.counts[i],
                disordered.counts[i],
                upper.counts[i]
            );
        }
    }
}

#[test]
fn free_square_lattice_differences_shrink() {
    let ex = IdsExperiment {
        nu: 2,
        sizes: vec![6, 9, 12],
        lambda_grid: (1..=20).map(f64::from).collect(),
        config: AlloyConfig::free(),
        master_seed: 0,
        samples_per_size: 1,
        mesh_policy: MeshPolicy::with_h_max(0.125),
    };
    let report = exhaustion_run(&ex).unwrap();
    let sups = report.sup_differences();
    assert_eq!(sups.len(), 2);
    assert!(sups[1].2 < sups[0].2, "{sups:?}");
    assert!(report.curves.iter().all(|c| c.is_monotone()));
}

#[test]
fn exhaustion_is_reproducible() {
    let ex = IdsExperiment {
        nu: 1,
        sizes: vec![5, 8],
        lambda_grid: vec![2.0, 10.0, 30.0],
        config: AlloyConfig::unit_uniform(0.0, 2.0).unwrap(),
        master_seed: 9,
        samples_per_size: 3,
        mesh_policy: MeshPolicy::with_h_max(0.125),
    };
    let a = exhaustion_run(&ex).unwrap();
    let b = exhaustion_run(&ex).unwrap();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    a.write_ids_csv(&mut x).unwrap();
    b.write_ids_csv(&mut y).unwrap();
    assert_eq!(x, y);
    assert_eq!(a.curves.len(), 6);
}
