//! Integrated density of states by exhaustion of ℤ^ν lattice boxes, and the
//! superadditive-process properties of the box counting function F_Q.

use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;

use crate::assembly::{assemble_system, BoundaryConditionMap, Mesh, MeshPolicy};
use crate::graph::{lattice_box, lattice_region, shift_lattice_edge_id, GraphError, LatticeBox, LatticeSpec, SubgraphView};
use crate::potential::{sample_disorder, AlloyConfig, DisorderSample};
use crate::report::{fmt_bool, fmt_f64};
use crate::spectrum::{count_eigenvalues, n0_reference, solve_spectrum, CountMode, SpectrumRequest};
use crate::{Error, Result};

/// Distance to the nearest eigenvalue below which a count comparison is refused.
pub const GAP_GUARD: f64 = 1e-6;

/// N^l(λ) = l^{−ν}·F^l(λ) on a λ grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IdsCurve {
    pub nu: usize,
    pub l: i64,
    pub lambdas: Vec<f64>,
    /// F^l(λ), eigenvalues ≤ λ.
    pub counts: Vec<usize>,
    pub values: Vec<f64>,
    /// `(master_seed, index)` of the disorder sample.
    pub provenance: Option<(u64, u64)>,
}

impl IdsCurve {
    /// Whether N^l is non-decreasing and non-negative on the grid.
    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1]) && self.values.iter().all(|v| *v >= 0.0)
    }
}

fn region_view(region: &LatticeBox) -> Result<Option<SubgraphView>> {
    match lattice_region(region) {
        Ok((_, view)) => Ok(Some(view)),
        Err(GraphError::EmptySelection) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Eigenvalues of H_Λ on `view` up to `top`.
fn eigenvalues_upto(
    view: &SubgraphView,
    config: &AlloyConfig,
    sample: &DisorderSample,
    mesh: &Mesh,
    top: f64,
) -> Result<Vec<f64>> {
    let bc = BoundaryConditionMap::default_for(view);
    let system = assemble_system(view, config, sample, &bc, mesh)?;
    let spectrum = solve_spectrum(&system, SpectrumRequest::UpTo(top), false)?;
    Ok(spectrum.eigenvalues().to_vec())
}

fn count_leq(values: &[f64], lambda: f64) -> usize {
    values.partition_point(|&v| v <= lambda)
}

/// N^l on the box (0, l)^ν for the given realization.
pub fn ids_curve(
    spec: LatticeSpec,
    config: &AlloyConfig,
    sample: &DisorderSample,
    mesh: &Mesh,
    lambda_grid: &[f64],
) -> Result<IdsCurve> {
    let (_, view) = lattice_box(spec)?;
    let top = lambda_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bc = BoundaryConditionMap::default_for(&view);
    let system = assemble_system(&view, config, sample, &bc, mesh)?;
    let spectrum = solve_spectrum(&system, SpectrumRequest::UpTo(top), false)?;
    let counts = lambda_grid
        .iter()
        .map(|&l| count_eigenvalues(&spectrum, l, CountMode::Leq))
        .collect::<Result<Vec<usize>, _>>()?;
    let volume = (spec.l() as f64).powi(spec.nu() as i32);
    Ok(IdsCurve {
        nu: spec.nu(),
        l: spec.l(),
        lambdas: lambda_grid.to_vec(),
        values: counts.iter().map(|&c| c as f64 / volume).collect(),
        counts,
        provenance: sample.provenance(),
    })
}

#[derive(Debug, Clone)]
pub struct IdsExperiment {
    pub nu: usize,
    pub sizes: Vec<i64>,
    pub lambda_grid: Vec<f64>,
    pub config: AlloyConfig,
    pub master_seed: u64,
    pub samples_per_size: usize,
    pub mesh_policy: MeshPolicy,
}

impl IdsExperiment {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.lambda_grid.is_empty() {
            return Err(Error::InvalidExperiment("empty size list or λ grid".into()));
        }
        if let Some(l) = self.sizes.iter().find(|&&l| l < 3) {
            return Err(Error::InvalidExperiment(format!("box size {l} < 3")));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidExperiment("sizes must be strictly increasing".into()));
        }
        if self.lambda_grid.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidExperiment("λ grid must be sorted".into()));
        }
        if self.samples_per_size == 0 {
            return Err(Error::InvalidExperiment("samples_per_size must be at least 1".into()));
        }
        if !self.config.is_homogeneous() {
            return Err(Error::InvalidExperiment(
                "IDS runs need the same law and site shape on every edge".into(),
            ));
        }
        Ok(())
    }
}

/// |N^{l_to}(λ) − N^{l_from}(λ)| between consecutive sizes, on replicate-mean curves.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub lambda: f64,
    pub l_from: i64,
    pub l_to: i64,
    pub abs_diff: f64,
}

/// Comparison of the free ν = 1 curve with the limit √λ/π.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeLimitRow {
    pub l: i64,
    pub lambda: f64,
    pub n_l: f64,
    pub limit: f64,
    pub abs_diff: f64,
    /// 3/l.
    pub stated_bound: f64,
    /// (2q + 2)/l with q = √λ/π. The exact interval counts satisfy (2q + 1)/l;
    /// P1 eigenvalues sit slightly above the continuum ones, so the discrete
    /// count may trail by one eigenvalue when h·√λ is small.
    pub provable_bound: f64,
}

impl FreeLimitRow {
    pub fn within_stated(&self) -> bool {
        self.abs_diff <= self.stated_bound
    }

    pub fn within_provable(&self) -> bool {
        self.abs_diff <= self.provable_bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustionReport {
    pub master_seed: u64,
    /// One curve per (size, replicate), sizes outer.
    pub curves: Vec<IdsCurve>,
    pub convergence: Vec<ConvergenceRow>,
    /// Present only for free ν = 1 runs.
    pub free_limit: Vec<FreeLimitRow>,
}

impl ExhaustionReport {
    /// sup over the grid of |N^{l_to} − N^{l_from}| for each consecutive pair.
    pub fn sup_differences(&self) -> Vec<(i64, i64, f64)> {
        let mut out: Vec<(i64, i64, f64)> = Vec::new();
        for row in &self.convergence {
            match out.last_mut() {
                Some(last) if last.0 == row.l_from && last.1 == row.l_to => last.2 = last.2.max(row.abs_diff),
                _ => out.push((row.l_from, row.l_to, row.abs_diff)),
            }
        }
        out
    }

    pub fn write_ids_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let replicated = self.curves.iter().any(|c| c.provenance.is_some_and(|p| p.1 & 0xffff_ffff != 0));
        writeln!(out, "l,lambda,N_l,F_l{}", if replicated { ",sample" } else { "" })?;
        for c in &self.curves {
            let rep = c.provenance.map_or(0, |p| p.1 & 0xffff_ffff);
            for ((lambda, n), f) in c.lambdas.iter().zip(&c.values).zip(&c.counts) {
                write!(out, "{},{},{},{}", c.l, fmt_f64(*lambda), fmt_f64(*n), f)?;
                if replicated {
                    write!(out, ",{rep}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    pub fn write_convergence_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "lambda,l_from,l_to,abs_diff")?;
        for r in &self.convergence {
            writeln!(out, "{},{},{},{}", fmt_f64(r.lambda), r.l_from, r.l_to, fmt_f64(r.abs_diff))?;
        }
        Ok(())
    }

    pub fn write_free_limit_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "l,lambda,N_l,limit,abs_diff,bound_3_over_l,within_3_over_l,bound_2q_plus_2_over_l,within_2q_plus_2_over_l")?;
        for r in &self.free_limit {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.l,
                fmt_f64(r.lambda),
                fmt_f64(r.n_l),
                fmt_f64(r.limit),
                fmt_f64(r.abs_diff),
                fmt_f64(r.stated_bound),
                fmt_bool(r.within_stated()),
                fmt_f64(r.provable_bound),
                fmt_bool(r.within_provable())
            )?;
        }
        Ok(())
    }
}

/// Builds one curve per size and replicate; replicate `r` of the size at
/// position `p` uses stream index `(p << 32) | r`.
pub fn exhaustion_run(experiment: &IdsExperiment) -> Result<ExhaustionReport> {
    experiment.validate()?;
    let ex = experiment;
    let jobs: Vec<(usize, i64, u64)> = ex
        .sizes
        .iter()
        .enumerate()
        .flat_map(|(p, &l)| (0..ex.samples_per_size as u64).map(move |r| (p, l, ((p as u64) << 32) | r)))
        .collect();
    let curves = jobs
        .par_iter()
        .map(|&(_, l, index)| {
            let spec = LatticeSpec::new(ex.nu, l)?;
            let (_, view) = lattice_box(spec)?;
            let mesh = Mesh::from_policy(&view, &ex.config, &ex.mesh_policy)?;
            let sample = sample_disorder(&ex.config, &view, ex.master_seed, index);
            ids_curve(spec, &ex.config, &sample, &mesh, &ex.lambda_grid)
        })
        .collect::<Result<Vec<IdsCurve>>>()?;

    let reps = ex.samples_per_size;
    let mean_curves: Vec<Vec<f64>> = curves
        .chunks(reps)
        .map(|chunk| {
            (0..ex.lambda_grid.len())
                .map(|i| chunk.iter().map(|c| c.values[i]).sum::<f64>() / reps as f64)
                .collect()
        })
        .collect();

    let mut convergence = Vec::new();
    for k in 1..ex.sizes.len() {
        for (i, &lambda) in ex.lambda_grid.iter().enumerate() {
            convergence.push(ConvergenceRow {
                lambda,
                l_from: ex.sizes[k - 1],
                l_to: ex.sizes[k],
                abs_diff: (mean_curves[k][i] - mean_curves[k - 1][i]).abs(),
            });
        }
    }

    let mut free_limit = Vec::new();
    if ex.nu == 1 && ex.config.is_free() {
        for (k, &l) in ex.sizes.iter().enumerate() {
            for (i, &lambda) in ex.lambda_grid.iter().enumerate() {
                let q = lambda.max(0.0).sqrt() / std::f64::consts::PI;
                let n_l = mean_curves[k][i];
                free_limit.push(FreeLimitRow {
                    l,
                    lambda,
                    n_l,
                    limit: q,
                    abs_diff: (n_l - q).abs(),
                    stated_bound: 3.0 / l as f64,
                    provable_bound: (2.0 * q + 2.0) / l as f64,
                });
            }
        }
    }

    Ok(ExhaustionReport {
        master_seed: ex.master_seed,
        curves,
        convergence,
        free_limit,
    })
}

/// Splits `q` along the given interior cut coordinates of each axis.
pub fn grid_partition(q: &LatticeBox, cuts: &[Vec<i64>]) -> Result<Vec<LatticeBox>> {
    if cuts.len() != q.nu() {
        return Err(Error::BadPartition(format!("{} cut lists for a {}-dimensional box", cuts.len(), q.nu())));
    }
    let mut axes: Vec<Vec<(i64, i64)>> = Vec::new();
    for (i, c) in cuts.iter().enumerate() {
        let mut points = vec![q.lower()[i]];
        let mut sorted = c.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.iter().any(|&x| x <= q.lower()[i] || x >= q.upper()[i]) {
            return Err(Error::BadPartition(format!("cut on axis {i} outside the box interior")));
        }
        points.extend(sorted);
        points.push(q.upper()[i]);
        axes.push(points.windows(2).map(|w| (w[0], w[1])).collect());
    }
    let mut boxes: Vec<(Vec<i64>, Vec<i64>)> = vec![(Vec::new(), Vec::new())];
    for intervals in &axes {
        boxes = boxes
            .into_iter()
            .flat_map(|(lo, hi)| {
                intervals.iter().map(move |&(a, b)| {
                    let mut lo = lo.clone();
                    let mut hi = hi.clone();
                    lo.push(a);
                    hi.push(b);
                    (lo, hi)
                })
            })
            .collect();
    }
    boxes
        .into_iter()
        .map(|(lo, hi)| LatticeBox::new(lo, hi).map_err(Error::from))
        .collect()
}

/// A grid partition with up to `max_cuts` random cuts per axis.
pub fn random_grid_partition<R: Rng>(rng: &mut R, q: &LatticeBox, max_cuts: usize) -> Vec<LatticeBox> {
    let cuts: Vec<Vec<i64>> = (0..q.nu())
        .map(|i| {
            let (a, b) = (q.lower()[i], q.upper()[i]);
            if b - a < 2 {
                return Vec::new();
            }
            let n = rng.random_range(0..=max_cuts);
            (0..n).map(|_| rng.random_range(a + 1..b)).collect()
        })
        .collect();
    grid_partition(q, &cuts).expect("cuts are interior")
}

fn validate_partition(q: &LatticeBox, parts: &[LatticeBox]) -> Result<()> {
    if parts.is_empty() {
        return Err(Error::BadPartition("no sub-boxes".into()));
    }
    for (i, p) in parts.iter().enumerate() {
        if !q.contains_box(p) {
            return Err(Error::BadPartition(format!("{p} is not inside {q}")));
        }
        if let Some(o) = parts[i + 1..].iter().find(|o| p.interiors_overlap(o)) {
            return Err(Error::BadPartition(format!("{p} overlaps {o}")));
        }
    }
    let covered: i64 = parts.iter().map(LatticeBox::volume).sum();
    if covered != q.volume() {
        return Err(Error::BadPartition(format!(
            "sub-boxes cover volume {covered}, box has {}",
            q.volume()
        )));
    }
    Ok(())
}

/// F_Q(λ) with the gap guard applied.
fn guarded_count(
    region: &LatticeBox,
    config: &AlloyConfig,
    sample: &DisorderSample,
    mesh: &Mesh,
    lambda: f64,
) -> Result<usize> {
    let Some(view) = region_view(region)? else {
        return Ok(0);
    };
    let values = eigenvalues_upto(&view, config, sample, mesh, lambda + GAP_GUARD)?;
    if let Some(&near) = values.iter().find(|&&v| (v - lambda).abs() < GAP_GUARD) {
        return Err(Error::GapGuardViolation {
            lambda,
            eigenvalue: near,
            guard: GAP_GUARD,
        });
    }
    Ok(count_leq(&values, lambda))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperadditivityReport {
    pub lambda: f64,
    pub q: LatticeBox,
    pub f_q: usize,
    pub parts: Vec<(LatticeBox, usize)>,
    pub sum: usize,
}

impl SuperadditivityReport {
    pub fn passed(&self) -> bool {
        self.f_q >= self.sum
    }
}

/// Asserts F_Q(λ, ω) ≥ Σ_i F_{Q_i}(λ, ω) with ω restricted to each sub-box.
///
/// `sample` and `mesh` must cover the edges of Λ_Q; every Λ_{Q_i} is a subset.
pub fn check_superadditivity(
    q: &LatticeBox,
    parts: &[LatticeBox],
    config: &AlloyConfig,
    sample: &DisorderSample,
    mesh: &Mesh,
    lambda: f64,
) -> Result<SuperadditivityReport> {
    validate_partition(q, parts)?;
    let f_q = guarded_count(q, config, sample, mesh, lambda)?;
    let parts = parts
        .iter()
        .map(|p| Ok((p.clone(), guarded_count(p, config, sample, mesh, lambda)?)))
        .collect::<Result<Vec<_>>>()?;
    let sum = parts.iter().map(|(_, f)| f).sum();
    let report = SuperadditivityReport {
        lambda,
        q: q.clone(),
        f_q,
        parts,
        sum,
    };
    if !report.passed() {
        return Err(Error::AssertionFailure(format!(
            "superadditivity at λ = {lambda}: F_Q = {f_q} < Σ F_Qi = {sum} for Q = {q}"
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountingBoundReport {
    pub lambda: f64,
    pub count: usize,
    /// |Λ|, the number of edges.
    pub edges: usize,
    pub potential_bound: f64,
    pub n0: usize,
    pub bound: usize,
}

impl CountingBoundReport {
    pub fn passed(&self) -> bool {
        self.count <= self.bound
    }
}

/// Asserts F_Q(λ) ≤ |Λ|·n_0(λ + K) + 4ν·|Λ| with K from `config`.
pub fn check_counting_upper_bound(
    region: &LatticeBox,
    config: &AlloyConfig,
    sample: &DisorderSample,
    mesh: &Mesh,
    lambda: f64,
) -> Result<CountingBoundReport> {
    let k = config.potential_bound();
    let n0 = n0_reference(lambda + k);
    let (count, edges) = match region_view(region)? {
        None => (0, 0),
        Some(view) => (
            count_leq(&eigenvalues_upto(&view, config, sample, mesh, lambda)?, lambda),
            view.edge_count(),
        ),
    };
    let report = CountingBoundReport {
        lambda,
        count,
        edges,
        potential_bound: k,
        n0,
        bound: edges * n0 + 4 * region.nu() * edges,
    };
    if !report.passed() {
        return Err(Error::AssertionFailure(format!(
            "counting bound at λ = {lambda}: F = {count} > {}",
            report.bound
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivarianceReport {
    pub lambda: f64,
    pub shift: Vec<i64>,
    pub count: usize,
    pub shifted_count: usize,
}

impl EquivarianceReport {
    pub fn passed(&self) -> bool {
        self.count == self.shifted_count
    }
}

/// Samples ω on Λ_Q, transports it to Λ_{Q+x} and asserts F_{Q+x} = F_Q.
pub fn check_equivariance(
    region: &LatticeBox,
    config: &AlloyConfig,
    lambda: f64,
    shift: &[i64],
    master_seed: u64,
    mesh_policy: &MeshPolicy,
) -> Result<EquivarianceReport> {
    if shift.len() != region.nu() {
        return Err(Error::InvalidExperiment(format!(
            "shift {shift:?} does not match dimension {}",
            region.nu()
        )));
    }
    let (_, view) = lattice_region(region)?;
    let moved = region.shifted(shift);
    let (_, moved_view) = lattice_region(&moved)?;
    let sample = sample_disorder(config, &view, master_seed, 0);
    let moved_sample = sample.rekeyed(|id| shift_lattice_edge_id(id, shift));
    let mesh = Mesh::from_policy(&view, config, mesh_policy)?;
    let moved_mesh = Mesh::from_policy(&moved_view, config, mesh_policy)?;
    let count = count_leq(&eigenvalues_upto(&view, config, &sample, &mesh, lambda)?, lambda);
    let shifted_count = count_leq(
        &eigenvalues_upto(&moved_view, config, &moved_sample, &moved_mesh, lambda)?,
        lambda,
    );
    let report = EquivarianceReport {
        lambda,
        shift: shift.to_vec(),
        count,
        shifted_count,
    };
    if !report.passed() {
        return Err(Error::AssertionFailure(format!(
            "equivariance under shift {shift:?} at λ = {lambda}: F_Q = {count}, F_(Q+x) = {shifted_count}"
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn free_mesh(spec: LatticeSpec) -> Mesh {
        let (_, view) = lattice_box(spec).unwrap();
        Mesh::uniform(&view, 16)
    }

    #[test]
    fn free_chain_curve() {
        let spec = LatticeSpec::new(1, 12).unwrap();
        let (_, view) = lattice_box(spec).unwrap();
        let cfg = AlloyConfig::free();
        let s = DisorderSample::constant(&view, 0.0);
        let c = ids_curve(spec, &cfg, &s, &free_mesh(spec), &[1.0, 10.0]).unwrap();
        // Interval of length 10: (nπ/10)² ≤ 10 for n ≤ 10.
        assert_eq!(c.counts, vec![3, 10]);
        assert_eq!(c.values[1], 10.0 / 12.0);
        let below = ids_curve(spec, &cfg, &s, &free_mesh(spec), &[0.05]).unwrap();
        assert_eq!(below.counts, vec![0]);
    }

    #[test]
    fn experiment_validation() {
        let ex = IdsExperiment {
            nu: 1,
            sizes: vec![10, 5],
            lambda_grid: vec![1.0],
            config: AlloyConfig::free(),
            master_seed: 0,
            samples_per_size: 1,
            mesh_policy: MeshPolicy::default(),
        };
        assert!(matches!(ex.validate(), Err(Error::InvalidExperiment(_))));
        let ex = IdsExperiment { sizes: vec![2, 5], ..ex };
        assert!(matches!(ex.validate(), Err(Error::InvalidExperiment(_))));
    }

    #[test]
    fn one_dimensional_split() {
        let q = LatticeBox::new(vec![0], vec![10]).unwrap();
        let parts = grid_partition(&q, &[vec![5]]).unwrap();
        let (_, view) = lattice_region(&q).unwrap();
        let cfg = AlloyConfig::free();
        let s = DisorderSample::constant(&view, 0.0);
        let mesh = Mesh::uniform(&view, 16);
        let r = check_superadditivity(&q, &parts, &cfg, &s, &mesh, 10.0).unwrap();
        assert_eq!(r.f_q, 8);
        assert_eq!(r.sum, 6);
        let trivial = check_superadditivity(&q, &[q.clone()], &cfg, &s, &mesh, 10.0).unwrap();
        assert_eq!(trivial.f_q, trivial.sum);
    }

    #[test]
    fn partition_errors() {
        let q = LatticeBox::new(vec![0], vec![10]).unwrap();
        let (_, view) = lattice_region(&q).unwrap();
        let cfg = AlloyConfig::free();
        let s = DisorderSample::constant(&view, 0.0);
        let mesh = Mesh::uniform(&view, 8);
        let overlap = [LatticeBox::new(vec![0], vec![6]).unwrap(), LatticeBox::new(vec![4], vec![10]).unwrap()];
        assert!(matches!(
            check_superadditivity(&q, &overlap, &cfg, &s, &mesh, 10.0),
            Err(Error::BadPartition(_))
        ));
        let short = [LatticeBox::new(vec![0], vec![6]).unwrap()];
        assert!(matches!(
            check_superadditivity(&q, &short, &cfg, &s, &mesh, 10.0),
            Err(Error::BadPartition(_))
        ));
    }

    #[test]
    fn gap_guard_fires_on_an_eigenvalue() {
        let q = LatticeBox::new(vec![0], vec![4]).unwrap();
        let (_, view) = lattice_region(&q).unwrap();
        let cfg = AlloyConfig::free();
        let s = DisorderSample::constant(&view, 0.0);
        let mesh = Mesh::uniform(&view, 8);
        let values = eigenvalues_upto(&view, &cfg, &s, &mesh, 5.0).unwrap();
        let err = check_superadditivity(&q, &[q.clone()], &cfg, &s, &mesh, values[0]).unwrap_err();
        assert!(matches!(err, Error::GapGuardViolation { .. }));
    }

    #[test]
    fn counting_bound_free_chain() {
        let spec = LatticeSpec::new(1, 12).unwrap();
        let (_, view) = lattice_box(spec).unwrap();
        let cfg = AlloyConfig::free();
        let s = DisorderSample::constant(&view, 0.0);
        let r = check_counting_upper_bound(&spec.as_box(), &cfg, &s, &free_mesh(spec), 10.0).unwrap();
        assert_eq!((r.count, r.bound), (10, 50));
        let low = check_counting_upper_bound(&spec.as_box(), &cfg, &s, &free_mesh(spec), 0.01).unwrap();
        assert_eq!(low.count, 0);
    }

    #[test]
    fn equivariance_shifts() {
        let cfg = AlloyConfig::unit_uniform(0.0, 1.0).unwrap();
        let policy = MeshPolicy::with_h_max(0.125);
        let q1 = LatticeBox::cube(1, 8);
        assert!(check_equivariance(&q1, &cfg, 10.3, &[0], 1, &policy).unwrap().passed());
        assert!(check_equivariance(&q1, &cfg, 10.3, &[3], 1, &policy).unwrap().passed());
        let q2 = LatticeBox::cube(2, 5);
        assert!(check_equivariance(&q2, &cfg, 20.3, &[1, 1], 1, &policy).unwrap().passed());
    }

    #[test]
    fn random_partitions_tile() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let q = LatticeBox::cube(2, 9);
        for _ in 0..10 {
            let parts = random_grid_partition(&mut rng, &q, 2);
            validate_partition(&q, &parts).unwrap();
        }
    }
}
