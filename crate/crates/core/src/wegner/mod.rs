//! Monte Carlo estimates of E tr χ_[λ−ε, λ+ε](H_Λ(ω)) and the per-eigenfunction
//! diagnostics behind the Wegner estimate.

pub mod continuation;
pub mod hellmann_feynman;

use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::assembly::{assemble_system, BoundaryConditionMap, Mesh, MeshPolicy};
use crate::graph::{lattice_box, LatticeSpec, MetricGraph, SubgraphView};
use crate::potential::{sample_disorder, AlloyConfig};
use crate::report::{fmt_bool, fmt_f64};
use crate::spectrum::{count_eigenvalues, solve_spectrum, CountMode, SpectrumRequest};
use crate::stats::{line_fit, mean_stderr, LineFit};
use crate::{Error, Result};

pub use continuation::{check_uniformity, unique_continuation_report, UcReport, UcRow, UniformityReport};
pub use hellmann_feynman::{check_hellmann_feynman, hellmann_feynman, HfReport, HfRow, HfSumRow};

/// The ν-dimensional lattice region with `s` unit edges along each axis.
///
/// For ν = 1 this is the chain of `s` unit edges with Dirichlet ends.
pub fn lattice_of_size(nu: usize, s: usize) -> Result<SubgraphView> {
    let (_, view) = lattice_box(LatticeSpec::new(nu, s as i64 + 2)?)?;
    Ok(view)
}

/// The family of finite graphs a scan runs over.
#[derive(Debug, Clone)]
pub enum Geometry {
    Graph(Arc<MetricGraph>),
    /// Lattice regions with `s` edges per axis for each `s` in `sizes`.
    Lattice { nu: usize, sizes: Vec<usize> },
}

impl Geometry {
    pub fn chains(sizes: &[usize]) -> Self {
        Geometry::Lattice {
            nu: 1,
            sizes: sizes.to_vec(),
        }
    }

    pub fn views(&self) -> Result<Vec<SubgraphView>> {
        match self {
            Geometry::Graph(g) => Ok(vec![g.full_view()]),
            Geometry::Lattice { nu, sizes } => sizes.iter().map(|&s| lattice_of_size(*nu, s)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WegnerExperiment {
    pub geometry: Geometry,
    pub config: AlloyConfig,
    /// Energy centers; the usual scan has one.
    pub lambdas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub n_samples: usize,
    pub master_seed: u64,
    pub mesh_policy: MeshPolicy,
}

impl WegnerExperiment {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() || self.lambdas.is_empty() {
            return Err(Error::InvalidExperiment("empty ε or λ list".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::InvalidExperiment(format!("ε = {e} outside [0, 1]")));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !l.is_finite()) {
            return Err(Error::InvalidExperiment(format!("λ = {l} is not finite")));
        }
        if self.n_samples < 100 {
            return Err(Error::InvalidExperiment(format!(
                "n_samples = {} < 100",
                self.n_samples
            )));
        }
        for view in self.geometry.views()? {
            self.config.validate(&view).into_result()?;
        }
        Ok(())
    }
}

/// Number of eigenvalues in the closed window [λ−ε, λ+ε] for every
/// `(λ, ε)` pair, lambdas outer, from a single solve.
pub fn interval_counts(
    view: &SubgraphView,
    config: &AlloyConfig,
    mesh: &Mesh,
    master_seed: u64,
    index: u64,
    lambdas: &[f64],
    epsilons: &[f64],
) -> Result<Vec<usize>> {
    let sample = sample_disorder(config, view, master_seed, index);
    let bc = BoundaryConditionMap::default_for(view);
    let system = assemble_system(view, config, &sample, &bc, mesh)?;
    let top = lambdas
        .iter()
        .flat_map(|l| epsilons.iter().map(move |e| l + e))
        .fold(f64::NEG_INFINITY, f64::max);
    let spectrum = solve_spectrum(&system, SpectrumRequest::UpTo(top), false)?;
    let mut out = Vec::with_capacity(lambdas.len() * epsilons.len());
    for &l in lambdas {
        for &e in epsilons {
            let upper = count_eigenvalues(&spectrum, l + e, CountMode::Leq)?;
            let lower = count_eigenvalues(&spectrum, l - e, CountMode::Lt)?;
            out.push(upper.saturating_sub(lower));
        }
    }
    Ok(out)
}

/// Per-sample interval counts for sample indices `0..n_samples`, in index order.
fn sample_counts(
    view: &SubgraphView,
    config: &AlloyConfig,
    mesh: &Mesh,
    master_seed: u64,
    stream_base: u64,
    n_samples: usize,
    lambdas: &[f64],
    epsilons: &[f64],
) -> Result<Vec<Vec<usize>>> {
    (0..n_samples as u64)
        .into_par_iter()
        .map(|i| interval_counts(view, config, mesh, master_seed, stream_base | i, lambdas, epsilons))
        .collect()
}

/// Sample mean and standard error of the interval count over `n_samples`
/// disorder samples with indices `0..n_samples`.
pub fn expected_count(
    view: &SubgraphView,
    config: &AlloyConfig,
    mesh: &Mesh,
    lambda: f64,
    epsilon: f64,
    n_samples: usize,
    master_seed: u64,
) -> Result<(f64, f64)> {
    let counts = sample_counts(view, config, mesh, master_seed, 0, n_samples, &[lambda], &[epsilon])?;
    let values: Vec<f64> = counts.iter().map(|c| c[0] as f64).collect();
    Ok(mean_stderr(&values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WegnerCell {
    /// ♯Λ, the number of edges.
    pub size: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub n_samples: usize,
    pub mean: f64,
    pub stderr: f64,
    /// mean / (ε·♯Λ); NaN at ε = 0.
    pub ratio: f64,
    pub ratio_stderr: f64,
    pub counts: Vec<u32>,
}

/// A line fit at fixed `(λ, key)` where `key` is ♯Λ or ε depending on the family.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyedFit {
    pub lambda: f64,
    pub key: f64,
    pub fit: LineFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WegnerReport {
    pub master_seed: u64,
    pub cells: Vec<WegnerCell>,
    /// max over the grid of mean/(ε·♯Λ).
    pub c_hat: f64,
    /// Inverse-variance weighted mean of the ratios.
    pub pooled_ratio: f64,
    /// mean vs ε at fixed ♯Λ (key = ♯Λ).
    pub epsilon_fits: Vec<KeyedFit>,
    /// mean vs ♯Λ at fixed ε (key = ε).
    pub volume_fits: Vec<KeyedFit>,
    /// mean/(ε·♯Λ) vs ♯Λ at fixed ε (key = ε), weighted by the ratio errors.
    pub size_trends: Vec<KeyedFit>,
}

impl WegnerReport {
    pub const CSV_HEADER: &'static str = "size,epsilon,lambda,n_samples,mean,stderr,ratio,ratio_stderr";

    fn ratio_cells(&self) -> impl Iterator<Item = &WegnerCell> {
        self.cells.iter().filter(|c| c.epsilon > 0.0)
    }

    /// Cells whose ratio lies more than `k` standard errors from the pooled ratio.
    pub fn off_constant(&self, k: f64) -> Vec<&WegnerCell> {
        self.ratio_cells()
            .filter(|c| (c.ratio - self.pooled_ratio).abs() > k * c.ratio_stderr)
            .collect()
    }

    pub fn constant_within(&self, k: f64) -> bool {
        self.off_constant(k).is_empty()
    }

    /// Whether the mean count is non-decreasing in ε at every fixed (♯Λ, λ).
    pub fn monotone_in_epsilon(&self) -> bool {
        self.cells.iter().all(|a| {
            self.cells.iter().all(|b| {
                a.size != b.size || a.lambda != b.lambda || a.epsilon >= b.epsilon || a.mean <= b.mean
            })
        })
    }

    /// Whether every size-trend slope is within `k` standard errors of 0.
    pub fn no_size_trend(&self, k: f64) -> bool {
        self.size_trends.iter().all(|t| t.fit.slope_z().abs() <= k)
    }

    /// mean(ε)/mean(2ε) with its delta-method standard error, for every pair
    /// on the grid where 2ε is also present and mean(2ε) > 0.
    pub fn halving_ratios(&self) -> Vec<(usize, f64, f64, f64)> {
        let mut out = Vec::new();
        for a in &self.cells {
            let partner = self.cells.iter().find(|b| {
                b.size == a.size && b.lambda == a.lambda && (b.epsilon - 2.0 * a.epsilon).abs() < 1e-12
            });
            if let Some(b) = partner.filter(|b| b.mean > 0.0 && a.epsilon > 0.0) {
                let q = a.mean / b.mean;
                let rel_a = if a.mean > 0.0 { a.stderr / a.mean } else { 0.0 };
                let se = q * (rel_a.powi(2) + (b.stderr / b.mean).powi(2)).sqrt();
                out.push((a.size, a.epsilon, q, se));
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.size,
                fmt_f64(c.epsilon),
                fmt_f64(c.lambda),
                c.n_samples,
                fmt_f64(c.mean),
                fmt_f64(c.stderr),
                fmt_f64(c.ratio),
                fmt_f64(c.ratio_stderr)
            )?;
        }
        Ok(())
    }

    /// One row per fit: `family,lambda,key,slope,slope_stderr,intercept,r_squared,within_2sigma`.
    pub fn write_fits_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "family,lambda,key,slope,slope_stderr,intercept,r_squared,slope_within_2sigma")?;
        let families = [
            ("mean_vs_epsilon", &self.epsilon_fits),
            ("mean_vs_size", &self.volume_fits),
            ("ratio_vs_size", &self.size_trends),
        ];
        for (name, fits) in families {
            for f in fits {
                writeln!(
                    out,
                    "{name},{},{},{},{},{},{},{}",
                    fmt_f64(f.lambda),
                    fmt_f64(f.key),
                    fmt_f64(f.fit.slope),
                    fmt_f64(f.fit.slope_stderr),
                    fmt_f64(f.fit.intercept),
                    fmt_f64(f.fit.r_squared),
                    fmt_bool(f.fit.slope_z().abs() <= 2.0)
                )?;
            }
        }
        Ok(())
    }
}

fn make_cell(size: usize, lambda: f64, epsilon: f64, counts: Vec<u32>) -> WegnerCell {
    let values: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let (mean, stderr) = mean_stderr(&values);
    let scale = epsilon * size as f64;
    let (ratio, ratio_stderr) = if scale > 0.0 {
        (mean / scale, stderr / scale)
    } else {
        (f64::NAN, f64::NAN)
    };
    WegnerCell {
        size,
        epsilon,
        lambda,
        n_samples: counts.len(),
        mean,
        stderr,
        ratio,
        ratio_stderr,
        counts,
    }
}

/// Runs the full (size, λ, ε) grid.
///
/// Each disorder sample is solved once and counted in every window, so
/// the means are exactly monotone in ε. Samples of the size at position `p`
/// use stream indices `(p << 32) | i`.
pub fn wegner_scan(experiment: &WegnerExperiment) -> Result<WegnerReport> {
    experiment.validate()?;
    let ex = experiment;
    let mut cells = Vec::new();
    for (pos, view) in ex.geometry.views()?.iter().enumerate() {
        let mesh = Mesh::from_policy(view, &ex.config, &ex.mesh_policy)?;
        let per_sample = sample_counts(
            view,
            &ex.config,
            &mesh,
            ex.master_seed,
            (pos as u64) << 32,
            ex.n_samples,
            &ex.lambdas,
            &ex.epsilons,
        )?;
        let size = view.edge_count();
        for (li, &lambda) in ex.lambdas.iter().enumerate() {
            for (ei, &epsilon) in ex.epsilons.iter().enumerate() {
                let slot = li * ex.epsilons.len() + ei;
                let counts = per_sample.iter().map(|c| c[slot] as u32).collect();
                cells.push(make_cell(size, lambda, epsilon, counts));
            }
        }
    }
    Ok(summarize(ex.master_seed, cells))
}

fn summarize(master_seed: u64, cells: Vec<WegnerCell>) -> WegnerReport {
    let ratio_cells: Vec<&WegnerCell> = cells.iter().filter(|c| c.epsilon > 0.0).collect();
    let c_hat = ratio_cells.iter().map(|c| c.ratio).fold(0.0, f64::max);
    let (mut wsum, mut wr) = (0.0, 0.0);
    for c in &ratio_cells {
        if c.ratio_stderr > 0.0 {
            let w = c.ratio_stderr.powi(-2);
            wsum += w;
            wr += w * c.ratio;
        }
    }
    let pooled_ratio = if wsum > 0.0 {
        wr / wsum
    } else {
        ratio_cells.iter().map(|c| c.ratio).sum::<f64>() / ratio_cells.len().max(1) as f64
    };

    let mut sizes: Vec<usize> = cells.iter().map(|c| c.size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut lambdas: Vec<f64> = cells.iter().map(|c| c.lambda).collect();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let mut epsilons: Vec<f64> = ratio_cells.iter().map(|c| c.epsilon).collect();
    epsilons.sort_by(f64::total_cmp);
    epsilons.dedup();

    let fit_of = |sel: Vec<&WegnerCell>, x: fn(&WegnerCell) -> f64, y: fn(&WegnerCell) -> (f64, f64)| {
        let xs: Vec<f64> = sel.iter().map(|c| x(c)).collect();
        let (ys, es): (Vec<f64>, Vec<f64>) = sel.iter().map(|c| y(c)).unzip();
        line_fit(&xs, &ys, Some(&es))
    };

    let mut epsilon_fits = Vec::new();
    let mut volume_fits = Vec::new();
    let mut size_trends = Vec::new();
    for &lambda in &lambdas {
        for &size in &sizes {
            let sel: Vec<&WegnerCell> = cells
                .iter()
                .filter(|c| c.size == size && c.lambda == lambda)
                .collect();
            if sel.len() >= 2 {
                let fit = fit_of(sel, |c| c.epsilon, |c| (c.mean, c.stderr));
                epsilon_fits.push(KeyedFit { lambda, key: size as f64, fit });
            }
        }
        for &epsilon in &epsilons {
            let sel: Vec<&WegnerCell> = cells
                .iter()
                .filter(|c| c.epsilon == epsilon && c.lambda == lambda)
                .collect();
            if sel.len() >= 2 {
                let fit = fit_of(sel.clone(), |c| c.size as f64, |c| (c.mean, c.stderr));
                volume_fits.push(KeyedFit { lambda, key: epsilon, fit });
                let fit = fit_of(sel, |c| c.size as f64, |c| (c.ratio, c.ratio_stderr));
                size_trends.push(KeyedFit { lambda, key: epsilon, fit });
            }
        }
    }

    WegnerReport {
        master_seed,
        cells,
        c_hat,
        pooled_ratio,
        epsilon_fits,
        volume_fits,
        size_trends,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{CouplingLaw, PotentialError, SiteTemplate, Sites};

    fn chain_experiment(sizes: &[usize], omega_plus: f64, n: usize) -> WegnerExperiment {
        WegnerExperiment {
            geometry: Geometry::chains(sizes),
            config: AlloyConfig::unit_uniform(0.0, omega_plus).unwrap(),
            lambdas: vec![10.0],
            epsilons: vec![0.05, 0.1, 0.2],
            n_samples: n,
            master_seed: 1,
            mesh_policy: MeshPolicy::with_h_max(0.125),
        }
    }

    #[test]
    fn zero_width_window_is_empty() {
        let view = lattice_of_size(1, 4).unwrap();
        let cfg = AlloyConfig::unit_uniform(0.0, 1.0).unwrap();
        let mesh = Mesh::from_policy(&view, &cfg, &MeshPolicy::default()).unwrap();
        let (mean, se) = expected_count(&view, &cfg, &mesh, 10.0, 0.0, 100, 3).unwrap();
        assert_eq!((mean, se), (0.0, 0.0));
    }

    #[test]
    fn frozen_law_is_deterministic() {
        let view = lattice_of_size(1, 4).unwrap();
        let cfg = AlloyConfig::unit_uniform(0.0, 1.0)
            .unwrap()
            .with_law(CouplingLaw::frozen(0.5));
        let mesh = Mesh::from_policy(&view, &cfg, &MeshPolicy::default()).unwrap();
        let (mean, se) = expected_count(&view, &cfg, &mesh, 3.0, 1.0, 100, 3).unwrap();
        // Chain of 4 unit edges: −d²/dx² + 0.5 on (0, 4) has (nπ/4)² + 0.5 = 1.12, 2.97, 6.05, …
        assert_eq!(mean, 1.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn rejects_bad_experiments() {
        let mut ex = chain_experiment(&[4], 1.0, 100);
        ex.epsilons = vec![1.5];
        assert!(matches!(ex.validate(), Err(Error::InvalidExperiment(_))));
        let mut ex = chain_experiment(&[4], 1.0, 99);
        assert!(matches!(ex.validate(), Err(Error::InvalidExperiment(_))));
        ex.n_samples = 100;
        ex.config = AlloyConfig::new(
            CouplingLaw::uniform(0.0, 1.0).unwrap(),
            Sites::Template(SiteTemplate {
                support: [0.0, 1.0],
                profile: None,
                c_minus: 0.0,
                c_plus: 1.0,
            }),
            0.0,
        );
        assert!(matches!(
            wegner_scan(&ex),
            Err(Error::Potential(PotentialError::Invalid(_)))
        ));
    }

    #[test]
    fn scan_is_deterministic_and_monotone() {
        let ex = chain_experiment(&[4, 8], 10.0, 120);
        let a = wegner_scan(&ex).unwrap();
        let b = wegner_scan(&ex).unwrap();
        assert_eq!(a, b);
        assert!(a.monotone_in_epsilon());
        assert!(a.cells.iter().all(|c| c.mean >= 0.0 && c.stderr >= 0.0));
        assert_eq!(a.cells.len(), 6);
        assert_eq!(a.size_trends.len(), 3);
        assert!(a.c_hat >= a.pooled_ratio);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 7);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let ex = chain_experiment(&[6], 10.0, 100);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| wegner_scan(&ex)).unwrap();
        let b = four.install(|| wegner_scan(&ex)).unwrap();
        assert_eq!(a, b);
    }
}
