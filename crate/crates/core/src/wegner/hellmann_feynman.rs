//! First-order perturbation check: ∂λ_n/∂ω_e = ⟨ψ_n, u_e ψ_n⟩.
//!
//! The potential enters K linearly, so on the discrete level the identity is
//! exact for simple eigenvalues and a central difference must reproduce it
//! to O(δ²).

use std::io::{self, Write};

use crate::assembly::{assemble_system, AssembledSystem, BoundaryConditionMap, Mesh};
use crate::graph::SubgraphView;
use crate::potential::{AlloyConfig, DisorderSample};
use crate::report::{fmt_bool, fmt_f64};
use crate::spectrum::{region_mass, solve_spectrum, Region, SpectrumRequest};
use crate::{Error, Result};

const REL_TOL: f64 = 1e-3;
/// Relative disagreement between the δ and 2δ differences that marks the
/// difference quotient as unreliable.
const STABILITY_TOL: f64 = 1e-2;
/// Below this the relative error is measured against the floor instead.
const DERIVATIVE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct HfRow {
    /// 1-based eigenvalue index.
    pub n: usize,
    pub lambda: f64,
    pub edge: String,
    pub analytic: f64,
    pub finite_difference: f64,
    pub rel_error: f64,
    pub pass: bool,
}

/// Σ_e ⟨ψ_n, u_e ψ_n⟩ against the support mass ∫_S |ψ_n|².
#[derive(Debug, Clone, PartialEq)]
pub struct HfSumRow {
    pub n: usize,
    pub lambda: f64,
    pub sum: f64,
    pub support_mass: f64,
    /// Σ_e c_−,e ∫_{S_e} |ψ_n|², the lower bound the sum must respect.
    pub lower_bound: f64,
    /// Every u_e is the indicator of S_e, so sum = support mass is asserted.
    pub indicator: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HfReport {
    pub interval: (f64, f64),
    pub rows: Vec<HfRow>,
    pub sums: Vec<HfSumRow>,
    /// Eigenvalues in the interval skipped as numerically degenerate.
    pub skipped: Vec<(usize, f64)>,
}

impl HfReport {
    pub const CSV_HEADER: &'static str = "n,edge,lambda,analytic,finite_difference,rel_error,pass";

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass) && self.sums.iter().all(|s| s.pass)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.rows.iter().map(|r| r.rel_error).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.n,
                r.edge,
                fmt_f64(r.lambda),
                fmt_f64(r.analytic),
                fmt_f64(r.finite_difference),
                fmt_f64(r.rel_error),
                fmt_bool(r.pass)
            )?;
        }
        Ok(())
    }
}

fn eigenvalues(
    view: &SubgraphView,
    config: &AlloyConfig,
    sample: &DisorderSample,
    bc: &BoundaryConditionMap,
    mesh: &Mesh,
) -> Result<Vec<f64>> {
    let system = assemble_system(view, config, sample, bc, mesh)?;
    Ok(solve_spectrum(&system, SpectrumRequest::All, false)?.eigenvalues().to_vec())
}

fn support_mass(system: &AssembledSystem, config: &AlloyConfig, view: &SubgraphView, v: &nalgebra::DVector<f64>) -> Result<Vec<(f64, f64)>> {
    view.edges()
        .map(|edge| {
            let site = config.site_for(edge)?;
            let region = Region::Interval {
                edge: edge.id.clone(),
                from: site.support.0,
                to: site.support.1,
            };
            Ok((region_mass(system, v, &region)?, site.c_minus))
        })
        .collect()
}

/// Compares central differences of every eigenvalue in `interval` with the
/// P1 inner products, without asserting.
///
/// `fd_step` defaults to 10⁻⁵·(ω_+ − ω_−) of each edge's law (10⁻⁵ for a
/// frozen law). Fails with [`Error::FdInstability`] when the δ and 2δ
/// difference quotients disagree.
pub fn hellmann_feynman(
    view: &SubgraphView,
    config: &AlloyConfig,
    sample: &DisorderSample,
    mesh: &Mesh,
    interval: (f64, f64),
    fd_step: Option<f64>,
) -> Result<HfReport> {
    let bc = BoundaryConditionMap::default_for(view);
    let system = assemble_system(view, config, sample, &bc, mesh)?;
    let spectrum = solve_spectrum(&system, SpectrumRequest::All, true)?;
    let indicator = view
        .edges()
        .map(|e| config.site_for(e).map(|s| s.is_support_indicator()))
        .collect::<Result<Vec<bool>, _>>()?
        .into_iter()
        .all(|b| b);

    // Spectra at ω_e ± δ and ω_e ± 2δ for every edge.
    let mut shifted = Vec::new();
    for edge in view.edges() {
        let law = config.law_for(&edge.id);
        let delta = fd_step.unwrap_or_else(|| {
            let width = law.omega_plus() - law.omega_minus();
            if width > 0.0 { 1e-5 * width } else { 1e-5 }
        });
        let omega = sample.get(&edge.id).expect("sample covers the view");
        let at = |d: f64| eigenvalues(view, config, &sample.with_value(&edge.id, omega + d), &bc, mesh);
        shifted.push((delta, [at(delta)?, at(-delta)?, at(2.0 * delta)?, at(-2.0 * delta)?]));
    }

    let mut report = HfReport {
        interval,
        rows: Vec::new(),
        sums: Vec::new(),
        skipped: Vec::new(),
    };
    for (n, &lambda) in spectrum.eigenvalues().iter().enumerate() {
        if lambda < interval.0 || lambda > interval.1 {
            continue;
        }
        if spectrum.is_degenerate(n) {
            report.skipped.push((n + 1, lambda));
            continue;
        }
        let v = spectrum.eigenvector(n)?;
        let mut sum = 0.0;
        for (edge, (delta, [plus, minus, plus2, minus2])) in view.edges().zip(&shifted) {
            let ed = system.edge(&edge.id).expect("assembled edge");
            let analytic = ed.profile_form(&v);
            sum += analytic;
            let fd = (plus[n] - minus[n]) / (2.0 * delta);
            let fd2 = (plus2[n] - minus2[n]) / (4.0 * delta);
            let scale = fd.abs().max(DERIVATIVE_FLOOR);
            if (fd - fd2).abs() > STABILITY_TOL * scale {
                return Err(Error::FdInstability {
                    n: n + 1,
                    edge: edge.id.clone(),
                    detail: format!("δ gives {fd}, 2δ gives {fd2}"),
                });
            }
            let rel_error = (fd - analytic).abs() / analytic.abs().max(DERIVATIVE_FLOOR);
            report.rows.push(HfRow {
                n: n + 1,
                lambda,
                edge: edge.id.clone(),
                analytic,
                finite_difference: fd,
                rel_error,
                pass: rel_error <= REL_TOL,
            });
        }
        let masses = support_mass(&system, config, view, &v)?;
        let support: f64 = masses.iter().map(|(m, _)| m).sum();
        let lower_bound: f64 = masses.iter().map(|(m, c)| m * c).sum();
        let pass = if indicator {
            (sum - support).abs() <= 1e-9 * (1.0 + support)
        } else {
            sum >= lower_bound - 1e-12
        };
        report.sums.push(HfSumRow {
            n: n + 1,
            lambda,
            sum,
            support_mass: support,
            lower_bound,
            indicator,
            pass,
        });
    }
    Ok(report)
}

/// [`hellmann_feynman`] that fails with [`Error::AssertionFailure`] on the first bad row.
pub fn check_hellmann_feynman(
    view: &SubgraphView,
    config: &AlloyConfig,
    sample: &DisorderSample,
    mesh: &Mesh,
    interval: (f64, f64),
    fd_step: Option<f64>,
) -> Result<HfReport> {
    let report = hellmann_feynman(view, config, sample, mesh, interval, fd_step)?;
    if let Some(r) = report.rows.iter().find(|r| !r.pass) {
        return Err(Error::AssertionFailure(format!(
            "Hellmann–Feynman n={} edge {}: finite difference {} vs ⟨ψ, u ψ⟩ = {} (relative error {:e})",
            r.n, r.edge, r.finite_difference, r.analytic, r.rel_error
        )));
    }
    if let Some(s) = report.sums.iter().find(|s| !s.pass) {
        return Err(Error::AssertionFailure(format!(
            "derivative sum n={}: Σ = {} vs support mass {} (lower bound {})",
            s.n, s.sum, s.support_mass, s.lower_bound
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, MetricGraph};
    use crate::potential::{CouplingLaw, SiteTemplate, Sites};
    use crate::wegner::lattice_of_size;
    use std::sync::Arc;

    fn unit_edge() -> SubgraphView {
        Arc::new(MetricGraph::new(["a", "b"], vec![Edge::new("e", "a", "b", 1.0)], 1.0, 1.0).unwrap()).full_view()
    }

    #[test]
    fn full_edge_derivative_is_one() {
        let v = unit_edge();
        let cfg = AlloyConfig::unit_uniform(0.0, 1.0).unwrap();
        let s = DisorderSample::constant(&v, 0.4);
        let r = check_hellmann_feynman(&v, &cfg, &s, &Mesh::uniform(&v, 64), (0.0, 200.0), None).unwrap();
        assert!(!r.rows.is_empty());
        for row in &r.rows {
            assert!((row.analytic - 1.0).abs() < 1e-12);
            assert!((row.finite_difference - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn half_edge_first_mode() {
        let v = unit_edge();
        let cfg = AlloyConfig::new(
            CouplingLaw::uniform(0.0, 1.0).unwrap(),
            Sites::Template(SiteTemplate {
                support: [0.0, 0.5],
                profile: None,
                c_minus: 1.0,
                c_plus: 1.0,
            }),
            0.5,
        );
        let s = DisorderSample::constant(&v, 0.0);
        let r = check_hellmann_feynman(&v, &cfg, &s, &Mesh::uniform(&v, 64), (0.0, 12.0), None).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert!((r.rows[0].analytic - 0.5).abs() < 1e-10);
        assert!(r.sums[0].indicator && r.sums[0].pass);
    }

    #[test]
    fn chain_with_random_couplings() {
        let v = lattice_of_size(1, 4).unwrap();
        let cfg = AlloyConfig::unit_uniform(0.0, 1.0).unwrap();
        let s = crate::potential::sample_disorder(&cfg, &v, 2, 0);
        let mesh = Mesh::uniform(&v, 16);
        let r = check_hellmann_feynman(&v, &cfg, &s, &mesh, (0.0, 40.0), None).unwrap();
        assert!(r.max_rel_error() < 1e-3);
        assert_eq!(r.rows.len(), 4 * r.sums.len());
    }
}
