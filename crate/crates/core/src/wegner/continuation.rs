//! Per-edge unique continuation: r_{n,e} = ∫_{S_e}|ψ_n|² / ∫_e|ψ_n|².

use std::io::{self, Write};

use crate::assembly::{assemble_system, AssembledSystem, BoundaryConditionMap, Mesh};
use crate::graph::SubgraphView;
use crate::potential::{AlloyConfig, DisorderSample};
use crate::report::{fmt_bool, fmt_f64};
use crate::spectrum::{region_mass, solve_spectrum, Region, Spectrum, SpectrumRequest};
use crate::{Error, Result};

/// Sobolev-type constant in the Gronwall diagnostic when none is given.
pub const DEFAULT_C3: f64 = 2.0;
/// Edges carrying less eigenfunction mass than this are left out.
const EDGE_MASS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct UcRow {
    pub n: usize,
    pub lambda: f64,
    pub edge: String,
    pub support_mass: f64,
    pub edge_mass: f64,
    pub ratio: f64,
    /// e^{−C₄ l_e}·|S_e|/l_e with C₄ = 2(C₃ + ‖W − λ_n‖_∞ on e).
    pub gronwall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UcReport {
    pub interval: (f64, f64),
    pub c3: f64,
    pub rows: Vec<UcRow>,
    pub skipped: Vec<(usize, f64)>,
}

impl UcReport {
    pub const CSV_HEADER: &'static str = "n,edge,lambda,support_mass,edge_mass,ratio,gronwall_bound,above_gronwall";

    /// The row attaining the smallest ratio.
    pub fn min_row(&self) -> Option<&UcRow> {
        self.rows.iter().min_by(|a, b| a.ratio.total_cmp(&b.ratio))
    }

    pub fn min_ratio(&self) -> Option<f64> {
        self.min_row().map(|r| r.ratio)
    }

    /// Whether every ratio respects its Gronwall prediction.
    pub fn above_gronwall(&self) -> bool {
        self.rows.iter().all(|r| r.ratio >= r.gronwall)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.n,
                r.edge,
                fmt_f64(r.lambda),
                fmt_f64(r.support_mass),
                fmt_f64(r.edge_mass),
                fmt_f64(r.ratio),
                fmt_f64(r.gronwall),
                fmt_bool(r.ratio >= r.gronwall)
            )?;
        }
        Ok(())
    }
}

/// Ratios for a solved system; `spectrum` must carry eigenvectors.
pub fn uc_rows(
    view: &SubgraphView,
    config: &AlloyConfig,
    sample: &DisorderSample,
    system: &AssembledSystem,
    spectrum: &Spectrum,
    interval: (f64, f64),
    c3: f64,
) -> Result<UcReport> {
    let mut report = UcReport {
        interval,
        c3,
        rows: Vec::new(),
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
        for edge in view.edges() {
            let edge_mass = region_mass(system, &v, &Region::Edge(edge.id.clone()))?;
            if edge_mass <= EDGE_MASS_FLOOR {
                continue;
            }
            let site = config.site_for(edge)?;
            let (a, b) = site.support;
            let support_mass = region_mass(
                system,
                &v,
                &Region::Interval {
                    edge: edge.id.clone(),
                    from: a,
                    to: b,
                },
            )?;
            let omega = sample.get(&edge.id).unwrap_or(0.0);
            let (w_lo, w_hi) = {
                let x = omega * site.profile.min_value();
                let y = omega * site.profile.max_value();
                (x.min(y), x.max(y))
            };
            let sup = (w_hi - lambda).abs().max((w_lo - lambda).abs());
            let c4 = 2.0 * (c3 + sup);
            report.rows.push(UcRow {
                n: n + 1,
                lambda,
                edge: edge.id.clone(),
                support_mass,
                edge_mass,
                ratio: support_mass / edge_mass,
                gronwall: (-c4 * edge.length).exp() * (b - a) / edge.length,
            });
        }
    }
    Ok(report)
}

/// Solves with eigenvectors and reports r_{n,e} for every λ_n in `interval`.
pub fn unique_continuation_report(
    view: &SubgraphView,
    config: &AlloyConfig,
    sample: &DisorderSample,
    mesh: &Mesh,
    interval: (f64, f64),
    c3: f64,
) -> Result<UcReport> {
    let bc = BoundaryConditionMap::default_for(view);
    let system = assemble_system(view, config, sample, &bc, mesh)?;
    let spectrum = solve_spectrum(&system, SpectrumRequest::UpTo(interval.1), true)?;
    uc_rows(view, config, sample, &system, &spectrum, interval, c3)
}

/// Minimum ratio per instance compared with the first (smallest) one.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformityReport {
    pub baseline: f64,
    /// `(label, min ratio, passes)` per instance, the baseline included.
    pub entries: Vec<(usize, f64, bool)>,
}

impl UniformityReport {
    pub fn passed(&self) -> bool {
        self.baseline > 0.0 && self.entries.iter().all(|e| e.2)
    }
}

/// Asserts that the minimum ratio stays positive and never drops below half
/// its value on the first instance.
pub fn check_uniformity(reports: &[(usize, &UcReport)]) -> Result<UniformityReport> {
    let Some((_, first)) = reports.first() else {
        return Err(Error::InvalidExperiment("no instances".into()));
    };
    let baseline = first
        .min_ratio()
        .ok_or_else(|| Error::InvalidExperiment("baseline instance has no eigenfunctions in the interval".into()))?;
    let entries: Vec<(usize, f64, bool)> = reports
        .iter()
        .map(|(label, r)| {
            let m = r.min_ratio().unwrap_or(f64::NAN);
            (*label, m, m >= 0.5 * baseline)
        })
        .collect();
    let out = UniformityReport { baseline, entries };
    if baseline <= 0.0 {
        return Err(Error::AssertionFailure(format!("baseline minimum ratio {baseline} is not positive")));
    }
    if let Some(bad) = out.entries.iter().find(|e| !e.2) {
        return Err(Error::AssertionFailure(format!(
            "minimum ratio {} at size {} is below half the baseline {}",
            bad.1, bad.0, baseline
        )));
    }
    Ok(out)
}
