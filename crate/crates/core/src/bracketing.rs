//! Decoupled comparison operators and the eigenvalue comparison checks.
//!
//! Imposing extra Dirichlet conditions at a vertex shrinks the discrete form
//! domain, extra Neumann decoupling enlarges it. On a shared mesh the three
//! P1 spaces are nested, so min-max gives exact discrete inequalities:
//!
//! - bracketing: λ_n^N ≤ λ_n ≤ λ_n^D;
//! - interlacing: when the Neumann space exceeds the Dirichlet space by a
//!   subspace of dimension r, λ_m^D ≤ λ_{m+r}^N.

use std::fmt;
use std::io::{self, Write};

use crate::assembly::{assemble_system, BoundaryConditionMap, Mesh, VertexCondition};
use crate::graph::SubgraphView;
use crate::potential::{AlloyConfig, DisorderSample};
use crate::report::{fmt_bool, fmt_f64};
use crate::spectrum::{solve_spectrum, SpectrumRequest};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecouplingTarget {
    Vertex(String),
    /// Both endpoints of the edge are decoupled.
    Edge(String),
}

impl fmt::Display for DecouplingTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecouplingTarget::Vertex(v) => write!(f, "vertex:{v}"),
            DecouplingTarget::Edge(e) => write!(f, "edge:{e}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Dirichlet,
    Neumann,
}

impl Flavor {
    fn condition(self) -> VertexCondition {
        match self {
            Flavor::Dirichlet => VertexCondition::DecoupledDirichlet,
            Flavor::Neumann => VertexCondition::DecoupledNeumann,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecouplingPlan {
    pub target: DecouplingTarget,
    pub flavor: Flavor,
}

impl DecouplingPlan {
    pub fn new(target: DecouplingTarget, flavor: Flavor) -> Self {
        Self { target, flavor }
    }
}

fn target_vertices(view: &SubgraphView, target: &DecouplingTarget) -> Result<Vec<String>> {
    match target {
        DecouplingTarget::Vertex(v) if view.contains_vertex(v) => Ok(vec![v.clone()]),
        DecouplingTarget::Edge(e) => {
            let edge = view.edge(e).ok_or_else(|| Error::UnknownTarget(e.clone()))?;
            Ok(vec![edge.iota.clone(), edge.tau.clone()])
        }
        DecouplingTarget::Vertex(v) => Err(Error::UnknownTarget(v.clone())),
    }
}

/// Returns `bc` with the plan's vertices switched to the decoupled flavor.
pub fn apply_decoupling(
    view: &SubgraphView,
    bc: &BoundaryConditionMap,
    plan: &DecouplingPlan,
) -> Result<BoundaryConditionMap> {
    let mut out = bc.clone();
    for v in target_vertices(view, &plan.target)? {
        out.set(v, plan.flavor.condition());
    }
    Ok(out)
}

/// d̃ = deg(ι(e)) + deg(τ(e)) − 2, degrees taken in G_Λ.
pub fn complement_rank(view: &SubgraphView, edge: &str) -> Result<usize> {
    let e = view.edge(edge).ok_or_else(|| Error::UnknownTarget(edge.to_string()))?;
    Ok(view.degree(&e.iota) + view.degree(&e.tau) - 2)
}

fn tolerance(lambda: f64) -> f64 {
    1e-8 * (1.0 + lambda.abs())
}

fn eigenvalues(
    view: &SubgraphView,
    config: &AlloyConfig,
    sample: &DisorderSample,
    bc: &BoundaryConditionMap,
    mesh: &Mesh,
) -> Result<Vec<f64>> {
    let system = assemble_system(view, config, sample, bc, mesh)?;
    Ok(solve_spectrum(&system, SpectrumRequest::All, false)?
        .eigenvalues()
        .to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BracketingRow {
    /// 1-based eigenvalue index.
    pub n: usize,
    pub lambda_neumann: f64,
    pub lambda: f64,
    pub lambda_dirichlet: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BracketingReport {
    pub target: DecouplingTarget,
    pub rows: Vec<BracketingRow>,
}

impl BracketingReport {
    pub const CSV_HEADER: &'static str = "target,n,lambda_N,lambda,lambda_D,pass";

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn first_failure(&self) -> Option<&BracketingRow> {
        self.rows.iter().find(|r| !r.pass)
    }

    pub fn write_rows<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                self.target,
                r.n,
                fmt_f64(r.lambda_neumann),
                fmt_f64(r.lambda),
                fmt_f64(r.lambda_dirichlet),
                fmt_bool(r.pass)
            )?;
        }
        Ok(())
    }
}

/// Computes λ_n^N, λ_n, λ_n^D for `n ≤ k` on the shared mesh without asserting.
///
/// The unperturbed operator uses the default conditions of `view`.
pub fn bracketing_report(
    view: &SubgraphView,
    config: &AlloyConfig,
    sample: &DisorderSample,
    mesh: &Mesh,
    target: &DecouplingTarget,
    k: usize,
) -> Result<BracketingReport> {
    let bc = BoundaryConditionMap::default_for(view);
    let bc_n = apply_decoupling(view, &bc, &DecouplingPlan::new(target.clone(), Flavor::Neumann))?;
    let bc_d = apply_decoupling(view, &bc, &DecouplingPlan::new(target.clone(), Flavor::Dirichlet))?;
    let base = eigenvalues(view, config, sample, &bc, mesh)?;
    let neumann = eigenvalues(view, config, sample, &bc_n, mesh)?;
    let dirichlet = eigenvalues(view, config, sample, &bc_d, mesh)?;
    let count = k.min(dirichlet.len());
    let rows = (0..count)
        .map(|i| {
            let (ln, l, ld) = (neumann[i], base[i], dirichlet[i]);
            BracketingRow {
                n: i + 1,
                lambda_neumann: ln,
                lambda: l,
                lambda_dirichlet: ld,
                pass: ln <= l + tolerance(l) && l <= ld + tolerance(ld),
            }
        })
        .collect();
    Ok(BracketingReport {
        target: target.clone(),
        rows,
    })
}

/// [`bracketing_report`] that fails with [`Error::AssertionFailure`] on the first violation.
pub fn check_bracketing(
    view: &SubgraphView,
    config: &AlloyConfig,
    sample: &DisorderSample,
    mesh: &Mesh,
    target: &DecouplingTarget,
    k: usize,
) -> Result<BracketingReport> {
    let report = bracketing_report(view, config, sample, mesh, target, k)?;
    if let Some(r) = report.first_failure() {
        return Err(Error::AssertionFailure(format!(
            "bracketing at {} n={}: λ^N={} λ={} λ^D={}",
            report.target, r.n, r.lambda_neumann, r.lambda, r.lambda_dirichlet
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Edge,
    Complement,
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Part::Edge => "edge",
            Part::Complement => "complement",
        })
    }
}

/// λ_m^D ≤ λ_{m+rank}^N for one direct summand.
#[derive(Debug, Clone, PartialEq)]
pub struct InterlacingRow {
    pub part: Part,
    pub m: usize,
    pub lambda_dirichlet: f64,
    pub lambda_shifted_neumann: f64,
    pub rank: usize,
    pub pass: bool,
}

/// The converse ordering λ_m^N ≤ λ_m^D for one direct summand.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverseRow {
    pub part: Part,
    pub m: usize,
    pub lambda_neumann: f64,
    pub lambda_dirichlet: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterlacingReport {
    pub edge: String,
    pub complement_rank: usize,
    pub rows: Vec<InterlacingRow>,
    pub converse: Vec<ConverseRow>,
    /// Largest relative gap between the decoupled whole-view spectrum and the
    /// sorted merge of the summand spectra, over both flavors.
    pub direct_sum_deviation: f64,
}

impl InterlacingReport {
    pub const CSV_HEADER: &'static str = "target,part,m,lambda_D,lambda_shifted_N,rank,pass";

    pub fn direct_sum_ok(&self) -> bool {
        self.direct_sum_deviation <= 1e-8
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass) && self.converse.iter().all(|r| r.pass) && self.direct_sum_ok()
    }

    pub fn write_rows<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for r in &self.rows {
            writeln!(
                out,
                "edge:{},{},{},{},{},{},{}",
                self.edge,
                r.part,
                r.m,
                fmt_f64(r.lambda_dirichlet),
                fmt_f64(r.lambda_shifted_neumann),
                r.rank,
                fmt_bool(r.pass)
            )?;
        }
        Ok(())
    }
}

fn merged(mut a: Vec<f64>, b: &[f64]) -> Vec<f64> {
    a.extend_from_slice(b);
    a.sort_by(f64::total_cmp);
    a
}

fn max_relative_gap(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / (1.0 + x.abs()))
        .fold(0.0, f64::max)
}

fn shift_rows(part: Part, dirichlet: &[f64], neumann: &[f64], rank: usize, k: usize) -> Vec<InterlacingRow> {
    (0..k.min(dirichlet.len()))
        .filter(|&i| i + rank < neumann.len())
        .map(|i| {
            let (ld, ln) = (dirichlet[i], neumann[i + rank]);
            InterlacingRow {
                part,
                m: i + 1,
                lambda_dirichlet: ld,
                lambda_shifted_neumann: ln,
                rank,
                pass: ld <= ln + tolerance(ln),
            }
        })
        .collect()
}

fn converse_rows(part: Part, dirichlet: &[f64], neumann: &[f64], k: usize) -> Vec<ConverseRow> {
    (0..k.min(dirichlet.len()).min(neumann.len()))
        .map(|i| ConverseRow {
            part,
            m: i + 1,
            lambda_neumann: neumann[i],
            lambda_dirichlet: dirichlet[i],
            pass: neumann[i] <= dirichlet[i] + tolerance(dirichlet[i]),
        })
        .collect()
}

/// Decouples `edge` from the rest of Λ with Dirichlet and with Neumann
/// conditions and compares the summands' spectra, without asserting.
pub fn interlacing_report(
    view: &SubgraphView,
    config: &AlloyConfig,
    sample: &DisorderSample,
    mesh: &Mesh,
    edge: &str,
    k: usize,
) -> Result<InterlacingReport> {
    let rank_c = complement_rank(view, edge)?;
    let bc = BoundaryConditionMap::default_for(view);
    let target = DecouplingTarget::Edge(edge.to_string());
    let bc_d = apply_decoupling(view, &bc, &DecouplingPlan::new(target.clone(), Flavor::Dirichlet))?;
    let bc_n = apply_decoupling(view, &bc, &DecouplingPlan::new(target, Flavor::Neumann))?;

    let edge_view = view.restrict([edge])?;
    let others: Vec<String> = view.lambda().iter().filter(|id| *id != edge).cloned().collect();
    let complement_view = if others.is_empty() {
        None
    } else {
        Some(view.restrict(others)?)
    };

    let solve = |v: &SubgraphView, b: &BoundaryConditionMap| eigenvalues(v, config, sample, b, mesh);
    let edge_d = solve(&edge_view, &bc_d)?;
    let edge_n = solve(&edge_view, &bc_n)?;
    let (comp_d, comp_n) = match &complement_view {
        Some(cv) => (solve(cv, &bc_d)?, solve(cv, &bc_n)?),
        None => (Vec::new(), Vec::new()),
    };

    let whole_d = solve(view, &bc_d)?;
    let whole_n = solve(view, &bc_n)?;
    let direct_sum_deviation = max_relative_gap(&whole_d, &merged(edge_d.clone(), &comp_d))
        .max(max_relative_gap(&whole_n, &merged(edge_n.clone(), &comp_n)));

    let mut rows = shift_rows(Part::Edge, &edge_d, &edge_n, 2, k);
    rows.extend(shift_rows(Part::Complement, &comp_d, &comp_n, rank_c, k));
    let mut converse = converse_rows(Part::Edge, &edge_d, &edge_n, k);
    converse.extend(converse_rows(Part::Complement, &comp_d, &comp_n, k));

    Ok(InterlacingReport {
        edge: edge.to_string(),
        complement_rank: rank_c,
        rows,
        converse,
        direct_sum_deviation,
    })
}

/// [`interlacing_report`] that fails with [`Error::AssertionFailure`] on any violation.
pub fn check_interlacing(
    view: &SubgraphView,
    config: &AlloyConfig,
    sample: &DisorderSample,
    mesh: &Mesh,
    edge: &str,
    k: usize,
) -> Result<InterlacingReport> {
    let report = interlacing_report(view, config, sample, mesh, edge, k)?;
    if let Some(r) = report.rows.iter().find(|r| !r.pass) {
        return Err(Error::AssertionFailure(format!(
            "interlacing on edge {} ({}) m={}: λ^D={} > λ^N_(m+{})={}",
            report.edge, r.part, r.m, r.lambda_dirichlet, r.rank, r.lambda_shifted_neumann
        )));
    }
    if let Some(r) = report.converse.iter().find(|r| !r.pass) {
        return Err(Error::AssertionFailure(format!(
            "form-domain ordering on edge {} ({}) m={}: λ^N={} > λ^D={}",
            report.edge, r.part, r.m, r.lambda_neumann, r.lambda_dirichlet
        )));
    }
    if !report.direct_sum_ok() {
        return Err(Error::AssertionFailure(format!(
            "direct-sum mismatch on edge {}: deviation {:e}",
            report.edge, report.direct_sum_deviation
        )));
    }
    Ok(report)
}
