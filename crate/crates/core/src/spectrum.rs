//! Dense solution of the generalized symmetric eigenproblem K v = λ M v.
//!
//! The pencil is reduced to standard form with the Cholesky factor of M,
//! C = L⁻¹ K L⁻ᵀ, and C is diagonalized by the symmetric QR algorithm.
//! Eigenvectors are mapped back as v = L⁻ᵀ y, which makes them M-orthonormal.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::assembly::AssembledSystem;
use crate::report::fmt_f64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    #[error("eigensolver failed: {0}")]
    SolverFailure(String),
    #[error("system dimension {dimension} exceeds the cap {cap}")]
    DimensionTooLarge { dimension: usize, cap: usize },
    #[error("threshold {threshold} lies above the resolved range (complete up to {resolved})")]
    IncompleteSpectrum { threshold: f64, resolved: f64 },
    #[error("spectrum was solved without eigenvectors")]
    NoVectors,
    #[error("eigenvalue index {index} out of range ({count} computed)")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("region on edge `{edge}` is not aligned with the mesh: {detail}")]
    RegionMisaligned { edge: String, detail: String },
}

/// Which part of the spectrum to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectrumRequest {
    /// The `k` lowest eigenvalues.
    Lowest(usize),
    /// Every eigenvalue `<= lambda_max`.
    UpTo(f64),
    All,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub dimension_cap: usize,
    /// Bound on ‖Kv − λMv‖ / (max(1, |λ|)·‖v‖_M) for retained vectors.
    pub residual_tol: f64,
    /// Relative gap below which neighbouring eigenvalues count as one cluster.
    pub cluster_gap: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            dimension_cap: 6000,
            residual_tol: 1e-8,
            cluster_gap: 1e-7,
        }
    }
}

/// Comparison used when counting eigenvalues against a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountMode {
    #[default]
    Leq,
    Lt,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: Option<DMatrix<f64>>,
    residuals: Option<Vec<f64>>,
    degenerate: Vec<bool>,
    resolved_upto: f64,
    options: SolverOptions,
}

impl Spectrum {
    /// Ascending eigenvalues with multiplicity.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// M-orthonormal eigenvectors as columns, if retained.
    pub fn eigenvectors(&self) -> Option<&DMatrix<f64>> {
        self.eigenvectors.as_ref()
    }

    pub fn eigenvector(&self, n: usize) -> Result<DVector<f64>, SpectrumError> {
        let vecs = self.eigenvectors.as_ref().ok_or(SpectrumError::NoVectors)?;
        if n >= self.len() {
            return Err(SpectrumError::IndexOutOfRange {
                index: n,
                count: self.len(),
            });
        }
        Ok(vecs.column(n).into_owned())
    }

    pub fn residuals(&self) -> Option<&[f64]> {
        self.residuals.as_deref()
    }

    /// Whether eigenvalue `n` sits in a numerically degenerate cluster.
    pub fn is_degenerate(&self, n: usize) -> bool {
        self.degenerate.get(n).copied().unwrap_or(false)
    }

    /// Every eigenvalue `<=` this value is present.
    pub fn resolved_upto(&self) -> f64 {
        self.resolved_upto
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    /// Writes `n, lambda, residual` rows (n is 1-based).
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "n,lambda,residual")?;
        for (i, lam) in self.eigenvalues.iter().enumerate() {
            let res = self.residuals.as_ref().map_or(f64::NAN, |r| r[i]);
            writeln!(out, "{},{},{}", i + 1, fmt_f64(*lam), fmt_f64(res))?;
        }
        Ok(())
    }

    /// Writes nodal values of the retained eigenvectors keyed by `(edge, x)`.
    pub fn write_vectors_csv<W: Write>(&self, system: &AssembledSystem, out: &mut W) -> io::Result<()> {
        let vecs = self
            .eigenvectors
            .as_ref()
            .ok_or_else(|| io::Error::other("spectrum has no eigenvectors"))?;
        let header: Vec<String> = (1..=self.len()).map(|n| format!("psi_{n}")).collect();
        writeln!(out, "edge,x,{}", header.join(","))?;
        for ed in system.edges() {
            let h = ed.spacing();
            for (k, dof) in ed.dofs.iter().enumerate() {
                let values: Vec<String> = (0..self.len())
                    .map(|n| fmt_f64(dof.map_or(0.0, |i| vecs[(i, n)])))
                    .collect();
                writeln!(out, "{},{},{}", ed.edge, fmt_f64(k as f64 * h), values.join(","))?;
            }
        }
        Ok(())
    }
}

/// [`solve_spectrum_with`] under default [`SolverOptions`].
pub fn solve_spectrum(
    system: &AssembledSystem,
    request: SpectrumRequest,
    want_vectors: bool,
) -> Result<Spectrum, SpectrumError> {
    solve_spectrum_with(system, request, want_vectors, &SolverOptions::default())
}

pub fn solve_spectrum_with(
    system: &AssembledSystem,
    request: SpectrumRequest,
    want_vectors: bool,
    options: &SolverOptions,
) -> Result<Spectrum, SpectrumError> {
    let dim = system.dimension();
    if dim > options.dimension_cap {
        return Err(SpectrumError::DimensionTooLarge {
            dimension: dim,
            cap: options.dimension_cap,
        });
    }
    if dim == 0 {
        return Ok(Spectrum {
            eigenvalues: Vec::new(),
            eigenvectors: want_vectors.then(|| DMatrix::zeros(0, 0)),
            residuals: want_vectors.then(Vec::new),
            degenerate: Vec::new(),
            resolved_upto: f64::INFINITY,
            options: *options,
        });
    }

    let chol = system
        .mass()
        .clone()
        .cholesky()
        .ok_or_else(|| SpectrumError::SolverFailure("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(system.stiffness())
        .ok_or_else(|| SpectrumError::SolverFailure("singular Cholesky factor".into()))?;
    let mut c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| SpectrumError::SolverFailure("singular Cholesky factor".into()))?;
    for i in 0..dim {
        for j in 0..i {
            let avg = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = avg;
            c[(j, i)] = avg;
        }
    }

    let (values, vectors) = if want_vectors {
        let eig = SymmetricEigen::try_new(c, f64::EPSILON, 100 * dim.max(30))
            .ok_or_else(|| SpectrumError::SolverFailure("symmetric QR did not converge".into()))?;
        (eig.eigenvalues, Some(eig.eigenvectors))
    } else {
        (c.symmetric_eigenvalues(), None)
    };

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let all: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    if let Some(bad) = all.iter().find(|v| !v.is_finite()) {
        return Err(SpectrumError::SolverFailure(format!("non-finite eigenvalue {bad}")));
    }

    let gap = |a: f64, b: f64| (b - a) < options.cluster_gap * a.abs().max(b.abs()).max(1.0);
    let degenerate_all: Vec<bool> = (0..dim)
        .map(|i| (i > 0 && gap(all[i - 1], all[i])) || (i + 1 < dim && gap(all[i], all[i + 1])))
        .collect();

    let (keep, resolved_upto) = match request {
        SpectrumRequest::All => (dim, f64::INFINITY),
        SpectrumRequest::Lowest(k) if k >= dim => (dim, f64::INFINITY),
        SpectrumRequest::Lowest(k) => {
            let next = all[k];
            let below = all[..k].iter().rev().copied().find(|&v| v < next);
            (k, below.unwrap_or(f64::NEG_INFINITY))
        }
        SpectrumRequest::UpTo(lambda_max) => (all.partition_point(|&v| v <= lambda_max), lambda_max),
    };
    let eigenvalues = all[..keep].to_vec();
    let degenerate = degenerate_all[..keep].to_vec();

    let (eigenvectors, residuals) = match vectors {
        None => (None, None),
        Some(y) => {
            let lt = l.transpose();
            let mut v = DMatrix::zeros(dim, keep);
            for (col, &src) in order[..keep].iter().enumerate() {
                let yi = y.column(src).into_owned();
                let vi = lt
                    .solve_upper_triangular(&yi)
                    .ok_or_else(|| SpectrumError::SolverFailure("singular Cholesky factor".into()))?;
                v.set_column(col, &vi);
            }
            let mut residuals = Vec::with_capacity(keep);
            for (n, &lam) in eigenvalues.iter().enumerate() {
                let vn = v.column(n);
                let r = system.stiffness() * vn - system.mass() * vn * lam;
                let m_norm = (vn.transpose() * system.mass() * vn)[(0, 0)].sqrt();
                let rel = r.norm() / (lam.abs().max(1.0) * m_norm);
                if !(rel <= options.residual_tol) {
                    return Err(SpectrumError::SolverFailure(format!(
                        "residual {rel:e} for eigenpair {} exceeds {:e}",
                        n + 1,
                        options.residual_tol
                    )));
                }
                residuals.push(rel);
            }
            (Some(v), Some(residuals))
        }
    };

    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
        residuals,
        degenerate,
        resolved_upto,
        options: *options,
    })
}

/// Number of eigenvalues `<= threshold` (or `< threshold` for [`CountMode::Lt`]).
pub fn count_eigenvalues(
    spectrum: &Spectrum,
    threshold: f64,
    mode: CountMode,
) -> Result<usize, SpectrumError> {
    if threshold > spectrum.resolved_upto {
        return Err(SpectrumError::IncompleteSpectrum {
            threshold,
            resolved: spectrum.resolved_upto,
        });
    }
    let values = &spectrum.eigenvalues;
    Ok(match mode {
        CountMode::Leq => values.partition_point(|&v| v <= threshold),
        CountMode::Lt => values.partition_point(|&v| v < threshold),
    })
}

/// n_0(λ) = #{n ≥ 1 : n²π² ≤ λ}, the Dirichlet eigenvalue count of the unit interval.
pub fn n0_reference(lambda: f64) -> usize {
    if !(lambda > 0.0) {
        return 0;
    }
    if lambda.is_infinite() {
        return usize::MAX;
    }
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    let mut n = (lambda.sqrt() / std::f64::consts::PI).floor() as usize;
    while ((n + 1) * (n + 1)) as f64 * pi2 <= lambda {
        n += 1;
    }
    while n > 0 && (n * n) as f64 * pi2 > lambda {
        n -= 1;
    }
    n
}

/// Part of the graph over which eigenfunction mass is integrated.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Edge(String),
    /// `[from, to]` in edge coordinates; both ends must be mesh nodes.
    Interval { edge: String, from: f64, to: f64 },
}

/// ∫_region |ψ_n|² for the M-normalized eigenvector `n` (0-based).
pub fn eigenfunction_mass(
    spectrum: &Spectrum,
    system: &AssembledSystem,
    n: usize,
    region: &Region,
) -> Result<f64, SpectrumError> {
    let v = spectrum.eigenvector(n)?;
    region_mass(system, &v, region)
}

pub(crate) fn region_mass(
    system: &AssembledSystem,
    v: &DVector<f64>,
    region: &Region,
) -> Result<f64, SpectrumError> {
    let (edge, from, to) = match region {
        Region::Edge(e) => (e, None, None),
        Region::Interval { edge, from, to } => (edge, Some(*from), Some(*to)),
    };
    let ed = system.edge(edge).ok_or_else(|| SpectrumError::RegionMisaligned {
        edge: edge.clone(),
        detail: "edge not in the assembled system".into(),
    })?;
    let node = |x: Option<f64>, default: usize| -> Result<usize, SpectrumError> {
        match x {
            None => Ok(default),
            Some(x) => ed.node_of(x).ok_or_else(|| SpectrumError::RegionMisaligned {
                edge: edge.clone(),
                detail: format!("{x} is not a mesh node (h = {})", ed.spacing()),
            }),
        }
    };
    let first = node(from, 0)?;
    let last = node(to, ed.elements)?;
    if first > last {
        return Err(SpectrumError::RegionMisaligned {
            edge: edge.clone(),
            detail: format!("empty interval [{from:?}, {to:?}]"),
        });
    }
    Ok(ed.mass_between(v, first, last))
}
