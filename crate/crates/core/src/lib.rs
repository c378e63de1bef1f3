//! Finite quantum-graph Hamiltonians with alloy-type random potentials.
//!
//! The crate discretizes H_Λ(ω) = −Δ_Λ + Σ_e ω_e u_e on finite subgraphs of
//! a metric graph with P1 finite elements and provides:
//!
//! - exact discrete checks of Dirichlet–Neumann bracketing and finite-rank
//!   interlacing ([`bracketing`]),
//! - Monte Carlo estimates of expected eigenvalue counts in small energy
//!   windows, Hellmann–Feynman and unique-continuation diagnostics
//!   ([`wegner`]),
//! - the integrated density of states by exhaustion of ℤ^ν lattice boxes and
//!   the superadditive-process checks behind it ([`ids`]).

pub mod assembly;
pub mod bracketing;
pub mod cli;
pub mod corpus;
pub mod graph;
pub mod ids;
pub mod potential;
pub mod report;
pub mod spectrum;
pub mod stats;
pub mod wegner;

use thiserror::Error;

pub use assembly::{assemble_system, AssembledSystem, BoundaryConditionMap, Mesh, MeshPolicy, VertexCondition};
pub use graph::{lattice_box, subgraph_view, Edge, LatticeBox, LatticeSpec, MetricGraph, SubgraphView};
pub use potential::{sample_disorder, AlloyConfig, CouplingLaw, DisorderSample};
pub use spectrum::{count_eigenvalues, solve_spectrum, CountMode, Spectrum, SpectrumRequest};

/// Errors raised by the checks and experiments built on top of the solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error(transparent)]
    Potential(#[from] potential::PotentialError),
    #[error(transparent)]
    Assembly(#[from] assembly::AssemblyError),
    #[error(transparent)]
    Spectrum(#[from] spectrum::SpectrumError),
    #[error("unknown decoupling target `{0}`")]
    UnknownTarget(String),
    #[error("assertion failed: {0}")]
    AssertionFailure(String),
    #[error("λ = {lambda} is within {guard:e} of eigenvalue {eigenvalue}")]
    GapGuardViolation {
        lambda: f64,
        eigenvalue: f64,
        guard: f64,
    },
    #[error("bad partition: {0}")]
    BadPartition(String),
    #[error("finite difference unstable for eigenvalue {n} on edge `{edge}`: {detail}")]
    FdInstability { n: usize, edge: String, detail: String },
    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
