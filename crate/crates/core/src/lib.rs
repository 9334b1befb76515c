//! Classical simulation of kicked-Ising Trotter circuits on heavy-hex lattices.
//!
//! Three engines evaluate `⟨0…0| U_T† O U_T |0…0⟩`:
//!
//! * [`pepo`] — Heisenberg-picture PEPO evolution with simple-update
//!   truncation at bond dimension χ and exact final contraction;
//! * [`pauli`] — Pauli-string back-propagation, exact or truncated;
//! * [`oracle`] — a dense statevector simulator for small (sub)lattices.
//!
//! Gate conventions live in [`gates`] and [`circuit`] and are shared by all three.

pub mod analysis;
pub mod circuit;
pub mod error;
pub mod gates;
pub mod lattice;
pub mod oracle;
pub mod pauli;
pub mod pepo;
pub mod tensor;

pub use analysis::{error_report, fit_chi_extrapolation, ErrorReport, FitResult, ResultRow};
pub use circuit::{CircuitSpec, Layer};
pub use error::{Error, Result};
pub use gates::Pauli;
pub use lattice::{edge_layers, Lattice, SiteMap};
pub use oracle::{statevector_expectation, StateVector};
pub use pauli::{
    back_propagate, observable_library, parse_observable, PauliString, PauliSum, PauliTerm, PropagationLimits,
    TruncationPolicy,
};
pub use pepo::{init_pepo, pepo_expectation, EvolutionReport, Pepo};
pub use tensor::{svd_truncate, Network, Tensor, TruncatedSvd};
