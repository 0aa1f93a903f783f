//! Entanglement generation and transfer between two coupled whispering-gallery
//! mode cavities, each hosting a clockwise and a counter-clockwise mode.
//!
//! The cavities couple through a bridge qubit, through evanescent fields or
//! through a single fiber mode. Time is measured in units of the active
//! inter-cavity rate `eta`, `tau = eta t`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod dynamics;
pub mod eigen;
pub mod entanglement;
pub mod error;
pub mod experiment;
pub mod hilbert;
pub mod matrix;
pub mod models;
pub mod open_systems;

pub use dynamics::{evolve, fidelity, Propagator};
pub use eigen::HermitianEigen;
pub use entanglement::{
    concurrence, concurrence_trace, detect_plateaus, detect_zero_intervals, pair_concurrence, Bipartition,
    ConcurrenceTrace, Plateau, ZeroInterval, ZeroKind,
};
pub use error::{Error, Result};
pub use experiment::{
    run_experiment, sweep, verify_fiber_equivalence, ExperimentSpec, InitialStateSpec, Manifest, Observable,
    RunResult, SweepSurface, TargetState, TauGrid,
};
pub use hilbert::{
    basis_state, embed_operator, partial_trace, ModeLabel, QuantumState, Subsystem, SubsystemKind, SystemLayout,
};
pub use matrix::ComplexMatrix;
pub use models::{
    build_coupling_hamiltonian, build_intracavity_hamiltonian, total_hamiltonian, CouplingKind, SystemConfig, Units,
};
pub use num_complex::Complex64;
pub use open_systems::{integrate, lindblad_rhs, LindbladGenerator, LossConfig};
