//! Constraint gadgets for Grover-mixer QAOA on quadratic constrained binary
//! optimization.
//!
//! The pipeline: encode linear constraints as a labeled diagonal, expand it
//! into a Z Hamiltonian, train a QAOA-style circuit that prepares (close to)
//! the equal superposition of properly labeled kets, and use that state as the
//! mixer reference of a Grover-mixer QAOA on the penalized objective.

pub mod dsl;
pub mod error;
pub mod experiment;
pub mod gadget;
pub mod optimize;
pub mod pauli;
pub mod problem;
pub mod solver;
pub mod statevector;
pub mod store;

pub use dsl::{parse_constraint, parse_constraints, Comparison};
pub use error::{Error, Result};
pub use experiment::{sweep_single, sweep_two, OverlapCase, SingleGrid, SweepOptions};
pub use gadget::{
    ansatz_state, build_gadget_hamiltonian, ideal_feasible_state, label_states, train_gadget,
    Ansatz, AnsatzConfig, AnsatzMode, FlagMode, GadgetSpec, LabeledDiagonal, TrainOptions,
    TrainedGadget,
};
pub use optimize::NelderMead;
pub use pauli::{
    add_flag_penalty, diagonal_to_pauli, expectation, pauli_to_diagonal, qubo_to_ising,
    DiagonalVector, PauliZTerm, ZHamiltonian,
};
pub use problem::{
    brute_force_solve, random_qcbo, Assignment, BruteForce, LinearConstraint, Optimum,
    QcboInstance, QuadraticObjective, Sense,
};
pub use solver::{
    delta_rule, embed_gadget_state, random_guess_baseline, run_gm_qaoa, SolveConfig, SolveReport,
};
pub use statevector::StateVector;
pub use store::{canonicalize, CanonicalKey, GadgetStore};
