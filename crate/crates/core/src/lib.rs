//! Modelling with high-level Petri net modules.
//!
//! Signatures and their finite instantiations ([`algebra`]) inscribe net
//! schemata ([`schema`]). Schemata live inside modules with labelled left and
//! right interfaces that compose associatively ([`composition`]). Simulation
//! records partially ordered runs ([`runs`]), bounded exploration checks
//! declared invariants ([`explore`]), and recorded runs feed counting
//! statistics ([`mining`]). Models can be written in a small textual
//! language ([`dsl`]) and driven from the command line ([`cli`]).

pub mod algebra;
pub mod cli;
pub mod composition;
pub mod dsl;
pub mod explore;
pub mod mining;
pub mod runs;
pub mod schema;
pub mod service_system;

pub use algebra::{eval_term, validate_structure, Binding, Signature, Sort, Structure, Term, ValidationReport, Value};
pub use composition::{abstract_module, canonical_equal, compose, flatten, Gate, GateKind, Module};
pub use runs::{linearize, simulate, verify_run, ConcurrentRun, Scenario, WorkloadItem};
pub use schema::{check_well_formed, instantiate, Marking, Net, NetSchema, Transition};
