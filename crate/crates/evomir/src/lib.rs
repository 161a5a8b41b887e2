//! evomir: evolutionary optimization of parallel kernels written in a minimal
//! SSA-style IR, evaluated on a deterministic SIMT cost-model VM.
//!
//! The crate is organized as five library modules plus a CLI binary:
//!
//! * [`mir`] - the IR itself: types, textual parser/printer, verifier.
//! * [`vm`] - the cost-model VM: lockstep warp scheduling, divergence stack,
//!   memory spaces, cycle accounting, execution traces.
//! * [`bench`] - benchmark kernels, host-side reference oracles, test suites
//!   and output validators.
//! * [`evo`] - the search engine: edit lists, mutation/crossover, fitness
//!   evaluation, the generational loop.
//! * [`analysis`] - post-hoc edit analysis: weak-edit minimization,
//!   independent/epistatic separation, exhaustive subset enumeration,
//!   interaction graphs, discovery history.

pub mod analysis;
pub mod bench;
pub mod cli;
pub mod evo;
pub mod mir;
pub mod rng;
pub mod vm;
