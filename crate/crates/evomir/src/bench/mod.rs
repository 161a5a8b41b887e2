//! Benchmark corpus: reference oracles, embedded kernels, and test suites.
//!
//! The corpus pairs each kernel with a pure-Rust reference implementation
//! ([`sw`], [`diffusion`]) and wraps both in deterministic [`suite`]s that
//! judge a candidate program by running it on seeded inputs and comparing
//! outputs against the reference.  Kernel sources are embedded at compile
//! time ([`kernels`]) and can be overridden at runtime for experiments.

pub mod diffusion;
pub mod kernels;
pub mod suite;
pub mod sw;
