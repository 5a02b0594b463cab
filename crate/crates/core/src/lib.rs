//! Seed-recovery attacks on Goldreich-style local pseudorandom generators.
//!
//! * [`prg`]: predicates, planted instances, output verification.
//! * [`eqsys`]: reduced equation systems with free-variable propagation.
//! * [`gd`]: backtracking guess-and-determine with GF(2) solving.
//! * [`bp`]: guess-and-decode, belief propagation over mixed linear and
//!   non-linear checks.
//! * [`estimator`]: closed-form collision, guess and complexity estimates.
//! * [`harness`]: batch experiments and result records.

pub mod bp;
pub mod eqsys;
pub mod error;
pub mod estimator;
pub mod gd;
pub mod harness;
pub mod prg;
pub mod rng;

pub use error::{Error, Result};
pub use prg::{sample_instance, verify_secret, Instance, Predicate};
