//! Exact simulator and verifier for coded-placement caching on a shared
//! broadcast link with unequal cache sizes.
//!
//! The crate builds the placement and delivery of two scheme families (a
//! dedicated three-user construction and a K-user small-memory one),
//! materializes them over GF(2^r) at the smallest file length that keeps
//! every subfile integral, and certifies that the measured delivery load
//! equals the closed-form coded load exactly, with bit-exact per-user
//! decoding. All size and load arithmetic is rational; nothing is floated.

pub mod cli;
pub mod decode;
pub mod fieldcode;
pub mod model;
pub mod rational;
pub mod scheme_smallmem;
pub mod scheme_three;
pub mod verifier;

pub use rational::Rational;
