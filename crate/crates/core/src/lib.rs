//! Finite-depth multifractal analysis on the binary symbolic space.
//!
//! The crate builds selected-cylinder cascade measures on `{0,1}^N`, evaluates
//! packing partition functions exactly by antichain dynamic programming,
//! estimates Lq spectra, and compares two upper bounds for the packing
//! dimension of upper-level sets of the local dimension: the classical
//! `inf(<q,alpha> + B(q))` bound and the min-max bound `inf(Phi_q * T^q)`
//! built from Besicovitch replacement packings.
//!
//! Everything is computed at a finite working depth on the dyadic scale grid;
//! masses are exact rationals, partition sums run in log2 space.

pub mod bounds;
pub mod cascade;
pub mod config;
pub mod error;
pub mod kernel;
pub mod numeric;
pub mod oracle;
pub mod packing;
pub mod pipeline;
pub mod space;

pub use error::{Error, Result};
