//! Lattice simulator for systems of coalescing random walks (the discrete
//! precursor of the Brownian web), the half-plane reconstruction process
//! built on top of it, and the Monte Carlo harness that checks its
//! hitting-probability laws.
//!
//! The simulation core is integer-only: every random bit comes from a
//! counter-based hash of `(seed, stream, coordinates)`, so any trajectory
//! can be recomputed in isolation and results do not depend on thread
//! count. Floating point appears only in [`oracle`] and [`stats`].

pub mod error;
pub mod excursion;
pub mod noisefield;
pub mod oracle;
pub mod perturb;
pub mod stats;
pub mod web;

pub use error::{Error, Result};
pub use noisefield::{derive_seed, ArrowField, ArrowSource, AuxSource, AuxiliaryWalk, LatticePoint, Region};
pub use stats::HitEstimate;
pub use web::{Path, Strip, StripAccess, StripView};
