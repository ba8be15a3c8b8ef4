//! Numerical construction and verification of collapsing hyperkahler metrics
//! built from periodic harmonic functions, monopole connections and cutoff
//! gluing, together with the exact integer topology of the resulting spaces.
//!
//! The crate is organised along the construction:
//!
//! - [`geometry`]: lattices, the quotient base space and the involution
//! - [`greens`]: periodic Green's functions and the harmonic function h
//! - [`connection`]: monopole gauge patches and radial-integration gauges
//! - [`triple`]: Gibbons-Hawking metric/triple and the local model spaces
//! - [`gluing`]: cutoff functions and the globally assembled definite triple
//! - [`analysis`]: flux integrals, finite-difference residuals, scaling fits
//! - [`topology`]: intersection matrices, homology tables, classification
//! - [`config`], [`report`], [`suites`]: scene files, verification suites and
//!   deterministic machine-readable reports (the `gravikit` CLI front end)

pub mod analysis;
pub mod config;
pub mod connection;
pub mod fit;
pub mod geometry;
pub mod gluing;
pub mod greens;
pub mod linalg;
pub mod quadrature;
pub mod report;
pub mod special;
pub mod suites;
pub mod topology;
pub mod triple;

pub use fit::{DecayModel, FitResult};
pub use geometry::{BasePoint, Lattice, Scene, SceneError};
pub use greens::{GreensError, GreensParams, HarmonicData, SingularityId};
pub use linalg::Vec3;
pub use quadrature::QuadratureSpec;
