//! Engines, oracles and finite-size-scaling analysis for a Z₂-symmetric
//! adaptive monitored circuit: competing `X` and `ZZ` measurements on a ring
//! or torus, with majority-vote feedback after every bond round.
//!
//! Modules:
//!
//! * [`cluster`]: the production engine, tracking background bits and signed
//!   GHZ clusters.
//! * [`tableau`]: an exact stabilizer-tableau oracle for small systems.
//! * [`percolation`]: the space-time connectivity picture of the same
//!   dynamics.
//! * [`dense`]: density-matrix channels for a handful of qubits.
//! * [`mvc`]: the classical majority-vote model.
//! * [`observables`], [`ensemble`], [`fss`] and [`verify`] on top.

pub mod cluster;
pub mod dense;
pub mod ensemble;
pub mod error;
pub mod fss;
pub mod lattice;
pub mod mvc;
pub mod observables;
pub mod percolation;
pub mod schedule;
pub mod tableau;
pub mod verify;

pub use error::{Error, ReplayError, Result};
