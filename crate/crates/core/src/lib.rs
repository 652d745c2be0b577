//! Few-photon simulator of polarization- and time-resolved linear-optical
//! interferometers, with a Bell-test statistics layer.
//!
//! The layers build on each other:
//!
//! * [`state`] holds sparse Fock states and the action of single elements.
//! * [`circuit`] strings elements into interferometers, including the
//!   two-photon entanglement interferometer and its alignment bench.
//! * [`detection`] turns evolved states into click statistics, applies the
//!   one-photon-per-side coincidence rule and samples seeded counts.
//! * [`bell`] estimates correlations, combines them into CHSH `S`, bounds
//!   local strategies and fits fringe and dip visibilities.
//! * [`experiment`] wires the layers into scans and simulated runs, fanned
//!   out through [`par`].

pub mod bell;
pub mod circuit;
pub mod detection;
pub mod error;
pub mod experiment;
pub mod par;
pub mod polarization;
pub mod state;

pub use error::{Result, SimError};
