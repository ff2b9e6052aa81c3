//! File formats, ingestion and the command-line front end for the
//! `mmia-core` membership-inference toolkit.
//!
//! * [`io`] reads and writes MIAF feature files with their JSON sidecars.
//! * [`export`] and [`report`] produce the CSV and text artifacts.
//! * [`snapshot`] persists trained WSA attacks.
//! * [`ingest`] cleans JSON Lines manifests and checks role disjointness.
//! * [`cli`] wires everything into the `mmia` binary.

pub mod cli;
pub mod error;
pub mod export;
pub mod ingest;
pub mod io;
pub mod manifest;
pub mod parallel;
pub mod report;
pub mod snapshot;

pub use error::{Error, Result};
