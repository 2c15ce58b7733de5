//! Multilevel coset codes on shaped lattice constellations.
//!
//! The core pipeline combines a Voronoi-shaped constellation on a lattice
//! quotient `Lambda / 2^s Lambda` (D4 or Z^d) with one polar code over
//! `(Z/2Z)^d` per partition-chain level, decoded by multistage CRC-aided
//! successive cancellation list decoding on symbol PMFs. BICM and MLC polar
//! baselines on 16-QAM, Monte Carlo code construction, and an AWGN sweep
//! harness round out the crate; the `bombe` binary exposes them as
//! `construct`, `sweep`, `compare` and `dump-constellation` subcommands.

pub mod baselines;
pub mod channel;
pub mod codec;
pub mod constellation;
pub mod construction;
pub mod crc;
pub mod error;
pub mod lattice;
pub mod parallel;
pub mod pmf;
pub mod polar;
pub mod sim;

pub use error::{Error, Result};
