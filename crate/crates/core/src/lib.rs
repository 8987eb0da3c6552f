//! Wireless MIMO switching.
//!
//! A relay with `n` antennas serves `n` single-antenna stations. Each time
//! slot the relay's beamforming matrix realizes one permutation of the
//! stations (a switch matrix); scheduling a condensed set of `n - 1`
//! derangements connects every ordered pair of stations once per round.
//!
//! - [`combinatorics`]: derangements, condensed sets, pairwise patterns
//! - [`relay`]: zero-forcing and network-coded beamformer design
//! - [`scheduling`]: fair-switching weights, throughput and demand compilation
//! - [`montecarlo`]: Rayleigh channel draws and throughput sweeps
//! - [`oracle`]: symbol-level simulation that checks a design empirically
//! - [`cli`]: the `mimo-switch` command line

pub mod cli;
pub mod combinatorics;
pub mod error;
pub mod montecarlo;
pub mod oracle;
pub mod relay;
pub mod scheduling;
pub mod streams;

pub use nalgebra::Complex;

/// Complex double used for all channel and gain quantities.
pub type C64 = Complex<f64>;

pub use combinatorics::{
    enumerate_condensed_sets, enumerate_derangements, is_pairwise, subfactorial, CondensedSet,
    Permutation,
};
pub use error::{Error, Result};
pub use relay::{
    design, effective_rate, ChannelRealization, RelayDesign, SchemeConfig, SchemeKind,
    SystemParams,
};
