//! Cross-Kerr phase shifts of weak probe and trigger beams in a four-level
//! tripod medium dressed by a quasi-standing coupling wave.
//!
//! The pipeline per probe detuning δ₁ is: complex detunings ([`params`]),
//! steady-state populations ([`populations`]), lattice Fourier components of
//! the susceptibilities ([`susceptibility`]), a two-mode boundary-value solve
//! for the forward and backward envelopes ([`propagation`]), and finally
//! transmission, reflection and phase ([`spectra`]).

pub mod check;
pub mod config;
pub mod lattice;
pub mod oracle;
pub mod output;
pub mod par;
pub mod params;
pub mod populations;
pub mod propagation;
mod quasilinear;
pub mod spectra;
pub mod susceptibility;

pub use par::Execution;
pub use params::{default_params, detunings, Beam, DetuningSet, SystemParams};
pub use propagation::{self_consistent_solve, SolverOptions};
pub use spectra::{sweep, PopulationMode, SpectrumPoint, SweepOptions, TriggerMode};
