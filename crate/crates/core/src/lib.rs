//! Simulation and analysis toolkit for sample-and-hold multiplexed control of
//! surface ion traps.
//!
//! The crate is organised along the signal chain:
//!
//! * [`trap`]: electrode geometry, the gapless-plane potential basis, the RF
//!   pseudopotential and the axial well solver.
//! * [`circuit`]: the per-electrode charging circuit (charge injection,
//!   leakage, capacitive coupling, RC filtering, channel gain).
//! * [`mux`]: the switch matrix, its command frames, the refresh scheduler
//!   and wiring-architecture checks.
//! * [`waveforms`]: bounded voltage-set synthesis for confinement, shimming
//!   and transport.
//! * [`analysis`]: thermometry, heating-rate and power-law fits, gate
//!   detuning budget, field-noise inference and temperature calibration.
//! * [`scenario`]: configuration-driven end-to-end runs with deterministic
//!   JSON/CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod circuit;
pub mod constants;
pub mod mux;
pub mod scenario;
pub mod trap;
pub mod waveforms;

pub use trap::{IonSpecies, TrapLayout, VoltageSet};
