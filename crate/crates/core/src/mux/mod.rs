//! Switch matrix, command protocol, sample-and-hold refresh planning and
//! wiring-architecture checks.

mod arch;
mod frame;
mod matrix;
mod refresh;

pub use arch::{reconfig_check, simulate_swaps, ArchitectureKind, ReconfigVerdict, WiringArchitecture};
pub use frame::{Frame, FrameFormat, Opcode};
pub use matrix::{
    dac_tag, parse_script, write_events_csv, Bank, Command, Event, EventKind, Route, SwitchMatrix,
    MIN_CLEAN_TEMPERATURE_K,
};
pub use refresh::{plan_refresh, RefreshInputs, RefreshSchedule};

use crate::circuit::CircuitError;

#[derive(Debug, thiserror::Error)]
pub enum MuxError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("encode error: {0}")]
    Encode(String),
    #[error("illegal transition: {0}")]
    IllegalTransition(String),
    #[error("unknown electrode `{0}`")]
    UnknownElectrode(String),
    #[error("script line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<csv::Error> for MuxError {
    fn from(e: csv::Error) -> Self {
        MuxError::Io(e.to_string())
    }
}
