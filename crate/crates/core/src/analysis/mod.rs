//! Measurement analysis and error budgets.

mod budget;
mod calibration;
mod fits;
mod thermometry;

pub use budget::{
    field_noise_from_heating, gate_detuning_error, voltage_noise, GATE_ERROR_CONSTANT,
};
pub use calibration::CalibrationTable;
pub use fits::{
    heating_rate_fit, power_law_fit_freq, power_law_fit_temp, weighted_linear_fit,
    zero_temperature_offset_rate, FitMethod, FitResult, RatePoint,
};
pub use thermometry::{nbar_from_sidebands, MeasurementPoint, MeasurementSeries, NbarEstimate, SidebandPair};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("red/blue ratio {0} >= 1: thermal distribution diverges")]
    ThermalDivergence(f64),
    #[error("singular fit: {0}")]
    Singular(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{value} outside calibration range [{lo}, {hi}]")]
    Extrapolation { value: f64, lo: f64, hi: f64 },
    #[error("division error: {0}")]
    Division(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;
