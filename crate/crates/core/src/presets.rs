//! Checked-in parameter sets.

use crate::config::ExperimentConfig;

pub const PRIMARY_JSON: &str = include_str!("../../../configs/primary.json");
pub const ALTERNATE_JSON: &str = include_str!("../../../configs/alternate.json");

/// Primary cavity, calibrated to the measured rates and correlations.
pub fn primary() -> ExperimentConfig {
    ExperimentConfig::from_json_str(PRIMARY_JSON).expect("configs/primary.json parses")
}

/// Second cavity: 12-cycle storage lifetime and lower Raman noise.
pub fn alternate() -> ExperimentConfig {
    ExperimentConfig::from_json_str(ALTERNATE_JSON).expect("configs/alternate.json parses")
}
