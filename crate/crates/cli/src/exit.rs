//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

use vde::ErrorKind;

pub const CONFIG: u8 = 2;
pub const DATA: u8 = 3;
pub const NUMERICAL: u8 = 4;

/// Marks an error as a configuration problem.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<vde::Error>() {
            return match e.kind() {
                ErrorKind::Config => CONFIG,
                ErrorKind::Data => DATA,
                ErrorKind::Numerical => NUMERICAL,
            };
        }
    }
    DATA
}
