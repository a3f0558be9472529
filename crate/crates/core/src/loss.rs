use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("loss component {name} must be finite and non-negative, got {value}")]
    InvalidComponent { name: &'static str, value: f64 },
    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("penalty undefined: 1 - (s - phi) = {0} is not positive")]
    Domain(f64),
}

pub(crate) fn check_component(name: &'static str, value: f64) -> Result<(), LossError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(LossError::InvalidComponent { name, value })
    }
}
