use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("argument {value} outside the support: {reason}")]
    Domain { value: f64, reason: &'static str },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("did not converge: {0}")]
    NonConvergent(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite",
        })
    }
}

pub(crate) fn check_discount(delta: f64) -> Result<()> {
    if (0.0..1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "delta",
            value: delta,
            reason: "discount must lie in [0, 1)",
        })
    }
}

pub(crate) fn check_prior(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "p",
            value: p,
            reason: "probability must lie in (0, 1)",
        })
    }
}
