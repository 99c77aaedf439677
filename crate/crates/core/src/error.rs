use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid degree: k = {k} must be even, at least 2 and below n = {n}")]
    InvalidDegree { n: usize, k: usize },

    #[error("invalid probability for {name}: {value}")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("initial infected count {requested} exceeds population size {n}")]
    TooManyInfected { requested: usize, n: usize },

    #[error("odds ratio undefined: no infections in the placebo arm")]
    ZeroPlaceboInfections,

    #[error("no calibrated infection probability for efficacy {e0} at k = {k}")]
    MissingCalibration { e0: f64, k: usize },

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidProbability { name, value })
    }
}
