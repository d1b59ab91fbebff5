use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GwError {
    #[error("invalid truncation order {order}: need at least {min}")]
    InvalidOrder { order: usize, min: usize },

    #[error("argument {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("{what} has a pole at s = 1")]
    Pole { what: &'static str },

    #[error("invalid offspring family: {reason}")]
    InvalidParameters { reason: String },

    #[error("invalid offspring family: coefficient p_{index} = {value:e} is negative")]
    InvalidFamily { index: usize, value: f64 },

    #[error("precision exhausted at n = {n}; largest usable n is {max_usable}")]
    PrecisionExhausted { n: usize, max_usable: usize },

    #[error("work budget exceeded: {requested:e} operations requested, {budget:e} allowed")]
    Budget { requested: f64, budget: f64 },

    #[error("quadrature did not converge on [{a}, {b}] (estimated error {error:e})")]
    Quadrature { a: f64, b: f64, error: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid simulation config: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for GwError {
    fn from(e: std::io::Error) -> Self {
        GwError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, GwError>;
