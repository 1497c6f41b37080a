use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Time lies outside the schedule's domain `[0, 1]`.
    #[error("time {t} outside schedule domain [0, 1]")]
    Domain { t: f64 },

    /// Finite-difference derivative requested too close to a domain edge.
    #[error("time {t} too close to the domain boundary for a finite-difference derivative (h = {h})")]
    Boundary { t: f64, h: f64 },

    /// A formula hit a 0/0 or division by zero at this time.
    #[error("singular time t = {t}: {what}")]
    SingularTime { t: f64, what: &'static str },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// A multistep method was called without enough history.
    #[error("warmup error: {0}")]
    Warmup(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient data: {remaining} usable points after excluding {excluded}, need at least {required}")]
    InsufficientData {
        remaining: usize,
        excluded: usize,
        required: usize,
    },

    #[error("non-finite value produced at t = {t}")]
    NonFinite { t: f64 },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Numerical failures (as opposed to bad input or configuration).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularTime { .. }
                | Error::Boundary { .. }
                | Error::NonFinite { .. }
                | Error::InsufficientData { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
