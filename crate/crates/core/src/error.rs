use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid timestep {t}: {reason}")]
    InvalidTimestep { t: usize, reason: String },

    #[error("invalid condition: {0}")]
    InvalidCondition(String),

    #[error("schedule is stochastic (eta = {eta}): {context}")]
    StochasticSchedule { eta: f64, context: String },

    #[error("missing noise draw for stochastic step at t = {0}")]
    MissingNoise(usize),

    #[error("re-prediction reconstruction requires a denoiser oracle")]
    MissingOracle,

    #[error("plan mismatch: {0}")]
    PlanMismatch(String),

    #[error("numeric degeneracy: {0}")]
    NumericDegeneracy(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("record format error: {0}")]
    RecordFormat(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for config or usage problems,
    /// 3 for numeric failures detected at runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericDegeneracy(_) | Error::NonFinite(_) => 3,
            _ => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_split_usage_from_numeric() {
        assert_eq!(Error::Config("bad key".into()).exit_code(), 2);
        assert_eq!(
            Error::InvalidParameter("n_steps = 0".into()).exit_code(),
            2
        );
        assert_eq!(Error::Io(std::io::Error::other("nope")).exit_code(), 2);
        assert_eq!(
            Error::NumericDegeneracy("sigma out of range".into()).exit_code(),
            3
        );
        assert_eq!(Error::NonFinite("latent".into()).exit_code(), 3);
    }

    #[test]
    fn messages_carry_context() {
        let e = Error::InvalidTimestep {
            t: 0,
            reason: "denoiser is undefined at t = 0".into(),
        };
        assert!(e.to_string().contains("t = 0"));
        let e = Error::DimensionMismatch { left: 2, right: 3 };
        assert_eq!(e.to_string(), "dimension mismatch: 2 vs 3");
    }
}
