use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid pmf: {0}")]
    InvalidPmf(String),

    #[error("a-coefficients inconsistent with pmf at index {index}: residual {residual:e}")]
    InconsistentCoefficients { index: usize, residual: f64 },

    #[error("series does not decay by truncation length {truncation} (ratio {ratio})")]
    NonDecayingSeries { truncation: usize, ratio: f64 },

    #[error("empty mixture")]
    EmptyMixture,

    #[error("overdispersion required: variance {sigma2} must exceed mean {mu}")]
    OverdispersedRequired { mu: f64, sigma2: f64 },

    #[error("three-parameter scheme unavailable: {0}")]
    InadmissibleEta(String),

    #[error("invalid approximant parameters: {0}")]
    InvalidParams(String),

    #[error("perturbation too large: denominator {denominator} is not positive")]
    PerturbationTooLarge { denominator: f64 },

    #[error("parameters do not match the mixture moments: {0}")]
    ParamsMismatch(String),

    #[error("mixture composition matches no closed form: {0}")]
    UnsupportedComposition(String),

    #[error("pattern ({k1},{k2}) overlaps itself; the renewal recursions do not apply")]
    OverlappingPattern { k1: u32, k2: u32 },

    #[error(
        "domination violated: exact TV {exact:e} (+{error:e}) exceeds bound {bound:e} for {context}"
    )]
    DominationViolated {
        exact: f64,
        error: f64,
        bound: f64,
        context: String,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors that mean the mathematics rules the request out, as
    /// opposed to malformed input.
    pub fn is_inadmissible(&self) -> bool {
        matches!(
            self,
            Error::OverdispersedRequired { .. }
                | Error::InadmissibleEta(_)
                | Error::InvalidParams(_)
                | Error::PerturbationTooLarge { .. }
                | Error::NonDecayingSeries { .. }
                | Error::OverlappingPattern { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
