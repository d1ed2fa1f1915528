use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    /// The parameter combination does not define a well-posed problem.
    #[error("ill-posed parameters: {0}")]
    IllPosed(String),

    /// The HJB denominator lost its sign, so the implied value function is not concave.
    #[error("convexity violation at w = {w}")]
    ConvexityViolation { w: f64 },

    /// The shooting search could not satisfy the far-field condition.
    #[error(
        "shooting search exhausted: bracket [{eta_lo:e}, {eta_hi:e}] at w = {w_start}, \
         best far-field residual {best_residual:e}"
    )]
    SearchExhausted {
        w_start: f64,
        eta_lo: f64,
        eta_hi: f64,
        best_residual: f64,
    },

    /// Conditioning on an event of zero probability.
    #[error("conditioning event has zero probability")]
    DegenerateCondition,

    #[error("quadrature did not reach tolerance: estimated error {estimate:e}, requested {requested:e}")]
    QuadratureTolerance { estimate: f64, requested: f64 },

    #[error("value {value} outside the policy table range [{lo}, {hi}]")]
    OutOfTable { value: f64, lo: f64, hi: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed table: {0}")]
    Parse(String),
}
