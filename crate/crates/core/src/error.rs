use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at column {pos}: {msg}\n  {text}\n  {caret}")]
    Parse {
        pos: usize,
        msg: String,
        text: String,
        caret: String,
    },
    #[error("map does not fix endpoint {endpoint}: f({endpoint}) = {value}")]
    EndpointNotFixed { endpoint: f64, value: f64 },
    #[error("map is not increasing at x = {at}: derivative {deriv}")]
    NotMonotone { at: f64, deriv: f64 },
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("domain mismatch: [{a_lo}, {a_hi}] vs [{b_lo}, {b_hi}]")]
    DomainMismatch {
        a_lo: f64,
        a_hi: f64,
        b_lo: f64,
        b_hi: f64,
    },
    #[error("map is the identity on [{lo}, {hi}]")]
    IdentityMap { lo: f64, hi: f64 },
    #[error("interior fixed point near x = {at}")]
    InteriorFixedPoint { at: f64 },
    #[error("no convergence after {iterations} iterations at x = {at} (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        at: f64,
        residual: f64,
    },
    #[error("vector field vanishes in the interior near x = {at}")]
    InteriorZero { at: f64 },
    #[error("quadrature failed on [{lo}, {hi}] (error estimate {estimate:e})")]
    Quadrature { lo: f64, hi: f64, estimate: f64 },
    #[error("flow leaves the resolved range at x = {at}, t = {time}; attainable time range [{t_min}, {t_max}]")]
    FlowRange {
        at: f64,
        time: f64,
        t_min: f64,
        t_max: f64,
    },
    #[error("centralizer time is not constant: spread {spread:e} exceeds {tol:e}")]
    NonConstantTime { spread: f64, tol: f64 },
    #[error("maps do not commute: residual {residual:e} exceeds {tol:e}")]
    NotCommuting { residual: f64, tol: f64 },
    #[error("classification failed on [{lo}, {hi}]: {msg}")]
    Classification { lo: f64, hi: f64, msg: String },
    #[error("verification failed: {what} residual {residual:e} exceeds {tol:e}")]
    Verification {
        what: String,
        residual: f64,
        tol: f64,
    },
    #[error("certified bound delta = {delta} is not below 1")]
    DeltaTooLarge { delta: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
