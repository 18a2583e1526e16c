use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A statistic is undefined for the given input (zero variance, zero mean, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Post-hoc column-sum check still failed after retrying at higher precision.
    #[error("extended precision exhausted: column {column} defect {defect:e} at {digits} digits")]
    PrecisionExhausted {
        column: usize,
        defect: f64,
        digits: u32,
    },

    /// Enumeration-based constructions refuse instances above their term budget.
    #[error("term budget exceeded: {terms} terms > budget {budget}")]
    BudgetExceeded { terms: u128, budget: u128 },

    /// The forward model gives zero probability to an observed click outcome.
    #[error("model mismatch: observed cell (c_s={c_s}, c_i={c_i}) has f={f:e} but zero model probability")]
    ModelMismatch { c_s: usize, c_i: usize, f: f64 },

    #[error("support violation: {0}")]
    Support(String),

    #[error("no feasible solution: {0}")]
    Infeasible(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
