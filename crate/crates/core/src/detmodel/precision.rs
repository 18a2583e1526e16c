//! Working-precision selection for the alternating-sum constructions.

use std::fmt;
use std::str::FromStr;

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard digits added on top of the magnitude estimate.
pub const GUARD_DIGITS: u32 = 30;
pub const MIN_DIGITS: u32 = 50;
/// Auto mode gives up past this.
pub const MAX_DIGITS: u32 = 20_000;

/// Decimal digits used for extended-precision evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    /// Pick digits from the largest partial-sum magnitude and retry at
    /// doubled digits if the column-sum check fails.
    #[default]
    Auto,
    /// Fixed digits; a failed check is an error.
    Digits(u32),
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Precision::Auto => f.write_str("auto"),
            Precision::Digits(d) => write!(f, "{d}"),
        }
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Precision::Auto);
        }
        s.parse::<u32>()
            .ok()
            .filter(|d| *d > 0)
            .map(Precision::Digits)
            .ok_or_else(|| Error::InvalidParameter(format!("precision `{s}` is neither `auto` nor a digit count")))
    }
}

/// Digits needed so that the absolute rounding error on a sum whose
/// positive-part magnitude is `10^log10_magnitude` stays far below 1e-20.
pub fn digits_for_magnitude(log10_magnitude: f64) -> u32 {
    let lead = log10_magnitude.max(0.0).ceil() as u32;
    (lead + GUARD_DIGITS).max(MIN_DIGITS)
}

pub fn bits_for_digits(digits: u32) -> u32 {
    (digits as f64 * std::f64::consts::LOG2_10).ceil() as u32 + 8
}

/// Forward differences `Delta^c g(0)` for `c = 0..g.len()`, consuming `g`.
pub fn forward_differences(mut g: Vec<Float>) -> Vec<Float> {
    use rug::ops::SubFrom;
    let len = g.len();
    let mut out = Vec::with_capacity(len);
    for k in 0..len {
        out.push(g[0].clone());
        for l in 0..len - k - 1 {
            let (lo, hi) = g.split_at_mut(l + 1);
            lo[l].sub_from(&hi[0]);
        }
    }
    out
}

/// Outcome of one column evaluation attempt.
pub(crate) enum Attempt<T> {
    Ok(T),
    /// Column-sum or sign check failed at this precision.
    Failed { defect: f64 },
}

/// Run `eval` at the chosen digits, doubling in auto mode until it passes.
pub(crate) fn with_retry<T>(
    precision: Precision,
    column: usize,
    auto_digits: u32,
    mut eval: impl FnMut(u32) -> Attempt<T>,
) -> Result<(T, u32)> {
    let mut digits = match precision {
        Precision::Auto => auto_digits,
        Precision::Digits(d) => d,
    };
    loop {
        match eval(digits) {
            Attempt::Ok(v) => return Ok((v, digits)),
            Attempt::Failed { defect } => {
                if precision != Precision::Auto || digits >= MAX_DIGITS {
                    return Err(Error::PrecisionExhausted { column, defect, digits });
                }
                digits = (digits * 2).min(MAX_DIGITS);
            }
        }
    }
}
