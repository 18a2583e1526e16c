//! Infinite-pixel limit at fixed dark mean `D`: binomial registration
//! convolved with Poisson dark counts.

use ndarray::Array2;

use super::{check_prob, params, TransferMatrix, Variant};
use crate::error::{Error, Result};
use crate::numeric::{binom_pmf_vec, poisson_cutoff, poisson_pmf_vec};

/// Dark-count cutoff used for the default row count.
pub const DARK_TAIL_EPS: f64 = 1e-14;

/// Smallest `k` with `P(Poisson(D) > k) < 1e-14`.
pub fn dark_tail(dark_mean: f64) -> usize {
    poisson_cutoff(dark_mean, DARK_TAIL_EPS)
}

/// `K(c, n) = sum_l Bin(l; n, tau) Pois(c - l; D)`.
///
/// `c_max` defaults to `n_max` plus the dark-count cutoff; a smaller value
/// truncates and the lost mass shows up in the metadata defect.
pub fn infinite_pixel_matrix(
    tau: f64,
    dark_mean: f64,
    n_max: usize,
    c_max: Option<usize>,
) -> Result<TransferMatrix> {
    check_prob("tau", tau)?;
    if !(dark_mean >= 0.0 && dark_mean.is_finite()) {
        return Err(Error::InvalidParameter(format!("dark mean {dark_mean} must be finite and >= 0")));
    }
    let c_max = c_max.unwrap_or(n_max + dark_tail(dark_mean));
    let dark = poisson_pmf_vec(dark_mean, c_max);
    let mut values = Array2::zeros((c_max + 1, n_max + 1));
    for n in 0..=n_max {
        let reg = binom_pmf_vec(n as u64, tau);
        for (l, w) in reg.iter().enumerate().take(c_max + 1) {
            for (k, p) in dark[..=c_max - l].iter().enumerate() {
                values[[l + k, n]] += w * p;
            }
        }
    }
    TransferMatrix::from_values(values, Variant::Infinite, params([("tau", tau), ("D", dark_mean)]))
}
