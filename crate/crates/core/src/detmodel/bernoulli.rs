//! Binomial loss matrix `K0(m, n) = C(n, m) T^m (1-T)^(n-m)`.

use ndarray::Array2;

use super::{check_prob, params, TransferMatrix, Variant};
use crate::error::Result;
use crate::numeric::binom_pmf;

pub fn bernoulli_matrix(transmissivity: f64, n_max: usize) -> Result<TransferMatrix> {
    check_prob("transmissivity", transmissivity)?;
    let mut values = Array2::zeros((n_max + 1, n_max + 1));
    for n in 0..=n_max {
        for m in 0..=n {
            values[[m, n]] = binom_pmf(m as u64, n as u64, transmissivity);
        }
    }
    TransferMatrix::from_values(values, Variant::Bernoulli, params([("T", transmissivity)]))
}
