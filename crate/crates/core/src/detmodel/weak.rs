//! Weak-signal approximation of the finite-pixel matrix, valid while the
//! click count stays far below the pixel count.

use ndarray::Array2;

use super::infinite::dark_tail;
use super::{bernoulli_matrix, compose, params, DetectorModel, TransferMatrix, Variant};
use crate::error::{Error, Result};
use crate::numeric::ln_choose;

/// `Kexp(c, m) = C(N,c) (1-d)^(N-c) (1-eta)^(m-c) [d(1-eta) + eta m / N]^c`,
/// composed with the loss matrix.
///
/// The column defect is not bounded; it is measured and stored in the
/// metadata.
pub fn exponential_approx_matrix(
    model: &DetectorModel,
    n_max: usize,
    c_max: Option<usize>,
) -> Result<TransferMatrix> {
    model.validate()?;
    let eta = model.efficiency;
    if eta >= 1.0 {
        return Err(Error::InvalidParameter("exponential form needs efficiency < 1".into()));
    }
    let pixels = model.pixels;
    let d = model.dark_prob;
    let c_max = c_max.unwrap_or(n_max + dark_tail(model.dark_mean())).min(pixels);
    let nf = pixels as f64;
    let mut values = Array2::zeros((c_max + 1, n_max + 1));
    for m in 0..=n_max {
        let rate = d * (1.0 - eta) + eta * m as f64 / nf;
        for c in 0..=c_max {
            let cf = c as f64;
            let hit = if c == 0 {
                0.0
            } else if rate == 0.0 {
                continue;
            } else {
                cf * rate.ln()
            };
            let dark = if d == 0.0 { 0.0 } else { (nf - cf) * (-d).ln_1p() };
            let miss = if eta == 0.0 { 0.0 } else { (m as f64 - cf) * (-eta).ln_1p() };
            values[[c, m]] = (ln_choose(nf, cf) + dark + miss + hit).exp();
        }
    }
    let p = params([
        ("T", model.transmissivity),
        ("N", nf),
        ("eta", eta),
        ("d", d),
        ("D", model.dark_mean()),
    ]);
    let inner = TransferMatrix::from_values(values, Variant::Exponential, p.clone())?;
    let g = compose(&inner, &bernoulli_matrix(model.transmissivity, n_max)?)?;
    TransferMatrix::from_values(g.values().clone(), Variant::Exponential, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::binom_pmf;
    use approx::assert_abs_diff_eq;

    #[test]
    fn vacuum_column_is_dark_binomial() {
        let model = DetectorModel::new(0.7, 50, 0.23, 1e-3).unwrap();
        let g = exponential_approx_matrix(&model, 4, Some(10)).unwrap();
        for c in 0..=10 {
            assert_abs_diff_eq!(g.get(c, 0), binom_pmf(c as u64, 50, 1e-3), epsilon = 1e-15);
        }
    }

    /// Summing the formula over all `c` by the binomial theorem.
    fn analytic_column_sum(pixels: usize, eta: f64, d: f64, m: usize) -> f64 {
        let nf = pixels as f64;
        (1.0 - eta).powi(m as i32) * (1.0 - d + (d * (1.0 - eta) + eta * m as f64 / nf) / (1.0 - eta)).powf(nf)
    }

    #[test]
    fn column_sums_follow_binomial_theorem() {
        let model = DetectorModel::new(1.0, 1024, 0.23, 1e-5).unwrap();
        let g = exponential_approx_matrix(&model, 10, Some(1024)).unwrap();
        for (m, s) in g.column_sums().iter().enumerate() {
            assert_abs_diff_eq!(*s, analytic_column_sum(1024, 0.23, 1e-5, m), epsilon = 1e-11);
        }
        let worst = (0..=10)
            .map(|m| (1.0 - analytic_column_sum(1024, 0.23, 1e-5, m)).abs())
            .fold(0.0, f64::max);
        assert_abs_diff_eq!(g.meta().max_column_defect, worst, epsilon = 1e-11);
    }

    #[test]
    fn rejects_unit_efficiency() {
        let model = DetectorModel::new(1.0, 10, 1.0, 0.0).unwrap();
        assert!(exponential_approx_matrix(&model, 3, None).is_err());
    }
}
