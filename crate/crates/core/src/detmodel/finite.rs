//! Exact finite-pixel detector matrix.
//!
//! `K(c, n) = C(N, c) sum_l C(c, l) (-1)^(c-l) (1-d)^(N-l) (1 - tau + l tau / N)^n`,
//! i.e. `C(N, c)` times the `c`-th forward difference of
//! `g(l) = (1-d)^(N-l) (1 - tau + l tau / N)^n` at zero.

use rayon::prelude::*;
use rug::ops::Pow;
use rug::Float;

use super::precision::{self, forward_differences, with_retry, Attempt, Precision};
use super::{check_prob, params, TransferMatrix, Variant, COLUMN_TOL, TAIL_EPS};
use crate::error::{Error, Result};
use crate::numeric::{binom_cutoff, binom_pmf, ln_choose, log_sum_exp};

/// One evaluated column: rows `c_lo..c_lo + values.len()`.
#[derive(Debug, Clone)]
pub(crate) struct Column {
    pub c_lo: usize,
    pub values: Vec<f64>,
    pub digits: u32,
    pub skipped: f64,
}

impl Column {
    pub(crate) fn c_hi(&self) -> usize {
        self.c_lo + self.values.len() - 1
    }
}

/// Build the exact matrix for `N` pixels, registration probability `tau`,
/// per-pixel dark probability `d` and photon numbers `0..=n_max`.
///
/// Rows beyond the largest click count any column can reach with
/// probability above `1e-20` are not stored.
pub fn finite_pixel_matrix(
    pixels: usize,
    tau: f64,
    d: f64,
    n_max: usize,
    precision: Precision,
) -> Result<TransferMatrix> {
    finite_pixel_matrix_with(pixels, tau, d, n_max, precision, TAIL_EPS)
}

/// As [`finite_pixel_matrix`] with an explicit per-tail mass cutoff.
pub fn finite_pixel_matrix_with(
    pixels: usize,
    tau: f64,
    d: f64,
    n_max: usize,
    precision: Precision,
    tail_eps: f64,
) -> Result<TransferMatrix> {
    validate(pixels, tau, d)?;
    if !(tail_eps > 0.0 && tail_eps < 1e-10) {
        return Err(Error::InvalidParameter(format!("tail cutoff {tail_eps} outside (0, 1e-10)")));
    }
    let columns: Vec<Column> = (0..=n_max)
        .into_par_iter()
        .map(|n| column(pixels, tau, d, n, precision, tail_eps))
        .collect::<Result<_>>()?;
    let values = super::assemble(&columns, pixels);
    let digits = columns.iter().map(|c| c.digits).max();
    let skipped = columns.iter().map(|c| c.skipped).fold(0.0, f64::max);
    let p = params([("N", pixels as f64), ("tau", tau), ("d", d), ("D", pixels as f64 * d)]);
    Ok(TransferMatrix::from_values(values, Variant::ExactFinite, p)?.with_precision(digits, skipped))
}

fn validate(pixels: usize, tau: f64, d: f64) -> Result<()> {
    if pixels == 0 {
        return Err(Error::InvalidParameter("pixel count must be positive".into()));
    }
    check_prob("tau", tau)?;
    if !(0.0..1.0).contains(&d) {
        return Err(Error::InvalidParameter(format!("dark probability {d} outside [0, 1)")));
    }
    Ok(())
}

/// Upper bound on `P(clicks <= c)`: all registered photons must share at
/// most `c` pixels.
fn lower_tail_bound(pixels: usize, tau: f64, n: usize, c: usize) -> f64 {
    if c >= pixels {
        return 1.0;
    }
    let ln_sets = ln_choose(pixels as f64, c as f64);
    let ln_frac = (c as f64 / pixels as f64).ln();
    (0..=n as u64)
        .map(|k| {
            let w = binom_pmf(k, n as u64, tau);
            let ln_occ = if k == 0 { 0.0 } else { (ln_sets + k as f64 * ln_frac).min(0.0) };
            w * ln_occ.exp()
        })
        .sum()
}

/// Row range `[c_lo, c_hi]` outside of which the column carries less than
/// `eps` per tail, and the mass bound below `c_lo`.
pub(crate) fn support(pixels: usize, tau: f64, d: f64, n: usize, eps: f64) -> (usize, usize, f64) {
    let c_hi = (binom_cutoff(n as u64, tau, eps / 2.0) + binom_cutoff(pixels as u64, d, eps / 2.0))
        .min(pixels as u64) as usize;
    let mut c_lo = 0;
    let mut skipped = 0.0;
    while c_lo < c_hi {
        let b = lower_tail_bound(pixels, tau, n, c_lo);
        if b >= eps {
            break;
        }
        skipped = b;
        c_lo += 1;
    }
    (c_lo, c_hi, skipped + eps)
}

fn ln_g(pixels: usize, tau: f64, d: f64, n: usize, l: usize) -> f64 {
    let dark = if d == 0.0 { 0.0 } else { (pixels - l) as f64 * (-d).ln_1p() };
    let base = 1.0 - tau + l as f64 * tau / pixels as f64;
    let hit = if n == 0 { 0.0 } else { n as f64 * base.ln() };
    dark + hit
}

/// log10 of the largest `C(N, c) sum_l C(c, l) |g(l)|` over the support.
fn log10_magnitude(pixels: usize, tau: f64, d: f64, n: usize, c_lo: usize, c_hi: usize) -> f64 {
    let lg: Vec<f64> = (0..=c_hi).map(|l| ln_g(pixels, tau, d, n, l)).collect();
    let mut worst = f64::NEG_INFINITY;
    let mut terms = Vec::with_capacity(c_hi + 1);
    for c in c_lo..=c_hi {
        terms.clear();
        terms.extend((0..=c).map(|l| ln_choose(c as f64, l as f64) + lg[l]));
        let m = ln_choose(pixels as f64, c as f64) + log_sum_exp(&terms);
        worst = worst.max(m);
    }
    worst / std::f64::consts::LN_10
}

pub(crate) fn column(
    pixels: usize,
    tau: f64,
    d: f64,
    n: usize,
    precision: Precision,
    eps: f64,
) -> Result<Column> {
    let (c_lo, c_hi, skipped) = support(pixels, tau, d, n, eps);
    let auto = precision::digits_for_magnitude(log10_magnitude(pixels, tau, d, n, c_lo, c_hi));
    let (values, digits) = with_retry(precision, n, auto, |digits| {
        evaluate(pixels, tau, d, n, c_lo, c_hi, digits)
    })?;
    Ok(Column { c_lo, values, digits, skipped })
}

fn evaluate(
    pixels: usize,
    tau: f64,
    d: f64,
    n: usize,
    c_lo: usize,
    c_hi: usize,
    digits: u32,
) -> Attempt<Vec<f64>> {
    let bits = precision::bits_for_digits(digits);
    let keep = Float::with_val(bits, 1) - Float::with_val(bits, d);
    let miss = Float::with_val(bits, 1) - Float::with_val(bits, tau);
    let per_pixel = Float::with_val(bits, tau) / pixels as u32;
    let g: Vec<Float> = (0..=c_hi)
        .map(|l| {
            let dark = Float::with_val(bits, (&keep).pow((pixels - l) as u32));
            let base = Float::with_val(bits, &per_pixel * l as u32) + &miss;
            dark * base.pow(n as u32)
        })
        .collect();
    let diffs = forward_differences(g);
    let mut choose = Float::with_val(bits, 1);
    let mut values = Vec::with_capacity(c_hi + 1 - c_lo);
    for (c, delta) in diffs.into_iter().enumerate() {
        if c >= c_lo {
            values.push((delta * &choose).to_f64());
        }
        choose *= (pixels - c) as u32;
        choose /= (c + 1) as u32;
    }
    check_column(values)
}

/// Accept a column if no entry is meaningfully negative and it sums to one.
/// The reported defect is the larger of the sum defect and the most
/// negative entry.
pub(crate) fn check_column(mut values: Vec<f64>) -> Attempt<Vec<f64>> {
    let sum: f64 = values.iter().sum();
    let negative = values.iter().fold(0.0f64, |m, v| m.max(-v));
    let defect = (1.0 - sum).abs().max(negative);
    if !defect.is_finite() {
        return Attempt::Failed { defect: f64::INFINITY };
    }
    if negative > 1e-14 || defect > COLUMN_TOL {
        return Attempt::Failed { defect };
    }
    for v in &mut values {
        *v = v.max(0.0);
    }
    Attempt::Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn k(pixels: usize, tau: f64, d: f64, n_max: usize) -> TransferMatrix {
        finite_pixel_matrix(pixels, tau, d, n_max, Precision::Auto).unwrap()
    }

    #[test]
    fn zero_photons_is_binomial_dark() {
        let m = k(2, 0.4, 0.1, 0);
        assert_abs_diff_eq!(m.get(0, 0), 0.81, epsilon = 1e-15);
        assert_abs_diff_eq!(m.get(1, 0), 0.18, epsilon = 1e-15);
        assert_abs_diff_eq!(m.get(2, 0), 0.01, epsilon = 1e-15);
    }

    #[test]
    fn single_pixel_fires_unless_all_missed() {
        assert_abs_diff_eq!(k(1, 0.5, 0.0, 2).get(1, 2), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn two_photons_two_pixels() {
        let m = k(2, 1.0, 0.0, 2);
        assert_abs_diff_eq!(m.get(2, 2), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.get(1, 2), 0.5, epsilon = 1e-15);
    }

    /// Distinct-pixel counting by exhaustive enumeration of photon outcomes.
    fn brute(pixels: usize, tau: f64, d: f64, n: usize) -> Vec<f64> {
        // each photon lands in pixel 0..N with prob tau/N or is lost
        let outcomes = pixels + 1;
        let mut out = vec![0.0; pixels + 1];
        for code in 0..outcomes.pow(n as u32) {
            let mut hit = vec![false; pixels];
            let mut w = 1.0;
            let mut x = code;
            for _ in 0..n {
                let o = x % outcomes;
                x /= outcomes;
                if o == pixels {
                    w *= 1.0 - tau;
                } else {
                    w *= tau / pixels as f64;
                    hit[o] = true;
                }
            }
            for dark in 0..1usize << pixels {
                let mut wd = w;
                let mut fired = 0;
                for (p, &h) in hit.iter().enumerate() {
                    let on = dark >> p & 1 == 1;
                    wd *= if on { d } else { 1.0 - d };
                    if on || h {
                        fired += 1;
                    }
                }
                out[fired] += wd;
            }
        }
        out
    }

    #[test]
    fn matches_enumeration() {
        for (pixels, tau, d) in [(3, 0.7, 0.05), (4, 0.23, 0.0), (2, 0.9, 0.2)] {
            let m = k(pixels, tau, d, 5);
            for n in 0..=5 {
                let b = brute(pixels, tau, d, n);
                for (c, want) in b.iter().enumerate() {
                    assert_abs_diff_eq!(m.get(c, n), want, epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn explicit_low_precision_is_reported() {
        let err = finite_pixel_matrix(6528, 0.2, 0.46 / 6528.0, 300, Precision::Digits(20)).unwrap_err();
        assert!(matches!(err, Error::PrecisionExhausted { digits: 20, .. }));
    }

    #[test]
    fn large_camera_columns_are_stochastic() {
        let m = k(6528, 0.2, 0.46 / 6528.0, 120);
        assert!(m.max_column_defect() < 1e-10);
        assert!(m.meta().precision_digits.unwrap() >= precision::MIN_DIGITS);
        assert!(m.meta().skipped_mass_bound < 1e-18);
    }

    #[test]
    fn lower_tail_bound_is_an_upper_bound() {
        let m = k(8, 0.9, 0.0, 12);
        for n in 0..=12 {
            let mut cum = 0.0;
            for c in 0..=8 {
                cum += m.get(c, n);
                assert!(cum <= lower_tail_bound(8, 0.9, n, c) + 1e-12);
            }
        }
    }
}
