//! Intense-field approximations built on photon occupancy statistics.

use ndarray::Array2;
use rug::{Integer, Rational};

use super::infinite::dark_tail;
use super::{bernoulli_matrix, compose, params, DetectorModel, TransferMatrix, Variant};
use crate::dists::Distribution1D;
use crate::error::{Error, Result};
use crate::numeric::{binom_pmf_vec, convolve, poisson_pmf_vec};

fn binomial(n: usize, k: usize) -> Integer {
    Integer::from(Integer::binomial_u(n as u32, k as u32))
}

/// Exact occupancy weights `gamma(m2, m1)` for `m2 = 0..=min(m1, N)`: the
/// probability that `m1` indistinguishable photons occupy exactly `m2` of
/// `N` pixels when all occupation patterns are equally likely.
pub fn occupancy_rational(pixels: usize, m1: usize) -> Result<Vec<Rational>> {
    if pixels == 0 {
        return Err(Error::InvalidParameter("pixel count must be positive".into()));
    }
    if m1 == 0 {
        return Ok(vec![Rational::from(1)]);
    }
    let total = binomial(pixels + m1 - 1, pixels - 1);
    let mut out = vec![Rational::new()];
    for m2 in 1..=m1.min(pixels) {
        let num = binomial(pixels, m2) * binomial(m1 - 1, m2 - 1);
        out.push(Rational::from((num, total.clone())));
    }
    Ok(out)
}

pub fn occupancy_distribution(pixels: usize, m1: usize) -> Result<Distribution1D> {
    let w = occupancy_rational(pixels, m1)?;
    Distribution1D::new(w.iter().map(Rational::to_f64).collect(), 0)
}

/// Floating-point occupancy weights, for matrix assembly. Built from the
/// ratio `gamma(m2 + 1) / gamma(m2) = (N - m2)(m1 - m2) / ((m2 + 1) m2)` and
/// normalized.
fn occupancy_f64(pixels: usize, m1: usize) -> Vec<f64> {
    if m1 == 0 {
        return vec![1.0];
    }
    let top = m1.min(pixels);
    let mut logw = vec![f64::NEG_INFINITY; top + 1];
    logw[1] = 0.0;
    for m2 in 1..top {
        let r = ((pixels - m2) as f64 * (m1 - m2) as f64) / ((m2 + 1) as f64 * m2 as f64);
        logw[m2 + 1] = logw[m2] + r.ln();
    }
    let peak = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logw.iter().map(|l| (l - peak).exp()).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// `1 - exp(-eta mu)`: the efficiency of one pixel receiving `mu` photons
/// on average.
pub fn effective_efficiency(eta: f64, mu: f64) -> Result<f64> {
    super::check_prob("efficiency", eta)?;
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("mean occupation {mu} must be finite and >= 0")));
    }
    Ok(-(-eta * mu).exp_m1())
}

fn default_rows(model: &DetectorModel, n_max: usize) -> usize {
    n_max.min(model.pixels) + dark_tail(model.dark_mean())
}

fn model_params(model: &DetectorModel) -> std::collections::BTreeMap<String, f64> {
    params([
        ("T", model.transmissivity),
        ("N", model.pixels as f64),
        ("eta", model.efficiency),
        ("d", model.dark_prob),
        ("D", model.dark_mean()),
    ])
}

/// `sum_m1 sum_m2 Kinf(c, m2) gamma(m2, m1) K0(m1, n)` with `Kinf` the
/// infinite-pixel matrix at `tau = eta` and `K0` the loss matrix.
pub fn intense_field_matrix(model: &DetectorModel, n_max: usize) -> Result<TransferMatrix> {
    model.validate()?;
    let rows = default_rows(model, n_max);
    let m2_max = n_max.min(model.pixels);
    let kinf = super::infinite_pixel_matrix(model.efficiency, model.dark_mean(), m2_max, Some(rows))?;
    let mut h = Array2::zeros((rows + 1, n_max + 1));
    for m1 in 0..=n_max {
        for (m2, g) in occupancy_f64(model.pixels, m1).into_iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for c in 0..=rows {
                h[[c, m1]] += g * kinf.get(c, m2);
            }
        }
    }
    finish(h, model, n_max, Variant::Intense)
}

/// Occupancy-weighted clicks where each exposed pixel fires with the
/// effective efficiency for its mean occupation `m / m2`.
pub fn improved_intense_matrix(model: &DetectorModel, n_max: usize) -> Result<TransferMatrix> {
    model.validate()?;
    let rows = default_rows(model, n_max);
    let dark = poisson_pmf_vec(model.dark_mean(), rows);
    let mut gamma = Array2::zeros((rows + 1, n_max + 1));
    for m in 0..=n_max {
        // fired-pixel distribution before dark counts
        let mut fired = vec![0.0; m.min(model.pixels) + 1];
        if m == 0 {
            fired[0] = 1.0;
        }
        for (m2, g) in occupancy_f64(model.pixels, m).into_iter().enumerate().skip(1) {
            if g == 0.0 {
                continue;
            }
            let q = effective_efficiency(model.efficiency, m as f64 / m2 as f64)?;
            for (l, b) in binom_pmf_vec(m2 as u64, q).into_iter().enumerate() {
                fired[l] += g * b;
            }
        }
        for (c, v) in convolve(&fired, &dark).into_iter().take(rows + 1).enumerate() {
            gamma[[c, m]] = v;
        }
    }
    finish(gamma, model, n_max, Variant::ImprovedIntense)
}

fn finish(
    inner: Array2<f64>,
    model: &DetectorModel,
    n_max: usize,
    variant: Variant,
) -> Result<TransferMatrix> {
    let stage = TransferMatrix::from_values(inner, variant, model_params(model))?;
    let loss = bernoulli_matrix(model.transmissivity, n_max)?;
    let g = compose(&stage, &loss)?;
    TransferMatrix::from_values(g.values().clone(), variant, model_params(model))
}
