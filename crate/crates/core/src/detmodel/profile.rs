//! Detector matrices for cameras whose pixels are banded into illumination
//! groups.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use rug::ops::Pow;
use rug::{Float, Integer};

use super::finite::{check_column, finite_pixel_matrix};
use super::infinite::dark_tail;
use super::precision::{self, with_retry, Attempt, Precision};
use super::{PixelGroup, PixelGroupProfile, TransferMatrix, Variant, TAIL_EPS, TERM_BUDGET};
use crate::error::{Error, Result};
use crate::numeric::{binom_cutoff, binom_pmf_vec, convolve, ln_choose, poisson_pmf_vec};

/// Group pixels into `m` intensity bands of width `I_max / m` and set each
/// group's hit probability proportional to its mean intensity.
pub fn band_profile(image: ArrayView2<f64>, m: usize, eta: f64, d: f64) -> Result<PixelGroupProfile> {
    if m == 0 {
        return Err(Error::InvalidParameter("band count must be positive".into()));
    }
    if image.is_empty() {
        return Err(Error::Empty("intensity image has no pixels".into()));
    }
    if image.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidParameter("intensity image has negative or non-finite pixels".into()));
    }
    let i_max = image.iter().copied().fold(0.0, f64::max);
    if i_max == 0.0 {
        return Err(Error::Degenerate("intensity image is all zero".into()));
    }
    let pixels = image.len();
    let width = i_max / m as f64;
    let mut count = vec![0usize; m];
    let mut sum = vec![0.0; m];
    for &v in image.iter() {
        let band = ((v / width).ceil() as usize).clamp(1, m) - 1;
        count[band] += 1;
        sum[band] += v;
    }
    let mean = image.iter().sum::<f64>() / pixels as f64;
    let groups = (0..m)
        .filter(|&j| count[j] > 0)
        .map(|j| PixelGroup {
            nu: count[j],
            tau: sum[j] / count[j] as f64 / (mean * pixels as f64),
            eta,
            d,
        })
        .collect();
    PixelGroupProfile::new(groups)
}

fn profile_params(profile: &PixelGroupProfile) -> std::collections::BTreeMap<String, f64> {
    let mut p = super::params([
        ("M", profile.len() as f64),
        ("N", profile.pixels() as f64),
        ("theta", profile.theta()),
        ("D", profile.dark_mean()),
    ]);
    for (j, g) in profile.groups.iter().enumerate() {
        let j = j + 1;
        p.insert(format!("nu_{j}"), g.nu as f64);
        p.insert(format!("tau_{j}"), g.tau);
        p.insert(format!("eta_{j}"), g.eta);
        p.insert(format!("d_{j}"), g.d);
    }
    p
}

/// Row count that covers every column up to `TAIL_EPS`.
pub(crate) fn exact_rows(profile: &PixelGroupProfile, n_max: usize) -> usize {
    let reg = 1.0 - profile.theta();
    let d_max = profile.groups.iter().map(|g| g.d).fold(0.0, f64::max);
    let pixels = profile.pixels() as u64;
    let hi = binom_cutoff(n_max as u64, reg, TAIL_EPS / 2.0) + binom_cutoff(pixels, d_max, TAIL_EPS / 2.0);
    hi.min(pixels) as usize
}

/// Sums `K(c, n) = sum_t coef[c][t] * base[t]^n`, the common shape of the
/// inclusion-exclusion constructions.
pub(crate) struct PowerSums {
    pub bases: Vec<Float>,
    /// Per row `c`: `(base index, signed coefficient)`.
    pub coefs: Vec<Vec<(usize, Float)>>,
}

impl PowerSums {
    /// log10 of the largest `sum_t |coef| |base|^n` over all entries.
    pub(crate) fn log10_magnitude(&self, n_max: usize) -> f64 {
        let lb: Vec<f64> = self.bases.iter().map(|b| b.clone().abs().ln().to_f64()).collect();
        let mut worst = f64::NEG_INFINITY;
        for row in &self.coefs {
            for n in [0, n_max] {
                let terms: Vec<f64> = row
                    .iter()
                    .map(|(t, a)| a.clone().abs().ln().to_f64() + if n == 0 { 0.0 } else { n as f64 * lb[*t] })
                    .collect();
                worst = worst.max(crate::numeric::log_sum_exp(&terms));
            }
        }
        worst / std::f64::consts::LN_10
    }

    pub(crate) fn evaluate(&self, n_max: usize, bits: u32) -> Array2<f64> {
        let rows = self.coefs.len();
        // terms sharing a base collapse to one coefficient
        let merged: Vec<Vec<(usize, Float)>> = self
            .coefs
            .iter()
            .map(|row| {
                let mut acc: Vec<Option<Float>> = vec![None; self.bases.len()];
                for (t, a) in row {
                    match &mut acc[*t] {
                        Some(x) => *x += a,
                        slot => *slot = Some(Float::with_val(bits, a)),
                    }
                }
                acc.into_iter().enumerate().filter_map(|(t, a)| a.map(|a| (t, a))).collect()
            })
            .collect();
        let mut out = Array2::zeros((rows, n_max + 1));
        let mut powers: Vec<Float> = self.bases.iter().map(|_| Float::with_val(bits, 1)).collect();
        for n in 0..=n_max {
            for (c, row) in merged.iter().enumerate() {
                let mut acc = Float::with_val(bits, 0);
                for (t, a) in row {
                    acc += Float::with_val(bits, a * &powers[*t]);
                }
                out[[c, n]] = acc.to_f64();
            }
            for (p, b) in powers.iter_mut().zip(&self.bases) {
                *p *= b;
            }
        }
        out
    }
}

/// Evaluate a power-sum construction with automatic or fixed precision;
/// columns are checked for sign and (when `full_support`) normalization.
pub(crate) fn evaluate_checked(
    build: impl Fn(u32) -> PowerSums,
    n_max: usize,
    precision: Precision,
    full_support: bool,
) -> Result<(Array2<f64>, u32)> {
    let auto = precision::digits_for_magnitude(build(64).log10_magnitude(n_max));
    with_retry(precision, 0, auto, |digits| {
        let bits = precision::bits_for_digits(digits);
        let mut values = build(bits).evaluate(n_max, bits);
        let mut worst = 0.0f64;
        for n in 0..=n_max {
            let col = values.column(n).to_vec();
            if full_support {
                match check_column(col) {
                    Attempt::Ok(v) => values.column_mut(n).assign(&ndarray::Array1::from(v)),
                    Attempt::Failed { defect } => worst = worst.max(defect),
                }
            } else if col.iter().any(|v| !v.is_finite() || *v < -1e-14) {
                worst = f64::INFINITY;
            } else {
                values.column_mut(n).mapv_inplace(|v| v.max(0.0));
            }
        }
        if worst > 0.0 {
            Attempt::Failed { defect: worst }
        } else {
            Attempt::Ok(values)
        }
    })
}

pub(crate) fn float_binomial(bits: u32, n: usize, k: usize) -> Float {
    Float::with_val(bits, Integer::from(Integer::binomial_u(n as u32, k as u32)))
}

/// Per-pixel registration `tau_k eta_k` and `Theta` at the given precision.
fn group_rates(profile: &PixelGroupProfile, bits: u32) -> (Vec<Float>, Float) {
    let rates: Vec<Float> = profile
        .groups
        .iter()
        .map(|g| Float::with_val(bits, g.tau) * Float::with_val(bits, g.eta))
        .collect();
    let mut theta = Float::with_val(bits, 1);
    for (r, g) in rates.iter().zip(&profile.groups) {
        theta -= Float::with_val(bits, r * g.nu as u32);
    }
    (rates, theta)
}

/// All vectors of `m` non-negative integers with sum at most `max`.
pub(crate) fn bounded_vectors(m: usize, max: usize) -> Vec<Vec<usize>> {
    fn rec(m: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur.push(v);
            rec(m, left - v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, max, &mut Vec::with_capacity(m), &mut out);
    out
}

pub(crate) fn count_bounded(m: usize, max: usize) -> u128 {
    // C(max + m, m)
    let mut r: u128 = 1;
    for i in 1..=m as u128 {
        r = r * (max as u128 + i) / i;
    }
    r
}

/// Exact profile matrix by inclusion-exclusion over per-group registration
/// patterns, in extended precision.
pub fn profile_matrix_exact(
    profile: &PixelGroupProfile,
    n_max: usize,
    precision: Precision,
) -> Result<TransferMatrix> {
    profile.validate()?;
    let c_max = exact_rows(profile, n_max);
    let m = profile.len();
    let terms = count_bounded(2 * m, c_max);
    if terms > TERM_BUDGET {
        return Err(Error::BudgetExceeded { terms, budget: TERM_BUDGET });
    }
    let lvecs = bounded_vectors(m, c_max);
    let build = |bits: u32| exact_power_sums(profile, &lvecs, c_max, bits);
    let (values, digits) = evaluate_checked(build, n_max, precision, true)?;
    Ok(TransferMatrix::from_values(values, Variant::ProfileExact, profile_params(profile))?
        .with_precision(Some(digits), TAIL_EPS))
}

fn exact_power_sums(profile: &PixelGroupProfile, lvecs: &[Vec<usize>], c_max: usize, bits: u32) -> PowerSums {
    let (rates, theta) = group_rates(profile, bits);
    let keep: Vec<Float> = profile
        .groups
        .iter()
        .map(|g| Float::with_val(bits, 1) - Float::with_val(bits, g.d))
        .collect();
    let rows: Vec<(Float, Vec<Vec<(usize, Float)>>)> = lvecs
        .par_iter()
        .enumerate()
        .map(|(t, lv)| {
            let mut base = theta.clone();
            for (l, r) in lv.iter().zip(&rates) {
                base += Float::with_val(bits, r * *l as u32);
            }
            // W(c) = conv_k a_k(., l_k), a_k(c) = C(nu,c) C(c,l) (-1)^l (1-d)^(nu-l)
            let mut w: Vec<Float> = vec![Float::with_val(bits, 1)];
            for ((g, &l), kp) in profile.groups.iter().zip(lv).zip(&keep) {
                let top = g.nu.min(c_max);
                let mut a = vec![Float::with_val(bits, 0); top + 1];
                if l <= top {
                    let mut fac = Float::with_val(bits, kp.pow((g.nu - l) as u32));
                    if l % 2 == 1 {
                        fac = -fac;
                    }
                    for (c, slot) in a.iter_mut().enumerate().skip(l) {
                        *slot = Float::with_val(bits, &fac * float_binomial(bits, g.nu, c))
                            * float_binomial(bits, c, l);
                    }
                }
                w = convolve_floats(&w, &a, c_max, bits);
            }
            let per_c = w
                .into_iter()
                .enumerate()
                .map(|(c, v)| if c % 2 == 1 { vec![(t, -v)] } else { vec![(t, v)] })
                .collect();
            (base, per_c)
        })
        .collect();
    let mut coefs: Vec<Vec<(usize, Float)>> = vec![Vec::new(); c_max + 1];
    let mut bases = Vec::with_capacity(rows.len());
    for (base, per_c) in rows {
        bases.push(base);
        for (c, entries) in per_c.into_iter().enumerate() {
            coefs[c].extend(entries.into_iter().filter(|(_, v)| !v.is_zero()));
        }
    }
    PowerSums { bases, coefs }
}

fn convolve_floats(a: &[Float], b: &[Float], max: usize, bits: u32) -> Vec<Float> {
    let len = (a.len() + b.len() - 1).min(max + 1);
    let mut out = vec![Float::with_val(bits, 0); len];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            if i + j >= len {
                break;
            }
            out[i + j] += Float::with_val(bits, x * y);
        }
    }
    out
}

/// Profile matrix as a convolution over groups of exact per-group matrices:
/// photons are split multinomially across groups (and the unexposed
/// remainder), and each group responds as an independent uniform camera.
pub fn profile_matrix_convolved(
    profile: &PixelGroupProfile,
    n_max: usize,
    precision: Precision,
) -> Result<TransferMatrix> {
    profile.validate()?;
    let mut per_group = Vec::with_capacity(profile.len());
    for g in &profile.groups {
        per_group.push(finite_pixel_matrix(g.nu, g.eta, g.d, n_max, precision)?);
    }
    // r[c][m]: clicks given m photons spread over the groups combined so far
    let mut r = per_group[0].values().clone();
    let mut hit = profile.groups[0].tau * profile.groups[0].nu as f64;
    for (g, k) in profile.groups.iter().zip(&per_group).skip(1) {
        let share = g.tau * g.nu as f64;
        let total = hit + share;
        let frac = if total > 0.0 { share / total } else { 0.0 };
        let rows = (r.nrows() + k.values().nrows() - 1).min(profile.pixels() + 1);
        let next: Vec<Vec<f64>> = (0..=n_max)
            .into_par_iter()
            .map(|m| {
                let split = binom_pmf_vec(m as u64, frac);
                let mut col = vec![0.0; rows];
                for (b, w) in split.iter().enumerate() {
                    if *w == 0.0 {
                        continue;
                    }
                    let a = m - b;
                    for (i, x) in r.column(a).iter().enumerate() {
                        if *x == 0.0 {
                            continue;
                        }
                        for (j, y) in k.values().column(b).iter().enumerate() {
                            if i + j < rows {
                                col[i + j] += w * x * y;
                            }
                        }
                    }
                }
                col
            })
            .collect();
        r = Array2::from_shape_fn((rows, n_max + 1), |(c, m)| next[m][c]);
        hit = total;
    }
    // photons that miss every group leave the dark counts unchanged
    let mut values = Array2::zeros((r.nrows(), n_max + 1));
    for n in 0..=n_max {
        for (m, w) in binom_pmf_vec(n as u64, hit).into_iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for c in 0..r.nrows() {
                values[[c, n]] += w * r[[c, m]];
            }
        }
    }
    let digits = per_group.iter().filter_map(|k| k.meta().precision_digits).max();
    let skipped = per_group.iter().map(|k| k.meta().skipped_mass_bound).sum();
    Ok(TransferMatrix::from_values(values, Variant::ProfileConvolved, profile_params(profile))?
        .with_precision(digits, skipped))
}

/// Many-pixel limit of the profile matrix: registered photons are split
/// multinomially across groups, each group adds Poisson dark counts.
pub fn profile_matrix_infinite(
    profile: &PixelGroupProfile,
    n_max: usize,
    c_max: Option<usize>,
) -> Result<TransferMatrix> {
    profile.validate()?;
    let c_max = c_max.unwrap_or(n_max + dark_tail(profile.dark_mean()));
    let mut dark = vec![1.0];
    for g in &profile.groups {
        dark = convolve(&dark, &poisson_pmf_vec(g.dark_mean(), c_max));
        dark.truncate(c_max + 1);
    }
    let reg: f64 = profile.groups.iter().map(PixelGroup::registration).sum();
    let mut values = Array2::zeros((c_max + 1, n_max + 1));
    for n in 0..=n_max {
        // summing the multinomial over allocations with fixed total L
        let by_total = binom_pmf_vec(n as u64, reg.min(1.0));
        for (c, v) in convolve(&by_total, &dark).into_iter().take(c_max + 1).enumerate() {
            values[[c, n]] = v;
        }
    }
    TransferMatrix::from_values(values, Variant::ProfileInfinite, profile_params(profile))
}

/// Weak-signal profile approximation, evaluated in log space.
pub fn profile_matrix_exponential(
    profile: &PixelGroupProfile,
    n_max: usize,
    c_max: Option<usize>,
) -> Result<TransferMatrix> {
    profile.validate()?;
    let theta = profile.theta();
    if theta <= 0.0 {
        return Err(Error::InvalidParameter("exponential profile form needs Theta > 0".into()));
    }
    let pixels = profile.pixels();
    let c_max = c_max.unwrap_or(n_max + dark_tail(profile.dark_mean())).min(pixels);
    let m = profile.len() as f64;
    let mut values = Array2::zeros((c_max + 1, n_max + 1));
    for n in 0..=n_max {
        let mut acc = vec![1.0];
        for g in &profile.groups {
            let rate = g.d * theta + n as f64 * g.tau * g.eta;
            let top = g.nu.min(c_max);
            let e: Vec<f64> = (0..=top)
                .map(|c| {
                    let c = c as f64;
                    let dark = if g.d == 0.0 { 0.0 } else { (g.nu as f64 - c) * (-g.d).ln_1p() };
                    let hit = if c == 0.0 { 0.0 } else { c * (rate / theta).ln() };
                    // Theta^n is spread evenly over the groups
                    (ln_choose(g.nu as f64, c) + dark + hit + n as f64 * theta.ln() / m).exp()
                })
                .collect();
            acc = convolve(&acc, &e);
            acc.truncate(c_max + 1);
        }
        for (c, v) in acc.into_iter().enumerate() {
            values[[c, n]] = v;
        }
    }
    TransferMatrix::from_values(values, Variant::ProfileExponential, profile_params(profile))
}
