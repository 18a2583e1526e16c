//! Low-count profile matrix: inclusion-exclusion over the subsets of the
//! registered clicks, with clicks assigned to groups in order.

use std::collections::HashMap;

use rug::ops::Pow;
use rug::Float;

use super::precision::Precision;
use super::profile::{evaluate_checked, exact_rows, float_binomial, PowerSums};
use super::{PixelGroupProfile, TransferMatrix, Variant, TAIL_EPS, TERM_BUDGET};
use crate::error::{Error, Result};

/// Number of aggregated terms for all click vectors up to `c_max`: each
/// split `(c_1, ..., c_M)` contributes `prod (c_j + 1)` subset-size vectors.
fn term_count(profile: &PixelGroupProfile, c_max: usize) -> u128 {
    // ways[c] = weighted number of group-wise splits of c clicks
    let mut ways = vec![0u128; c_max + 1];
    ways[0] = 1;
    for g in &profile.groups {
        let mut next = vec![0u128; c_max + 1];
        for (c, w) in ways.iter().enumerate() {
            for k in 0..=g.nu.min(c_max - c) {
                next[c + k] = next[c + k].saturating_add(w.saturating_mul(k as u128 + 1));
            }
        }
        ways = next;
    }
    ways.iter().fold(0u128, |a, w| a.saturating_add(*w))
}

fn splits(profile: &PixelGroupProfile, c: usize) -> Vec<Vec<usize>> {
    let caps: Vec<usize> = profile.groups.iter().map(|g| g.nu.min(c)).collect();
    boxes(&caps, Some(c))
}

/// All vectors `v` with `v_j <= caps_j`, optionally with a fixed sum.
fn boxes(caps: &[usize], sum: Option<usize>) -> Vec<Vec<usize>> {
    fn rec(caps: &[usize], left: Option<usize>, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == caps.len() {
            if left.is_none_or(|l| l == 0) {
                out.push(cur.clone());
            }
            return;
        }
        let top = left.map_or(caps[cur.len()], |l| l.min(caps[cur.len()]));
        for v in 0..=top {
            cur.push(v);
            rec(caps, left.map(|l| l - v), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(caps, sum, &mut Vec::new(), &mut out);
    out
}

/// One aggregated term: click split and registered-subset counts per group.
/// The subsets of the `c` ordered clicks (the first `c_1` in group 1, and so
/// on) sharing these counts number `prod C(c_j, a_j)`.
struct Term {
    c: usize,
    split: Vec<usize>,
    subset: Vec<usize>,
}

fn enumerate_terms(profile: &PixelGroupProfile, c_max: usize) -> Vec<Term> {
    let mut terms = Vec::new();
    for c in 0..=c_max {
        for split in splits(profile, c) {
            for subset in boxes(&split, None) {
                terms.push(Term { c, split: split.clone(), subset });
            }
        }
    }
    terms
}

fn power_sums(profile: &PixelGroupProfile, terms: &[Term], c_max: usize, bits: u32) -> PowerSums {
    let rates: Vec<Float> = profile
        .groups
        .iter()
        .map(|g| Float::with_val(bits, g.tau) * Float::with_val(bits, g.eta))
        .collect();
    let keep: Vec<Float> = profile
        .groups
        .iter()
        .map(|g| Float::with_val(bits, 1) - Float::with_val(bits, g.d))
        .collect();
    let mut theta = Float::with_val(bits, 1);
    for (r, g) in rates.iter().zip(&profile.groups) {
        theta -= Float::with_val(bits, r * g.nu as u32);
    }
    let group_choose: Vec<Vec<Float>> = profile
        .groups
        .iter()
        .map(|g| (0..=c_max.min(g.nu)).map(|c| float_binomial(bits, g.nu, c)).collect())
        .collect();
    let small_choose: Vec<Vec<Float>> =
        (0..=c_max).map(|c| (0..=c).map(|a| float_binomial(bits, c, a)).collect()).collect();
    let keep_pow: Vec<Vec<Float>> = profile
        .groups
        .iter()
        .zip(&keep)
        .map(|(g, kp)| (0..=c_max.min(g.nu)).map(|a| Float::with_val(bits, kp.pow((g.nu - a) as u32))).collect())
        .collect();
    let mut index: HashMap<&[usize], usize> = HashMap::new();
    let mut bases = Vec::new();
    let mut coefs: Vec<Vec<(usize, Float)>> = vec![Vec::new(); c_max + 1];
    for t in terms {
        let idx = *index.entry(&t.subset).or_insert_with(|| {
            let mut b = theta.clone();
            for (a, r) in t.subset.iter().zip(&rates) {
                b += Float::with_val(bits, r * *a as u32);
            }
            bases.push(b);
            bases.len() - 1
        });
        let mut coef = Float::with_val(bits, 1);
        for (j, (&cj, &aj)) in t.split.iter().zip(&t.subset).enumerate() {
            coef *= &group_choose[j][cj];
            coef *= &small_choose[cj][aj];
            coef *= &keep_pow[j][aj];
        }
        let size: usize = t.subset.iter().sum();
        if (t.c - size) % 2 == 1 {
            coef = -coef;
        }
        coefs[t.c].push((idx, coef));
    }
    PowerSums { bases, coefs }
}

/// Profile matrix for click counts up to `c_max` (default: the full
/// support), refused above the term budget.
pub fn profile_matrix_lowcount(
    profile: &PixelGroupProfile,
    n_max: usize,
    c_max: Option<usize>,
    precision: Precision,
) -> Result<TransferMatrix> {
    profile.validate()?;
    let support = exact_rows(profile, n_max);
    let c_max = c_max.unwrap_or(support).min(profile.pixels());
    let count = term_count(profile, c_max);
    if count > TERM_BUDGET {
        return Err(Error::BudgetExceeded { terms: count, budget: TERM_BUDGET });
    }
    let terms = enumerate_terms(profile, c_max);
    let build = |bits: u32| power_sums(profile, &terms, c_max, bits);
    let (values, digits) = evaluate_checked(build, n_max, precision, c_max >= support)?;
    let mut params = super::params([("M", profile.len() as f64), ("N", profile.pixels() as f64), ("c_max", c_max as f64)]);
    params.insert("theta".into(), profile.theta());
    let skipped = if c_max >= support { TAIL_EPS } else { 0.0 };
    Ok(TransferMatrix::from_values(values, Variant::ProfileLowcount, params)?.with_precision(Some(digits), skipped))
}
