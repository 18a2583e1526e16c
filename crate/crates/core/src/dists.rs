//! Photon-number and click distributions, and the statistics computed on them.
//!
//! Every statistic normalizes by the total mass of its input, so a truncated
//! (sub-normalized) distribution gives the moments of the renormalized one.

use std::io::{BufRead, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Default truncation budget: a distribution counts as normalized when its
/// total mass lies in `[1 - TRUNCATION_BUDGET, 1]`.
pub const TRUNCATION_BUDGET: f64 = 1e-10;

/// Relative slack under which an element counts as equal to the classical bound.
pub const VIOLATION_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// Indices are photon numbers `n`.
    Photon,
    /// Indices are click (photoelectron) counts `c`.
    Click,
}

/// Truncated joint distribution over `(n_s, n_i)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    values: Array2<f64>,
    kind: Kind,
}

/// One-dimensional distribution whose array position 0 sits at `offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution1D {
    pub values: Vec<f64>,
    pub offset: i64,
}

fn check_entries<'a>(it: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    for &v in it {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "distribution entry {v} is negative or not finite"
            )));
        }
    }
    Ok(())
}

impl JointDistribution {
    pub fn new(values: Array2<f64>, kind: Kind) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Empty("joint distribution has no cells".into()));
        }
        check_entries(values.iter())?;
        Ok(Self { values, kind })
    }

    /// Point mass at `(s, i)` on the smallest grid holding it.
    pub fn point(s: usize, i: usize, kind: Kind) -> Self {
        let mut values = Array2::zeros((s + 1, i + 1));
        values[[s, i]] = 1.0;
        Self { values, kind }
    }

    /// Product of two independent marginals (non-negative offsets only).
    pub fn product(a: &Distribution1D, b: &Distribution1D, kind: Kind) -> Result<Self> {
        if a.offset != 0 || b.offset != 0 {
            return Err(Error::InvalidParameter(
                "product marginals must start at index 0".into(),
            ));
        }
        let values =
            Array2::from_shape_fn((a.values.len(), b.values.len()), |(s, i)| {
                a.values[s] * b.values[i]
            });
        Self::new(values, kind)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn n_max_s(&self) -> usize {
        self.values.nrows() - 1
    }

    pub fn n_max_i(&self) -> usize {
        self.values.ncols() - 1
    }

    pub fn get(&self, s: usize, i: usize) -> f64 {
        self.values.get((s, i)).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.values.sum()
    }

    pub fn is_normalized(&self, budget: f64) -> bool {
        let t = self.total();
        t >= 1.0 - budget && t <= 1.0 + budget
    }

    /// Rescale to unit mass.
    pub fn normalized(&self) -> Result<Self> {
        let t = self.total();
        if t <= 0.0 {
            return Err(Error::Degenerate("distribution has zero mass".into()));
        }
        Ok(Self {
            values: &self.values / t,
            kind: self.kind,
        })
    }

    /// Zero-pad to at least the given bounds.
    pub fn padded(&self, n_max_s: usize, n_max_i: usize) -> Self {
        let rows = self.values.nrows().max(n_max_s + 1);
        let cols = self.values.ncols().max(n_max_i + 1);
        let mut values = Array2::zeros((rows, cols));
        values
            .slice_mut(ndarray::s![..self.values.nrows(), ..self.values.ncols()])
            .assign(&self.values);
        Self {
            values,
            kind: self.kind,
        }
    }

    /// Arms swapped: `q(n_i, n_s) = p(n_s, n_i)`.
    pub fn transposed(&self) -> Self {
        Self {
            values: self.values.t().to_owned(),
            kind: self.kind,
        }
    }

    pub fn entropy(&self) -> f64 {
        entropy_of(self.values.iter())
    }
}

impl Distribution1D {
    pub fn new(values: Vec<f64>, offset: i64) -> Result<Self> {
        check_entries(values.iter())?;
        Ok(Self { values, offset })
    }

    pub fn point(k: usize) -> Self {
        let mut values = vec![0.0; k + 1];
        values[k] = 1.0;
        Self { values, offset: 0 }
    }

    /// Physical index of array position `pos`.
    pub fn index(&self, pos: usize) -> i64 {
        self.offset + pos as i64
    }

    /// Probability at physical index `n` (zero outside the stored range).
    pub fn at(&self, n: i64) -> f64 {
        let pos = n - self.offset;
        if pos < 0 {
            return 0.0;
        }
        self.values.get(pos as usize).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> Result<f64> {
        let t = self.total();
        if t <= 0.0 {
            return Err(Error::Degenerate("distribution has zero mass".into()));
        }
        let s: f64 = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &p)| self.index(k) as f64 * p)
            .sum();
        Ok(s / t)
    }

    pub fn variance(&self) -> Result<f64> {
        let mu = self.mean()?;
        let t = self.total();
        let s: f64 = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let x = self.index(k) as f64 - mu;
                x * x * p
            })
            .sum();
        Ok(s / t)
    }

    pub fn entropy(&self) -> f64 {
        entropy_of(self.values.iter())
    }
}

/// Row and column sums.
pub fn marginals(p: &JointDistribution) -> (Distribution1D, Distribution1D) {
    let s = p.values.sum_axis(ndarray::Axis(1)).to_vec();
    let i = p.values.sum_axis(ndarray::Axis(0)).to_vec();
    (
        Distribution1D { values: s, offset: 0 },
        Distribution1D { values: i, offset: 0 },
    )
}

/// Raw moment `sum n_s^k n_i^l p(n_s, n_i)`, not normalized by total mass.
pub fn moment(p: &JointDistribution, k: u32, l: u32) -> f64 {
    let mut acc = 0.0;
    for ((s, i), &v) in p.values.indexed_iter() {
        if v != 0.0 {
            acc += (s as f64).powi(k as i32) * (i as f64).powi(l as i32) * v;
        }
    }
    acc
}

/// Means, variances and covariance of the mass-normalized distribution.
struct SecondOrder {
    mean_s: f64,
    mean_i: f64,
    var_s: f64,
    var_i: f64,
    cov: f64,
}

fn second_order(p: &JointDistribution) -> Result<SecondOrder> {
    let t = p.total();
    if t <= 0.0 {
        return Err(Error::Degenerate("distribution has zero mass".into()));
    }
    let mean_s = moment(p, 1, 0) / t;
    let mean_i = moment(p, 0, 1) / t;
    let (mut var_s, mut var_i, mut cov) = (0.0, 0.0, 0.0);
    for ((s, i), &v) in p.values.indexed_iter() {
        if v != 0.0 {
            let ds = s as f64 - mean_s;
            let di = i as f64 - mean_i;
            var_s += ds * ds * v;
            var_i += di * di * v;
            cov += ds * di * v;
        }
    }
    Ok(SecondOrder {
        mean_s,
        mean_i,
        var_s: var_s / t,
        var_i: var_i / t,
        cov: cov / t,
    })
}

/// Correlation coefficient of the two photon (or click) numbers.
pub fn covariance_coefficient(p: &JointDistribution) -> Result<f64> {
    let m = second_order(p)?;
    if m.var_s <= 0.0 || m.var_i <= 0.0 {
        return Err(Error::Degenerate(format!(
            "zero marginal variance (var_s={}, var_i={})",
            m.var_s, m.var_i
        )));
    }
    Ok((m.cov / (m.var_s * m.var_i).sqrt()).clamp(-1.0, 1.0))
}

/// Variance-to-mean ratio.
pub fn fano(m: &Distribution1D) -> Result<f64> {
    let mu = m.mean()?;
    if mu == 0.0 {
        return Err(Error::Degenerate("zero mean".into()));
    }
    Ok(m.variance()? / mu)
}

/// Distributions of `n_s + n_i` and `n_s - n_i`. The difference distribution
/// starts at `-n_max_i`.
pub fn sum_diff_distributions(p: &JointDistribution) -> (Distribution1D, Distribution1D) {
    let (ns, ni) = (p.n_max_s(), p.n_max_i());
    let mut plus = vec![0.0; ns + ni + 1];
    let mut minus = vec![0.0; ns + ni + 1];
    for ((s, i), &v) in p.values.indexed_iter() {
        plus[s + i] += v;
        minus[s + ni - i] += v;
    }
    (
        Distribution1D { values: plus, offset: 0 },
        Distribution1D {
            values: minus,
            offset: -(ni as i64),
        },
    )
}

/// Variance of `n_s - n_i` over the summed means; below one marks sub-shot-noise
/// correlations.
pub fn noise_reduction_r(p: &JointDistribution) -> Result<f64> {
    let m = second_order(p)?;
    let total_mean = m.mean_s + m.mean_i;
    if total_mean <= 0.0 {
        return Err(Error::Degenerate("zero total mean".into()));
    }
    let var_diff = m.var_s + m.var_i - 2.0 * m.cov;
    Ok(var_diff.max(0.0) / total_mean)
}

/// Log of the classical bound `<n_s>^n_s <n_i>^n_i / (n_s! n_i!) exp(-<n_s>-<n_i>)`.
pub fn classical_log_bound(n_s: usize, n_i: usize, mean_s: f64, mean_i: f64) -> f64 {
    fn log_pow(mean: f64, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else if mean == 0.0 {
            f64::NEG_INFINITY
        } else {
            n as f64 * mean.ln()
        }
    }
    log_pow(mean_s, n_s) + log_pow(mean_i, n_i)
        - ln_gamma(n_s as f64 + 1.0)
        - ln_gamma(n_i as f64 + 1.0)
        - mean_s
        - mean_i
}

/// Cells where `p` strictly exceeds the classical bound built from its own means.
pub fn classical_violation_mask(p: &JointDistribution) -> Array2<bool> {
    let t = p.total();
    let (mean_s, mean_i) = if t > 0.0 {
        (moment(p, 1, 0) / t, moment(p, 0, 1) / t)
    } else {
        (0.0, 0.0)
    };
    Array2::from_shape_fn(p.values.dim(), |(s, i)| {
        let v = p.values[[s, i]];
        if v <= 0.0 {
            return false;
        }
        let bound = classical_log_bound(s, i, mean_s, mean_i);
        v.ln() > bound + VIOLATION_RTOL
    })
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy_of<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    values
        .into_iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Total-variation distance between two joint distributions (grids padded).
pub fn total_variation(a: &JointDistribution, b: &JointDistribution) -> f64 {
    let rows = a.values.nrows().max(b.values.nrows());
    let cols = a.values.ncols().max(b.values.ncols());
    let mut acc = 0.0;
    for s in 0..rows {
        for i in 0..cols {
            acc += (a.get(s, i) - b.get(s, i)).abs();
        }
    }
    0.5 * acc
}

// ---- CSV -------------------------------------------------------------------

/// Write `n_s,n_i,p` rows for nonzero elements.
pub fn write_joint_csv<W: Write>(p: &JointDistribution, mut w: W) -> Result<()> {
    writeln!(w, "n_s,n_i,p")?;
    for ((s, i), &v) in p.values.indexed_iter() {
        if v != 0.0 {
            writeln!(w, "{s},{i},{v:e}")?;
        }
    }
    Ok(())
}

/// Read an `n_s,n_i,p` file. The grid is the smallest holding every row.
pub fn read_joint_csv<R: BufRead>(r: R, kind: Kind) -> Result<JointDistribution> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    if headers.len() != 3 || &headers[0] != "n_s" || &headers[1] != "n_i" || &headers[2] != "p" {
        return Err(Error::Parse(format!(
            "expected header `n_s,n_i,p`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let s: usize = parse_field(&rec, 0)?;
        let i: usize = parse_field(&rec, 1)?;
        let v: f64 = parse_field(&rec, 2)?;
        rows.push((s, i, v));
    }
    if rows.is_empty() {
        return Err(Error::Empty("distribution file has no rows".into()));
    }
    let ns = rows.iter().map(|r| r.0).max().unwrap_or(0);
    let ni = rows.iter().map(|r| r.1).max().unwrap_or(0);
    let mut values = Array2::zeros((ns + 1, ni + 1));
    for (s, i, v) in rows {
        values[[s, i]] += v;
    }
    JointDistribution::new(values, kind)
}

/// Write `n,p` rows (all stored entries, negative indices allowed).
pub fn write_1d_csv<W: Write>(d: &Distribution1D, mut w: W) -> Result<()> {
    writeln!(w, "n,p")?;
    for (k, &v) in d.values.iter().enumerate() {
        writeln!(w, "{},{v:e}", d.index(k))?;
    }
    Ok(())
}

pub fn read_1d_csv<R: BufRead>(r: R) -> Result<Distribution1D> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut rows: Vec<(i64, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        rows.push((parse_field(&rec, 0)?, parse_field(&rec, 1)?));
    }
    if rows.is_empty() {
        return Err(Error::Empty("1-D distribution file has no rows".into()));
    }
    let lo = rows.iter().map(|r| r.0).min().unwrap_or(0);
    let hi = rows.iter().map(|r| r.0).max().unwrap_or(0);
    let mut values = vec![0.0; (hi - lo + 1) as usize];
    for (n, v) in rows {
        values[(n - lo) as usize] += v;
    }
    Distribution1D::new(values, lo)
}

pub(crate) fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize) -> Result<T> {
    let raw = rec
        .get(idx)
        .ok_or_else(|| Error::Parse(format!("missing column {idx} in `{rec:?}`")))?;
    raw.parse()
        .map_err(|_| Error::Parse(format!("cannot parse `{raw}` in column {idx}")))
}
