//! Detector transfer matrices `G(c, n)`: the probability of `c` clicks given
//! `n` photons, for every construction the toolkit supports.
//!
//! Exact constructions (`bernoulli`, `finite`, `infinite`, the profile
//! forms of `profile`, `lowcount`, and compositions of these) are
//! column-stochastic up to a documented truncation bound. Approximate
//! constructions (`intense`, `exponential`) never fail on normalization;
//! they record the measured column defect in [`MatrixMeta`].

mod bernoulli;
mod coincidence;
mod finite;
mod infinite;
mod intense;
mod io;
mod lowcount;
pub(crate) mod precision;
mod profile;
mod weak;

pub use bernoulli::bernoulli_matrix;
pub use coincidence::{
    coincidence_histogram, general_coincidence_probability, DetectorArray,
};
pub use finite::{finite_pixel_matrix, finite_pixel_matrix_with};
pub use infinite::{dark_tail, infinite_pixel_matrix};
pub use intense::{
    effective_efficiency, improved_intense_matrix, intense_field_matrix, occupancy_distribution,
    occupancy_rational,
};
pub use io::{read_matrix, write_matrix};
pub use lowcount::profile_matrix_lowcount;
pub use precision::Precision;
pub use profile::{
    band_profile, profile_matrix_convolved, profile_matrix_exact, profile_matrix_exponential,
    profile_matrix_infinite,
};
pub use weak::exponential_approx_matrix;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default term budget for enumeration-based constructions.
pub const TERM_BUDGET: u128 = 10_000_000;

/// Probability mass the exact constructions may drop from a column's tails.
pub const TAIL_EPS: f64 = 1e-20;

/// Tolerance of the post-hoc column-sum check for exact constructions.
pub const COLUMN_TOL: f64 = 1e-10;

/// Per-arm detection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    /// Intensity transmissivity in front of the detector.
    pub transmissivity: f64,
    pub pixels: usize,
    /// Per-pixel quantum efficiency.
    pub efficiency: f64,
    /// Per-pixel dark-count probability.
    pub dark_prob: f64,
}

impl DetectorModel {
    pub fn new(transmissivity: f64, pixels: usize, efficiency: f64, dark_prob: f64) -> Result<Self> {
        let m = Self {
            transmissivity,
            pixels,
            efficiency,
            dark_prob,
        };
        m.validate()?;
        Ok(m)
    }

    /// Build from the overall dark mean `D = N d`.
    pub fn with_dark_mean(
        transmissivity: f64,
        pixels: usize,
        efficiency: f64,
        dark_mean: f64,
    ) -> Result<Self> {
        if pixels == 0 {
            return Err(Error::InvalidParameter("pixel count must be positive".into()));
        }
        Self::new(transmissivity, pixels, efficiency, dark_mean / pixels as f64)
    }

    pub fn validate(&self) -> Result<()> {
        check_prob("transmissivity", self.transmissivity)?;
        check_prob("efficiency", self.efficiency)?;
        if !(0.0..1.0).contains(&self.dark_prob) {
            return Err(Error::InvalidParameter(format!(
                "dark probability {} outside [0, 1)",
                self.dark_prob
            )));
        }
        if self.pixels == 0 {
            return Err(Error::InvalidParameter("pixel count must be positive".into()));
        }
        Ok(())
    }

    pub fn dark_mean(&self) -> f64 {
        self.pixels as f64 * self.dark_prob
    }

    /// Overall registration probability `T * eta`.
    pub fn tau(&self) -> f64 {
        self.transmissivity * self.efficiency
    }
}

pub(crate) fn check_prob(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidParameter(format!("{name} {v} outside [0, 1]")));
    }
    Ok(())
}

/// One illumination group of pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelGroup {
    pub nu: usize,
    /// Probability that a photon hits one given pixel of this group.
    pub tau: f64,
    pub eta: f64,
    pub d: f64,
}

impl PixelGroup {
    /// Probability that a photon is registered somewhere in this group.
    pub fn registration(&self) -> f64 {
        self.tau * self.nu as f64 * self.eta
    }

    pub fn dark_mean(&self) -> f64 {
        self.nu as f64 * self.d
    }
}

/// Pixels banded into illumination groups. `sum tau_j nu_j` is the probability
/// that a photon reaches the region at all; losses in front of the camera are
/// carried separately by the transmissivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelGroupProfile {
    pub groups: Vec<PixelGroup>,
}

impl PixelGroupProfile {
    pub fn new(groups: Vec<PixelGroup>) -> Result<Self> {
        let p = Self { groups };
        p.validate()?;
        Ok(p)
    }

    /// A single group that reproduces the uniform detector.
    pub fn uniform(pixels: usize, eta: f64, d: f64) -> Result<Self> {
        Self::new(vec![PixelGroup {
            nu: pixels,
            tau: 1.0 / pixels as f64,
            eta,
            d,
        }])
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::InvalidParameter("profile has no groups".into()));
        }
        for g in &self.groups {
            if g.nu == 0 {
                return Err(Error::InvalidParameter("empty pixel group".into()));
            }
            check_prob("group tau", g.tau)?;
            check_prob("group eta", g.eta)?;
            if !(0.0..1.0).contains(&g.d) {
                return Err(Error::InvalidParameter(format!("group dark rate {} outside [0, 1)", g.d)));
            }
        }
        let hit = self.hit_total();
        if hit > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "sum of tau_j nu_j = {hit} exceeds 1"
            )));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.groups.iter().map(|g| g.nu).sum()
    }

    pub fn hit_total(&self) -> f64 {
        self.groups.iter().map(|g| g.tau * g.nu as f64).sum()
    }

    /// Probability that a photon entering the camera is not registered.
    pub fn theta(&self) -> f64 {
        (1.0 - self.groups.iter().map(PixelGroup::registration).sum::<f64>()).max(0.0)
    }

    pub fn dark_mean(&self) -> f64 {
        self.groups.iter().map(PixelGroup::dark_mean).sum()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Read a `group,nu,tau,eta,d` file.
    pub fn read_csv<R: std::io::BufRead>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        let expected = ["group", "nu", "tau", "eta", "d"];
        if headers.len() != 5 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::Parse("expected header `group,nu,tau,eta,d`".into()));
        }
        let mut groups = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            groups.push(PixelGroup {
                nu: crate::dists::parse_field(&rec, 1)?,
                tau: crate::dists::parse_field(&rec, 2)?,
                eta: crate::dists::parse_field(&rec, 3)?,
                d: crate::dists::parse_field(&rec, 4)?,
            });
        }
        Self::new(groups)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "group,nu,tau,eta,d")?;
        for (j, g) in self.groups.iter().enumerate() {
            writeln!(w, "{},{},{:e},{:e},{:e}", j + 1, g.nu, g.tau, g.eta, g.d)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Identity,
    Bernoulli,
    ExactFinite,
    Infinite,
    Composed,
    Intense,
    ImprovedIntense,
    Exponential,
    ProfileExact,
    ProfileConvolved,
    ProfileInfinite,
    ProfileExponential,
    ProfileLowcount,
}

impl Variant {
    pub const ALL: [Variant; 13] = [
        Variant::Identity,
        Variant::Bernoulli,
        Variant::ExactFinite,
        Variant::Infinite,
        Variant::Composed,
        Variant::Intense,
        Variant::ImprovedIntense,
        Variant::Exponential,
        Variant::ProfileExact,
        Variant::ProfileConvolved,
        Variant::ProfileInfinite,
        Variant::ProfileExponential,
        Variant::ProfileLowcount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Identity => "identity",
            Variant::Bernoulli => "bernoulli",
            Variant::ExactFinite => "exact-finite",
            Variant::Infinite => "infinite",
            Variant::Composed => "composed",
            Variant::Intense => "intense",
            Variant::ImprovedIntense => "improved-intense",
            Variant::Exponential => "exponential",
            Variant::ProfileExact => "profile-exact",
            Variant::ProfileConvolved => "profile-convolved",
            Variant::ProfileInfinite => "profile-infinite",
            Variant::ProfileExponential => "profile-exponential",
            Variant::ProfileLowcount => "profile-lowcount",
        }
    }

    /// Whether the construction is column-stochastic by derivation.
    pub fn is_exact(self) -> bool {
        !matches!(
            self,
            Variant::Intense
                | Variant::ImprovedIntense
                | Variant::Exponential
                | Variant::ProfileExponential
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::InvalidParameter(format!(
                    "unknown matrix variant `{s}` (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

/// Provenance of a matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub variant: Variant,
    pub parameters: BTreeMap<String, f64>,
    /// Largest `|1 - column sum|` over all columns.
    pub max_column_defect: f64,
    /// Working precision of the extended-precision evaluation, if any.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub precision_digits: Option<u32>,
    /// Upper bound on the probability mass left out of any one column by
    /// restricting evaluation to the rows that can matter.
    #[serde(default)]
    pub skipped_mass_bound: f64,
}

/// Column-stochastic map from photon number `n` (columns) to click count `c` (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    values: Array2<f64>,
    meta: MatrixMeta,
}

impl TransferMatrix {
    /// Wrap raw values; the column defect is measured here.
    pub fn from_values(
        values: Array2<f64>,
        variant: Variant,
        parameters: BTreeMap<String, f64>,
    ) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Empty("transfer matrix has no entries".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{variant} matrix has negative or non-finite entries"
            )));
        }
        let mut m = Self {
            values,
            meta: MatrixMeta {
                variant,
                parameters,
                max_column_defect: 0.0,
                precision_digits: None,
                skipped_mass_bound: 0.0,
            },
        };
        m.meta.max_column_defect = m.max_column_defect();
        Ok(m)
    }

    pub fn identity(n_max: usize) -> Self {
        Self::from_values(Array2::eye(n_max + 1), Variant::Identity, BTreeMap::new())
            .expect("identity is valid")
    }

    pub(crate) fn with_precision(mut self, digits: Option<u32>, skipped: f64) -> Self {
        self.meta.precision_digits = digits;
        self.meta.skipped_mass_bound = skipped;
        self
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn meta(&self) -> &MatrixMeta {
        &self.meta
    }

    pub(crate) fn meta_mut(&mut self) -> &mut MatrixMeta {
        &mut self.meta
    }

    pub fn variant(&self) -> Variant {
        self.meta.variant
    }

    pub fn c_max(&self) -> usize {
        self.values.nrows() - 1
    }

    pub fn n_max(&self) -> usize {
        self.values.ncols() - 1
    }

    pub fn get(&self, c: usize, n: usize) -> f64 {
        self.values.get((c, n)).copied().unwrap_or(0.0)
    }

    pub fn column(&self, n: usize) -> Vec<f64> {
        self.values.column(n).to_vec()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.values.sum_axis(ndarray::Axis(0)).to_vec()
    }

    pub fn max_column_defect(&self) -> f64 {
        self.column_sums()
            .iter()
            .map(|s| (1.0 - s).abs())
            .fold(0.0, f64::max)
    }

    /// Restrict to photon numbers `0..=n_max`.
    pub fn truncate_columns(&self, n_max: usize) -> Result<Self> {
        if n_max > self.n_max() {
            return Err(Error::Dimension(format!(
                "matrix has {} columns, requested n_max {n_max}",
                self.values.ncols()
            )));
        }
        let mut out = self.clone();
        out.values = self.values.slice(s![.., ..=n_max]).to_owned();
        out.meta.max_column_defect = out.max_column_defect();
        Ok(out)
    }

    /// Zero-pad to `c_max` rows.
    pub fn padded_rows(&self, c_max: usize) -> Self {
        if c_max <= self.c_max() {
            return self.clone();
        }
        let mut values = Array2::zeros((c_max + 1, self.values.ncols()));
        values.slice_mut(s![..self.values.nrows(), ..]).assign(&self.values);
        let mut out = self.clone();
        out.values = values;
        out
    }
}

/// `G(c, n) = sum_m outer(c, m) inner(m, n)`: detection after a preceding
/// stage such as losses.
pub fn compose(outer: &TransferMatrix, inner: &TransferMatrix) -> Result<TransferMatrix> {
    let m_dim = inner.values.nrows();
    if outer.values.ncols() < m_dim {
        // rows of `inner` past the outer matrix must carry no mass
        let tail = inner.values.slice(s![outer.values.ncols().., ..]);
        if tail.iter().any(|&v| v != 0.0) {
            return Err(Error::Dimension(format!(
                "outer matrix covers {} intermediate values, inner produces {}",
                outer.values.ncols(),
                m_dim
            )));
        }
    }
    let k = m_dim.min(outer.values.ncols());
    let values = outer
        .values
        .slice(s![.., ..k])
        .dot(&inner.values.slice(s![..k, ..]));
    let mut parameters = BTreeMap::new();
    for (prefix, m) in [("outer", outer), ("inner", inner)] {
        for (key, v) in &m.meta.parameters {
            parameters.insert(format!("{prefix}.{key}"), *v);
        }
    }
    let digits = match (outer.meta.precision_digits, inner.meta.precision_digits) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    };
    let skipped = outer.meta.skipped_mass_bound + inner.meta.skipped_mass_bound;
    Ok(TransferMatrix::from_values(values, Variant::Composed, parameters)?
        .with_precision(digits, skipped))
}

/// Stack sparse columns into a dense matrix with rows up to the largest
/// reachable click count (at most `c_cap`).
pub(crate) fn assemble(columns: &[finite::Column], c_cap: usize) -> Array2<f64> {
    let rows = columns.iter().map(finite::Column::c_hi).max().unwrap_or(0).min(c_cap) + 1;
    let mut values = Array2::zeros((rows, columns.len()));
    for (n, col) in columns.iter().enumerate() {
        for (i, v) in col.values.iter().enumerate() {
            values[[col.c_lo + i, n]] = *v;
        }
    }
    values
}

pub(crate) fn params<const K: usize>(pairs: [(&str, f64); K]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}
