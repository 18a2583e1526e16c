//! Pixel-level Monte Carlo of the detection chain and the analytic forward
//! map from photon to click distributions.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detmodel::{DetectorModel, PixelGroup, PixelGroupProfile, TransferMatrix};
use crate::dists::{parse_field, JointDistribution, Kind};
use crate::error::{Error, Result};

/// `f = G_S p G_I^T`.
pub fn forward(p: &JointDistribution, g_s: &TransferMatrix, g_i: &TransferMatrix) -> Result<JointDistribution> {
    for (name, g, n) in [("signal", g_s, p.n_max_s()), ("idler", g_i, p.n_max_i())] {
        if g.n_max() < n {
            return Err(Error::Dimension(format!(
                "{name} matrix covers n <= {}, distribution needs n <= {n}",
                g.n_max()
            )));
        }
    }
    let gs = g_s.values().slice(ndarray::s![.., ..=p.n_max_s()]);
    let gi = g_i.values().slice(ndarray::s![.., ..=p.n_max_i()]);
    let f = gs.dot(p.values()).dot(&gi.t());
    JointDistribution::new(f, Kind::Click)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PixelAssignment {
    #[default]
    Uniform,
    ProfileWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DarkModel {
    /// Each unfired pixel fires with its dark probability.
    #[default]
    PerPixelBernoulli,
    /// `Poisson(D)` extra clicks, emulating an unbounded pixel count.
    PoissonTotal,
}

macro_rules! kebab_enum {
    ($t:ty, $($v:path => $s:literal),+) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($v => $s),+ })
            }
        }
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($v),)+
                    _ => Err(Error::InvalidParameter(format!("unknown value `{s}`"))),
                }
            }
        }
    };
}
kebab_enum!(PixelAssignment, PixelAssignment::Uniform => "uniform", PixelAssignment::ProfileWeighted => "profile-weighted");
kebab_enum!(DarkModel, DarkModel::PerPixelBernoulli => "per-pixel-bernoulli", DarkModel::PoissonTotal => "poisson-total");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
    #[serde(default)]
    pub pixel_assignment: PixelAssignment,
    #[serde(default)]
    pub dark_model: DarkModel,
}

impl SimConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self { trials, seed, pixel_assignment: PixelAssignment::Uniform, dark_model: DarkModel::PerPixelBernoulli }
    }
}

/// One detection arm: losses and efficiency from `model`, and optionally an
/// illumination profile that replaces the uniform pixel assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub model: DetectorModel,
    pub profile: Option<PixelGroupProfile>,
}

impl Arm {
    pub fn uniform(model: DetectorModel) -> Self {
        Self { model, profile: None }
    }

    pub fn with_profile(model: DetectorModel, profile: PixelGroupProfile) -> Self {
        Self { model, profile: Some(profile) }
    }

    /// Groups used by the sampler: the profile when profile-weighted, else
    /// one group covering the camera.
    fn groups(&self, assignment: PixelAssignment) -> Result<Vec<PixelGroup>> {
        match (assignment, &self.profile) {
            (PixelAssignment::ProfileWeighted, Some(p)) => {
                p.validate()?;
                Ok(p.groups.clone())
            }
            (PixelAssignment::ProfileWeighted, None) => Err(Error::InvalidParameter(
                "profile-weighted assignment needs a pixel profile".into(),
            )),
            (PixelAssignment::Uniform, _) => Ok(vec![PixelGroup {
                nu: self.model.pixels,
                tau: 1.0 / self.model.pixels as f64,
                eta: self.model.efficiency,
                d: self.model.dark_prob,
            }]),
        }
    }
}

/// Per-arm sampler state.
struct ArmSampler {
    transmissivity: f64,
    groups: Vec<PixelGroup>,
    /// First pixel index of each group.
    offsets: Vec<usize>,
    /// Group choice; the last index means the photon misses the camera.
    choose: Option<WeightedIndex<f64>>,
    dark: DarkModel,
}

impl ArmSampler {
    fn new(arm: &Arm, cfg: &SimConfig) -> Result<Self> {
        arm.model.validate()?;
        let groups = arm.groups(cfg.pixel_assignment)?;
        let mut offsets = Vec::with_capacity(groups.len());
        let mut acc = 0;
        for g in &groups {
            offsets.push(acc);
            acc += g.nu;
        }
        let mut weights: Vec<f64> = groups.iter().map(|g| g.tau * g.nu as f64).collect();
        let miss = (1.0 - weights.iter().sum::<f64>()).max(0.0);
        weights.push(miss);
        let choose = if groups.len() == 1 && miss < 1e-15 {
            None
        } else {
            Some(WeightedIndex::new(&weights).map_err(|e| Error::InvalidParameter(e.to_string()))?)
        };
        Ok(Self { transmissivity: arm.model.transmissivity, groups, offsets, choose, dark: cfg.dark_model })
    }

    fn clicks<R: Rng>(&self, photons: u64, rng: &mut R, fired: &mut Vec<usize>) -> usize {
        fired.clear();
        let survivors = if self.transmissivity >= 1.0 {
            photons
        } else {
            Binomial::new(photons, self.transmissivity).expect("valid transmissivity").sample(rng)
        };
        let mut per_group = vec![0usize; self.groups.len()];
        for _ in 0..survivors {
            let j = match &self.choose {
                None => 0,
                Some(w) => w.sample(rng),
            };
            if j == self.groups.len() {
                continue;
            }
            let g = &self.groups[j];
            if rng.random::<f64>() < g.eta {
                fired.push(self.offsets[j] + rng.random_range(0..g.nu));
            }
        }
        fired.sort_unstable();
        fired.dedup();
        for &px in fired.iter() {
            let j = self.offsets.partition_point(|&o| o <= px) - 1;
            per_group[j] += 1;
        }
        let mut total = fired.len();
        match self.dark {
            DarkModel::PerPixelBernoulli => {
                for (g, k) in self.groups.iter().zip(&per_group) {
                    if g.d > 0.0 {
                        total += Binomial::new((g.nu - k) as u64, g.d).expect("valid dark rate").sample(rng) as usize;
                    }
                }
            }
            DarkModel::PoissonTotal => {
                let mean: f64 = self.groups.iter().map(PixelGroup::dark_mean).sum();
                if mean > 0.0 {
                    total += Poisson::new(mean).expect("positive mean").sample(rng) as usize;
                }
            }
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameSample {
    pub clicks_s: usize,
    pub clicks_i: usize,
}

/// Integer click histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    counts: Array2<u64>,
}

impl Histogram {
    pub fn new(counts: Array2<u64>) -> Result<Self> {
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::Empty("histogram has no counts".into()));
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    pub fn to_distribution(&self) -> JointDistribution {
        let t = self.total() as f64;
        JointDistribution::new(self.counts.mapv(|c| c as f64 / t), Kind::Click).expect("counts are valid")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "c_s,c_i,count")?;
        for ((s, i), &c) in self.counts.indexed_iter() {
            if c > 0 {
                writeln!(w, "{s},{i},{c}")?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["c_s", "c_i", "count"] {
            return Err(Error::Parse("expected header `c_s,c_i,count`".into()));
        }
        let mut cells: Vec<(usize, usize, u64)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            cells.push((parse_field(&rec, 0)?, parse_field(&rec, 1)?, parse_field(&rec, 2)?));
        }
        if cells.is_empty() {
            return Err(Error::Empty("histogram file has no rows".into()));
        }
        let rows = cells.iter().map(|c| c.0).max().unwrap_or(0) + 1;
        let cols = cells.iter().map(|c| c.1).max().unwrap_or(0) + 1;
        let mut counts = Array2::zeros((rows, cols));
        for (s, i, c) in cells {
            counts[[s, i]] += c;
        }
        Self::new(counts)
    }
}

pub fn empirical_histogram(frames: &[FrameSample]) -> Result<Histogram> {
    if frames.is_empty() {
        return Err(Error::Empty("no frames".into()));
    }
    let rows = frames.iter().map(|f| f.clicks_s).max().unwrap_or(0) + 1;
    let cols = frames.iter().map(|f| f.clicks_i).max().unwrap_or(0) + 1;
    let mut counts = Array2::zeros((rows, cols));
    for f in frames {
        counts[[f.clicks_s, f.clicks_i]] += 1;
    }
    Histogram::new(counts)
}

/// Simulated frames with one RNG stream per frame index, so the result does
/// not depend on how frames are scheduled.
pub fn simulate_frames(p: &JointDistribution, signal: &Arm, idler: &Arm, cfg: &SimConfig) -> Result<Vec<FrameSample>> {
    if cfg.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let cells: Vec<(usize, usize)> = p.values().indexed_iter().filter(|(_, &w)| w > 0.0).map(|(ix, _)| ix).collect();
    let weights: Vec<f64> = cells.iter().map(|&(s, i)| p.get(s, i)).collect();
    let pick = WeightedIndex::new(&weights).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let s_arm = ArmSampler::new(signal, cfg)?;
    let i_arm = ArmSampler::new(idler, cfg)?;
    Ok((0..cfg.trials)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(buf_s, buf_i), frame| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(frame);
                let (n_s, n_i) = cells[pick.sample(&mut rng)];
                let clicks_s = s_arm.clicks(n_s as u64, &mut rng, buf_s);
                let clicks_i = i_arm.clicks(n_i as u64, &mut rng, buf_i);
                FrameSample { clicks_s, clicks_i }
            },
        )
        .collect())
}

/// Monte Carlo click histogram for photon distribution `p`.
pub fn simulate_clicks(p: &JointDistribution, signal: &Arm, idler: &Arm, cfg: &SimConfig) -> Result<Histogram> {
    empirical_histogram(&simulate_frames(p, signal, idler, cfg)?)
}

/// Flat key-value simulation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimFile {
    pub trials: u64,
    pub seed: u64,
    #[serde(default)]
    pub pixel_assignment: PixelAssignment,
    #[serde(default)]
    pub dark_model: DarkModel,
    pub t_s: f64,
    pub pixels_s: usize,
    pub eta_s: f64,
    pub d_s: f64,
    pub t_i: f64,
    pub pixels_i: usize,
    pub eta_i: f64,
    pub d_i: f64,
}

impl SimFile {
    pub fn config(&self) -> SimConfig {
        SimConfig {
            trials: self.trials,
            seed: self.seed,
            pixel_assignment: self.pixel_assignment,
            dark_model: self.dark_model,
        }
    }

    pub fn models(&self) -> Result<(DetectorModel, DetectorModel)> {
        Ok((
            DetectorModel::new(self.t_s, self.pixels_s, self.eta_s, self.d_s)?,
            DetectorModel::new(self.t_i, self.pixels_i, self.eta_i, self.d_i)?,
        ))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}
