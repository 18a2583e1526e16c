//! Multimode signal-plus-noise model: paired thermal modes shared by both
//! arms plus independent thermal noise in each arm, its click moments and a
//! moment-matching fit with minimum-entropy selection.

use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dists::{moment, Distribution1D, JointDistribution, Kind};
use crate::error::{Error, Result};
use crate::numeric::poisson_pmf_vec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitParams {
    pub m_p: f64,
    pub b_p: f64,
    pub m_s: f64,
    pub b_s: f64,
    pub m_i: f64,
    pub b_i: f64,
    pub tau_s: f64,
    pub tau_i: f64,
    pub d_s: f64,
    pub d_i: f64,
}

impl FitParams {
    /// Photon-level model with perfect detection and no dark counts.
    pub fn photons(m_p: f64, b_p: f64, m_s: f64, b_s: f64, m_i: f64, b_i: f64) -> Self {
        Self { m_p, b_p, m_s, b_s, m_i, b_i, tau_s: 1.0, tau_i: 1.0, d_s: 0.0, d_i: 0.0 }
    }

    pub fn with_detection(self, tau_s: f64, tau_i: f64, d_s: f64, d_i: f64) -> Self {
        Self { tau_s, tau_i, d_s, d_i, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("m_p", self.m_p),
            ("b_p", self.b_p),
            ("m_s", self.m_s),
            ("b_s", self.b_s),
            ("m_i", self.m_i),
            ("b_i", self.b_i),
            ("d_s", self.d_s),
            ("d_i", self.d_i),
        ];
        for (name, v) in all {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        for (name, t) in [("tau_s", self.tau_s), ("tau_i", self.tau_i)] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidParameter(format!("{name} = {t} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Mean photon numbers per arm.
    pub fn photon_means(&self) -> (f64, f64) {
        let pair = self.m_p * self.b_p;
        (pair + self.m_s * self.b_s, pair + self.m_i * self.b_i)
    }
}

/// `(1 + b)^-m (b / (1 + b))^n Gamma(n + m) / (n! Gamma(m))` for `n < len`.
fn thermal_vec(m: f64, b: f64, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    if len == 0 {
        return out;
    }
    if m == 0.0 || b == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ln_ratio = (b / (1.0 + b)).ln();
    let mut lp = -m * b.ln_1p();
    for (n, slot) in out.iter_mut().enumerate() {
        *slot = lp.exp();
        lp += ((n as f64 + m) / (n as f64 + 1.0)).ln() + ln_ratio;
    }
    out
}

/// Mandel-Rice distribution of `m` thermal modes with mean `b` photons each,
/// on `0..=n_max`.
pub fn multimode_thermal(m: f64, b: f64, n_max: usize) -> Result<Distribution1D> {
    if !(m >= 0.0 && m.is_finite() && b >= 0.0 && b.is_finite()) {
        return Err(Error::InvalidParameter(format!("mode count {m} and mean {b} must be finite and >= 0")));
    }
    Distribution1D::new(thermal_vec(m, b, n_max + 1), 0)
}

/// Joint photon-number distribution of the model on `0..=n_max_s` x
/// `0..=n_max_i`; detection parameters are ignored.
pub fn model_distribution(params: &FitParams, n_max_s: usize, n_max_i: usize) -> Result<JointDistribution> {
    params.validate()?;
    let pair = thermal_vec(params.m_p, params.b_p, n_max_s.min(n_max_i) + 1);
    let ns = thermal_vec(params.m_s, params.b_s, n_max_s + 1);
    let ni = thermal_vec(params.m_i, params.b_i, n_max_i + 1);
    let mut p = Array2::zeros((n_max_s + 1, n_max_i + 1));
    for (k, &w) in pair.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (a, &x) in ns[..=n_max_s - k].iter().enumerate() {
            let wx = w * x;
            if wx == 0.0 {
                continue;
            }
            for (b, &y) in ni[..=n_max_i - k].iter().enumerate() {
                p[[a + k, b + k]] += wx * y;
            }
        }
    }
    JointDistribution::new(p, Kind::Photon)
}

/// First and second moments of a pair of counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean_s: f64,
    pub mean_i: f64,
    pub var_s: f64,
    pub var_i: f64,
    pub cov: f64,
}

impl Moments {
    /// Moments of the mass-normalized distribution.
    pub fn of(p: &JointDistribution) -> Result<Self> {
        let t = p.total();
        if !(t > 0.0) {
            return Err(Error::Degenerate("distribution has zero mass".into()));
        }
        let mean_s = moment(p, 1, 0) / t;
        let mean_i = moment(p, 0, 1) / t;
        Ok(Self {
            mean_s,
            mean_i,
            var_s: moment(p, 2, 0) / t - mean_s * mean_s,
            var_i: moment(p, 0, 2) / t - mean_i * mean_i,
            cov: moment(p, 1, 1) / t - mean_s * mean_i,
        })
    }

    pub fn correlation(&self) -> f64 {
        self.cov / (self.var_s * self.var_i).sqrt()
    }

    pub fn fano_s(&self) -> f64 {
        self.var_s / self.mean_s
    }

    pub fn fano_i(&self) -> f64 {
        self.var_i / self.mean_i
    }

    /// Variance of the difference over the summed means.
    pub fn noise_reduction(&self) -> f64 {
        (self.var_s + self.var_i - 2.0 * self.cov) / (self.mean_s + self.mean_i)
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.mean_s, self.mean_i, self.var_s, self.var_i, self.cov]
    }
}

/// Photon-number moments of the model.
pub fn photon_moments(params: &FitParams) -> Moments {
    let pair_var = params.m_p * params.b_p * (1.0 + params.b_p);
    let (mean_s, mean_i) = params.photon_means();
    Moments {
        mean_s,
        mean_i,
        var_s: pair_var + params.m_s * params.b_s * (1.0 + params.b_s),
        var_i: pair_var + params.m_i * params.b_i * (1.0 + params.b_i),
        cov: pair_var,
    }
}

/// Click moments after binomial thinning by `tau` and Poisson dark counts.
pub fn predicted_click_moments(params: &FitParams) -> Moments {
    let ph = photon_moments(params);
    let thin = |t: f64, mean: f64, var: f64, d: f64| (t * mean + d, t * t * var + t * (1.0 - t) * mean + d);
    let (mean_s, var_s) = thin(params.tau_s, ph.mean_s, ph.var_s, params.d_s);
    let (mean_i, var_i) = thin(params.tau_i, ph.mean_i, ph.var_i, params.d_i);
    Moments { mean_s, mean_i, var_s, var_i, cov: params.tau_s * params.tau_i * ph.cov }
}

/// Predicted click distribution on `0..=c_max_s` x `0..=c_max_i`.
///
/// Thinned noise stays Mandel-Rice with mean `tau b` per mode; the pair
/// component is thinned independently in each arm.
pub fn predicted_click_distribution(params: &FitParams, c_max_s: usize, c_max_i: usize) -> Result<JointDistribution> {
    params.validate()?;
    JointDistribution::new(click_grid(params, c_max_s, c_max_i), Kind::Click)
}

fn click_grid(params: &FitParams, c_max_s: usize, c_max_i: usize) -> Array2<f64> {
    let pair_mean = params.m_p * params.b_p;
    let pair_sd = (pair_mean * (1.0 + params.b_p)).sqrt();
    let n_top = (pair_mean + 14.0 * pair_sd + 30.0).ceil() as usize;
    let pair = thermal_vec(params.m_p, params.b_p, n_top + 1);
    let (us, ui) = (params.tau_s, params.tau_i);
    let mut bs = vec![0.0; c_max_s + 1];
    let mut bi = vec![0.0; c_max_i + 1];
    bs[0] = 1.0;
    bi[0] = 1.0;
    let (rs, ri) = (c_max_s + 1, c_max_i + 1);
    let mut j = vec![0.0; rs * ri];
    let mut seen = 0.0;
    for &w in &pair {
        // window mass of Bin(n, u) only shrinks with n
        if seen > 1.0 - 1e-17 || bs.iter().sum::<f64>() < 1e-18 || bi.iter().sum::<f64>() < 1e-18 {
            break;
        }
        seen += w;
        if w > 1e-300 {
            for (row, &x) in j.chunks_exact_mut(ri).zip(&bs) {
                let wx = w * x;
                if wx != 0.0 {
                    for (slot, &y) in row.iter_mut().zip(&bi) {
                        *slot += wx * y;
                    }
                }
            }
        }
        thin_step(&mut bs, us);
        thin_step(&mut bi, ui);
    }
    let noise = |m: f64, b: f64, u: f64, d: f64, len: usize| {
        let mut v = crate::numeric::convolve(&thermal_vec(m, u * b, len), &poisson_pmf_vec(d, len - 1));
        v.truncate(len);
        v
    };
    let xs = noise(params.m_s, params.b_s, us, params.d_s, rs);
    let xi = noise(params.m_i, params.b_i, ui, params.d_i, ri);
    // separable: idler noise along rows, then signal noise along columns
    let mut rows = vec![0.0; rs * ri];
    for (src, dst) in j.chunks_exact(ri).zip(rows.chunks_exact_mut(ri)) {
        for (b, &v) in src.iter().enumerate() {
            if v != 0.0 {
                for (slot, &y) in dst[b..].iter_mut().zip(&xi) {
                    *slot += v * y;
                }
            }
        }
    }
    let mut out = vec![0.0; rs * ri];
    for (a, src) in rows.chunks_exact(ri).enumerate() {
        for (dst, &x) in out[a * ri..].chunks_exact_mut(ri).zip(&xs) {
            if x != 0.0 {
                for (slot, &v) in dst.iter_mut().zip(src) {
                    *slot += x * v;
                }
            }
        }
    }
    Array2::from_shape_vec((rs, ri), out).expect("shape matches")
}

/// `Bin(n, u)` to `Bin(n + 1, u)` in place, truncated to the vector length.
fn thin_step(v: &mut [f64], u: f64) {
    for k in (0..v.len()).rev() {
        let below = if k == 0 { 0.0 } else { v[k - 1] };
        v[k] = (1.0 - u) * v[k] + u * below;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub m_p_range: (f64, f64),
    pub m_s_range: (f64, f64),
    pub m_i_range: (f64, f64),
    pub points_per_decade: usize,
    /// Dark-count means of the two arms.
    pub dark_s: f64,
    pub dark_i: f64,
    /// When false, dark counts are left out of the moment equations.
    pub include_dark: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            m_p_range: (1.0, 1e4),
            m_s_range: (1e-3, 1e3),
            m_i_range: (1e-3, 1e3),
            points_per_decade: 25,
            dark_s: 0.0,
            dark_i: 0.0,
            include_dark: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapePoint {
    pub refined: bool,
    pub m_p: f64,
    pub m_s: f64,
    pub m_i: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: FitParams,
    pub empirical: Moments,
    pub predicted: Moments,
    /// `predicted - empirical` for mean_s, mean_i, var_s, var_i, cov.
    pub residuals: [f64; 5],
    pub entropy: f64,
    pub landscape: Vec<LandscapePoint>,
    pub photon: Moments,
    /// `R` from the fitted photon moments and from the model's closed form.
    pub noise_reduction: f64,
    pub noise_reduction_closed_form: f64,
}

impl FitResult {
    pub fn max_relative_residual(&self) -> f64 {
        self.residuals
            .iter()
            .zip(self.empirical.as_array())
            .map(|(r, e)| (r / e.abs().max(1e-300)).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_landscape_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "stage,m_p,m_s,m_i,entropy")?;
        for p in &self.landscape {
            let stage = if p.refined { "refined" } else { "coarse" };
            writeln!(w, "{stage},{:e},{:e},{:e},{:e}", p.m_p, p.m_s, p.m_i, p.entropy)?;
        }
        Ok(())
    }
}

/// `[m_s b_s (1 + b_s) + m_i b_i (1 + b_i)] / (2 m_p b_p + m_s b_s + m_i b_i)`.
pub fn noise_reduction_closed_form(params: &FitParams) -> f64 {
    let ns = params.m_s * params.b_s;
    let ni = params.m_i * params.b_i;
    (ns * (1.0 + params.b_s) + ni * (1.0 + params.b_i)) / (2.0 * params.m_p * params.b_p + ns + ni)
}

#[derive(Debug, Clone, Copy, Default)]
struct Rejections {
    variance: usize,
    covariance: usize,
    efficiency: usize,
    noise: usize,
}

impl Rejections {
    fn absorb(&mut self, o: &Rejections) {
        self.variance += o.variance;
        self.covariance += o.covariance;
        self.efficiency += o.efficiency;
        self.noise += o.noise;
    }

    fn worst(&self) -> &'static str {
        let all = [
            (self.variance, "excess variance too small for the mode counts"),
            (self.covariance, "covariance too small for a positive pair mean"),
            (self.efficiency, "implied efficiency above 1"),
            (self.noise, "implied noise mean negative"),
        ];
        all.iter().max_by_key(|x| x.0).map(|x| x.1).unwrap_or("none")
    }
}

/// Detection-level targets: click moments with dark counts removed.
#[derive(Debug, Clone, Copy)]
struct Targets {
    a: [f64; 2],
    v: [f64; 2],
    cov: f64,
}

/// Solve the five moment equations for `(b_p, b_s, b_i, tau_s, tau_i)` at
/// fixed mode counts. Up to two roots per arm.
fn solve_at(t: &Targets, m_p: f64, m: [f64; 2], rej: &mut Rejections) -> Vec<[f64; 5]> {
    // y = b_p tau solves m_p (m_p + m) y^2 - 2 a m_p y + a^2 - m v = 0
    let mut roots: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for arm in 0..2 {
        let (a, v, mi) = (t.a[arm], t.v[arm], m[arm]);
        let disc = m_p * mi * ((m_p + mi) * v - a * a);
        if disc < 0.0 {
            rej.variance += 1;
            return Vec::new();
        }
        let r = disc.sqrt();
        for y in [(a * m_p + r) / (m_p * (m_p + mi)), (a * m_p - r) / (m_p * (m_p + mi))] {
            if y > 0.0 && a - m_p * y >= -1e-12 * a {
                roots[arm].push(y);
            } else {
                rej.noise += 1;
            }
        }
        if disc == 0.0 {
            roots[arm].dedup();
        }
    }
    let mut out = Vec::new();
    for &ys in &roots[0] {
        for &yi in &roots[1] {
            let den = t.cov / (m_p * ys * yi) - 1.0;
            if !(den > 0.0) {
                rej.covariance += 1;
                continue;
            }
            let b_p = 1.0 / den;
            let (us, ui) = (ys / b_p, yi / b_p);
            if us > 1.0 || ui > 1.0 {
                rej.efficiency += 1;
                continue;
            }
            let b_s = ((t.a[0] - m_p * ys) / (m[0] * us)).max(0.0);
            let b_i = ((t.a[1] - m_p * yi) / (m[1] * ui)).max(0.0);
            out.push([b_p, b_s, b_i, us, ui]);
        }
    }
    out
}

/// Entropy of the predicted click distribution, truncated eight standard
/// deviations above the mean.
fn click_entropy(p: &FitParams) -> f64 {
    let m = predicted_click_moments(p);
    let top = |mean: f64, var: f64| (mean + 8.0 * var.sqrt() + 8.0).ceil() as usize;
    let grid = click_grid(p, top(m.mean_s, m.var_s), top(m.mean_i, m.var_i));
    crate::dists::entropy_of(grid.iter())
}

fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    let steps = ((b - a) * per_decade as f64).round().max(0.0) as usize;
    (0..=steps).map(|k| 10f64.powf(a + (b - a) * k as f64 / steps.max(1) as f64)).collect()
}

struct Candidate {
    params: FitParams,
    entropy: f64,
}

fn scan(
    t: &Targets,
    dark: (f64, f64),
    grids: [&[f64]; 3],
    refined: bool,
    landscape: &mut Vec<LandscapePoint>,
    rej: &mut Rejections,
) -> Option<Candidate> {
    let slabs: Vec<(Vec<LandscapePoint>, Vec<FitParams>, Rejections)> = grids[0]
        .par_iter()
        .map(|&m_p| {
            let mut points = Vec::new();
            let mut params = Vec::new();
            let mut local = Rejections::default();
            for &m_s in grids[1] {
                for &m_i in grids[2] {
                    for [b_p, b_s, b_i, tau_s, tau_i] in solve_at(t, m_p, [m_s, m_i], &mut local) {
                        let p = FitParams { m_p, b_p, m_s, b_s, m_i, b_i, tau_s, tau_i, d_s: dark.0, d_i: dark.1 };
                        points.push(LandscapePoint { refined, m_p, m_s, m_i, entropy: click_entropy(&p) });
                        params.push(p);
                    }
                }
            }
            (points, params, local)
        })
        .collect();
    let mut best: Option<Candidate> = None;
    for (points, params, local) in slabs {
        rej.absorb(&local);
        for (pt, p) in points.iter().zip(params) {
            // strict comparison keeps the lexicographically first minimum
            if best.as_ref().is_none_or(|b| pt.entropy < b.entropy) {
                best = Some(Candidate { params: p, entropy: pt.entropy });
            }
        }
        landscape.extend(points);
    }
    best
}

/// Local grid ten times denser spanning one coarse step either side of `x`.
fn refine_axis(x: f64, range: (f64, f64), per_decade: usize) -> Vec<f64> {
    let step = 1.0 / per_decade as f64;
    let lo = (x.log10() - step).max(range.0.log10());
    let hi = (x.log10() + step).min(range.1.log10());
    log_grid(10f64.powf(lo), 10f64.powf(hi), per_decade * 10)
}

/// Match the five click moments of `f` on a log grid of mode counts and
/// keep the candidate whose predicted click distribution has the least
/// entropy.
pub fn fit(f: &JointDistribution, opts: &FitOptions) -> Result<FitResult> {
    for (name, (lo, hi)) in [("m_p", opts.m_p_range), ("m_s", opts.m_s_range), ("m_i", opts.m_i_range)] {
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} range ({lo}, {hi}) is not a positive interval")));
        }
    }
    if opts.points_per_decade == 0 {
        return Err(Error::InvalidParameter("points_per_decade must be positive".into()));
    }
    let emp = Moments::of(f)?;
    if !(emp.var_s > 0.0 && emp.var_i > 0.0) {
        return Err(Error::Infeasible("click variance must be positive in both arms".into()));
    }
    if !(emp.cov > 0.0) {
        return Err(Error::Infeasible(format!("empirical covariance {:e} is not positive", emp.cov)));
    }
    let dark = if opts.include_dark { (opts.dark_s, opts.dark_i) } else { (0.0, 0.0) };
    let t = Targets {
        a: [emp.mean_s - dark.0, emp.mean_i - dark.1],
        v: [emp.var_s - emp.mean_s, emp.var_i - emp.mean_i],
        cov: emp.cov,
    };
    if t.a[0] <= 0.0 || t.a[1] <= 0.0 {
        return Err(Error::Infeasible("dark means exceed the mean click numbers".into()));
    }
    if t.v[0] <= 0.0 || t.v[1] <= 0.0 {
        return Err(Error::Infeasible("click statistics are not super-Poissonian".into()));
    }
    let ppd = opts.points_per_decade;
    let coarse = [
        log_grid(opts.m_p_range.0, opts.m_p_range.1, ppd),
        log_grid(opts.m_s_range.0, opts.m_s_range.1, ppd),
        log_grid(opts.m_i_range.0, opts.m_i_range.1, ppd),
    ];
    let mut landscape = Vec::new();
    let mut rej = Rejections::default();
    let first = scan(&t, dark, [&coarse[0], &coarse[1], &coarse[2]], false, &mut landscape, &mut rej)
        .ok_or_else(|| Error::Infeasible(format!("no grid point satisfies the moments: {}", rej.worst())))?;
    let fine = [
        refine_axis(first.params.m_p, opts.m_p_range, ppd),
        refine_axis(first.params.m_s, opts.m_s_range, ppd),
        refine_axis(first.params.m_i, opts.m_i_range, ppd),
    ];
    let best = match scan(&t, dark, [&fine[0], &fine[1], &fine[2]], true, &mut landscape, &mut rej) {
        Some(c) if c.entropy < first.entropy => c,
        _ => first,
    };
    let predicted = predicted_click_moments(&best.params);
    let e = emp.as_array();
    let p = predicted.as_array();
    let residuals = std::array::from_fn(|k| p[k] - e[k]);
    let photon = photon_moments(&best.params);
    Ok(FitResult {
        params: best.params,
        empirical: emp,
        predicted,
        residuals,
        entropy: best.entropy,
        landscape,
        photon,
        noise_reduction: photon.noise_reduction(),
        noise_reduction_closed_form: noise_reduction_closed_form(&best.params),
    })
}
