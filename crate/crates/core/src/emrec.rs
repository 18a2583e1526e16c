//! Expectation-maximization reconstruction of joint photon-number
//! distributions from click histograms.

use std::fmt;
use std::io::Write;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::detmodel::TransferMatrix;
use crate::dists::{covariance_coefficient, JointDistribution, Kind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxIterations,
    CovariancePlateau,
    ResidualPlateau,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxIterations => "max-iterations",
            StopReason::CovariancePlateau => "covariance-plateau",
            StopReason::ResidualPlateau => "residual-plateau",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    Uniform,
    /// Zeros are replaced by the floor.
    Custom(JointDistribution),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmOptions {
    pub max_iterations: usize,
    pub record_every: usize,
    pub floor: f64,
    /// Stop when `C` moves less than `plateau_tol` over this many steps;
    /// zero disables the check.
    pub plateau_window: usize,
    pub plateau_tol: f64,
    /// Stop once the residual `S` falls below this.
    pub residual_tol: f64,
    pub initial: Initial,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            record_every: 1,
            floor: 1e-100,
            plateau_window: 50,
            plateau_tol: 1e-7,
            residual_tol: 1e-12,
            initial: Initial::Uniform,
        }
    }
}

impl EmOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be at least 1".into()));
        }
        if !(self.floor > 0.0) {
            return Err(Error::InvalidParameter("floor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub residual: f64,
    pub covariance: f64,
    pub kl: f64,
    /// `|1 - mass|` before renormalization.
    pub mass_defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub p_rec: JointDistribution,
    pub trace: Vec<TraceRecord>,
    pub iterations_run: usize,
    pub stop_reason: StopReason,
}

impl ReconstructionResult {
    pub fn final_covariance(&self) -> f64 {
        self.trace.last().map(|r| r.covariance).unwrap_or(f64::NAN)
    }

    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration,S,C")?;
        for r in &self.trace {
            writeln!(w, "{},{:e},{:e}", r.iteration, r.residual, r.covariance)?;
        }
        Ok(())
    }
}

/// Smallest photon number cutoff covering `max_clicks` at registration
/// probability `tau`: `1.5 c / tau + 6 sqrt(c / tau)`.
pub fn default_n_max(max_clicks: usize, tau: f64) -> usize {
    let m = max_clicks as f64 / tau;
    (1.5 * m + 6.0 * m.sqrt()).ceil() as usize
}

/// Matrices restricted to the photon grid of `rho`, with `f` padded to
/// their click rows.
struct Problem {
    gs: Array2<f64>,
    gi: Array2<f64>,
    f: Array2<f64>,
}

impl Problem {
    fn new(f: &JointDistribution, g_s: &TransferMatrix, g_i: &TransferMatrix, ns: usize, ni: usize) -> Result<Self> {
        for (name, g, n) in [("signal", g_s, ns), ("idler", g_i, ni)] {
            if g.n_max() < n {
                return Err(Error::Dimension(format!("{name} matrix covers n <= {}, grid needs {n}", g.n_max())));
            }
        }
        if f.n_max_s() > g_s.c_max() || f.n_max_i() > g_i.c_max() {
            return Err(Error::Dimension(format!(
                "histogram reaches ({}, {}) clicks, matrices cover ({}, {})",
                f.n_max_s(),
                f.n_max_i(),
                g_s.c_max(),
                g_i.c_max()
            )));
        }
        // click rows beyond the data carry no weight
        let (cs, ci) = (f.n_max_s(), f.n_max_i());
        Ok(Self {
            gs: g_s.values().slice(s![..=cs, ..=ns]).to_owned(),
            gi: g_i.values().slice(s![..=ci, ..=ni]).to_owned(),
            f: f.values().clone(),
        })
    }

    fn forward(&self, rho: &Array2<f64>) -> Array2<f64> {
        self.gs.dot(rho).dot(&self.gi.t())
    }

    fn step(&self, rho: &Array2<f64>, q: &Array2<f64>) -> Result<Array2<f64>> {
        let mut r = Array2::zeros(self.f.raw_dim());
        for ((ix, &fv), (rv, &qv)) in self.f.indexed_iter().zip(r.iter_mut().zip(q.iter())) {
            if fv > 0.0 {
                if !(qv > 0.0) {
                    return Err(Error::ModelMismatch { c_s: ix.0, c_i: ix.1, f: fv });
                }
                *rv = fv / qv;
            }
        }
        Ok(rho * &self.gs.t().dot(&r).dot(&self.gi))
    }

    fn residual(&self, q: &Array2<f64>) -> f64 {
        self.f.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    fn kl(&self, q: &Array2<f64>) -> f64 {
        kl_terms(self.f.iter().copied().zip(q.iter().copied())).unwrap_or(f64::INFINITY)
    }
}

fn kl_terms(pairs: impl Iterator<Item = (f64, f64)>) -> Result<f64> {
    let mut acc = 0.0;
    for (f, g) in pairs {
        if f > 0.0 {
            if !(g > 0.0) {
                return Err(Error::Support(format!("model is zero where data has mass {f:e}")));
            }
            acc += f * (f / g).ln();
        }
    }
    Ok(acc)
}

/// One EM update of `rho` against click frequencies `f`.
pub fn em_step(
    rho: &JointDistribution,
    f: &JointDistribution,
    g_s: &TransferMatrix,
    g_i: &TransferMatrix,
) -> Result<JointDistribution> {
    let prob = Problem::new(f, g_s, g_i, rho.n_max_s(), rho.n_max_i())?;
    let q = prob.forward(rho.values());
    JointDistribution::new(prob.step(rho.values(), &q)?, Kind::Photon)
}

/// Euclidean distance between `f` and the forward image of `rho`.
pub fn residual_s(
    rho: &JointDistribution,
    f: &JointDistribution,
    g_s: &TransferMatrix,
    g_i: &TransferMatrix,
) -> Result<f64> {
    let q = crate::simkit::forward(rho, g_s, g_i)?;
    let rows = q.n_max_s().max(f.n_max_s());
    let cols = q.n_max_i().max(f.n_max_i());
    let mut acc = 0.0;
    for a in 0..=rows {
        for b in 0..=cols {
            let d = f.get(a, b) - q.get(a, b);
            acc += d * d;
        }
    }
    Ok(acc.sqrt())
}

/// `sum f ln(f / g)`; grids are padded with zeros.
pub fn kl_divergence(f: &JointDistribution, g: &JointDistribution) -> Result<f64> {
    kl_terms(f.values().indexed_iter().map(|((a, b), &v)| (v, g.get(a, b))))
}

fn initial_grid(opts: &EmOptions, ns: usize, ni: usize) -> Result<Array2<f64>> {
    let mut rho = match &opts.initial {
        Initial::Uniform => Array2::from_elem((ns + 1, ni + 1), 1.0),
        Initial::Custom(p) => {
            if p.n_max_s() != ns || p.n_max_i() != ni {
                return Err(Error::Dimension("initial distribution does not match the photon grid".into()));
            }
            p.values().mapv(|v| v.max(opts.floor))
        }
    };
    let t = rho.sum();
    rho /= t;
    Ok(rho)
}

fn covariance_of(rho: &Array2<f64>) -> f64 {
    JointDistribution::new(rho.clone(), Kind::Photon)
        .and_then(|p| covariance_coefficient(&p))
        .unwrap_or(0.0)
}

/// Iterate [`em_step`] on the photon grid `0..=n_max_s` x `0..=n_max_i`.
pub fn reconstruct(
    f: &JointDistribution,
    g_s: &TransferMatrix,
    g_i: &TransferMatrix,
    n_max_s: usize,
    n_max_i: usize,
    opts: &EmOptions,
) -> Result<ReconstructionResult> {
    opts.validate()?;
    let f = f.normalized()?;
    let prob = Problem::new(&f, g_s, g_i, n_max_s, n_max_i)?;
    let mut rho = initial_grid(opts, n_max_s, n_max_i)?;
    let mut q = prob.forward(&rho);
    let mut trace = vec![TraceRecord {
        iteration: 0,
        residual: prob.residual(&q),
        covariance: covariance_of(&rho),
        kl: prob.kl(&q),
        mass_defect: 0.0,
    }];
    let mut history: Vec<f64> = Vec::with_capacity(opts.max_iterations);
    let mut stop = StopReason::MaxIterations;
    let mut it = 0;
    while it < opts.max_iterations {
        it += 1;
        rho = prob.step(&rho, &q)?;
        let mass = rho.sum();
        rho /= mass;
        q = prob.forward(&rho);
        let residual = prob.residual(&q);
        let cov = covariance_of(&rho);
        history.push(cov);
        if residual < opts.residual_tol {
            stop = StopReason::ResidualPlateau;
        } else if opts.plateau_window > 0
            && it > opts.plateau_window
            && (cov - history[it - 1 - opts.plateau_window]).abs() < opts.plateau_tol
        {
            stop = StopReason::CovariancePlateau;
        }
        let done = stop != StopReason::MaxIterations || it == opts.max_iterations;
        if it % opts.record_every == 0 || done {
            trace.push(TraceRecord {
                iteration: it,
                residual,
                covariance: cov,
                kl: prob.kl(&q),
                mass_defect: (1.0 - mass).abs(),
            });
        }
        if done {
            break;
        }
    }
    Ok(ReconstructionResult {
        p_rec: JointDistribution::new(rho, Kind::Photon)?,
        trace,
        iterations_run: it,
        stop_reason: stop,
    })
}
