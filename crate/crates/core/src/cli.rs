//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::detmodel::{self, DetectorModel, PixelGroupProfile, Precision, TransferMatrix, Variant};
use crate::dists::{
    classical_violation_mask, read_joint_csv, sum_diff_distributions, total_variation, write_1d_csv,
    write_joint_csv, JointDistribution, Kind,
};
use crate::emrec::{self, EmOptions};
use crate::error::{Error, Result};
use crate::noisefit::{self, FitOptions, FitParams, Moments};
use crate::simkit::{self, Arm, DarkModel, Histogram, PixelAssignment, SimConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_MODEL_MISMATCH: i32 = 4;
pub const EXIT_BUDGET: i32 = 5;
pub const EXIT_PRECISION: i32 = 6;
pub const EXIT_INFEASIBLE: i32 = 7;
pub const EXIT_DEGENERATE: i32 = 8;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_) => EXIT_USAGE,
        Error::ModelMismatch { .. } => EXIT_MODEL_MISMATCH,
        Error::BudgetExceeded { .. } => EXIT_BUDGET,
        Error::PrecisionExhausted { .. } => EXIT_PRECISION,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Degenerate(_) => EXIT_DEGENERATE,
        Error::Dimension(_) | Error::Support(_) | Error::Empty(_) | Error::Parse(_) | Error::Io(_) => EXIT_DATA,
    }
}

#[derive(Debug, Parser)]
#[command(name = "twinbeam", version, about = "Twin-beam photon-number statistics from camera click histograms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Flags {
    /// Key-value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    #[arg(long, global = true)]
    pub n_max: Option<usize>,
    #[arg(long, global = true)]
    pub c_max: Option<usize>,
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    /// Pixel-group profile CSV, used for both arms.
    #[arg(long, global = true)]
    pub profile: Option<PathBuf>,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse::<Variant>().map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the signal and idler transfer matrices.
    Matrices,
    /// Monte Carlo click histogram from a photon distribution or model parameters.
    Simulate {
        /// Photon distribution CSV `n_s,n_i,p`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Model parameter file.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Reconstruct the photon distribution from a click histogram.
    Reconstruct { histogram: PathBuf },
    /// Fit the multimode noise model to a click histogram.
    Fit { histogram: PathBuf },
    /// Difference of two photon distributions.
    Compare { a: PathBuf, b: PathBuf },
    /// Summary statistics of a distribution or histogram file.
    Stats { input: PathBuf },
}

/// Configuration; every field can come from the file and most from flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub n_max: Option<usize>,
    pub c_max: Option<usize>,
    pub precision: Option<String>,
    pub profile: Option<PathBuf>,
    pub profile_s: Option<PathBuf>,
    pub profile_i: Option<PathBuf>,
    pub t_s: Option<f64>,
    pub eta_s: Option<f64>,
    pub tau_s: Option<f64>,
    pub pixels_s: Option<usize>,
    pub d_s: Option<f64>,
    pub dark_s: Option<f64>,
    pub t_i: Option<f64>,
    pub eta_i: Option<f64>,
    pub tau_i: Option<f64>,
    pub pixels_i: Option<usize>,
    pub d_i: Option<f64>,
    pub dark_i: Option<f64>,
    pub iters: Option<usize>,
    pub record_every: Option<usize>,
    pub plateau_window: Option<usize>,
    pub plateau_tol: Option<f64>,
    pub trials: Option<u64>,
    pub dark_model: Option<DarkModel>,
    pub pixel_assignment: Option<PixelAssignment>,
    pub points_per_decade: Option<usize>,
    pub include_dark: Option<bool>,
    pub m_p_min: Option<f64>,
    pub m_p_max: Option<f64>,
    pub m_s_min: Option<f64>,
    pub m_s_max: Option<f64>,
    pub m_i_min: Option<f64>,
    pub m_i_max: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    fn apply_flags(&mut self, f: &Flags) {
        macro_rules! over {
            ($($field:ident),+) => { $(if f.$field.is_some() { self.$field = f.$field.clone(); })+ };
        }
        over!(out, seed, variant, n_max, c_max, iters, profile);
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    fn precision(&self) -> Result<Precision> {
        self.precision.as_deref().map(str::parse).transpose().map(Option::unwrap_or_default)
    }

    fn em_options(&self) -> EmOptions {
        let d = EmOptions::default();
        EmOptions {
            max_iterations: self.iters.unwrap_or(d.max_iterations),
            record_every: self.record_every.unwrap_or(d.record_every),
            plateau_window: self.plateau_window.unwrap_or(d.plateau_window),
            plateau_tol: self.plateau_tol.unwrap_or(d.plateau_tol),
            ..d
        }
    }

    fn arm(&self, signal: bool) -> ArmConfig {
        let pick = |s: Option<f64>, i: Option<f64>| if signal { s } else { i };
        ArmConfig {
            name: if signal { "signal" } else { "idler" },
            t: pick(self.t_s, self.t_i),
            eta: pick(self.eta_s, self.eta_i),
            tau: pick(self.tau_s, self.tau_i),
            pixels: if signal { self.pixels_s } else { self.pixels_i },
            d: pick(self.d_s, self.d_i),
            dark: pick(self.dark_s, self.dark_i),
            profile: (if signal { &self.profile_s } else { &self.profile_i }).clone().or_else(|| self.profile.clone()),
        }
    }
}

#[derive(Debug, Clone)]
struct ArmConfig {
    name: &'static str,
    t: Option<f64>,
    eta: Option<f64>,
    tau: Option<f64>,
    pixels: Option<usize>,
    d: Option<f64>,
    dark: Option<f64>,
    profile: Option<PathBuf>,
}

impl ArmConfig {
    fn transmissivity(&self) -> f64 {
        self.t.unwrap_or(1.0)
    }

    fn missing(&self, what: &str) -> Error {
        Error::InvalidParameter(format!("{} arm needs {what}", self.name))
    }

    fn efficiency(&self) -> Result<f64> {
        match (self.eta, self.tau) {
            (Some(e), _) => Ok(e),
            (None, Some(tau)) if self.transmissivity() > 0.0 => Ok(tau / self.transmissivity()),
            _ => Err(self.missing("eta or tau")),
        }
    }

    fn tau(&self) -> Result<f64> {
        match self.tau {
            Some(t) => Ok(t),
            None => Ok(self.transmissivity() * self.efficiency()?),
        }
    }

    fn pixels(&self) -> Result<usize> {
        self.pixels.ok_or_else(|| self.missing("a pixel count"))
    }

    fn dark_mean(&self) -> Result<f64> {
        match (self.dark, self.d, self.pixels) {
            (Some(dm), _, _) => Ok(dm),
            (None, Some(d), Some(n)) => Ok(d * n as f64),
            (None, None, _) => Ok(0.0),
            (None, Some(_), None) => Err(self.missing("a pixel count to convert d into a dark mean")),
        }
    }

    fn model(&self) -> Result<DetectorModel> {
        let n = self.pixels()?;
        match self.d {
            Some(d) => DetectorModel::new(self.transmissivity(), n, self.efficiency()?, d),
            None => DetectorModel::with_dark_mean(self.transmissivity(), n, self.efficiency()?, self.dark_mean()?),
        }
    }

    fn read_profile(&self) -> Result<PixelGroupProfile> {
        let path = self.profile.as_ref().ok_or_else(|| self.missing("a profile file"))?;
        PixelGroupProfile::read_csv(BufReader::new(fs::File::open(path)?))
    }
}

fn build_matrix(
    variant: Variant,
    arm: &ArmConfig,
    n_max: usize,
    c_max: Option<usize>,
    precision: Precision,
) -> Result<TransferMatrix> {
    let with_loss = |m: TransferMatrix| -> Result<TransferMatrix> {
        let t = arm.transmissivity();
        if t < 1.0 {
            detmodel::compose(&m, &detmodel::bernoulli_matrix(t, n_max)?)
        } else {
            Ok(m)
        }
    };
    let m = match variant {
        Variant::Identity => TransferMatrix::identity(n_max),
        Variant::Bernoulli => detmodel::bernoulli_matrix(arm.tau()?, n_max)?,
        Variant::Infinite => detmodel::infinite_pixel_matrix(arm.tau()?, arm.dark_mean()?, n_max, c_max)?,
        Variant::ExactFinite => {
            let model = arm.model()?;
            detmodel::finite_pixel_matrix(model.pixels, model.tau(), model.dark_prob, n_max, precision)?
        }
        Variant::Composed => {
            let model = arm.model()?;
            let inner = detmodel::finite_pixel_matrix(model.pixels, model.efficiency, model.dark_prob, n_max, precision)?;
            with_loss(inner)?
        }
        Variant::Intense => detmodel::intense_field_matrix(&arm.model()?, n_max)?,
        Variant::ImprovedIntense => detmodel::improved_intense_matrix(&arm.model()?, n_max)?,
        Variant::Exponential => detmodel::exponential_approx_matrix(&arm.model()?, n_max, c_max)?,
        Variant::ProfileExact => with_loss(detmodel::profile_matrix_exact(&arm.read_profile()?, n_max, precision)?)?,
        Variant::ProfileConvolved => {
            with_loss(detmodel::profile_matrix_convolved(&arm.read_profile()?, n_max, precision)?)?
        }
        Variant::ProfileInfinite => with_loss(detmodel::profile_matrix_infinite(&arm.read_profile()?, n_max, c_max)?)?,
        Variant::ProfileExponential => {
            with_loss(detmodel::profile_matrix_exponential(&arm.read_profile()?, n_max, c_max)?)?
        }
        Variant::ProfileLowcount => {
            with_loss(detmodel::profile_matrix_lowcount(&arm.read_profile()?, n_max, c_max, precision)?)?
        }
    };
    Ok(match c_max {
        Some(c) if c > m.c_max() => m.padded_rows(c),
        _ => m,
    })
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Read a photon distribution `n_s,n_i,p` or a click histogram `c_s,c_i,count`.
fn read_any(path: &Path) -> Result<JointDistribution> {
    let text = fs::read_to_string(path)?;
    let header = text.lines().next().unwrap_or("").replace(' ', "");
    if header.starts_with("c_s,c_i") {
        Ok(Histogram::read_csv(text.as_bytes())?.to_distribution())
    } else {
        read_joint_csv(text.as_bytes(), Kind::Photon)
    }
}

#[derive(Debug, Serialize)]
struct StatsReport {
    mean_s: f64,
    mean_i: f64,
    fano_s: f64,
    fano_i: f64,
    covariance: f64,
    noise_reduction: f64,
    entropy: f64,
    violation_cells: usize,
}

impl StatsReport {
    fn of(p: &JointDistribution) -> Result<Self> {
        let m = Moments::of(p)?;
        Ok(Self {
            mean_s: m.mean_s,
            mean_i: m.mean_i,
            fano_s: m.fano_s(),
            fano_i: m.fano_i(),
            covariance: m.correlation(),
            noise_reduction: m.noise_reduction(),
            entropy: p.entropy(),
            violation_cells: classical_violation_mask(p).iter().filter(|&&v| v).count(),
        })
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Parse arguments, run the command and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::ModelMismatch { .. } = e {
                eprintln!("hint: raise the dark means or n_max so the model can produce every observed click count");
            }
            exit_code(&e)
        }
    }
}

fn load_config(flags: &Flags) -> Result<RunConfig> {
    let mut cfg = match &flags.config {
        Some(p) => RunConfig::from_toml(&fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    cfg.apply_flags(flags);
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(&cli.flags)?;
    if let Command::Simulate { trials: Some(t), .. } = &cli.command {
        cfg.trials = Some(*t);
    }
    let out = cfg.out_dir();
    fs::create_dir_all(&out)?;
    write_toml(&out.join("effective_config.toml"), &cfg)?;
    let ctx = Ctx { cfg, out };
    match &cli.command {
        Command::Matrices => cmd_matrices(&ctx),
        Command::Simulate { input, params, .. } => cmd_simulate(&ctx, input.as_deref(), params.as_deref()),
        Command::Reconstruct { histogram } => cmd_reconstruct(&ctx, histogram),
        Command::Fit { histogram } => cmd_fit(&ctx, histogram),
        Command::Compare { a, b } => cmd_compare(&ctx, a, b),
        Command::Stats { input } => cmd_stats(&ctx, input),
    }
}

fn cmd_matrices(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let variant = cfg.variant.unwrap_or(Variant::Infinite);
    let n_max = cfg.n_max.ok_or_else(|| Error::InvalidParameter("matrices needs n_max".into()))?;
    let precision = cfg.precision()?;
    for (signal, tag) in [(true, "s"), (false, "i")] {
        let arm = cfg.arm(signal);
        let m = build_matrix(variant, &arm, n_max, cfg.c_max, precision)?;
        detmodel::write_matrix(&m, &ctx.path(&format!("matrix_{tag}.csv")))?;
        let digits = m.meta().precision_digits.map(|d| d.to_string()).unwrap_or_else(|| "-".into());
        println!(
            "{} {variant}: {}x{} max_column_defect={:e} precision_digits={digits}",
            arm.name,
            m.c_max() + 1,
            m.n_max() + 1,
            m.max_column_defect()
        );
    }
    Ok(())
}

fn photon_input(input: Option<&Path>, params: Option<&Path>, n_max: Option<usize>) -> Result<JointDistribution> {
    match (input, params) {
        (Some(p), _) => read_joint_csv(BufReader::new(fs::File::open(p)?), Kind::Photon),
        (None, Some(p)) => {
            let fp = FitParams::from_toml(&fs::read_to_string(p)?)?;
            let m = noisefit::photon_moments(&fp);
            let top = |mean: f64, var: f64| (mean + 12.0 * var.sqrt() + 10.0).ceil() as usize;
            let ns = n_max.unwrap_or_else(|| top(m.mean_s, m.var_s));
            let ni = n_max.unwrap_or_else(|| top(m.mean_i, m.var_i));
            noisefit::model_distribution(&fp, ns, ni)
        }
        (None, None) => Err(Error::InvalidParameter("simulate needs --input or --params".into())),
    }
}

fn sim_arm(arm: &ArmConfig) -> Result<Arm> {
    let model = arm.model()?;
    Ok(match &arm.profile {
        Some(_) => Arm::with_profile(model, arm.read_profile()?),
        None => Arm::uniform(model),
    })
}

fn cmd_simulate(ctx: &Ctx, input: Option<&Path>, params: Option<&Path>) -> Result<()> {
    let cfg = &ctx.cfg;
    let p = photon_input(input, params, cfg.n_max)?;
    let sim = SimConfig {
        trials: cfg.trials.unwrap_or(100_000),
        seed: cfg.seed.unwrap_or(0),
        pixel_assignment: cfg.pixel_assignment.unwrap_or_default(),
        dark_model: cfg.dark_model.unwrap_or_default(),
    };
    let h = simkit::simulate_clicks(&p, &sim_arm(&cfg.arm(true))?, &sim_arm(&cfg.arm(false))?, &sim)?;
    write_with(&ctx.path("histogram.csv"), |w| h.write_csv(w))?;
    let m = Moments::of(&h.to_distribution())?;
    println!(
        "frames={} mean_s={:.4} mean_i={:.4} covariance={:.4}",
        h.total(),
        m.mean_s,
        m.mean_i,
        m.correlation()
    );
    Ok(())
}

fn read_histogram(path: &Path) -> Result<JointDistribution> {
    Ok(Histogram::read_csv(BufReader::new(fs::File::open(path)?))?.to_distribution())
}

#[derive(Debug, Serialize)]
struct ReconstructionReport {
    variant: Variant,
    n_max_s: usize,
    n_max_i: usize,
    iterations: usize,
    stop_reason: String,
    final_residual: f64,
    mass_defect: f64,
    #[serde(flatten)]
    stats: StatsReport,
}

fn cmd_reconstruct(ctx: &Ctx, histogram: &Path) -> Result<()> {
    let cfg = &ctx.cfg;
    let f = read_histogram(histogram)?;
    let variant = cfg.variant.unwrap_or(Variant::Infinite);
    let precision = cfg.precision()?;
    let (arm_s, arm_i) = (cfg.arm(true), cfg.arm(false));
    let grid = |arm: &ArmConfig, max_c: usize| -> Result<usize> {
        Ok(match (cfg.n_max, variant) {
            (Some(n), _) => n,
            (None, Variant::Identity) => max_c,
            (None, _) => emrec::default_n_max(max_c, arm.tau()?),
        })
    };
    let ns = grid(&arm_s, f.n_max_s())?;
    let ni = grid(&arm_i, f.n_max_i())?;
    let gs = build_matrix(variant, &arm_s, ns, cfg.c_max, precision)?;
    let gi = build_matrix(variant, &arm_i, ni, cfg.c_max, precision)?;
    let r = emrec::reconstruct(&f, &gs, &gi, ns, ni, &cfg.em_options())?;
    let p = &r.p_rec;
    write_with(&ctx.path("p_rec.csv"), |w| write_joint_csv(p, w))?;
    write_with(&ctx.path("trace.csv"), |w| r.write_trace_csv(w))?;
    let (plus, minus) = sum_diff_distributions(p);
    write_with(&ctx.path("p_plus.csv"), |w| write_1d_csv(&plus, w))?;
    write_with(&ctx.path("p_minus.csv"), |w| write_1d_csv(&minus, w))?;
    let last = r.trace.last().copied();
    let report = ReconstructionReport {
        variant,
        n_max_s: ns,
        n_max_i: ni,
        iterations: r.iterations_run,
        stop_reason: r.stop_reason.to_string(),
        final_residual: last.map_or(f64::NAN, |t| t.residual),
        mass_defect: last.map_or(0.0, |t| t.mass_defect),
        stats: StatsReport::of(p)?,
    };
    write_toml(&ctx.path("report.toml"), &report)?;
    println!(
        "iterations={} stop={} C={:.4} R={:.4} F_S={:.4} F_I={:.4}",
        report.iterations,
        report.stop_reason,
        report.stats.covariance,
        report.stats.noise_reduction,
        report.stats.fano_s,
        report.stats.fano_i
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct FitReport {
    entropy: f64,
    max_relative_residual: f64,
    residual_mean_s: f64,
    residual_mean_i: f64,
    residual_var_s: f64,
    residual_var_i: f64,
    residual_cov: f64,
    fano_s: f64,
    fano_i: f64,
    covariance: f64,
    noise_reduction: f64,
    noise_reduction_closed_form: f64,
    candidates: usize,
}

fn cmd_fit(ctx: &Ctx, histogram: &Path) -> Result<()> {
    let cfg = &ctx.cfg;
    let f = read_histogram(histogram)?;
    let d = FitOptions::default();
    let opts = FitOptions {
        m_p_range: (cfg.m_p_min.unwrap_or(d.m_p_range.0), cfg.m_p_max.unwrap_or(d.m_p_range.1)),
        m_s_range: (cfg.m_s_min.unwrap_or(d.m_s_range.0), cfg.m_s_max.unwrap_or(d.m_s_range.1)),
        m_i_range: (cfg.m_i_min.unwrap_or(d.m_i_range.0), cfg.m_i_max.unwrap_or(d.m_i_range.1)),
        points_per_decade: cfg.points_per_decade.unwrap_or(d.points_per_decade),
        dark_s: cfg.arm(true).dark_mean()?,
        dark_i: cfg.arm(false).dark_mean()?,
        include_dark: cfg.include_dark.unwrap_or(true),
    };
    let r = noisefit::fit(&f, &opts)?;
    fs::write(ctx.path("fit_params.toml"), r.params.to_toml()?)?;
    write_with(&ctx.path("entropy_landscape.csv"), |w| r.write_landscape_csv(w))?;
    let [a, b, c, e, g] = r.residuals;
    let report = FitReport {
        entropy: r.entropy,
        max_relative_residual: r.max_relative_residual(),
        residual_mean_s: a,
        residual_mean_i: b,
        residual_var_s: c,
        residual_var_i: e,
        residual_cov: g,
        fano_s: r.photon.fano_s(),
        fano_i: r.photon.fano_i(),
        covariance: r.photon.correlation(),
        noise_reduction: r.noise_reduction,
        noise_reduction_closed_form: r.noise_reduction_closed_form,
        candidates: r.landscape.len(),
    };
    write_toml(&ctx.path("fit_report.toml"), &report)?;
    println!(
        "m_p={:.4} b_p={:.5} tau_s={:.4} tau_i={:.4} F_S={:.4} F_I={:.4} C={:.4} R={:.5}",
        r.params.m_p,
        r.params.b_p,
        r.params.tau_s,
        r.params.tau_i,
        report.fano_s,
        report.fano_i,
        report.covariance,
        report.noise_reduction
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct CompareReport {
    max_abs_difference: f64,
    total_variation: f64,
    a: StatsReport,
    b: StatsReport,
}

fn cmd_compare(ctx: &Ctx, a: &Path, b: &Path) -> Result<()> {
    let pa = read_any(a)?;
    let pb = read_any(b)?;
    let rows = pa.n_max_s().max(pb.n_max_s());
    let cols = pa.n_max_i().max(pb.n_max_i());
    let mut max_abs: f64 = 0.0;
    write_with(&ctx.path("delta.csv"), |w| {
        writeln!(w, "n_s,n_i,delta")?;
        for s in 0..=rows {
            for i in 0..=cols {
                let d = pa.get(s, i) - pb.get(s, i);
                if d != 0.0 {
                    max_abs = max_abs.max(d.abs());
                    writeln!(w, "{s},{i},{d:e}")?;
                }
            }
        }
        Ok(())
    })?;
    let report = CompareReport {
        max_abs_difference: max_abs,
        total_variation: total_variation(&pa, &pb),
        a: StatsReport::of(&pa)?,
        b: StatsReport::of(&pb)?,
    };
    write_toml(&ctx.path("compare.toml"), &report)?;
    println!("max_abs_difference={:e} total_variation={:e}", report.max_abs_difference, report.total_variation);
    Ok(())
}

fn cmd_stats(ctx: &Ctx, input: &Path) -> Result<()> {
    let p = read_any(input)?;
    let report = StatsReport::of(&p)?;
    write_toml(&ctx.path("stats.toml"), &report)?;
    print!("{}", toml::to_string(&report).map_err(|e| Error::Parse(e.to_string()))?);
    Ok(())
}
