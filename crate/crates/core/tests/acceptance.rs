//! Acceptance suite. Run with `cargo test -p twinbeam --test acceptance`;
//! pass criterion ids (`1`, `3b`, ...) as extra arguments to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use ndarray::Array2;
use twinbeam::detmodel::{
    band_profile, bernoulli_matrix, coincidence_histogram, compose, exponential_approx_matrix,
    finite_pixel_matrix, general_coincidence_probability, improved_intense_matrix, infinite_pixel_matrix,
    profile_matrix_convolved, profile_matrix_exact, profile_matrix_exponential, profile_matrix_infinite,
    profile_matrix_lowcount, DetectorArray, DetectorModel, PixelGroup, PixelGroupProfile, Precision,
    TransferMatrix,
};
use twinbeam::dists::{
    classical_violation_mask, covariance_coefficient, fano, marginals, noise_reduction_r, sum_diff_distributions,
    total_variation, JointDistribution, Kind,
};
use twinbeam::emrec::{default_n_max, reconstruct, EmOptions, ReconstructionResult};
use twinbeam::noisefit::{model_distribution, FitParams, Moments};
use twinbeam::simkit::{forward, simulate_clicks, Arm, PixelAssignment, SimConfig};
use twinbeam::Error;

type Outcome = (bool, String);

// ---------------------------------------------------------------- oracles

fn binom_pmf(k: usize, p: f64) -> Vec<f64> {
    let mut out = vec![0.0; k + 1];
    if p == 0.0 {
        out[0] = 1.0;
        return out;
    }
    if p == 1.0 {
        out[k] = 1.0;
        return out;
    }
    // log-space start avoids underflow of (1-p)^k for large k
    let lq = (1.0 - p).ln();
    let lr = (p / (1.0 - p)).ln();
    let mut l = k as f64 * lq;
    out[0] = l.exp();
    for j in 0..k {
        l += ((k - j) as f64 / (j + 1) as f64).ln() + lr;
        out[j + 1] = l.exp();
    }
    out
}

/// Symmetric-array matrix from the photon-by-photon recurrence over the
/// number of distinct fired pixels, followed by dark clicks on the rest.
fn recurrence_matrix(pixels: usize, tau: f64, d: f64, n_max: usize, c_max: usize) -> Array2<f64> {
    let nf = pixels as f64;
    let m_top = n_max.min(pixels);
    let mut k0 = Array2::<f64>::zeros((m_top + 1, n_max + 1));
    k0[[0, 0]] = 1.0;
    for n in 0..n_max {
        for m in 0..=m_top.min(n + 1) {
            let mut v = k0[[m, n]] * (1.0 - tau + tau * m as f64 / nf);
            if m > 0 {
                v += k0[[m - 1, n]] * tau * (nf - m as f64 + 1.0) / nf;
            }
            k0[[m, n + 1]] = v;
        }
    }
    let mut out = Array2::<f64>::zeros((c_max + 1, n_max + 1));
    for m in 0..=m_top {
        let dark = binom_pmf(pixels - m, d);
        for n in 0..=n_max {
            let w = k0[[m, n]];
            if w == 0.0 {
                continue;
            }
            for (j, b) in dark.iter().enumerate().take(c_max + 1 - m.min(c_max + 1)) {
                if m + j <= c_max {
                    out[[m + j, n]] += w * b;
                }
            }
        }
    }
    out
}

fn max_defect(m: &TransferMatrix) -> f64 {
    m.column_sums().iter().map(|s| (1.0 - s).abs()).fold(0.0, f64::max)
}

fn two_level(pixels: usize, tau: f64, d: f64) -> PixelGroupProfile {
    // half the pixels at twice the intensity of the other half
    let half = pixels / 2;
    let unit = 1.0 / (half as f64 * 3.0);
    PixelGroupProfile::new(vec![
        PixelGroup { nu: half, tau: unit, eta: tau, d },
        PixelGroup { nu: pixels - half, tau: 2.0 * unit * half as f64 / (pixels - half) as f64, eta: tau, d },
    ])
    .unwrap()
}

fn photon_cutoff(params: &FitParams) -> (usize, usize) {
    let mean_s = params.m_p * params.b_p + params.m_s * params.b_s;
    let mean_i = params.m_p * params.b_p + params.m_i * params.b_i;
    let var_s = params.m_p * params.b_p * (1.0 + params.b_p) + params.m_s * params.b_s * (1.0 + params.b_s);
    let var_i = params.m_p * params.b_p * (1.0 + params.b_p) + params.m_i * params.b_i * (1.0 + params.b_i);
    (
        (mean_s + 12.0 * var_s.sqrt() + 10.0).ceil() as usize,
        (mean_i + 12.0 * var_i.sqrt() + 10.0).ceil() as usize,
    )
}

fn set_b() -> FitParams {
    FitParams::photons(628.0, 0.066, 0.46, 0.173, 0.018, 2.32)
}

fn max_click(f: &JointDistribution) -> (usize, usize) {
    let mut ms = 0;
    let mut mi = 0;
    for ((s, i), v) in f.values().indexed_iter() {
        if *v > 0.0 {
            ms = ms.max(s);
            mi = mi.max(i);
        }
    }
    (ms, mi)
}

fn run_em(f: &JointDistribution, gs: &TransferMatrix, gi: &TransferMatrix, iters: usize) -> ReconstructionResult {
    let opts = EmOptions { max_iterations: iters, plateau_window: 0, record_every: 10, ..Default::default() };
    reconstruct(f, gs, gi, gs.n_max(), gi.n_max(), &opts).unwrap()
}

fn trim(m: TransferMatrix, n_max: usize) -> TransferMatrix {
    m.truncate_columns(n_max).unwrap()
}

// ------------------------------------------------------------- criteria

fn c1a() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut where_ = String::new();
    let mut note = |d: f64, label: String| {
        if d > worst {
            worst = d;
            where_ = label;
        }
    };
    let n_max = 64;
    for &tau in &[0.1, 0.2, 0.9] {
        for &dm in &[0.0, 0.09, 0.46] {
            note(max_defect(&bernoulli_matrix(tau, n_max).unwrap()), format!("bernoulli tau={tau}"));
            let inf = infinite_pixel_matrix(tau, dm, n_max, None).unwrap();
            note(max_defect(&inf), format!("infinite tau={tau} D={dm}"));
            let t = bernoulli_matrix(0.8, n_max).unwrap();
            note(max_defect(&compose(&inf, &t).unwrap()), format!("infinite*bernoulli tau={tau} D={dm}"));
            for &pixels in &[16usize, 256, 6528] {
                let d = dm / pixels as f64;
                let fin = finite_pixel_matrix(pixels, tau, d, n_max, Precision::Auto).unwrap();
                note(max_defect(&fin), format!("finite N={pixels} tau={tau} D={dm}"));
                note(max_defect(&compose(&fin, &t).unwrap()), format!("finite*bernoulli N={pixels}"));
                let prof = two_level(pixels, tau, d);
                let ex = profile_matrix_exact(&prof, n_max, Precision::Auto).unwrap();
                note(max_defect(&ex), format!("profile-exact N={pixels} tau={tau} D={dm}"));
                let cv = profile_matrix_convolved(&prof, n_max, Precision::Auto).unwrap();
                note(max_defect(&cv), format!("profile-convolved N={pixels} tau={tau} D={dm}"));
                let pi = profile_matrix_infinite(&prof, n_max, None).unwrap();
                note(max_defect(&pi), format!("profile-infinite N={pixels} tau={tau} D={dm}"));
            }
        }
    }
    (worst < 1e-10, format!("largest column defect {worst:.2e} ({where_}); bound 1e-10"))
}

fn c1b() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut refused = Vec::new();
    for &tau in &[0.1, 0.2, 0.9] {
        for &dm in &[0.0, 0.09, 0.46] {
            for &pixels in &[16usize, 256, 6528] {
                let prof = two_level(pixels, tau, dm / pixels as f64);
                match profile_matrix_lowcount(&prof, 64, None, Precision::Auto) {
                    Ok(m) => worst = worst.max(max_defect(&m)),
                    Err(Error::BudgetExceeded { .. }) => refused.push(format!("N={pixels} tau={tau} D={dm}")),
                    Err(e) => return (false, format!("N={pixels} tau={tau} D={dm}: {e}")),
                }
            }
        }
    }
    (
        worst < 1e-10 && refused.is_empty(),
        format!(
            "low-count form: largest defect {worst:.2e} where built; refused by term budget on {} of 27 grid points",
            refused.len()
        ),
    )
}

fn c2() -> (TransferMatrix, f64) {
    let t0 = Instant::now();
    let k = finite_pixel_matrix(6528, 0.2, 0.46 / 6528.0, 1000, Precision::Auto).unwrap();
    (k, t0.elapsed().as_secs_f64())
}

fn c2a() -> Outcome {
    let (k, secs) = c2();
    let defect = k.max_column_defect();
    let oracle = recurrence_matrix(6528, 0.2, 0.46 / 6528.0, 1000, k.c_max());
    let mut diff: f64 = 0.0;
    for c in 0..=k.c_max() {
        for n in 0..=1000 {
            diff = diff.max((k.get(c, n) - oracle[[c, n]]).abs());
        }
    }
    (
        defect < 1e-8 && diff < 1e-10 && secs <= 1800.0,
        format!("defect {defect:.2e} (< 1e-8), max |K - recurrence| {diff:.2e}, {secs:.1} s"),
    )
}

fn c2b() -> Outcome {
    let (k, _) = c2();
    let digits = k.meta().precision_digits.unwrap_or(0);
    let lower = match finite_pixel_matrix(6528, 0.2, 0.46 / 6528.0, 1000, Precision::Digits(300)) {
        Ok(m) => format!("300 digits accepted (defect {:.2e})", m.max_column_defect()),
        Err(e) => format!("300 digits rejected: {e}"),
    };
    ((200..=300).contains(&digits), format!("auto-selected {digits} digits, window 200-300; {lower}"))
}

/// Largest deviation in standard errors between Monte Carlo marginals and
/// analytic columns for photon numbers `0..=n_max`.
fn mc_z(
    gs: &TransferMatrix,
    arm_s: &Arm,
    gi: &TransferMatrix,
    arm_i: &Arm,
    assignment: PixelAssignment,
    n_max: usize,
    trials: u64,
) -> (f64, String) {
    let mut worst = 0.0;
    let mut at = String::new();
    for n in 0..=n_max {
        let p = JointDistribution::point(n, n, Kind::Photon);
        let cfg = SimConfig { pixel_assignment: assignment, ..SimConfig::new(trials, 1000 + n as u64) };
        let h = simulate_clicks(&p, arm_s, arm_i, &cfg).unwrap().to_distribution();
        let (ms, mi) = marginals(&h);
        for (g, m, side) in [(gs, &ms, "S"), (gi, &mi, "I")] {
            for c in 0..=g.c_max().max(m.values.len()) {
                let want = g.get(c, n);
                let got = m.at(c as i64);
                let t = trials as f64;
                let se = (want.max(1.0 / t) * (1.0 - want).max(1.0 / t) / t).sqrt();
                let z = (got - want).abs() / se;
                if z > worst {
                    worst = z;
                    at = format!("{side} n={n} c={c}: mc {got:.5} vs {want:.5}");
                }
            }
        }
    }
    (worst, at)
}

fn c3a() -> Outcome {
    let a = DetectorModel::new(1.0, 16, 0.23, 0.01).unwrap();
    let b = DetectorModel::new(0.9, 4, 0.6, 0.02).unwrap();
    let gs = finite_pixel_matrix(16, a.tau(), a.dark_prob, 12, Precision::Auto).unwrap();
    let gi = finite_pixel_matrix(4, b.tau(), b.dark_prob, 12, Precision::Auto).unwrap();
    let (z, at) = mc_z(&gs, &Arm::uniform(a), &gi, &Arm::uniform(b), PixelAssignment::Uniform, 12, 1_000_000);
    (z < 5.0, format!("exact symmetric matrix vs 1e6-frame MC: max {z:.2} SE at {at}"))
}

fn c3b() -> Outcome {
    let a = DetectorModel::new(1.0, 16, 0.23, 0.0).unwrap();
    let b = DetectorModel::new(0.9, 8, 0.5, 0.0).unwrap();
    let gs = improved_intense_matrix(&a, 12).unwrap();
    let gi = improved_intense_matrix(&b, 12).unwrap();
    let (z, at) = mc_z(&gs, &Arm::uniform(a), &gi, &Arm::uniform(b), PixelAssignment::Uniform, 12, 1_000_000);
    (z < 5.0, format!("improved intense-field matrix vs 1e6-frame MC: max {z:.2} SE at {at}"))
}

fn c3c() -> Outcome {
    let unit = DetectorModel::new(1.0, 4, 1.0, 0.0).unwrap();
    let two = PixelGroupProfile::new(vec![
        PixelGroup { nu: 2, tau: 0.2, eta: 0.23, d: 0.0 },
        PixelGroup { nu: 2, tau: 0.05, eta: 0.23, d: 0.0 },
    ])
    .unwrap();
    let three = PixelGroupProfile::new(vec![
        PixelGroup { nu: 4, tau: 0.1, eta: 0.5, d: 0.01 },
        PixelGroup { nu: 6, tau: 0.06, eta: 0.4, d: 0.0 },
        PixelGroup { nu: 6, tau: 0.04, eta: 0.3, d: 0.02 },
    ])
    .unwrap();
    let unit16 = DetectorModel::new(1.0, 16, 1.0, 0.0).unwrap();
    let gs = profile_matrix_exact(&two, 12, Precision::Auto).unwrap();
    let gi = profile_matrix_exact(&three, 12, Precision::Auto).unwrap();
    let (z, at) = mc_z(
        &gs,
        &Arm::with_profile(unit, two),
        &gi,
        &Arm::with_profile(unit16, three),
        PixelAssignment::ProfileWeighted,
        12,
        1_000_000,
    );
    (z < 5.0, format!("profile matrix (M=2, M=3) vs 1e6-frame MC: max {z:.2} SE at {at}"))
}

fn c3d() -> Outcome {
    let mut worst: f64 = 0.0;
    // spread joint distribution over 0..=6 x 0..=6
    let mut v = Array2::<f64>::zeros((7, 7));
    for ((s, i), x) in v.indexed_iter_mut() {
        *x = 1.0 + ((s * 7 + i * 3) % 5) as f64 + if s == i { 4.0 } else { 0.0 };
    }
    let total = v.sum();
    v.mapv_inplace(|x| x / total);
    let p = JointDistribution::new(v, Kind::Photon).unwrap();
    for pixels in 1..=6usize {
        let (t, eta, d) = (0.8, 0.55, 0.03);
        let arr = DetectorArray::symmetric(t, pixels, eta, d).unwrap();
        let k = finite_pixel_matrix(pixels, t * eta, d, 6, Precision::Auto).unwrap();
        let want = forward(&p, &k, &k).unwrap();
        let got = coincidence_histogram(&p, &arr, &arr).unwrap();
        for c in 0..=pixels {
            for e in 0..=pixels {
                worst = worst.max((got.get(c, e) - want.get(c, e)).abs());
            }
        }
        if pixels <= 4 {
            // explicit sum over all fired-set pairs
            let mut sums = Array2::<f64>::zeros((pixels + 1, pixels + 1));
            let sets: Vec<Vec<usize>> =
                (0u32..1 << pixels).map(|m| (0..pixels).filter(|j| m >> j & 1 == 1).collect()).collect();
            for a in &sets {
                for b in &sets {
                    sums[[a.len(), b.len()]] += general_coincidence_probability(&p, &arr, &arr, a, b).unwrap();
                }
            }
            for ((c, e), x) in sums.indexed_iter() {
                worst = worst.max((x - want.get(c, e)).abs());
            }
        }
    }
    (worst < 1e-12, format!("multi-coincidence vs symmetric matrix assembly, N<=6, n<=6: max diff {worst:.2e}"))
}

fn c4() -> Outcome {
    let p = model_distribution(&set_b(), 200, 200).unwrap();
    let m = Moments::of(&p).unwrap();
    let (fs, fi, cov) = (m.fano_s(), m.fano_i(), m.correlation());
    let ok = (fs - 1.066).abs() <= 0.002 && (fi - 1.068).abs() <= 0.002 && (cov - 0.997).abs() <= 0.002;
    (ok, format!("F_S {fs:.4} (1.066+-0.002), F_I {fi:.4} (1.068+-0.002), C {cov:.4} (0.997+-0.002)"))
}

fn c5() -> Outcome {
    let p = model_distribution(&set_b(), 200, 200).unwrap();
    let gs = infinite_pixel_matrix(0.207, 0.09, 200, None).unwrap();
    let gi = infinite_pixel_matrix(0.205, 0.09, 200, None).unwrap();
    let f = forward(&p, &gs, &gi).unwrap();
    let m = Moments::of(&f).unwrap();
    let ok = (m.mean_s - 8.6).abs() <= 0.2 && (m.mean_i - 8.6).abs() <= 0.2 && (m.correlation() - 0.214).abs() <= 0.01;
    (
        ok,
        format!(
            "click means {:.3}/{:.3} (8.6+-0.2), click covariance {:.4} (0.214+-0.010)",
            m.mean_s,
            m.mean_i,
            m.correlation()
        ),
    )
}

fn c6() -> Outcome {
    let t0 = Instant::now();
    let params = set_b();
    let (ns, ni) = photon_cutoff(&params);
    let p = model_distribution(&params, ns, ni).unwrap();
    let a_s = DetectorModel::with_dark_mean(1.0, 6528, 0.207, 0.09).unwrap();
    let a_i = DetectorModel::with_dark_mean(1.0, 6528, 0.205, 0.09).unwrap();
    let f = simulate_clicks(&p, &Arm::uniform(a_s), &Arm::uniform(a_i), &SimConfig::new(100_000, 7))
        .unwrap()
        .to_distribution();
    let (cs, ci) = max_click(&f);
    let gs = infinite_pixel_matrix(0.207, 0.09, default_n_max(cs, 0.207), Some(cs)).unwrap();
    let gi = infinite_pixel_matrix(0.205, 0.09, default_n_max(ci, 0.205), Some(ci)).unwrap();
    let opts = EmOptions { max_iterations: 2000, plateau_window: 0, ..Default::default() };
    let r = reconstruct(&f, &gs, &gi, gs.n_max(), gi.n_max(), &opts).unwrap();
    let c = covariance_coefficient(&r.p_rec).unwrap();
    let rr = noise_reduction_r(&r.p_rec).unwrap();
    let c0 = r.trace.first().map(|t| t.covariance).unwrap_or(f64::NAN);
    let c500 = r.trace.iter().find(|t| t.iteration >= 500).map(|t| t.covariance).unwrap_or(f64::NAN);
    let shape = c0.abs() < 0.02 && c500 >= 0.9 * c;
    let secs = t0.elapsed().as_secs_f64();
    (
        c >= 0.85 && rr <= 0.2 && shape && secs <= 1800.0,
        format!(
            "C {c:.4} (>= 0.85), R {rr:.4} (<= 0.2), trace C(0) {c0:.3}, C(500) {c500:.3} (>= 0.9 C_final), {} iterations, {secs:.1} s",
            r.iterations_run
        ),
    )
}

fn toy() -> (TransferMatrix, JointDistribution, JointDistribution) {
    let g = bernoulli_matrix(0.5, 2).unwrap();
    let mut v = Array2::<f64>::zeros((3, 3));
    v[[0, 0]] = 0.2;
    v[[1, 1]] = 0.5;
    v[[2, 2]] = 0.3;
    let truth = JointDistribution::new(v, Kind::Photon).unwrap();
    let f = forward(&truth, &g, &g).unwrap();
    (g, truth, f)
}

fn c7a() -> Outcome {
    let (g, _, f) = toy();
    let opts = EmOptions { max_iterations: 100, plateau_window: 0, residual_tol: 0.0, ..Default::default() };
    let r = reconstruct(&f, &g, &g, 2, 2, &opts).unwrap();
    let kls: Vec<f64> = r.trace.iter().map(|t| t.kl).collect();
    let worst = kls.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    (
        kls.len() >= 100 && worst <= 1e-12,
        format!("{} logged steps, largest KL increase {worst:.2e} (slack 1e-12)", kls.len()),
    )
}

fn c7b() -> Outcome {
    let (g, truth, f) = toy();
    let opts = EmOptions { max_iterations: 20_000, plateau_window: 0, residual_tol: 0.0, ..Default::default() };
    let r = reconstruct(&f, &g, &g, 2, 2, &opts).unwrap();
    let tv = total_variation(&r.p_rec, &truth);
    (tv < 1e-3, format!("planted-truth TV {tv:.2e} after {} iterations (< 1e-3)", r.iterations_run))
}

fn c7c() -> Outcome {
    let pois = |mu: f64| {
        twinbeam::dists::Distribution1D::new(
            (0..40).map(|k| (-mu + k as f64 * mu.ln() - (1..=k).map(|j| (j as f64).ln()).sum::<f64>()).exp()).collect(),
            0,
        )
        .unwrap()
    };
    let p = JointDistribution::product(&pois(6.0), &pois(5.0), Kind::Photon).unwrap();
    let arm = DetectorModel::with_dark_mean(1.0, 4096, 0.5, 0.05).unwrap();
    let f = simulate_clicks(&p, &Arm::uniform(arm), &Arm::uniform(arm), &SimConfig::new(100_000, 11))
        .unwrap()
        .to_distribution();
    let (cs, ci) = max_click(&f);
    let gs = infinite_pixel_matrix(0.5, 0.05, default_n_max(cs, 0.5), Some(cs)).unwrap();
    let gi = infinite_pixel_matrix(0.5, 0.05, default_n_max(ci, 0.5), Some(ci)).unwrap();
    let r = run_em(&f, &gs, &gi, 1000);
    let c = covariance_coefficient(&r.p_rec).unwrap();
    (c.abs() < 0.02, format!("independent Poisson field: reconstructed C {c:.4} after 1000 iterations (< 0.02)"))
}

fn c8a() -> Outcome {
    let mu: f64 = 3.0;
    let mut v = Array2::<f64>::zeros((31, 31));
    let mut w = (-mu).exp();
    for n in 0..=30 {
        v[[n, n]] = w;
        w *= mu / (n + 1) as f64;
    }
    let p = JointDistribution::new(v, Kind::Photon).unwrap().normalized().unwrap();
    let r = noise_reduction_r(&p).unwrap();
    let c = covariance_coefficient(&p).unwrap();
    let (plus, _) = sum_diff_distributions(&p);
    let odd: f64 = (0..plus.values.len()).map(|k| plus.index(k)).filter(|n| n % 2 != 0).map(|n| plus.at(n)).sum();
    let ok = r.abs() < 1e-12 && (c - 1.0).abs() < 1e-12 && odd == 0.0;
    (ok, format!("diagonal pair field: R {r:.1e}, C {c:.12}, odd p+ mass {odd:e}"))
}

fn low_noise_reconstruction() -> JointDistribution {
    let params = FitParams::photons(400.0, 0.01, 0.05, 0.02, 0.05, 0.02);
    let (ns, ni) = photon_cutoff(&params);
    let p = model_distribution(&params, ns, ni).unwrap();
    let arm = DetectorModel::with_dark_mean(1.0, 6528, 0.8, 0.01).unwrap();
    let f = simulate_clicks(&p, &Arm::uniform(arm), &Arm::uniform(arm), &SimConfig::new(10_000_000, 5))
        .unwrap()
        .to_distribution();
    let (cs, ci) = max_click(&f);
    let gs = infinite_pixel_matrix(0.8, 0.01, default_n_max(cs, 0.8), Some(cs)).unwrap();
    let gi = infinite_pixel_matrix(0.8, 0.01, default_n_max(ci, 0.8), Some(ci)).unwrap();
    run_em(&f, &gs, &gi, 2000).p_rec
}

fn c8b() -> Outcome {
    let p = low_noise_reconstruction();
    let (plus, _) = sum_diff_distributions(&p);
    let mut worst = 0.0;
    let mut worst_at = 0;
    let mut checked = 0;
    for pos in 0..plus.values.len() {
        let n = plus.index(pos);
        if n % 2 == 0 {
            continue;
        }
        let even = 0.5 * (plus.at(n - 1) + plus.at(n + 1));
        if even < 1e-3 {
            continue;
        }
        checked += 1;
        let ratio = plus.at(n) / even;
        if ratio > worst {
            worst = ratio;
            worst_at = n;
        }
    }
    let violations = classical_violation_mask(&p).iter().filter(|v| **v).count();
    (
        checked > 0 && worst < 0.1 && violations > 0,
        format!("low-noise reconstruction: worst odd/even ratio {worst:.4} at n={worst_at} over {checked} odd elements (< 0.1), {violations} violating cells"),
    )
}

fn c8c() -> Outcome {
    let pois = |mu: f64, len: usize| {
        let mut out = Vec::with_capacity(len);
        let mut w = (-mu).exp();
        for k in 0..len {
            out.push(w);
            w *= mu / (k + 1) as f64;
        }
        twinbeam::dists::Distribution1D::new(out, 0).unwrap()
    };
    let p = JointDistribution::product(&pois(4.0, 40), &pois(7.0, 50), Kind::Photon).unwrap();
    let n = classical_violation_mask(&p).iter().filter(|v| **v).count();
    (n == 0, format!("product Poisson field: {n} violating cells"))
}

fn c9a() -> Outcome {
    let mut worst: f64 = 0.0;
    let close = |a: &TransferMatrix, b: &TransferMatrix, rows: usize| {
        let mut w: f64 = 0.0;
        for c in 0..=rows {
            for n in 0..=a.n_max().min(b.n_max()) {
                w = w.max((a.get(c, n) - b.get(c, n)).abs());
            }
        }
        w
    };
    for &(pixels, eta, d) in &[(8usize, 0.3, 0.01), (64, 0.23, 0.001), (512, 0.9, 1e-4)] {
        let one = PixelGroupProfile::uniform(pixels, eta, d).unwrap();
        let fin = finite_pixel_matrix(pixels, eta, d, 12, Precision::Auto).unwrap();
        let rows = fin.c_max();
        worst = worst.max(close(&profile_matrix_exact(&one, 12, Precision::Auto).unwrap(), &fin, rows));
        worst = worst.max(close(&profile_matrix_convolved(&one, 12, Precision::Auto).unwrap(), &fin, rows));
        let low = profile_matrix_lowcount(&one, 12, Some(3), Precision::Auto).unwrap();
        worst = worst.max(close(&low, &fin, 3));
        let inf = infinite_pixel_matrix(eta, pixels as f64 * d, 12, None).unwrap();
        worst = worst.max(close(&profile_matrix_infinite(&one, 12, None).unwrap(), &inf, inf.c_max()));
        let model = DetectorModel::new(1.0, pixels, eta, d).unwrap();
        let ex = exponential_approx_matrix(&model, 12, Some(8)).unwrap();
        worst = worst.max(close(&profile_matrix_exponential(&one, 12, Some(8)).unwrap(), &ex, 8));
    }
    (worst < 1e-10, format!("single-group reductions: max diff {worst:.2e} (< 1e-10)"))
}

fn c9b() -> Outcome {
    let pixels = 128;
    let tau = 0.3;
    let mut image = Array2::<f64>::from_elem((8, 16), 1.0);
    for x in image.slice_mut(ndarray::s![4.., ..]).iter_mut() {
        *x = 2.0;
    }
    let truth = band_profile(image.view(), 2, tau, 0.0).unwrap();
    let params = FitParams::photons(60.0, 1.0, 5.0, 1.0, 5.0, 1.0);
    let (ns, ni) = photon_cutoff(&params);
    let p = model_distribution(&params, ns, ni).unwrap();
    let unit = DetectorModel::new(1.0, pixels, 1.0, 0.0).unwrap();
    let arm = Arm::with_profile(unit, truth);
    let cfg = SimConfig { pixel_assignment: PixelAssignment::ProfileWeighted, ..SimConfig::new(100_000, 9) };
    let f = simulate_clicks(&p, &arm, &arm, &cfg).unwrap().to_distribution();
    let (cs, ci) = max_click(&f);
    let n_max = default_n_max(cs.max(ci), tau).min(ns.max(ni));
    let mut fanos = Vec::new();
    for m in 0..=8usize {
        let g = if m == 0 {
            infinite_pixel_matrix(tau, 0.0, n_max, Some(cs.max(ci))).unwrap()
        } else {
            let prof = band_profile(image.view(), m, tau, 0.0).unwrap();
            trim(profile_matrix_convolved(&prof, n_max, Precision::Auto).unwrap(), n_max)
        };
        let r = run_em(&f, &g, &g, 500);
        let (ms, mi) = marginals(&r.p_rec);
        fanos.push((fano(&ms).unwrap(), fano(&mi).unwrap()));
    }
    let slack = 0.01;
    let monotone = fanos.windows(2).all(|w| w[1].0 >= w[0].0 - slack && w[1].1 >= w[0].1 - slack);
    let rises = fanos[8].0 > fanos[0].0 + slack && fanos[8].1 > fanos[0].1 + slack;
    let listing: Vec<String> = fanos.iter().map(|(s, i)| format!("{s:.3}/{i:.3}")).collect();
    (monotone && rises, format!("reconstructed Fano S/I for M=0..8: {}", listing.join(" ")))
}

// ----------------------------------------------------------------- driver

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: Vec<(&str, &str, fn() -> Outcome)> = vec![
        ("1a", "normalization of exact matrices", c1a),
        ("1b", "normalization of the low-count profile form", c1b),
        ("2a", "large symmetric matrix accuracy", c2a),
        ("2b", "auto precision in the 200-300 digit window", c2b),
        ("3a", "Monte Carlo vs exact symmetric matrix", c3a),
        ("3b", "Monte Carlo vs improved intense-field matrix", c3b),
        ("3c", "Monte Carlo vs exact profile matrix", c3c),
        ("3d", "multi-coincidence vs symmetric assembly", c3d),
        ("4", "fitted model photon statistics", c4),
        ("5", "fitted model click statistics", c5),
        ("6", "end-to-end synthetic reconstruction", c6),
        ("7a", "KL monotonicity", c7a),
        ("7b", "planted-truth recovery", c7b),
        ("7c", "independent-field reconstruction", c7c),
        ("8a", "noise-free pair field", c8a),
        ("8b", "low-noise reconstruction nonclassicality", c8b),
        ("8c", "product field classicality", c8c),
        ("9a", "single-group reductions", c9a),
        ("9b", "Fano factors grow with profile resolution", c9b),
    ];
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|x| id.starts_with(x.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("{verdict} [{id}] {name}: {detail} ({:.1} s)", t0.elapsed().as_secs_f64());
        if !ok {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
