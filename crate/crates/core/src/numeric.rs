//! Small f64 helpers for binomial/Poisson weights and their tails.

use statrs::function::gamma::ln_gamma;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln(n!) - ln(sqrt(2 pi n) (n/e)^n)` for integer `n`.
pub fn stirlerr(n: u64) -> f64 {
    const TABLE: [f64; 16] = [
        0.0,
        0.081_061_466_795_327_26,
        0.041_340_695_955_409_29,
        0.027_677_925_684_998_34,
        0.020_790_672_103_765_09,
        0.016_644_691_189_821_19,
        0.013_876_128_823_070_75,
        0.011_896_709_945_891_77,
        0.010_411_265_261_972_1,
        0.009_255_462_182_712_733,
        0.008_330_563_433_362_871,
        0.007_573_675_487_951_841,
        0.006_942_840_107_209_53,
        0.006_408_994_188_004_207,
        0.005_951_370_112_758_848,
        0.005_554_733_551_962_801,
    ];
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n < 16 {
        return TABLE[n as usize];
    }
    let x = n as f64;
    let nn = x * x;
    if n > 500 {
        (S0 - S1 / nn) / x
    } else if n > 80 {
        (S0 - (S1 - S2 / nn) / nn) / x
    } else if n > 35 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / x
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / x
    }
}

/// Deviance term `x ln(x / m) + m - x`, accurate when `x` is close to `m`.
pub fn bd0(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let mut v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// `ln C(n, k)`; `-inf` when `k > n`. Integer arguments use the
/// Stirling-remainder form, others fall back to log-gamma.
pub fn ln_choose(n: f64, k: f64) -> f64 {
    if k < 0.0 || k > n {
        return f64::NEG_INFINITY;
    }
    if n.fract() == 0.0 && k.fract() == 0.0 && n < 9.0e15 {
        let j = n - k;
        if k == 0.0 || j == 0.0 {
            return 0.0;
        }
        return stirlerr(n as u64) - stirlerr(k as u64) - stirlerr(j as u64)
            - 0.5 * (LN_2PI + (k * j / n).ln())
            + k * (n / k).ln()
            + j * (n / j).ln();
    }
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// Binomial pmf by the saddle-point expansion, accurate to a few ulps.
pub fn binom_pmf(k: u64, n: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    let q = 1.0 - p;
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if q == 0.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    if k == 0 {
        return (nf * (-p).ln_1p()).exp();
    }
    if k == n {
        return (nf * p.ln()).exp();
    }
    let kf = k as f64;
    let lc = stirlerr(n) - stirlerr(k) - stirlerr(n - k) - bd0(kf, nf * p) - bd0(nf - kf, nf * q);
    let lf = LN_2PI + kf.ln() + (-kf / nf).ln_1p();
    (lc - 0.5 * lf).exp()
}

/// Full `Binomial(n, p)` pmf for `k = 0..=n`.
pub fn binom_pmf_vec(n: u64, p: f64) -> Vec<f64> {
    (0..=n).map(|k| binom_pmf(k, n, p)).collect()
}

pub fn poisson_pmf(k: u64, mu: f64) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if k == 0 {
        return (-mu).exp();
    }
    let kf = k as f64;
    (-stirlerr(k) - bd0(kf, mu)).exp() / (LN_2PI + kf.ln()).exp().sqrt()
}

pub fn poisson_pmf_vec(mu: f64, k_max: usize) -> Vec<f64> {
    (0..=k_max as u64).map(|k| poisson_pmf(k, mu)).collect()
}

/// Smallest `k` with `P(X > k) < eps` for `X ~ Poisson(mu)`.
pub fn poisson_cutoff(mu: f64, eps: f64) -> usize {
    if mu == 0.0 {
        return 0;
    }
    let mut k = 0u64;
    loop {
        // the tail beyond k is bounded by pmf(k+1)/(1 - mu/(k+2)) once k+2 > mu
        let next = poisson_pmf(k + 1, mu);
        let ratio = mu / (k as f64 + 2.0);
        if ratio < 1.0 && next / (1.0 - ratio) < eps {
            return k as usize;
        }
        k += 1;
    }
}

/// Smallest `k` with `P(X > k) < eps` for `X ~ Binomial(n, p)`.
pub fn binom_cutoff(n: u64, p: f64, eps: f64) -> u64 {
    if p == 0.0 || n == 0 {
        return 0;
    }
    let mean = n as f64 * p;
    for k in 0..n {
        if (k as f64) < mean {
            continue;
        }
        let next = binom_pmf(k + 1, n, p);
        // geometric bound on the tail beyond k once past the mode
        let ratio = (n - k - 1) as f64 / (k as f64 + 2.0) * p / (1.0 - p);
        if ratio < 1.0 && next / (1.0 - ratio) < eps {
            return k;
        }
    }
    n
}

/// Linear convolution of two sequences.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Natural log of the sum of exponentials.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}
