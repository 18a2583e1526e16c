//! Exact coincidence probabilities for small arrays of binary detectors
//! behind a lossy beam splitter network.

use ndarray::Array2;
use rug::Float;

use super::check_prob;
use super::precision::{bits_for_digits, MIN_DIGITS};
use crate::dists::{JointDistribution, Kind};
use crate::error::{Error, Result};

/// Largest detector count per arm accepted by the subset enumeration.
pub const MAX_DETECTORS: usize = 12;

/// One arm: transmissivity in front of the splitter, then per-output
/// amplitude `t`, efficiency and dark-count probability.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorArray {
    pub transmissivity: f64,
    pub amplitudes: Vec<f64>,
    pub efficiencies: Vec<f64>,
    pub dark_probs: Vec<f64>,
}

impl DetectorArray {
    /// Balanced splitter onto `n` identical detectors.
    pub fn symmetric(transmissivity: f64, n: usize, eta: f64, d: f64) -> Result<Self> {
        let a = Self {
            transmissivity,
            amplitudes: vec![(1.0 / n as f64).sqrt(); n],
            efficiencies: vec![eta; n],
            dark_probs: vec![d; n],
        };
        a.validate()?;
        Ok(a)
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::InvalidParameter("detector array is empty".into()));
        }
        if self.efficiencies.len() != n || self.dark_probs.len() != n {
            return Err(Error::Dimension("detector parameter lists differ in length".into()));
        }
        if n > MAX_DETECTORS {
            return Err(Error::BudgetExceeded { terms: 1u128 << n, budget: 1u128 << MAX_DETECTORS });
        }
        check_prob("transmissivity", self.transmissivity)?;
        for (&e, &d) in self.efficiencies.iter().zip(&self.dark_probs) {
            check_prob("efficiency", e)?;
            if !(0.0..1.0).contains(&d) {
                return Err(Error::InvalidParameter(format!("dark probability {d} outside [0, 1)")));
            }
        }
        let power: f64 = self.amplitudes.iter().map(|t| t * t).sum();
        if (power - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("splitter power {power} is not 1")));
        }
        Ok(())
    }

    /// Probability that exactly the detectors in bitmask `fired` click, for
    /// `n = 0..=n_max` photons entering the arm.
    fn exact_pattern(&self, fired: u32, n_max: usize, bits: u32) -> Vec<f64> {
        let n = self.len();
        let one = Float::with_val(bits, 1);
        let t = Float::with_val(bits, self.transmissivity);
        let refl = Float::with_val(bits, &one - &t);
        let power: Vec<Float> = self.amplitudes.iter().map(|a| Float::with_val(bits, a * a)).collect();
        let keep: Vec<Float> = self.dark_probs.iter().map(|d| Float::with_val(bits, &one - d)).collect();
        let mut acc = vec![Float::with_val(bits, 0); n_max + 1];
        let k = fired.count_ones();
        // A runs over subsets of the fired set; the detectors outside A stay silent
        let mut sub = fired;
        loop {
            let mut weight = Float::with_val(bits, 1);
            let mut inside = Float::with_val(bits, 0);
            for b in 0..n {
                if sub >> b & 1 == 1 {
                    inside += &power[b];
                } else {
                    weight *= &keep[b];
                    let miss = Float::with_val(bits, &one - self.efficiencies[b]);
                    inside += Float::with_val(bits, &power[b] * &miss);
                }
            }
            let base = Float::with_val(bits, &t * &inside) + &refl;
            if (k - sub.count_ones()) % 2 == 1 {
                weight = -weight;
            }
            let mut term = weight;
            for slot in acc.iter_mut() {
                *slot += &term;
                term *= &base;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & fired;
        }
        acc.iter().map(|v| v.to_f64().max(0.0)).collect()
    }

    /// `K(c, n)`: probability of `c` clicks anywhere in the array.
    fn count_matrix(&self, n_max: usize, bits: u32) -> Array2<f64> {
        let n = self.len();
        let mut k = Array2::zeros((n + 1, n_max + 1));
        for fired in 0u32..(1u32 << n) {
            let c = fired.count_ones() as usize;
            for (m, v) in self.exact_pattern(fired, n_max, bits).into_iter().enumerate() {
                k[[c, m]] += v;
            }
        }
        k
    }
}

fn mask(set: &[usize], n: usize) -> Result<u32> {
    let mut m = 0u32;
    for &i in set {
        if i >= n {
            return Err(Error::InvalidParameter(format!("detector index {i} out of range for {n} detectors")));
        }
        m |= 1 << i;
    }
    Ok(m)
}

/// Probability that exactly the signal detectors `fired_s` and the idler
/// detectors `fired_i` click, for joint photon-number distribution `p`.
pub fn general_coincidence_probability(
    p: &JointDistribution,
    signal: &DetectorArray,
    idler: &DetectorArray,
    fired_s: &[usize],
    fired_i: &[usize],
) -> Result<f64> {
    signal.validate()?;
    idler.validate()?;
    let bits = bits_for_digits(MIN_DIGITS);
    let ks = signal.exact_pattern(mask(fired_s, signal.len())?, p.n_max_s(), bits);
    let ki = idler.exact_pattern(mask(fired_i, idler.len())?, p.n_max_i(), bits);
    let mut total = 0.0;
    for ((s, i), w) in p.values().indexed_iter() {
        total += w * ks[s] * ki[i];
    }
    Ok(total)
}

/// Click-count histogram obtained by summing the exact coincidence
/// probabilities over all fired sets of each size.
pub fn coincidence_histogram(
    p: &JointDistribution,
    signal: &DetectorArray,
    idler: &DetectorArray,
) -> Result<JointDistribution> {
    signal.validate()?;
    idler.validate()?;
    let bits = bits_for_digits(MIN_DIGITS);
    let ks = signal.count_matrix(p.n_max_s(), bits);
    let ki = idler.count_matrix(p.n_max_i(), bits);
    let f = ks.dot(p.values()).dot(&ki.t());
    JointDistribution::new(f, Kind::Click)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detmodel::{finite_pixel_matrix, Precision};
    use approx::assert_abs_diff_eq;

    #[test]
    fn vacuum_without_dark_counts() {
        let p = JointDistribution::point(0, 0, Kind::Photon);
        let a = DetectorArray::symmetric(0.8, 3, 0.5, 0.0).unwrap();
        assert_abs_diff_eq!(general_coincidence_probability(&p, &a, &a, &[], &[]).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn single_pair_single_detectors() {
        let p = JointDistribution::point(1, 1, Kind::Photon);
        let a = DetectorArray::symmetric(1.0, 1, 0.4, 0.0).unwrap();
        let v = general_coincidence_probability(&p, &a, &a, &[0], &[0]).unwrap();
        assert_abs_diff_eq!(v, 0.16, epsilon = 1e-15);
    }

    #[test]
    fn symmetric_arrays_match_finite_pixel_matrix() {
        let a = DetectorArray::symmetric(0.7, 4, 0.6, 0.05).unwrap();
        let k = finite_pixel_matrix(4, 0.42, 0.05, 6, Precision::Auto).unwrap();
        let kc = a.count_matrix(6, bits_for_digits(MIN_DIGITS));
        for c in 0..=4 {
            for n in 0..=6 {
                assert_abs_diff_eq!(kc[[c, n]], k.get(c, n), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn single_fired_set_times_multiplicity() {
        let p = JointDistribution::point(3, 2, Kind::Photon);
        let a = DetectorArray::symmetric(0.9, 4, 0.5, 0.01).unwrap();
        let b = DetectorArray::symmetric(0.8, 3, 0.7, 0.02).unwrap();
        let f = coincidence_histogram(&p, &a, &b).unwrap();
        let one = general_coincidence_probability(&p, &a, &b, &[0, 2], &[1]).unwrap();
        assert_abs_diff_eq!(f.get(2, 1), 6.0 * 3.0 * one, epsilon = 1e-14);
    }

    #[test]
    fn oversized_arrays_are_refused() {
        assert!(matches!(
            DetectorArray::symmetric(1.0, 13, 0.5, 0.0),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn unbalanced_power_is_rejected() {
        let a = DetectorArray {
            transmissivity: 1.0,
            amplitudes: vec![0.5, 0.5],
            efficiencies: vec![1.0, 1.0],
            dark_probs: vec![0.0, 0.0],
        };
        assert!(a.validate().is_err());
    }
}
