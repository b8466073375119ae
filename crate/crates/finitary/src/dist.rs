//! Integer jump distributions with structurally exponential tails.
//!
//! A jump distribution is the common law `T` of the gaps between
//! consecutive 1's of a renewal process. It is stored as exact head
//! probabilities `p(1..=K)` plus an optional geometric continuation
//! `p(n) = A·λⁿ` for `n > K`, which makes survivals, hazards, the mean
//! and the pgf radius closed-form instead of truncated.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stream::{UniformSource, UniformStream};

/// Slop accepted in the total mass of user input before normalizing.
const LOAD_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("negative probability in distribution input")]
    NegativeProbability,
    #[error("total mass {0} deviates from 1 by more than 1e-9")]
    MassDeviation(f64),
    #[error("tail rate {0} outside (0,1)")]
    InvalidTailRate(f64),
    #[error("distribution has empty support")]
    EmptySupport,
    #[error("zero survival at {0}: no mass at or beyond it")]
    ZeroSurvival(u64),
}

/// On-disk description of a jump distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionSpec {
    /// `head[i]` is `P(T = i+1)`.
    pub head: Vec<f64>,
    pub tail: Option<TailSpec>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TailSpec {
    pub coef: f64,
    pub rate: f64,
}

/// Exact geometric continuation `p(n) = coef · rateⁿ` beyond the head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricTail {
    pub coef: f64,
    pub rate: f64,
}

/// Codability summary: what the necessary conditions say about `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodabilityReport {
    /// gcd of the support is 1.
    pub non_lattice: bool,
    /// Structurally true in this representation.
    pub exponential_tail: bool,
    /// No geometric tail present.
    pub bounded: bool,
}

/// Law of a positive-integer jump time `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpDistribution {
    head: Vec<f64>,
    tail: Option<GeometricTail>,
    /// `survival[n-1] = P(T ≥ n)` for `n = 1..=K+1`, accumulated tail-up.
    survival: Vec<f64>,
    mean: f64,
}

impl JumpDistribution {
    /// Loads and normalizes a distribution description.
    pub fn from_spec(spec: &DistributionSpec) -> Result<Self, DistError> {
        let tail = match spec.tail {
            Some(TailSpec { coef, rate }) => {
                if coef < 0.0 || !coef.is_finite() {
                    return Err(DistError::NegativeProbability);
                }
                if !(rate > 0.0 && rate < 1.0) {
                    return Err(DistError::InvalidTailRate(rate));
                }
                if coef == 0.0 {
                    None
                } else {
                    Some(GeometricTail { coef, rate })
                }
            }
            None => None,
        };
        Self::build(spec.head.clone(), tail)
    }

    /// Bounded distribution from head probabilities alone.
    pub fn from_head(head: &[f64]) -> Result<Self, DistError> {
        Self::build(head.to_vec(), None)
    }

    /// Head plus exact geometric tail `p(n) = coef · rateⁿ` for `n > head.len()`.
    pub fn with_tail(head: &[f64], coef: f64, rate: f64) -> Result<Self, DistError> {
        Self::from_spec(&DistributionSpec {
            head: head.to_vec(),
            tail: Some(TailSpec { coef, rate }),
        })
    }

    /// `Geom(p)`: `p(n) = p(1-p)^{n-1}`.
    pub fn geometric(p: f64) -> Self {
        Self::with_tail(&[], p / (1.0 - p), 1.0 - p).expect("geometric parameters")
    }

    /// Point mass at `k`.
    pub fn deterministic(k: u64) -> Self {
        let mut head = vec![0.0; k as usize];
        head[k as usize - 1] = 1.0;
        Self::from_head(&head).expect("point mass")
    }

    fn build(mut head: Vec<f64>, tail: Option<GeometricTail>) -> Result<Self, DistError> {
        if head.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(DistError::NegativeProbability);
        }
        if tail.is_none() {
            while head.last() == Some(&0.0) {
                head.pop();
            }
        }
        let tail_mass = tail.map_or(0.0, |t| {
            t.coef * t.rate.powi(head.len() as i32 + 1) / (1.0 - t.rate)
        });
        let total: f64 = head.iter().sum::<f64>() + tail_mass;
        if total == 0.0 {
            return Err(DistError::EmptySupport);
        }
        if (total - 1.0).abs() > LOAD_TOL {
            return Err(DistError::MassDeviation(total));
        }
        for p in &mut head {
            *p /= total;
        }
        let tail = tail.map(|t| GeometricTail {
            coef: t.coef / total,
            rate: t.rate,
        });

        // Survivals accumulated from the tail up so that S(K+1) is the
        // exact closed-form tail mass.
        let k = head.len();
        let mut survival = vec![0.0; k + 1];
        survival[k] = tail.map_or(0.0, |t| t.coef * t.rate.powi(k as i32 + 1) / (1.0 - t.rate));
        for n in (0..k).rev() {
            survival[n] = survival[n + 1] + head[n];
        }

        let head_mean: f64 = head
            .iter()
            .enumerate()
            .map(|(i, &p)| (i + 1) as f64 * p)
            .sum();
        let tail_mean = tail.map_or(0.0, |t| {
            let l = t.rate;
            let kk = k as f64;
            t.coef * l.powi(k as i32 + 1) * ((kk + 1.0) - kk * l) / ((1.0 - l) * (1.0 - l))
        });

        Ok(JumpDistribution {
            head,
            tail,
            survival,
            mean: head_mean + tail_mean,
        })
    }

    pub fn head(&self) -> &[f64] {
        &self.head
    }

    pub fn tail(&self) -> Option<GeometricTail> {
        self.tail
    }

    pub fn is_bounded(&self) -> bool {
        self.tail.is_none()
    }

    /// Largest support point for bounded distributions.
    pub fn max_support(&self) -> Option<u64> {
        match self.tail {
            Some(_) => None,
            None => Some(self.head.len() as u64),
        }
    }

    /// `P(T = n)`.
    pub fn pmf(&self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let k = self.head.len() as u64;
        if n <= k {
            self.head[n as usize - 1]
        } else {
            match self.tail {
                Some(t) => t.coef * t.rate.powi(n as i32),
                None => 0.0,
            }
        }
    }

    /// `P(T ≥ n)`; exact closed form across the tail.
    pub fn survival(&self, n: u64) -> f64 {
        if n == 0 {
            return 1.0;
        }
        let k = self.head.len() as u64;
        if n <= k + 1 {
            self.survival[n as usize - 1]
        } else {
            match self.tail {
                Some(t) => t.coef * t.rate.powi(n as i32) / (1.0 - t.rate),
                None => 0.0,
            }
        }
    }

    /// Hazard `P(T = n | T ≥ n)`; exactly `1 - rate` beyond the head.
    pub fn hazard(&self, n: u64) -> Result<f64, DistError> {
        let k = self.head.len() as u64;
        if n > k {
            return match self.tail {
                Some(t) => Ok(1.0 - t.rate),
                None => Err(DistError::ZeroSurvival(n)),
            };
        }
        let s = self.survival(n);
        if s <= 0.0 {
            return Err(DistError::ZeroSurvival(n));
        }
        Ok(self.pmf(n) / s)
    }

    /// `E[T]`; closed form for the tail part.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Radius of convergence of the pgf: `1/rate`, or `∞` when bounded.
    pub fn radius(&self) -> f64 {
        match self.tail {
            Some(t) => 1.0 / t.rate,
            None => f64::INFINITY,
        }
    }

    /// gcd of the support; a geometric tail forces 1.
    pub fn support_gcd(&self) -> u64 {
        if self.tail.is_some() {
            // Tail puts mass on two consecutive integers.
            return 1;
        }
        let mut g = 0u64;
        for (i, &p) in self.head.iter().enumerate() {
            if p > 0.0 {
                g = gcd(g, i as u64 + 1);
            }
        }
        g
    }

    /// Checks the necessary conditions for being codable.
    pub fn validate_codable(&self) -> CodabilityReport {
        CodabilityReport {
            non_lattice: self.support_gcd() == 1,
            exponential_tail: true,
            bounded: self.is_bounded(),
        }
    }

    /// Size-biased law `P(T' = t) = t·P(T = t)/E[T]`.
    pub fn size_biased(&self) -> SizeBiased<'_> {
        SizeBiased { d: self }
    }

    /// Smallest `n ≥ 1` with `P(T ≤ n) ≥ u`.
    pub fn quantile(&self, u: f64) -> u64 {
        debug_assert!((0.0..1.0).contains(&u));
        let k = self.head.len() as u64;
        let mut cum = 0.0;
        for n in 1..=k {
            cum += self.pmf(n);
            if cum >= u {
                return n;
            }
        }
        let t = match self.tail {
            // Mass exhausted within float slop: clamp to the last support point.
            None => return k.max(1),
            Some(t) => t,
        };
        // Geometric inversion on the remaining mass: smallest n with
        // S(n+1) ≤ 1-u, then a local fix-up for rounding.
        let v = 1.0 - u;
        let s_next = |n: u64| t.coef * t.rate.powi(n as i32 + 1) / (1.0 - t.rate);
        let guess = k as f64 + (v / self.survival(k + 1)).ln() / t.rate.ln();
        let mut n = (guess.ceil().max((k + 1) as f64)) as u64;
        while s_next(n) > v {
            n += 1;
        }
        while n > k + 1 && s_next(n - 1) <= v {
            n -= 1;
        }
        n
    }

    /// Exact stationary renewal sample on `range`: 1's at renewal points.
    ///
    /// The block covering the origin is drawn size-biased with a uniform
    /// phase; both sides are then extended by i.i.d. jumps. Serves as the
    /// law oracle the coders are tested against.
    pub fn sample_stationary(&self, range: Range<i64>, rng: &UniformStream) -> Vec<bool> {
        let mut bits = vec![false; (range.end - range.start).max(0) as usize];
        if range.is_empty() {
            return bits;
        }
        let mark = |p: i64, bits: &mut Vec<bool>| {
            if range.contains(&p) {
                bits[(p - range.start) as usize] = true;
            }
        };

        let block = self.size_biased().quantile(rng.value(0));
        let offset = (rng.value(1) * block as f64) as i64;
        let left = -offset; // renewal point closing the origin block on the left
        mark(left, &mut bits);

        let mut p = left + block as i64;
        let mut i = 2i64;
        while p < range.end {
            mark(p, &mut bits);
            p += self.quantile(rng.value(i)) as i64;
            i += 1;
        }
        let mut p = left;
        let mut i = -1i64;
        while p >= range.start {
            p -= self.quantile(rng.value(i)) as i64;
            i -= 1;
            mark(p, &mut bits);
        }
        bits
    }
}

/// The size-biased companion of a jump distribution.
#[derive(Debug, Clone, Copy)]
pub struct SizeBiased<'a> {
    d: &'a JumpDistribution,
}

impl SizeBiased<'_> {
    /// `P(T' = t)`.
    pub fn pmf(&self, t: u64) -> f64 {
        t as f64 * self.d.pmf(t) / self.d.mean()
    }

    /// Smallest `t` with `P(T' ≤ t) ≥ u`, by CDF walk.
    pub fn quantile(&self, u: f64) -> u64 {
        debug_assert!((0.0..1.0).contains(&u));
        let mut cum = 0.0;
        let mut last_support = 1;
        for t in 1..100_000_000u64 {
            let p = self.pmf(t);
            if p > 0.0 {
                last_support = t;
            }
            cum += p;
            if cum >= u {
                return t;
            }
            if self.d.survival(t + 1) <= 0.0 {
                break;
            }
        }
        last_support
    }
}

/// Extracts gaps between consecutive 1's (interior gaps only).
pub fn gaps_of(bits: &[bool]) -> Vec<u64> {
    let mut gaps = Vec::new();
    let mut last: Option<usize> = None;
    for (i, &b) in bits.iter().enumerate() {
        if b {
            if let Some(j) = last {
                gaps.push((i - j) as u64);
            }
            last = Some(i);
        }
    }
    gaps
}

fn gcd(a: u64, b: u64) -> u64 {
    if a == 0 {
        b
    } else {
        gcd(b % a, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::tags;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_point_head_loads() {
        let d = JumpDistribution::from_head(&[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(d.mean(), 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d.pmf(1), 0.5, epsilon = 1e-15);
        assert_eq!(d.pmf(3), 0.0);
        assert_eq!(d.max_support(), Some(2));
    }

    #[test]
    fn geometric_half_loads() {
        // p(n) = 2^{-n}: head empty, A = 1, λ = 1/2.
        let d = JumpDistribution::with_tail(&[], 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(d.mean(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.pmf(3), 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(d.survival(3), 0.25, epsilon = 1e-15);
        assert_eq!(d.radius(), 2.0);
    }

    #[test]
    fn mass_deviation_rejected() {
        assert_eq!(
            JumpDistribution::from_head(&[0.7, 0.7]),
            Err(DistError::MassDeviation(1.4))
        );
    }

    #[test]
    fn near_one_mass_is_renormalized() {
        let d = JumpDistribution::from_head(&[0.6, 0.4 + 3e-10]).unwrap();
        let total: f64 = d.head().iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bad_inputs_rejected() {
        assert_eq!(
            JumpDistribution::from_head(&[-0.1, 1.1]),
            Err(DistError::NegativeProbability)
        );
        assert_eq!(
            JumpDistribution::with_tail(&[], 1.0, 1.5),
            Err(DistError::InvalidTailRate(1.5))
        );
        assert_eq!(
            JumpDistribution::from_head(&[]),
            Err(DistError::EmptySupport)
        );
        assert_eq!(
            JumpDistribution::from_head(&[0.0, 0.0]),
            Err(DistError::EmptySupport)
        );
    }

    #[test]
    fn hazards() {
        let geom = JumpDistribution::geometric(0.5);
        for n in [1, 2, 17, 1000] {
            assert_eq!(geom.hazard(n).unwrap(), 0.5); // memoryless: exact
        }
        let u12 = JumpDistribution::from_head(&[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(u12.hazard(1).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(u12.hazard(2).unwrap(), 1.0);
        assert_eq!(u12.hazard(3), Err(DistError::ZeroSurvival(3)));
    }

    #[test]
    fn hazard_survival_identities() {
        let ds = [
            JumpDistribution::geometric(0.25),
            JumpDistribution::from_head(&[0.2, 0.0, 0.5, 0.3]).unwrap(),
            JumpDistribution::with_tail(&[0.0, 0.5], 2.0, 0.5).unwrap(),
        ];
        for d in &ds {
            let top = d.head().len() as u64 + 30;
            for n in 1..=top {
                if d.survival(n) <= 0.0 {
                    break;
                }
                let h = d.hazard(n).unwrap();
                assert_abs_diff_eq!(h * d.survival(n), d.pmf(n), epsilon = 1e-12);
                assert_abs_diff_eq!(
                    d.survival(n + 1),
                    d.survival(n) * (1.0 - h),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn codability_flags() {
        let lat = JumpDistribution::from_head(&[0.0, 0.5, 0.0, 0.5]).unwrap();
        assert!(!lat.validate_codable().non_lattice);
        let ok = JumpDistribution::from_head(&[0.0, 0.5, 0.5]).unwrap();
        assert!(ok.validate_codable().non_lattice);
        let geom = JumpDistribution::geometric(0.5);
        let rep = geom.validate_codable();
        assert!(rep.non_lattice && !rep.bounded && rep.exponential_tail);
    }

    #[test]
    fn size_biased_pmf() {
        let u12 = JumpDistribution::from_head(&[0.5, 0.5]).unwrap();
        let sb = u12.size_biased();
        assert_abs_diff_eq!(sb.pmf(1), 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sb.pmf(2), 2.0 / 3.0, epsilon = 1e-12);

        let point = JumpDistribution::deterministic(4);
        assert_abs_diff_eq!(point.size_biased().pmf(4), 1.0, epsilon = 1e-12);

        let geom = JumpDistribution::geometric(0.5);
        let sbg = geom.size_biased();
        for n in 1..=40u64 {
            assert_abs_diff_eq!(
                sbg.pmf(n),
                n as f64 * 0.5f64.powi(n as i32) / 2.0,
                epsilon = 1e-12
            );
        }
        let total: f64 = (1..=400).map(|t| sbg.pmf(t)).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        // tail mass A·λ³/(1-λ) = 0.5 with λ = 0.4 needs A = 4.6875
        let d = JumpDistribution::with_tail(&[0.3, 0.2], 4.6875, 0.4).unwrap();
        for &u in &[
            0.0,
            0.1,
            0.29999,
            0.3,
            0.5,
            0.77,
            0.95,
            0.999999,
            1.0 - 1e-12,
        ] {
            let n = d.quantile(u);
            // P(T ≤ n) ≥ u > P(T ≤ n-1)
            assert!(1.0 - d.survival(n + 1) >= u - 1e-12);
            if n > 1 {
                assert!(1.0 - d.survival(n) < u + 1e-12);
            }
        }
    }

    #[test]
    fn stationary_sample_forced_cases() {
        let rng = UniformStream::new(3, tags::ORACLE);
        let ones = JumpDistribution::deterministic(1).sample_stationary(-5..5, &rng);
        assert!(ones.iter().all(|&b| b));

        let two = JumpDistribution::deterministic(2);
        for seed in 0..20 {
            let rng = UniformStream::new(seed, tags::ORACLE);
            let bits = two.sample_stationary(-6..6, &rng);
            let pts: Vec<usize> = (0..bits.len()).filter(|&i| bits[i]).collect();
            assert_eq!(pts.len(), 6);
            for w in pts.windows(2) {
                assert_eq!(w[1] - w[0], 2);
            }
        }
    }

    #[test]
    fn stationary_density_matches_inverse_mean() {
        // uniform{1,2}: P(X_0 = 1) = 1/E[T] = 2/3.
        let d = JumpDistribution::from_head(&[0.5, 0.5]).unwrap();
        let n = 1_000_000u64;
        let mut ones = 0u64;
        for seed in 0..n {
            let rng = UniformStream::new(seed, tags::ORACLE);
            let bits = d.sample_stationary(0..1, &rng);
            ones += bits[0] as u64;
        }
        let p = ones as f64 / n as f64;
        assert!((p - 2.0 / 3.0).abs() < 0.002, "density {p}");
    }

    #[test]
    fn stationary_marginals_shift_invariant() {
        let d = JumpDistribution::geometric(0.5);
        let trials = 200_000u64;
        let mut rates = Vec::new();
        for &off in &[0i64, 7, -13] {
            let mut ones = 0u64;
            for seed in 0..trials {
                let rng = UniformStream::new(seed ^ 0xabcd, tags::ORACLE);
                let bits = d.sample_stationary(off..off + 1, &rng);
                ones += bits[0] as u64;
            }
            rates.push(ones as f64 / trials as f64);
        }
        let sigma = (0.5 * 0.5 / trials as f64).sqrt();
        for r in &rates {
            assert!((r - 0.5).abs() < 3.0 * sigma, "marginal {r} at σ={sigma}");
        }
    }

    #[test]
    fn gaps_extraction() {
        let bits = [true, false, true, true, false, false, true];
        assert_eq!(gaps_of(&bits), vec![2, 1, 3]);
    }
}
