//! Dilution of renewal points and its exact inverse.
//!
//! Thinning deletes each renewal point independently with probability
//! `1-μ`, turning jump law `T` into `T*_μ`. Undiluting reverses that:
//! between two surviving points at distance `L`, the deleted points form
//! a composition of `L` drawn from the conditional law of
//! `(T_1,…,T_N)` given `T_1+⋯+T_N = L`, sampled independently per block.

use thiserror::Error;

use crate::dist::JumpDistribution;
use crate::gf::pmf_tstar;
use crate::stream::{tags, UniformSource, UniformStream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DilutionError {
    #[error("block of length {0} has zero probability under T*: wrong distribution or mu")]
    ImpossibleBlock(u64),
    #[error("renewal positions must be strictly increasing")]
    UnsortedPoints,
}

/// Cached `T*_μ` pmf driving the conditional block sampler.
#[derive(Debug, Clone)]
pub struct BlockFillPlan {
    d: JumpDistribution,
    mu: f64,
    q: Vec<f64>,
}

impl BlockFillPlan {
    pub fn new(d: JumpDistribution, mu: f64) -> Self {
        let q = pmf_tstar(&d, mu, 64);
        BlockFillPlan { d, mu, q }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn dist(&self) -> &JumpDistribution {
        &self.d
    }

    /// Largest block length the table currently covers.
    pub fn capacity(&self) -> u64 {
        self.q.len() as u64 - 1
    }

    /// Grows the table (doubling) until it covers blocks of length `l`.
    pub fn ensure(&mut self, l: u64) {
        if l > self.capacity() {
            let want = (l as usize).max(self.q.len() * 2);
            self.q = pmf_tstar(&self.d, self.mu, want);
        }
    }

    /// `q(l) = P(T*_μ = l)`; table must cover `l`.
    pub fn q(&self, l: u64) -> f64 {
        self.q[l as usize]
    }

    /// Samples the composition of a block of length `l` from the exact
    /// conditional law, using the sub-stream keyed at `anchor`.
    ///
    /// With `r` remaining, the block closes with a single jump `r` with
    /// probability `μ·p(r)/q(r)`, else continues with jump `t` with
    /// probability `(1-μ)·p(t)·q(r-t)/q(r)`.
    pub fn fill_block(
        &self,
        l: u64,
        rng: &UniformStream,
        anchor: i64,
    ) -> Result<Vec<u64>, DilutionError> {
        assert!(l >= 1 && l <= self.capacity(), "q table must cover {l}");
        if self.q(l) <= 0.0 {
            return Err(DilutionError::ImpossibleBlock(l));
        }
        let sub = rng.substream(tags::FILL, anchor);
        let mut out = Vec::new();
        let mut r = l;
        let mut idx = 0i64;
        loop {
            let u = sub.value(idx);
            idx += 1;
            let qr = self.q(r);
            let stop = self.mu * self.d.pmf(r) / qr;
            if u <= stop {
                out.push(r);
                break;
            }
            let mut acc = stop;
            let mut jump = 0u64;
            for t in 1..r {
                let w = (1.0 - self.mu) * self.d.pmf(t) * self.q(r - t) / qr;
                acc += w;
                if u <= acc {
                    jump = t;
                    break;
                }
            }
            if jump == 0 {
                // Rounding pushed u past the accumulated mass; take the
                // largest feasible jump.
                jump = (1..r)
                    .rev()
                    .find(|&t| self.d.pmf(t) > 0.0 && self.q(r - t) > 0.0)
                    .ok_or(DilutionError::ImpossibleBlock(r))?;
            }
            out.push(jump);
            r -= jump;
        }
        assert_eq!(
            out.iter().sum::<u64>(),
            l,
            "block fill must sum to its length"
        );
        Ok(out)
    }
}

/// Keeps each point independently iff the fill-stream value at its
/// position is ≤ μ.
pub fn thin_points(points: &[i64], mu: f64, rng: &impl UniformSource) -> Vec<i64> {
    points
        .iter()
        .copied()
        .filter(|&p| rng.value(p) <= mu)
        .collect()
}

/// Bit-sequence form of [`thin_points`]; `lo` is the index of `bits[0]`.
pub fn thin_bits(lo: i64, bits: &[bool], mu: f64, rng: &impl UniformSource) -> Vec<bool> {
    bits.iter()
        .enumerate()
        .map(|(k, &b)| b && rng.value(lo + k as i64) <= mu)
        .collect()
}

/// Reconstructs a `T`-renewal point set from a `T*`-point set by filling
/// every gap independently with [`BlockFillPlan::fill_block`], each block
/// keyed at its left endpoint.
pub fn undilute(
    points: &[i64],
    plan: &mut BlockFillPlan,
    rng: &UniformStream,
) -> Result<Vec<i64>, DilutionError> {
    if points.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DilutionError::UnsortedPoints);
    }
    let Some(&first) = points.first() else {
        return Ok(Vec::new());
    };
    if let Some(max_gap) = points.windows(2).map(|w| (w[1] - w[0]) as u64).max() {
        plan.ensure(max_gap);
    }
    let mut out = vec![first];
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let parts = plan.fill_block((b - a) as u64, rng, a)?;
        let mut pos = a;
        for &t in &parts {
            pos += t as i64;
            out.push(pos);
        }
        debug_assert_eq!(pos, b);
    }
    Ok(out)
}
