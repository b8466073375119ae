//! Coding a stationary renewal process out of indexed uniforms.
//!
//! The age chain `Z` ("one plus the distance to the nearest 1 on the
//! left") moves from state `n` to 1 when the uniform at the current index
//! is at most the hazard `p(n,1) = P(T=n | T≥n)`, else to `n+1`. A
//! regeneration event
//!
//! ```text
//! E_i = {Y_{i-n0} ≤ a} ∩ {Y_{i-n0+1},…,Y_{i-1} > b} ∩ {Y_i ≤ a}
//! ```
//!
//! forces every chain copy started before `i-n0` to sit at state 1 at
//! time `i`, so scanning left for the most recent `E_i` pins the chain —
//! and therefore the coded bit — from finitely many uniforms. The
//! distance scanned has an exponential tail, which is the whole point.
//!
//! For bounded jumps the state space is finite and coupling from the past
//! with per-state independent uniforms does the same job.

use std::ops::Range;

use thiserror::Error;

use crate::dist::{DistError, JumpDistribution};
use crate::stream::{tags, UniformSource, UniformStream};

/// Hazard floor below which the regeneration construction is refused.
const HAZARD_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoderError {
    #[error("bounded jump distribution: use the CFTP coder")]
    BoundedJump,
    #[error("lattice jump distribution is not codable")]
    LatticeJump,
    #[error("hazard infimum below {HAZARD_FLOOR}: regeneration events too rare")]
    HazardVanishes,
    #[error("unbounded jump distribution: CFTP needs a finite state space")]
    UnboundedJump,
    #[error("scan for a regeneration time exceeded the budget of {0} indices")]
    ScanBudgetExceeded(u64),
    #[error("coupling from the past exceeded the lookback cap of 2^40")]
    CftpBudgetExceeded,
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Parameters of the regeneration construction for one jump distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct CoderParams {
    n0: u64,
    a: f64,
    b: f64,
    /// `p(n,1)` for `n = 1..=2·n0`.
    hazards: Vec<f64>,
    tail_hazard: f64,
    scan_budget: u64,
}

impl CoderParams {
    /// Derives `(n0, a, b)` from the hazards of `d`.
    ///
    /// `n0` is the least `m` with `inf_{n≥m} p(n,1)` at least
    /// `max(1e-6, h∞/2)` where `h∞ = 1-λ` is the exact tail hazard;
    /// `a` is that infimum (closed form over the tail, no truncation) and
    /// `b = max_{1≤n≤2n0} p(n,1)`.
    pub fn new(d: &JumpDistribution) -> Result<Self, CoderError> {
        if d.support_gcd() != 1 {
            return Err(CoderError::LatticeJump);
        }
        let tail = d.tail().ok_or(CoderError::BoundedJump)?;
        let tail_hazard = 1.0 - tail.rate;
        let threshold = (tail_hazard / 2.0).max(HAZARD_FLOOR);
        if tail_hazard < threshold {
            return Err(CoderError::HazardVanishes);
        }

        let k = d.head().len() as u64;
        let hazard = |n: u64| d.hazard(n).expect("unbounded: survival positive");
        // suffix infima over the head, floored by the exact tail hazard
        let mut inf_from = vec![tail_hazard; k as usize + 2];
        for n in (1..=k).rev() {
            inf_from[n as usize] = hazard(n).min(inf_from[n as usize + 1]);
        }
        let n0 = (1..=k + 1)
            .find(|&m| inf_from[m as usize] >= threshold)
            .ok_or(CoderError::HazardVanishes)?;
        let a = inf_from[n0 as usize];
        let hazards: Vec<f64> = (1..=2 * n0).map(hazard).collect();
        let b = hazards.iter().cloned().fold(0.0, f64::max);
        assert!(a > 0.0 && b < 1.0, "regeneration needs a > 0 and b < 1");

        Ok(CoderParams {
            n0,
            a,
            b,
            hazards,
            tail_hazard,
            scan_budget: 1_000_000 * (n0 + 1),
        })
    }

    pub fn with_scan_budget(mut self, budget: u64) -> Self {
        self.scan_budget = budget;
        self
    }

    pub fn n0(&self) -> u64 {
        self.n0
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn hazard_table(&self) -> &[f64] {
        &self.hazards
    }

    pub fn tail_hazard(&self) -> f64 {
        self.tail_hazard
    }

    /// `P(E_i) = a²(1-b)^{n0-1}`.
    pub fn regeneration_probability(&self) -> f64 {
        self.a * self.a * (1.0 - self.b).powi(self.n0 as i32 - 1)
    }

    /// Reference per-index log-rate of the window tail implied by the
    /// geometric bound on the scan length.
    pub fn reference_log_rate(&self) -> f64 {
        (1.0 - self.regeneration_probability()).ln() / (self.n0 as f64 + 1.0)
    }
}

/// One age-chain transition.
#[inline]
fn step(state: u64, u: f64, d: &JumpDistribution) -> u64 {
    let h = d.hazard(state).expect("state stays within the support");
    if u <= h {
        1
    } else {
        state + 1
    }
}

/// Whether the regeneration event `E_i` holds.
///
/// Reads exactly the indices `i-n0..=i`.
pub fn is_regeneration(y: &impl UniformSource, i: i64, p: &CoderParams) -> bool {
    let n0 = p.n0 as i64;
    if y.value(i) > p.a || y.value(i - n0) > p.a {
        return false;
    }
    (1..n0).all(|k| y.value(i - k) > p.b)
}

/// `I(j)`: the largest `i ≤ j` at which `E_i` occurs.
///
/// Scans leftward and never reads below `I(j) - n0`, which is what makes
/// `j - I(j) + n0` a stopping-time coding radius.
pub fn scan_regeneration(
    y: &impl UniformSource,
    j: i64,
    p: &CoderParams,
) -> Result<i64, CoderError> {
    let mut i = j;
    loop {
        if is_regeneration(y, i, p) {
            return Ok(i);
        }
        i -= 1;
        if (j - i) as u64 > p.scan_budget {
            return Err(CoderError::ScanBudgetExceeded(p.scan_budget));
        }
    }
}

/// A coded stretch of the renewal process.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedSample {
    pub lo: i64,
    /// `bits[k]` is the coded value at index `lo + k`.
    pub bits: Vec<bool>,
    /// `windows[k] = (lo+k) - I(lo+k) + n0`, the coding radius used.
    pub windows: Vec<u64>,
    /// `regen[k] = I(lo+k)`.
    pub regen: Vec<i64>,
}

impl CodedSample {
    pub fn range(&self) -> Range<i64> {
        self.lo..self.lo + self.bits.len() as i64
    }

    /// Positions of the coded 1's.
    pub fn points(&self) -> Vec<i64> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(k, &b)| b.then_some(self.lo + k as i64))
            .collect()
    }

    /// Gaps between consecutive coded 1's.
    pub fn gaps(&self) -> Vec<u64> {
        crate::dist::gaps_of(&self.bits)
    }

    pub fn ones_density(&self) -> f64 {
        self.bits.iter().filter(|&&b| b).count() as f64 / self.bits.len() as f64
    }
}

/// Codes every index of `range` in one left-to-right pass.
///
/// Equivalent to [`code_at`] index by index: consecutive regeneration
/// times are at least `n0` apart, so when `E_i` fires, the running chain
/// started at the previous regeneration is already within the staircase
/// and lands on state 1 — restarting there changes nothing.
pub fn code_range(
    y: &impl UniformSource,
    range: Range<i64>,
    p: &CoderParams,
    d: &JumpDistribution,
) -> Result<CodedSample, CoderError> {
    let len = (range.end - range.start).max(0) as usize;
    let mut sample = CodedSample {
        lo: range.start,
        bits: Vec::with_capacity(len),
        windows: Vec::with_capacity(len),
        regen: Vec::with_capacity(len),
    };
    if len == 0 {
        return Ok(sample);
    }
    let i0 = scan_regeneration(y, range.start, p)?;
    let mut state = 1u64;
    let mut last_regen = i0;
    // E_i touches Y_i, so a regeneration index never extends a >b run.
    let mut run_above_b = 0u64;
    if i0 == range.start {
        sample.bits.push(true);
        sample.windows.push(p.n0);
        sample.regen.push(i0);
    }
    for i in i0 + 1..range.end {
        let u = y.value(i);
        state = step(state, u, d);
        if u <= p.a && run_above_b >= p.n0 - 1 && y.value(i - p.n0 as i64) <= p.a {
            assert_eq!(state, 1, "regeneration must force the chain to state 1");
            last_regen = i;
        }
        run_above_b = if u > p.b { run_above_b + 1 } else { 0 };
        if i >= range.start {
            sample.bits.push(state == 1);
            sample.windows.push((i - last_regen) as u64 + p.n0);
            sample.regen.push(last_regen);
        }
    }
    Ok(sample)
}

/// Codes a single index from its own scan: `(bit, window, I(j))`.
pub fn code_at(
    y: &impl UniformSource,
    j: i64,
    p: &CoderParams,
    d: &JumpDistribution,
) -> Result<(bool, u64, i64), CoderError> {
    let i0 = scan_regeneration(y, j, p)?;
    let mut state = 1u64;
    for i in i0 + 1..=j {
        state = step(state, y.value(i), d);
    }
    Ok((state == 1, (j - i0) as u64 + p.n0, i0))
}

/// Test oracle for the coalescence claim: given that `E_i` holds, every
/// chain copy started at `(t, s)` with `t < i - n0` must be at state 1 at
/// time `i`. Panics if the precondition is violated.
pub fn verify_coalescence(
    y: &impl UniformSource,
    i: i64,
    p: &CoderParams,
    d: &JumpDistribution,
    starts: &[(i64, u64)],
) -> bool {
    assert!(is_regeneration(y, i, p), "E_i must hold at i = {i}");
    starts.iter().all(|&(t, s)| {
        assert!(t < i - p.n0 as i64, "start must predate i - n0");
        assert!(s >= 1);
        let mut state = s;
        for m in t + 1..=i {
            state = step(state, y.value(m), d);
        }
        state == 1
    })
}

/// Codes one index of a bounded-jump renewal process by coupling from the
/// past: all `K` age states evolve with independent per-state uniform
/// lanes, restarting from doubled lookbacks until every copy agrees at
/// `j`. Returns the coalesced bit and the lookback used.
pub fn cftp_code_at(
    d: &JumpDistribution,
    y: &UniformStream,
    j: i64,
) -> Result<(bool, u64), CoderError> {
    let k = d.max_support().ok_or(CoderError::UnboundedJump)?;
    if d.support_gcd() != 1 {
        return Err(CoderError::LatticeJump);
    }
    let lanes: Vec<UniformStream> = (1..=k).map(|s| y.substream(tags::CFTP, s as i64)).collect();
    let hazards: Vec<f64> = (1..=k).map(|n| d.hazard(n).unwrap()).collect();
    let mut lookback = 1u64;
    loop {
        let t0 = j - lookback as i64;
        let mut states: Vec<u64> = (1..=k).collect();
        for time in t0 + 1..=j {
            for st in states.iter_mut() {
                let n = *st as usize;
                let u = lanes[n - 1].value(time);
                *st = if u <= hazards[n - 1] { 1 } else { *st + 1 };
            }
        }
        if states.iter().all(|&s| s == states[0]) {
            return Ok((states[0] == 1, lookback));
        }
        if lookback >= 1 << 40 {
            return Err(CoderError::CftpBudgetExceeded);
        }
        lookback *= 2;
    }
}

/// CFTP coding of a whole range; returns bits and per-index lookbacks.
pub fn cftp_code_range(
    d: &JumpDistribution,
    y: &UniformStream,
    range: Range<i64>,
) -> Result<(Vec<bool>, Vec<u64>), CoderError> {
    let mut bits = Vec::with_capacity((range.end - range.start).max(0) as usize);
    let mut windows = Vec::with_capacity(bits.capacity());
    for j in range {
        let (bit, w) = cftp_code_at(d, y, j)?;
        bits.push(bit);
        windows.push(w);
    }
    Ok((bits, windows))
}
