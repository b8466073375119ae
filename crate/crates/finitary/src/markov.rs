//! Coding finite-state ergodic Markov chains.
//!
//! Watching a stationary chain through the indicator of one anchor state
//! gives a renewal process whose jump law is the anchor's first-return
//! time. The pipeline codes that renewal skeleton (diluted so its hazards
//! behave), reconstructs the undiluted skeleton, and fills the stretch
//! between consecutive anchor visits with an excursion sampled from the
//! exact conditional law of paths that avoid the anchor.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dilution::{undilute, BlockFillPlan, DilutionError};
use crate::dist::{DistError, JumpDistribution};
use crate::gf::{choose_mu, tstar_jump_distribution, GfError, GfReport};
use crate::renewal::{code_range as code_renewal_range, CoderError, CoderParams};
use crate::stream::{tags, UniformSource, UniformStream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("bad transition rows: {0}")]
    BadRows(String),
    #[error("chain is not irreducible")]
    NotIrreducible,
    #[error("chain is periodic with period {0}")]
    Periodic(u64),
    #[error("power iteration did not reach 1e-12 within the iteration cap")]
    StationaryNotConverged,
    #[error("return-time tail unresolved at horizon {l_max}: residual {residual}")]
    TailNotResolved { l_max: usize, residual: f64 },
    #[error("no excursion of length {0} exists from the anchor")]
    ImpossibleLength(u64),
    #[error("no skeleton point found near the requested range")]
    SkeletonSparse,
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Gf(#[from] GfError),
    #[error(transparent)]
    Coder(#[from] CoderError),
    #[error(transparent)]
    Dilution(#[from] DilutionError),
}

/// On-disk kernel description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSpec {
    pub states: Vec<String>,
    /// `rows[from][to] = P(from, to)`; absent entries are zero.
    pub rows: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Validated finite, irreducible, aperiodic row-stochastic kernel with
/// its stationary distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    labels: Vec<String>,
    rows: Vec<Vec<(usize, f64)>>,
    pi: Vec<f64>,
}

impl TransitionKernel {
    pub fn from_spec(spec: &KernelSpec) -> Result<Self, MarkovError> {
        let index: BTreeMap<&str, usize> = spec
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        if index.len() != spec.states.len() {
            return Err(MarkovError::BadRows("duplicate state labels".into()));
        }
        let mut rows = vec![Vec::new(); spec.states.len()];
        for (from, row) in &spec.rows {
            let &fi = index
                .get(from.as_str())
                .ok_or_else(|| MarkovError::BadRows(format!("unknown state '{from}'")))?;
            for (to, &p) in row {
                let &ti = index
                    .get(to.as_str())
                    .ok_or_else(|| MarkovError::BadRows(format!("unknown state '{to}'")))?;
                if p < 0.0 || !p.is_finite() {
                    return Err(MarkovError::BadRows(format!(
                        "negative probability {p} at ({from}, {to})"
                    )));
                }
                if p > 0.0 {
                    rows[fi].push((ti, p));
                }
            }
        }
        Self::new(spec.states.clone(), rows)
    }

    /// Validates sparse rows: stochastic, irreducible, aperiodic, and
    /// solves for the stationary distribution by power iteration.
    pub fn new(labels: Vec<String>, rows: Vec<Vec<(usize, f64)>>) -> Result<Self, MarkovError> {
        let n = labels.len();
        if n == 0 || rows.len() != n {
            return Err(MarkovError::BadRows("empty or mismatched rows".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().map(|&(_, p)| p).sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(MarkovError::BadRows(format!(
                    "row {} sums to {sum}",
                    labels[i]
                )));
            }
        }

        // Irreducibility: every state reachable from 0 and vice versa.
        let forward = reachable(&rows, 0, false);
        let backward = reachable(&rows, 0, true);
        if forward.iter().any(|&r| !r) || backward.iter().any(|&r| !r) {
            return Err(MarkovError::NotIrreducible);
        }

        let period = graph_period(&rows);
        if period != 1 {
            return Err(MarkovError::Periodic(period));
        }

        let pi = stationary(&rows)?;
        Ok(TransitionKernel { labels, rows, pi })
    }

    /// Dense-matrix convenience constructor.
    pub fn from_rows(labels: &[&str], dense: &[&[f64]]) -> Result<Self, MarkovError> {
        let rows = dense
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|&(_, &p)| p != 0.0)
                    .map(|(j, &p)| (j, p))
                    .collect()
            })
            .collect();
        Self::new(labels.iter().map(|s| s.to_string()).collect(), rows)
    }

    pub fn n_states(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn row(&self, x: usize) -> &[(usize, f64)] {
        &self.rows[x]
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.rows[x]
            .iter()
            .find_map(|&(t, p)| (t == y).then_some(p))
            .unwrap_or(0.0)
    }

    /// Stationary distribution, `π P = π` within 1e-10.
    pub fn pi(&self) -> &[f64] {
        &self.pi
    }
}

fn reachable(rows: &[Vec<(usize, f64)>], start: usize, reversed: bool) -> Vec<bool> {
    let n = rows.len();
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut stack = vec![start];
    while let Some(x) = stack.pop() {
        if reversed {
            for (u, row) in rows.iter().enumerate() {
                if !seen[u] && row.iter().any(|&(t, _)| t == x) {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        } else {
            for &(t, _) in &rows[x] {
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
    }
    seen
}

/// Period of a strongly connected graph: gcd of `level(u) + 1 - level(v)`
/// over all edges, with levels from a BFS.
fn graph_period(rows: &[Vec<(usize, f64)>]) -> u64 {
    let n = rows.len();
    let mut level = vec![i64::MIN; n];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(x) = queue.pop_front() {
        for &(t, _) in &rows[x] {
            if level[t] == i64::MIN {
                level[t] = level[x] + 1;
                queue.push_back(t);
            }
        }
    }
    let mut g = 0u64;
    for (u, row) in rows.iter().enumerate() {
        for &(v, _) in row {
            g = gcd(g, (level[u] + 1 - level[v]).unsigned_abs());
        }
    }
    g.max(1)
}

fn gcd(a: u64, b: u64) -> u64 {
    if a == 0 {
        b
    } else {
        gcd(b % a, a)
    }
}

fn stationary(rows: &[Vec<(usize, f64)>]) -> Result<Vec<f64>, MarkovError> {
    let n = rows.len();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..2_000_000 {
        let mut next = vec![0.0; n];
        for (x, row) in rows.iter().enumerate() {
            for &(y, p) in row {
                next[y] += pi[x] * p;
            }
        }
        let norm: f64 = next.iter().sum();
        for v in &mut next {
            *v /= norm;
        }
        let residual: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if residual < 1e-13 {
            return Ok(pi);
        }
    }
    Err(MarkovError::StationaryNotConverged)
}

/// Anchor choice: the state of maximal stationary mass (smallest mean
/// return time); ties broken by label order.
pub fn pick_anchor(k: &TransitionKernel) -> usize {
    (0..k.n_states())
        .max_by(|&a, &b| {
            k.pi()[a]
                .partial_cmp(&k.pi()[b])
                .unwrap()
                .then_with(|| k.label(b).cmp(k.label(a)))
        })
        .expect("non-empty state set")
}

/// First-return law of the anchor out to `l_max`, as a jump distribution.
///
/// The taboo DP runs forward on the mass that has not yet returned, so
/// survivals come out as sums, never differences. Whatever mass is still
/// alive at `l_max` (required < 1e-12) is grafted on as a geometric tail
/// whose rate is fitted from the terminal decay, so downstream coders see
/// the structural exponential-tail form. Returns the distribution and the
/// grafted residual mass.
pub fn return_time_dist(
    k: &TransitionKernel,
    anchor: usize,
    l_max: usize,
) -> Result<(JumpDistribution, f64), MarkovError> {
    let n = k.n_states();
    let mut f = vec![0.0f64; l_max + 1];
    let mut alive = vec![0.0f64; n];
    for &(y, p) in k.row(anchor) {
        if y == anchor {
            f[1] = p;
        } else {
            alive[y] = p;
        }
    }
    let mut ratios: Vec<f64> = Vec::new();
    let mut prev_mass: f64 = alive.iter().sum();
    for r in 2..=l_max {
        let mut next = vec![0.0f64; n];
        for (x, &m) in alive.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for &(y, p) in k.row(x) {
                if y == anchor {
                    f[r] += m * p;
                } else {
                    next[y] += m * p;
                }
            }
        }
        alive = next;
        let mass: f64 = alive.iter().sum();
        if mass == 0.0 {
            // Structurally bounded return time.
            let mut head = f[1..=r].to_vec();
            while head.last() == Some(&0.0) {
                head.pop();
            }
            return Ok((JumpDistribution::from_head(&head)?, 0.0));
        }
        if prev_mass > 0.0 {
            ratios.push(mass / prev_mass);
        }
        prev_mass = mass;
    }
    let residual = prev_mass;
    if residual > 1e-12 {
        return Err(MarkovError::TailNotResolved { l_max, residual });
    }
    // Terminal decay rate from the last few survival ratios.
    let tail_ratios = &ratios[ratios.len().saturating_sub(8)..];
    let rate = tail_ratios
        .iter()
        .product::<f64>()
        .powf(1.0 / tail_ratios.len() as f64);
    if !(rate > 0.0 && rate < 1.0) {
        return Err(MarkovError::TailNotResolved { l_max, residual });
    }
    let coef = residual * (1.0 - rate) / rate.powi(l_max as i32 + 1);
    let d = JumpDistribution::with_tail(&f[1..=l_max], coef, rate)?;
    Ok((d, residual))
}

/// [`return_time_dist`] with the horizon doubled until the tail resolves.
pub fn return_time_dist_auto(
    k: &TransitionKernel,
    anchor: usize,
) -> Result<(JumpDistribution, f64), MarkovError> {
    let mut l_max = 64;
    loop {
        match return_time_dist(k, anchor, l_max) {
            Err(MarkovError::TailNotResolved { .. }) if l_max < (1 << 16) => l_max *= 2,
            other => return other,
        }
    }
}

/// Taboo first-passage table: `g(r, x)` is the probability that the chain
/// started at `x` first hits the anchor after exactly `r` more steps.
#[derive(Debug, Clone)]
pub struct ExcursionTable {
    anchor: usize,
    /// `g[r][x]`; `g[0]` is a zero pad.
    g: Vec<Vec<f64>>,
}

impl ExcursionTable {
    pub fn new(k: &TransitionKernel, anchor: usize) -> Self {
        let g1: Vec<f64> = (0..k.n_states()).map(|x| k.prob(x, anchor)).collect();
        ExcursionTable {
            anchor,
            g: vec![vec![0.0; k.n_states()], g1],
        }
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn horizon(&self) -> u64 {
        self.g.len() as u64 - 1
    }

    /// Extends the table to cover excursion lengths up to `l`.
    pub fn ensure(&mut self, k: &TransitionKernel, l: u64) {
        while self.horizon() < l {
            let prev = self.g.last().unwrap();
            let mut next = vec![0.0; k.n_states()];
            for (x, slot) in next.iter_mut().enumerate() {
                *slot = k
                    .row(x)
                    .iter()
                    .filter(|&&(y, _)| y != self.anchor)
                    .map(|&(y, p)| p * prev[y])
                    .sum();
            }
            self.g.push(next);
        }
    }

    pub fn g(&self, r: u64, x: usize) -> f64 {
        self.g[r as usize][x]
    }
}

/// Samples an anchor-to-anchor excursion of exactly `len` steps from the
/// conditional path law: with `r` steps remaining, the move from `x` to
/// `y ≠ anchor` has probability `P(x,y)·g(r-1,y)/g(r,x)`, and the final
/// step returns to the anchor. The path `(x_0 = s, …, x_len = s)` never
/// visits the anchor in between.
pub fn sample_excursion(
    tbl: &ExcursionTable,
    k: &TransitionKernel,
    len: u64,
    rng: &UniformStream,
    anchor_index: i64,
) -> Result<Vec<usize>, MarkovError> {
    assert!(len >= 1 && len <= tbl.horizon(), "table must cover {len}");
    let s = tbl.anchor();
    if tbl.g(len, s) <= 0.0 {
        return Err(MarkovError::ImpossibleLength(len));
    }
    let sub = rng.substream(tags::EXCURSION, anchor_index);
    let mut path = Vec::with_capacity(len as usize + 1);
    path.push(s);
    let mut cur = s;
    for (idx, r) in (2..=len).rev().enumerate() {
        let u = sub.value(idx as i64);
        let gr = tbl.g(r, cur);
        let mut acc = 0.0;
        let mut chosen = None;
        for &(y, p) in k.row(cur) {
            if y == s {
                continue;
            }
            acc += p * tbl.g(r - 1, y) / gr;
            if u <= acc {
                chosen = Some(y);
                break;
            }
        }
        let next = match chosen {
            Some(y) => y,
            // Rounding slop: fall back to the last feasible move.
            None => k
                .row(cur)
                .iter()
                .rev()
                .find(|&&(y, p)| y != s && p > 0.0 && tbl.g(r - 1, y) > 0.0)
                .map(|&(y, _)| y)
                .ok_or(MarkovError::ImpossibleLength(len))?,
        };
        path.push(next);
        cur = next;
    }
    path.push(s);
    debug_assert_eq!(path.len() as u64, len + 1);
    Ok(path)
}

/// Excursion-filling interface.
///
/// The pipeline only needs some way to draw an anchor-to-anchor path of
/// a prescribed length from the right conditional law; keeping that
/// behind a trait leaves the door open to state spaces where the exact
/// first-passage table cannot be built (countable chains with a
/// user-supplied sampler).
pub trait ExcursionSampler {
    /// Announces the largest excursion length that will be requested.
    fn prepare(&mut self, k: &TransitionKernel, max_len: u64) -> Result<(), MarkovError>;

    /// Draws a path of exactly `len` steps, anchor to anchor, avoiding
    /// the anchor in between; keyed at `anchor_index` for locality.
    fn sample(
        &mut self,
        k: &TransitionKernel,
        len: u64,
        rng: &UniformStream,
        anchor_index: i64,
    ) -> Result<Vec<usize>, MarkovError>;
}

/// The exact conditional sampler backed by the first-passage table.
#[derive(Debug, Clone)]
pub struct ExactExcursions {
    table: ExcursionTable,
}

impl ExactExcursions {
    pub fn new(k: &TransitionKernel, anchor: usize) -> Self {
        ExactExcursions {
            table: ExcursionTable::new(k, anchor),
        }
    }
}

impl ExcursionSampler for ExactExcursions {
    fn prepare(&mut self, k: &TransitionKernel, max_len: u64) -> Result<(), MarkovError> {
        self.table.ensure(k, max_len);
        Ok(())
    }

    fn sample(
        &mut self,
        k: &TransitionKernel,
        len: u64,
        rng: &UniformStream,
        anchor_index: i64,
    ) -> Result<Vec<usize>, MarkovError> {
        sample_excursion(&self.table, k, len, rng, anchor_index)
    }
}

/// Dilution policy for the skeleton coder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuPolicy {
    Fixed(f64),
    /// μ = 1/2, halved until the generating-function analysis succeeds.
    Auto,
}

/// A coded stretch of the chain.
#[derive(Debug, Clone)]
pub struct MarkovSample {
    pub lo: i64,
    /// `states[k]` is the state index at `lo + k`.
    pub states: Vec<usize>,
    /// Conservative coding radius per index.
    pub windows: Vec<u64>,
    pub anchor: usize,
    pub mu: f64,
    pub gf: GfReport,
}

impl MarkovSample {
    pub fn range(&self) -> Range<i64> {
        self.lo..self.lo + self.states.len() as i64
    }

    /// Positions coded as the anchor state.
    pub fn anchor_positions(&self) -> Vec<i64> {
        self.states
            .iter()
            .enumerate()
            .filter_map(|(k, &s)| (s == self.anchor).then_some(self.lo + k as i64))
            .collect()
    }

    /// Empirical state frequencies.
    pub fn frequencies(&self, n_states: usize) -> Vec<f64> {
        let mut freq = vec![0.0; n_states];
        for &s in &self.states {
            freq[s] += 1.0;
        }
        for f in &mut freq {
            *f /= self.states.len() as f64;
        }
        freq
    }
}

/// Codes the chain on `range` through the full reduction:
/// return-time law → dilution analysis → regeneration-coded `T*` skeleton
/// → exact block refill → excursion fill, all on domain-separated lanes
/// of `y`. Per-index windows compose the renewal windows of the two
/// bracketing skeleton points with the bracketing distance.
pub fn code_range(
    k: &TransitionKernel,
    anchor: usize,
    y: &UniformStream,
    range: Range<i64>,
    policy: MuPolicy,
) -> Result<MarkovSample, MarkovError> {
    let mut sampler = ExactExcursions::new(k, anchor);
    code_range_with(k, anchor, y, range, policy, &mut sampler)
}

/// [`code_range`] with a caller-supplied excursion sampler.
pub fn code_range_with(
    k: &TransitionKernel,
    anchor: usize,
    y: &UniformStream,
    range: Range<i64>,
    policy: MuPolicy,
    sampler: &mut dyn ExcursionSampler,
) -> Result<MarkovSample, MarkovError> {
    let (d_ret, _) = return_time_dist_auto(k, anchor)?;
    let mu = match policy {
        MuPolicy::Fixed(mu) => mu,
        MuPolicy::Auto => choose_mu(&d_ret)?.0,
    };
    let (d_star, gf) = tstar_jump_distribution(&d_ret, mu)?;
    let params = CoderParams::new(&d_star)?;

    if range.is_empty() {
        return Ok(MarkovSample {
            lo: range.start,
            states: Vec::new(),
            windows: Vec::new(),
            anchor,
            mu,
            gf,
        });
    }

    // Code the skeleton wide enough that every requested index is
    // bracketed by skeleton points.
    let mean_star = d_star.mean();
    let mut pad = (30.0 * mean_star) as i64 + 64;
    let (skeleton, skel_points) = loop {
        let coded = code_renewal_range(y, range.start - pad..range.end + pad, &params, &d_star)?;
        let pts = coded.points();
        let ok = pts.first().is_some_and(|&p| p <= range.start)
            && pts.last().is_some_and(|&p| p >= range.end);
        if ok {
            break (coded, pts);
        }
        pad *= 2;
        if pad > (1 << 32) {
            return Err(MarkovError::SkeletonSparse);
        }
    };

    // Refill the thinned-out renewal points, then the excursions.
    let mut plan = BlockFillPlan::new(d_ret.clone(), mu);
    let t_points = undilute(&skel_points, &mut plan, y)?;

    let lo = range.start;
    let len = (range.end - range.start) as usize;
    let mut states: Vec<Option<usize>> = vec![None; len];
    if let Some(max_gap) = t_points.windows(2).map(|w| (w[1] - w[0]) as u64).max() {
        sampler.prepare(k, max_gap)?;
    }
    for w in t_points.windows(2) {
        let (p, p_next) = (w[0], w[1]);
        if p_next <= range.start || p >= range.end {
            continue;
        }
        let glen = (p_next - p) as u64;
        let path = sampler.sample(k, glen, y, p)?;
        for (m, &st) in path.iter().take(glen as usize).enumerate() {
            let pos = p + m as i64;
            if range.contains(&pos) {
                states[(pos - lo) as usize] = Some(st);
            }
        }
    }
    let states: Vec<usize> = states
        .into_iter()
        .map(|s| s.expect("every index lies inside a bracketed block"))
        .collect();

    // The coded sequence must visit the anchor exactly at the refilled
    // renewal points.
    for (idx, &st) in states.iter().enumerate() {
        let pos = lo + idx as i64;
        let on_point = t_points.binary_search(&pos).is_ok();
        assert_eq!(
            st == anchor,
            on_point,
            "anchor visits must match the skeleton"
        );
    }

    // Conservative window composition via bracketing skeleton points.
    let skel_window = |p: i64| skeleton.windows[(p - skeleton.lo) as usize];
    let mut windows = Vec::with_capacity(len);
    let mut cursor = skel_points.partition_point(|&p| p <= lo);
    for idx in 0..len {
        let j = lo + idx as i64;
        while skel_points[cursor] <= j {
            cursor += 1;
        }
        let left = skel_points[cursor - 1];
        if left == j {
            windows.push(skel_window(j));
        } else {
            let right = skel_points[cursor];
            let bracket = (right - left) as u64;
            windows.push(bracket + skel_window(left).max(skel_window(right)));
        }
    }

    Ok(MarkovSample {
        lo,
        states,
        windows,
        anchor,
        mu,
        gf,
    })
}
