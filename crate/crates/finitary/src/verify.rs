//! Statistical and exact verification shared by the coders.
//!
//! Three checks cover what it means for a coded process to have the right
//! law: a chi-square goodness-of-fit on gap distributions, a log-survival
//! regression for exponential window tails, and lag autocorrelations for
//! gap independence. All of them are deterministic given their inputs.

use std::collections::HashMap;

use thiserror::Error;

use crate::dist::JumpDistribution;
use crate::gf::least_squares;
use crate::renewal::CoderParams;
use crate::stream::UniformSource;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("degenerate sample: not enough distinct values to fit a tail")]
    DegenerateFit,
}

/// Pearson chi-square result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub p_value: f64,
    pub bins: usize,
}

/// Chi-square goodness of fit of observed gaps against `p(·)`.
///
/// Consecutive values are pooled until each bin expects at least 5
/// counts; everything past the last full bin is pooled into one open
/// tail bin. Degrees of freedom: bins − 1.
pub fn chi_square_gaps(gaps: &[u64], d: &JumpDistribution) -> Result<ChiSquare, VerifyError> {
    let n = gaps.len();
    if n < 1000 {
        return Err(VerifyError::TooFewSamples { need: 1000, got: n });
    }
    let nf = n as f64;

    // v_cut: last value whose open tail still expects ≥ 5 counts.
    let mut v_cut = 0u64;
    while nf * d.survival(v_cut + 2) >= 5.0 {
        v_cut += 1;
        if v_cut > 1 << 40 {
            break;
        }
    }

    // Closed bins over 1..=v_cut, each with expected mass ≥ 5.
    let mut edges: Vec<u64> = Vec::new(); // inclusive right edges
    let mut expected: Vec<f64> = Vec::new();
    let mut acc = 0.0;
    for v in 1..=v_cut {
        acc += nf * d.pmf(v);
        if acc >= 5.0 {
            edges.push(v);
            expected.push(acc);
            acc = 0.0;
        }
    }
    // Leftover interior mass joins the open tail bin.
    let tail_lo = edges.last().copied().unwrap_or(0) + 1;
    expected.push(nf * d.survival(tail_lo));

    let mut observed = vec![0.0f64; expected.len()];
    'outer: for &g in gaps {
        for (k, &e) in edges.iter().enumerate() {
            if g <= e {
                observed[k] += 1.0;
                continue 'outer;
            }
        }
        *observed.last_mut().unwrap() += 1.0;
    }

    let statistic = observed
        .iter()
        .zip(&expected)
        .map(|(&o, &e)| (o - e) * (o - e) / e)
        .sum();
    let bins = expected.len();
    let p_value = chi_square_pvalue(statistic, (bins - 1) as f64);
    Ok(ChiSquare {
        statistic,
        p_value,
        bins,
    })
}

/// Upper tail of the chi-square distribution with `df` degrees of freedom.
pub fn chi_square_pvalue(stat: f64, df: f64) -> f64 {
    gamma_q(df / 2.0, stat / 2.0)
}

/// Fit of an empirical log-survival curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    /// Per-index log-rate of `P(R ≥ r)`; negative on passing fits.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `P(E_i) = a²(1-b)^{n0-1}`, the geometric reference.
    pub geometric_bound_rate: f64,
    /// Reference log-rate per index implied by the geometric bound.
    pub reference_slope: f64,
}

/// Least-squares fit of `ln P(R ≥ r)` against `r` over the range where
/// the empirical survival keeps at least 50 samples.
pub fn fit_window_tail(windows: &[u64], params: &CoderParams) -> Result<TailFit, VerifyError> {
    if windows.len() < 10_000 {
        return Err(VerifyError::TooFewSamples {
            need: 10_000,
            got: windows.len(),
        });
    }
    let (slope, intercept, r2) = fit_log_survival(windows, 50)?;
    Ok(TailFit {
        slope,
        intercept,
        r2,
        geometric_bound_rate: params.regeneration_probability(),
        reference_slope: params.reference_log_rate(),
    })
}

/// `(slope, intercept, r²)` of `ln P(V ≥ r)` over `r` with at least
/// `min_count` surviving samples.
pub fn fit_log_survival(values: &[u64], min_count: usize) -> Result<(f64, f64, f64), VerifyError> {
    let n = values.len();
    if n == 0 {
        return Err(VerifyError::DegenerateFit);
    }
    let max = *values.iter().max().unwrap();
    let min = *values.iter().min().unwrap();
    let mut counts = vec![0u64; (max - min + 2) as usize];
    for &v in values {
        counts[(v - min) as usize] += 1;
    }
    // suffix counts: survivors at r
    let mut pts = Vec::new();
    let mut alive = n as u64;
    for r in min..=max {
        if alive >= min_count as u64 {
            pts.push((r as f64, (alive as f64 / n as f64).ln()));
        }
        alive -= counts[(r - min) as usize];
    }
    if pts.len() < 3 {
        return Err(VerifyError::DegenerateFit);
    }
    Ok(least_squares(&pts))
}

/// Empirical survival curve `(r, P(V ≥ r))` down to `min_count` survivors.
pub fn survival_curve(values: &[u64], min_count: usize) -> Vec<(u64, f64)> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let max = *values.iter().max().unwrap();
    let min = *values.iter().min().unwrap();
    let mut counts = vec![0u64; (max - min + 2) as usize];
    for &v in values {
        counts[(v - min) as usize] += 1;
    }
    let mut out = Vec::new();
    let mut alive = n as u64;
    for r in min..=max {
        if alive >= min_count as u64 {
            out.push((r, alive as f64 / n as f64));
        }
        alive -= counts[(r - min) as usize];
    }
    out
}

/// Sample autocorrelations of the gap sequence at lags 1..=5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagReport {
    pub rho: [f64; 5],
    /// `3/√n`.
    pub threshold: f64,
}

impl LagReport {
    pub fn passes(&self) -> bool {
        self.rho.iter().all(|r| r.abs() < self.threshold)
    }
}

pub fn independence_lag(gaps: &[u64]) -> Result<LagReport, VerifyError> {
    let n = gaps.len();
    if n < 10_000 {
        return Err(VerifyError::TooFewSamples {
            need: 10_000,
            got: n,
        });
    }
    let mean = gaps.iter().map(|&g| g as f64).sum::<f64>() / n as f64;
    let var: f64 = gaps.iter().map(|&g| (g as f64 - mean).powi(2)).sum();
    let mut rho = [0.0f64; 5];
    for (k, r) in rho.iter_mut().enumerate() {
        let lag = k + 1;
        let cov: f64 = (0..n - lag)
            .map(|i| (gaps[i] as f64 - mean) * (gaps[i + lag] as f64 - mean))
            .sum();
        *r = cov / var;
    }
    Ok(LagReport {
        rho,
        threshold: 3.0 / (n as f64).sqrt(),
    })
}

// ---------------------------------------------------------------------
// Regularized incomplete gamma, for the chi-square upper tail.
// Series for x < a+1, Lentz continued fraction otherwise.

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7, n = 9.
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `Q(a, x) = Γ(a,x)/Γ(a)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..500 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_cf(a: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    let ln_term = -x + a * x.ln() - ln_gamma(a);
    if ln_term < -700.0 {
        0.0
    } else {
        ln_term.exp() * h
    }
}

// ---------------------------------------------------------------------
// Stream drivers used by replay and locality tests.

/// Uniform source with explicit per-index values; reading an index that
/// was never specified panics. Pairing it with a coder run proves the
/// coder touched only the indices it claims to need.
#[derive(Debug, Clone, Default)]
pub struct TableSource {
    values: HashMap<i64, f64>,
    default: Option<f64>,
}

impl TableSource {
    pub fn new(values: impl IntoIterator<Item = (i64, f64)>) -> Self {
        TableSource {
            values: values.into_iter().collect(),
            default: None,
        }
    }

    /// Every unspecified index reads as `v` instead of panicking.
    pub fn with_default(v: f64) -> Self {
        TableSource {
            values: HashMap::new(),
            default: Some(v),
        }
    }

    pub fn set(&mut self, i: i64, v: f64) {
        self.values.insert(i, v);
    }
}

impl UniformSource for TableSource {
    fn value(&self, i: i64) -> f64 {
        match self.values.get(&i) {
            Some(&v) => v,
            None => self
                .default
                .unwrap_or_else(|| panic!("read of unspecified stream index {i}")),
        }
    }
}

/// A base source with finitely many overridden indices.
#[derive(Debug, Clone)]
pub struct PerturbedSource<'a, S: UniformSource> {
    base: &'a S,
    overrides: HashMap<i64, f64>,
}

impl<'a, S: UniformSource> PerturbedSource<'a, S> {
    pub fn new(base: &'a S) -> Self {
        PerturbedSource {
            base,
            overrides: HashMap::new(),
        }
    }

    pub fn set(&mut self, i: i64, v: f64) {
        self.overrides.insert(i, v);
    }
}

impl<S: UniformSource> UniformSource for PerturbedSource<'_, S> {
    fn value(&self, i: i64) -> f64 {
        self.overrides
            .get(&i)
            .copied()
            .unwrap_or_else(|| self.base.value(i))
    }
}
