//! Generating-function analysis of diluted jump distributions.
//!
//! Thinning the renewal points with keep-probability `μ` replaces the jump
//! law `T` by the compound-geometric `T*_μ = T_1 + ⋯ + T_N`, `N ~ Geom(μ)`.
//! This module evaluates the pgf `G(z) = E[z^T]`, solves `(1-μ)·G(ν) = 1`
//! for the dominant decay rate `ν`, computes the residue constant `c` of
//! the pole of `F(z) = μG/(1-(1-μ)G)`, builds the pmf of `T*_μ` by dynamic
//! programming, and checks the tail asymptotic `P(T*_μ = n) ≈ c·ν^{-n-1}`.

use thiserror::Error;

use crate::dist::JumpDistribution;

/// Residuals at or below this magnitude are float noise, not signal.
const RESIDUAL_FLOOR: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GfError {
    #[error("z = {0} is at or beyond the radius of convergence")]
    OutsideRadius(f64),
    #[error("mu = {0} outside (0,1)")]
    InvalidMu(f64),
    #[error("no root of (1-mu)G = 1 below the radius for mu = {0}")]
    MuInfeasible(f64),
    #[error("lattice jump distribution (support gcd > 1)")]
    LatticeInput,
    #[error("too few informative residuals to fit a secondary rate")]
    DegenerateFit,
    #[error("pmf table reached {0} entries without resolving the tail")]
    TailUnresolved(usize),
}

/// Estimate of the secondary decay rate `κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaEstimate {
    /// All residuals were below the noise floor: the leading term is exact.
    Exact,
    Fitted {
        kappa: f64,
        r2: f64,
    },
}

/// Result of analyzing `T*_μ` through the generating function.
#[derive(Debug, Clone, PartialEq)]
pub struct GfReport {
    pub mu: f64,
    /// Dominant rate: the real root of `(1-μ)G(ν) = 1` in `(1, radius)`.
    pub nu: f64,
    /// Residue constant: `μ / ((1-μ)² G'(ν))`.
    pub c: f64,
    /// Radius of convergence of `G` (`∞` for bounded jumps).
    pub radius: f64,
    /// Filled in by [`verify_asymptotic`].
    pub kappa_est: Option<KappaEstimate>,
}

/// `G(z) = Σ p(n) zⁿ`; exact head sum plus closed-form tail.
pub fn pgf(d: &JumpDistribution, z: f64) -> Result<f64, GfError> {
    check_radius(d, z)?;
    let mut head = 0.0;
    for n in (1..=d.head().len() as u64).rev() {
        head = (head + d.pmf(n)) * z;
    }
    let tail = d.tail().map_or(0.0, |t| {
        let lz = t.rate * z;
        t.coef * lz.powi(d.head().len() as i32 + 1) / (1.0 - lz)
    });
    Ok(head + tail)
}

/// `G'(z) = Σ n p(n) z^{n-1}`.
pub fn pgf_prime(d: &JumpDistribution, z: f64) -> Result<f64, GfError> {
    check_radius(d, z)?;
    if z == 0.0 {
        return Ok(d.pmf(1));
    }
    let k = d.head().len() as u64;
    let mut head = 0.0;
    let mut zpow = 1.0;
    for n in 1..=k {
        head += n as f64 * d.pmf(n) * zpow;
        zpow *= z;
    }
    let tail = d.tail().map_or(0.0, |t| {
        let kk = k as f64;
        let lz = t.rate * z;
        t.coef / z * lz.powi(k as i32 + 1) * ((kk + 1.0) - kk * lz) / ((1.0 - lz) * (1.0 - lz))
    });
    Ok(head + tail)
}

fn check_radius(d: &JumpDistribution, z: f64) -> Result<(), GfError> {
    if z.is_nan() || z < 0.0 || z >= d.radius() {
        return Err(GfError::OutsideRadius(z));
    }
    Ok(())
}

/// Solves `(1-μ)G(ν) = 1` and derives the residue constant.
pub fn analyze(d: &JumpDistribution, mu: f64) -> Result<GfReport, GfError> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(GfError::InvalidMu(mu));
    }
    if d.support_gcd() != 1 {
        return Err(GfError::LatticeInput);
    }
    let radius = d.radius();
    let f = |z: f64| pgf(d, z).map(|g| (1.0 - mu) * g - 1.0);

    // Bracket the root: f(1) = -μ < 0; find hi with f(hi) > 0.
    let mut lo = 1.0f64;
    let mut hi = if radius.is_finite() {
        let h = radius * (1.0 - 1e-9);
        if f(h)? <= 0.0 {
            return Err(GfError::MuInfeasible(mu));
        }
        h
    } else {
        let mut h = 2.0f64;
        let mut tries = 0;
        while f(h)? <= 0.0 {
            h *= 2.0;
            tries += 1;
            if tries > 2000 {
                return Err(GfError::MuInfeasible(mu));
            }
        }
        h
    };

    // Bisection down to adjacent floats; G is strictly increasing on the axis.
    let mut best = hi;
    let mut best_val = f(hi)?.abs();
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid)?;
        if v.abs() < best_val {
            best_val = v.abs();
            best = mid;
        }
        if v.abs() <= 1e-13 {
            break;
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best_val > 1e-10 {
        return Err(GfError::MuInfeasible(mu));
    }
    let nu = best;
    let c = mu / ((1.0 - mu) * (1.0 - mu) * pgf_prime(d, nu)?);
    debug_assert!(c > 0.0);
    Ok(GfReport {
        mu,
        nu,
        c,
        radius,
        kappa_est: None,
    })
}

/// `q(n) = P(T*_μ = n)` for `n = 1..=n_max` via the renewal decomposition
/// `q(n) = μ·p(n) + (1-μ)·Σ_{k<n} p(k) q(n-k)`; `q[0]` is a zero pad.
pub fn pmf_tstar(d: &JumpDistribution, mu: f64, n_max: usize) -> Vec<f64> {
    assert!(n_max >= 1);
    let p: Vec<f64> = (0..=n_max as u64).map(|n| d.pmf(n)).collect();
    let mut q = vec![0.0; n_max + 1];
    for n in 1..=n_max {
        let mut conv = 0.0;
        for k in 1..n {
            conv += p[k] * q[n - k];
        }
        q[n] = mu * p[n] + (1.0 - mu) * conv;
    }
    q
}

/// Residual diagnostics for the `c·ν^{-n-1}` leading term.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticFit {
    pub kappa: KappaEstimate,
    /// `sup_n |q(n) - c·ν^{-n-1}|·κⁿ` over the fitted range.
    pub bound_constant: f64,
    pub points_fitted: usize,
}

/// Fits the decay rate of the residuals `q(n) - c·ν^{-n-1}`.
///
/// Only residuals above the 1e-13 noise floor carry information; below it
/// the subtraction returns rounding error of `q` itself. When no residual
/// clears the floor the leading term is reported exact.
pub fn verify_asymptotic(q: &[f64], report: &GfReport) -> Result<AsymptoticFit, GfError> {
    let n_max = q.len().saturating_sub(1);
    if n_max < 1 {
        return Err(GfError::DegenerateFit);
    }
    let lead = |n: usize| report.c * (1.0 / report.nu).powi(n as i32 + 1);
    let mut pts = Vec::new();
    let mut all_below = true;
    for n in 1..=n_max {
        let r = (q[n] - lead(n)).abs();
        if r > RESIDUAL_FLOOR {
            all_below = false;
            pts.push((n as f64, r.ln()));
        }
    }
    if pts.len() < 3 {
        if all_below {
            return Ok(AsymptoticFit {
                kappa: KappaEstimate::Exact,
                bound_constant: 0.0,
                points_fitted: 0,
            });
        }
        return Err(GfError::DegenerateFit);
    }
    let (slope, _intercept, r2) = least_squares(&pts);
    let kappa = (-slope).exp();
    let ln_kappa = -slope;
    let bound = pts
        .iter()
        .map(|&(n, lr)| (lr + n * ln_kappa).exp())
        .fold(0.0f64, f64::max);
    Ok(AsymptoticFit {
        kappa: KappaEstimate::Fitted { kappa, r2 },
        bound_constant: bound,
        points_fitted: pts.len(),
    })
}

/// Materializes `T*_μ` as a jump distribution: exact DP head out to a
/// residual below `1e-12`, then the geometric continuation at rate `1/ν`
/// carrying exactly the leftover mass.
pub fn tstar_jump_distribution(
    d: &JumpDistribution,
    mu: f64,
) -> Result<(JumpDistribution, GfReport), GfError> {
    let report = analyze(d, mu)?;
    let ln_nu = report.nu.ln();
    // Head length so the true tail mass ≈ c·ν^{-K-1}/(ν-1) sits near 1e-13.
    let target = (report.c / ((report.nu - 1.0) * 1e-13)).ln() / ln_nu;
    let mut k = (target.ceil() as usize).clamp(64, 1 << 22);
    loop {
        let q = pmf_tstar(d, mu, k);
        // Tail-up summation keeps the residual out of cancellation noise.
        let mass: f64 = q.iter().rev().sum();
        let residual = 1.0 - mass;
        if residual > 1e-12 {
            if k >= (1 << 22) {
                return Err(GfError::TailUnresolved(k));
            }
            k *= 2;
            continue;
        }
        let lambda = 1.0 / report.nu;
        let residual = residual.max(f64::MIN_POSITIVE);
        let coef = residual * (1.0 - lambda) / lambda.powi(k as i32 + 1);
        let dist = JumpDistribution::with_tail(&q[1..=k], coef, lambda)
            .expect("DP head plus matched tail is a unit-mass distribution");
        return Ok((dist, report));
    }
}

/// Dilution policy: μ = 1/2 when feasible, else halve until analysis succeeds.
pub fn choose_mu(d: &JumpDistribution) -> Result<(f64, GfReport), GfError> {
    let mut mu = 0.5;
    for _ in 0..60 {
        match analyze(d, mu) {
            Ok(report) => return Ok((mu, report)),
            Err(GfError::MuInfeasible(_)) => mu *= 0.5,
            Err(e) => return Err(e),
        }
    }
    Err(GfError::MuInfeasible(mu))
}

/// Ordinary least squares on `(x, y)` pairs: `(slope, intercept, r²)`.
pub(crate) fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn geom_half() -> JumpDistribution {
        JumpDistribution::geometric(0.5)
    }

    fn uniform12() -> JumpDistribution {
        JumpDistribution::from_head(&[0.5, 0.5]).unwrap()
    }

    #[test]
    fn pgf_values() {
        let d = geom_half();
        assert_abs_diff_eq!(pgf(&d, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        // closed form z/(2-z)
        assert_abs_diff_eq!(pgf(&d, 4.0 / 3.0).unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(pgf(&d, 2.5), Err(GfError::OutsideRadius(2.5)));

        let u = uniform12();
        assert_abs_diff_eq!(pgf(&u, 3.0).unwrap(), (3.0 + 9.0) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pgf_prime(&u, 3.0).unwrap(), 0.5 + 3.0, epsilon = 1e-12);
        // G'(z) for Geom(1/2) is 2/(2-z)^2
        assert_abs_diff_eq!(
            pgf_prime(&d, 4.0 / 3.0).unwrap(),
            2.0 / (2.0 - 4.0 / 3.0f64).powi(2),
            epsilon = 1e-10
        );
    }

    #[test]
    fn analyze_geometric_closed_form() {
        let report = analyze(&geom_half(), 0.5).unwrap();
        assert_abs_diff_eq!(report.nu, 4.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(report.c, 4.0 / 9.0, epsilon = 1e-9);
        assert_eq!(report.radius, 2.0);
        // report invariants
        assert!((1.0 - report.mu) * pgf(&geom_half(), report.nu).unwrap() - 1.0 <= 1e-10);
        assert!(report.c > 0.0);
    }

    #[test]
    fn analyze_uniform_closed_form() {
        // ν solves ν + ν² = 4 ⇒ ν = (−1+√17)/2; polynomial pgf ⇒ radius ∞.
        let report = analyze(&uniform12(), 0.5).unwrap();
        let nu = (17.0f64.sqrt() - 1.0) / 2.0;
        assert_abs_diff_eq!(report.nu, nu, epsilon = 1e-9);
        let c = 0.5 / (0.25 * (0.5 + nu));
        assert_abs_diff_eq!(report.c, c, epsilon = 1e-9);
        assert!((report.c - 0.970143).abs() < 1e-5);
        assert_eq!(report.radius, f64::INFINITY);
    }

    #[test]
    fn polynomial_pgf_feasible_for_every_mu() {
        // bounded jumps: radius ∞, so any μ ∈ (0,1) admits a root
        for mu in [0.05, 0.3, 0.5, 0.7, 0.95] {
            let report = analyze(&uniform12(), mu).unwrap();
            assert_eq!(report.radius, f64::INFINITY);
            assert!(report.nu > 1.0 && report.c > 0.0);
        }
    }

    #[test]
    fn analyze_rejects_lattice() {
        let lat = JumpDistribution::from_head(&[0.0, 0.5, 0.0, 0.5]).unwrap();
        assert_eq!(analyze(&lat, 0.5), Err(GfError::LatticeInput));
    }

    #[test]
    fn tstar_pmf_frozen_values() {
        let q = pmf_tstar(&uniform12(), 0.5, 10);
        assert_abs_diff_eq!(q[1], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(q[2], 5.0 / 16.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q[3], 9.0 / 64.0, epsilon = 1e-15);
    }

    #[test]
    fn tstar_of_geometric_is_geometric() {
        // Thinning Geom(1/2) with μ = 1/2 gives Geom(1/4).
        let q = pmf_tstar(&geom_half(), 0.5, 500);
        for n in 1..=500usize {
            let expect = 0.25 * 0.75f64.powi(n as i32 - 1);
            assert!((q[n] - expect).abs() <= 1e-12, "n={n}");
        }
    }

    // Brute-force oracle: q(n) = Σ_N μ(1-μ)^{N-1} p^{*N}(n).
    fn tstar_by_convolution(d: &JumpDistribution, mu: f64, n_max: usize) -> Vec<f64> {
        let p: Vec<f64> = (0..=n_max as u64).map(|n| d.pmf(n)).collect();
        let mut conv = p.clone(); // p^{*1}
        let mut q = vec![0.0; n_max + 1];
        let mut weight = mu;
        for _ in 1..=n_max {
            for n in 1..=n_max {
                q[n] += weight * conv[n];
            }
            weight *= 1.0 - mu;
            let mut next = vec![0.0; n_max + 1];
            for i in 1..=n_max {
                if conv[i] == 0.0 {
                    continue;
                }
                for j in 1..=(n_max - i) {
                    next[i + j] += conv[i] * p[j];
                }
            }
            conv = next;
        }
        q
    }

    #[test]
    fn tstar_recursion_matches_convolution_oracle() {
        for d in [
            uniform12(),
            JumpDistribution::from_head(&[0.2, 0.3, 0.5]).unwrap(),
        ] {
            let q = pmf_tstar(&d, 0.5, 20);
            let oracle = tstar_by_convolution(&d, 0.5, 20);
            for n in 1..=20 {
                assert_abs_diff_eq!(q[n], oracle[n], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn mu_near_one_recovers_head() {
        let d = uniform12();
        let q = pmf_tstar(&d, 1.0 - 1e-12, 6);
        assert_abs_diff_eq!(q[1], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(q[2], 0.5, epsilon = 1e-9);
        assert!(q[3] < 1e-9);
    }

    #[test]
    fn asymptotic_exact_for_geometric() {
        let report = analyze(&geom_half(), 0.5).unwrap();
        let q = pmf_tstar(&geom_half(), 0.5, 300);
        let fit = verify_asymptotic(&q, &report).unwrap();
        assert_eq!(fit.kappa, KappaEstimate::Exact);
    }

    #[test]
    fn asymptotic_fit_for_uniform() {
        // Second root of z + z² = 4 sits at -(1+√17)/2 ⇒ κ = 2.5616…
        let report = analyze(&uniform12(), 0.5).unwrap();
        let q = pmf_tstar(&uniform12(), 0.5, 300);
        let fit = verify_asymptotic(&q, &report).unwrap();
        match fit.kappa {
            KappaEstimate::Fitted { kappa, r2 } => {
                assert!(kappa > report.nu, "kappa {kappa} vs nu {}", report.nu);
                assert!(r2 > 0.99, "r2 {r2}");
                let expect = (17.0f64.sqrt() + 1.0) / 2.0;
                assert!((kappa - expect).abs() < 0.01, "kappa {kappa}");
            }
            other => panic!("expected a fit, got {other:?}"),
        }
    }

    #[test]
    fn asymptotic_degenerate_on_tiny_input() {
        let report = analyze(&uniform12(), 0.5).unwrap();
        assert_eq!(
            verify_asymptotic(&[0.0, 0.25], &report),
            Err(GfError::DegenerateFit)
        );
    }

    #[test]
    fn tstar_distribution_hazard_limit() {
        // Hazard of T*_μ tends to (ν-1)/ν: the liminf hypothesis holds.
        let (dstar, report) = tstar_jump_distribution(&uniform12(), 0.5).unwrap();
        let hinf = (report.nu - 1.0) / report.nu;
        let q = pmf_tstar(&uniform12(), 0.5, 500);
        // survivals of the q-sequence, tail-up, including leftover mass
        let leftover = report.c * (1.0 / report.nu).powi(502) / (1.0 - 1.0 / report.nu);
        let mut surv = vec![0.0; 502];
        surv[501] = leftover;
        for n in (1..=500usize).rev() {
            surv[n] = surv[n + 1] + q[n];
        }
        for n in 250..=500 {
            let h = q[n] / surv[n];
            assert!((h - hinf).abs() < 0.01, "hazard at {n}: {h} vs {hinf}");
        }
        // materialized distribution agrees with the DP head
        for n in 1..=200u64 {
            assert_abs_diff_eq!(dstar.pmf(n), q[n as usize], epsilon = 1e-13);
        }
        assert!(!dstar.is_bounded());
    }

    #[test]
    fn choose_mu_defaults_to_half() {
        let (mu, _) = choose_mu(&geom_half()).unwrap();
        assert_eq!(mu, 0.5);
    }
}
