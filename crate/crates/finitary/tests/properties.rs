//! Property tests for the structural identities the library promises at 1e-12.

use proptest::prelude::*;

use finitary::dilution::BlockFillPlan;
use finitary::gf::pmf_tstar;
use finitary::stream::{tags, UniformSource, UniformStream};
use finitary::JumpDistribution;

/// Random normalized jump distribution: a short head, optionally a
/// geometric tail carrying part of the mass.
fn arb_dist() -> impl Strategy<Value = JumpDistribution> {
    (
        prop::collection::vec(0.0f64..1.0, 1..6),
        prop::option::of((0.05f64..0.9, 0.05f64..0.9)),
    )
        .prop_filter_map("needs support", |(head, tail)| {
            let head_sum: f64 = head.iter().sum();
            match tail {
                None => {
                    if head_sum <= 1e-3 {
                        return None;
                    }
                    let head: Vec<f64> = head.iter().map(|p| p / head_sum).collect();
                    JumpDistribution::from_head(&head).ok()
                }
                Some((tail_frac, rate)) => {
                    if head_sum <= 1e-3 {
                        return None;
                    }
                    // split the mass: (1-tail_frac) on the head, tail_frac beyond
                    let head: Vec<f64> = head
                        .iter()
                        .map(|p| p / head_sum * (1.0 - tail_frac))
                        .collect();
                    let k = head.len() as i32;
                    let coef = tail_frac * (1.0 - rate) / rate.powi(k + 1);
                    JumpDistribution::with_tail(&head, coef, rate).ok()
                }
            }
        })
}

proptest! {
    #[test]
    fn mass_sums_to_one(d in arb_dist()) {
        // partial sum out to where survival is closed-form
        let k = d.head().len() as u64;
        let partial: f64 = (1..=k).map(|n| d.pmf(n)).sum();
        let total = partial + d.survival(k + 1);
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hazard_identities(d in arb_dist()) {
        let top = d.head().len() as u64 + 25;
        for n in 1..=top {
            if d.survival(n) <= 0.0 { break; }
            let h = d.hazard(n).unwrap();
            prop_assert!((h * d.survival(n) - d.pmf(n)).abs() < 1e-12);
            prop_assert!((d.survival(n + 1) - d.survival(n) * (1.0 - h)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&h));
        }
    }

    #[test]
    fn quantile_inverts_cdf(d in arb_dist(), u in 0.0f64..1.0) {
        let n = d.quantile(u);
        prop_assert!(n >= 1);
        // P(T ≤ n) ≥ u and P(T ≤ n-1) < u, up to float slop
        prop_assert!(1.0 - d.survival(n + 1) >= u - 1e-9);
        if n > 1 {
            prop_assert!(1.0 - d.survival(n) < u + 1e-9);
        }
    }

    #[test]
    fn support_gcd_divides_support(d in arb_dist()) {
        let g = d.support_gcd();
        prop_assert!(g >= 1);
        for n in 1..=d.head().len() as u64 {
            if d.pmf(n) > 0.0 {
                prop_assert_eq!(n % g, 0);
            }
        }
    }

    #[test]
    fn tstar_subprobability_and_oracle(d in arb_dist(), mu in 0.05f64..0.95) {
        let n_max = 12;
        let q = pmf_tstar(&d, mu, n_max);
        let mut sum = 0.0;
        for n in 1..=n_max {
            prop_assert!(q[n] >= 0.0);
            sum += q[n];
        }
        prop_assert!(sum <= 1.0 + 1e-12);

        // convolution oracle
        let mut conv: Vec<f64> = (0..=n_max as u64).map(|n| d.pmf(n)).collect();
        let mut oracle = vec![0.0; n_max + 1];
        let mut weight = mu;
        for _ in 1..=n_max {
            for n in 1..=n_max {
                oracle[n] += weight * conv[n];
            }
            weight *= 1.0 - mu;
            let mut next = vec![0.0; n_max + 1];
            for i in 1..=n_max {
                for j in 1..=(n_max - i) {
                    next[i + j] += conv[i] * d.pmf(j as u64);
                }
            }
            conv = next;
        }
        for n in 1..=n_max {
            prop_assert!((q[n] - oracle[n]).abs() < 1e-12, "q({}) = {} vs {}", n, q[n], oracle[n]);
        }
    }

    #[test]
    fn fills_sum_and_replay(d in arb_dist(), mu in 0.1f64..0.9, l in 1u64..20, seed in any::<u64>(), anchor in -1000i64..1000) {
        let mut plan = BlockFillPlan::new(d, mu);
        plan.ensure(32);
        if plan.q(l) <= 0.0 {
            return Ok(()); // impossible block length for this support
        }
        let rng = UniformStream::new(seed, tags::FILL);
        let a = plan.fill_block(l, &rng, anchor).unwrap();
        prop_assert_eq!(a.iter().sum::<u64>(), l);
        let b = plan.fill_block(l, &rng, anchor).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn stream_replay_and_range(seed in any::<u64>(), id in any::<u64>(), i in any::<i64>()) {
        let s = UniformStream::new(seed, id);
        let v = s.value(i);
        prop_assert!((0.0..1.0).contains(&v));
        prop_assert_eq!(v.to_bits(), UniformStream::new(seed, id).value(i).to_bits());
    }
}
