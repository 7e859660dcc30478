//! Property-based invariants over randomized inputs.

use brw_core::brw_sim::{simulate_functionals, SimConfig};
use brw_core::cascade::cascade_cylinder_masses;
use brw_core::model::{CountLaw, Displacement, OffspringLaw};
use brw_core::rng::StreamKey;
use brw_core::stable::{pd_weights, StableParams};
use brw_core::stats::{hill_tail_index, ks_statistic, quantile_sorted};
use proptest::prelude::*;

fn displacement_strategy() -> impl Strategy<Value = Displacement> {
    prop_oneof![
        (-2.0..2.0f64, 0.1..3.0f64)
            .prop_map(|(mean, variance)| Displacement::Gaussian { mean, variance }),
        (0.5..4.0f64, -1.0..2.0f64)
            .prop_map(|(rate, shift)| Displacement::ShiftedExponential { rate, shift }),
        (-3.0..1.0f64, 0.05..3.0f64)
            .prop_map(|(lo, width)| Displacement::Uniform {
                lo,
                hi: lo + width
            }),
        (-2.0..2.0f64).prop_map(|value| Displacement::Degenerate { value }),
    ]
}

/// Displacements whose log-transform is strictly curved (so the boundary
/// normalization has a solution).
fn curved_displacement_strategy() -> impl Strategy<Value = Displacement> {
    prop_oneof![
        (-2.0..2.0f64, 0.1..3.0f64)
            .prop_map(|(mean, variance)| Displacement::Gaussian { mean, variance }),
        (0.5..4.0f64, -1.0..2.0f64)
            .prop_map(|(rate, shift)| Displacement::ShiftedExponential { rate, shift }),
        (-3.0..1.0f64, 0.05..3.0f64)
            .prop_map(|(lo, width)| Displacement::Uniform {
                lo,
                hi: lo + width
            }),
    ]
}

fn count_strategy() -> impl Strategy<Value = CountLaw> {
    prop_oneof![
        (1u32..4).prop_map(CountLaw::Fixed),
        (0.2..3.0f64).prop_map(|mean| CountLaw::Poisson { mean }),
        (0.0..0.6f64, 0.1..0.9f64).prop_map(|(p0, rest)| {
            let p2 = (1.0 - p0) * rest;
            let p1 = 1.0 - p0 - p2;
            CountLaw::Explicit(vec![p0, p1, p2])
        }),
    ]
}

fn supercritical_count_strategy() -> impl Strategy<Value = CountLaw> {
    prop_oneof![
        (2u32..5).prop_map(CountLaw::Fixed),
        (1.3..3.0f64).prop_map(|mean| CountLaw::Poisson { mean }),
    ]
}

proptest! {
    /// The log-transform is convex wherever finite.
    #[test]
    fn psi_is_convex(
        count in count_strategy(),
        disp in displacement_strategy(),
        t1 in 0.0..2.0f64,
        gap in 0.05..1.0f64,
    ) {
        let law = OffspringLaw::new(count, disp).unwrap();
        let t2 = t1 + gap;
        let mid = 0.5 * (t1 + t2);
        let (p1, p2, pm) = (
            law.psi(t1).unwrap(),
            law.psi(t2).unwrap(),
            law.psi(mid).unwrap(),
        );
        prop_assume!(p1.is_finite() && p2.is_finite() && pm.is_finite());
        prop_assert!(pm <= 0.5 * (p1 + p2) + 1e-9,
            "psi({mid}) = {pm} above chord of {p1}, {p2}");
    }

    /// Normalization lands on the boundary and is idempotent there.
    #[test]
    fn normalization_is_idempotent(
        count in supercritical_count_strategy(),
        disp in curved_displacement_strategy(),
    ) {
        let law = OffspringLaw::new(count, disp).unwrap();
        let normalized = law.normalize_to_boundary().unwrap();
        let p = normalized.psi(1.0).unwrap();
        let (d1, _) = normalized.psi_derivatives(1.0).unwrap();
        prop_assert!(p.abs() <= 1e-9, "psi(1) = {p}");
        prop_assert!(d1.abs() <= 1e-9, "psi'(1) = {d1}");
        let again = normalized.normalize_to_boundary().unwrap();
        // The second pass must be (numerically) the identity map.
        for t in [0.25f64, 0.5, 1.5, 2.0] {
            let a = normalized.psi(t).unwrap();
            let b = again.psi(t).unwrap();
            prop_assume!(a.is_finite());
            prop_assert!((a - b).abs() <= 1e-7 * (1.0 + a.abs()),
                "psi({t}) moved from {a} to {b}");
        }
    }

    /// On the boundary the log-transform is positive away from its root
    /// (convexity with minimum value 0 at the critical point).
    #[test]
    fn normalized_psi_positive_off_the_minimum(
        count in supercritical_count_strategy(),
        disp in curved_displacement_strategy(),
        beta in 1.2..3.0f64,
    ) {
        let law = OffspringLaw::new(count, disp)
            .unwrap()
            .normalize_to_boundary()
            .unwrap();
        let p = law.psi(beta).unwrap();
        prop_assert!(p > -1e-9, "psi({beta}) = {p} on a boundary law");
        let p_inner = law.psi(0.5).unwrap();
        prop_assert!(p_inner > -1e-9, "psi(0.5) = {p_inner} on a boundary law");
    }

    /// The partition function is sandwiched by its minimal term.
    #[test]
    fn partition_function_bounds(
        count in count_strategy(),
        disp in displacement_strategy(),
        beta in 0.5..3.0f64,
        n in 1u32..6,
        seed in any::<u64>(),
    ) {
        let law = OffspringLaw::new(count, disp).unwrap();
        let cfg = SimConfig::new(n, vec![beta], 1, seed);
        let f = simulate_functionals(&law, &cfg, 0).unwrap();
        let wb = f.w_beta(beta).unwrap();
        if f.extinct {
            prop_assert!(wb == 0.0);
        } else {
            let lo = (-beta * f.min_v).exp();
            let hi = f.particle_count as f64 * lo;
            prop_assert!(wb >= lo * (1.0 - 1e-12), "{wb} < {lo}");
            prop_assert!(wb <= hi * (1.0 + 1e-12), "{wb} > {hi}");
        }
    }

    /// The KS distance is exactly invariant under order-preserving maps
    /// that are injective on floats (scaling by a power of two), and
    /// under reflection.
    #[test]
    fn ks_distance_is_rank_based(
        a in prop::collection::vec(-1e3..1e3f64, 1..120),
        b in prop::collection::vec(-1e3..1e3f64, 1..120),
    ) {
        let d = ks_statistic(&a, &b).unwrap();
        let scale = |xs: &[f64]| xs.iter().map(|x| x * 4.0).collect::<Vec<_>>();
        let d_scaled = ks_statistic(&scale(&a), &scale(&b)).unwrap();
        prop_assert_eq!(d.to_bits(), d_scaled.to_bits());
        let neg = |xs: &[f64]| xs.iter().map(|x| -x).collect::<Vec<_>>();
        let d_neg = ks_statistic(&neg(&a), &neg(&b)).unwrap();
        prop_assert!((d - d_neg).abs() <= 1e-12);
    }

    /// The tail-index estimate is exactly scale-free under power-of-two
    /// scaling.
    #[test]
    fn hill_estimate_is_scale_free(
        xs in prop::collection::vec(1e-3..1e3f64, 10..200),
        k in 2usize..8,
    ) {
        prop_assume!(hill_tail_index(&xs, Some(k)).is_ok());
        let est = hill_tail_index(&xs, Some(k)).unwrap();
        let scaled: Vec<f64> = xs.iter().map(|x| x * 0.25).collect();
        let est2 = hill_tail_index(&scaled, Some(k)).unwrap();
        prop_assert_eq!(est.alpha_hat.to_bits(), est2.alpha_hat.to_bits());
        prop_assert_eq!(est.k, est2.k);
    }

    /// Ranked weights are a decreasing sub-probability vector whose
    /// residual closes the books.
    #[test]
    fn ranked_weights_close_to_one(
        alpha in 0.15..0.9f64,
        k in 1usize..50,
        seed in any::<u64>(),
    ) {
        let params = StableParams::new(alpha).unwrap();
        let pd = pd_weights(&params, k, &mut StreamKey::root(seed).rng()).unwrap();
        prop_assert_eq!(pd.weights.len(), k);
        let mut sum = 0.0;
        for pair in pd.weights.windows(2) {
            prop_assert!(pair[0] >= pair[1]);
        }
        for &w in &pd.weights {
            prop_assert!(w > 0.0 && w < 1.0);
            sum += w;
        }
        prop_assert!((sum + pd.residual - 1.0).abs() <= 1e-12);
        prop_assert!(pd.residual >= 0.0);
    }

    /// Interpolated quantiles are monotone in the level.
    #[test]
    fn quantiles_are_monotone(
        mut xs in prop::collection::vec(-1e6..1e6f64, 1..60),
        q1 in 0.0..1.0f64,
        dq in 0.0..1.0f64,
    ) {
        xs.sort_by(f64::total_cmp);
        let q2 = (q1 + dq).min(1.0);
        let a = quantile_sorted(&xs, q1).unwrap();
        let b = quantile_sorted(&xs, q2).unwrap();
        prop_assert!(a <= b, "quantile({q1}) = {a} > quantile({q2}) = {b}");
    }

    /// Coarsening cylinder masses conserves total mass and halves the
    /// resolution.
    #[test]
    fn coarsening_conserves_mass(
        n in 2u32..8,
        seed in any::<u64>(),
        beta in 0.8..2.5f64,
    ) {
        let law = OffspringLaw::boundary_gaussian();
        let p = n - 1;
        let fine = cascade_cylinder_masses(&law, n, beta, p, StreamKey::root(seed)).unwrap();
        let coarse = fine.coarsen(p - 1).unwrap();
        prop_assert_eq!(coarse.values.len(), fine.values.len() / 2);
        let (a, b) = (fine.total(), coarse.total());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
    }
}
