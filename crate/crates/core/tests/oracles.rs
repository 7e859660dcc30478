//! Cross-module consistency oracles.
//!
//! Each test checks one quantity through two independent constructions
//! (or against a closed form), so an error in any single code path cannot
//! cancel out. These are heavier than the per-module unit tests but still
//! run in seconds each.

use brw_core::brw_sim::{
    derivative_limit_sample, simulate_functionals, star_equation_rhs, SimConfig,
};
use brw_core::model::OffspringLaw;
use brw_core::rng::{tags, StreamKey};
use brw_core::stable::{pd_weights, poisson_atoms, sample_stable, subordinator_at, StableParams};
use brw_core::stats::{hill_tail_index, ks_statistic, ks_two_sample};
use rand::Rng;

/// Atoms above a small cutoff plus the mean of the suppressed remainder
/// must reassemble the one-sided stable law itself.
#[test]
fn atoms_plus_compensation_rebuild_the_stable_law() {
    let params = StableParams::new(0.5).unwrap();
    let reps = 100_000u64;
    let mut rebuilt = Vec::with_capacity(reps as usize);
    for i in 0..reps {
        let mut rng = StreamKey::root(9001).child(tags::ATOMS).child(i).rng();
        let out = poisson_atoms(&params, &[(0, 1.0)], 1e-6, &mut rng).unwrap();
        let total: f64 = out.atoms.iter().map(|a| a.z).sum::<f64>() + out.small_jump_mean;
        rebuilt.push(total);
    }
    let mut rng = StreamKey::root(9002).child(tags::STABLE).rng();
    let direct: Vec<f64> = (0..reps).map(|_| sample_stable(&params, &mut rng)).collect();
    let d = ks_statistic(&rebuilt, &direct).unwrap();
    assert!(d < 0.01, "KS distance {d} between rebuilt and direct draws");
}

/// The ranked-jump construction and the cutoff-atom construction must
/// agree on the mean squared weight sum, and both must sit at `1 - alpha`.
#[test]
fn squared_weight_mass_agrees_between_constructions() {
    let alpha = 0.5;
    let params = StableParams::new(alpha).unwrap();

    // Route one: ranked arrival-time jumps.
    let reps = 5000u64;
    let mut acc = 0.0f64;
    for i in 0..reps {
        let mut rng = StreamKey::root(9100).child(tags::PD).child(i).rng();
        let scale = (params.levy_constant() / alpha).powf(1.0 / alpha);
        let mut gamma = 0.0f64;
        let (mut sum, mut sq) = (0.0f64, 0.0f64);
        for _ in 0..10_000 {
            gamma += rng.sample::<f64, _>(rand_distr::Exp1);
            let z = scale * gamma.powf(-1.0 / alpha);
            sum += z;
            sq += z * z;
        }
        // Fold in the conditional mean of the truncated tail (its squares
        // are negligible at this depth).
        let tail_mean = scale * alpha / (1.0 - alpha) * gamma.powf(1.0 - 1.0 / alpha);
        let total = sum + tail_mean;
        acc += sq / (total * total);
    }
    let ranked_mean = acc / reps as f64;

    // Route two: Poisson atoms above a cutoff.
    let reps = 20_000u64;
    let mut acc = 0.0f64;
    for i in 0..reps {
        let mut rng = StreamKey::root(9200).child(tags::ATOMS).child(i).rng();
        let out = poisson_atoms(&params, &[(0, 1.0)], 1e-4, &mut rng).unwrap();
        let sum: f64 = out.atoms.iter().map(|a| a.z).sum::<f64>() + out.small_jump_mean;
        let sq: f64 = out.atoms.iter().map(|a| a.z * a.z).sum();
        acc += sq / (sum * sum);
    }
    let atom_mean = acc / reps as f64;

    assert!(
        (ranked_mean - (1.0 - alpha)).abs() < 0.015,
        "ranked route: {ranked_mean} vs {}",
        1.0 - alpha
    );
    assert!(
        (atom_mean - (1.0 - alpha)).abs() < 0.015,
        "atom route: {atom_mean} vs {}",
        1.0 - alpha
    );
    assert!(
        (ranked_mean - atom_mean).abs() < 0.02,
        "routes disagree: {ranked_mean} vs {atom_mean}"
    );

    // The library's own ranked-weight API reports the same quantity
    // through `weights` + `residual` bookkeeping.
    let mut rng = StreamKey::root(9300).child(tags::PD).rng();
    let mut acc = 0.0f64;
    let reps = 3000;
    for _ in 0..reps {
        let pd = pd_weights(&params, 200, &mut rng).unwrap();
        acc += pd.weights.iter().map(|w| w * w).sum::<f64>();
    }
    let api_mean = acc / f64::from(reps);
    assert!(
        (api_mean - (1.0 - alpha)).abs() < 0.02,
        "library route: {api_mean}"
    );
}

/// The permutation test must reject a true null at its nominal rate.
#[test]
fn permutation_test_nominal_level() {
    let trials = 1000u32;
    let level = 0.05;
    let mut data_rng = StreamKey::root(9400).rng();
    let mut rejections = 0u32;
    for trial in 0..trials {
        let a: Vec<f64> = (0..2000).map(|_| data_rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..2000).map(|_| data_rng.random::<f64>()).collect();
        let key = StreamKey::root(9500).child(u64::from(trial));
        let report = ks_two_sample(&a, &b, 99, key, level).unwrap();
        rejections += u32::from(report.reject_null.unwrap());
    }
    let rate = f64::from(rejections) / f64::from(trials);
    // Exact level up to tie conservatism; 3 sigma of the binomial is 0.021.
    assert!(
        (rate - level).abs() < 0.025,
        "null rejection rate {rate} vs nominal {level}"
    );
}

/// The subordinated fixed point: summing independently subordinated children
/// (`sum e^{-beta V_u} T(z_u)`) has the same law as subordinating the summed
/// child times (`T(sum e^{-V_u} z_u)`), whatever the law of the times z.
/// Both sides here take their times from the same proxy law, so the identity
/// is exact and the KS distance sits at the two-sample resampling floor.
#[test]
fn one_reproduction_step_preserves_the_limit_law() {
    let law = OffspringLaw::boundary_gaussian();
    let beta = 2.0;
    let m = 10;
    let n = 20_000;
    let params = StableParams::from_beta(beta).unwrap();
    let draw_pool = |salt: u64| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let key = StreamKey::root(salt).child(i).child(tags::Z_POOL);
                derivative_limit_sample(&law, m, key).max(0.0)
            })
            .collect()
    };
    let times_a = draw_pool(9600);
    let times_b = draw_pool(9601);
    // Right side: one reproduction step over already-subordinated samples.
    let x_pool: Vec<f64> = times_b
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let key = StreamKey::root(9602).child(i as u64).child(tags::STABLE);
            subordinator_at(&params, z, &mut key.rng()).unwrap()
        })
        .collect();
    let rhs: Vec<f64> = (0..n)
        .map(|i| star_equation_rhs(&law, beta, &x_pool, StreamKey::root(9700).child(i)).unwrap())
        .collect();
    // Left side: the same reproduction step taken in time (beta = 1 weights),
    // then a single subordinator evaluation.
    let lhs: Vec<f64> = (0..n)
        .map(|i| {
            let t = star_equation_rhs(&law, 1.0, &times_a, StreamKey::root(9701).child(i)).unwrap();
            let key = StreamKey::root(9702).child(i).child(tags::STABLE);
            subordinator_at(&params, t, &mut key.rng()).unwrap()
        })
        .collect();
    let d = ks_statistic(&lhs, &rhs).unwrap();
    // Two-sample null scale at 2e4 vs 2e4 is about 0.014.
    assert!(d < 0.03, "KS distance {d} between subordinated recursion sides");
}

/// The derivative proxy is centered for every horizon.
#[test]
fn derivative_proxy_stays_centered() {
    let law = OffspringLaw::boundary_gaussian();
    for m in [6u32, 10] {
        let reps = 3000u64;
        let (mut s, mut s2) = (0.0f64, 0.0f64);
        for i in 0..reps {
            let z = derivative_limit_sample(&law, m, StreamKey::root(9800).child(m.into()).child(i));
            s += z;
            s2 += z * z;
        }
        let mean = s / reps as f64;
        let se = ((s2 / reps as f64 - mean * mean) / reps as f64).sqrt();
        assert!(
            mean.abs() <= 3.0 * se,
            "m={m}: mean {mean} exceeds 3 x {se}"
        );
    }
}

/// The rescaled partition function already shows the predicted tail index
/// `1/beta` at a moderate horizon.
#[test]
fn rescaled_partition_function_tail_index_smoke() {
    let law = OffspringLaw::boundary_gaussian();
    let beta = 2.0;
    let cfg = SimConfig::new(12, vec![beta], 10_000, 9900);
    let samples: Vec<f64> = (0..cfg.replicates)
        .map(|i| {
            let f = simulate_functionals(&law, &cfg, i).unwrap();
            brw_core::brw_sim::rescaled_wbeta(&f, beta).unwrap()
        })
        .collect();
    let est = hill_tail_index(&samples, None).unwrap();
    assert!(
        (est.alpha_hat - 0.5).abs() < 0.15,
        "tail index {} vs 0.5",
        est.alpha_hat
    );
}
