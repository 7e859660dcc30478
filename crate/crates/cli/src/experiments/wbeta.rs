//! verify-wbeta: the rescaled partition function against its limit law.
//!
//! For each beta the claim under test is that `n^{(3/2)beta} W_{n,beta}`
//! converges in law, up to a constant, to a stable subordinator of index
//! `1/beta` evaluated at the derivative-martingale limit. The reference
//! sample is built once per beta: a pool of depth-`m` derivative proxies
//! `Z_m` (clamped at zero) fed through independent subordinator draws. The
//! unknown constant is estimated by a median ratio at the largest
//! generation; each generation's rescaled sample is then compared to the
//! scaled reference by KS distance.
//!
//! Asserted: the KS distance at the largest generation stays under
//! `assertions.max_final_ks`, the KS sequence decreases strictly in `n`,
//! and the Hill tail-index estimate at the largest generation sits within
//! `assertions.max_hill_error` of `1/beta`. Earlier generations' KS values
//! are reported without a decision.

use anyhow::{Context, Result};
use brw_core::brw_sim::{
    derivative_limit_sample, rescaled_wbeta, simulate_functionals, SimConfig,
};
use brw_core::rng::{tags, StreamKey};
use brw_core::stable::{subordinator_at, StableParams};
use brw_core::stats::{estimate_scale, hill_tail_index, ks_two_sample};

use crate::config::ValidatedConfig;
use crate::farm::Farm;
use crate::output::{slug, RunOutput};

use super::{assert_tolerance, scalar_report};

pub fn run(v: &ValidatedConfig, farm: &Farm) -> Result<bool> {
    let cfg = &v.raw;
    let law = &v.law;
    let seed = cfg.seed;
    let reps = cfg.replicates;
    let m = cfg.m;
    let diagnostic = cfg.assertions.diagnostic_only;

    let mut out = RunOutput::new("verify-wbeta", cfg)?;
    for w in &v.warnings {
        out.warn(w.clone());
    }

    // Shared derivative-proxy pool: one Z_m per replicate index, reused by
    // every beta so the subordinated references share their input noise.
    eprintln!("sampling {} derivative proxies at depth m = {m}", reps);
    let z_pool: Vec<f64> = farm.run(reps, |i| {
        let key = StreamKey::root(seed).child(tags::Z_POOL).child(i);
        Ok(derivative_limit_sample(law, m, key).max(0.0))
    })?;
    let zero_fraction =
        z_pool.iter().filter(|z| **z == 0.0).count() as f64 / z_pool.len().max(1) as f64;
    out.set_extra("z_pool_zero_fraction", zero_fraction);

    // Walk every generation once; each replicate computes all betas.
    let mut per_generation: Vec<Vec<brw_core::brw_sim::GenerationFunctionals>> = Vec::new();
    for &n in &cfg.generations {
        eprintln!("simulating {} walks at generation n = {n}", reps);
        let sim = SimConfig {
            n,
            betas: cfg.betas.clone(),
            replicates: reps,
            master_seed: seed,
            particle_cap: cfg.particle_cap,
            condition_on_survival: cfg.condition_on_survival,
        };
        let rows = farm.run(reps, |i| Ok(simulate_functionals(law, &sim, i)?))?;

        let mut columns = vec![
            "replicate".to_string(),
            "w".into(),
            "z".into(),
            "min_v".into(),
            "particle_count".into(),
            "extinct".into(),
            "attempts".into(),
        ];
        for &b in &cfg.betas {
            columns.push(format!("rescaled_wbeta_{}", slug(b)));
        }
        let column_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
        let csv_rows = rows.iter().enumerate().map(|(i, f)| {
            let mut s = format!(
                "{},{},{},{},{},{},{}",
                i, f.w, f.z, f.min_v, f.particle_count, u8::from(f.extinct), f.attempts
            );
            for &b in &cfg.betas {
                let r = rescaled_wbeta(f, b).unwrap_or(f64::NAN);
                s.push_str(&format!(",{r}"));
            }
            s
        });
        out.write_csv(&format!("replicates_wbeta_n{n}.csv"), &column_refs, csv_rows)?;
        per_generation.push(rows);
    }

    let n_max = *cfg.generations.last().expect("validated nonempty");

    for (bi, &beta) in cfg.betas.iter().enumerate() {
        let params = StableParams::from_beta(beta)?;
        let bslug = slug(beta);

        // Reference pool: T(Z_m) with independent stable draws per index.
        let t_pool: Vec<f64> = farm.run(reps, |i| {
            let mut rng = StreamKey::root(seed)
                .child(tags::STABLE)
                .child(bi as u64)
                .child(i)
                .rng();
            Ok(subordinator_at(&params, z_pool[i as usize], &mut rng)?)
        })?;

        // Rescaled samples per generation.
        let rescaled: Vec<Vec<f64>> = per_generation
            .iter()
            .map(|rows| {
                rows.iter()
                    .map(|f| rescaled_wbeta(f, beta))
                    .collect::<Result<Vec<f64>, _>>()
            })
            .collect::<Result<_, _>>()
            .context("rescaling failed")?;

        // Unknown constant: median ratio at the largest generation.
        let last = rescaled.last().expect("validated nonempty");
        let scale = estimate_scale(
            last,
            &t_pool,
            200,
            StreamKey::root(seed).child(tags::BOOTSTRAP).child(bi as u64),
        )?;
        let reference: Vec<f64> = t_pool.iter().map(|t| scale.c_hat * t).collect();
        out.set_extra(&format!("c_hat_beta{bslug}"), scale.c_hat);
        out.write_ecdf(
            &format!("ecdf_wbeta_reference_beta{bslug}.csv"),
            "scaled_subordinated_proxy",
            &reference,
        )?;

        let mut ks_values = Vec::new();
        for (ni, &n) in cfg.generations.iter().enumerate() {
            let sample = &rescaled[ni];
            let mut report = ks_two_sample(
                sample,
                &reference,
                cfg.permutations,
                StreamKey::root(seed)
                    .child(tags::KS_PERMUTATION)
                    .child(bi as u64)
                    .child(u64::from(n)),
                cfg.level,
            )?;
            report.metadata.insert("beta".into(), format!("{beta}"));
            report.metadata.insert("n".into(), format!("{n}"));
            report.metadata.insert("m".into(), format!("{m}"));
            report
                .metadata
                .insert("c_hat".into(), format!("{}", scale.c_hat));
            report.metadata.insert(
                "c_hat_ci".into(),
                format!("[{}, {}]", scale.ci_low, scale.ci_high),
            );
            ks_values.push(report.statistic_value);
            if n == n_max {
                assert_tolerance(&mut report, cfg.assertions.max_final_ks, diagnostic);
            } else {
                // Intermediate generations inform the trend only.
                assert_tolerance(&mut report, f64::INFINITY, true);
            }
            out.write_ecdf(
                &format!("ecdf_wbeta_n{n}_beta{bslug}.csv"),
                "rescaled_wbeta",
                sample,
            )?;
            out.push(format!("wbeta_ks_n{n}_beta{bslug}"), report);
        }

        // Strict decrease of the KS sequence in n.
        if cfg.generations.len() >= 2 {
            let max_increase = ks_values
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut report = scalar_report(
                "max_ks_increase",
                max_increase,
                if diagnostic || !cfg.assertions.require_monotone_ks {
                    None
                } else {
                    Some(0.0)
                },
                vec![reps as usize],
                vec![seed],
                cfg.level,
            );
            // Strict decrease means every increment is negative.
            if let Some(r) = report.reject_null {
                report.reject_null = Some(r || max_increase == 0.0);
            }
            report.metadata.insert(
                "ks_sequence".into(),
                ks_values
                    .iter()
                    .map(|k| format!("{k:.6}"))
                    .collect::<Vec<_>>()
                    .join(", "),
            );
            report.metadata.insert("beta".into(), format!("{beta}"));
            out.push(format!("wbeta_ks_monotone_beta{bslug}"), report);
        }

        // Tail index at the largest generation: alpha = 1/beta.
        let hill = hill_tail_index(last, None)?;
        let target = 1.0 / beta;
        let mut report = scalar_report(
            "abs_hill_alpha_error",
            (hill.alpha_hat - target).abs(),
            if diagnostic {
                None
            } else {
                Some(cfg.assertions.max_hill_error)
            },
            vec![last.len()],
            vec![seed],
            cfg.level,
        );
        report
            .metadata
            .insert("alpha_hat".into(), format!("{}", hill.alpha_hat));
        report
            .metadata
            .insert("alpha_target".into(), format!("{target}"));
        report.metadata.insert(
            "alpha_ci".into(),
            format!("[{}, {}]", hill.ci_low, hill.ci_high),
        );
        report.metadata.insert("k".into(), format!("{}", hill.k));
        report.metadata.insert("n".into(), format!("{n_max}"));
        out.push(format!("wbeta_hill_beta{bslug}"), report);
    }

    out.finish()
}
