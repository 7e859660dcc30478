//! verify-min: stabilization of the recentered minimal position.
//!
//! At the boundary the minimum of generation `n`, recentered by
//! `(3/2) ln n`, converges in law. Convergence in law of a sequence is
//! checked pairwise: for each configured `n`, simulate at `n` and `2n` and
//! require the KS distance between the recentered survivor minima to stay
//! under `assertions.max_pair_ks`. Extinct replicates carry no minimum and
//! are excluded (counts reported); at `n = 1` the recentering is trivial
//! and the pair is reported without a decision.

use anyhow::Result;
use brw_core::brw_sim::{recentered_min, simulate_functionals, SimConfig};
use brw_core::rng::{tags, StreamKey};
use brw_core::stats::ks_two_sample;

use crate::config::ValidatedConfig;
use crate::farm::Farm;
use crate::output::RunOutput;

use super::assert_tolerance;

pub fn run(v: &ValidatedConfig, farm: &Farm) -> Result<bool> {
    let cfg = &v.raw;
    let law = &v.law;
    let seed = cfg.seed;
    let reps = cfg.replicates;
    let diagnostic = cfg.assertions.diagnostic_only;

    let mut out = RunOutput::new("verify-min", cfg)?;
    for w in &v.warnings {
        out.warn(w.clone());
    }

    for &n in &cfg.generations {
        let pair = [n, 2 * n];
        let mut survivor_minima: Vec<Vec<f64>> = Vec::new();
        let mut raw: Vec<Vec<(f64, bool)>> = Vec::new();
        for &horizon in &pair {
            eprintln!("simulating {} walks at generation n = {horizon}", reps);
            let sim = SimConfig {
                n: horizon,
                betas: Vec::new(),
                replicates: reps,
                master_seed: seed,
                particle_cap: cfg.particle_cap,
                condition_on_survival: cfg.condition_on_survival,
            };
            let rows = farm.run(reps, |i| {
                let f = simulate_functionals(law, &sim, i)?;
                let rm = if f.extinct {
                    f64::NAN
                } else {
                    recentered_min(&f)?
                };
                Ok((rm, f.extinct))
            })?;
            survivor_minima.push(
                rows.iter()
                    .filter(|(_, extinct)| !extinct)
                    .map(|(rm, _)| *rm)
                    .collect(),
            );
            raw.push(rows);
        }

        let excluded: Vec<usize> = raw
            .iter()
            .map(|rows| rows.iter().filter(|(_, e)| *e).count())
            .collect();
        out.set_extra(
            &format!("extinct_excluded_n{n}_vs_{}", 2 * n),
            excluded.clone(),
        );

        let mut report = ks_two_sample(
            &survivor_minima[0],
            &survivor_minima[1],
            cfg.permutations,
            StreamKey::root(seed)
                .child(tags::KS_PERMUTATION)
                .child(u64::from(n)),
            cfg.level,
        )?;
        report.metadata.insert("n_pair".into(), format!("{n} vs {}", 2 * n));
        report.metadata.insert(
            "excluded_extinct".into(),
            format!("{} and {}", excluded[0], excluded[1]),
        );
        let pair_diagnostic = diagnostic || n == 1;
        if n == 1 {
            report.warnings.push(
                "n = 1: the recentering is trivial at a single generation; reported without a \
                 decision"
                    .into(),
            );
        }
        assert_tolerance(&mut report, cfg.assertions.max_pair_ks, pair_diagnostic);
        out.push(format!("min_pair_ks_n{n}_vs_{}", 2 * n), report);

        out.write_ecdf(
            &format!("ecdf_min_n{n}.csv"),
            "recentered_min",
            &survivor_minima[0],
        )?;
        out.write_ecdf(
            &format!("ecdf_min_n{}.csv", 2 * n),
            "recentered_min",
            &survivor_minima[1],
        )?;
        let csv_rows = (0..reps as usize).map(|i| {
            let (a, ea) = raw[0][i];
            let (b, eb) = raw[1][i];
            format!("{i},{a},{},{b},{}", u8::from(ea), u8::from(eb))
        });
        out.write_csv(
            &format!("replicates_min_n{n}_vs_{}.csv", 2 * n),
            &[
                "replicate",
                "recentered_min_a",
                "extinct_a",
                "recentered_min_b",
                "extinct_b",
            ],
            csv_rows,
        )?;
    }

    out.finish()
}
