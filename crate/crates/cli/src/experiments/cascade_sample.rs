//! sample-cascade: raw cylinder-mass data products, no assertions.
//!
//! For each configured generation, writes the depth-`p` cylinder masses of
//! the derivative measure and of the Gibbs measure at every configured
//! beta — one walk per replicate, all measures computed on the *same* tree
//! realization (shared replicate streams). Also writes ranked normalized
//! Gibbs weights and the ECDF of the largest weight, and reports the mean
//! negative-cell fraction of the derivative measure (its cells are signed;
//! negativity vanishes as `n` grows).

use anyhow::Result;
use brw_core::cascade::{cascade_cylinder_masses, derivative_masses, gibbs_normalize};
use brw_core::model::CountLaw;
use brw_core::rng::{tags, StreamKey};

use crate::config::ValidatedConfig;
use crate::farm::Farm;
use crate::output::{slug, RunOutput};

use super::{mean_and_se, scalar_report};

/// Most ranked weights kept per replicate in the ranked-weight table.
const MAX_RANKS: usize = 64;
/// Cap on rows in the per-cell table; guards against accidental huge runs.
const MAX_CELL_ROWS: u64 = 20_000_000;

pub fn run(v: &ValidatedConfig, farm: &Farm) -> Result<bool> {
    let cfg = &v.raw;
    let law = &v.law;
    let seed = cfg.seed;
    let reps = cfg.replicates;
    let p = cfg.p;

    if law.count != CountLaw::Fixed(2) {
        anyhow::bail!(
            "sample-cascade addresses cylinder cells by binary paths and requires a fixed \
             offspring count of 2"
        );
    }
    let cells = 1u64 << p;
    let projected = reps * cells * cfg.generations.len() as u64;
    if projected > MAX_CELL_ROWS {
        anyhow::bail!(
            "the per-cell table would hold {projected} rows (replicates x 2^p x generations); \
             the cap is {MAX_CELL_ROWS} — lower replicates, p, or the generation count"
        );
    }

    let mut out = RunOutput::new("sample-cascade", cfg)?;
    for w in &v.warnings {
        out.warn(w.clone());
    }

    for &n in &cfg.generations {
        eprintln!(
            "sampling {} cascade replicates at n = {n}, depth p = {p}, {} beta value(s)",
            reps,
            cfg.betas.len()
        );
        struct Replicate {
            derivative: Vec<f64>,
            gibbs: Vec<Vec<f64>>,
            negative_fraction: f64,
        }
        let rows: Vec<Replicate> = farm.run(reps, |i| {
            let key = StreamKey::root(seed)
                .child(tags::SIM_REPLICATE)
                .child(i)
                .child(tags::SIM_ATTEMPT)
                .child(0);
            let derivative = derivative_masses(law, n, p, key)?;
            let mut gibbs = Vec::with_capacity(cfg.betas.len());
            for &beta in &cfg.betas {
                gibbs.push(cascade_cylinder_masses(law, n, beta, p, key)?.values);
            }
            Ok(Replicate {
                negative_fraction: derivative.negative_fraction(),
                derivative: derivative.values,
                gibbs,
            })
        })?;

        // Per-cell table.
        let mut columns = vec![
            "replicate".to_string(),
            "cell".into(),
            "left".into(),
            "right".into(),
            "derivative_mass".into(),
        ];
        for &b in &cfg.betas {
            columns.push(format!("gibbs_mass_{}", slug(b)));
        }
        let column_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
        let width = cells as f64;
        let csv_rows = rows.iter().enumerate().flat_map(|(i, r)| {
            (0..cells as usize).map(move |c| {
                let mut s = format!(
                    "{i},{c},{},{},{}",
                    c as f64 / width,
                    (c + 1) as f64 / width,
                    r.derivative[c]
                );
                for g in &r.gibbs {
                    s.push_str(&format!(",{}", g[c]));
                }
                s
            })
        });
        out.write_csv(&format!("cascade_cells_n{n}.csv"), &column_refs, csv_rows)?;

        // Negative-cell fraction of the derivative measure.
        let fractions: Vec<f64> = rows.iter().map(|r| r.negative_fraction).collect();
        let (neg_mean, neg_se) = mean_and_se(&fractions);
        let mut report = scalar_report(
            "mean_negative_cell_fraction",
            neg_mean,
            None,
            vec![reps as usize],
            vec![seed],
            cfg.level,
        );
        report
            .metadata
            .insert("standard_error".into(), format!("{neg_se}"));
        report.metadata.insert("n".into(), format!("{n}"));
        out.push(format!("derivative_negativity_n{n}"), report);

        // Ranked normalized Gibbs weights per beta.
        for (bij, &beta) in cfg.betas.iter().enumerate() {
            let bslug = slug(beta);
            let mut largest = Vec::new();
            let mut prs = Vec::new();
            let mut ranked_rows = Vec::new();
            let mut extinct = 0usize;
            for (i, r) in rows.iter().enumerate() {
                let masses = brw_core::cascade::CylinderMasses {
                    depth: p,
                    values: r.gibbs[bij].clone(),
                    kind: brw_core::cascade::MeasureKind::Gibbs { beta },
                };
                match gibbs_normalize(&masses) {
                    Ok(view) => {
                        largest.push(view.ranked[0]);
                        prs.push(view.participation_ratio);
                        for (rank, w) in view.ranked.iter().take(MAX_RANKS).enumerate() {
                            ranked_rows.push(format!("{i},{rank},{w}"));
                        }
                    }
                    Err(_) => extinct += 1,
                }
            }
            if extinct > 0 {
                out.warn(format!(
                    "{extinct} replicate(s) carried zero mass at n = {n}, beta = {beta} and were \
                     excluded from the ranked-weight table"
                ));
            }
            out.write_csv(
                &format!("ranked_weights_n{n}_beta{bslug}.csv"),
                &["replicate", "rank", "weight"],
                ranked_rows,
            )?;
            out.write_ecdf(
                &format!("ecdf_largest_weight_n{n}_beta{bslug}.csv"),
                "largest_normalized_weight",
                &largest,
            )?;
            let (pr_mean, pr_se) = mean_and_se(&prs);
            let mut pr_report = scalar_report(
                "mean_cell_pr",
                pr_mean,
                None,
                vec![prs.len()],
                vec![seed],
                cfg.level,
            );
            pr_report
                .metadata
                .insert("standard_error".into(), format!("{pr_se}"));
            pr_report.metadata.insert("beta".into(), format!("{beta}"));
            pr_report.metadata.insert("n".into(), format!("{n}"));
            out.push(format!("gibbs_cell_pr_n{n}_beta{bslug}"), pr_report);
        }
    }

    out.finish()
}
