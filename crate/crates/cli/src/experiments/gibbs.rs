//! verify-gibbs: the Gibbs measure against its atomic limit.
//!
//! Finite side: depth-`p` cylinder masses of the generation-`n` Gibbs
//! measure, one walk per replicate (same streams as the plain functional
//! simulator, so at `p = 0` the single cell is that replicate's
//! `W_{n,beta}` exactly). Limit side: the limiting measure's cell
//! decomposition — derivative-measure cell weights at depth `p`, each fed
//! through an independent stable subordinator.
//!
//! Asserted per (n, beta):
//! * KS between largest normalized cell weights (finite vs limit) under
//!   `assertions.max_weight_ks`;
//! * KS between rescaled raw masses of the left half-interval `I_0`
//!   (finite, times `n^{(3/2)beta}`) and the limit side scaled by a
//!   median-ratio constant, under `assertions.max_spatial_ks`; at `p = 0`
//!   the half-interval degenerates to the total mass and this becomes the
//!   partition-function check again.
//!
//! Asserted per beta: the mean squared-weight sum over the limit measure's
//! *atoms* (recovered from the subordinator's Poisson jump decomposition
//! with a scale-aware cutoff) within `assertions.max_pr_error` of
//! `1 - 1/beta`, the ranked-weight second moment of the limiting atomic
//! law. Cell-level squared-weight sums are reported unasserted on both
//! sides: cells cluster many atoms at any finite depth, so the cell
//! statistic exceeds the atom value and only the finite-vs-limit gap is
//! informative.

use anyhow::Result;
use brw_core::cascade::{cascade_cylinder_masses, limit_measure_sample};
use brw_core::model::CountLaw;
use brw_core::rng::{tags, StreamKey};
use brw_core::stable::{poisson_atoms, StableParams};
use brw_core::stats::{estimate_scale, ks_statistic, ks_two_sample};

use crate::config::ValidatedConfig;
use crate::farm::Farm;
use crate::output::{row, slug, RunOutput};

use super::{assert_tolerance, mean_and_se, scalar_report, streams};

/// Relative atom-size cutoff: atoms below `ATOM_CUTOFF * tau^beta` (the
/// subordinator's scale over total time `tau`) are folded into the
/// small-jump mean. Keeps the expected atom count moderate and
/// tau-independent.
const ATOM_CUTOFF: f64 = 1e-4;

struct SideRow {
    total: f64,
    largest: f64,
    i0: f64,
    cell_pr: f64,
    alive: bool,
}

struct AtomRow {
    pr: f64,
    count: u64,
    valid: bool,
}

fn summarize(values: &[f64], p: u32) -> SideRow {
    let total: f64 = values.iter().sum();
    let i0 = if p == 0 {
        total
    } else {
        values[..values.len() / 2].iter().sum()
    };
    if total > 0.0 {
        let largest = values.iter().fold(0.0f64, |a, &v| a.max(v)) / total;
        let cell_pr = values.iter().map(|v| (v / total) * (v / total)).sum();
        SideRow {
            total,
            largest,
            i0,
            cell_pr,
            alive: true,
        }
    } else {
        SideRow {
            total,
            largest: f64::NAN,
            i0,
            cell_pr: f64::NAN,
            alive: false,
        }
    }
}

pub fn run(v: &ValidatedConfig, farm: &Farm) -> Result<bool> {
    let cfg = &v.raw;
    let law = &v.law;
    let seed = cfg.seed;
    let reps = cfg.replicates;
    let (m, p) = (cfg.m, cfg.p);
    let diagnostic = cfg.assertions.diagnostic_only;

    if law.count != CountLaw::Fixed(2) {
        anyhow::bail!(
            "verify-gibbs addresses cylinder cells by binary paths and requires a fixed \
             offspring count of 2"
        );
    }

    let mut out = RunOutput::new("verify-gibbs", cfg)?;
    for w in &v.warnings {
        out.warn(w.clone());
    }

    for (bi, &beta) in cfg.betas.iter().enumerate() {
        let params = StableParams::from_beta(beta)?;
        let bslug = slug(beta);
        let target_pr = 1.0 - 1.0 / beta;

        // Limit side once per beta: cells, then the atom decomposition.
        eprintln!(
            "sampling {} limit-measure replicates (beta = {beta}, p = {p}, m = {m})",
            reps
        );
        let limit_rows: Vec<(SideRow, AtomRow)> = farm.run(reps, |i| {
            let sample = limit_measure_sample(
                law,
                beta,
                p,
                m,
                StreamKey::root(seed)
                    .child(streams::LIMIT_SIDE)
                    .child(bi as u64)
                    .child(i),
            )?;
            let side = summarize(&sample.masses, p);
            let tau: f64 = sample.times.iter().sum();
            let atoms = if tau > 0.0 {
                let base: Vec<(u64, f64)> = sample
                    .times
                    .iter()
                    .enumerate()
                    .map(|(c, &t)| (c as u64, t))
                    .collect();
                let z_min = ATOM_CUTOFF * tau.powf(beta);
                let mut rng = StreamKey::root(seed)
                    .child(streams::ATOM_CUT)
                    .child(bi as u64)
                    .child(i)
                    .rng();
                let decomposition = poisson_atoms(&params, &base, z_min, &mut rng)?;
                let sum: f64 = decomposition.atoms.iter().map(|a| a.z).sum();
                let sum_sq: f64 = decomposition.atoms.iter().map(|a| a.z * a.z).sum();
                let mass = sum + decomposition.small_jump_mean;
                if mass > 0.0 {
                    AtomRow {
                        pr: sum_sq / (mass * mass),
                        count: decomposition.atoms.len() as u64,
                        valid: true,
                    }
                } else {
                    AtomRow {
                        pr: f64::NAN,
                        count: 0,
                        valid: false,
                    }
                }
            } else {
                AtomRow {
                    pr: f64::NAN,
                    count: 0,
                    valid: false,
                }
            };
            Ok((side, atoms))
        })?;

        let limit_alive = limit_rows.iter().filter(|(s, _)| s.alive).count();
        let limit_largest: Vec<f64> = limit_rows
            .iter()
            .filter(|(s, _)| s.alive)
            .map(|(s, _)| s.largest)
            .collect();
        let limit_i0: Vec<f64> = limit_rows.iter().map(|(s, _)| s.i0).collect();
        let limit_cell_pr: Vec<f64> = limit_rows
            .iter()
            .filter(|(s, _)| s.alive)
            .map(|(s, _)| s.cell_pr)
            .collect();
        let atom_prs: Vec<f64> = limit_rows
            .iter()
            .filter(|(_, a)| a.valid)
            .map(|(_, a)| a.pr)
            .collect();
        let mean_atoms = limit_rows.iter().map(|(_, a)| a.count as f64).sum::<f64>()
            / reps.max(1) as f64;
        out.set_extra(
            &format!("limit_degenerate_count_beta{bslug}"),
            reps as usize - limit_alive,
        );
        out.set_extra(&format!("mean_atom_count_beta{bslug}"), mean_atoms);
        out.write_ecdf(
            &format!("ecdf_gibbs_largest_limit_beta{bslug}.csv"),
            "largest_normalized_weight",
            &limit_largest,
        )?;

        // Atom-level squared-weight sum against the ranked-weight law.
        let (pr_mean, pr_se) = mean_and_se(&atom_prs);
        let mut pr_report = scalar_report(
            "abs_atom_pr_error",
            (pr_mean - target_pr).abs(),
            if diagnostic {
                None
            } else {
                Some(cfg.assertions.max_pr_error)
            },
            vec![atom_prs.len()],
            vec![seed],
            cfg.level,
        );
        pr_report
            .metadata
            .insert("mean_atom_pr".into(), format!("{pr_mean}"));
        pr_report
            .metadata
            .insert("target_pr".into(), format!("{target_pr}"));
        pr_report
            .metadata
            .insert("standard_error".into(), format!("{pr_se}"));
        pr_report
            .metadata
            .insert("mean_atom_count".into(), format!("{mean_atoms:.2}"));
        pr_report
            .metadata
            .insert("cutoff_rule".into(), format!("{ATOM_CUTOFF} * tau^beta"));
        out.push(format!("gibbs_atom_pr_beta{bslug}"), pr_report);

        for &n in &cfg.generations {
            let rescale = f64::from(n).powf(1.5 * beta);
            eprintln!(
                "sampling {} finite Gibbs replicates (n = {n}, beta = {beta}, p = {p})",
                reps
            );
            let finite_rows: Vec<SideRow> = farm.run(reps, |i| {
                let key = StreamKey::root(seed)
                    .child(tags::SIM_REPLICATE)
                    .child(i)
                    .child(tags::SIM_ATTEMPT)
                    .child(0);
                let masses = cascade_cylinder_masses(law, n, beta, p, key)?;
                Ok(summarize(&masses.values, p))
            })?;

            let finite_alive = finite_rows.iter().filter(|s| s.alive).count();
            let finite_largest: Vec<f64> = finite_rows
                .iter()
                .filter(|s| s.alive)
                .map(|s| s.largest)
                .collect();
            let finite_i0: Vec<f64> = finite_rows.iter().map(|s| s.i0 * rescale).collect();
            let finite_cell_pr: Vec<f64> = finite_rows
                .iter()
                .filter(|s| s.alive)
                .map(|s| s.cell_pr)
                .collect();
            out.set_extra(
                &format!("finite_extinct_count_n{n}_beta{bslug}"),
                reps as usize - finite_alive,
            );

            // Largest normalized weight: finite vs limit.
            let mut largest_report = ks_two_sample(
                &finite_largest,
                &limit_largest,
                cfg.permutations,
                StreamKey::root(seed)
                    .child(tags::KS_PERMUTATION)
                    .child(bi as u64)
                    .child(u64::from(n))
                    .child(0),
                cfg.level,
            )?;
            largest_report
                .metadata
                .insert("beta".into(), format!("{beta}"));
            largest_report.metadata.insert("n".into(), format!("{n}"));
            largest_report.metadata.insert("p".into(), format!("{p}"));
            assert_tolerance(
                &mut largest_report,
                cfg.assertions.max_weight_ks,
                diagnostic,
            );
            out.push(
                format!("gibbs_largest_weight_ks_n{n}_beta{bslug}"),
                largest_report,
            );

            // Spatial mass on the left half-interval, raw and rescaled.
            let scale = estimate_scale(
                &finite_i0,
                &limit_i0,
                200,
                StreamKey::root(seed)
                    .child(tags::BOOTSTRAP)
                    .child(bi as u64)
                    .child(u64::from(n)),
            )?;
            let reference: Vec<f64> = limit_i0.iter().map(|x| scale.c_hat * x).collect();
            let mut spatial_report = ks_two_sample(
                &finite_i0,
                &reference,
                cfg.permutations,
                StreamKey::root(seed)
                    .child(tags::KS_PERMUTATION)
                    .child(bi as u64)
                    .child(u64::from(n))
                    .child(1),
                cfg.level,
            )?;
            spatial_report
                .metadata
                .insert("beta".into(), format!("{beta}"));
            spatial_report.metadata.insert("n".into(), format!("{n}"));
            spatial_report
                .metadata
                .insert("c_hat".into(), format!("{}", scale.c_hat));
            spatial_report.metadata.insert(
                "c_hat_ci".into(),
                format!("[{}, {}]", scale.ci_low, scale.ci_high),
            );
            if p == 0 {
                spatial_report.metadata.insert(
                    "note".into(),
                    "p = 0: the half-interval degenerates to the total mass".into(),
                );
            }
            assert_tolerance(
                &mut spatial_report,
                cfg.assertions.max_spatial_ks,
                diagnostic,
            );
            out.push(
                format!("gibbs_spatial_i0_ks_n{n}_beta{bslug}"),
                spatial_report,
            );
            out.set_extra(&format!("c_hat_spatial_n{n}_beta{bslug}"), scale.c_hat);

            // Cell-level squared-weight sums: gap only, never asserted.
            let (fin_pr_mean, _) = mean_and_se(&finite_cell_pr);
            let (lim_pr_mean, _) = mean_and_se(&limit_cell_pr);
            let mut gap_report = scalar_report(
                "abs_cell_pr_gap",
                (fin_pr_mean - lim_pr_mean).abs(),
                None,
                vec![finite_cell_pr.len(), limit_cell_pr.len()],
                vec![seed],
                cfg.level,
            );
            gap_report
                .metadata
                .insert("finite_cell_pr_mean".into(), format!("{fin_pr_mean}"));
            gap_report
                .metadata
                .insert("limit_cell_pr_mean".into(), format!("{lim_pr_mean}"));
            gap_report.metadata.insert(
                "meaning".into(),
                "depth-p cells cluster many atoms; only the finite-vs-limit gap is informative"
                    .into(),
            );
            out.push(format!("gibbs_cell_pr_gap_n{n}_beta{bslug}"), gap_report);

            // Normalized I_0 fraction: diagnostic (identically 1 at p = 0).
            let fin_frac: Vec<f64> = finite_rows
                .iter()
                .filter(|s| s.alive)
                .map(|s| s.i0 / s.total)
                .collect();
            let lim_frac: Vec<f64> = limit_rows
                .iter()
                .filter(|(s, _)| s.alive)
                .map(|(s, _)| s.i0 / s.total)
                .collect();
            let frac_ks = ks_statistic(&fin_frac, &lim_frac)?;
            let frac_report = scalar_report(
                "ks_distance",
                frac_ks,
                None,
                vec![fin_frac.len(), lim_frac.len()],
                vec![seed],
                cfg.level,
            );
            out.push(format!("gibbs_i0_fraction_ks_n{n}_beta{bslug}"), frac_report);

            out.write_ecdf(
                &format!("ecdf_gibbs_largest_finite_n{n}_beta{bslug}.csv"),
                "largest_normalized_weight",
                &finite_largest,
            )?;
            out.write_ecdf(
                &format!("ecdf_gibbs_i0_finite_n{n}_beta{bslug}.csv"),
                "rescaled_i0_mass",
                &finite_i0,
            )?;
            out.write_ecdf(
                &format!("ecdf_gibbs_i0_reference_n{n}_beta{bslug}.csv"),
                "scaled_limit_i0_mass",
                &reference,
            )?;

            let csv_rows = (0..reps as usize).map(|i| {
                let f = &finite_rows[i];
                let (l, a) = &limit_rows[i];
                format!(
                    "{i},{},{}",
                    row(&[
                        f.total * rescale,
                        f.largest,
                        f.i0 * rescale,
                        f.cell_pr,
                        l.total,
                        l.largest,
                        l.i0,
                        l.cell_pr,
                        a.pr,
                    ]),
                    a.count
                )
            });
            out.write_csv(
                &format!("replicates_gibbs_n{n}_beta{bslug}.csv"),
                &[
                    "replicate",
                    "finite_total_rescaled",
                    "finite_largest_weight",
                    "finite_i0_rescaled",
                    "finite_cell_pr",
                    "limit_total",
                    "limit_largest_weight",
                    "limit_i0",
                    "limit_cell_pr",
                    "atom_pr",
                    "atom_count",
                ],
                csv_rows,
            )?;
        }
    }

    out.finish()
}
