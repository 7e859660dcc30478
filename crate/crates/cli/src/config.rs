//! Experiment configuration: a single TOML file, validated up front.
//!
//! The seed is mandatory — there is no wall-clock default, so every run is
//! reproducible from its config file alone. The worker count lives in the
//! config and is embedded verbatim in every output; the `BRW_WORKERS`
//! environment variable overrides only the size of the runtime thread pool,
//! never the embedded value, so reruns with different parallelism produce
//! byte-identical artifacts.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use brw_core::model::{CountLaw, Displacement, OffspringLaw};
use serde::{Deserialize, Serialize};

/// Offspring-count part of the law specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CountSpec {
    /// Exactly `value` children per particle.
    Fixed { value: u32 },
    /// Poisson-distributed child count.
    Poisson { mean: f64 },
    /// Explicit probability vector over counts `0..len`.
    Explicit { probabilities: Vec<f64> },
}

/// Displacement part of the law specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DisplacementSpec {
    Gaussian { mean: f64, variance: f64 },
    ShiftedExponential { rate: f64, shift: f64 },
    Uniform { lo: f64, hi: f64 },
    Degenerate { value: f64 },
}

/// Law specification: family, parameters, and whether to apply the boundary
/// normalization before running.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    pub count: CountSpec,
    pub displacement: DisplacementSpec,
    /// Apply `normalize_to_boundary` to the given family first.
    #[serde(default)]
    pub normalize: bool,
}

/// Pass/fail thresholds for the asserted checks. The defaults are the
/// calibrated acceptance values; set `diagnostic_only` to turn every check
/// into a report-only diagnostic.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Assertions {
    /// verify-wbeta: KS bound at the largest generation.
    pub max_final_ks: f64,
    /// verify-wbeta: require the KS sequence to decrease strictly in n.
    pub require_monotone_ks: bool,
    /// verify-wbeta: |hill alpha - 1/beta| bound at the largest generation.
    pub max_hill_error: f64,
    /// verify-star: KS bound for the subordinated-recursion identity.
    pub max_ks: f64,
    /// verify-gibbs: KS bound for the largest normalized weight.
    pub max_weight_ks: f64,
    /// verify-gibbs: KS bound for the rescaled I_0 mass.
    pub max_spatial_ks: f64,
    /// verify-gibbs: bound on |mean atom participation ratio - (1 - 1/beta)|.
    pub max_pr_error: f64,
    /// verify-min: KS bound between consecutive recentered minima.
    pub max_pair_ks: f64,
    /// Report everything, assert nothing.
    pub diagnostic_only: bool,
}

impl Default for Assertions {
    fn default() -> Self {
        Assertions {
            max_final_ks: 0.05,
            require_monotone_ks: true,
            max_hill_error: 0.15,
            max_ks: 0.02,
            max_weight_ks: 0.05,
            max_spatial_ks: 0.05,
            max_pr_error: 0.05,
            max_pair_ks: 0.1,
            diagnostic_only: false,
        }
    }
}

fn default_workers() -> usize {
    8
}
fn default_level() -> f64 {
    0.05
}
fn default_m() -> u32 {
    20
}
fn default_replicates() -> u64 {
    10_000
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_delta() -> f64 {
    1.5
}
fn default_permutations() -> u32 {
    200
}

/// The experiment configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional experiment name, echoed in reports.
    #[serde(default)]
    pub name: Option<String>,
    /// Master seed; required so runs are reproducible by construction.
    pub seed: u64,
    /// Worker count recorded in outputs. `BRW_WORKERS` overrides the actual
    /// pool size at runtime without touching outputs.
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Significance level for permutation p-values.
    #[serde(default = "default_level")]
    pub level: f64,
    /// Generation at which the derivative-martingale proxy is sampled.
    #[serde(default = "default_m")]
    pub m: u32,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    /// Inverse temperatures; limit-law experiments require every entry > 1.
    #[serde(default)]
    pub betas: Vec<f64>,
    /// Walk horizons, ascending.
    #[serde(default)]
    pub generations: Vec<u32>,
    /// Cylinder depth for measure-valued experiments.
    #[serde(default)]
    pub p: u32,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Redraw extinct replicates (rejection) instead of keeping them.
    #[serde(default)]
    pub condition_on_survival: bool,
    /// Abort a replicate whose live front exceeds this many particles.
    #[serde(default)]
    pub particle_cap: Option<u64>,
    /// Moment exponent for assumption checks (check-law).
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Permutation count for KS p-values.
    #[serde(default = "default_permutations")]
    pub permutations: u32,
    #[serde(default)]
    pub assertions: Assertions,
    pub law: LawSpec,
}

/// Which pipeline the config is being validated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    VerifyWbeta,
    VerifyStar,
    VerifyGibbs,
    VerifyMin,
    SampleCascade,
    CheckLaw,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::VerifyWbeta => "verify-wbeta",
            Experiment::VerifyStar => "verify-star",
            Experiment::VerifyGibbs => "verify-gibbs",
            Experiment::VerifyMin => "verify-min",
            Experiment::SampleCascade => "sample-cascade",
            Experiment::CheckLaw => "check-law",
        }
    }

    /// Experiments that compare against the limit law require beta > 1.
    fn needs_low_temperature(self) -> bool {
        matches!(
            self,
            Experiment::VerifyWbeta | Experiment::VerifyStar | Experiment::VerifyGibbs
        )
    }

    fn needs_generations(self) -> bool {
        matches!(
            self,
            Experiment::VerifyWbeta
                | Experiment::VerifyGibbs
                | Experiment::VerifyMin
                | Experiment::SampleCascade
        )
    }
}

/// A parsed, validated configuration: the raw file content (for embedding in
/// outputs) plus the constructed offspring law and any validation warnings.
#[derive(Debug, Clone)]
pub struct ValidatedConfig {
    pub raw: ExperimentConfig,
    /// The law actually simulated (normalized if the spec asked for it).
    pub law: OffspringLaw,
    /// The law as given, before normalization.
    pub law_as_given: OffspringLaw,
    pub warnings: Vec<String>,
}

impl LawSpec {
    pub fn build(&self) -> Result<(OffspringLaw, OffspringLaw)> {
        let count = match &self.count {
            CountSpec::Fixed { value } => CountLaw::Fixed(*value),
            CountSpec::Poisson { mean } => CountLaw::Poisson { mean: *mean },
            CountSpec::Explicit { probabilities } => CountLaw::Explicit(probabilities.clone()),
        };
        let displacement = match self.displacement {
            DisplacementSpec::Gaussian { mean, variance } => {
                Displacement::Gaussian { mean, variance }
            }
            DisplacementSpec::ShiftedExponential { rate, shift } => {
                Displacement::ShiftedExponential { rate, shift }
            }
            DisplacementSpec::Uniform { lo, hi } => Displacement::Uniform { lo, hi },
            DisplacementSpec::Degenerate { value } => Displacement::Degenerate { value },
        };
        let as_given =
            OffspringLaw::new(count, displacement).context("invalid law specification")?;
        let effective = if self.normalize {
            as_given
                .normalize_to_boundary()
                .context("boundary normalization failed")?
        } else {
            as_given.clone()
        };
        Ok((effective, as_given))
    }
}

/// How far from psi(1) = psi'(1) = 0 a law may sit and still count as
/// boundary-normalized. Newton lands around 1e-12; hand-entered boundary
/// parameters are exact to rounding.
const BOUNDARY_TOLERANCE: f64 = 1e-6;

pub fn load(path: &Path, experiment: Experiment) -> Result<ValidatedConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let raw: ExperimentConfig = toml::from_str(&text)
        .with_context(|| format!("cannot parse config file {}", path.display()))?;
    validate(raw, experiment)
}

pub fn validate(raw: ExperimentConfig, experiment: Experiment) -> Result<ValidatedConfig> {
    let mut warnings = Vec::new();

    if !(raw.level > 0.0 && raw.level < 1.0) {
        bail!("level must lie strictly between 0 and 1; got {}", raw.level);
    }
    if raw.workers == 0 || raw.workers > 512 {
        bail!("workers must lie in 1..=512; got {}", raw.workers);
    }
    if raw.replicates == 0 {
        bail!("replicates must be positive");
    }
    if raw.m > 26 {
        bail!(
            "m = {} would require 2^{} tree nodes per proxy sample; the supported range is 0..=26",
            raw.m,
            raw.m + 1
        );
    }
    if raw.permutations == 0 {
        bail!("permutations must be positive");
    }
    for &b in &raw.betas {
        if !b.is_finite() || b <= 0.0 {
            bail!("betas must be finite and positive; got {b}");
        }
    }
    if experiment.needs_low_temperature() {
        if raw.betas.is_empty() {
            bail!("{} requires at least one beta", experiment.name());
        }
        for &b in &raw.betas {
            if b <= 1.0 {
                bail!(
                    "{} is a limit-law experiment and requires beta > 1; got beta = {b}",
                    experiment.name()
                );
            }
        }
    }
    if experiment.needs_generations() {
        if raw.generations.is_empty() {
            bail!("{} requires a nonempty generations list", experiment.name());
        }
        if raw.generations.windows(2).any(|w| w[0] >= w[1]) {
            bail!("generations must be strictly ascending");
        }
        let max_n = match experiment {
            // verify-min simulates at 2n as well.
            Experiment::VerifyMin => 2 * raw.generations.iter().max().copied().unwrap_or(0),
            _ => raw.generations.iter().max().copied().unwrap_or(0),
        };
        if max_n > 26 {
            bail!("largest simulated generation is {max_n}; the supported range is 0..=26");
        }
    }
    if matches!(
        experiment,
        Experiment::VerifyGibbs | Experiment::SampleCascade
    ) {
        let min_n = raw.generations.iter().min().copied().unwrap_or(0);
        if raw.p > min_n {
            bail!(
                "cylinder depth p = {} exceeds the smallest generation {}",
                raw.p,
                min_n
            );
        }
    }

    if raw.replicates < 30 {
        warnings.push(format!(
            "insufficient sample: replicates = {} is below 30; reports are diagnostic only",
            raw.replicates
        ));
    }

    let (law, law_as_given) = raw.law.build()?;

    // Limit-law pipelines are statements about boundary-normalized laws.
    if experiment.needs_low_temperature() || experiment == Experiment::VerifyMin {
        let psi1 = law
            .psi(1.0)
            .context("psi(1) is not finite for this law")?;
        let (psi1_prime, _) = law
            .psi_derivatives(1.0)
            .context("psi'(1) is not finite for this law")?;
        if psi1.abs() > BOUNDARY_TOLERANCE || psi1_prime.abs() > BOUNDARY_TOLERANCE {
            bail!(
                "{} requires a boundary-normalized law (psi(1) = psi'(1) = 0); \
                 got psi(1) = {psi1:.3e}, psi'(1) = {psi1_prime:.3e}. \
                 Set law.normalize = true to normalize the family first.",
                experiment.name()
            );
        }
    }

    Ok(ValidatedConfig {
        raw,
        law,
        law_as_given,
        warnings,
    })
}

/// Resolve the runtime worker count: the `BRW_WORKERS` environment variable
/// overrides the configured value (and only that — outputs embed the config).
pub fn runtime_workers(cfg: &ExperimentConfig) -> Result<usize> {
    match std::env::var("BRW_WORKERS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("BRW_WORKERS must be a positive integer; got {v:?}"))?;
            if n == 0 || n > 512 {
                bail!("BRW_WORKERS must lie in 1..=512; got {n}");
            }
            Ok(n)
        }
        Err(std::env::VarError::NotPresent) => Ok(cfg.workers),
        Err(e) => Err(e).context("BRW_WORKERS is not valid unicode"),
    }
}
