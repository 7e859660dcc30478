//! One-sided stable laws and the subordinators they drive.
//!
//! Everything here is parameterized by an index `alpha` in `(0,1)` and
//! normalized so that the law `S` has Laplace transform
//! `E[e^{-theta S}] = e^{-theta^alpha}`. Under this normalization the
//! subordinator `T` with `T(1) =law S` has Levy measure
//! `nu(dz) = c_alpha z^{-1-alpha} dz` with `c_alpha = alpha / Gamma(1-alpha)`
//! ([`StableParams::levy_constant`]): integrating `1 - e^{-theta z}`
//! against it gives back `theta^alpha` exactly.
//!
//! Three views of the same object are exposed: exact sampling of `S` and of
//! `T(t) =law t^{1/alpha} S` (Kanter's trigonometric representation),
//! the atoms of `T`'s jump measure above a size cutoff spread over a
//! weighted partition ([`poisson_atoms`]), and the ranked relative jump
//! sizes of `T(1)` ([`pd_weights`]), whose squared sum has mean
//! `1 - alpha`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::Serialize;
use thiserror::Error;

use crate::kahan::KahanSum;

#[derive(Debug, Error)]
pub enum StableError {
    #[error("stable index alpha must lie in (0, 1); got {alpha}")]
    BadAlpha { alpha: f64 },
    #[error("inverse temperature beta must exceed 1; got {beta}")]
    BadBeta { beta: f64 },
    #[error("subordinator time must be nonnegative; got {t}")]
    NegativeTime { t: f64 },
    #[error("jump cutoff z_min must be positive and finite; got {z_min}")]
    BadCutoff { z_min: f64 },
    #[error("cell masses must be nonnegative and finite; got {mass}")]
    BadCellMass { mass: f64 },
    #[error("expected atom count {expected:.3e} exceeds the sampling budget")]
    AtomBudget { expected: f64 },
    #[error("ranked-weight count k must be at least 1")]
    EmptyRanking,
}

/// Index of a one-sided stable law, `alpha` in `(0,1)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StableParams {
    alpha: f64,
}

impl StableParams {
    pub fn new(alpha: f64) -> Result<Self, StableError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(StableError::BadAlpha { alpha });
        }
        Ok(StableParams { alpha })
    }

    /// Index `alpha = 1/beta` matching inverse temperature `beta > 1`.
    pub fn from_beta(beta: f64) -> Result<Self, StableError> {
        if !(beta > 1.0 && beta.is_finite()) {
            return Err(StableError::BadBeta { beta });
        }
        StableParams::new(1.0 / beta)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Constant `c_alpha = alpha / Gamma(1 - alpha)` of the Levy density
    /// `c_alpha z^{-1-alpha}`.
    pub fn levy_constant(&self) -> f64 {
        self.alpha / libm::tgamma(1.0 - self.alpha)
    }

    /// Exact Laplace transform `e^{-theta^alpha}` of `S`.
    pub fn laplace(&self, theta: f64) -> f64 {
        (-theta.powf(self.alpha)).exp()
    }
}

/// One draw of `S` with `E[e^{-theta S}] = e^{-theta^alpha}`, via the
/// trigonometric representation
/// `S = sin(alpha u) / sin(u)^{1/alpha} * (sin((1-alpha) u) / E)^{(1-alpha)/alpha}`
/// with `u ~ U(0, pi)` and `E ~ Exp(1)`.
pub fn sample_stable<R: Rng + ?Sized>(params: &StableParams, rng: &mut R) -> f64 {
    let a = params.alpha;
    // Clamp away from the endpoints where sin(u) vanishes; the excluded
    // sliver has probability ~1e-12 and no effect on any statistic.
    let u = (rng.random::<f64>() * std::f64::consts::PI).clamp(1e-12, std::f64::consts::PI - 1e-12);
    let e: f64 = rng.sample::<f64, _>(Exp1).max(1e-300);
    let head = (a * u).sin() / u.sin().powf(1.0 / a);
    let tail = (((1.0 - a) * u).sin() / e).powf((1.0 - a) / a);
    head * tail
}

/// One draw of the subordinator at time `t >= 0`:
/// `T(t) =law t^{1/alpha} S`, and `T(0) = 0` exactly.
pub fn subordinator_at<R: Rng + ?Sized>(
    params: &StableParams,
    t: f64,
    rng: &mut R,
) -> Result<f64, StableError> {
    // Negated on purpose: NaN must fail the check too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(t >= 0.0) {
        return Err(StableError::NegativeTime { t });
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(t.powf(1.0 / params.alpha) * sample_stable(params, rng))
}

/// One atom of the jump measure: size `z`, landed in cell `cell`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct JumpAtom {
    pub cell: u64,
    pub z: f64,
}

/// Atoms above a cutoff, plus the mean of what the cutoff discarded.
#[derive(Debug, Clone, Serialize)]
pub struct PoissonAtoms {
    pub atoms: Vec<JumpAtom>,
    /// Mean total size of the suppressed jumps below `z_min`:
    /// `W c_alpha z_min^{1-alpha} / (1-alpha)`.
    pub small_jump_mean: f64,
}

/// Cap on the expected atom count per call.
const MAX_EXPECTED_ATOMS: f64 = 1e8;

/// Sample the atoms of size `> z_min` of the subordinator's jump measure
/// run over a weighted family of cells.
///
/// `base` lists `(cell id, mass w >= 0)`; with `W = sum w`, the atom count
/// is `Poisson(W c_alpha z_min^{-alpha} / alpha)`, sizes are i.i.d. Pareto
/// `z = z_min U^{-1/alpha}`, and each atom lands in a cell with
/// probability proportional to its mass. Summing `z` per cell (plus the
/// reported small-jump mean, spread proportionally) reconstructs
/// `(T(c_1), T(c_1+c_2)-T(c_1), ...)` in law up to the cutoff truncation.
pub fn poisson_atoms<R: Rng + ?Sized>(
    params: &StableParams,
    base: &[(u64, f64)],
    z_min: f64,
    rng: &mut R,
) -> Result<PoissonAtoms, StableError> {
    if !(z_min > 0.0 && z_min.is_finite()) {
        return Err(StableError::BadCutoff { z_min });
    }
    let mut cdf = Vec::with_capacity(base.len());
    let mut total = KahanSum::default();
    for &(_, w) in base {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(StableError::BadCellMass { mass: w });
        }
        total.add(w);
        cdf.push(total.value());
    }
    let w_total = total.value();
    let a = params.alpha;
    let c = params.levy_constant();
    if w_total == 0.0 {
        return Ok(PoissonAtoms {
            atoms: Vec::new(),
            small_jump_mean: 0.0,
        });
    }
    let expected = w_total * c * z_min.powf(-a) / a;
    if expected > MAX_EXPECTED_ATOMS {
        return Err(StableError::AtomBudget { expected });
    }
    let count = if expected > 0.0 {
        Poisson::new(expected).expect("positive finite mean").sample(rng) as u64
    } else {
        0
    };
    let mut atoms = Vec::with_capacity(count as usize);
    for _ in 0..count {
        // U in (0, 1] keeps the Pareto draw finite.
        let u = 1.0 - rng.random::<f64>();
        let z = z_min * u.powf(-1.0 / a);
        let x = rng.random::<f64>() * w_total;
        let idx = cdf.partition_point(|&acc| acc <= x).min(base.len() - 1);
        atoms.push(JumpAtom {
            cell: base[idx].0,
            z,
        });
    }
    Ok(PoissonAtoms {
        atoms,
        small_jump_mean: w_total * c * z_min.powf(1.0 - a) / (1.0 - a),
    })
}

/// Ranked relative jump sizes of `T(1)`.
#[derive(Debug, Clone, Serialize)]
pub struct PdWeights {
    /// The `k` largest weights, decreasing, each in `(0,1)`.
    pub weights: Vec<f64>,
    /// Mass fraction carried by everything below rank `k`.
    pub residual: f64,
    /// Standard deviation of the *simulation truncation* (the jumps beyond
    /// the internally simulated rank, whose mean is folded into the
    /// normalization) as a fraction of the total: the resolution limit of
    /// the sample.
    pub tail_std_fraction: f64,
}

/// Sample the `k` largest normalized jumps of `T(1)`.
///
/// The ranked jump sizes are `z_i = (c_alpha / (alpha G_i))^{1/alpha}` with
/// `G_1 < G_2 < ...` the arrival times of a unit Poisson process; weights
/// are `z_i / T(1)`. Internally `K = max(10k, 10^4)` jumps are simulated
/// and the remainder's conditional mean
/// `(c/alpha)^{1/alpha} G_K^{1-1/alpha} alpha/(1-alpha)` is added to the
/// normalization, so the weights are biased by at most the reported
/// `tail_std_fraction`. The squared weights summed over all ranks have
/// mean `1 - alpha`.
pub fn pd_weights<R: Rng + ?Sized>(
    params: &StableParams,
    k: usize,
    rng: &mut R,
) -> Result<PdWeights, StableError> {
    if k == 0 {
        return Err(StableError::EmptyRanking);
    }
    let a = params.alpha;
    let big_k = usize::max(10 * k, 10_000);
    let scale = (params.levy_constant() / a).powf(1.0 / a);
    let mut gamma = 0.0f64;
    let mut sum = KahanSum::default();
    let mut top = Vec::with_capacity(k);
    for i in 0..big_k {
        gamma += rng.sample::<f64, _>(Exp1);
        let z = scale * gamma.powf(-1.0 / a);
        sum.add(z);
        if i < k {
            top.push(z);
        }
    }
    // Conditional mean and variance of the jumps beyond rank K, given G_K:
    // further arrivals are a unit Poisson process on (G_K, inf).
    let tail_mean = scale * a / (1.0 - a) * gamma.powf(1.0 - 1.0 / a);
    let tail_var = scale * scale * gamma.powf(1.0 - 2.0 / a) / (2.0 / a - 1.0);
    let denom = sum.value() + tail_mean;
    let weights: Vec<f64> = top.iter().map(|z| z / denom).collect();
    let residual = 1.0 - weights.iter().sum::<f64>();
    Ok(PdWeights {
        weights,
        residual,
        tail_std_fraction: tail_var.sqrt() / denom,
    })
}
