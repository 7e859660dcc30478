//! Browser demo: interactive pictures of the boundary-case cascade.
//!
//! Everything here runs the *boundary Gaussian* law (two children, Gaussian
//! steps with mean = variance = 2 ln 2), the canonical law where the
//! additive martingale dies and the limit objects of the core library take
//! over. The exports return plain `Float64Array`-compatible vectors so the
//! page needs no JSON plumbing:
//!
//! * [`gibbs_profile`] — one finite-`n` Gibbs measure on dyadic cells,
//!   normalized: the polymer's landscape at inverse temperature `beta`.
//! * [`limit_profile`] — one sample of the limiting measure on the same
//!   cells: stable subordinator increments run over the derivative
//!   measure. Visually indistinguishable from a large-`n` Gibbs profile;
//!   that is the point.
//! * [`derivative_profile`] — the signed derivative-measure cells backing
//!   the limit (raw, unnormalized, so the rare negative cell is visible).
//! * [`ranked_weights`] — the ranked atom sizes of the normalized stable
//!   subordinator at index `alpha`, the weight sequence the Gibbs measure's
//!   atoms converge to with `alpha = 1/beta`.
//!
//! Invalid parameters return an empty vector rather than trapping; the
//! page treats that as "pick a different seed". Each export draws from its
//! own deterministic stream, so a given (seed, parameters) pair always
//! paints the same picture.

use brw_core::cascade::{
    cascade_cylinder_masses, derivative_masses, gibbs_normalize, limit_measure_sample,
};
use brw_core::model::{CountLaw, Displacement, OffspringLaw};
use brw_core::rng::StreamKey;
use brw_core::stable::{pd_weights, StableParams};
use wasm_bindgen::prelude::wasm_bindgen;

/// Stream namespaces for the demo's draws (disjoint from the core tags).
mod streams {
    pub const GIBBS: u64 = 201;
    pub const LIMIT: u64 = 202;
    pub const DERIVATIVE: u64 = 203;
    pub const RANKED: u64 = 204;
}

/// Hard caps keeping a draw comfortably inside one animation frame.
const MAX_N: u32 = 22;
const MAX_DEPTH: u32 = 10;
const MAX_M: u32 = 22;
const MAX_RANKS: u32 = 512;

fn boundary_gaussian() -> OffspringLaw {
    let v = 2.0 * std::f64::consts::LN_2;
    OffspringLaw::new(
        CountLaw::Fixed(2),
        Displacement::Gaussian {
            mean: v,
            variance: v,
        },
    )
    .expect("fixed boundary law is valid")
}

/// Normalized Gibbs cell probabilities of one generation-`n` replicate on
/// `2^depth` dyadic cells. Empty if the parameters are out of range or the
/// replicate carries no mass.
#[wasm_bindgen]
pub fn gibbs_profile(seed: u32, n: u32, beta: f64, depth: u32) -> Vec<f64> {
    if n == 0 || n > MAX_N || depth > n.min(MAX_DEPTH) || !(beta > 0.0 && beta.is_finite()) {
        return Vec::new();
    }
    let key = StreamKey::root(u64::from(seed)).child(streams::GIBBS);
    let Ok(masses) = cascade_cylinder_masses(&boundary_gaussian(), n, beta, depth, key) else {
        return Vec::new();
    };
    match gibbs_normalize(&masses) {
        Ok(view) => view.probabilities,
        Err(_) => Vec::new(),
    }
}

/// One sample of the limiting measure on `2^depth` cells, normalized to a
/// probability vector. `m` is the depth of the derivative proxy behind
/// each cell; 14 is plenty for pictures.
#[wasm_bindgen]
pub fn limit_profile(seed: u32, beta: f64, depth: u32, m: u32) -> Vec<f64> {
    if depth > MAX_DEPTH || m == 0 || m > MAX_M || !(beta > 1.0 && beta.is_finite()) {
        return Vec::new();
    }
    let key = StreamKey::root(u64::from(seed)).child(streams::LIMIT);
    let Ok(sample) = limit_measure_sample(&boundary_gaussian(), beta, depth, m, key) else {
        return Vec::new();
    };
    let total: f64 = sample.masses.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    sample.masses.iter().map(|x| x / total).collect()
}

/// Raw derivative-measure cell masses of one generation-`n` replicate
/// (signed: the occasional negative cell at small `n` is part of the
/// story, so nothing is clipped here).
#[wasm_bindgen]
pub fn derivative_profile(seed: u32, n: u32, depth: u32) -> Vec<f64> {
    if n == 0 || n > MAX_N || depth > n.min(MAX_DEPTH) {
        return Vec::new();
    }
    let key = StreamKey::root(u64::from(seed)).child(streams::DERIVATIVE);
    match derivative_masses(&boundary_gaussian(), n, depth, key) {
        Ok(masses) => masses.values,
        Err(_) => Vec::new(),
    }
}

/// The `k` largest normalized jumps of a stable subordinator at time one,
/// decreasing. With `alpha = 1/beta` these are the limiting ranked Gibbs
/// weights.
#[wasm_bindgen]
pub fn ranked_weights(seed: u32, alpha: f64, k: u32) -> Vec<f64> {
    if k == 0 || k > MAX_RANKS || !(alpha > 0.0 && alpha < 1.0) {
        return Vec::new();
    }
    let Ok(params) = StableParams::new(alpha) else {
        return Vec::new();
    };
    let mut rng = StreamKey::root(u64::from(seed))
        .child(streams::RANKED)
        .rng();
    match pd_weights(&params, k as usize, &mut rng) {
        Ok(pd) => pd.weights,
        Err(_) => Vec::new(),
    }
}

/// Log-moment-generating function of the demo law: `ln 2 (t - 1)^2`.
/// Exported so the page can annotate the temperature slider with where
/// the boundary sits.
#[wasm_bindgen]
pub fn boundary_psi(t: f64) -> f64 {
    boundary_gaussian().psi(t).unwrap_or(f64::NAN)
}
