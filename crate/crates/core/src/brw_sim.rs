//! Depth-first simulation of branching random walk replicates.
//!
//! A replicate of the walk up to generation `n` is traversed depth-first, so
//! at most one root-to-leaf slice of the tree is live at a time: memory is
//! `O(n * max offspring)` even when the generation holds 2^n particles. At
//! every leaf `u` (generation `n`) the visitor receives the position
//! `V(u)`, kept additively in log space; contributions `e^{-beta V}` are
//! exponentiated once per leaf, so underflow is confined to the final
//! `exp` (which flushes to zero past `-745`, harmless inside a positive
//! sum). All accumulation is compensated.
//!
//! Every replicate derives a private RNG stream from
//! `(master_seed, replicate_index, attempt)`; a farm of any number of
//! workers therefore reproduces results bit for bit.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson, Uniform};
use serde::Serialize;
use thiserror::Error;

use crate::kahan::KahanSum;
use crate::model::{CountLaw, Displacement, OffspringLaw};
use crate::rng::{tags, StreamKey};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("live particle stack exceeded the cap at generation {generation}")]
    CapExceeded { generation: u32 },
    #[error("beta = {beta} was not simulated for this replicate")]
    MissingBeta { beta: f64 },
    #[error("replicate is extinct; the requested functional is undefined")]
    Extinct,
    #[error("recentering requires generation n >= 1")]
    ZeroGeneration,
    #[error("empty limit-sample pool")]
    EmptyLimitSamples,
    #[error("no surviving replicate within {attempts} conditioned redraws")]
    SurvivalRejectionLimit { attempts: u32 },
}

/// Simulation parameters shared by all replicates of one experiment.
#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    /// Generation at which functionals are read off.
    pub n: u32,
    /// Inverse temperatures for the partition functions `W_{n,beta}`.
    pub betas: Vec<f64>,
    pub replicates: u64,
    pub master_seed: u64,
    /// Abort guard: maximal number of live stack entries.
    pub particle_cap: Option<u64>,
    /// Redraw extinct replicates (bookkept in `attempts`).
    pub condition_on_survival: bool,
}

impl SimConfig {
    pub fn new(n: u32, betas: Vec<f64>, replicates: u64, master_seed: u64) -> Self {
        SimConfig {
            n,
            betas,
            replicates,
            master_seed,
            particle_cap: None,
            condition_on_survival: false,
        }
    }
}

/// Additive functionals of one replicate at generation `n`.
///
/// For an extinct replicate the sums are zero, `min_v` is `+inf` and
/// `particle_count` is zero.
#[derive(Debug, Clone, Serialize)]
pub struct GenerationFunctionals {
    pub n: u32,
    /// `W_n = sum e^{-V(u)}` (critical additive martingale).
    pub w: f64,
    /// `Z_n = sum V(u) e^{-V(u)}` (derivative martingale; signed).
    pub z: f64,
    /// `(beta, W_{n,beta})` in the order of `SimConfig::betas`.
    pub w_beta: Vec<(f64, f64)>,
    /// Minimal position in generation `n`.
    pub min_v: f64,
    pub particle_count: u64,
    pub extinct: bool,
    /// Number of draws used (1 unless conditioned on survival).
    pub attempts: u32,
}

impl GenerationFunctionals {
    /// Look up `W_{n,beta}` for a simulated `beta`.
    pub fn w_beta(&self, beta: f64) -> Result<f64, SimError> {
        self.w_beta
            .iter()
            .find(|(b, _)| *b == beta)
            .map(|(_, w)| *w)
            .ok_or(SimError::MissingBeta { beta })
    }
}

/// Prebuilt samplers for one offspring law.
pub(crate) struct Samplers {
    count: CountSampler,
    disp: DispSampler,
}

enum CountSampler {
    Fixed(u32),
    Poisson(Poisson<f64>),
    /// Cumulative probabilities over counts `0..len`.
    Explicit(Vec<f64>),
}

enum DispSampler {
    Gaussian(Normal<f64>),
    /// `V = shift - Exp(rate)`.
    ShiftedExponential { exp: Exp<f64>, shift: f64 },
    Uniform(Uniform<f64>),
    Degenerate(f64),
}

impl Samplers {
    pub(crate) fn new(law: &OffspringLaw) -> Self {
        let count = match &law.count {
            CountLaw::Fixed(k) => CountSampler::Fixed(*k),
            CountLaw::Poisson { mean } => {
                CountSampler::Poisson(Poisson::new(*mean).expect("validated count law"))
            }
            CountLaw::Explicit(p) => {
                let mut cdf = Vec::with_capacity(p.len());
                let mut acc = 0.0;
                for q in p {
                    acc += q;
                    cdf.push(acc);
                }
                CountSampler::Explicit(cdf)
            }
        };
        let disp = match law.displacement {
            Displacement::Gaussian { mean, variance } => {
                DispSampler::Gaussian(Normal::new(mean, variance.sqrt()).expect("validated"))
            }
            Displacement::ShiftedExponential { rate, shift } => DispSampler::ShiftedExponential {
                exp: Exp::new(rate).expect("validated"),
                shift,
            },
            Displacement::Uniform { lo, hi } => {
                DispSampler::Uniform(Uniform::new(lo, hi).expect("validated"))
            }
            Displacement::Degenerate { value } => DispSampler::Degenerate(value),
        };
        Samplers { count, disp }
    }

    #[inline]
    pub(crate) fn sample_count(&self, rng: &mut ChaCha8Rng) -> u32 {
        match &self.count {
            CountSampler::Fixed(k) => *k,
            CountSampler::Poisson(p) => p.sample(rng) as u32,
            CountSampler::Explicit(cdf) => {
                let u: f64 = rng.random();
                let mut k = 0;
                while k + 1 < cdf.len() && u > cdf[k] {
                    k += 1;
                }
                k as u32
            }
        }
    }

    #[inline]
    pub(crate) fn sample_displacement(&self, rng: &mut ChaCha8Rng) -> f64 {
        match &self.disp {
            DispSampler::Gaussian(n) => n.sample(rng),
            DispSampler::ShiftedExponential { exp, shift } => shift - exp.sample(rng),
            DispSampler::Uniform(u) => u.sample(rng),
            DispSampler::Degenerate(v) => *v,
        }
    }
}

/// Leaf visitor of [`walk_tree`]. `path` carries the child indices along
/// the root-to-leaf ray, one bit per generation (meaningful for binary
/// trees; visitation order is lexicographic in it).
pub(crate) trait LeafSink {
    fn leaf(&mut self, v: f64, path: u64);
}

/// Depth-first walk of one replicate tree; the single traversal engine
/// shared by the walk functionals and the cascade cylinder masses, so that
/// both consume the RNG stream identically.
pub(crate) fn walk_tree<S: LeafSink>(
    samplers: &Samplers,
    n: u32,
    cap: Option<u64>,
    rng: &mut ChaCha8Rng,
    sink: &mut S,
) -> Result<u64, SimError> {
    #[derive(Clone, Copy)]
    struct Node {
        v: f64,
        depth: u32,
        path: u64,
    }
    let cap = cap.unwrap_or(u64::MAX);
    let mut leaves = 0u64;
    let mut stack: Vec<Node> = Vec::with_capacity(64);
    stack.push(Node {
        v: 0.0,
        depth: 0,
        path: 0,
    });
    while let Some(node) = stack.pop() {
        if node.depth == n {
            sink.leaf(node.v, node.path);
            leaves += 1;
            continue;
        }
        let k = samplers.sample_count(rng);
        // Children are pushed in reverse so the 0-child is explored first;
        // displacements are i.i.d., so the draw order is immaterial.
        for i in (0..k).rev() {
            let dv = samplers.sample_displacement(rng);
            stack.push(Node {
                v: node.v + dv,
                depth: node.depth + 1,
                path: (node.path << 1) | u64::from(i & 1),
            });
            if stack.len() as u64 > cap {
                return Err(SimError::CapExceeded {
                    generation: node.depth + 1,
                });
            }
        }
    }
    Ok(leaves)
}

/// Accumulates the additive functionals over the leaves.
struct FunctionalSink<'a> {
    betas: &'a [f64],
    w: KahanSum,
    z: KahanSum,
    wb: Vec<KahanSum>,
    min_v: f64,
}

impl LeafSink for FunctionalSink<'_> {
    #[inline]
    fn leaf(&mut self, v: f64, _path: u64) {
        let e = (-v).exp();
        self.w.add(e);
        self.z.add(v * e);
        for (acc, &b) in self.wb.iter_mut().zip(self.betas) {
            acc.add((-b * v).exp());
        }
        if v < self.min_v {
            self.min_v = v;
        }
    }
}

/// Stream key of one replicate draw.
fn replicate_key(master_seed: u64, replicate_index: u64, attempt: u32) -> StreamKey {
    StreamKey::root(master_seed)
        .child(tags::SIM_REPLICATE)
        .child(replicate_index)
        .child(tags::SIM_ATTEMPT)
        .child(u64::from(attempt))
}

const MAX_SURVIVAL_ATTEMPTS: u32 = 10_000;

/// Simulate the functionals of replicate `replicate_index` under `cfg`.
///
/// Bit-deterministic in `(law, cfg.master_seed, replicate_index)`; the walk
/// is depth-first with compensated accumulation. With
/// `condition_on_survival` set, extinct draws are redrawn on fresh attempt
/// streams (the number of draws is reported in `attempts`).
pub fn simulate_functionals(
    law: &OffspringLaw,
    cfg: &SimConfig,
    replicate_index: u64,
) -> Result<GenerationFunctionals, SimError> {
    let samplers = Samplers::new(law);
    let mut attempt = 0u32;
    loop {
        let mut rng = replicate_key(cfg.master_seed, replicate_index, attempt).rng();
        let mut sink = FunctionalSink {
            betas: &cfg.betas,
            w: KahanSum::default(),
            z: KahanSum::default(),
            wb: vec![KahanSum::default(); cfg.betas.len()],
            min_v: f64::INFINITY,
        };
        let leaves = walk_tree(&samplers, cfg.n, cfg.particle_cap, &mut rng, &mut sink)?;
        let extinct = leaves == 0;
        if extinct && cfg.condition_on_survival {
            attempt += 1;
            if attempt >= MAX_SURVIVAL_ATTEMPTS {
                return Err(SimError::SurvivalRejectionLimit { attempts: attempt });
            }
            continue;
        }
        return Ok(GenerationFunctionals {
            n: cfg.n,
            w: sink.w.value(),
            z: sink.z.value(),
            w_beta: cfg
                .betas
                .iter()
                .zip(&sink.wb)
                .map(|(&b, acc)| (b, acc.value()))
                .collect(),
            min_v: sink.min_v,
            particle_count: leaves,
            extinct,
            attempts: attempt + 1,
        });
    }
}

/// `n^{(3/2) beta} W_{n,beta}`, the rescaling under which the partition
/// function converges in law.
pub fn rescaled_wbeta(f: &GenerationFunctionals, beta: f64) -> Result<f64, SimError> {
    if f.n == 0 {
        return Err(SimError::ZeroGeneration);
    }
    let w = f.w_beta(beta)?;
    Ok(f64::from(f.n).powf(1.5 * beta) * w)
}

/// `min_u V(u) - (3/2) ln n`, the recentering under which the minimum
/// stabilizes in law.
pub fn recentered_min(f: &GenerationFunctionals) -> Result<f64, SimError> {
    if f.extinct {
        return Err(SimError::Extinct);
    }
    if f.n == 0 {
        return Err(SimError::ZeroGeneration);
    }
    Ok(f.min_v - 1.5 * f64::from(f.n).ln())
}

/// One sample of the derivative-martingale proxy `Z_m` (the a.s. limit's
/// law is approached as `m` grows; extinct trees contribute exactly 0).
pub fn derivative_limit_sample(law: &OffspringLaw, m: u32, key: StreamKey) -> f64 {
    struct ZSink {
        z: KahanSum,
    }
    impl LeafSink for ZSink {
        #[inline]
        fn leaf(&mut self, v: f64, _path: u64) {
            self.z.add(v * (-v).exp());
        }
    }
    let samplers = Samplers::new(law);
    let mut rng = key.rng();
    let mut sink = ZSink {
        z: KahanSum::default(),
    };
    // No cap: the walk is bounded by construction for the laws in use.
    let _ = walk_tree(&samplers, m, None, &mut rng, &mut sink).expect("uncapped walk");
    sink.z.value()
}

/// One sample of the right-hand side of the fixed-point identity
/// `X =law sum_{|u|=1} e^{-beta V(u)} X_u`: draws one reproduction event
/// and plugs in resampled copies of `X` from `limit_samples`.
pub fn star_equation_rhs(
    law: &OffspringLaw,
    beta: f64,
    limit_samples: &[f64],
    key: StreamKey,
) -> Result<f64, SimError> {
    if limit_samples.is_empty() {
        return Err(SimError::EmptyLimitSamples);
    }
    let samplers = Samplers::new(law);
    let mut rng = key.rng();
    let k = samplers.sample_count(&mut rng);
    let mut acc = KahanSum::default();
    for _ in 0..k {
        let v = samplers.sample_displacement(&mut rng);
        let x = limit_samples[rng.random_range(0..limit_samples.len())];
        acc.add((-beta * v).exp() * x);
    }
    Ok(acc.value())
}
