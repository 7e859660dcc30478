//! Simulation and verification toolkit for supercritical branching random
//! walks normalized to the boundary case, and for the Mandelbrot cascades
//! they generate.
//!
//! The crate is organized around the objects the limit theory talks about:
//!
//! * [`model`] — offspring laws, the log-moment generating function
//!   `psi(t) = ln E[sum_{|u|=1} exp(-t V(u))]`, boundary normalization
//!   (`psi(1) = psi'(1) = 0`), and moment-assumption checks;
//! * [`brw_sim`] — depth-first single-replicate simulation of the additive
//!   functionals `W_n`, `W_{n,beta}`, `Z_n` (derivative martingale) and the
//!   minimal position;
//! * [`stable`] — one-sided stable laws normalized by
//!   `E[exp(-theta S)] = exp(-theta^alpha)`, subordinator increments,
//!   truncated jump decompositions and Poisson-Dirichlet ranked weights;
//! * [`cascade`] — dyadic cylinder masses of the Gibbs measures
//!   `mu_{n,beta}`, the signed derivative measure, and samples of the
//!   purely atomic limit measure built by running a stable subordinator
//!   in derivative-measure time;
//! * [`stats`] — the distribution-level tests used to compare simulated
//!   laws (two-sample KS with permutation p-values, empirical Laplace
//!   transforms, Hill tail-index and robust scale estimation). Everything
//!   downstream is heavy tailed, so nothing here relies on moments beyond
//!   what the theory guarantees.
//!
//! Randomness is derived through [`rng::StreamKey`], a counter-style
//! splittable key: every replicate, pool sample, cell and resampling pass
//! owns a stream derived from `(master_seed, purpose, index)`, which makes
//! every result bit-reproducible independently of worker count.

pub mod brw_sim;
pub mod cascade;
pub mod model;
pub mod rng;
pub mod stable;
pub mod stats;

pub(crate) mod kahan;
