//! Splittable, counter-style random streams.
//!
//! Parallel replication must be bit-reproducible for any worker count, so
//! streams are never handed from one task to the next. Instead every unit of
//! work (a replicate, a pool sample, a cylinder cell, a permutation pass)
//! derives its own [`StreamKey`] from the master seed by pure integer
//! mixing, and turns it into a [`ChaCha8Rng`] on the spot. Derivation is
//! stateless, so the schedule of workers cannot influence any draw.
//!
//! The mixer is the standard splitmix64 finalizer; keys are 64-bit, which is
//! plenty for the at most a few million distinct streams a run derives.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const TAG_DOMAIN: u64 = 0xA076_1D64_78BD_642F;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

/// A derivable identifier for one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    state: u64,
}

impl StreamKey {
    /// Root key of a run, derived from the user-facing master seed.
    pub fn root(master_seed: u64) -> Self {
        StreamKey {
            state: mix64(master_seed ^ GOLDEN),
        }
    }

    /// Derive a child stream. `tag` is either a purpose constant from
    /// [`tags`] or a loop index; chains of `child` calls separate nested
    /// scopes (e.g. `root.child(SIM_REPLICATE).child(replicate_index)`).
    #[must_use]
    pub fn child(self, tag: u64) -> Self {
        StreamKey {
            state: mix64(self.state ^ mix64(tag ^ TAG_DOMAIN)),
        }
    }

    /// The mixed key itself; recorded in reports so a stream can be named.
    pub fn state(self) -> u64 {
        self.state
    }

    /// Instantiate the stream.
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.state)
    }
}

/// Purpose constants separating the independent uses of randomness inside a
/// single run. Two distinct purposes never share a stream even when their
/// loop indices coincide.
pub mod tags {
    /// One branching-walk replicate.
    pub const SIM_REPLICATE: u64 = 1;
    /// Survival-conditioned retry attempts of one replicate.
    pub const SIM_ATTEMPT: u64 = 2;
    /// Derivative-martingale proxy pool samples.
    pub const Z_POOL: u64 = 3;
    /// First-generation draws of the fixed-point equation.
    pub const STAR: u64 = 4;
    /// Stable subordinator evaluations.
    pub const STABLE: u64 = 5;
    /// Cascade tree realizations.
    pub const CASCADE_TREE: u64 = 6;
    /// Per-cell derivative-limit proxies of the limit measure.
    pub const CELL_Z: u64 = 7;
    /// Per-cell subordinator increments of the limit measure.
    pub const CELL_STABLE: u64 = 8;
    /// Permutation passes of the KS test.
    pub const KS_PERMUTATION: u64 = 9;
    /// Bootstrap resampling of the scale estimator.
    pub const BOOTSTRAP: u64 = 10;
    /// Truncated jump-measure atoms.
    pub const ATOMS: u64 = 11;
    /// Refinement of sampled limit masses to a finer dyadic depth.
    pub const REFINE: u64 = 12;
    /// Poisson-Dirichlet arrival sequences.
    pub const PD: u64 = 13;
    /// Monte Carlo moment estimates in assumption checks.
    pub const MC_MOMENT: u64 = 14;
}
