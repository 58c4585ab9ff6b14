//! Timestamp membosonsampling toolkit.
//!
//! The crate covers the whole chain from a looped multi-layer scattering
//! matrix to validated multi-photon statistics:
//!
//! * [`matrix`]: dense complex matrices, Haar sampling, direct sums.
//! * [`network`]: the layered (looped) scattering matrix and its layer graph.
//! * [`permanent`]: naive, Gray-code Ryser and parallel Ryser permanents.
//! * [`sampling`]: exact pattern probabilities, distributions and samplers.
//! * [`eventstream`]: the `MBS1` binary record format and a synthetic
//!   time-tagger stream generator.
//! * [`pipeline`]: delay calibration, drift fitting and multi-section
//!   coincidence extraction, single pass or chunk-parallel.
//! * [`analysis`]: timestamp reconstruction, fidelity, the likelihood-ratio
//!   counter, complexity metrics and layer/fold scaling studies.
//!
//! Runnable walk-throughs live in the crate's `examples/` directory; the
//! `mbs` binary wires the same operations into subcommands.

pub mod analysis;
pub mod config;
pub mod error;
pub mod eventstream;
pub mod matrix;
pub mod network;
pub mod permanent;
pub mod pipeline;
pub mod sampling;
pub mod svg;

pub use error::{Error, Result};
pub use matrix::{ComplexMatrix, C64};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Seed for every random draw in the crate; identical seeds give identical
/// matrices, samples and streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomSeed(pub u64);

impl RandomSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Derives an independent seed for a sub-task.
    pub fn derive(self, stream: u64) -> RandomSeed {
        // splitmix64 finalizer
        let mut z = self.0 ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        RandomSeed(z ^ (z >> 31))
    }
}
