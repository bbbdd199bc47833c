//! Few-shot topic classification from a handful of example queries.
//!
//! The pipeline retrieves passages for several queries at once from a
//! precomputed embedding corpus ([`retrieval::mqr`]), turns them into a
//! balanced labeled dataset ([`dataset`]), trains a linear probability head
//! ([`classifier`]) and scores it against simple baselines ([`eval`]).

pub mod classifier;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod retrieval;
pub mod synth;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use error::{Error, Result};

pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent sub-seed for `stream`, via the splitmix64 finalizer.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
