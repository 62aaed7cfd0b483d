//! Joint sample- and set-based embedding learning.
//!
//! A small feed-forward network produces embeddings that are supervised by
//! a softmax classifier together with set-based terms computed against
//! per-class parameters:
//!
//! * max-margin loss against one-vs-rest linear SVM hyperplanes,
//! * center loss against class centroids,
//! * pushing loss away from negative-class centroids.
//!
//! Set parameters are refreshed by periodic offline recomputation and
//! blended every iteration by online updates (see [`setparams`]).
//! Verification quality is measured with cosine similarity over labeled
//! pairs (see [`eval`]).

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod eval;
pub mod gradcheck;
pub mod linalg;
pub mod losses;
pub mod model;
pub mod plot;
pub mod setparams;
pub mod svm;
pub mod trainer;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use linalg::Matrix;

/// Deterministic generator for a given seed. Independent consumers use
/// distinct `stream` values so they never share a sequence.
pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
