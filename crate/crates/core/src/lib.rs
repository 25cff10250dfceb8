//! Unsupervised graph representation learning by maximizing coding rate
//! reduction.
//!
//! A two-layer graph-convolutional encoder maps node features to unit-norm
//! embeddings; training maximizes the difference between the coding rate of
//! all embeddings and the (degree-normalized) coding rates of each node's
//! neighbourhood group. Around that sit the evaluation tools (linear probe,
//! K-Means with partition metrics) and numerical checks of the subspace
//! geometry the objective induces.
//!
//! | module | contents |
//! |---|---|
//! | [`linalg`] | dense matrix type, Cholesky log-det and solves, SVD, eigen |
//! | [`graph`] | graph model, dataset directory I/O, normalization, synthetic graphs |
//! | [`objective`] | coding rates, rate reduction and its gradient |
//! | [`encoder`] | GCN / MLP encoder with manual backprop |
//! | [`trainer`] | Adam ascent loop |
//! | [`geometry`] | principal angles, volume identities, cosine Gram, PCA |
//! | [`eval`] | linear probe, K-Means, modularity / coverage / performance |

pub mod encoder;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod graph;
pub mod linalg;
pub mod objective;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator behind every random draw in the crate.
pub type Rng = ChaCha8Rng;

/// ChaCha8 seeded with `seed`, positioned on an independent `stream`.
///
/// Each consumer of randomness owns a stream id so that, for a given seed,
/// adding draws in one place never shifts the values drawn in another.
pub fn seeded_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids handed to [`seeded_rng`].
pub mod streams {
    pub const GRAPH_EDGES: u64 = 1;
    pub const GRAPH_FEATURES: u64 = 2;
    pub const SPLITS: u64 = 3;
    pub const ENCODER_INIT: u64 = 4;
    pub const MEMBERSHIPS: u64 = 5;
    /// K-Means restart `r` uses `KMEANS + r`.
    pub const KMEANS: u64 = 1 << 32;
}
