//! Unsupervised triplet hashing for high-dimensional image descriptors.
//!
//! The crate compresses real-valued descriptors (e.g. 4096-d network
//! activations) into compact binary codes of 32 to 256 bits. The main
//! pipeline pre-trains a stack of restricted Boltzmann machines, then
//! fine-tunes the stack with a triplet ranking loss whose triplets are
//! sampled from descriptor-space distances alone, so no labels are needed
//! at any stage. Classic hashing baselines (LSH, SKLSH, spectral hashing,
//! PCA hashing, ITQ, bilinear projection) and Hamming-space retrieval
//! evaluation (recall@R, mAP) are included so codes can be compared under
//! one roof.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod hashers;
pub mod model_file;
pub mod rbm;
pub mod srbm;
pub mod synthetic;
pub mod triplet;

mod wire;

pub use dataset::{BinaryCodeSet, DescriptorDataset, GroundTruth};
pub use error::{Result, UthError};
pub use srbm::SrbmStack;

/// Derives a stream-specific seed from a base seed, used so that each
/// layer / epoch / component gets an independent deterministic RNG.
pub(crate) fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined value.
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
