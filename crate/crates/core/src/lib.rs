//! rigforge: a desk-scale automatic-rigging toolkit.
//!
//! The crate covers the full pipeline from meshes to animation-ready rigs:
//!
//! - [`skeleton`] — canonical mesh/skeleton data model, forward kinematics,
//!   linear blend skinning, surface sampling.
//! - [`io`] — OBJ meshes, rig-info text rigs, native JSON assets, token files.
//! - [`tokenizer`] — connectivity-preserving skeleton tokenization and its
//!   inverse, with a prefix grammar for validation and constrained decoding.
//! - [`rewards`] — chamfer/topology metrics and the composite 5-point reward.
//! - [`preference`] — preference-pair selection and the DPO dataset format.
//! - [`model`] — a small autoregressive skeleton generator with level position
//!   embeddings, reward-guided DPO fine-tuning, and gradient checking.
//! - [`geoskin`] — voxel geodesics, distance features, bone-probability
//!   prediction, and skinning metrics.
//! - [`augment`] — geometric/bone-perturbation augmentation and a synthetic
//!   asset generator.
//!
//! All randomness is funneled through caller-supplied seeds; every operation
//! is deterministic given its inputs.

pub mod augment;
pub mod geoskin;
pub mod io;
pub mod model;
pub mod preference;
pub mod rewards;
pub mod skeleton;
pub mod tokenizer;

/// Derives an independent sub-seed from a base seed and a stream tag.
///
/// splitmix64 finalizer; distinct tags give uncorrelated streams so that one
/// CLI `--seed` can feed every randomized stage reproducibly.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
