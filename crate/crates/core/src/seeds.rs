//! Every random stream in the pipeline is derived from the single root seed
//! in the run configuration by adding a fixed salt.

pub const FOLDS: u64 = 0x1001;
pub const RANDOM_FOREST: u64 = 0x2002;
pub const BOOSTING: u64 = 0x3003;
pub const VALIDATION_HOLDOUT: u64 = 0x4004;
pub const SCENE: u64 = 0x5005;
pub const MLS: u64 = 0x6006;
pub const PERMUTATION: u64 = 0x7007;

pub fn derive(root: u64, salt: u64) -> u64 {
    root.wrapping_add(salt)
}

/// Seed for fold `fold` of a per-fold stream.
pub fn per_fold(root: u64, salt: u64, fold: usize) -> u64 {
    derive(root, salt).wrapping_add((fold as u64).wrapping_mul(0x9E37_79B9))
}
