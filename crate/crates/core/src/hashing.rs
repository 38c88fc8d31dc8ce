//! Dimensionality reduction for feature vectors: the sdbm string hash taken
//! modulo an adjustable base, plus collision accounting over a feature space.

use crate::features::{FeatureKey, IndexedSpace};
use serde::{Deserialize, Serialize};

/// sdbm over the bytes of a string, with wrapping 64-bit arithmetic:
/// `h_i = b_i + (h_{i-1} << 6) + (h_{i-1} << 16) - h_{i-1}`, `h_0 = 0`.
pub fn sdbm(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0;
    for &b in bytes {
        h = (b as u64)
            .wrapping_add(h << 6)
            .wrapping_add(h << 16)
            .wrapping_sub(h);
    }
    h
}

#[derive(Debug, Clone, Copy, thiserror::Error, PartialEq, Eq)]
#[error("hash base must be at least 2, got {base}")]
pub struct BaseError {
    pub base: u32,
}

/// A bucket count for hashed feature spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashConfig {
    pub base: u32,
}

impl HashConfig {
    pub fn new(base: u32) -> Result<Self, BaseError> {
        if base < 2 {
            return Err(BaseError { base });
        }
        Ok(HashConfig { base })
    }
}

/// Bucket index of a feature key: sdbm of its canonical serialization,
/// modulo the base.
pub fn hash_key(key: &FeatureKey, cfg: HashConfig) -> u32 {
    (sdbm(key.serialize().as_bytes()) % cfg.base as u64) as u32
}

/// How a feature space distributes over hash buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub base: u32,
    pub total_features: usize,
    /// Buckets hit by at least one feature.
    pub occupied_buckets: usize,
    pub empty_buckets: usize,
    /// Features sharing their bucket with at least one other feature.
    pub colliding_features: usize,
    /// Features alone in their bucket.
    pub collision_free_features: usize,
}

pub fn collision_report(space: &IndexedSpace, cfg: HashConfig) -> CollisionReport {
    let mut counts = vec![0usize; cfg.base as usize];
    for (key, _) in space.keys() {
        counts[hash_key(key, cfg) as usize] += 1;
    }
    let occupied = counts.iter().filter(|&&c| c > 0).count();
    let collision_free = counts.iter().filter(|&&c| c == 1).count();
    let colliding = counts.iter().copied().filter(|&c| c >= 2).sum::<usize>();
    CollisionReport {
        base: cfg.base,
        total_features: space.key_count(),
        occupied_buckets: occupied,
        empty_buckets: cfg.base as usize - occupied,
        colliding_features: colliding,
        collision_free_features: collision_free,
    }
}
