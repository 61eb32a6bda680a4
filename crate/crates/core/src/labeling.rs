//! Cloud-to-cloud (C2C) distances of MLS points against a reference scan and
//! the binary quality labels derived from them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{KdTree, PointCloud};
use crate::scalar::Scalar;

/// Label value of points whose C2C distance is below the threshold.
pub const QUALIFIED: u8 = 1;
pub const UNQUALIFIED: u8 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelingParams {
    /// Points at or beyond this distance (m) are dropped.
    pub cutoff: f64,
    /// Qualification threshold t_d (m).
    pub t_d: f64,
    pub leaf_size: usize,
}

impl Default for LabelingParams {
    fn default() -> Self {
        LabelingParams {
            cutoff: 0.100,
            t_d: 0.020,
            leaf_size: 16,
        }
    }
}

impl LabelingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0) {
            return Err(Error::invalid("cutoff must be positive"));
        }
        if !(self.t_d > 0.0) {
            return Err(Error::invalid("threshold must be positive"));
        }
        if self.t_d >= self.cutoff {
            return Err(Error::invalid("threshold must be below cutoff"));
        }
        Ok(())
    }
}

/// Distance from every MLS point to its nearest reference point. Directed:
/// swapping the clouds generally changes the result.
pub fn c2c_distances<T: Scalar>(mls: &PointCloud<T>, reference_index: &KdTree<T, 3>) -> Result<Vec<T>> {
    if reference_index.is_empty() {
        return Err(Error::invalid("empty reference cloud"));
    }
    Ok(mls
        .points()
        .par_iter()
        .map(|p| reference_index.nearest_point(p).distance)
        .collect())
}

/// `true` for distances strictly below `cutoff`.
pub fn apply_cutoff<T: Scalar>(distances: &[T], cutoff: T) -> Vec<bool> {
    distances.iter().map(|&d| d < cutoff).collect()
}

/// [`QUALIFIED`] iff the distance is strictly below `t_d`.
pub fn label<T: Scalar>(distances: &[T], t_d: T, cutoff: T) -> Result<Vec<u8>> {
    if !(t_d > T::zero()) {
        return Err(Error::invalid("threshold must be positive"));
    }
    if t_d >= cutoff {
        return Err(Error::invalid("threshold must be below cutoff"));
    }
    Ok(distances
        .iter()
        .map(|&d| if d < t_d { QUALIFIED } else { UNQUALIFIED })
        .collect())
}
