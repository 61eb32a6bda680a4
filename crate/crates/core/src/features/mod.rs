//! Per-point geometric features at the eigenentropy-optimal neighborhood
//! size, and train-only z-score standardization.

mod accmap;
mod eigen;
mod extract;
mod names;
mod optimal;
mod standardize;

pub use accmap::{build_acc_map, AccumulationMap, BinStats};
pub use eigen::{covariance, eigen_decompose, EigenDecomp};
pub use extract::{extract_features, FeatureExtractor, FeatureParams};
pub use names::{Feature, FeatureVector, FEATURE_NAMES, N_FEATURES};
pub use optimal::{optimal_k, ScaleRange};
pub use standardize::{fit_standardizer, Standardizer};
