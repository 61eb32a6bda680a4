use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::accmap::AccumulationMap;
use crate::features::eigen::{eigen2_xy, sym3_eigen, Sym3};
use crate::features::names::{Feature, FeatureVector, N_FEATURES};
use crate::features::optimal::{optimal_k_from_neighbors, ScaleRange};
use crate::geometry::{KdTree, Neighbor, Point3, PointCloud};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    pub k_min: usize,
    pub k_max: usize,
    pub k_step: usize,
    /// Accumulation-map bin size (m).
    pub acc_bin_size: f64,
    pub leaf_size: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            k_min: 10,
            k_max: 100,
            k_step: 1,
            acc_bin_size: 0.25,
            leaf_size: 16,
        }
    }
}

impl FeatureParams {
    pub fn scale_range(&self) -> ScaleRange {
        ScaleRange {
            k_min: self.k_min,
            k_max: self.k_max,
            step: self.k_step,
        }
    }
}

/// Features of point `point_index` at neighborhood size `opt_n`: the point
/// and its `opt_n` nearest neighbors in 3D, and separately in XY.
pub fn extract_features<T: Scalar>(
    point_index: usize,
    cloud: &PointCloud<T>,
    index: &KdTree<T, 3>,
    index_2d: &KdTree<T, 2>,
    acc_map: &AccumulationMap<T>,
    opt_n: usize,
) -> Result<FeatureVector<T>> {
    if opt_n < 2 || opt_n + 1 > cloud.len() {
        return Err(Error::invalid(format!(
            "neighborhood size {opt_n} invalid for a cloud of {} points",
            cloud.len()
        )));
    }
    let p = cloud.get(point_index);
    let neighbors = index.knn(&p.to_array(), opt_n + 1)?;
    features_from_neighbors(&p, &neighbors, index, index_2d, acc_map, opt_n)
}

fn features_from_neighbors<T: Scalar>(
    p: &Point3<T>,
    neighbors: &[Neighbor<T>],
    index: &KdTree<T, 3>,
    index_2d: &KdTree<T, 2>,
    acc_map: &AccumulationMap<T>,
    opt_n: usize,
) -> Result<FeatureVector<T>> {
    let hood = &neighbors[..=opt_n];
    let n = T::of_usize(hood.len());
    let pt = |nb: &Neighbor<T>| {
        let a = index.point(nb.index);
        Point3::new(a[0], a[1], a[2])
    };

    let centroid = hood.iter().fold(Point3::default(), |acc, nb| acc + pt(nb)) * (T::one() / n);
    let mut cov: Sym3<T> = [T::zero(); 6];
    let (mut z_lo, mut z_hi) = (T::infinity(), T::neg_infinity());
    for nb in hood {
        let q = pt(nb);
        let d = q - centroid;
        cov[0] += d.x * d.x;
        cov[1] += d.x * d.y;
        cov[2] += d.x * d.z;
        cov[3] += d.y * d.y;
        cov[4] += d.y * d.z;
        cov[5] += d.z * d.z;
        z_lo = z_lo.min(q.z);
        z_hi = z_hi.max(q.z);
    }
    let cov = cov.map(|v| v / n);
    let eig = sym3_eigen(cov);
    let lambda_sum = eig.sum();
    let e = match eig.normalized() {
        Some(e) if e[0] > T::zero() => e,
        _ => return Err(Error::degenerate("degenerate neighborhood")),
    };

    let radius_3d = hood[opt_n].distance;
    if !(radius_3d > T::zero()) {
        return Err(Error::degenerate("zero radius"));
    }

    let hood_2d = index_2d.knn(&p.xy(), opt_n + 1)?;
    let radius_2d = hood_2d[opt_n].distance;
    if !(radius_2d > T::zero()) {
        return Err(Error::degenerate("zero radius"));
    }
    let mu = eigen2_xy(hood_2d.iter().map(|nb| *index_2d.point(nb.index)));
    let ratio_2d = if mu[0] > T::zero() { mu[1] / mu[0] } else { T::zero() };

    let acc = acc_map
        .stats_at(p)
        .ok_or_else(|| Error::invalid("point lies outside the accumulation map"))?;

    let pi = T::PI();
    let count = T::of_usize(opt_n + 1);
    let mut v = [T::zero(); N_FEATURES];
    let mut set = |f: Feature, x: T| v[f.index()] = x;
    set(Feature::Linearity, (e[0] - e[1]) / e[0]);
    set(Feature::Planarity, (e[1] - e[2]) / e[0]);
    set(Feature::Sphericity, e[2] / e[0]);
    set(Feature::Omnivariance, (e[0] * e[1] * e[2]).cbrt());
    set(Feature::Anisotropy, (e[0] - e[2]) / e[0]);
    set(Feature::Eigenentropy, super::eigen::entropy(e));
    set(Feature::SumEigenvalues, lambda_sum);
    set(Feature::ChangeCurvature, e[2]);
    set(Feature::Verticality, T::one() - eig.normal.z.abs());
    set(Feature::ZVals, p.z);
    set(Feature::DeltaZ, z_hi - z_lo);
    set(Feature::StdZ, cov[5].max(T::zero()).sqrt());
    set(Feature::Radius3d, radius_3d);
    set(Feature::Density, count / (T::of(4.0 / 3.0) * pi * radius_3d.powi(3)));
    set(Feature::Radius2d, radius_2d);
    set(Feature::Density2d, count / (pi * radius_2d * radius_2d));
    set(Feature::SumEigenvalues2d, mu[0] + mu[1]);
    set(Feature::RatioEigenvalues2d, ratio_2d);
    set(Feature::FrequencyAccMap, T::of_usize(acc.count));
    set(Feature::DeltaZAccMap, acc.z_max - acc.z_min);
    set(Feature::StdZAccMap, acc.z_std);
    Ok(FeatureVector { values: v, opt_n })
}

/// Indices and accumulation map for one cloud, built once and shared
/// read-only by all per-point feature computations.
pub struct FeatureExtractor<'a, T> {
    cloud: &'a PointCloud<T>,
    index: KdTree<T, 3>,
    index_2d: KdTree<T, 2>,
    acc_map: AccumulationMap<T>,
    range: ScaleRange,
}

impl<'a, T: Scalar> FeatureExtractor<'a, T> {
    pub fn new(cloud: &'a PointCloud<T>, params: &FeatureParams) -> Result<Self> {
        let range = params.scale_range();
        range.validate(cloud.len())?;
        Ok(FeatureExtractor {
            cloud,
            index: KdTree::from_cloud(cloud, params.leaf_size)?,
            index_2d: KdTree::from_cloud_xy(cloud, params.leaf_size)?,
            acc_map: AccumulationMap::build(cloud, T::of(params.acc_bin_size))?,
            range,
        })
    }

    pub fn index(&self) -> &KdTree<T, 3> {
        &self.index
    }

    pub fn index_2d(&self) -> &KdTree<T, 2> {
        &self.index_2d
    }

    pub fn acc_map(&self) -> &AccumulationMap<T> {
        &self.acc_map
    }

    /// Optimal neighborhood size followed by the features at that size.
    pub fn point(&self, i: usize) -> Result<FeatureVector<T>> {
        let p = self.cloud.get(i);
        let q = p.to_array();
        let neighbors = self.index.knn(&q, self.range.k_max + 1)?;
        let opt_n = optimal_k_from_neighbors(&q, &neighbors, &self.index, &self.range)?;
        features_from_neighbors(&p, &neighbors, &self.index, &self.index_2d, &self.acc_map, opt_n)
    }

    /// Features of each listed point, computed in parallel, in input order.
    pub fn points(&self, indices: &[usize]) -> Vec<Result<FeatureVector<T>>> {
        indices.par_iter().map(|&i| self.point(i)).collect()
    }
}
