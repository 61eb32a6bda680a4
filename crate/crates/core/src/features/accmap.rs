use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::grid::floor_cell;
use crate::geometry::{CellId, Point3, PointCloud};
use crate::scalar::Scalar;

/// Point count and height statistics of one accumulation-map bin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinStats<T> {
    pub count: usize,
    pub z_min: T,
    pub z_max: T,
    /// Population standard deviation of z.
    pub z_std: T,
}

/// XY binning of a cloud with per-bin height statistics. Bins follow the same
/// floor rule as the fold grid, anchored at the cloud's XY minimum.
#[derive(Clone, Debug)]
pub struct AccumulationMap<T> {
    bin_size: T,
    origin: [T; 2],
    bins: HashMap<CellId, BinStats<T>>,
}

impl<T: Scalar> AccumulationMap<T> {
    pub fn build(cloud: &PointCloud<T>, bin_size: T) -> Result<Self> {
        if !(bin_size > T::zero()) || !bin_size.is_finite() {
            return Err(Error::invalid(format!("bin_size must be positive, got {bin_size}")));
        }
        let origin = cloud.bounds().map_or([T::zero(); 2], |(lo, _)| [lo.x, lo.y]);
        // Welford accumulation: (count, mean, m2, min, max)
        let mut acc: HashMap<CellId, (usize, T, T, T, T)> = HashMap::new();
        for p in cloud.iter() {
            let e = acc
                .entry(floor_cell(p.x, p.y, origin, bin_size))
                .or_insert((0, T::zero(), T::zero(), p.z, p.z));
            e.0 += 1;
            let delta = p.z - e.1;
            e.1 += delta / T::of_usize(e.0);
            e.2 += delta * (p.z - e.1);
            e.3 = e.3.min(p.z);
            e.4 = e.4.max(p.z);
        }
        let bins = acc
            .into_iter()
            .map(|(c, (n, _, m2, lo, hi))| {
                let var = (m2 / T::of_usize(n)).max(T::zero());
                (
                    c,
                    BinStats {
                        count: n,
                        z_min: lo,
                        z_max: hi,
                        z_std: var.sqrt(),
                    },
                )
            })
            .collect();
        Ok(AccumulationMap {
            bin_size,
            origin,
            bins,
        })
    }

    pub fn bin_size(&self) -> T {
        self.bin_size
    }

    pub fn cell_of(&self, p: &Point3<T>) -> CellId {
        floor_cell(p.x, p.y, self.origin, self.bin_size)
    }

    pub fn get(&self, cell: CellId) -> Option<&BinStats<T>> {
        self.bins.get(&cell)
    }

    /// Statistics of the bin containing `p`.
    pub fn stats_at(&self, p: &Point3<T>) -> Option<&BinStats<T>> {
        self.bins.get(&self.cell_of(p))
    }

    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }
}

pub fn build_acc_map<T: Scalar>(cloud: &PointCloud<T>, bin_size: T) -> Result<AccumulationMap<T>> {
    AccumulationMap::build(cloud, bin_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    #[test]
    fn single_bin_counts_everything() {
        let c = PointCloud::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.1, 0.1, 1.0),
            Point3::new(0.2, 0.0, 2.0),
        ])
        .unwrap();
        let m = build_acc_map(&c, 0.25).unwrap();
        assert_eq!(m.n_bins(), 1);
        assert_eq!(m.stats_at(&c.get(0)).unwrap().count, 3);
    }

    #[test]
    fn two_heights() {
        let c = PointCloud::<f64>::new(vec![Point3::new(0.0, 0.0, 0.0), Point3::new(0.1, 0.1, 1.0)]).unwrap();
        let s = *build_acc_map(&c, 0.25).unwrap().stats_at(&c.get(0)).unwrap();
        assert_eq!(s.z_max - s.z_min, 1.0);
        assert!((s.z_std - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_bin_size() {
        let c = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)]).unwrap();
        assert!(build_acc_map(&c, 0.0).is_err());
    }

    #[test]
    fn matches_naive_grouping() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<Point3<f64>> = (0..5000)
            .map(|_| Point3::new(rng.random_range(0.0..3.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0)))
            .collect();
        let c = PointCloud::new(pts.clone()).unwrap();
        let m = build_acc_map(&c, 0.25).unwrap();
        let ox = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let oy = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let mut groups: BTreeMap<(i64, i64), Vec<f64>> = BTreeMap::new();
        for p in &pts {
            let key = (((p.y - oy) / 0.25).floor() as i64, ((p.x - ox) / 0.25).floor() as i64);
            groups.entry(key).or_default().push(p.z);
        }
        assert_eq!(groups.len(), m.n_bins());
        for ((r, col), zs) in groups {
            let s = m.get(CellId::new(r as u32, col as u32)).unwrap();
            let n = zs.len() as f64;
            let mean = zs.iter().sum::<f64>() / n;
            let std = (zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert_eq!(s.count, zs.len());
            assert_eq!(s.z_min, zs.iter().copied().fold(f64::INFINITY, f64::min));
            assert_eq!(s.z_max, zs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            assert!((s.z_std - std).abs() < 1e-12);
        }
    }
}
