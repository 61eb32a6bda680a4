use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::eigen::{entropy, sym3_eigen};
use crate::geometry::{KdTree, Neighbor};
use crate::scalar::Scalar;

/// Candidate neighborhood sizes scanned for the eigenentropy minimum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleRange {
    pub k_min: usize,
    pub k_max: usize,
    pub step: usize,
}

impl Default for ScaleRange {
    fn default() -> Self {
        ScaleRange {
            k_min: 10,
            k_max: 100,
            step: 1,
        }
    }
}

impl ScaleRange {
    pub fn validate(&self, cloud_len: usize) -> Result<()> {
        if self.k_min < 3 {
            return Err(Error::invalid("k_min must be at least 3"));
        }
        if self.k_max < self.k_min {
            return Err(Error::invalid("k_max must be at least k_min"));
        }
        if self.step == 0 {
            return Err(Error::invalid("k step must be positive"));
        }
        if self.k_max + 1 > cloud_len {
            return Err(Error::invalid(format!(
                "k_max ({}) must not exceed cloud size minus one ({})",
                self.k_max,
                cloud_len.saturating_sub(1)
            )));
        }
        Ok(())
    }

    pub fn candidates(&self) -> impl Iterator<Item = usize> {
        (self.k_min..=self.k_max).step_by(self.step)
    }
}

/// Optimal neighborhood size of point `point_index`: the candidate `k` whose
/// neighborhood (the point and its `k` nearest neighbors) has minimal
/// eigenentropy. Ties go to the smaller `k`.
pub fn optimal_k<T: Scalar>(point_index: usize, index: &KdTree<T, 3>, range: &ScaleRange) -> Result<usize> {
    range.validate(index.len())?;
    let query = *index.point(point_index);
    let neighbors = index.knn(&query, range.k_max + 1)?;
    optimal_k_from_neighbors(&query, &neighbors, index, range)
}

/// As [`optimal_k`] given the sorted `k_max + 1` nearest neighbors.
pub(crate) fn optimal_k_from_neighbors<T: Scalar>(
    query: &[T; 3],
    neighbors: &[Neighbor<T>],
    index: &KdTree<T, 3>,
    range: &ScaleRange,
) -> Result<usize> {
    debug_assert!(neighbors.len() > range.k_max);
    // Running sums of offsets from the query keep the covariance well
    // conditioned far from the coordinate origin.
    let mut s1 = [T::zero(); 3];
    let mut s2 = [T::zero(); 6];
    let tie = T::of(1e4) * T::epsilon();
    let mut best: Option<(usize, T)> = None;
    let mut candidates = range.candidates().peekable();
    for (j, nb) in neighbors.iter().enumerate().take(range.k_max + 1) {
        let p = index.point(nb.index);
        let d = [p[0] - query[0], p[1] - query[1], p[2] - query[2]];
        for a in 0..3 {
            s1[a] += d[a];
        }
        s2[0] += d[0] * d[0];
        s2[1] += d[0] * d[1];
        s2[2] += d[0] * d[2];
        s2[3] += d[1] * d[1];
        s2[4] += d[1] * d[2];
        s2[5] += d[2] * d[2];
        // j + 1 points seen: the query itself plus j neighbors.
        if candidates.peek() != Some(&j) {
            continue;
        }
        let k = candidates.next().expect("peeked");
        let n = T::of_usize(j + 1);
        let m = s1.map(|v| v / n);
        let cov = [
            s2[0] / n - m[0] * m[0],
            s2[1] / n - m[0] * m[1],
            s2[2] / n - m[0] * m[2],
            s2[3] / n - m[1] * m[1],
            s2[4] / n - m[1] * m[2],
            s2[5] / n - m[2] * m[2],
        ];
        let Some(e) = sym3_eigen(cov).normalized() else {
            continue;
        };
        let h = entropy(e);
        match best {
            Some((_, b)) if h >= b - tie => {}
            _ => best = Some((k, h)),
        }
    }
    best.map(|(k, _)| k)
        .ok_or_else(|| Error::degenerate("degenerate neighborhood"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::eigen::eigen_decompose;
    use crate::geometry::{Point3, PointCloud};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tree(p: &[Point3<f64>]) -> KdTree<f64, 3> {
        KdTree::from_cloud(&PointCloud::new(p.to_vec()).unwrap(), 8).unwrap()
    }

    /// E(k) for every candidate by brute-force sorting and direct covariance.
    fn exhaustive(p: &[Point3<f64>], i: usize, range: &ScaleRange) -> usize {
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&a, &b| {
            p[a].distance(p[i])
                .partial_cmp(&p[b].distance(p[i]))
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut best = (0, f64::INFINITY);
        for k in range.candidates() {
            let nb: Vec<Point3<f64>> = order[..=k].iter().map(|&j| p[j]).collect();
            let e = eigen_decompose(&nb).unwrap().eigenentropy().unwrap();
            if e < best.1 - 1e-10 {
                best = (k, e);
            }
        }
        best.0
    }

    #[test]
    fn line_gives_k_min() {
        let p: Vec<Point3<f64>> = (0..60).map(|i| Point3::new(i as f64 * 0.1, 0.5 * i as f64 * 0.1, 2.0)).collect();
        let r = ScaleRange { k_min: 10, k_max: 40, step: 1 };
        assert_eq!(optimal_k(30, &tree(&p), &r).unwrap(), 10);
    }

    #[test]
    fn isotropic_shells_give_k_min() {
        // Octahedral shells: every complete shell has isotropic covariance.
        let mut p = vec![Point3::new(0.0, 0.0, 0.0)];
        for r in [1.0, 2.0, 3.0] {
            for s in [-1.0, 1.0] {
                p.push(Point3::new(s * r, 0.0, 0.0));
                p.push(Point3::new(0.0, s * r, 0.0));
                p.push(Point3::new(0.0, 0.0, s * r));
            }
        }
        let range = ScaleRange { k_min: 6, k_max: 18, step: 6 };
        let t = tree(&p);
        assert_eq!(optimal_k(0, &t, &range).unwrap(), 6);
        for k in range.candidates() {
            let nb = t.knn(&[0.0; 3], k + 1).unwrap();
            let pts: Vec<Point3<f64>> = nb.iter().map(|n| p[n.index]).collect();
            let e = eigen_decompose(&pts).unwrap().eigenentropy().unwrap();
            assert!((e - 3f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let p = vec![Point3::new(1.0, 1.0, 1.0); 20];
        let r = ScaleRange { k_min: 3, k_max: 10, step: 1 };
        let e = optimal_k(0, &tree(&p), &r).unwrap_err();
        assert!(e.to_string().contains("degenerate neighborhood"));
    }

    #[test]
    fn range_validation() {
        let p: Vec<Point3<f64>> = (0..20).map(|i| Point3::new(i as f64, (i * i) as f64, 0.0)).collect();
        let t = tree(&p);
        assert!(optimal_k(0, &t, &ScaleRange { k_min: 2, k_max: 10, step: 1 }).is_err());
        assert!(optimal_k(0, &t, &ScaleRange { k_min: 5, k_max: 20, step: 1 }).is_err());
        assert!(optimal_k(0, &t, &ScaleRange { k_min: 5, k_max: 19, step: 1 }).is_ok());
        assert!(optimal_k(0, &t, &ScaleRange { k_min: 5, k_max: 10, step: 0 }).is_err());
    }

    #[test]
    fn plane_with_off_plane_cluster_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut p: Vec<Point3<f64>> = (0..150)
            .map(|_| Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0))
            .collect();
        // Cluster above the plane beyond the reach of ~25 neighbors.
        for _ in 0..40 {
            p.push(Point3::new(
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(0.5..0.7),
            ));
        }
        p[0] = Point3::new(0.0, 0.0, 0.0);
        let range = ScaleRange { k_min: 10, k_max: 60, step: 1 };
        let t = tree(&p);
        for i in [0, 1, 2, 3, 150, 151] {
            assert_eq!(optimal_k(i, &t, &range).unwrap(), exhaustive(&p, i, &range), "point {i}");
        }
    }

    #[test]
    fn random_clouds_match_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..5 {
            let p: Vec<Point3<f64>> = (0..200)
                .map(|_| Point3::new(rng.random(), rng.random::<f64>() * 2.0, rng.random::<f64>() * 0.2))
                .collect();
            let range = ScaleRange { k_min: 5, k_max: 50, step: 3 };
            let t = tree(&p);
            for i in (0..200).step_by(37) {
                assert_eq!(optimal_k(i, &t, &range).unwrap(), exhaustive(&p, i, &range), "trial {trial} point {i}");
            }
        }
    }
}
