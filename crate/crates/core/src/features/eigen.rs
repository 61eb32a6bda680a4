use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::scalar::Scalar;

/// Eigen-decomposition of a neighborhood's 3D covariance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenDecomp<T> {
    /// Eigenvalues, descending, clamped to be non-negative (m²).
    pub values: [T; 3],
    /// Unit eigenvector of the smallest eigenvalue.
    pub normal: Point3<T>,
    /// Unit eigenvectors matching `values`.
    pub vectors: [Point3<T>; 3],
}

impl<T: Scalar> EigenDecomp<T> {
    pub fn sum(&self) -> T {
        self.values[0] + self.values[1] + self.values[2]
    }

    /// Eigenvalues divided by their sum; `None` if the sum is zero.
    pub fn normalized(&self) -> Option<[T; 3]> {
        let s = self.sum();
        if s > T::zero() {
            Some(self.values.map(|v| v / s))
        } else {
            None
        }
    }

    /// Shannon entropy of the normalized eigenvalues with `0 ln 0 = 0`.
    pub fn eigenentropy(&self) -> Option<T> {
        self.normalized().map(entropy)
    }
}

pub(crate) fn entropy<T: Scalar>(e: [T; 3]) -> T {
    e.iter()
        .filter(|&&v| v > T::zero())
        .map(|&v| -v * v.ln())
        .sum()
}

/// Symmetric 3x3 matrix stored as `[xx, xy, xz, yy, yz, zz]`.
pub(crate) type Sym3<T> = [T; 6];

/// Population covariance about the centroid.
pub fn covariance<T: Scalar>(points: &[Point3<T>]) -> Sym3<T> {
    let n = T::of_usize(points.len());
    let c = points.iter().fold(Point3::default(), |a, &p| a + p) * (T::one() / n);
    let mut m = [T::zero(); 6];
    for &p in points {
        let d = p - c;
        m[0] += d.x * d.x;
        m[1] += d.x * d.y;
        m[2] += d.x * d.z;
        m[3] += d.y * d.y;
        m[4] += d.y * d.z;
        m[5] += d.z * d.z;
    }
    m.map(|v| v / n)
}

pub fn eigen_decompose<T: Scalar>(neighborhood: &[Point3<T>]) -> Result<EigenDecomp<T>> {
    if neighborhood.len() < 3 {
        return Err(Error::invalid(format!(
            "eigen decomposition needs at least 3 points, got {}",
            neighborhood.len()
        )));
    }
    Ok(sym3_eigen(covariance(neighborhood)))
}

/// Cyclic Jacobi eigen-solver for a symmetric 3x3 matrix.
pub(crate) fn sym3_eigen<T: Scalar>(m: Sym3<T>) -> EigenDecomp<T> {
    let mut a = [[m[0], m[1], m[2]], [m[1], m[3], m[4]], [m[2], m[4], m[5]]];
    let mut v = [[T::one(), T::zero(), T::zero()], [T::zero(), T::one(), T::zero()], [
        T::zero(),
        T::zero(),
        T::one(),
    ]];
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(T::zero(), |acc, &x| acc.max(x.abs()));
    if scale > T::zero() {
        let tiny = T::epsilon() * T::epsilon() * scale * scale;
        for _sweep in 0..64 {
            let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
            if off <= tiny {
                break;
            }
            for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
                if a[p][q] == T::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (T::of(2.0) * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..3 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..3 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| {
        a[j][j]
            .partial_cmp(&a[i][i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = order.map(|i| a[i][i]);
    // Round-off can leave tiny negative or positive residue on a rank-deficient
    // covariance; anything below this fraction of the trace is zero.
    let trace: T = values.iter().map(|v| v.abs()).sum();
    let floor = T::of(64.0) * T::epsilon() * trace;
    let values = values.map(|x| if x <= floor { T::zero() } else { x });
    let vectors = order.map(|i| {
        let p = Point3::new(v[0][i], v[1][i], v[2][i]);
        p * (T::one() / p.norm())
    });
    EigenDecomp {
        values,
        normal: vectors[2],
        vectors,
    }
}

/// Eigenvalues `(μ1, μ2)`, descending, of the population covariance of XY
/// coordinates.
pub(crate) fn eigen2_xy<T: Scalar>(points: impl Iterator<Item = [T; 2]> + Clone) -> [T; 2] {
    let mut n = T::zero();
    let (mut sx, mut sy) = (T::zero(), T::zero());
    for p in points.clone() {
        n += T::one();
        sx += p[0];
        sy += p[1];
    }
    let (cx, cy) = (sx / n, sy / n);
    let (mut xx, mut xy, mut yy) = (T::zero(), T::zero(), T::zero());
    for p in points {
        let dx = p[0] - cx;
        let dy = p[1] - cy;
        xx += dx * dx;
        xy += dx * dy;
        yy += dy * dy;
    }
    let (xx, xy, yy) = (xx / n, xy / n, yy / n);
    let half_tr = (xx + yy) / T::of(2.0);
    let disc = (((xx - yy) / T::of(2.0)).powi(2) + xy * xy).sqrt();
    let mu1 = half_tr + disc;
    let mu2 = (half_tr - disc).max(T::zero());
    [mu1, mu2]
}
