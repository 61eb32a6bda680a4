use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Point3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn xy(self) -> [T; 2] {
        [self.x, self.y]
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    pub fn cast<U: Scalar>(self) -> Point3<U> {
        Point3::new(
            U::of(self.x.as_f64()),
            U::of(self.y.as_f64()),
            U::of(self.z.as_f64()),
        )
    }
}

impl<T: Scalar> Add for Point3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Scalar> Sub for Point3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Scalar> Mul<T> for Point3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Ordered point sequence; a point's position in the sequence is its identity.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud<T> {
    points: Vec<Point3<T>>,
}

impl<T: Scalar> PointCloud<T> {
    /// Fails if any coordinate is NaN or infinite.
    pub fn new(points: Vec<Point3<T>>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("point {i} has a non-finite coordinate")));
        }
        Ok(PointCloud { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    pub fn get(&self, i: usize) -> Point3<T> {
        self.points[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3<T>> {
        self.points.iter()
    }

    pub fn into_points(self) -> Vec<Point3<T>> {
        self.points
    }

    /// Componentwise minimum and maximum; `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Point3<T>, Point3<T>)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (
                Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
                Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
            )
        }))
    }

    /// Sub-cloud of the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(Point3<T>) -> Point3<T>) -> Result<Self> {
        PointCloud::new(self.points.iter().map(|&p| f(p)).collect())
    }
}

impl<T: Scalar> TryFrom<Vec<Point3<T>>> for PointCloud<T> {
    type Error = Error;
    fn try_from(points: Vec<Point3<T>>) -> Result<Self> {
        PointCloud::new(points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nan() {
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(f64::NAN, 1.0, 2.0)];
        assert!(PointCloud::new(pts).is_err());
        let pts = vec![Point3::new(0.0f32, f32::INFINITY, 0.0)];
        assert!(PointCloud::new(pts).is_err());
    }

    #[test]
    fn bounds_cover_points() {
        let c = PointCloud::new(vec![
            Point3::new(1.0, -2.0, 3.0),
            Point3::new(-1.0, 5.0, 0.5),
        ])
        .unwrap();
        let (lo, hi) = c.bounds().unwrap();
        assert_eq!(lo, Point3::new(-1.0, -2.0, 0.5));
        assert_eq!(hi, Point3::new(1.0, 5.0, 3.0));
        assert!(PointCloud::<f64>::default().bounds().is_none());
    }
}
