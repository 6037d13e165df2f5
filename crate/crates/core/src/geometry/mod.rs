//! Point clouds, bounding boxes and normalization.

mod io;
mod synth;

pub use io::{emit_cloud, emit_cloud_fixed, load_cloud, CloudFormat};
pub use synth::{synth_tool, Primitive, ToolFamily, ToolModel};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type Point3<T> = [T; 3];

/// Minimum number of points a cloud must carry to be read from disk or fed to
/// the shape descriptor.
pub const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T> {
    id: String,
    points: Vec<Point3<T>>,
}

impl<T: Scalar> PointCloud<T> {
    /// Builds a cloud, rejecting non-finite coordinates.
    pub fn new(id: impl Into<String>, points: Vec<Point3<T>>) -> Result<Self> {
        let id = id.into();
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidCloud {
                id,
                reason: format!("point {i} has a non-finite coordinate"),
            });
        }
        Ok(Self { id, points })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Errors unless the cloud has at least [`MIN_POINTS`] points.
    pub fn require_min_points(&self) -> Result<()> {
        if self.points.len() < MIN_POINTS {
            return Err(Error::DegenerateCloud {
                id: self.id.clone(),
                reason: format!("{} points, need at least {MIN_POINTS}", self.points.len()),
            });
        }
        Ok(())
    }

    pub fn centroid(&self) -> Point3<T> {
        let n = T::from_usize_lossy(self.points.len().max(1));
        let mut c = [T::zero(); 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        c.map(|v| v / n)
    }

    pub fn bounding_box(&self) -> Result<BoundingBox<T>> {
        BoundingBox::enclosing(&self.points).ok_or_else(|| Error::DegenerateCloud {
            id: self.id.clone(),
            reason: "empty cloud has no bounding box".into(),
        })
    }

    /// Applies `f` to every point.
    pub fn map_points(&self, f: impl Fn(Point3<T>) -> Point3<T>) -> Result<Self> {
        Self::new(self.id.clone(), self.points.iter().map(|&p| f(p)).collect())
    }
}

/// Axis-aligned box. `min_corner <= max_corner` component-wise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox<T> {
    pub min_corner: Point3<T>,
    pub max_corner: Point3<T>,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn enclosing(points: &[Point3<T>]) -> Option<Self> {
        let first = *points.first()?;
        let (mut lo, mut hi) = (first, first);
        for p in &points[1..] {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Some(Self {
            min_corner: lo,
            max_corner: hi,
        })
    }

    pub fn extent(&self) -> Point3<T> {
        [0, 1, 2].map(|k| self.max_corner[k] - self.min_corner[k])
    }

    pub fn max_extent(&self) -> T {
        let e = self.extent();
        e[0].max(e[1]).max(e[2])
    }

    pub fn diagonal(&self) -> T {
        norm(self.extent())
    }
}

/// Translates the centroid to the origin and scales the bounding-box diagonal
/// to 1.
pub fn normalize_cloud<T: Scalar>(cloud: &PointCloud<T>) -> Result<PointCloud<T>> {
    let bbox = cloud.bounding_box()?;
    let diag = bbox.diagonal();
    if diag.is_nan() || diag <= T::zero() {
        return Err(Error::DegenerateCloud {
            id: cloud.id.clone(),
            reason: "all points coincide".into(),
        });
    }
    let c = cloud.centroid();
    cloud.map_points(|p| [0, 1, 2].map(|k| (p[k] - c[k]) / diag))
}

#[inline]
pub(crate) fn sub<T: Scalar>(a: Point3<T>, b: Point3<T>) -> Point3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: Point3<T>, b: Point3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross<T: Scalar>(a: Point3<T>, b: Point3<T>) -> Point3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn norm<T: Scalar>(a: Point3<T>) -> T {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_corners(side: f64) -> PointCloud<f64> {
        let mut pts = Vec::new();
        for x in [0.0, side] {
            for y in [0.0, side] {
                for z in [0.0, side] {
                    pts.push([x, y, z]);
                }
            }
        }
        PointCloud::new("cube", pts).unwrap()
    }

    fn max_delta(a: &PointCloud<f64>, b: &PointCloud<f64>) -> f64 {
        a.points()
            .iter()
            .zip(b.points())
            .flat_map(|(p, q)| (0..3).map(move |k| (p[k] - q[k]).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn rejects_non_finite() {
        let err = PointCloud::new("bad", vec![[0.0, f64::NAN, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::InvalidCloud { .. }));
    }

    #[test]
    fn unit_cube_normalizes_to_origin_and_unit_diagonal() {
        let n = normalize_cloud(&cube_corners(1.0)).unwrap();
        let c = n.centroid();
        assert!(c.iter().all(|v| v.abs() < 1e-9));
        assert!((n.bounding_box().unwrap().diagonal() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normalization_is_idempotent() {
        let pts = (0..50)
            .map(|i| {
                let t = i as f64;
                [t.sin() * 3.0 + 1.0, (t * 0.7).cos() - 2.0, t * 0.01]
            })
            .collect();
        let once = normalize_cloud(&PointCloud::new("w", pts).unwrap()).unwrap();
        let twice = normalize_cloud(&once).unwrap();
        assert!(max_delta(&once, &twice) < 1e-9);
    }

    #[test]
    fn normalization_removes_scale_and_translation() {
        let base = cube_corners(1.0)
            .map_points(|p| [p[0] * 0.3, p[1], p[2] * 2.0])
            .unwrap();
        let moved = base
            .map_points(|p| [p[0] * 5.0 + 7.0, p[1] * 5.0 - 1.0, p[2] * 5.0])
            .unwrap();
        let a = normalize_cloud(&base).unwrap();
        let b = normalize_cloud(&moved).unwrap();
        assert!(max_delta(&a, &b) < 1e-9);
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let c = PointCloud::new("dup", vec![[1.0, 2.0, 3.0]; 6]).unwrap();
        assert!(matches!(
            normalize_cloud(&c),
            Err(Error::DegenerateCloud { .. })
        ));
    }
}
