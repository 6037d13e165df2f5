//! Point-proximity test used to decide whether a chord runs on the sampled
//! surface.

use super::voxel::{VoxelGrid, Walk};
use crate::error::Result;
use crate::geometry::{dot, sub, Point3};
use crate::scalar::Scalar;

/// Points bucketed by lattice cell. A location counts as surface when some
/// cloud point lies within one cell width of it; unlike cell occupancy this
/// predicate does not depend on how the lattice is oriented.
pub(crate) struct SurfaceIndex<T> {
    grid: VoxelGrid<T>,
    radius_sq: T,
    // Cells with at least one occupied cell in their 3×3×3 neighbourhood.
    reachable: Vec<bool>,
    starts: Vec<u32>,
    points: Vec<Point3<T>>,
}

impl<T: Scalar> SurfaceIndex<T> {
    pub(crate) fn new(
        points: &[Point3<T>],
        center: Point3<T>,
        radius: T,
        resolution: usize,
    ) -> Result<Self> {
        let mut grid = VoxelGrid::around(center, radius, resolution)?;
        let cells = resolution * resolution * resolution;
        let mut keyed: Vec<(usize, Point3<T>)> = points
            .iter()
            .map(|&p| {
                grid.occupy(p);
                (grid.index(grid.cell_of(p)), p)
            })
            .collect();
        keyed.sort_by_key(|&(c, _)| c);

        let mut starts = vec![0u32; cells + 1];
        for &(c, _) in &keyed {
            starts[c + 1] += 1;
        }
        for i in 0..cells {
            starts[i + 1] += starts[i];
        }
        let mut reachable = vec![false; cells];
        let r = resolution;
        for &(ci, _) in &keyed {
            let (x, y, z) = (ci / (r * r), (ci / r) % r, ci % r);
            for nx in x.saturating_sub(1)..=(x + 1).min(r - 1) {
                for ny in y.saturating_sub(1)..=(y + 1).min(r - 1) {
                    for nz in z.saturating_sub(1)..=(z + 1).min(r - 1) {
                        reachable[grid.index([nx, ny, nz])] = true;
                    }
                }
            }
        }
        let cell = grid.cell_size();
        Ok(Self {
            grid,
            radius_sq: cell * cell,
            reachable,
            starts,
            points: keyed.into_iter().map(|(_, p)| p).collect(),
        })
    }

    pub(crate) fn cell_size(&self) -> T {
        self.grid.cell_size()
    }

    /// True when a cloud point lies within one cell width of `q`.
    pub(crate) fn near(&self, q: Point3<T>) -> bool {
        let r = self.grid.resolution();
        let c = self.grid.cell_of(q);
        let own = self.grid.index(c);
        if !self.reachable[own] {
            return false;
        }
        if self.bucket_hits(own, q) {
            return true;
        }
        for x in c[0].saturating_sub(1)..=(c[0] + 1).min(r - 1) {
            for y in c[1].saturating_sub(1)..=(c[1] + 1).min(r - 1) {
                for z in c[2].saturating_sub(1)..=(c[2] + 1).min(r - 1) {
                    let i = self.grid.index([x, y, z]);
                    if i != own && self.bucket_hits(i, q) {
                        return true;
                    }
                }
            }
        }
        false
    }

    #[inline]
    fn bucket_hits(&self, cell: usize, q: Point3<T>) -> bool {
        self.points[self.starts[cell] as usize..self.starts[cell + 1] as usize]
            .iter()
            .any(|&p| {
                let d = sub(p, q);
                dot(d, d) <= self.radius_sq
            })
    }

    /// Probes the chord `a → b` at `k + 1` evenly spaced parameters, with `k`
    /// chosen so consecutive probes are at most one cell apart. The probe
    /// positions scale with the chord, so the result is invariant to rigid
    /// motions of the cloud.
    pub(crate) fn walk(&self, a: Point3<T>, b: Point3<T>, length: T) -> Walk {
        let k = (length / self.cell_size())
            .ceil()
            .to_usize()
            .unwrap_or(1)
            .max(1);
        let kf = T::from_usize_lossy(k);
        let d = sub(b, a);
        Walk::from_flags((0..=k).map(|i| {
            let t = T::from_usize_lossy(i) / kf;
            self.near([a[0] + d[0] * t, a[1] + d[1] * t, a[2] + d[2] * t])
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esf::SegmentKind;

    fn plane_with_gap() -> Vec<Point3<f64>> {
        // Dense unit square in z = 0 with the strip 0.4 < x < 0.6 removed,
        // plus one point lifting the bounding ball off the plane.
        let mut pts = Vec::new();
        for i in 0..=100 {
            for j in 0..=100 {
                let (x, y) = (i as f64 / 100.0, j as f64 / 100.0);
                if !(0.4..=0.6).contains(&x) {
                    pts.push([x, y, 0.0]);
                }
            }
        }
        pts.push([0.5, 0.5, 0.5]);
        pts
    }

    fn chord(idx: &SurfaceIndex<f64>, a: Point3<f64>, b: Point3<f64>) -> SegmentKind {
        let d = sub(b, a);
        idx.walk(a, b, dot(d, d).sqrt()).chord::<f64>().kind
    }

    #[test]
    fn probes_classify_on_off_and_mixed() {
        let pts = plane_with_gap();
        let idx = SurfaceIndex::new(&pts, [0.5, 0.5, 0.1], 0.8, 64).unwrap();
        // Entirely within the sampled plane.
        assert_eq!(
            chord(&idx, [0.0, 0.1, 0.0], [0.3, 0.9, 0.0]),
            SegmentKind::On
        );
        // Leaves the plane, spans the gap, lands on the plane.
        assert_eq!(
            chord(&idx, [0.1, 0.5, 0.0], [0.9, 0.5, 0.0]),
            SegmentKind::Off
        );
        // Lifts off towards the isolated point.
        assert_eq!(
            chord(&idx, [0.0, 0.5, 0.0], [0.5, 0.5, 0.5]),
            SegmentKind::Off
        );
        // Passes through the isolated point at (0.5, 0.5, 0.5) on its way up.
        assert!(idx.near([0.5, 0.5, 0.5]));
        assert_eq!(
            chord(&idx, [0.1, 0.5, 0.0], [0.9, 0.5, 1.0]),
            SegmentKind::Mixed
        );
    }

    #[test]
    fn probe_count_scales_with_length() {
        let pts = plane_with_gap();
        let idx = SurfaceIndex::new(&pts, [0.5, 0.5, 0.1], 0.8, 64).unwrap();
        let cell = idx.cell_size();
        let w = idx.walk([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], 1.0);
        assert_eq!(w.traversed, (1.0 / cell).ceil() as usize + 1);
        let w = idx.walk([0.2, 0.2, 0.0], [0.2, 0.2, 0.0], 0.0);
        assert_eq!((w.traversed, w.occupied), (2, 2));
    }

    #[test]
    fn walk_is_invariant_to_rotation_about_the_centre() {
        let pts = plane_with_gap();
        let c = [0.5, 0.5, 0.1];
        let rot = |p: Point3<f64>| {
            let (s, co) = (0.6f64.sin(), 0.6f64.cos());
            let q = sub(p, c);
            [
                c[0] + co * q[0] - s * q[2],
                c[1] + q[1],
                c[2] + s * q[0] + co * q[2],
            ]
        };
        let rotated: Vec<_> = pts.iter().map(|&p| rot(p)).collect();
        let a = SurfaceIndex::new(&pts, c, 0.8, 64).unwrap();
        let b = SurfaceIndex::new(&rotated, c, 0.8, 64).unwrap();
        let chords: [(Point3<f64>, Point3<f64>); 2] = [
            ([0.0, 0.1, 0.0], [0.3, 0.9, 0.0]),
            ([0.1, 0.5, 0.0], [0.9, 0.5, 1.0]),
        ];
        for (p, q) in chords {
            let len = dot(sub(q, p), sub(q, p)).sqrt();
            assert_eq!(a.walk(p, q, len), b.walk(rot(p), rot(q), len));
        }
    }
}
