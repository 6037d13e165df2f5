//! Occupancy lattice and 3-D DDA segment traversal.

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Point3, PointCloud};
use crate::scalar::Scalar;

pub const MIN_RESOLUTION: usize = 8;

/// Cubic occupancy lattice of `resolution³` cells.
///
/// Grid coordinates are continuous, in cell units: cell `(i, j, k)` covers
/// `[i, i+1) × [j, j+1) × [k, k+1)`.
#[derive(Debug, Clone)]
pub struct VoxelGrid<T> {
    resolution: usize,
    // World point `anchor` maps to grid coordinate `offset` on every axis and
    // a world length of `span` covers `resolution - 2` cells.
    anchor: Point3<T>,
    span: T,
    offset: T,
    occupancy: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    On,
    Off,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentClass<T> {
    pub kind: SegmentKind,
    /// Occupied cells over traversed cells.
    pub fraction: T,
}

/// Occupancy counts gathered along one traversal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Walk {
    pub traversed: usize,
    pub occupied: usize,
    /// Length of the occupied run starting at the first cell.
    pub leading_run: usize,
    /// Length of the occupied run ending at the last cell.
    pub trailing_run: usize,
}

impl Walk {
    /// Accumulates a walk from per-step occupancy flags, in order.
    pub fn from_flags(flags: impl IntoIterator<Item = bool>) -> Self {
        let mut walk = Walk {
            traversed: 0,
            occupied: 0,
            leading_run: 0,
            trailing_run: 0,
        };
        for occ in flags {
            walk.push(occ);
        }
        walk
    }

    fn push(&mut self, occ: bool) {
        if occ && self.leading_run == self.traversed {
            self.leading_run += 1;
        }
        self.trailing_run = if occ { self.trailing_run + 1 } else { 0 };
        self.traversed += 1;
        self.occupied += usize::from(occ);
    }

    pub fn classify<T: Scalar>(occupied: usize, traversed: usize) -> SegmentClass<T> {
        let kind = if occupied == traversed {
            SegmentKind::On
        } else if occupied == 0 {
            SegmentKind::Off
        } else {
            SegmentKind::Mixed
        };
        SegmentClass {
            kind,
            fraction: T::from_usize_lossy(occupied) / T::from_usize_lossy(traversed.max(1)),
        }
    }

    /// Classification over every traversed cell, endpoints included.
    pub fn full<T: Scalar>(&self) -> SegmentClass<T> {
        Self::classify(self.occupied, self.traversed)
    }

    /// Classification of a chord between two surface samples: the occupied
    /// runs holding the endpoints are the surface the chord leaves and
    /// arrives at, so they are stripped before classifying. ON when the whole
    /// walk is occupied, OFF when nothing between the end runs is, MIXED
    /// otherwise. The fraction is taken over the full walk.
    pub fn chord<T: Scalar>(&self) -> SegmentClass<T> {
        let full = self.full::<T>();
        if self.occupied == self.traversed {
            return full;
        }
        let between = self.occupied - self.leading_run - self.trailing_run;
        SegmentClass {
            kind: if between == 0 {
                SegmentKind::Off
            } else {
                SegmentKind::Mixed
            },
            fraction: full.fraction,
        }
    }
}

impl<T: Scalar> VoxelGrid<T> {
    /// Lattice spanning `bbox` inflated by one cell on every side. Cells are
    /// cubic, sized from the longest box edge.
    pub fn with_bounds(bbox: &BoundingBox<T>, resolution: usize) -> Result<Self> {
        if resolution < MIN_RESOLUTION {
            return Err(Error::Config(format!(
                "voxel resolution {resolution} below minimum {MIN_RESOLUTION}"
            )));
        }
        let extent = bbox.max_extent();
        if extent.is_nan() || extent <= T::zero() {
            return Err(Error::DegenerateCloud {
                id: String::new(),
                reason: "bounding box has zero extent".into(),
            });
        }
        Ok(Self {
            resolution,
            anchor: bbox.min_corner,
            span: extent,
            offset: T::one(),
            occupancy: vec![false; resolution * resolution * resolution],
        })
    }

    /// Lattice centred on `center` whose inner `resolution - 2` cells span the
    /// ball of the given radius. Unlike [`VoxelGrid::with_bounds`] the framing
    /// does not change when the enclosed points are rotated about `center`.
    pub fn around(center: Point3<T>, radius: T, resolution: usize) -> Result<Self> {
        if resolution < MIN_RESOLUTION {
            return Err(Error::Config(format!(
                "voxel resolution {resolution} below minimum {MIN_RESOLUTION}"
            )));
        }
        if radius.is_nan() || radius <= T::zero() {
            return Err(Error::DegenerateCloud {
                id: String::new(),
                reason: "zero bounding radius".into(),
            });
        }
        Ok(Self {
            resolution,
            anchor: center,
            span: radius + radius,
            offset: T::from_usize_lossy(resolution) / T::lit(2.0),
            occupancy: vec![false; resolution * resolution * resolution],
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cell_size(&self) -> T {
        self.span / T::from_usize_lossy(self.resolution - 2)
    }

    /// World position of the lattice corner (grid coordinate 0).
    pub fn origin(&self) -> Point3<T> {
        let cell = self.cell_size();
        self.anchor.map(|a| a - self.offset * cell)
    }

    /// Continuous grid coordinates of `p`, clamped into the lattice.
    pub fn to_grid(&self, p: Point3<T>) -> Point3<T> {
        let hi = T::from_usize_lossy(self.resolution);
        let top = hi - hi * T::epsilon() * T::lit(4.0);
        let inner = T::from_usize_lossy(self.resolution - 2);
        [0, 1, 2].map(|k| {
            let g = (p[k] - self.anchor[k]) / self.span * inner + self.offset;
            g.max(T::zero()).min(top)
        })
    }

    pub fn cell_of(&self, p: Point3<T>) -> [usize; 3] {
        let g = self.to_grid(p);
        g.map(|v| v.floor().to_usize().unwrap_or(0).min(self.resolution - 1))
    }

    #[inline]
    pub(crate) fn index(&self, c: [usize; 3]) -> usize {
        (c[0] * self.resolution + c[1]) * self.resolution + c[2]
    }

    pub fn occupy(&mut self, p: Point3<T>) {
        let i = self.index(self.cell_of(p));
        self.occupancy[i] = true;
    }

    pub fn is_occupied(&self, c: [usize; 3]) -> bool {
        self.occupancy[self.index(c)]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Visits every cell the segment `a → b` passes through, in order
    /// (Amanatides–Woo traversal). Endpoints are clamped into the lattice.
    pub fn traverse(&self, a: Point3<T>, b: Point3<T>, mut visit: impl FnMut([usize; 3])) {
        let ga = self.to_grid(a);
        let gb = self.to_grid(b);
        let mut cell = ga.map(|v| v.floor().to_usize().unwrap_or(0).min(self.resolution - 1));
        let end = gb.map(|v| v.floor().to_usize().unwrap_or(0).min(self.resolution - 1));

        let mut remaining = [0usize; 3];
        let mut step = [0isize; 3];
        let mut t_max = [T::infinity(); 3];
        let mut t_delta = [T::infinity(); 3];
        for k in 0..3 {
            let d = gb[k] - ga[k];
            remaining[k] = cell[k].abs_diff(end[k]);
            if remaining[k] == 0 {
                continue;
            }
            let c = T::from_usize_lossy(cell[k]);
            if end[k] > cell[k] {
                step[k] = 1;
                t_max[k] = (c + T::one() - ga[k]) / d;
            } else {
                step[k] = -1;
                t_max[k] = (c - ga[k]) / d;
            }
            t_delta[k] = T::one() / d.abs();
        }

        visit(cell);
        // Exactly Σ|Δcell| steps: the walk always lands on the end cell.
        for _ in 0..remaining.iter().sum::<usize>() {
            let mut axis = 3;
            for k in 0..3 {
                if remaining[k] > 0 && (axis == 3 || t_max[k] < t_max[axis]) {
                    axis = k;
                }
            }
            cell[axis] = cell[axis].wrapping_add_signed(step[axis]);
            t_max[axis] += t_delta[axis];
            remaining[axis] -= 1;
            visit(cell);
        }
    }

    pub fn walk(&self, a: Point3<T>, b: Point3<T>) -> Walk {
        let mut walk = Walk::from_flags(None);
        self.traverse(a, b, |c| walk.push(self.is_occupied(c)));
        walk
    }
}

/// Occupancy lattice over the cloud's bounding box; a cell is occupied iff it
/// holds at least one point.
pub fn build_voxel_grid<T: Scalar>(
    cloud: &PointCloud<T>,
    resolution: usize,
) -> Result<VoxelGrid<T>> {
    let bbox = cloud.bounding_box()?;
    let mut grid = VoxelGrid::with_bounds(&bbox, resolution).map_err(|e| match e {
        Error::DegenerateCloud { reason, .. } => Error::DegenerateCloud {
            id: cloud.id().to_string(),
            reason,
        },
        e => e,
    })?;
    for &p in cloud.points() {
        grid.occupy(p);
    }
    Ok(grid)
}

/// ON when every traversed cell is occupied, OFF when none is, MIXED
/// otherwise.
pub fn classify_segment<T: Scalar>(
    grid: &VoxelGrid<T>,
    a: Point3<T>,
    b: Point3<T>,
) -> SegmentClass<T> {
    grid.walk(a, b).full()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn unit_box() -> BoundingBox<f64> {
        BoundingBox {
            min_corner: [0.0; 3],
            max_corner: [1.0; 3],
        }
    }

    /// Cell centre in world coordinates.
    fn center(g: &VoxelGrid<f64>, c: [usize; 3]) -> [f64; 3] {
        [0, 1, 2].map(|k| g.origin()[k] + (c[k] as f64 + 0.5) * g.cell_size())
    }

    #[test]
    fn clustered_points_fill_one_cell() {
        let mut g = VoxelGrid::with_bounds(&unit_box(), 8).unwrap();
        for i in 0..20 {
            let t = i as f64 * 1e-3;
            g.occupy([0.40 + t, 0.41, 0.42 - t]);
        }
        assert_eq!(g.occupied_count(), 1);
    }

    #[test]
    fn cube_corners_occupy_eight_corner_cells() {
        let side = 1.0 / 3f64.sqrt();
        let mut pts = Vec::new();
        for x in [-side / 2.0, side / 2.0] {
            for y in [-side / 2.0, side / 2.0] {
                for z in [-side / 2.0, side / 2.0] {
                    pts.push([x, y, z]);
                }
            }
        }
        let cloud = PointCloud::new("corners", pts.clone()).unwrap();
        let g = build_voxel_grid(&cloud, 8).unwrap();
        assert_eq!(g.occupied_count(), 8);
        // Hand enumeration: min corner lands in cell 1 (one padding cell),
        // max corner in cell 1 + (8 - 2) = 7 on every axis.
        let cells: HashSet<_> = pts.iter().map(|&p| g.cell_of(p)).collect();
        let expected: HashSet<_> = [1, 7]
            .into_iter()
            .flat_map(|x| {
                [1, 7]
                    .into_iter()
                    .flat_map(move |y| [1, 7].into_iter().map(move |z| [x, y, z]))
            })
            .collect();
        assert_eq!(cells, expected);
    }

    #[test]
    fn degenerate_box_rejected() {
        let cloud = PointCloud::new("p", vec![[0.5f64; 3]; 5]).unwrap();
        assert!(build_voxel_grid(&cloud, 8).is_err());
        let cloud = PointCloud::new("p", vec![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]).unwrap();
        assert!(build_voxel_grid(&cloud, 7).is_err());
    }

    #[test]
    fn zero_length_segment_in_occupied_cell_is_on() {
        let mut g = VoxelGrid::with_bounds(&unit_box(), 8).unwrap();
        let p = [0.3, 0.3, 0.3];
        g.occupy(p);
        let c = classify_segment(&g, p, p);
        assert_eq!(c.kind, SegmentKind::On);
        assert_eq!(c.fraction, 1.0);
    }

    #[test]
    fn segment_through_empty_space_is_off() {
        let g = VoxelGrid::with_bounds(&unit_box(), 8).unwrap();
        let c = classify_segment(&g, [0.0, 0.1, 0.2], [1.0, 0.9, 0.7]);
        assert_eq!(c.kind, SegmentKind::Off);
        assert_eq!(c.fraction, 0.0);
    }

    #[test]
    fn three_of_seven_cells_occupied_is_mixed() {
        // Axis-aligned run along x through cells 1..=7 at (y, z) = (2, 3):
        // seven cells by hand, of which 1, 4 and 7 are occupied.
        let mut g = VoxelGrid::with_bounds(&unit_box(), 8).unwrap();
        for x in [1, 4, 7] {
            g.occupy(center(&g, [x, 2, 3]));
        }
        let a = center(&g, [1, 2, 3]);
        let b = center(&g, [7, 2, 3]);
        let mut cells = Vec::new();
        g.traverse(a, b, |c| cells.push(c));
        assert_eq!(cells, (1..=7).map(|x| [x, 2, 3]).collect::<Vec<_>>());
        let c = classify_segment(&g, a, b);
        assert_eq!(c.kind, SegmentKind::Mixed);
        assert!((c.fraction - 3.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_walk_is_face_connected_and_ends_at_target() {
        let g = VoxelGrid::with_bounds(&unit_box(), 16).unwrap();
        let a = [0.03, 0.51, 0.97];
        let b = [0.88, 0.02, 0.11];
        let mut cells = Vec::new();
        g.traverse(a, b, |c| cells.push(c));
        assert_eq!(cells[0], g.cell_of(a));
        assert_eq!(*cells.last().unwrap(), g.cell_of(b));
        for w in cells.windows(2) {
            let manhattan: usize = (0..3).map(|k| w[0][k].abs_diff(w[1][k])).sum();
            assert_eq!(manhattan, 1);
        }
        // Every visited cell actually intersects the segment (sampled check).
        for c in &cells {
            let lo = [0, 1, 2].map(|k| g.origin()[k] + c[k] as f64 * g.cell_size());
            let hit = (0..=4000).any(|s| {
                let t = s as f64 / 4000.0;
                (0..3).all(|k| {
                    let v = a[k] + t * (b[k] - a[k]);
                    v >= lo[k] - 1e-9 && v <= lo[k] + g.cell_size() + 1e-9
                })
            });
            assert!(hit, "cell {c:?} not on segment");
        }
    }

    #[test]
    fn occupancy_never_exceeds_point_count() {
        let pts: Vec<_> = (0..300)
            .map(|i| {
                let t = i as f64 * 0.37;
                [t.sin(), (t * 1.3).cos(), (t * 0.11).sin()]
            })
            .collect();
        let cloud = PointCloud::new("c", pts).unwrap();
        for res in [8, 16, 64] {
            let g = build_voxel_grid(&cloud, res).unwrap();
            assert!(g.occupied_count() <= cloud.len());
            assert!(cloud.points().iter().all(|&p| g.is_occupied(g.cell_of(p))));
        }
    }

    #[test]
    fn chord_classification_strips_endpoint_runs() {
        let mut g = VoxelGrid::with_bounds(&unit_box(), 8).unwrap();
        let a = center(&g, [1, 1, 1]);
        let b = center(&g, [6, 1, 1]);
        for x in [1, 2, 6] {
            g.occupy(center(&g, [x, 1, 1]));
        }
        let w = g.walk(a, b);
        assert_eq!(
            (w.traversed, w.occupied, w.leading_run, w.trailing_run),
            (6, 3, 2, 1)
        );
        assert_eq!(w.full::<f64>().kind, SegmentKind::Mixed);
        let chord = w.chord::<f64>();
        assert_eq!(chord.kind, SegmentKind::Off);
        assert_eq!(chord.fraction, 0.5);

        // A surface crossing between the end runs makes it mixed.
        g.occupy(center(&g, [4, 1, 1]));
        assert_eq!(g.walk(a, b).chord::<f64>().kind, SegmentKind::Mixed);
        // Fully occupied stays on.
        for x in 1..=6 {
            g.occupy(center(&g, [x, 1, 1]));
        }
        assert_eq!(g.walk(a, b).chord::<f64>().kind, SegmentKind::On);
    }
}
