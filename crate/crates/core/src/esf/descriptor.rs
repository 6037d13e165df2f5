use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;

use super::surface::SurfaceIndex;
use super::voxel::{SegmentClass, SegmentKind};
use crate::error::{Error, Result};
use crate::geometry::{cross, dot, norm, sub, Point3, PointCloud};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_from_seed};

pub const BINS: usize = 64;
pub const BLOCKS: usize = 10;
pub const ESF_DIM: usize = BINS * BLOCKS;

/// Histogram blocks in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EsfBlock {
    D2On,
    D2Off,
    D2Mixed,
    D3On,
    D3Off,
    D3Mixed,
    A3On,
    A3Off,
    A3Mixed,
    Ratio,
}

impl EsfBlock {
    pub const ALL: [EsfBlock; BLOCKS] = [
        EsfBlock::D2On,
        EsfBlock::D2Off,
        EsfBlock::D2Mixed,
        EsfBlock::D3On,
        EsfBlock::D3Off,
        EsfBlock::D3Mixed,
        EsfBlock::A3On,
        EsfBlock::A3Off,
        EsfBlock::A3Mixed,
        EsfBlock::Ratio,
    ];

    pub fn offset(self) -> usize {
        self as usize * BINS
    }

    fn d2(kind: SegmentKind) -> Self {
        match kind {
            SegmentKind::On => EsfBlock::D2On,
            SegmentKind::Off => EsfBlock::D2Off,
            SegmentKind::Mixed => EsfBlock::D2Mixed,
        }
    }

    fn d3(kind: SegmentKind) -> Self {
        match kind {
            SegmentKind::On => EsfBlock::D3On,
            SegmentKind::Off => EsfBlock::D3Off,
            SegmentKind::Mixed => EsfBlock::D3Mixed,
        }
    }

    fn a3(kind: SegmentKind) -> Self {
        match kind {
            SegmentKind::On => EsfBlock::A3On,
            SegmentKind::Off => EsfBlock::A3Off,
            SegmentKind::Mixed => EsfBlock::A3Mixed,
        }
    }
}

impl fmt::Display for EsfBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EsfBlock::D2On => "D2-on",
            EsfBlock::D2Off => "D2-off",
            EsfBlock::D2Mixed => "D2-mixed",
            EsfBlock::D3On => "D3-on",
            EsfBlock::D3Off => "D3-off",
            EsfBlock::D3Mixed => "D3-mixed",
            EsfBlock::A3On => "A3-on",
            EsfBlock::A3Off => "A3-off",
            EsfBlock::A3Mixed => "A3-mixed",
            EsfBlock::Ratio => "RATIO",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EsfParams {
    /// Number of point triples drawn.
    pub n_samples: usize,
    pub voxel_resolution: usize,
    pub rng_seed: u64,
}

impl Default for EsfParams {
    fn default() -> Self {
        Self {
            n_samples: 20_000,
            voxel_resolution: 64,
            rng_seed: 0,
        }
    }
}

impl EsfParams {
    pub const MIN_SAMPLES: usize = 1000;

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < Self::MIN_SAMPLES {
            return Err(Error::Config(format!(
                "ESF needs at least {} samples, got {}",
                Self::MIN_SAMPLES,
                self.n_samples
            )));
        }
        if self.voxel_resolution < super::MIN_RESOLUTION {
            return Err(Error::Config(format!(
                "voxel resolution {} below minimum {}",
                self.voxel_resolution,
                super::MIN_RESOLUTION
            )));
        }
        Ok(())
    }
}

/// 640 values in ten consecutive unit-sum 64-bin blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct EsfDescriptor<T> {
    values: Vec<T>,
    empty_blocks: Vec<EsfBlock>,
}

impl<T: Scalar> EsfDescriptor<T> {
    /// Wraps stored values, checking range and per-block normalization.
    pub fn from_values(values: Vec<T>) -> Result<Self> {
        if values.len() != ESF_DIM {
            return Err(Error::DimensionMismatch {
                expected: ESF_DIM,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
            return Err(Error::Config("ESF values must lie in [0, 1]".into()));
        }
        let mut empty_blocks = Vec::new();
        let tol = T::lit(1e-4);
        for block in EsfBlock::ALL {
            let sum: T = values[block.offset()..block.offset() + BINS]
                .iter()
                .copied()
                .sum();
            if sum == T::zero() {
                empty_blocks.push(block);
            } else if (sum - T::one()).abs() > tol {
                return Err(Error::Config(format!("ESF block {block} sums to {sum}")));
            }
        }
        Ok(Self {
            values,
            empty_blocks,
        })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn block(&self, block: EsfBlock) -> &[T] {
        &self.values[block.offset()..block.offset() + BINS]
    }

    /// Blocks that received no samples and were left all-zero.
    pub fn empty_blocks(&self) -> &[EsfBlock] {
        &self.empty_blocks
    }

    pub fn is_complete(&self) -> bool {
        self.empty_blocks.is_empty()
    }
}

/// L1 distance over all 640 values.
pub fn esf_distance<T: Scalar>(a: &EsfDescriptor<T>, b: &EsfDescriptor<T>) -> T {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (*x - *y).abs())
        .sum()
}

#[inline]
fn bin<T: Scalar>(v: T) -> usize {
    let scaled = (v * T::from_usize_lossy(BINS)).floor();
    scaled.to_usize().unwrap_or(0).min(BINS - 1)
}

/// Computes the descriptor of a normalized cloud.
///
/// Points are put into a canonical order (distance from the centroid, then
/// coordinates) before triples are drawn, so the result depends only on the
/// point set and `params`. That order, the distance scale (diameter of the
/// centroid-centred bounding ball) and the lattice framing are all unchanged
/// by rigid motions. Chords are classified by probing them against the point set (see
/// `SurfaceIndex`), which keeps the ON/OFF/MIXED split orientation-free too.
pub fn compute_esf<T: Scalar>(
    cloud: &PointCloud<T>,
    params: &EsfParams,
) -> Result<EsfDescriptor<T>> {
    params.validate()?;
    cloud.require_min_points()?;

    let diag = cloud.bounding_box()?.diagonal();
    if diag.is_nan() || diag <= T::zero() {
        return Err(Error::DegenerateCloud {
            id: cloud.id().to_string(),
            reason: "all points coincide".into(),
        });
    }
    let center = cloud.centroid();
    let mut keyed: Vec<(T, Point3<T>)> = cloud
        .points()
        .iter()
        .map(|&p| (norm(sub(p, center)), p))
        .collect();
    keyed.sort_by(|(ra, a), (rb, b)| {
        ra.partial_cmp(rb)
            .unwrap()
            .then(a[0].partial_cmp(&b[0]).unwrap())
            .then(a[1].partial_cmp(&b[1]).unwrap())
            .then(a[2].partial_cmp(&b[2]).unwrap())
    });
    let radius = keyed.last().map(|k| k.0).unwrap_or_else(T::zero);
    let points: Vec<Point3<T>> = keyed.into_iter().map(|(_, p)| p).collect();
    let scale = radius + radius;
    let area_norm = scale * scale * T::lit(3f64.sqrt() / 4.0);

    let surface = SurfaceIndex::new(&points, center, radius, params.voxel_resolution)?;

    let mut counts = [[0u32; BINS]; BLOCKS];
    let mut add = |block: EsfBlock, v: T| counts[block as usize][bin(v)] += 1;

    let n = points.len();
    let mut rng = rng_from_seed(derive_seed(params.rng_seed, "esf"));
    for _ in 0..params.n_samples {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n);
        while j == i {
            j = rng.gen_range(0..n);
        }
        let mut k = rng.gen_range(0..n);
        while k == i || k == j {
            k = rng.gen_range(0..n);
        }
        let (p1, p2, p3) = (points[i], points[j], points[k]);

        let mut kinds = [SegmentKind::On; 3];
        let mut lengths = [T::zero(); 3];
        for (slot, (a, b)) in [(p1, p2), (p2, p3), (p3, p1)].into_iter().enumerate() {
            lengths[slot] = norm(sub(a, b));
            let class: SegmentClass<T> = surface.walk(a, b, lengths[slot]).chord();
            kinds[slot] = class.kind;
            add(
                EsfBlock::d2(class.kind),
                (lengths[slot] / scale).min(T::one()),
            );
            add(EsfBlock::Ratio, class.fraction);
        }
        let spanning = (0..3).fold(0, |m, s| if lengths[s] > lengths[m] { s } else { m });

        let e1 = sub(p2, p1);
        let e2 = sub(p3, p1);
        let area = norm(cross(e1, e2)) / T::lit(2.0);
        let d3 = (area / area_norm).sqrt().min(T::one());
        add(EsfBlock::d3(kinds[spanning]), d3);

        let lens = norm(e1) * norm(e2);
        if lens > T::zero() {
            let cos = (dot(e1, e2) / lens).max(-T::one()).min(T::one());
            // Opposite side of the angle at p1 is p2–p3.
            add(EsfBlock::a3(kinds[1]), (T::one() - cos) / T::lit(2.0));
        }
    }

    let mut values = vec![T::zero(); ESF_DIM];
    let mut empty_blocks = Vec::new();
    for block in EsfBlock::ALL {
        let hist = &counts[block as usize];
        let total: u32 = hist.iter().sum();
        if total == 0 {
            empty_blocks.push(block);
            continue;
        }
        let total = T::lit(f64::from(total));
        for (slot, &c) in values[block.offset()..].iter_mut().zip(hist) {
            *slot = T::lit(f64::from(c)) / total;
        }
    }
    if !empty_blocks.is_empty() {
        log::warn!(
            "ESF of `{}` has empty blocks {:?}; left as zeros",
            cloud.id(),
            empty_blocks
        );
    }
    Ok(EsfDescriptor {
        values,
        empty_blocks,
    })
}

/// Writes `id,v0,...,v639` rows, one per descriptor.
pub fn write_descriptors<T: Scalar>(
    path: &Path,
    rows: &[(String, EsfDescriptor<T>)],
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        for (id, d) in rows {
            write!(w, "{id}")?;
            for v in d.values() {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

pub fn read_descriptors<T: Scalar>(path: &Path) -> Result<Vec<(String, EsfDescriptor<T>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("id,")) {
            continue;
        }
        let mut fields = line.split(',');
        let id = fields.next().unwrap_or_default().trim().to_string();
        let values = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|_| Error::parse(path, i + 1, format!("bad value `{f}`")))
            })
            .collect::<Result<Vec<T>>>()?;
        if values.len() != ESF_DIM {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected {ESF_DIM} values, found {}", values.len()),
            ));
        }
        let desc = EsfDescriptor::from_values(values)
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push((id, desc));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{normalize_cloud, synth_tool, ToolFamily};

    fn cloud(family: ToolFamily, seed: u64) -> PointCloud<f64> {
        normalize_cloud(&synth_tool(family, seed, 2000).unwrap()).unwrap()
    }

    fn fast() -> EsfParams {
        EsfParams {
            n_samples: 5000,
            ..EsfParams::default()
        }
    }

    #[test]
    fn bins_cover_unit_interval() {
        assert_eq!(bin(0.0f64), 0);
        assert_eq!(bin(1.0f64), 63);
        assert_eq!(bin(0.5f64), 32);
        assert_eq!(bin(0.999f64), 63);
        assert_eq!(bin(1.0f64 / 64.0 - 1e-12), 0);
    }

    #[test]
    fn descriptor_has_ten_unit_blocks() {
        let d = compute_esf(&cloud(ToolFamily::Mallet, 1), &fast()).unwrap();
        assert_eq!(d.values().len(), ESF_DIM);
        assert!(d.is_complete(), "empty blocks {:?}", d.empty_blocks());
        for block in EsfBlock::ALL {
            let s: f64 = d.block(block).iter().sum();
            assert!((s - 1.0).abs() < 1e-6, "{block} sums to {s}");
        }
        assert!(d.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let c = cloud(ToolFamily::Scoop, 4);
        let a = compute_esf(&c, &fast()).unwrap();
        let b = compute_esf(&c, &fast()).unwrap();
        assert_eq!(a, b);
        let other = compute_esf(
            &c,
            &EsfParams {
                rng_seed: 9,
                ..fast()
            },
        )
        .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn invariant_to_point_order() {
        let c = cloud(ToolFamily::Blade, 2);
        let mut pts = c.points().to_vec();
        pts.reverse();
        pts.swap(3, 700);
        let shuffled = PointCloud::new("b", pts).unwrap();
        assert_eq!(
            compute_esf(&c, &fast()).unwrap(),
            compute_esf(&shuffled, &fast()).unwrap()
        );
    }

    #[test]
    fn distance_is_a_symmetric_l1() {
        let a = compute_esf(&cloud(ToolFamily::Spike, 1), &fast()).unwrap();
        let b = compute_esf(&cloud(ToolFamily::BoxBlob, 1), &fast()).unwrap();
        assert_eq!(esf_distance(&a, &a), 0.0);
        assert_eq!(esf_distance(&a, &b), esf_distance(&b, &a));
        assert!(esf_distance(&a, &b) > 0.0);
    }

    #[test]
    fn same_family_closer_than_other_family() {
        let params = EsfParams::default();
        let spoon = compute_esf(&cloud(ToolFamily::Scoop, 1), &params).unwrap();
        let spoon2 = compute_esf(&cloud(ToolFamily::Scoop, 2), &params).unwrap();
        let cup = compute_esf(&cloud(ToolFamily::SphereBlob, 1), &params).unwrap();
        assert!(esf_distance(&spoon, &spoon2) < esf_distance(&spoon, &cup));
    }

    #[test]
    fn tiny_clouds_are_rejected() {
        let c =
            PointCloud::new("t", vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        assert!(matches!(
            compute_esf(&c, &fast()),
            Err(Error::DegenerateCloud { .. })
        ));
        let c = PointCloud::new("t", vec![[0.2f64; 3]; 8]).unwrap();
        assert!(matches!(
            compute_esf(&c, &fast()),
            Err(Error::DegenerateCloud { .. })
        ));
        let ok = cloud(ToolFamily::Mallet, 0);
        assert!(compute_esf(
            &ok,
            &EsfParams {
                n_samples: 999,
                ..fast()
            }
        )
        .is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = compute_esf(&cloud(ToolFamily::FlatSpatula, 3), &fast()).unwrap();
        let p = dir.path().join("esf.csv");
        write_descriptors(&p, &[("flat-3".to_string(), d.clone())]).unwrap();
        let back = read_descriptors::<f64>(&p).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].0, "flat-3");
        assert_eq!(back[0].1, d);
    }
}
