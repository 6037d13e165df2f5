//! Synthetic canonical tools built from analytic primitives.
//!
//! Each family is a fixed composition of cylinders, boxes, hemispherical
//! shells and tooth arrays. Every primitive dimension is jittered by up to
//! ±15% per seed, and points are drawn uniformly over the total surface area.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::{Point3, PointCloud};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_from_seed};

pub const MIN_SYNTH_POINTS: usize = 500;
pub const JITTER: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ToolFamily {
    Mallet,
    Blade,
    Scoop,
    FlatSpatula,
    Spike,
    RakeComb,
    SphereBlob,
    BoxBlob,
}

impl ToolFamily {
    pub const ALL: [ToolFamily; 8] = [
        ToolFamily::Mallet,
        ToolFamily::Blade,
        ToolFamily::Scoop,
        ToolFamily::FlatSpatula,
        ToolFamily::Spike,
        ToolFamily::RakeComb,
        ToolFamily::SphereBlob,
        ToolFamily::BoxBlob,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ToolFamily::Mallet => "mallet",
            ToolFamily::Blade => "blade",
            ToolFamily::Scoop => "scoop",
            ToolFamily::FlatSpatula => "flat-spatula",
            ToolFamily::Spike => "spike",
            ToolFamily::RakeComb => "rake-comb",
            ToolFamily::SphereBlob => "sphere-blob",
            ToolFamily::BoxBlob => "box-blob",
        }
    }

    /// The action this family is canonical for; blobs serve no action.
    pub fn action(self) -> Option<&'static str> {
        match self {
            ToolFamily::Mallet => Some("Hit"),
            ToolFamily::Blade => Some("Cut"),
            ToolFamily::Scoop => Some("Scoop"),
            ToolFamily::FlatSpatula => Some("Flip"),
            ToolFamily::Spike => Some("Poke"),
            ToolFamily::RakeComb => Some("Rake"),
            ToolFamily::SphereBlob | ToolFamily::BoxBlob => None,
        }
    }

    pub fn for_action(action: &str) -> Option<ToolFamily> {
        ToolFamily::ALL
            .into_iter()
            .find(|f| f.action().is_some_and(|a| a.eq_ignore_ascii_case(action)))
    }

    /// Instantiates the family's primitives with seed-specific proportions.
    pub fn build(self, seed: u64) -> ToolModel {
        let mut rng = rng_from_seed(derive_seed(seed, &format!("synth/{}/dims", self.name())));
        let mut j = move |v: f64| v * (1.0 + rng.gen_range(-JITTER..=JITTER));
        let z = Axis::Z;
        let parts = match self {
            ToolFamily::Mallet => {
                let (hr, hl) = (j(0.012), j(0.28));
                let (r, l) = (j(0.032), j(0.11));
                vec![
                    Primitive::cylinder([0.0, 0.0, 0.0], z, hr, hl, true),
                    Primitive::cylinder([-l / 2.0, 0.0, hl], Axis::X, r, l, true),
                ]
            }
            ToolFamily::Blade => {
                let (hr, hl) = (j(0.011), j(0.11));
                let half = [j(0.014), j(0.0015), j(0.085)];
                vec![
                    Primitive::cylinder([0.0, 0.0, 0.0], z, hr, hl, true),
                    Primitive::cuboid([0.004, 0.0, hl + half[2]], half),
                ]
            }
            ToolFamily::Scoop => {
                let (hr, hl) = (j(0.007), j(0.18));
                let r = j(0.045);
                vec![
                    Primitive::cylinder([0.0, 0.0, 0.0], z, hr, hl, true),
                    Primitive::HemiShell {
                        center: [0.0, 0.0, hl + r],
                        radius: r,
                        opening: Axis::Y,
                    },
                ]
            }
            ToolFamily::FlatSpatula => {
                let (hr, hl) = (j(0.01), j(0.16));
                let half = [j(0.04), j(0.0015), j(0.05)];
                vec![
                    Primitive::cylinder([0.0, 0.0, 0.0], z, hr, hl, true),
                    Primitive::cuboid([0.0, 0.0, hl + half[2]], half),
                ]
            }
            ToolFamily::Spike => {
                let (hr, hl) = (j(0.014), j(0.10));
                let (sr, sl) = (j(0.0025), j(0.14));
                vec![
                    Primitive::cylinder([0.0, 0.0, 0.0], z, hr, hl, true),
                    Primitive::cylinder([0.0, 0.0, hl], z, sr, sl, true),
                ]
            }
            ToolFamily::RakeComb => {
                let (hr, hl) = (j(0.01), j(0.22));
                let bar = [j(0.07), j(0.006), j(0.006)];
                let (tr, tl) = (j(0.003), j(0.05));
                let mut parts = vec![
                    Primitive::cylinder([0.0, 0.0, 0.0], z, hr, hl, true),
                    Primitive::cuboid([0.0, 0.0, hl], bar),
                ];
                let teeth = 7;
                let span = bar[0] * 0.85;
                for t in 0..teeth {
                    let x = -span + 2.0 * span * t as f64 / (teeth - 1) as f64;
                    parts.push(Primitive::cylinder([x, 0.0, hl + bar[2]], z, tr, tl, true));
                }
                parts
            }
            ToolFamily::SphereBlob => vec![Primitive::Sphere {
                center: [0.0, 0.0, 0.0],
                radius: j(0.05),
            }],
            ToolFamily::BoxBlob => vec![Primitive::cuboid(
                [0.0, 0.0, 0.0],
                [j(0.04), j(0.03), j(0.025)],
            )],
        };
        ToolModel {
            family: self,
            seed,
            parts,
        }
    }
}

impl fmt::Display for ToolFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ToolFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        ToolFamily::ALL
            .into_iter()
            .find(|f| f.name() == norm)
            .ok_or_else(|| Error::Unknown {
                kind: "tool family",
                token: s.into(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    /// Maps local `(u, v, w)` with `w` along the axis to world coordinates.
    fn orient(self, local: [f64; 3]) -> [f64; 3] {
        let [u, v, w] = local;
        match self {
            Axis::X => [w, u, v],
            Axis::Y => [v, w, u],
            Axis::Z => [u, v, w],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// Cylinder whose base disk is centred on `base` and which extends
    /// `length` along `axis`.
    Cylinder {
        base: [f64; 3],
        axis: Axis,
        radius: f64,
        length: f64,
        capped: bool,
    },
    Cuboid {
        center: [f64; 3],
        half: [f64; 3],
    },
    /// Half sphere whose open rim faces `+opening`.
    HemiShell {
        center: [f64; 3],
        radius: f64,
        opening: Axis,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
}

impl Primitive {
    fn cylinder(base: [f64; 3], axis: Axis, radius: f64, length: f64, capped: bool) -> Self {
        Primitive::Cylinder {
            base,
            axis,
            radius,
            length,
            capped,
        }
    }

    fn cuboid(center: [f64; 3], half: [f64; 3]) -> Self {
        Primitive::Cuboid { center, half }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Primitive::Cylinder {
                radius,
                length,
                capped,
                ..
            } => {
                2.0 * PI * radius * length
                    + if capped {
                        2.0 * PI * radius * radius
                    } else {
                        0.0
                    }
            }
            Primitive::Cuboid {
                half: [a, b, c], ..
            } => 8.0 * (a * b + b * c + a * c),
            Primitive::HemiShell { radius, .. } => 2.0 * PI * radius * radius,
            Primitive::Sphere { radius, .. } => 4.0 * PI * radius * radius,
        }
    }

    /// Uniform sample on the primitive's surface.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> [f64; 3] {
        match *self {
            Primitive::Cylinder {
                base,
                axis,
                radius,
                length,
                capped,
            } => {
                let side = 2.0 * PI * radius * length;
                let cap = if capped { PI * radius * radius } else { 0.0 };
                let pick = rng.gen::<f64>() * (side + 2.0 * cap);
                let theta = rng.gen::<f64>() * 2.0 * PI;
                let local = if pick < side {
                    [
                        radius * theta.cos(),
                        radius * theta.sin(),
                        rng.gen::<f64>() * length,
                    ]
                } else {
                    let r = radius * rng.gen::<f64>().sqrt();
                    let w = if pick < side + cap { 0.0 } else { length };
                    [r * theta.cos(), r * theta.sin(), w]
                };
                add(base, axis.orient(local))
            }
            Primitive::Cuboid { center, half } => {
                let [a, b, c] = half;
                let faces = [b * c, b * c, a * c, a * c, a * b, a * b];
                let total: f64 = faces.iter().sum();
                let mut pick = rng.gen::<f64>() * total;
                let mut face = 5;
                for (i, f) in faces.iter().enumerate() {
                    if pick < *f {
                        face = i;
                        break;
                    }
                    pick -= f;
                }
                let mut p = [
                    rng.gen_range(-a..=a),
                    rng.gen_range(-b..=b),
                    rng.gen_range(-c..=c),
                ];
                let k = face / 2;
                p[k] = if face % 2 == 0 { -half[k] } else { half[k] };
                add(center, p)
            }
            Primitive::HemiShell {
                center,
                radius,
                opening,
            } => {
                // Uniform height on a sphere gives uniform area; keep the closed half.
                let w = -rng.gen::<f64>();
                add(center, opening.orient(sphere_point(rng, w, radius)))
            }
            Primitive::Sphere { center, radius } => {
                let w = rng.gen_range(-1.0..=1.0);
                add(center, sphere_point(rng, w, radius))
            }
        }
    }
}

fn sphere_point<R: Rng>(rng: &mut R, w: f64, radius: f64) -> [f64; 3] {
    let phi = rng.gen::<f64>() * 2.0 * PI;
    let rho = (1.0 - w * w).max(0.0).sqrt();
    [
        radius * rho * phi.cos(),
        radius * rho * phi.sin(),
        radius * w,
    ]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// One jittered instance of a family, before sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolModel {
    pub family: ToolFamily,
    pub seed: u64,
    pub parts: Vec<Primitive>,
}

impl ToolModel {
    pub fn total_area(&self) -> f64 {
        self.parts.iter().map(Primitive::area).sum()
    }

    /// Samples `n` surface points, returning each with the index of the part
    /// it lies on.
    pub fn sample_parts(&self, n: usize) -> Vec<([f64; 3], usize)> {
        let mut rng = rng_from_seed(derive_seed(
            self.seed,
            &format!("synth/{}/points", self.family.name()),
        ));
        let mut cumulative = Vec::with_capacity(self.parts.len());
        let mut acc = 0.0;
        for p in &self.parts {
            acc += p.area();
            cumulative.push(acc);
        }
        (0..n)
            .map(|_| {
                let pick = rng.gen::<f64>() * acc;
                let idx = cumulative
                    .iter()
                    .position(|&c| pick < c)
                    .unwrap_or(self.parts.len() - 1);
                (self.parts[idx].sample(&mut rng), idx)
            })
            .collect()
    }

    pub fn sample<T: Scalar>(&self, n: usize) -> Result<PointCloud<T>> {
        let points: Vec<Point3<T>> = self
            .sample_parts(n)
            .into_iter()
            .map(|(p, _)| p.map(T::lit))
            .collect();
        PointCloud::new(format!("{}-{}", self.family.name(), self.seed), points)
    }
}

/// Samples `n_points` from the seed-`rng_seed` instance of `family`.
pub fn synth_tool<T: Scalar>(
    family: ToolFamily,
    rng_seed: u64,
    n_points: usize,
) -> Result<PointCloud<T>> {
    if n_points < MIN_SYNTH_POINTS {
        return Err(Error::Config(format!(
            "synthetic clouds need at least {MIN_SYNTH_POINTS} points, got {n_points}"
        )));
    }
    family.build(rng_seed).sample(n_points)
}
