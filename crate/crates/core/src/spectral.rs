//! Spectrometer readings, material classes and the action–material
//! compatibility table.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::action::ActionName;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_from_seed};

/// Channels per spectrometer scan.
pub const SPECTRUM_DIM: usize = 331;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MaterialClass {
    Metal,
    Wood,
    Plastic,
    Paper,
    Foam,
}

impl MaterialClass {
    pub const ALL: [MaterialClass; 5] = [
        MaterialClass::Metal,
        MaterialClass::Wood,
        MaterialClass::Plastic,
        MaterialClass::Paper,
        MaterialClass::Foam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MaterialClass::Metal => "metal",
            MaterialClass::Wood => "wood",
            MaterialClass::Plastic => "plastic",
            MaterialClass::Paper => "paper",
            MaterialClass::Foam => "foam",
        }
    }

    /// Gaussian bumps `(centre channel, width, amplitude)` of the class
    /// template.
    fn bumps(self) -> &'static [(f64, f64, f64)] {
        match self {
            MaterialClass::Metal => &[
                (40.0, 18.0, 0.60),
                (120.0, 25.0, 0.90),
                (210.0, 20.0, 0.50),
                (300.0, 15.0, 0.70),
            ],
            MaterialClass::Wood => &[(60.0, 22.0, 0.80), (150.0, 30.0, 0.55), (250.0, 18.0, 0.95)],
            MaterialClass::Plastic => &[
                (30.0, 12.0, 0.50),
                (95.0, 20.0, 0.85),
                (180.0, 15.0, 0.60),
                (240.0, 25.0, 0.40),
                (310.0, 10.0, 0.75),
            ],
            MaterialClass::Paper => &[(80.0, 35.0, 0.70), (170.0, 20.0, 0.90), (280.0, 30.0, 0.60)],
            MaterialClass::Foam => &[
                (20.0, 10.0, 0.90),
                (110.0, 18.0, 0.45),
                (200.0, 28.0, 0.80),
                (265.0, 12.0, 0.55),
                (320.0, 8.0, 0.65),
            ],
        }
    }

    pub fn template(self) -> Vec<f64> {
        (0..SPECTRUM_DIM)
            .map(|c| {
                self.bumps()
                    .iter()
                    .map(|&(mu, w, a)| a * (-0.5 * ((c as f64 - mu) / w).powi(2)).exp())
                    .sum()
            })
            .collect()
    }
}

impl fmt::Display for MaterialClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaterialClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        MaterialClass::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::Unknown {
                kind: "material",
                token: t.into(),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReading<T> {
    values: Vec<T>,
    pub material: Option<MaterialClass>,
    pub object_id: String,
}

impl<T: Scalar> SpectralReading<T> {
    pub fn new(
        values: Vec<T>,
        material: Option<MaterialClass>,
        object_id: impl Into<String>,
    ) -> Result<Self> {
        if values.len() != SPECTRUM_DIM {
            return Err(Error::DimensionMismatch {
                expected: SPECTRUM_DIM,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "spectral reading has non-finite values".into(),
            ));
        }
        Ok(Self {
            values,
            material,
            object_id: object_id.into(),
        })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Reads a `material,object_id,v0,...,v330` CSV. An empty material field
/// means the class is unknown.
pub fn load_spectra<T: Scalar>(path: &Path) -> Result<Vec<SpectralReading<T>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            if line.to_ascii_lowercase().starts_with("material,") {
                continue;
            }
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != SPECTRUM_DIM + 2 {
            return Err(Error::parse(
                path,
                i + 1,
                format!(
                    "expected {} values, found {}",
                    SPECTRUM_DIM,
                    fields.len().saturating_sub(2)
                ),
            ));
        }
        let material = match fields[0].trim() {
            "" => None,
            m => Some(
                m.parse()
                    .map_err(|e: Error| Error::parse(path, i + 1, e.to_string()))?,
            ),
        };
        let values = fields[2..]
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(T::lit)
                    .ok_or_else(|| Error::parse(path, i + 1, format!("bad value `{f}`")))
            })
            .collect::<Result<Vec<T>>>()?;
        out.push(SpectralReading::new(values, material, fields[1].trim())?);
    }
    Ok(out)
}

pub fn write_spectra<T: Scalar>(path: &Path, readings: &[SpectralReading<T>]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        write!(w, "material,object_id")?;
        for c in 0..SPECTRUM_DIM {
            write!(w, ",v{c}")?;
        }
        writeln!(w)?;
        for r in readings {
            write!(
                w,
                "{},{}",
                r.material.map_or("", MaterialClass::name),
                r.object_id
            )?;
            for v in &r.values {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Synthetic scan: class template with per-seed amplitude jitter, a smooth
/// baseline drift and white channel noise at 5% of the template peak.
pub fn synth_spectrum<T: Scalar>(material: MaterialClass, rng_seed: u64) -> SpectralReading<T> {
    let mut rng = rng_from_seed(derive_seed(
        rng_seed,
        &format!("spectrum/{}", material.name()),
    ));
    let template = material.template();
    let peak = template.iter().copied().fold(0.0, f64::max);
    let gain = 1.0 + rng.gen_range(-0.1..=0.1);
    let offset = rng.gen_range(-0.05..=0.05);
    let slope = rng.gen_range(-0.05..=0.05);
    let wiggle = rng.gen_range(0.0..=0.03);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let noise = Normal::new(0.0, 0.05 * peak).expect("positive sigma");
    let values = template
        .iter()
        .enumerate()
        .map(|(c, &t)| {
            let x = c as f64 / (SPECTRUM_DIM - 1) as f64;
            let drift = offset + slope * x + wiggle * (2.0 * PI * x + phase).sin();
            T::lit(gain * t + drift + noise.sample(&mut rng))
        })
        .collect();
    SpectralReading {
        values,
        material: Some(material),
        object_id: format!("{}-{}", material.name(), rng_seed),
    }
}

/// Action → set of appropriate material classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompatibilityTable {
    rows: BTreeMap<ActionName, BTreeSet<MaterialClass>>,
}

impl CompatibilityTable {
    /// Every set must be non-empty and leave at least one class out.
    pub fn new(rows: BTreeMap<ActionName, BTreeSet<MaterialClass>>) -> Result<Self> {
        for (action, set) in &rows {
            if set.is_empty() || set.len() == MaterialClass::ALL.len() {
                return Err(Error::Config(format!(
                    "action `{action}` must map to a non-empty, non-universal material set"
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn materials(&self, action: &ActionName) -> Option<&BTreeSet<MaterialClass>> {
        self.rows.get(action)
    }

    pub fn is_compatible(&self, action: &ActionName, material: MaterialClass) -> bool {
        self.rows.get(action).is_some_and(|s| s.contains(&material))
    }

    pub fn actions(&self) -> impl Iterator<Item = &ActionName> {
        self.rows.keys()
    }

    /// Parses `action: class[,class...]` lines; `#` starts a comment.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut rows = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (action, classes) = line
                .split_once(':')
                .ok_or_else(|| Error::parse(path, i + 1, "expected `action: class[,class...]`"))?;
            let action: ActionName = action
                .parse()
                .map_err(|e: Error| Error::parse(path, i + 1, e.to_string()))?;
            let set = classes
                .split(',')
                .filter(|c| !c.trim().is_empty())
                .map(|c| c.parse::<MaterialClass>())
                .collect::<Result<BTreeSet<_>>>()
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            rows.insert(action, set);
        }
        Self::new(rows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_config_string(&self) -> String {
        self.rows
            .iter()
            .map(|(a, set)| {
                let classes: Vec<&str> = set.iter().map(|m| m.name()).collect();
                format!("{a}: {}\n", classes.join(","))
            })
            .collect()
    }
}

/// Built-in table. Hit → {metal, wood} and Cut ∋ metal are the fixed facts;
/// the remaining rows are defaults meant to be overridden from a config file.
pub fn default_compatibility() -> CompatibilityTable {
    use MaterialClass::*;
    let rows: [(&str, &[MaterialClass]); 6] = [
        ("Hit", &[Metal, Wood]),
        ("Cut", &[Metal]),
        ("Scoop", &[Metal, Plastic, Wood]),
        ("Flip", &[Metal, Plastic, Wood]),
        ("Poke", &[Metal, Wood, Plastic]),
        ("Rake", &[Metal, Plastic, Wood]),
    ];
    let rows = rows
        .into_iter()
        .map(|(a, ms)| {
            (
                ActionName::new(a).expect("valid action"),
                ms.iter().copied().collect(),
            )
        })
        .collect();
    CompatibilityTable::new(rows).expect("default table is valid")
}
