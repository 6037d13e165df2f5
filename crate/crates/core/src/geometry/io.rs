//! XYZ and ASCII PLY point-cloud files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use super::{Point3, PointCloud};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    PlyAscii,
}

impl CloudFormat {
    /// Picks a format from the file extension (`.xyz`, `.ply`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "xyz" | "txt" => Some(CloudFormat::Xyz),
            "ply" => Some(CloudFormat::PlyAscii),
            _ => None,
        }
    }
}

impl FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xyz" => Ok(CloudFormat::Xyz),
            "ply" | "ply-ascii" => Ok(CloudFormat::PlyAscii),
            _ => Err(Error::Unknown {
                kind: "cloud format",
                token: s.into(),
            }),
        }
    }
}

/// Reads a cloud; the id is the file stem.
pub fn load_cloud<T: Scalar>(path: &Path, format: CloudFormat) -> Result<PointCloud<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let points = match format {
        CloudFormat::Xyz => parse_xyz(path, &text)?,
        CloudFormat::PlyAscii => parse_ply(path, &text)?,
    };
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let cloud = PointCloud::new(id, points)?;
    cloud.require_min_points()?;
    Ok(cloud)
}

/// Writes a cloud using shortest round-trip decimal formatting.
pub fn emit_cloud<T: Scalar>(
    cloud: &PointCloud<T>,
    path: &Path,
    format: CloudFormat,
) -> Result<()> {
    write_cloud(cloud, path, format, None)
}

/// Writes a cloud with a fixed number of decimals per coordinate.
pub fn emit_cloud_fixed<T: Scalar>(
    cloud: &PointCloud<T>,
    path: &Path,
    format: CloudFormat,
    decimals: usize,
) -> Result<()> {
    write_cloud(cloud, path, format, Some(decimals))
}

fn write_cloud<T: Scalar>(
    cloud: &PointCloud<T>,
    path: &Path,
    format: CloudFormat,
    decimals: Option<usize>,
) -> Result<()> {
    cloud.require_min_points()?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        if format == CloudFormat::PlyAscii {
            writeln!(w, "ply\nformat ascii 1.0")?;
            writeln!(w, "comment id {}", cloud.id())?;
            writeln!(w, "element vertex {}", cloud.len())?;
            writeln!(w, "property float x\nproperty float y\nproperty float z")?;
            writeln!(w, "end_header")?;
        }
        for p in cloud.points() {
            match decimals {
                Some(d) => writeln!(w, "{:.d$} {:.d$} {:.d$}", p[0], p[1], p[2])?,
                None => writeln!(w, "{} {} {}", p[0], p[1], p[2])?,
            }
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

fn parse_coords<T: Scalar>(path: &Path, lineno: usize, tokens: &[&str]) -> Result<Point3<T>> {
    let mut p = [T::zero(); 3];
    for (k, tok) in tokens.iter().take(3).enumerate() {
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad coordinate `{tok}`")))?;
        if !v.is_finite() {
            return Err(Error::parse(
                path,
                lineno,
                format!("non-finite coordinate `{tok}`"),
            ));
        }
        p[k] = T::lit(v);
    }
    Ok(p)
}

fn parse_xyz<T: Scalar>(path: &Path, text: &str) -> Result<Vec<Point3<T>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected 3 coordinates, found {}", tokens.len()),
            ));
        }
        out.push(parse_coords(path, i + 1, &tokens)?);
    }
    Ok(out)
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
}

fn parse_ply<T: Scalar>(path: &Path, text: &str) -> Result<Vec<Point3<T>>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(Error::parse(path, 1, "missing `ply` magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut header_done = false;
    for (i, line) in lines.by_ref() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", fmt, ..] => {
                if *fmt != "ascii" {
                    return Err(Error::parse(
                        path,
                        i + 1,
                        format!("unsupported PLY format `{fmt}`"),
                    ));
                }
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::parse(path, i + 1, "bad element count"))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", .., name] | ["property", _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, i + 1, "property before element"))?;
                el.properties.push(name.to_string());
            }
            ["end_header"] => {
                header_done = true;
                break;
            }
            [] | ["comment", ..] | ["obj_info", ..] => {}
            _ => {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("unexpected header line `{line}`"),
                ))
            }
        }
    }
    if !header_done {
        return Err(Error::parse(
            path,
            text.lines().count(),
            "missing end_header",
        ));
    }

    let mut out = Vec::new();
    for el in &elements {
        let axes = if el.name == "vertex" {
            let find = |n: &str| el.properties.iter().position(|p| p == n);
            match (find("x"), find("y"), find("z")) {
                (Some(x), Some(y), Some(z)) => Some([x, y, z]),
                _ => return Err(Error::parse(path, 1, "vertex element lacks x/y/z")),
            }
        } else {
            None
        };
        let mut read = 0;
        while read < el.count {
            let (i, line) = lines.next().ok_or_else(|| {
                Error::parse(
                    path,
                    text.lines().count(),
                    format!("truncated `{}` element", el.name),
                )
            })?;
            if line.trim().is_empty() {
                continue;
            }
            read += 1;
            if let Some(axes) = axes {
                let tokens: Vec<&str> = line.split_whitespace().collect();
                if tokens.len() < el.properties.len() {
                    return Err(Error::parse(path, i + 1, "too few vertex properties"));
                }
                let picked = axes.map(|k| tokens[k]);
                out.push(parse_coords(path, i + 1, &picked)?);
            }
        }
    }
    Ok(out)
}
