use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{norm, scale, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    Xyz,
}

impl CloudFormat {
    /// `.ply` maps to ascii PLY; anything else is treated as XYZ text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("ply") => CloudFormat::PlyAscii,
            _ => CloudFormat::Xyz,
        }
    }
}

pub fn load_point_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        CloudFormat::PlyAscii => parse_ply(&text),
        CloudFormat::Xyz => parse_xyz(&text),
    }
}

pub fn save_point_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    let text = match format {
        CloudFormat::PlyAscii => write_ply(cloud),
        CloudFormat::Xyz => write_xyz(cloud),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Coordinates use the shortest decimal form that parses back to the same `f64`.
pub fn write_xyz(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 48);
    for (i, p) in cloud.points.iter().enumerate() {
        let _ = write!(out, "{} {} {}", p[0], p[1], p[2]);
        if let Some(n) = &cloud.normals {
            let _ = write!(out, " {} {} {}", n[i][0], n[i][1], n[i][2]);
        }
        out.push('\n');
    }
    out
}

pub fn write_ply(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 48 + 128);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.normals.is_some() {
        out.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    out.push_str("end_header\n");
    out.push_str(&write_xyz(cloud));
    out
}

fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut columns = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values = parse_numbers(line, lineno + 1)?;
        let cols = *columns.get_or_insert(values.len());
        if values.len() != cols || !(cols == 3 || cols == 6) {
            return Err(Error::parse(
                lineno + 1,
                format!("expected 3 or 6 columns consistently, found {}", values.len()),
            ));
        }
        points.push([values[0], values[1], values[2]]);
        if cols == 6 {
            normals.push(unit_normal([values[3], values[4], values[5]], lineno + 1)?);
        }
    }
    finish(points, (columns == Some(6)).then_some(normals))
}

struct VertexLayout {
    count: usize,
    n_props: usize,
    xyz: [usize; 3],
    normal: Option<[usize; 3]>,
}

fn parse_ply(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    match lines.next() {
        Some((_, "ply")) => {}
        Some((n, _)) => return Err(Error::parse(n, "missing 'ply' magic")),
        None => return Err(Error::parse(1, "empty file")),
    }

    // (element name, count, property names) in declaration order
    let mut elements: Vec<(String, usize, Vec<String>)> = Vec::new();
    let mut saw_format = false;
    let mut header_end = None;
    for (n, line) in lines.by_ref() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                match tok.next() {
                    Some("ascii") => {}
                    Some(other) => {
                        return Err(Error::parse(n, format!("unsupported PLY format '{other}'")))
                    }
                    None => return Err(Error::parse(n, "format line lacks a format")),
                }
                saw_format = true;
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = tok
                    .next()
                    .ok_or_else(|| Error::parse(n, "element without name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| Error::parse(n, "element count is not an integer"))?;
                elements.push((name.to_string(), count, Vec::new()));
            }
            Some("property") => {
                let (_, _, props) = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(n, "property before any element"))?;
                let rest: Vec<&str> = tok.collect();
                if rest.first() == Some(&"list") {
                    if rest.len() != 4 {
                        return Err(Error::parse(n, "malformed list property"));
                    }
                    props.push(format!("list:{}", rest[3]));
                } else if rest.len() == 2 {
                    props.push(rest[1].to_string());
                } else {
                    return Err(Error::parse(n, "malformed property line"));
                }
            }
            Some("end_header") => {
                header_end = Some(n);
                break;
            }
            Some(other) => {
                return Err(Error::parse(n, format!("unexpected header keyword '{other}'")))
            }
        }
    }
    let header_end = header_end.ok_or_else(|| Error::parse(1, "missing end_header"))?;
    if !saw_format {
        return Err(Error::parse(header_end, "missing format line"));
    }

    let mut vertex_layout = None;
    for (name, count, props) in &elements {
        if name != "vertex" {
            continue;
        }
        let find = |p: &str| props.iter().position(|q| q == p);
        let xyz = match (find("x"), find("y"), find("z")) {
            (Some(x), Some(y), Some(z)) => [x, y, z],
            _ => {
                return Err(Error::parse(
                    header_end,
                    "vertex element must declare x, y and z",
                ))
            }
        };
        if props.iter().any(|p| p.starts_with("list:")) {
            return Err(Error::parse(header_end, "list properties on vertices are not supported"));
        }
        let normal = match (find("nx"), find("ny"), find("nz")) {
            (Some(a), Some(b), Some(c)) => Some([a, b, c]),
            _ => None,
        };
        vertex_layout = Some(VertexLayout {
            count: *count,
            n_props: props.len(),
            xyz,
            normal,
        });
    }
    let layout =
        vertex_layout.ok_or_else(|| Error::parse(header_end, "no vertex element declared"))?;

    let mut points = Vec::with_capacity(layout.count);
    let mut normals = Vec::new();
    let mut last_line = header_end;
    for (name, count, props) in &elements {
        for _ in 0..*count {
            let (n, line) = loop {
                match lines.next() {
                    Some((_, "")) => continue,
                    Some(l) => break l,
                    None => {
                        return Err(Error::parse(
                            last_line + 1,
                            format!("unexpected end of file: element '{name}' declares {count} rows"),
                        ))
                    }
                }
            };
            last_line = n;
            if name != "vertex" {
                continue;
            }
            let values = parse_numbers(line, n)?;
            if values.len() != props.len() {
                return Err(Error::parse(
                    n,
                    format!("expected {} values, found {}", props.len(), values.len()),
                ));
            }
            debug_assert_eq!(values.len(), layout.n_props);
            let [x, y, z] = layout.xyz;
            points.push([values[x], values[y], values[z]]);
            if let Some([a, b, c]) = layout.normal {
                normals.push(unit_normal([values[a], values[b], values[c]], n)?);
            }
        }
    }
    if let Some((n, _)) = lines.find(|(_, l)| !l.is_empty()) {
        return Err(Error::parse(n, "trailing data after declared elements"));
    }
    finish(points, layout.normal.map(|_| normals))
}

fn parse_numbers(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(lineno, format!("invalid number '{t}'")))
        })
        .collect()
}

fn unit_normal(n: Vec3, lineno: usize) -> Result<Vec3> {
    let len = norm(n);
    if len == 0.0 || !len.is_finite() {
        return Err(Error::parse(lineno, "zero-length normal"));
    }
    if (len - 1.0).abs() <= 1e-6 {
        Ok(n)
    } else {
        Ok(scale(n, 1.0 / len))
    }
}

fn finish(points: Vec<Vec3>, normals: Option<Vec<Vec3>>) -> Result<PointCloud> {
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut cloud = PointCloud::new(points);
    cloud.normals = normals;
    Ok(cloud)
}
