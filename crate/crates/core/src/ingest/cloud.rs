use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudFileFormat {
    XyzAscii,
    PlyAscii,
    PlyBinaryLe,
}

impl CloudFileFormat {
    /// Detects the format from the extension and, for PLY, the header.
    pub fn detect(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "xyz" | "txt" | "pts" => Ok(CloudFileFormat::XyzAscii),
            "ply" => {
                let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
                Ok(read_ply_header(&mut r, path)?.format)
            }
            _ => Err(Error::invalid(format!(
                "{}: unrecognized point cloud extension (expected .xyz or .ply)",
                path.display()
            ))),
        }
    }
}

/// Reads a cloud in the detected format.
pub fn read_cloud_auto(path: &Path) -> Result<PointCloud<f64>> {
    read_cloud(path, CloudFileFormat::detect(path)?)
}

/// Reads a cloud, preserving point order as on disk.
pub fn read_cloud(path: &Path, format: CloudFileFormat) -> Result<PointCloud<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let points = match format {
        CloudFileFormat::XyzAscii => read_xyz(&mut r, path)?,
        CloudFileFormat::PlyAscii | CloudFileFormat::PlyBinaryLe => {
            let header = read_ply_header(&mut r, path)?;
            if header.format != format {
                return Err(Error::Parse {
                    path: path.into(),
                    line: 2,
                    msg: format!("PLY body is {:?}, expected {:?}", header.format, format),
                });
            }
            read_ply_body(&mut r, &header, path)?
        }
    };
    PointCloud::new(points).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

pub fn write_cloud(path: &Path, cloud: &PointCloud<f64>, format: CloudFileFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_cloud_to(&mut w, cloud, format).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_cloud_to(w: &mut impl Write, cloud: &PointCloud<f64>, format: CloudFileFormat) -> std::io::Result<()> {
    match format {
        CloudFileFormat::XyzAscii => {
            for p in cloud.iter() {
                writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
            }
        }
        CloudFileFormat::PlyAscii | CloudFileFormat::PlyBinaryLe => {
            let fmt = if format == CloudFileFormat::PlyAscii { "ascii" } else { "binary_little_endian" };
            write!(
                w,
                "ply\nformat {fmt} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
                cloud.len()
            )?;
            for p in cloud.iter() {
                if format == CloudFileFormat::PlyAscii {
                    writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
                } else {
                    w.write_f64::<LittleEndian>(p.x)?;
                    w.write_f64::<LittleEndian>(p.y)?;
                    w.write_f64::<LittleEndian>(p.z)?;
                }
            }
        }
    }
    Ok(())
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.into(),
        line,
        msg: msg.into(),
    }
}

fn read_xyz(r: &mut impl BufRead, path: &Path) -> Result<Vec<Point3<f64>>> {
    let mut points = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(parse_error(path, i + 1, format!("expected 3 coordinates, found {}", fields.len())));
        }
        let mut c = [0.0; 3];
        for (k, f) in fields[..3].iter().enumerate() {
            c[k] = f
                .parse()
                .map_err(|_| parse_error(path, i + 1, format!("invalid number {f:?}")))?;
        }
        points.push(Point3::new(c[0], c[1], c[2]));
    }
    Ok(points)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PlyType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => PlyType::I8,
            "uchar" | "uint8" => PlyType::U8,
            "short" | "int16" => PlyType::I16,
            "ushort" | "uint16" => PlyType::U16,
            "int" | "int32" => PlyType::I32,
            "uint" | "uint32" => PlyType::U32,
            "float" | "float32" => PlyType::F32,
            "double" | "float64" => PlyType::F64,
            _ => return None,
        })
    }

    fn read(self, r: &mut impl Read) -> std::io::Result<f64> {
        Ok(match self {
            PlyType::I8 => r.read_i8()? as f64,
            PlyType::U8 => r.read_u8()? as f64,
            PlyType::I16 => r.read_i16::<LittleEndian>()? as f64,
            PlyType::U16 => r.read_u16::<LittleEndian>()? as f64,
            PlyType::I32 => r.read_i32::<LittleEndian>()? as f64,
            PlyType::U32 => r.read_u32::<LittleEndian>()? as f64,
            PlyType::F32 => r.read_f32::<LittleEndian>()? as f64,
            PlyType::F64 => r.read_f64::<LittleEndian>()?,
        })
    }
}

#[derive(Debug)]
enum Property {
    Single(String, PlyType),
    List(String, PlyType, PlyType),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug)]
struct PlyHeader {
    format: CloudFileFormat,
    elements: Vec<Element>,
    /// Lines consumed by the header.
    lines: usize,
}

fn read_ply_header(r: &mut impl BufRead, path: &Path) -> Result<PlyHeader> {
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut n = 0;
    let mut line = String::new();
    loop {
        line.clear();
        // Header lines are ASCII; read bytes so a binary body is never
        // decoded as UTF-8.
        let mut raw = Vec::new();
        let got = r.read_until(b'\n', &mut raw).map_err(|e| Error::io(path, e))?;
        n += 1;
        if got == 0 {
            return Err(parse_error(path, n, "PLY header ends before end_header"));
        }
        line.push_str(String::from_utf8_lossy(&raw).trim_end_matches(['\n', '\r']));
        let t: Vec<&str> = line.split_whitespace().collect();
        if n == 1 {
            if t != ["ply"] {
                return Err(parse_error(path, 1, "missing PLY magic \"ply\""));
            }
            continue;
        }
        match t.first().copied() {
            Some("format") => {
                format = Some(match t.get(1).copied() {
                    Some("ascii") => CloudFileFormat::PlyAscii,
                    Some("binary_little_endian") => CloudFileFormat::PlyBinaryLe,
                    other => {
                        return Err(parse_error(path, n, format!("unsupported PLY format {}", other.unwrap_or(""))))
                    }
                });
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                if t.len() != 3 {
                    return Err(parse_error(path, n, "malformed element line"));
                }
                let count = t[2].parse().map_err(|_| parse_error(path, n, "invalid element count"))?;
                elements.push(Element {
                    name: t[1].to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_error(path, n, "property before any element"))?;
                let unsupported =
                    |name: &str, ty: &str| parse_error(path, n, format!("unsupported type {ty:?} for PLY property {name:?}"));
                let prop = if t.get(1) == Some(&"list") {
                    if t.len() != 5 {
                        return Err(parse_error(path, n, "malformed list property"));
                    }
                    let ct = PlyType::parse(t[2]).ok_or_else(|| unsupported(t[4], t[2]))?;
                    let it = PlyType::parse(t[3]).ok_or_else(|| unsupported(t[4], t[3]))?;
                    Property::List(t[4].to_string(), ct, it)
                } else {
                    if t.len() != 3 {
                        return Err(parse_error(path, n, "malformed property line"));
                    }
                    let ty = PlyType::parse(t[1]).ok_or_else(|| unsupported(t[2], t[1]))?;
                    Property::Single(t[2].to_string(), ty)
                };
                el.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(parse_error(path, n, format!("unexpected header keyword {other:?}"))),
        }
    }
    let format = format.ok_or_else(|| parse_error(path, n, "PLY header has no format line"))?;
    let vertex = elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or_else(|| parse_error(path, n, "PLY has no vertex element"))?;
    for axis in ["x", "y", "z"] {
        match vertex.properties.iter().find(|p| matches!(p, Property::Single(name, _) | Property::List(name, _, _) if name == axis)) {
            Some(Property::Single(_, PlyType::F32 | PlyType::F64)) => {}
            Some(Property::Single(_, ty)) => {
                return Err(parse_error(path, n, format!("unsupported type {ty:?} for PLY property {axis:?}; expected float or double")))
            }
            Some(Property::List(..)) => {
                return Err(parse_error(path, n, format!("unsupported list type for PLY property {axis:?}")))
            }
            None => return Err(parse_error(path, n, format!("vertex element lacks property {axis:?}"))),
        }
    }
    for p in &vertex.properties {
        let name = match p {
            Property::Single(n, _) | Property::List(n, _, _) => n,
        };
        if !["x", "y", "z"].contains(&name.as_str()) {
            log::warn!("{}: skipping PLY vertex property {name:?}", path.display());
        }
    }
    Ok(PlyHeader {
        format,
        elements,
        lines: n,
    })
}

fn read_ply_body(r: &mut impl BufRead, h: &PlyHeader, path: &Path) -> Result<Vec<Point3<f64>>> {
    let mut points = Vec::new();
    let mut line_no = h.lines;
    let mut line = String::new();
    for el in &h.elements {
        let is_vertex = el.name == "vertex";
        if is_vertex {
            points.reserve(el.count);
        }
        for _ in 0..el.count {
            let mut xyz = [0.0f64; 3];
            match h.format {
                CloudFileFormat::PlyAscii => {
                    line.clear();
                    line_no += 1;
                    if r.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
                        return Err(parse_error(path, line_no, format!("expected {} {} elements, file ended", el.count, el.name)));
                    }
                    let mut tok = line.split_whitespace();
                    let mut next = |what: &str| -> Result<f64> {
                        let t = tok
                            .next()
                            .ok_or_else(|| parse_error(path, line_no, format!("missing value for {what:?}")))?;
                        t.parse()
                            .map_err(|_| parse_error(path, line_no, format!("invalid value {t:?} for {what:?}")))
                    };
                    for p in &el.properties {
                        match p {
                            Property::Single(name, _) => {
                                let v = next(name)?;
                                store(&mut xyz, name, v);
                            }
                            Property::List(name, _, _) => {
                                let len = next(name)? as usize;
                                for _ in 0..len {
                                    next(name)?;
                                }
                            }
                        }
                    }
                    if tok.next().is_some() {
                        return Err(parse_error(path, line_no, format!("too many values for element {}", el.name)));
                    }
                }
                _ => {
                    let eof = |e: std::io::Error| {
                        if e.kind() == std::io::ErrorKind::UnexpectedEof {
                            parse_error(path, line_no, format!("binary body ends before {} {} elements", el.count, el.name))
                        } else {
                            Error::io(path, e)
                        }
                    };
                    for p in &el.properties {
                        match p {
                            Property::Single(name, ty) => {
                                let v = ty.read(r).map_err(eof)?;
                                store(&mut xyz, name, v);
                            }
                            Property::List(_, ct, it) => {
                                let len = ct.read(r).map_err(eof)? as usize;
                                for _ in 0..len {
                                    it.read(r).map_err(eof)?;
                                }
                            }
                        }
                    }
                }
            }
            if is_vertex {
                points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            }
        }
    }
    Ok(points)
}

fn store(xyz: &mut [f64; 3], name: &str, v: f64) {
    match name {
        "x" => xyz[0] = v,
        "y" => xyz[1] = v,
        "z" => xyz[2] = v,
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::fs;

    fn tmp(name: &str, body: &[u8]) -> (tempfile::TempDir, std::path::PathBuf) {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join(name);
        fs::write(&p, body).unwrap();
        (d, p)
    }

    #[test]
    fn xyz_two_points() {
        let (_d, p) = tmp("a.xyz", b"0 0 0\n1 2 3\n");
        let c = read_cloud_auto(&p).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get(1), Point3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn xyz_comments_and_errors() {
        let (_d, p) = tmp("a.xyz", b"# header\n1 1 1 # trailing\n\n2 2 2 7\n");
        assert_eq!(read_cloud_auto(&p).unwrap().len(), 2);
        let (_d, p) = tmp("b.xyz", b"1 1 1\n2 2\n");
        let e = read_cloud_auto(&p).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let (_d, p) = tmp("c.xyz", b"1 1 1\n\n1 x 1\n");
        assert!(matches!(read_cloud_auto(&p).unwrap_err(), Error::Parse { line: 3, .. }));
    }

    #[test]
    fn ply_ascii_single_vertex() {
        let body = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 1 1\n";
        let (_d, p) = tmp("a.ply", body);
        assert_eq!(CloudFileFormat::detect(&p).unwrap(), CloudFileFormat::PlyAscii);
        let c = read_cloud_auto(&p).unwrap();
        assert_eq!(c.points(), &[Point3::new(1.0, 1.0, 1.0)]);
    }

    #[test]
    fn ply_extra_properties_and_faces_are_skipped() {
        let body = b"ply\nformat ascii 1.0\ncomment test\nelement vertex 2\nproperty uchar red\nproperty double x\nproperty double y\nproperty double z\nproperty float intensity\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n9 1 2 3 0.5\n9 4 5 6 0.5\n3 0 1 1\n";
        let (_d, p) = tmp("a.ply", body);
        let c = read_cloud_auto(&p).unwrap();
        assert_eq!(c.points(), &[Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)]);
    }

    #[test]
    fn ply_errors() {
        let (_d, p) = tmp("a.ply", b"ply\nformat ascii 1.0\nelement vertex 1\nproperty int x\nproperty float y\nproperty float z\nend_header\n1 1 1\n");
        let e = read_cloud_auto(&p).unwrap_err().to_string();
        assert!(e.contains("\"x\""), "{e}");
        let (_d, p) = tmp("b.ply", b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty half z\nend_header\n1 1 1\n");
        let e = read_cloud_auto(&p).unwrap_err().to_string();
        assert!(e.contains("\"z\"") && e.contains("half"), "{e}");
        let (_d, p) = tmp("c.ply", b"ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 1 1\n");
        assert!(matches!(read_cloud_auto(&p).unwrap_err(), Error::Parse { line: 9, .. }));
        let (_d, p) = tmp("d.ply", b"plx\n");
        assert!(read_cloud_auto(&p).is_err());
        let (_d, p) = tmp("e.ply", b"ply\nformat binary_big_endian 1.0\nend_header\n");
        assert!(read_cloud_auto(&p).unwrap_err().to_string().contains("binary_big_endian"));
    }

    #[test]
    fn binary_roundtrip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3<f64>> = (0..10_000)
            .map(|_| Point3::new(rng.random::<f64>() * 1e3 - 500.0, rng.random(), rng.random::<f64>() * 1e-3))
            .collect();
        let c = PointCloud::new(pts).unwrap();
        let d = tempfile::tempdir().unwrap();
        for fmt in [CloudFileFormat::PlyBinaryLe, CloudFileFormat::PlyAscii, CloudFileFormat::XyzAscii] {
            let p = d.path().join(if fmt == CloudFileFormat::XyzAscii { "c.xyz" } else { "c.ply" });
            write_cloud(&p, &c, fmt).unwrap();
            assert_eq!(CloudFileFormat::detect(&p).unwrap(), fmt);
            let back = read_cloud_auto(&p).unwrap();
            for (a, b) in back.iter().zip(c.iter()) {
                assert_eq!(a.to_array().map(f64::to_bits), b.to_array().map(f64::to_bits));
            }
        }
    }

    #[test]
    fn binary_float32_with_extra_property() {
        let mut body = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty ushort tag\nend_header\n".to_vec();
        for v in [[1.5f32, 2.0, 3.0], [4.0, 5.0, 6.25]] {
            for c in v {
                body.extend_from_slice(&c.to_le_bytes());
            }
            body.extend_from_slice(&7u16.to_le_bytes());
        }
        let (_d, p) = tmp("a.ply", &body);
        let c = read_cloud_auto(&p).unwrap();
        assert_eq!(c.get(1), Point3::new(4.0, 5.0, 6.25));
        let (_d, p) = tmp("b.ply", &body[..body.len() - 3]);
        assert!(matches!(read_cloud_auto(&p).unwrap_err(), Error::Parse { .. }));
    }
}
