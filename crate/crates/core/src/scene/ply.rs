//! Minimal PLY reader/writer for colored vertex clouds.
//!
//! Reads ASCII and binary little-endian files. Non-vertex elements (faces,
//! edges, ...) are parsed only to be skipped.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ColoredPoint, PointCloud, SceneError, Vec3};

const DEFAULT_GRAY: u8 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Debug, Clone)]
enum PropertyKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropertyKind,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    body_offset: usize,
}

fn malformed(msg: impl Into<String>) -> SceneError {
    SceneError::MalformedHeader(msg.into())
}

fn parse_header(bytes: &[u8]) -> Result<Header, SceneError> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| malformed("no end_header line"))?;
    let mut body_offset = end + END.len();
    // The header terminator is "\n" or "\r\n".
    if bytes.get(body_offset) == Some(&b'\r') {
        body_offset += 1;
    }
    if bytes.get(body_offset) == Some(&b'\n') {
        body_offset += 1;
    }
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| malformed("header is not UTF-8"))?;
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some("ply") {
        return Err(malformed("missing `ply` magic"));
    }

    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "comment" | "obj_info" => {}
            "format" => {
                format = Some(match toks.get(1).copied() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLe,
                    Some(other) => return Err(malformed(format!("unsupported format `{other}`"))),
                    None => return Err(malformed("empty format line")),
                });
            }
            "element" => {
                let (name, count) = match toks.as_slice() {
                    [_, name, count] => (*name, *count),
                    _ => return Err(malformed(format!("bad element line `{line}`"))),
                };
                let count = count
                    .parse()
                    .map_err(|_| malformed(format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| malformed("property before any element"))?;
                let prop = match toks.as_slice() {
                    [_, "list", count, item, name] => Property {
                        name: name.to_string(),
                        kind: PropertyKind::List {
                            count: Scalar::parse(count).ok_or_else(|| malformed(format!("unknown type `{count}`")))?,
                            item: Scalar::parse(item).ok_or_else(|| malformed(format!("unknown type `{item}`")))?,
                        },
                    },
                    [_, ty, name] => Property {
                        name: name.to_string(),
                        kind: PropertyKind::Scalar(
                            Scalar::parse(ty).ok_or_else(|| malformed(format!("unknown type `{ty}`")))?,
                        ),
                    },
                    _ => return Err(malformed(format!("bad property line `{line}`"))),
                };
                el.properties.push(prop);
            }
            other => return Err(malformed(format!("unexpected header keyword `{other}`"))),
        }
    }
    let format = format.ok_or_else(|| malformed("missing format line"))?;
    if !elements.iter().any(|e| e.name == "vertex") {
        return Err(malformed("no vertex element count"));
    }
    Ok(Header {
        format,
        elements,
        body_offset,
    })
}

/// Column indices of the vertex properties we keep.
struct VertexColumns {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
    rgb_is_float: bool,
}

impl VertexColumns {
    fn locate(el: &Element) -> Result<Self, SceneError> {
        let find = |n: &str| el.properties.iter().position(|p| p.name == n);
        let x = find("x").ok_or(SceneError::MissingProperty("x"))?;
        let y = find("y").ok_or(SceneError::MissingProperty("y"))?;
        let z = find("z").ok_or(SceneError::MissingProperty("z"))?;
        let rgb = match (find("red"), find("green"), find("blue")) {
            (Some(r), Some(g), Some(b)) => Some([r, g, b]),
            _ => None,
        };
        let rgb_is_float = rgb
            .map(|c| matches!(el.properties[c[0]].kind, PropertyKind::Scalar(s) if s.is_float()))
            .unwrap_or(false);
        Ok(Self {
            xyz: [x, y, z],
            rgb,
            rgb_is_float,
        })
    }

    fn point(&self, row: &[f64]) -> ColoredPoint {
        let color = match self.rgb {
            Some(c) => {
                let to_u8 = |v: f64| {
                    let v = if self.rgb_is_float { v * 255.0 } else { v };
                    v.round().clamp(0.0, 255.0) as u8
                };
                [to_u8(row[c[0]]), to_u8(row[c[1]]), to_u8(row[c[2]])]
            }
            None => [DEFAULT_GRAY; 3],
        };
        ColoredPoint {
            position: Vec3::new(row[self.xyz[0]], row[self.xyz[1]], row[self.xyz[2]]),
            color,
        }
    }
}

/// Loads every vertex of a PLY file. Missing colors default to gray 128.
pub fn load_point_cloud(path: &Path) -> Result<PointCloud, SceneError> {
    let bytes = fs::read(path).map_err(|e| SceneError::io(path, e))?;
    parse_point_cloud(&bytes)
}

pub(crate) fn parse_point_cloud(bytes: &[u8]) -> Result<PointCloud, SceneError> {
    let header = parse_header(bytes)?;
    let body = &bytes[header.body_offset..];
    let points = match header.format {
        Format::Ascii => read_ascii(&header.elements, body)?,
        Format::BinaryLe => read_binary(&header.elements, body)?,
    };
    PointCloud::new(points)
}

fn read_ascii(elements: &[Element], body: &[u8]) -> Result<Vec<ColoredPoint>, SceneError> {
    let text = std::str::from_utf8(body).map_err(|_| SceneError::InvalidValue("ASCII body is not UTF-8".into()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut points = Vec::new();
    for el in elements {
        let columns = if el.name == "vertex" {
            Some(VertexColumns::locate(el)?)
        } else {
            None
        };
        let mut row = vec![0.0; el.properties.len()];
        for read in 0..el.count {
            let line = lines.next().ok_or(SceneError::TruncatedBody {
                expected: el.count,
                read,
            })?;
            let mut toks = line.split_whitespace();
            let mut next = || -> Result<f64, SceneError> {
                let tok = toks.next().ok_or(SceneError::TruncatedBody {
                    expected: el.count,
                    read,
                })?;
                tok.parse::<f64>()
                    .map_err(|_| SceneError::InvalidValue(format!("`{tok}` is not a number")))
            };
            for (slot, prop) in row.iter_mut().zip(&el.properties) {
                match prop.kind {
                    PropertyKind::Scalar(_) => *slot = next()?,
                    PropertyKind::List { .. } => {
                        let n = next()? as usize;
                        for _ in 0..n {
                            next()?;
                        }
                    }
                }
            }
            if let Some(cols) = &columns {
                points.push(cols.point(&row));
            }
        }
    }
    Ok(points)
}

fn read_binary(elements: &[Element], body: &[u8]) -> Result<Vec<ColoredPoint>, SceneError> {
    let mut cursor = 0usize;
    let mut points = Vec::new();
    for el in elements {
        let columns = if el.name == "vertex" {
            Some(VertexColumns::locate(el)?)
        } else {
            None
        };
        let truncated = |read| SceneError::TruncatedBody {
            expected: el.count,
            read,
        };
        let mut row = vec![0.0; el.properties.len()];
        for read in 0..el.count {
            for (slot, prop) in row.iter_mut().zip(&el.properties) {
                match prop.kind {
                    PropertyKind::Scalar(s) => {
                        let b = body.get(cursor..cursor + s.size()).ok_or_else(|| truncated(read))?;
                        *slot = s.read_le(b);
                        cursor += s.size();
                    }
                    PropertyKind::List { count, item } => {
                        let b = body.get(cursor..cursor + count.size()).ok_or_else(|| truncated(read))?;
                        let n = count.read_le(b) as usize;
                        cursor += count.size() + n * item.size();
                        if cursor > body.len() {
                            return Err(truncated(read));
                        }
                    }
                }
            }
            if let Some(cols) = &columns {
                points.push(cols.point(&row));
            }
        }
    }
    Ok(points)
}

/// Writes `float x,y,z` + `uchar red,green,blue` in binary little-endian.
/// Coordinates are stored at f32 precision.
pub fn write_point_cloud_binary(path: &Path, cloud: &PointCloud) -> Result<(), SceneError> {
    let mut buf = Vec::with_capacity(128 + cloud.len() * 15);
    write!(
        buf,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    )
    .expect("write to Vec");
    for p in cloud.points() {
        for c in p.position.iter() {
            buf.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        buf.extend_from_slice(&p.color);
    }
    fs::write(path, buf).map_err(|e| SceneError::io(path, e))
}
