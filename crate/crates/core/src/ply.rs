//! PLY 1.0 reader/writer for vertex clouds (ascii and binary little-endian).
//!
//! Only the `vertex` element is loaded: `x`, `y`, `z` are required and
//! `intensity` is optional. Every other property and element is skipped with
//! a warning.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use log::warn;
use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

/// Scalar width used for `x`, `y`, `z` when saving.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyPrecision {
    Float,
    Double,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    encoding: PlyEncoding,
    elements: Vec<Element>,
    lines: usize,
    frame: Option<String>,
}

fn parse_err(path: &Path, location: String, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        location,
        message: message.into(),
    }
}

fn read_header<R: BufRead>(r: &mut R, path: &Path) -> Result<Header> {
    let mut line_no = 0;
    let mut next_line = |r: &mut R| -> Result<(usize, String)> {
        let mut s = String::new();
        line_no += 1;
        if r.read_line(&mut s)? == 0 {
            return Err(parse_err(path, format!("line {line_no}"), "unexpected end of header"));
        }
        Ok((line_no, s.trim_end_matches(['\n', '\r']).to_string()))
    };

    let (n, magic) = next_line(r)?;
    if magic.trim() != "ply" {
        return Err(parse_err(path, format!("line {n}"), "missing 'ply' magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = vec![];
    let mut frame = None;
    loop {
        let (n, line) = next_line(r)?;
        let at = format!("line {n}");
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                let fmt = tok.next().unwrap_or("");
                let version = tok.next().unwrap_or("");
                if version != "1.0" {
                    return Err(parse_err(path, at, format!("unsupported version '{version}'")));
                }
                encoding = Some(match fmt {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    other => return Err(parse_err(path, at, format!("unsupported format '{other}'"))),
                });
            }
            Some("comment") => {
                if tok.next() == Some("frame") {
                    frame = tok.next().map(str::to_string);
                }
            }
            Some("obj_info") => {}
            Some("element") => {
                let name = tok.next().ok_or_else(|| parse_err(path, at.clone(), "element without name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| parse_err(path, at.clone(), "element count is not an integer"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: vec![],
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, at.clone(), "property before any element"))?;
                let words: Vec<&str> = tok.collect();
                let prop = match words.as_slice() {
                    ["list", count, item, name] => Property::List {
                        name: name.to_string(),
                        count: Scalar::parse(count)
                            .ok_or_else(|| parse_err(path, at.clone(), format!("unknown type '{count}'")))?,
                        item: Scalar::parse(item)
                            .ok_or_else(|| parse_err(path, at.clone(), format!("unknown type '{item}'")))?,
                    },
                    [ty, name] => Property::Scalar {
                        name: name.to_string(),
                        ty: Scalar::parse(ty)
                            .ok_or_else(|| parse_err(path, at.clone(), format!("unknown type '{ty}'")))?,
                    },
                    _ => return Err(parse_err(path, at, "malformed property line")),
                };
                el.props.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(parse_err(path, at, format!("unexpected keyword '{other}'"))),
            None => return Err(parse_err(path, at, "empty header line")),
        }
    }
    let encoding = encoding.ok_or_else(|| parse_err(path, format!("line {line_no}"), "missing format line"))?;
    Ok(Header {
        encoding,
        elements,
        lines: line_no,
        frame,
    })
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let header = read_header(&mut r, path)?;

    let vertex = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| parse_err(path, "header".into(), "no vertex element"))?;
    let find = |name: &str| {
        header.elements[vertex].props.iter().position(|p| matches!(p, Property::Scalar { name: n, .. } if n == name))
    };
    let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(parse_err(path, "header".into(), "vertex element lacks x/y/z")),
    };
    let ii = find("intensity");
    for p in &header.elements[vertex].props {
        let name = match p {
            Property::Scalar { name, .. } | Property::List { name, .. } => name,
        };
        if !matches!(name.as_str(), "x" | "y" | "z" | "intensity") {
            warn!("{}: skipping unsupported vertex property '{}'", path.display(), name);
        }
    }

    let mut rows: Vec<Vec<f64>> = vec![];
    let mut reader = ElementReader {
        path,
        encoding: header.encoding,
        line: header.lines,
        offset: 0,
    };
    for (ei, el) in header.elements.iter().enumerate() {
        if ei != vertex {
            warn!("{}: skipping element '{}'", path.display(), el.name);
        }
        for _ in 0..el.count {
            let row = reader.read_row(&mut r, el)?;
            if ei == vertex {
                rows.push(row);
            }
        }
    }

    let mut points = Vec::with_capacity(rows.len());
    let mut intensities = ii.map(|_| Vec::with_capacity(rows.len()));
    for row in &rows {
        points.push(Point3::new(row[ix], row[iy], row[iz]));
        if let (Some(i), Some(out)) = (ii, intensities.as_mut()) {
            out.push(row[i].clamp(0.0, 1.0));
        }
    }
    let cloud = PointCloud::new(points, header.frame.clone().unwrap_or_else(|| "object".into()))?;
    match intensities {
        Some(i) => cloud.with_intensities(i),
        None => Ok(cloud),
    }
}

/// Loads a cloud and multiplies every coordinate by `scale` (e.g. 0.001 for millimeters).
pub fn load_ply_scaled(path: impl AsRef<Path>, scale: f64) -> Result<PointCloud> {
    let c = load_ply(path)?;
    Ok(if scale == 1.0 { c } else { c.scaled(scale) })
}

struct ElementReader<'a> {
    path: &'a Path,
    encoding: PlyEncoding,
    line: usize,
    offset: usize,
}

impl ElementReader<'_> {
    /// One value per property; list properties yield NaN placeholders.
    fn read_row<R: BufRead>(&mut self, r: &mut R, el: &Element) -> Result<Vec<f64>> {
        match self.encoding {
            PlyEncoding::Ascii => self.read_ascii(r, el),
            PlyEncoding::BinaryLittleEndian => self.read_binary(r, el),
        }
    }

    fn read_ascii<R: BufRead>(&mut self, r: &mut R, el: &Element) -> Result<Vec<f64>> {
        let mut s = String::new();
        self.line += 1;
        let at = format!("line {}", self.line);
        if r.read_line(&mut s)? == 0 {
            return Err(parse_err(self.path, at, format!("unexpected end of file in '{}'", el.name)));
        }
        let mut tok = s.split_whitespace();
        let mut next = |what: &str| -> Result<f64> {
            tok.next()
                .ok_or_else(|| parse_err(self.path, at.clone(), format!("missing value for '{what}'")))?
                .parse::<f64>()
                .map_err(|_| parse_err(self.path, at.clone(), format!("bad number for '{what}'")))
        };
        let mut row = Vec::with_capacity(el.props.len());
        for p in &el.props {
            match p {
                Property::Scalar { name, ty } => {
                    let v = next(name)?;
                    // match the precision a binary file of the same type would carry
                    row.push(if *ty == Scalar::F32 { v as f32 as f64 } else { v });
                }
                Property::List { name, .. } => {
                    let n = next(name)? as usize;
                    for _ in 0..n {
                        next(name)?;
                    }
                    row.push(f64::NAN);
                }
            }
        }
        Ok(row)
    }

    fn read_binary<R: Read>(&mut self, r: &mut R, el: &Element) -> Result<Vec<f64>> {
        let mut buf = [0u8; 8];
        let mut read = |ty: Scalar, this: &mut Self| -> Result<f64> {
            let n = ty.size();
            r.read_exact(&mut buf[..n]).map_err(|_| {
                parse_err(
                    this.path,
                    format!("byte offset {} after header", this.offset),
                    format!("truncated '{}' data", el.name),
                )
            })?;
            this.offset += n;
            Ok(ty.read_le(&buf[..n]))
        };
        let mut row = Vec::with_capacity(el.props.len());
        for p in &el.props {
            match p {
                Property::Scalar { ty, .. } => row.push(read(*ty, self)?),
                Property::List { count, item, .. } => {
                    let n = read(*count, self)? as usize;
                    for _ in 0..n {
                        read(*item, self)?;
                    }
                    row.push(f64::NAN);
                }
            }
        }
        Ok(row)
    }
}

pub fn save_ply(
    cloud: &PointCloud,
    path: impl AsRef<Path>,
    encoding: PlyEncoding,
    precision: PlyPrecision,
) -> Result<()> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let mut w = BufWriter::new(File::create(&path)?);
    let fmt = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    let ty = match precision {
        PlyPrecision::Float => "float",
        PlyPrecision::Double => "double",
    };
    writeln!(w, "ply")?;
    writeln!(w, "format {fmt} 1.0")?;
    writeln!(w, "comment frame {}", cloud.frame())?;
    writeln!(w, "element vertex {}", cloud.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(w, "property {ty} {axis}")?;
    }
    if cloud.intensities().is_some() {
        writeln!(w, "property float intensity")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in cloud.points().iter().enumerate() {
        let intensity = cloud.intensities().map(|v| v[i] as f32);
        match encoding {
            PlyEncoding::Ascii => {
                match precision {
                    PlyPrecision::Float => write!(w, "{} {} {}", p.x as f32, p.y as f32, p.z as f32)?,
                    PlyPrecision::Double => write!(w, "{} {} {}", p.x, p.y, p.z)?,
                }
                if let Some(v) = intensity {
                    write!(w, " {v}")?;
                }
                writeln!(w)?;
            }
            PlyEncoding::BinaryLittleEndian => {
                for v in [p.x, p.y, p.z] {
                    match precision {
                        PlyPrecision::Float => w.write_all(&(v as f32).to_le_bytes())?,
                        PlyPrecision::Double => w.write_all(&v.to_le_bytes())?,
                    }
                }
                if let Some(v) = intensity {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
