//! Minimal NRRD (text header + raw/gzip payload) support for 3D scalar
//! grids with axis-aligned geometry.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{Geometry, ImageVolume, MaskKind, RoiMask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    Int16,
    Float32,
    UInt8,
}

impl ElementType {
    fn size(self) -> usize {
        match self {
            ElementType::Int16 => 2,
            ElementType::Float32 => 4,
            ElementType::UInt8 => 1,
        }
    }

    fn header_name(self) -> &'static str {
        match self {
            ElementType::Int16 => "int16",
            ElementType::Float32 => "float",
            ElementType::UInt8 => "uint8",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "short" | "short int" | "signed short" | "signed short int" | "int16" | "int16_t" => {
                Ok(ElementType::Int16)
            }
            "float" => Ok(ElementType::Float32),
            "uchar" | "unsigned char" | "uint8" | "uint8_t" => Ok(ElementType::UInt8),
            other => Err(Error::NrrdUnsupported {
                field: "type".into(),
                value: other.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Raw,
    Gzip,
}

struct Header {
    geometry: Geometry,
    element: ElementType,
    encoding: Encoding,
    big_endian: bool,
}

fn header_err(field: &str, reason: impl Into<String>) -> Error {
    Error::NrrdHeader {
        field: field.into(),
        reason: reason.into(),
    }
}

fn parse_vector(field: &str, s: &str) -> Result<[f64; 3]> {
    let inner = s
        .trim()
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| header_err(field, format!("expected (a,b,c), got `{s}`")))?;
    let parts: Vec<f64> = inner
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| header_err(field, e.to_string()))?;
    if parts.len() != 3 {
        return Err(header_err(field, format!("expected 3 components, got {}", parts.len())));
    }
    Ok([parts[0], parts[1], parts[2]])
}

/// Splits `bytes` at the blank line ending the header.
fn split_header(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let mut pos = 0;
    while pos < bytes.len() {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| pos + i)
            .ok_or_else(|| header_err("header", "missing blank line before payload"))?;
        let line = &bytes[pos..end];
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        if line.is_empty() {
            let header = std::str::from_utf8(&bytes[..pos])
                .map_err(|_| header_err("header", "not valid UTF-8"))?;
            return Ok((header, &bytes[end + 1..]));
        }
        pos = end + 1;
    }
    Err(header_err("header", "missing blank line before payload"))
}

fn parse_header(text: &str) -> Result<Header> {
    let mut lines = text.lines();
    let magic = lines.next().unwrap_or("");
    if !magic.starts_with("NRRD000") {
        return Err(header_err("magic", format!("expected NRRD000x, got `{magic}`")));
    }
    let mut fields: HashMap<String, String> = HashMap::new();
    for line in lines {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        // key:=value pairs are metadata; ignore them.
        if line.contains(":=") {
            continue;
        }
        if let Some((k, v)) = line.split_once(": ") {
            fields.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        } else {
            return Err(header_err(line, "expected `field: value`"));
        }
    }
    let get = |name: &str| {
        fields
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| header_err(name, "required field missing"))
    };

    let dimension: usize = get("dimension")?
        .parse()
        .map_err(|_| header_err("dimension", "not an integer"))?;
    if dimension != 3 {
        return Err(Error::NrrdUnsupported {
            field: "dimension".into(),
            value: dimension.to_string(),
        });
    }
    let sizes: Vec<usize> = get("sizes")?
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| header_err("sizes", "not integers"))?;
    if sizes.len() != 3 {
        return Err(header_err("sizes", format!("expected 3 sizes, got {}", sizes.len())));
    }
    let element = ElementType::parse(get("type")?)?;
    let encoding = match get("encoding")? {
        "raw" => Encoding::Raw,
        "gzip" | "gz" => Encoding::Gzip,
        other => {
            return Err(Error::NrrdUnsupported {
                field: "encoding".into(),
                value: other.into(),
            })
        }
    };
    let big_endian = match fields.get("endian").map(String::as_str) {
        None | Some("little") => false,
        Some("big") => true,
        Some(other) => {
            return Err(Error::NrrdUnsupported {
                field: "endian".into(),
                value: other.into(),
            })
        }
    };
    if let Some(df) = fields.get("data file").or_else(|| fields.get("datafile")) {
        return Err(Error::NrrdUnsupported {
            field: "data file".into(),
            value: df.clone(),
        });
    }

    let spacing = if let Some(dirs) = fields.get("space directions") {
        let vecs: Vec<&str> = dirs
            .split(')')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        if vecs.len() != 3 {
            return Err(header_err("space directions", "expected three vectors"));
        }
        let mut spacing = [0.0; 3];
        for (a, v) in vecs.iter().enumerate() {
            let dir = parse_vector("space directions", &format!("{v})"))?;
            for (b, &c) in dir.iter().enumerate() {
                if b != a && c != 0.0 {
                    return Err(Error::NrrdUnsupported {
                        field: "space directions".into(),
                        value: "non-diagonal".into(),
                    });
                }
            }
            spacing[a] = dir[a].abs();
        }
        spacing
    } else if let Some(sp) = fields.get("spacings") {
        let parts: Vec<f64> = sp
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| header_err("spacings", "not numbers"))?;
        if parts.len() != 3 {
            return Err(header_err("spacings", "expected 3 values"));
        }
        [parts[0], parts[1], parts[2]]
    } else {
        [1.0; 3]
    };
    let origin = match fields.get("space origin") {
        Some(o) => parse_vector("space origin", o)?,
        None => [0.0; 3],
    };
    let geometry = Geometry::new([sizes[0], sizes[1], sizes[2]], spacing, origin)
        .map_err(|e| header_err("sizes/spacing", e.to_string()))?;
    Ok(Header {
        geometry,
        element,
        encoding,
        big_endian,
    })
}

fn decode_values(h: &Header, payload: &[u8]) -> Result<Vec<f64>> {
    let raw: Vec<u8> = match h.encoding {
        Encoding::Raw => payload.to_vec(),
        Encoding::Gzip => {
            let mut out = Vec::new();
            GzDecoder::new(payload)
                .read_to_end(&mut out)
                .map_err(|e| header_err("encoding", format!("gzip decode failed: {e}")))?;
            out
        }
    };
    let n = h.geometry.len();
    let size = h.element.size();
    let expected = n * size;
    // Raw payloads may carry trailing bytes only if the header lies; be strict.
    if raw.len() != expected {
        return Err(Error::NrrdPayloadSize {
            expected,
            found: raw.len(),
        });
    }
    let values = raw
        .chunks_exact(size)
        .map(|c| match h.element {
            ElementType::UInt8 => f64::from(c[0]),
            ElementType::Int16 => {
                let b = [c[0], c[1]];
                f64::from(if h.big_endian {
                    i16::from_be_bytes(b)
                } else {
                    i16::from_le_bytes(b)
                })
            }
            ElementType::Float32 => {
                let b = [c[0], c[1], c[2], c[3]];
                f64::from(if h.big_endian {
                    f32::from_be_bytes(b)
                } else {
                    f32::from_le_bytes(b)
                })
            }
        })
        .collect();
    Ok(values)
}

fn read_raw(path: &Path) -> Result<(Header, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (text, payload) = split_header(&bytes)?;
    let h = parse_header(text)?;
    let values = decode_values(&h, payload)?;
    Ok((h, values))
}

/// Read a 3D NRRD as an image volume; integer payloads are widened.
pub fn read_nrrd(path: impl AsRef<Path>) -> Result<ImageVolume> {
    let (h, values) = read_raw(path.as_ref())?;
    ImageVolume::new(h.geometry, values)
}

/// Read a 3D NRRD as a binary mask (any nonzero value is 1).
pub fn read_mask(path: impl AsRef<Path>) -> Result<RoiMask> {
    let (h, values) = read_raw(path.as_ref())?;
    let voxels = values.iter().map(|&v| u8::from(v != 0.0)).collect();
    RoiMask::new(h.geometry, voxels, MaskKind::Mask3D)
}

fn header_text(g: &Geometry, element: ElementType, encoding: Encoding) -> String {
    let [sx, sy, sz] = g.spacing;
    let [ox, oy, oz] = g.origin;
    format!(
        "NRRD0004\n\
         type: {}\n\
         dimension: 3\n\
         space: left-posterior-superior\n\
         sizes: {} {} {}\n\
         space directions: ({sx},0,0) (0,{sy},0) (0,0,{sz})\n\
         kinds: domain domain domain\n\
         endian: little\n\
         encoding: {}\n\
         space origin: ({ox},{oy},{oz})\n\n",
        element.header_name(),
        g.dims[0],
        g.dims[1],
        g.dims[2],
        match encoding {
            Encoding::Raw => "raw",
            Encoding::Gzip => "gzip",
        },
    )
}

/// Write an arbitrary value grid. Values are rounded (and saturated) for
/// integer element types.
pub fn write_nrrd(
    path: impl AsRef<Path>,
    geometry: &Geometry,
    values: &[f64],
    element: ElementType,
    encoding: Encoding,
) -> Result<()> {
    let path = path.as_ref();
    if values.len() != geometry.len() {
        return Err(Error::Geometry("value count does not match geometry".into()));
    }
    let mut payload = Vec::with_capacity(values.len() * element.size());
    for &v in values {
        match element {
            ElementType::UInt8 => payload.push(v.round().clamp(0.0, 255.0) as u8),
            ElementType::Int16 => payload.extend_from_slice(
                &(v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16).to_le_bytes(),
            ),
            ElementType::Float32 => payload.extend_from_slice(&(v as f32).to_le_bytes()),
        }
    }
    let mut out = header_text(geometry, element, encoding).into_bytes();
    match encoding {
        Encoding::Raw => out.extend_from_slice(&payload),
        Encoding::Gzip => {
            let mut enc = GzEncoder::new(Vec::new(), Compression::default());
            enc.write_all(&payload).map_err(|e| Error::io(path, e))?;
            out.extend_from_slice(&enc.finish().map_err(|e| Error::io(path, e))?);
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_volume(
    path: impl AsRef<Path>,
    volume: &ImageVolume,
    element: ElementType,
    encoding: Encoding,
) -> Result<()> {
    write_nrrd(path, volume.geometry(), volume.voxels(), element, encoding)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &RoiMask, encoding: Encoding) -> Result<()> {
    let values: Vec<f64> = mask.voxels().iter().map(|&v| f64::from(v)).collect();
    write_nrrd(path, mask.geometry(), &values, ElementType::UInt8, encoding)
}
