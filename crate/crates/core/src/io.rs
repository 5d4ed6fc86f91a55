//! On-disk formats.
//!
//! Flow files use the Middlebury `.flo` layout, always little-endian:
//!
//! | offset | type | content                                  |
//! |--------|------|------------------------------------------|
//! | 0      | f32  | magic `202021.25`                        |
//! | 4      | i32  | width                                    |
//! | 8      | i32  | height                                   |
//! | 12     | f32  | `width * height` interleaved `(u, v)`, row-major |
//!
//! Images are binary 8-bit PGM (`P5`, maxval 255); intensity `i` is stored
//! as `floor(i * 255 + 0.5)`.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::datasetgen::DatasetManifest;
use crate::flowfield::VelocityField;
use crate::particles::ParticleImage;

pub const FLO_MAGIC: f32 = 202021.25;
const FLO_HEADER: usize = 12;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {0} (expected 202021.25)")]
    BadMagic(f32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("declared {width}x{height} does not match payload of {found} bytes")]
    DimMismatch {
        width: i64,
        height: i64,
        found: usize,
    },
    #[error("invalid dimensions {width}x{height}")]
    InvalidDims { width: i64, height: i64 },
    #[error("non-finite value at element {0}")]
    NonFinite(usize),
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("unsupported PGM maxval {0} (expected 255)")]
    WrongMaxval(u64),
    #[error("manifest schema violation: {0}")]
    Schema(String),
}

impl IoError {
    fn at(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
        move |source| IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub fn encode_flow(field: &VelocityField) -> Vec<u8> {
    let (w, h) = field.dims();
    let mut buf = Vec::with_capacity(FLO_HEADER + 8 * w * h);
    buf.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    buf.extend_from_slice(&(w as i32).to_le_bytes());
    buf.extend_from_slice(&(h as i32).to_le_bytes());
    for (u, v) in field.u().iter().zip(field.v()) {
        buf.extend_from_slice(&(*u as f32).to_le_bytes());
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    buf
}

fn le_f32(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

fn le_i32(bytes: &[u8], at: usize) -> i32 {
    i32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub fn decode_flow(bytes: &[u8]) -> Result<VelocityField, IoError> {
    if bytes.len() < FLO_HEADER {
        return Err(IoError::Truncated {
            expected: FLO_HEADER,
            found: bytes.len(),
        });
    }
    let magic = le_f32(bytes, 0);
    if magic != FLO_MAGIC {
        return Err(IoError::BadMagic(magic));
    }
    let (w, h) = (le_i32(bytes, 4) as i64, le_i32(bytes, 8) as i64);
    if w < 2 || h < 2 {
        return Err(IoError::InvalidDims { width: w, height: h });
    }
    let (wu, hu) = (w as usize, h as usize);
    let payload = &bytes[FLO_HEADER..];
    let expected = 8 * wu * hu;
    if payload.len() < expected {
        return Err(IoError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(IoError::DimMismatch {
            width: w,
            height: h,
            found: payload.len(),
        });
    }
    let mut u = Vec::with_capacity(wu * hu);
    let mut v = Vec::with_capacity(wu * hu);
    for k in 0..wu * hu {
        let a = le_f32(payload, 8 * k);
        let b = le_f32(payload, 8 * k + 4);
        if !a.is_finite() || !b.is_finite() {
            return Err(IoError::NonFinite(k));
        }
        u.push(a as f64);
        v.push(b as f64);
    }
    VelocityField::new(wu, hu, u, v).map_err(|_| IoError::InvalidDims { width: w, height: h })
}

pub fn write_flow(path: &Path, field: &VelocityField) -> Result<(), IoError> {
    fs::write(path, encode_flow(field)).map_err(IoError::at(path))
}

pub fn read_flow(path: &Path) -> Result<VelocityField, IoError> {
    let bytes = fs::read(path).map_err(IoError::at(path))?;
    decode_flow(&bytes)
}

/// Round-half-up 8-bit quantisation of a unit intensity.
pub fn quantize(i: f64) -> u8 {
    (i * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn encode_pgm(image: &ParticleImage) -> Vec<u8> {
    let mut buf = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    buf.extend(image.intensity.iter().map(|&i| quantize(i)));
    buf
}

/// Reads the next whitespace-delimited header token, skipping `#` comments.
fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8], IoError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(IoError::MalformedHeader("unexpected end of header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u64, IoError> {
    let tok = header_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| IoError::MalformedHeader(format!("bad {what} {:?}", String::from_utf8_lossy(tok))))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<ParticleImage, IoError> {
    let mut pos = 0;
    if header_token(bytes, &mut pos)? != b"P5" {
        return Err(IoError::MalformedHeader("missing P5 signature".into()));
    }
    let w = header_number(bytes, &mut pos, "width")?;
    let h = header_number(bytes, &mut pos, "height")?;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(IoError::WrongMaxval(maxval));
    }
    if w == 0 || h == 0 {
        return Err(IoError::InvalidDims {
            width: w as i64,
            height: h as i64,
        });
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(IoError::MalformedHeader("missing separator after maxval".into()));
    }
    let payload = &bytes[pos + 1..];
    let expected = (w * h) as usize;
    if payload.len() < expected {
        return Err(IoError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(IoError::DimMismatch {
            width: w as i64,
            height: h as i64,
            found: payload.len(),
        });
    }
    Ok(ParticleImage {
        width: w as usize,
        height: h as usize,
        intensity: payload.iter().map(|&b| b as f64 / 255.0).collect(),
    })
}

pub fn write_image(path: &Path, image: &ParticleImage) -> Result<(), IoError> {
    fs::write(path, encode_pgm(image)).map_err(IoError::at(path))
}

pub fn read_image(path: &Path) -> Result<ParticleImage, IoError> {
    let bytes = fs::read(path).map_err(IoError::at(path))?;
    decode_pgm(&bytes)
}

pub fn manifest_to_json(manifest: &DatasetManifest) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    out.push(b'\n');
    out
}

pub fn manifest_from_json(bytes: &[u8]) -> Result<DatasetManifest, IoError> {
    serde_json::from_slice(bytes).map_err(|e| IoError::Schema(e.to_string()))
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<(), IoError> {
    fs::write(path, manifest_to_json(manifest)).map_err(IoError::at(path))
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, IoError> {
    let bytes = fs::read(path).map_err(IoError::at(path))?;
    manifest_from_json(&bytes)
}

/// Paths referenced by the manifest (relative to `root`) that do not exist.
pub fn missing_files(manifest: &DatasetManifest, root: &Path) -> Vec<PathBuf> {
    manifest
        .entries
        .iter()
        .flat_map(|e| e.referenced_paths())
        .map(|p| root.join(p))
        .filter(|p| !p.is_file())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowfield::make_lamb_oseen;
    use proptest::prelude::*;

    #[test]
    fn flo_layout_is_little_endian() {
        let f = VelocityField::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![-1.0, -2.0, -3.0, -4.0]).unwrap();
        let b = encode_flow(&f);
        assert_eq!(b.len(), 12 + 32);
        assert_eq!(&b[0..4], b"PIEH");
        assert_eq!(&b[4..8], &2i32.to_le_bytes());
        assert_eq!(&b[12..16], &1.0f32.to_le_bytes());
        assert_eq!(&b[16..20], &(-1.0f32).to_le_bytes());
    }

    #[test]
    fn flo_errors() {
        let f = make_lamb_oseen(2, 2, 1.0, 1.0, (0.5, 0.5)).unwrap();
        let mut b = encode_flow(&f);
        let good = b.clone();
        b[0..4].copy_from_slice(&0f32.to_le_bytes());
        assert!(matches!(decode_flow(&b), Err(IoError::BadMagic(m)) if m == 0.0));
        // 7 reals of payload for a 2x2 field
        let short = &good[..12 + 7 * 4];
        assert!(matches!(decode_flow(short), Err(IoError::Truncated { expected: 32, found: 28 })));
        let mut long = good.clone();
        long.extend_from_slice(&[0; 8]);
        assert!(matches!(decode_flow(&long), Err(IoError::DimMismatch { .. })));
        let mut neg = good.clone();
        neg[4..8].copy_from_slice(&(-3i32).to_le_bytes());
        assert!(matches!(decode_flow(&neg), Err(IoError::InvalidDims { .. })));
        let mut nan = good;
        nan[12..16].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_flow(&nan), Err(IoError::NonFinite(0))));
        assert!(matches!(decode_flow(&[1, 2, 3]), Err(IoError::Truncated { .. })));
    }

    #[test]
    fn quantization_rule() {
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(0.5), 128);
    }

    #[test]
    fn pgm_header_and_errors() {
        let img = ParticleImage {
            width: 3,
            height: 2,
            intensity: vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.1],
        };
        let b = encode_pgm(&img);
        assert!(b.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&b[b.len() - 6..], &[0, 128, 255, 64, 191, 26]);

        let with_comment = [b"P5\n# comment\n3 2\n255\n".as_slice(), &b[b.len() - 6..]].concat();
        assert_eq!(decode_pgm(&with_comment).unwrap().width, 3);

        let wrong_max = [b"P5\n3 2\n65535\n".as_slice(), &[0; 12]].concat();
        assert!(matches!(decode_pgm(&wrong_max), Err(IoError::WrongMaxval(65535))));
        assert!(matches!(decode_pgm(b"P6\n3 2\n255\n"), Err(IoError::MalformedHeader(_))));
        assert!(matches!(decode_pgm(b"P5\n3 x\n255\n"), Err(IoError::MalformedHeader(_))));
        assert!(matches!(decode_pgm(&b[..b.len() - 1]), Err(IoError::Truncated { .. })));
    }

    #[test]
    fn file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let f = VelocityField::from_fn(16, 16, |i, j| ((i as f32 * 0.37 - 2.0) as f64, (j as f32 / 7.0) as f64)).unwrap();
        let p = dir.path().join("a.flo");
        write_flow(&p, &f).unwrap();
        assert_eq!(read_flow(&p).unwrap(), f);
        assert!(matches!(read_flow(&dir.path().join("missing.flo")), Err(IoError::Io { .. })));
    }

    proptest! {
        #[test]
        fn flow_round_trip_is_bitwise(w in 2usize..20, h in 2usize..20, vals in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 800)) {
            let n = w * h;
            let u: Vec<f64> = vals[..n].iter().map(|&a| a as f64).collect();
            let v: Vec<f64> = vals[n..2 * n].iter().map(|&a| a as f64).collect();
            let f = VelocityField::new(w, h, u, v).unwrap();
            let back = decode_flow(&encode_flow(&f)).unwrap();
            prop_assert!(back.u().iter().zip(f.u()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert!(back.v().iter().zip(f.v()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }

        #[test]
        fn image_round_trip_within_half_quantum(w in 1usize..24, h in 1usize..24, vals in prop::collection::vec(0.0f64..=1.0, 576)) {
            let img = ParticleImage { width: w, height: h, intensity: vals[..w * h].to_vec() };
            let back = decode_pgm(&encode_pgm(&img)).unwrap();
            prop_assert_eq!((back.width, back.height), (w, h));
            for (a, b) in back.intensity.iter().zip(&img.intensity) {
                prop_assert!((a - b).abs() <= 1.0 / 510.0 + 1e-15);
            }
        }
    }
}
