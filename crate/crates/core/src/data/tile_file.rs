//! Single-tile binary container.
//!
//! All integers and floats are little-endian.
//!
//! | offset        | size  | field                                  |
//! |---------------|-------|----------------------------------------|
//! | 0             | 4     | magic `GHT1`                           |
//! | 4             | 2     | format version (u16, currently 1)      |
//! | 6             | 2     | channel count C (u16)                  |
//! | 8             | 4     | height H (u32)                         |
//! | 12            | 4     | width W (u32)                          |
//! | 16            | 4     | resolution, m/px (f32)                 |
//! | 20            | 4·C   | wavelengths, nm (f32)                  |
//! | 20 + 4C       | C     | modality tags (u8, 0 optical, 1 radar) |
//! | 20 + 5C       | 4·CHW | pixels (f32), channel-major            |

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::cube::{HyperCube, Modality};

pub const TILE_MAGIC: [u8; 4] = *b"GHT1";
pub const TILE_VERSION: u16 = 1;
const FIXED_HEADER: usize = 20;

#[derive(Debug, Error)]
pub enum TileError {
    #[error("not a tile file (magic {0:?})")]
    BadMagic([u8; 4]),

    #[error("unsupported tile format version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("tile payload length mismatch: expected {expected} bytes, found {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid tile metadata: {0}")]
    Metadata(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode_tile(cube: &HyperCube) -> Vec<u8> {
    let c = cube.channels();
    let mut out = Vec::with_capacity(FIXED_HEADER + 5 * c + 4 * cube.pixels().len());
    out.extend_from_slice(&TILE_MAGIC);
    out.extend_from_slice(&TILE_VERSION.to_le_bytes());
    out.extend_from_slice(&(c as u16).to_le_bytes());
    out.extend_from_slice(&(cube.height() as u32).to_le_bytes());
    out.extend_from_slice(&(cube.width() as u32).to_le_bytes());
    out.extend_from_slice(&cube.resolution().to_le_bytes());
    for w in cube.wavelengths() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out.extend(cube.modalities().iter().map(|&m| m as u8));
    for p in cube.pixels() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

fn le_u16(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

fn le_f32(b: &[u8]) -> f32 {
    f32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

pub fn decode_tile(bytes: &[u8]) -> Result<HyperCube, TileError> {
    if bytes.len() < 6 {
        return Err(TileError::LengthMismatch {
            expected: FIXED_HEADER,
            actual: bytes.len(),
        });
    }
    let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if magic != TILE_MAGIC {
        return Err(TileError::BadMagic(magic));
    }
    let version = le_u16(&bytes[4..]);
    if version != TILE_VERSION {
        return Err(TileError::VersionMismatch {
            found: version,
            expected: TILE_VERSION,
        });
    }
    if bytes.len() < FIXED_HEADER {
        return Err(TileError::LengthMismatch {
            expected: FIXED_HEADER,
            actual: bytes.len(),
        });
    }
    let c = le_u16(&bytes[6..]) as usize;
    let h = le_u32(&bytes[8..]) as usize;
    let w = le_u32(&bytes[12..]) as usize;
    let resolution = le_f32(&bytes[16..]);
    let payload_start = FIXED_HEADER + 5 * c;
    let expected = payload_start + 4 * c * h * w;
    if bytes.len() != expected {
        return Err(TileError::LengthMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let wavelengths: Vec<f32> = bytes[FIXED_HEADER..FIXED_HEADER + 4 * c]
        .chunks_exact(4)
        .map(le_f32)
        .collect();
    let modalities = bytes[FIXED_HEADER + 4 * c..payload_start]
        .iter()
        .map(|&t| {
            Modality::from_tag(t).ok_or_else(|| TileError::Metadata(format!("unknown modality tag {t}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let pixels: Vec<f32> = bytes[payload_start..].chunks_exact(4).map(le_f32).collect();
    HyperCube::new(h, w, resolution, wavelengths, modalities, pixels)
        .map_err(|e| TileError::Metadata(e.to_string()))
}

pub fn write_tile(path: impl AsRef<Path>, cube: &HyperCube) -> Result<(), TileError> {
    fs::write(path, encode_tile(cube))?;
    Ok(())
}

pub fn read_tile(path: impl AsRef<Path>) -> Result<HyperCube, TileError> {
    decode_tile(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> HyperCube {
        HyperCube::new(
            2,
            3,
            10.0,
            vec![442.7, 5000.0],
            vec![Modality::Optical, Modality::Radar],
            (0..12).map(|i| i as f32 * 0.5).collect(),
        )
        .unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_tile(&cube());
        assert_eq!(&bytes[..4], b"GHT1");
        assert_eq!(bytes.len(), 20 + 5 * 2 + 4 * 12);
        assert_eq!(bytes[20 + 8], 0);
        assert_eq!(bytes[20 + 9], 1);
    }

    #[test]
    fn errors_are_distinct() {
        let good = encode_tile(&cube());
        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(matches!(decode_tile(&magic), Err(TileError::BadMagic(_))));
        let mut version = good.clone();
        version[4] = 9;
        assert!(matches!(
            decode_tile(&version),
            Err(TileError::VersionMismatch { found: 9, .. })
        ));
        let short = &good[..good.len() - 1];
        assert!(matches!(
            decode_tile(short),
            Err(TileError::LengthMismatch { .. })
        ));
        let mut tag = good;
        tag[20 + 8] = 7;
        assert!(matches!(decode_tile(&tag), Err(TileError::Metadata(_))));
    }
}
