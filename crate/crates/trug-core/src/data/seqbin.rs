//! Packed-bitmap container for binary frame sequences.
//!
//! Layout (all integers little-endian):
//!   bytes 0..4   magic "TGSB"
//!   bytes 4..8   version (currently 1)
//!   bytes 8..12  number of sequences
//!   bytes 12..16 frames per sequence
//!   bytes 16..20 frame width
//!   bytes 20..24 frame height
//! followed by each sequence's frames in order; every frame is packed
//! LSB-first into ceil(width*height / 8) bytes, row-major pixels.
//!
//! Single images are stored as sequences of length 1.

use std::fs;
use std::path::Path;

use crate::error::{Result, TrugError};

const MAGIC: &[u8; 4] = b"TGSB";
const VERSION: u32 = 1;

/// Write sequences of binary frames. All sequences must share the same
/// length and frame shape; pixels must be exactly 0.0 or 1.0.
pub fn write_sequences(
    path: &Path,
    sequences: &[Vec<Vec<f64>>],
    width: usize,
    height: usize,
) -> Result<()> {
    let n_pixels = width * height;
    let n_frames = sequences.first().map_or(0, |s| s.len());
    for (si, seq) in sequences.iter().enumerate() {
        if seq.len() != n_frames {
            return Err(TrugError::Contract(format!(
                "sequence {si} has {} frames, expected {n_frames}",
                seq.len()
            )));
        }
        for (fi, frame) in seq.iter().enumerate() {
            if frame.len() != n_pixels {
                return Err(TrugError::Contract(format!(
                    "sequence {si} frame {fi} has {} pixels, expected {n_pixels}",
                    frame.len()
                )));
            }
            if frame.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(TrugError::Contract(format!(
                    "sequence {si} frame {fi} has a non-binary pixel"
                )));
            }
        }
    }
    let frame_bytes = n_pixels.div_ceil(8);
    let mut bytes = Vec::with_capacity(24 + sequences.len() * n_frames * frame_bytes);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(sequences.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&(n_frames as u32).to_le_bytes());
    bytes.extend_from_slice(&(width as u32).to_le_bytes());
    bytes.extend_from_slice(&(height as u32).to_le_bytes());
    for seq in sequences {
        for frame in seq {
            let mut packed = vec![0u8; frame_bytes];
            for (i, &v) in frame.iter().enumerate() {
                if v == 1.0 {
                    packed[i / 8] |= 1 << (i % 8);
                }
            }
            bytes.extend_from_slice(&packed);
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Read a container written by `write_sequences`. Returns the sequences
/// and the frame (width, height).
pub fn read_sequences(path: &Path) -> Result<(Vec<Vec<Vec<f64>>>, (usize, usize))> {
    let bytes = fs::read(path)?;
    if bytes.len() < 24 {
        return Err(TrugError::Parse {
            offset: bytes.len() as u64,
            message: "file shorter than container header".into(),
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(TrugError::Parse {
            offset: 0,
            message: "bad magic, not a packed-bitmap sequence file".into(),
        });
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let version = word(4);
    if version != VERSION as usize {
        return Err(TrugError::Parse {
            offset: 4,
            message: format!("unsupported container version {version}"),
        });
    }
    let n_sequences = word(8);
    let n_frames = word(12);
    let width = word(16);
    let height = word(20);
    let n_pixels = width * height;
    let frame_bytes = n_pixels.div_ceil(8);
    let expected = 24 + n_sequences * n_frames * frame_bytes;
    if bytes.len() != expected {
        return Err(TrugError::Parse {
            offset: bytes.len().min(expected) as u64,
            message: format!("payload has {} bytes, header implies {expected}", bytes.len()),
        });
    }
    let mut sequences = Vec::with_capacity(n_sequences);
    let mut at = 24;
    for _ in 0..n_sequences {
        let mut seq = Vec::with_capacity(n_frames);
        for _ in 0..n_frames {
            let packed = &bytes[at..at + frame_bytes];
            at += frame_bytes;
            let frame: Vec<f64> = (0..n_pixels)
                .map(|i| ((packed[i / 8] >> (i % 8)) & 1) as f64)
                .collect();
            seq.push(frame);
        }
        sequences.push(seq);
    }
    Ok((sequences, (width, height)))
}
