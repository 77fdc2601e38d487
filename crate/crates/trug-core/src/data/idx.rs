//! Reader for image sets in the standard IDX byte layout: a big-endian
//! header (magic 0x00000803 for unsigned-byte rank-3 data, then the
//! image/row/column counts) followed by one byte per pixel.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Result, TrugError};
use crate::rbm::stream_rng;

/// IDX magic for unsigned-byte data of rank 3 (images x rows x cols).
const MAGIC_U8_RANK3: u32 = 0x0000_0803;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binarize {
    /// Pixel is 1 when its [0,1] intensity is at least the threshold.
    Threshold(f64),
    /// Pixel is an independent Bernoulli draw with the intensity as its
    /// probability; each image gets its own stream of the given seed.
    Stochastic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryImageDataset {
    /// N rows of width*height entries in {0.0, 1.0}.
    pub images: Vec<Vec<f64>>,
    pub width: usize,
    pub height: usize,
}

impl BinaryImageDataset {
    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(TrugError::Parse {
            offset: bytes.len() as u64,
            message: format!("file truncated inside header field at byte {offset}"),
        });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

pub fn load_idx_images(path: &Path, binarize: Binarize) -> Result<BinaryImageDataset> {
    if let Binarize::Threshold(t) = binarize {
        if !(t > 0.0 && t < 1.0) {
            return Err(TrugError::Contract(format!(
                "binarization threshold {t} outside (0, 1)"
            )));
        }
    }
    let bytes = fs::read(path)?;
    let magic = read_u32(&bytes, 0)?;
    if magic != MAGIC_U8_RANK3 {
        return Err(TrugError::Parse {
            offset: 0,
            message: format!("bad magic {magic:#010x}, expected {MAGIC_U8_RANK3:#010x}"),
        });
    }
    let n = read_u32(&bytes, 4)? as usize;
    let height = read_u32(&bytes, 8)? as usize;
    let width = read_u32(&bytes, 12)? as usize;
    if n == 0 || width == 0 || height == 0 {
        return Err(TrugError::Parse {
            offset: 4,
            message: format!("degenerate dimensions {n} x {height} x {width}"),
        });
    }
    let pixels = width * height;
    let expected = 16 + n * pixels;
    if bytes.len() != expected {
        return Err(TrugError::Parse {
            offset: bytes.len().min(expected) as u64,
            message: format!("payload has {} bytes, header implies {expected}", bytes.len()),
        });
    }
    let mut images = Vec::with_capacity(n);
    for img in 0..n {
        let start = 16 + img * pixels;
        let raw = &bytes[start..start + pixels];
        let row = match binarize {
            Binarize::Threshold(t) => raw
                .iter()
                .map(|&b| if b as f64 / 255.0 >= t { 1.0 } else { 0.0 })
                .collect(),
            Binarize::Stochastic { seed } => {
                let mut rng = stream_rng(seed, img as u64);
                raw.iter()
                    .map(|&b| {
                        let p = b as f64 / 255.0;
                        if rng.random::<f64>() < p {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
        };
        images.push(row);
    }
    Ok(BinaryImageDataset { images, width, height })
}
