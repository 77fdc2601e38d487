//! Versioned binary checkpoint container shared by all three models.
//!
//! Layout (integers and floats little-endian):
//!   bytes 0..4  magic "TGCK"
//!   bytes 4..8  version (currently 1)
//!   byte  8     model kind (1 = rbm, 2 = trbm, 3 = tggm)
//! then kind-specific u32 dimensions, the truncation manifest (mode byte,
//! unit count, trainable flags, raw lower/upper vectors), and the
//! parameter blocks as row-major f64 runs in a fixed documented order.

use std::fs;
use std::path::Path;

use crate::error::{Result, TrugError};
use crate::mat::Mat;
use crate::rbm::RbmModel;
use crate::tggm::TggmModel;
use crate::trbm::TrbmModel;
use crate::trug::{TruncationMode, TrugParams};

const MAGIC: &[u8; 4] = b"TGCK";
const VERSION: u32 = 1;

const KIND_RBM: u8 = 1;
const KIND_TRBM: u8 = 2;
const KIND_TGGM: u8 = 3;

struct Writer {
    bytes: Vec<u8>,
}

impl Writer {
    fn new(kind: u8) -> Self {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.push(kind);
        Self { bytes }
    }

    fn u32(&mut self, v: usize) {
        self.bytes.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn byte(&mut self, v: u8) {
        self.bytes.push(v);
    }

    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn trug(&mut self, t: &TrugParams) {
        self.byte(match t.mode() {
            TruncationMode::Shared => 0,
            TruncationMode::PerUnit => 1,
        });
        self.u32(t.units());
        self.byte(t.lower_trainable() as u8);
        self.byte(t.upper_trainable() as u8);
        self.u32(t.raw_lower().len());
        self.f64s(t.raw_lower());
        self.f64s(t.raw_upper());
    }

    fn finish(self, path: &Path) -> Result<()> {
        fs::write(path, self.bytes)?;
        Ok(())
    }
}

struct Reader {
    bytes: Vec<u8>,
    at: usize,
}

impl Reader {
    fn open(path: &Path, expected_kind: u8) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.len() < 9 {
            return Err(TrugError::Parse {
                offset: bytes.len() as u64,
                message: "file shorter than checkpoint header".into(),
            });
        }
        if &bytes[0..4] != MAGIC {
            return Err(TrugError::Parse {
                offset: 0,
                message: "bad magic, not a checkpoint file".into(),
            });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(TrugError::Parse {
                offset: 4,
                message: format!("unsupported checkpoint version {version}"),
            });
        }
        let kind = bytes[8];
        if kind != expected_kind {
            return Err(TrugError::CheckpointMismatch(format!(
                "checkpoint holds model kind {kind}, expected {expected_kind}"
            )));
        }
        Ok(Self { bytes, at: 9 })
    }

    fn need(&self, n: usize) -> Result<()> {
        if self.at + n > self.bytes.len() {
            return Err(TrugError::Parse {
                offset: self.bytes.len() as u64,
                message: format!("checkpoint truncated at byte {}", self.at),
            });
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<usize> {
        self.need(4)?;
        let v = u32::from_le_bytes(self.bytes[self.at..self.at + 4].try_into().unwrap());
        self.at += 4;
        Ok(v as usize)
    }

    fn byte(&mut self) -> Result<u8> {
        self.need(1)?;
        let v = self.bytes[self.at];
        self.at += 1;
        Ok(v)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        self.need(8 * n)?;
        let out = (0..n)
            .map(|i| {
                let s = self.at + 8 * i;
                f64::from_le_bytes(self.bytes[s..s + 8].try_into().unwrap())
            })
            .collect();
        self.at += 8 * n;
        Ok(out)
    }

    fn mat(&mut self, rows: usize, cols: usize) -> Result<Mat> {
        let data = self.f64s(rows * cols)?;
        let rows_vec: Vec<Vec<f64>> = data.chunks(cols).map(|c| c.to_vec()).collect();
        Ok(Mat::from_rows(rows_vec))
    }

    fn trug(&mut self) -> Result<TrugParams> {
        let mode = match self.byte()? {
            0 => TruncationMode::Shared,
            1 => TruncationMode::PerUnit,
            other => {
                return Err(TrugError::Parse {
                    offset: (self.at - 1) as u64,
                    message: format!("unknown truncation mode byte {other}"),
                })
            }
        };
        let units = self.u32()?;
        let lower_trainable = self.byte()? != 0;
        let upper_trainable = self.byte()? != 0;
        let len = self.u32()?;
        let lower = self.f64s(len)?;
        let upper = self.f64s(len)?;
        TrugParams::from_raw(mode, units, lower, upper, lower_trainable, upper_trainable)
    }

    fn expect_end(&self) -> Result<()> {
        if self.at != self.bytes.len() {
            return Err(TrugError::Parse {
                offset: self.at as u64,
                message: format!("{} trailing bytes after payload", self.bytes.len() - self.at),
            });
        }
        Ok(())
    }
}

fn mat_rows(m: &Mat) -> Vec<f64> {
    m.data().to_vec()
}

pub fn save_rbm(path: &Path, model: &RbmModel) -> Result<()> {
    let mut w = Writer::new(KIND_RBM);
    w.u32(model.n_visible());
    w.u32(model.n_hidden());
    w.trug(&model.trug);
    w.f64s(&mat_rows(&model.w));
    w.f64s(&model.b);
    w.f64s(&model.c);
    w.f64s(&model.d);
    w.finish(path)
}

pub fn load_rbm(path: &Path) -> Result<RbmModel> {
    let mut r = Reader::open(path, KIND_RBM)?;
    let n = r.u32()?;
    let m = r.u32()?;
    let trug = r.trug()?;
    let model = RbmModel {
        w: r.mat(n, m)?,
        b: r.f64s(n)?,
        c: r.f64s(m)?,
        d: r.f64s(m)?,
        trug,
    };
    r.expect_end()?;
    model.validate()?;
    Ok(model)
}

pub fn save_trbm(path: &Path, model: &TrbmModel) -> Result<()> {
    let mut w = Writer::new(KIND_TRBM);
    w.u32(model.n_visible());
    w.u32(model.n_hidden());
    w.trug(&model.trug);
    w.f64s(&mat_rows(&model.w1));
    w.f64s(&mat_rows(&model.w2));
    w.f64s(&mat_rows(&model.w3));
    w.f64s(&mat_rows(&model.w4));
    w.f64s(&model.a);
    w.f64s(&model.b);
    w.f64s(&model.c);
    w.f64s(&model.d);
    w.finish(path)
}

pub fn load_trbm(path: &Path) -> Result<TrbmModel> {
    let mut r = Reader::open(path, KIND_TRBM)?;
    let n = r.u32()?;
    let m = r.u32()?;
    let trug = r.trug()?;
    let model = TrbmModel {
        w1: r.mat(n, m)?,
        w2: r.mat(m, n)?,
        w3: r.mat(n, n)?,
        w4: r.mat(m, m)?,
        a: r.f64s(n)?,
        b: r.f64s(n)?,
        c: r.f64s(m)?,
        d: r.f64s(m)?,
        trug,
    };
    r.expect_end()?;
    Ok(model)
}

pub fn save_tggm(path: &Path, model: &TggmModel) -> Result<()> {
    let mut w = Writer::new(KIND_TGGM);
    w.u32(model.n_inputs());
    w.u32(model.n_hidden());
    w.u32(model.n_outputs());
    w.byte(model.sigma2_trainable as u8);
    w.trug(&model.trug);
    w.f64s(&mat_rows(&model.w0));
    w.f64s(&model.b0);
    w.f64s(&mat_rows(&model.w1));
    w.f64s(&model.b1);
    w.f64s(&[model.sigma2]);
    w.finish(path)
}

pub fn load_tggm(path: &Path) -> Result<TggmModel> {
    let mut r = Reader::open(path, KIND_TGGM)?;
    let p = r.u32()?;
    let m = r.u32()?;
    let q = r.u32()?;
    let sigma2_trainable = r.byte()? != 0;
    let trug = r.trug()?;
    let model = TggmModel {
        w0: r.mat(m, p)?,
        b0: r.f64s(m)?,
        w1: r.mat(q, m)?,
        b1: r.f64s(q)?,
        sigma2: r.f64s(1)?[0],
        sigma2_trainable,
        trug,
    };
    r.expect_end()?;
    model.validate()?;
    Ok(model)
}
