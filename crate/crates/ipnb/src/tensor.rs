//! `.ipnt` tensor files.
//!
//! Layout, all integers little-endian and no padding:
//!
//! ```text
//! "IPNT" | u32 version | u32 header length | JSON header | f32 payload
//! ```
//!
//! The header carries `dtype` (`"c64"` or `"f32"`), `shape`, `axes`,
//! `frame_ids` and a free-form `meta` object. Complex payloads interleave
//! real and imaginary parts; elements are row-major over `shape`.

use std::fs;
use std::io;
use std::path::Path;

use ipnb_core::ipn::{IpnCovariance, IpnSeries};
use ipnb_core::linalg::{CMat, C64};
use ipnb_core::scenario::FrameChannel;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"IPNT";
pub const VERSION: u32 = 1;
const PREFIX: usize = 12;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated header")]
    TruncatedHeader,
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("shape/payload mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite entry at flat index {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    C64,
    F32,
}

impl Dtype {
    /// f32 words per element.
    pub fn width(self) -> usize {
        match self {
            Self::C64 => 2,
            Self::F32 => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub axes: Vec<String>,
    #[serde(default)]
    pub frame_ids: Vec<u64>,
    #[serde(default)]
    pub meta: Map<String, Value>,
}

impl Header {
    pub fn elements(&self) -> usize {
        self.shape.iter().product()
    }

    /// Payload length in f32 words.
    pub fn words(&self) -> usize {
        self.elements() * self.dtype.width()
    }

    fn check(&self) -> Result<()> {
        if self.axes.len() != self.shape.len() {
            return Err(TensorError::ShapeMismatch(format!("{} axes for {} dimensions", self.axes.len(), self.shape.len())));
        }
        if !self.frame_ids.is_empty() && self.shape.first() != Some(&self.frame_ids.len()) {
            return Err(TensorError::ShapeMismatch(format!("{} frame ids for leading extent {:?}", self.frame_ids.len(), self.shape.first())));
        }
        Ok(())
    }
}

/// Header plus payload; `data.len() == header.words()`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub header: Header,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(header: Header, data: Vec<f32>) -> Result<Self> {
        header.check()?;
        if data.len() != header.words() {
            return Err(TensorError::ShapeMismatch(format!("shape {:?} needs {} words, got {}", header.shape, header.words(), data.len())));
        }
        Ok(Self { header, data })
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        self.header.check()?;
        if self.data.len() != self.header.words() {
            return Err(TensorError::ShapeMismatch(format!("shape {:?} needs {} words, got {}", self.header.shape, self.header.words(), self.data.len())));
        }
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(i));
        }
        let header = serde_json::to_vec(&self.header)?;
        let hlen = u32::try_from(header.len()).map_err(|_| TensorError::ShapeMismatch("header exceeds u32".into()))?;
        let mut out = Vec::with_capacity(PREFIX + header.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&hlen.to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(TensorError::BadMagic);
        }
        if bytes.len() < PREFIX {
            return Err(TensorError::TruncatedHeader);
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != VERSION {
            return Err(TensorError::UnsupportedVersion(version));
        }
        let hlen = word(8) as usize;
        let body = PREFIX.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or(TensorError::TruncatedHeader)?;
        let header: Header = serde_json::from_slice(&bytes[PREFIX..body])?;
        header.check()?;
        let expected = header
            .words()
            .checked_mul(4)
            .ok_or_else(|| TensorError::ShapeMismatch(format!("shape {:?} overflows", header.shape)))?;
        let found = bytes.len() - body;
        if found < expected {
            return Err(TensorError::TruncatedPayload { expected, found });
        }
        if found > expected {
            return Err(TensorError::ShapeMismatch(format!("{} trailing bytes after payload", found - expected)));
        }
        let data = bytes[body..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        Ok(Self { header, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }

    fn expect(&self, dtype: Dtype, rank: usize) -> Result<()> {
        if self.header.dtype != dtype || self.header.shape.len() != rank {
            return Err(TensorError::ShapeMismatch(format!(
                "expected {dtype:?} of rank {rank}, found {:?} of shape {:?}",
                self.header.dtype, self.header.shape
            )));
        }
        Ok(())
    }

    fn complex(&self, flat: usize) -> C64 {
        C64::new(self.data[2 * flat] as f64, self.data[2 * flat + 1] as f64)
    }
}

/// Complex `[T, X, rows, cols]` tensor from per-frame matrix lists.
fn pack(frames: &[(usize, &[CMat])], axes: [&str; 4], meta: Map<String, Value>) -> Result<Tensor> {
    let nx = frames.first().map_or(0, |f| f.1.len());
    let (rows, cols) = frames.first().and_then(|f| f.1.first()).map_or((0, 0), CMat::shape);
    let mut data = Vec::with_capacity(frames.len() * nx * rows * cols * 2);
    for (_, mats) in frames {
        if mats.len() != nx || mats.iter().any(|m| m.shape() != (rows, cols)) {
            return Err(TensorError::ShapeMismatch("frames differ in dimensions".into()));
        }
        for m in *mats {
            for z in m.as_slice() {
                data.push(z.re as f32);
                data.push(z.im as f32);
            }
        }
    }
    let header = Header {
        dtype: Dtype::C64,
        shape: vec![frames.len(), nx, rows, cols],
        axes: axes.iter().map(|s| s.to_string()).collect(),
        frame_ids: frames.iter().map(|f| f.0 as u64).collect(),
        meta,
    };
    Tensor::new(header, data)
}

/// Inverse of [`pack`]: `(frame id, matrices)` per leading index.
fn unpack(t: &Tensor) -> Result<Vec<(usize, Vec<CMat>)>> {
    t.expect(Dtype::C64, 4)?;
    let [nt, nx, rows, cols] = <[usize; 4]>::try_from(t.header.shape.as_slice()).expect("rank 4");
    let ids: Vec<usize> = if t.header.frame_ids.is_empty() { (0..nt).collect() } else { t.header.frame_ids.iter().map(|&i| i as usize).collect() };
    let per = rows * cols;
    Ok((0..nt)
        .map(|f| {
            let mats = (0..nx)
                .map(|x| {
                    let base = (f * nx + x) * per;
                    CMat::from_fn(rows, cols, |i, j| t.complex(base + i * cols + j))
                })
                .collect();
            (ids[f], mats)
        })
        .collect())
}

pub const IPN_AXES: [&str; 4] = ["frame", "subcarrier", "row", "col"];
pub const CHANNEL_AXES: [&str; 4] = ["frame", "subcarrier", "rx", "tx"];

/// `[T, X, K_A, K_A]` complex tensor with the series' frame indices.
pub fn series_to_tensor(s: &IpnSeries, meta: Map<String, Value>) -> Result<Tensor> {
    let frames: Vec<(usize, &[CMat])> = s.frames().iter().map(|f| (f.t, f.r.as_slice())).collect();
    pack(&frames, IPN_AXES, meta)
}

pub fn tensor_to_series(t: &Tensor) -> Result<IpnSeries> {
    let shape = &t.header.shape;
    if shape.len() == 4 && shape[2] != shape[3] {
        return Err(TensorError::ShapeMismatch(format!("covariances must be square, found {}x{}", shape[2], shape[3])));
    }
    let frames = unpack(t)?.into_iter().map(|(t, r)| IpnCovariance { t, r }).collect();
    IpnSeries::new(frames).map_err(|e| TensorError::ShapeMismatch(e.to_string()))
}

/// `[T, X, K_A, K_B]` complex tensor.
pub fn channels_to_tensor(chs: &[FrameChannel], meta: Map<String, Value>) -> Result<Tensor> {
    let frames: Vec<(usize, &[CMat])> = chs.iter().map(|c| (c.t, c.h.as_slice())).collect();
    pack(&frames, CHANNEL_AXES, meta)
}

pub fn tensor_to_channels(t: &Tensor) -> Result<Vec<FrameChannel>> {
    Ok(unpack(t)?.into_iter().map(|(t, h)| FrameChannel { t, h }).collect())
}
