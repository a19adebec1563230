//! Flat binary container for extractor models and memory snapshots.
//!
//! All integers are little-endian `u64` unless noted, all reals little-endian
//! IEEE-754 `f64`, all matrices row-major.
//!
//! ```text
//! header   magic  8 bytes  "DRIFTMEM"
//!          version u32     1
//!          kind    u8      0 identity | 1 pca | 2 autoencoder | 16 memory
//!
//! extractor (kind 0..=2)
//!          d, D
//!          identity     (no parameters)
//!          pca          mean[d], components[D*d], explained_variance[D]
//!          autoencoder  noise_std, W_enc[D*d], b_enc[D], W_dec[d*D], b_dec[d]
//!          has_stats u8  0 | 1
//!          if 1: count, mean[d], std[d]
//!
//! memory (kind 16)
//!          N, D, d
//!          policy u8     0 fifo | 1 lru | 2 random
//!          insert_counter, use_clock
//!          N entries in slot order:
//!              inserted_at, last_used, record_index,
//!              label u8 (0 none | 1 normal | 2 anomalous),
//!              embedding[D], raw[d]
//! ```
//!
//! The random-replacement generator state is not stored; it is reseeded on load.

use std::path::Path;

use crate::error::{Error, Result};
use crate::extractor::{AutoencoderModel, ExtractorModel, FeatureExtractor, IdentityModel, PcaModel};
use crate::types::NormalizationStats;

pub const MAGIC: &[u8; 8] = b"DRIFTMEM";
pub const VERSION: u32 = 1;

pub(crate) const KIND_IDENTITY: u8 = 0;
pub(crate) const KIND_PCA: u8 = 1;
pub(crate) const KIND_AUTOENCODER: u8 = 2;
pub(crate) const KIND_MEMORY: u8 = 16;

#[derive(Default)]
pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn header(kind: u8) -> Self {
        let mut w = Writer::default();
        w.buf.extend_from_slice(MAGIC);
        w.buf.extend_from_slice(&VERSION.to_le_bytes());
        w.u8(kind);
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Validates magic and version and returns the reader with the kind tag.
    pub fn open(buf: &'a [u8]) -> Result<(Self, u8)> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("missing magic string".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let kind = r.u8()?;
        Ok((r, kind))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("size overflows usize".into()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n > self.buf.len() / 8 {
            return Err(Error::Format(format!("array of {n} reals exceeds the file")));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn encode_extractor(model: &ExtractorModel, stats: Option<&NormalizationStats>) -> Vec<u8> {
    let kind = match model {
        ExtractorModel::Identity(_) => KIND_IDENTITY,
        ExtractorModel::Pca(_) => KIND_PCA,
        ExtractorModel::Autoencoder(_) => KIND_AUTOENCODER,
    };
    let mut w = Writer::header(kind);
    w.u64(model.input_dim() as u64);
    w.u64(model.output_dim() as u64);
    match model {
        ExtractorModel::Identity(_) => {}
        ExtractorModel::Pca(p) => {
            w.f64s(&p.mean);
            w.f64s(&p.components);
            w.f64s(&p.explained_variance);
        }
        ExtractorModel::Autoencoder(a) => {
            w.f64(a.noise_std);
            w.f64s(a.params());
        }
    }
    match stats {
        Some(s) => {
            w.u8(1);
            w.u64(s.count as u64);
            w.f64s(&s.mean);
            w.f64s(&s.std);
        }
        None => w.u8(0),
    }
    w.buf
}

pub fn decode_extractor(buf: &[u8]) -> Result<(ExtractorModel, Option<NormalizationStats>)> {
    let (mut r, kind) = Reader::open(buf)?;
    let d = r.usize()?;
    let dd = r.usize()?;
    let model = match kind {
        KIND_IDENTITY => {
            if d != dd {
                return Err(Error::Format("identity model with d != D".into()));
            }
            ExtractorModel::Identity(IdentityModel { dim: d })
        }
        KIND_PCA => {
            let mean = r.f64s(d)?;
            let components = r.f64s(dd * d)?;
            let explained = r.f64s(dd)?;
            ExtractorModel::Pca(PcaModel::from_parts(d, components, mean, explained)?)
        }
        KIND_AUTOENCODER => {
            let noise = r.f64()?;
            let params = r.f64s(2 * d * dd + d + dd)?;
            ExtractorModel::Autoencoder(AutoencoderModel::from_flat(d, dd, noise, params)?)
        }
        other => return Err(Error::Format(format!("kind {other} is not an extractor"))),
    };
    let stats = match r.u8()? {
        0 => None,
        1 => {
            let count = r.usize()?;
            let mean = r.f64s(d)?;
            let std = r.f64s(d)?;
            Some(NormalizationStats { mean, std, count })
        }
        t => return Err(Error::Format(format!("bad stats flag {t}"))),
    };
    r.finish()?;
    Ok((model, stats))
}

pub fn save_extractor(path: &Path, model: &ExtractorModel, stats: Option<&NormalizationStats>) -> Result<()> {
    std::fs::write(path, encode_extractor(model, stats)).map_err(|e| Error::io(path, e))
}

pub fn load_extractor(path: &Path) -> Result<(ExtractorModel, Option<NormalizationStats>)> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_extractor(&buf)
}
