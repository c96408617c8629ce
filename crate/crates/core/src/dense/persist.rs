//! Binary index format, all integers little-endian:
//!
//! ```text
//! header: "HNSW" | version u32 | dims u32 | M u32 | ef_construction u32 |
//!         ef_search u32 | level_multiplier f64 | seed u64 |
//!         quant_enabled u8 | quant_calibrated u8 | [mins f32*dims | scales f32*dims] |
//!         count u32 | checksum u32
//! body:   frozen u8 | rng_word_pos u128 | entry u32 | max_level u32 |
//!         count x (id_len u32, id bytes) | count x level u8 |
//!         storage_kind u8 | vectors (f32 or u8, count*dims) |
//!         count x levels x (len u32, neighbours u32*len)
//! ```
//!
//! The checksum is CRC-32 over every byte except the checksum field itself.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{HnswIndex, HnswParams, QuantizationSpec, Storage};
use crate::error::{Error, Result};

pub const DENSE_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"HNSW";
const NO_ENTRY: u32 = u32::MAX;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("index sizes fit in u32"));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Corrupt(format!("truncated at byte {} (wanted {n} more)", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.array()?))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Corrupt(msg.into())
}

impl HnswIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(DENSE_FORMAT_VERSION);
        w.usize(self.dims);
        w.usize(self.params.m);
        w.usize(self.params.ef_construction);
        w.usize(self.params.ef_search);
        w.f64(self.params.level_multiplier);
        w.u64(self.params.seed);
        w.u8(self.quant.enabled as u8);
        w.u8(self.quant.is_calibrated() as u8);
        if self.quant.is_calibrated() {
            self.quant.mins.iter().for_each(|&v| w.f32(v));
            self.quant.scales.iter().for_each(|&v| w.f32(v));
        }
        w.usize(self.ids.len());
        let checksum_at = w.0.len();
        w.u32(0);

        w.u8(self.frozen as u8);
        w.u128(self.rng.get_word_pos());
        w.u32(self.entry.unwrap_or(NO_ENTRY));
        w.usize(self.max_level);
        for id in &self.ids {
            w.usize(id.len());
            w.0.extend_from_slice(id.as_bytes());
        }
        for levels in &self.links {
            w.u8((levels.len() - 1) as u8);
        }
        match &self.storage {
            Storage::Full(v) => {
                w.u8(0);
                v.iter().for_each(|&x| w.f32(x));
            }
            Storage::Quantized(c) => {
                w.u8(1);
                w.0.extend_from_slice(c);
            }
        }
        for levels in &self.links {
            for list in levels {
                w.usize(list.len());
                list.iter().for_each(|&n| w.u32(n));
            }
        }

        let mut hasher = crc32fast::Hasher::new();
        hasher.update(&w.0[..checksum_at]);
        hasher.update(&w.0[checksum_at + 4..]);
        let sum = hasher.finalize();
        w.0[checksum_at..checksum_at + 4].copy_from_slice(&sum.to_le_bytes());
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u32()?;
        if version != DENSE_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: version,
                supported: DENSE_FORMAT_VERSION,
            });
        }
        let dims = r.usize()?;
        let params = HnswParams {
            m: r.usize()?,
            ef_construction: r.usize()?,
            ef_search: r.usize()?,
            level_multiplier: r.f64()?,
            seed: r.u64()?,
        };
        let enabled = r.u8()? != 0;
        let calibrated = r.u8()? != 0;
        let quant = if calibrated {
            let mins = (0..dims).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            let scales = (0..dims).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            QuantizationSpec { enabled, mins, scales }
        } else {
            QuantizationSpec {
                enabled,
                ..QuantizationSpec::default()
            }
        };
        let count = r.usize()?;
        let checksum_at = r.pos;
        let stored_sum = r.u32()?;
        let mut hasher = crc32fast::Hasher::new();
        hasher.update(&buf[..checksum_at]);
        hasher.update(&buf[checksum_at + 4..]);
        if hasher.finalize() != stored_sum {
            return Err(corrupt("checksum mismatch"));
        }
        params.validate().map_err(|e| corrupt(e.to_string()))?;
        if dims == 0 {
            return Err(corrupt("zero dims"));
        }

        let frozen = r.u8()? != 0;
        let word_pos = r.u128()?;
        let entry = match r.u32()? {
            NO_ENTRY => None,
            e if (e as usize) < count => Some(e),
            e => return Err(corrupt(format!("entry point {e} out of range"))),
        };
        let max_level = r.usize()?;
        let mut ids = Vec::with_capacity(count.min(buf.len()));
        for _ in 0..count {
            let len = r.usize()?;
            let bytes = r.take(len)?;
            ids.push(String::from_utf8(bytes.to_vec()).map_err(|_| corrupt("id is not UTF-8"))?);
        }
        let levels = (0..count).map(|_| r.u8()).collect::<Result<Vec<_>>>()?;
        let storage = match r.u8()? {
            0 => Storage::Full((0..count * dims).map(|_| r.f32()).collect::<Result<_>>()?),
            1 => Storage::Quantized(r.take(count * dims)?.to_vec()),
            k => return Err(corrupt(format!("unknown storage kind {k}"))),
        };
        let mut links = Vec::with_capacity(count);
        let mut in_degree = vec![0u32; count];
        for &level in &levels {
            let mut node_links = Vec::with_capacity(level as usize + 1);
            for l in 0..=level as usize {
                let len = r.usize()?;
                let list = (0..len).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
                if list.iter().any(|&n| n as usize >= count) {
                    return Err(corrupt("neighbour id out of range"));
                }
                if l == 0 {
                    list.iter().for_each(|&n| in_degree[n as usize] += 1);
                }
                node_links.push(list);
            }
            links.push(node_links);
        }
        if r.pos != buf.len() {
            return Err(corrupt("trailing bytes"));
        }

        let lookup = ids.iter().enumerate().map(|(i, id)| (id.clone(), i as u32)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_word_pos(word_pos);
        Ok(Self {
            params,
            dims,
            ids,
            lookup,
            links,
            in_degree,
            entry,
            max_level,
            storage,
            quant,
            frozen,
            rng,
        })
    }

    pub fn persist(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn restore(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = fs::read(path).map_err(|source| Error::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&buf)
    }
}
