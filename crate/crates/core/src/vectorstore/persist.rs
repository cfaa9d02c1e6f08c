//! Index file layout (all integers little-endian):
//!
//! ```text
//! "AGRX" | u16 version | u8 kind (0 flat, 1 ivf) | u32 dim | u64 count
//! u32 len + provider id (UTF-8)
//! count × { u32 len + chunk id (UTF-8) | dim × f32 }
//! ivf only: u32 nlist | u64 seed | nlist × dim × f32 centroids
//!           nlist × { u64 len | len × u64 entry index }
//! u32 CRC32 of every preceding byte
//! ```

use super::{FlatIndex, IvfIndex, VectorIndex, VectorSet, VectorStoreError};
use crate::embedding::NORM_TOLERANCE;

pub const MAGIC: &[u8; 4] = b"AGRX";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 8;

const KIND_FLAT: u8 = 0;
const KIND_IVF: u8 = 1;

pub(super) fn encode(index: &VectorIndex) -> Vec<u8> {
    let (vectors, kind) = match index {
        VectorIndex::Flat(f) => (&f.vectors, KIND_FLAT),
        VectorIndex::Ivf(i) => (&i.vectors, KIND_IVF),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + vectors.data.len() * 4 + vectors.len() * 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(kind);
    out.extend_from_slice(&(vectors.dim as u32).to_le_bytes());
    out.extend_from_slice(&(vectors.len() as u64).to_le_bytes());
    put_str(&mut out, &vectors.provider_id);
    for i in 0..vectors.len() {
        put_str(&mut out, &vectors.ids[i]);
        put_f32s(&mut out, vectors.row(i));
    }
    if let VectorIndex::Ivf(ivf) = index {
        out.extend_from_slice(&(ivf.lists.len() as u32).to_le_bytes());
        out.extend_from_slice(&ivf.seed.to_le_bytes());
        put_f32s(&mut out, &ivf.centroids);
        for list in &ivf.lists {
            out.extend_from_slice(&(list.len() as u64).to_le_bytes());
            for &member in list {
                out.extend_from_slice(&(member as u64).to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<VectorIndex, VectorStoreError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(VectorStoreError::BadMagic);
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(VectorStoreError::Truncated);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(VectorStoreError::UnsupportedVersion(version));
    }
    let kind = bytes[6];
    if kind != KIND_FLAT && kind != KIND_IVF {
        return Err(VectorStoreError::UnknownKind(kind));
    }

    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4-byte tail"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        // A structurally short file is reported as truncated; anything else
        // that fails the checksum is corruption.
        return Err(match parse(bytes, kind) {
            Err(VectorStoreError::Truncated) => VectorStoreError::Truncated,
            _ => VectorStoreError::ChecksumMismatch { stored, computed },
        });
    }
    let mut reader = Reader::new(body);
    let index = parse_from(&mut reader, kind)?;
    if !reader.is_empty() {
        return Err(VectorStoreError::Corrupt(format!(
            "{} trailing bytes before checksum",
            reader.remaining()
        )));
    }
    Ok(index)
}

/// Structural parse of header + payload, ignoring what follows.
fn parse(bytes: &[u8], kind: u8) -> Result<VectorIndex, VectorStoreError> {
    let mut reader = Reader::new(bytes);
    parse_from(&mut reader, kind)
}

fn parse_from(reader: &mut Reader<'_>, kind: u8) -> Result<VectorIndex, VectorStoreError> {
    reader.take(7)?; // magic, version, kind: checked by the caller
    let dim = reader.u32()? as usize;
    let count = reader.u64()? as usize;
    if dim == 0 {
        return Err(VectorStoreError::Corrupt("zero dimension".into()));
    }
    let provider_id = reader.string()?;
    // every entry needs at least a length prefix and its vector
    let min_entry = 4usize.saturating_add(dim.saturating_mul(4));
    if count.saturating_mul(min_entry) > reader.remaining() {
        return Err(VectorStoreError::Truncated);
    }
    let mut ids = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    let mut seen = std::collections::HashSet::with_capacity(count);
    for _ in 0..count {
        let id = reader.string()?;
        if !seen.insert(id.clone()) {
            return Err(VectorStoreError::Corrupt(format!("duplicate chunk id {id:?}")));
        }
        let start = data.len();
        reader.f32s(dim, &mut data)?;
        check_unit(&data[start..])?;
        ids.push(id);
    }
    let vectors = VectorSet {
        dim,
        provider_id,
        ids,
        data,
    };
    if count == 0 {
        return Err(VectorStoreError::Corrupt("index has no entries".into()));
    }

    let index = if kind == KIND_FLAT {
        VectorIndex::Flat(FlatIndex { vectors })
    } else {
        let nlist = reader.u32()? as usize;
        let seed = reader.u64()?;
        if nlist == 0 || nlist > count {
            return Err(VectorStoreError::Corrupt(format!("nlist {nlist} with {count} entries")));
        }
        if nlist.saturating_mul(dim).saturating_mul(4) > reader.remaining() {
            return Err(VectorStoreError::Truncated);
        }
        let mut centroids = Vec::with_capacity(nlist * dim);
        reader.f32s(nlist * dim, &mut centroids)?;
        for c in centroids.chunks_exact(dim) {
            check_unit(c)?;
        }
        let mut filed = vec![false; count];
        let mut lists = Vec::with_capacity(nlist);
        for _ in 0..nlist {
            let len = reader.u64()? as usize;
            if len.saturating_mul(8) > reader.remaining() {
                return Err(VectorStoreError::Truncated);
            }
            let mut list = Vec::with_capacity(len);
            for _ in 0..len {
                let member = reader.u64()? as usize;
                if member >= count || filed[member] {
                    return Err(VectorStoreError::Corrupt(format!(
                        "entry {member} is out of range or filed twice"
                    )));
                }
                filed[member] = true;
                list.push(member as u32);
            }
            lists.push(list);
        }
        if filed.iter().any(|f| !f) {
            return Err(VectorStoreError::Corrupt("entry missing from inverted lists".into()));
        }
        VectorIndex::Ivf(IvfIndex {
            vectors,
            centroids,
            lists,
            seed,
        })
    };
    Ok(index)
}

fn check_unit(values: &[f32]) -> Result<(), VectorStoreError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(VectorStoreError::Corrupt("non-finite vector component".into()));
    }
    let norm = values.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(VectorStoreError::Corrupt(format!("vector norm {norm} is not 1")));
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn is_empty(&self) -> bool {
        self.remaining() == 0
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], VectorStoreError> {
        if n > self.remaining() {
            return Err(VectorStoreError::Truncated);
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, VectorStoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, VectorStoreError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, VectorStoreError> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| VectorStoreError::Corrupt("id is not valid UTF-8".into()))
    }

    fn f32s(&mut self, n: usize, out: &mut Vec<f32>) -> Result<(), VectorStoreError> {
        let raw = self.take(n.checked_mul(4).ok_or(VectorStoreError::Truncated)?)?;
        out.extend(
            raw.chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))),
        );
        Ok(())
    }
}
