//! Binary archive layout (all integers little-endian):
//!
//! ```text
//! "SPID"                      4-byte magic
//! version                     u32
//! metadata section            u64 length | UTF-8 JSON | u32 CRC-32
//! block count                 u64
//! block sections              u64 length | payload | u32 CRC-32   (per block)
//! ```
//!
//! A block payload is `rank u64`, `union_len u64`, `union_len` u64 indices,
//! `rank` u64 skeleton indices, then for `rank > 0` the skeleton and the
//! coefficient matrix, each as `rows u64 | cols u64 | f64 × rows·cols`
//! (column-major IEEE-754).

use super::{Archive, ArchiveMetadata, BlockPayload};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub const MAGIC: &[u8; 4] = b"SPID";
pub const VERSION: u32 = 1;

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_matrix(out: &mut Vec<u8>, m: &DenseMatrix) {
    put_u64(out, m.rows());
    put_u64(out, m.cols());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_section(out: &mut Vec<u8>, payload: &[u8]) {
    put_u64(out, payload.len());
    out.extend_from_slice(payload);
    out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
}

fn encode_block(b: &BlockPayload) -> Vec<u8> {
    let mut p = Vec::new();
    put_u64(&mut p, b.rank());
    put_u64(&mut p, b.union_indices.len());
    b.union_indices.iter().for_each(|&i| put_u64(&mut p, i));
    b.skeleton_indices.iter().for_each(|&i| put_u64(&mut p, i));
    if let Some((s, c)) = &b.factors {
        put_matrix(&mut p, s);
        put_matrix(&mut p, c);
    }
    p
}

pub fn encode(archive: &Archive) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(&archive.metadata).map_err(|e| Error::Metadata(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_section(&mut out, &json);
    put_u64(&mut out, archive.blocks.len());
    for b in &archive.blocks {
        put_section(&mut out, &encode_block(b));
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::TruncatedPayload)?;
        let s = self.buf.get(self.pos..end).ok_or(Error::TruncatedPayload)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::TruncatedPayload)
    }

    fn indices(&mut self, n: usize) -> Result<Vec<usize>> {
        (0..n).map(|_| self.u64()).collect()
    }

    fn matrix(&mut self) -> Result<DenseMatrix> {
        let rows = self.u64()?;
        let cols = self.u64()?;
        let len = rows.checked_mul(cols).ok_or(Error::TruncatedPayload)?;
        let bytes = self.take(len.checked_mul(8).ok_or(Error::TruncatedPayload)?)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        DenseMatrix::new(rows, cols, data).map_err(|e| Error::Metadata(e.to_string()))
    }

    fn section(&mut self, name: impl FnOnce() -> String) -> Result<&'a [u8]> {
        let len = self.u64()?;
        let payload = self.take(len)?;
        let crc = self.u32()?;
        if crc32fast::hash(payload) != crc {
            return Err(Error::ChecksumMismatch { section: name() });
        }
        Ok(payload)
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn decode_block(payload: &[u8]) -> Result<BlockPayload> {
    let mut c = Cursor {
        buf: payload,
        pos: 0,
    };
    let rank = c.u64()?;
    let union_len = c.u64()?;
    let union_indices = c.indices(union_len)?;
    let skeleton_indices = c.indices(rank)?;
    let factors = if rank > 0 {
        Some((c.matrix()?, c.matrix()?))
    } else {
        None
    };
    if !c.done() {
        return Err(Error::Metadata("trailing bytes in block payload".into()));
    }
    Ok(BlockPayload {
        union_indices,
        skeleton_indices,
        factors,
    })
}

pub fn decode(bytes: &[u8]) -> Result<Archive> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4).map_err(|_| Error::BadMagic)? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let json = c.section(|| "metadata".into())?;
    let metadata: ArchiveMetadata =
        serde_json::from_slice(json).map_err(|e| Error::Metadata(e.to_string()))?;
    let count = c.u64()?;
    let mut blocks = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        blocks.push(decode_block(c.section(|| format!("block {i}"))?)?);
    }
    if !c.done() {
        return Err(Error::Metadata("trailing bytes after last block".into()));
    }
    let archive = Archive { metadata, blocks };
    archive.validate()?;
    Ok(archive)
}
