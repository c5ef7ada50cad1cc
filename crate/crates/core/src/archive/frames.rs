//! Raw snapshot frames: `m` little-endian f64 values per frame, frames in
//! time order, described by a JSON sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::sketch::GridGeom;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub m: usize,
    pub n: usize,
    pub grid: GridGeom,
    #[serde(default)]
    pub qoi: Option<String>,
    #[serde(default)]
    pub provenance: String,
}

impl FrameMeta {
    pub fn validate(&self) -> Result<()> {
        self.grid.check_rows(self.m)?;
        if self.n == 0 {
            return Err(Error::Metadata("frame count must be >= 1".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let meta: Self = serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| Error::Metadata(e.to_string()))?;
        meta.validate()?;
        Ok(meta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json =
            serde_json::to_string_pretty(self).map_err(|e| Error::Metadata(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }
}

pub struct FrameWriter {
    out: BufWriter<File>,
    m: usize,
    frames: usize,
}

impl FrameWriter {
    pub fn create(path: impl AsRef<Path>, m: usize) -> Result<Self> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
            m,
            frames: 0,
        })
    }

    pub fn push(&mut self, frame: &[f64]) -> Result<()> {
        if frame.len() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "frame has {} values, expected {}",
                frame.len(),
                self.m
            )));
        }
        for v in frame {
            self.out.write_all(&v.to_le_bytes())?;
        }
        self.frames += 1;
        Ok(())
    }

    /// Flushes and returns the number of frames written.
    pub fn finish(mut self) -> Result<usize> {
        self.out.flush()?;
        Ok(self.frames)
    }
}

pub fn write_frames(path: impl AsRef<Path>, a: &DenseMatrix) -> Result<()> {
    let mut w = FrameWriter::create(path, a.rows())?;
    for col in a.columns() {
        w.push(col)?;
    }
    w.finish().map(drop)
}

/// Pull-based frame source; yields exactly `n` frames or an error.
pub struct FrameReader {
    input: BufReader<File>,
    m: usize,
    remaining: usize,
}

impl FrameReader {
    pub fn open(path: impl AsRef<Path>, meta: &FrameMeta) -> Result<Self> {
        meta.validate()?;
        let file = File::open(path)?;
        let expected = (meta.m * meta.n * 8) as u64;
        let actual = file.metadata()?.len();
        if actual != expected {
            return Err(Error::Metadata(format!(
                "frame file holds {actual} bytes, sidecar implies {expected}"
            )));
        }
        Ok(Self {
            input: BufReader::new(file),
            m: meta.m,
            remaining: meta.n,
        })
    }

    fn read_frame(&mut self) -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; self.m * 8];
        self.input
            .read_exact(&mut bytes)
            .map_err(|e| match e.kind() {
                ErrorKind::UnexpectedEof => Error::TruncatedPayload,
                _ => Error::Io(e),
            })?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl Iterator for FrameReader {
    type Item = Result<Vec<f64>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let frame = self.read_frame();
        if frame.is_err() {
            self.remaining = 0;
        }
        Some(frame)
    }
}

pub fn read_frames(path: impl AsRef<Path>, meta: &FrameMeta) -> Result<DenseMatrix> {
    let cols = FrameReader::open(path, meta)?.collect::<Result<Vec<_>>>()?;
    DenseMatrix::from_columns(&cols)
}
