//! Binary on-disk tensor format.
//!
//! Little-endian layout, no padding:
//!
//! | offset        | field                                   |
//! |---------------|-----------------------------------------|
//! | 0             | magic `RSQE`                            |
//! | 4             | u32 version = 1                         |
//! | 8             | u8 dtype (1 = f32)                      |
//! | 9             | u8 flags (bit 0: labels present)        |
//! | 10            | u16 reserved = 0                        |
//! | 12            | u32 ndim                                |
//! | 16            | ndim x u64 dims                         |
//! | 16 + 8*ndim   | product(dims) f32 payload               |
//! | after payload | if labels: u64 count, count x u32 labels |
//!
//! Round-trips are bit-exact. This is the interop boundary for externally
//! produced embeddings, datasets, and parameter checkpoints.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"RSQE";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;
const FLAG_LABELS: u8 = 0b0000_0001;

fn format_err<T>(offset: u64, detail: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        offset,
        detail: detail.into(),
    })
}

/// Writes a tensor (and optional per-row labels) to `path`.
///
/// Labels, when given, must have one entry per leading-dimension row and the
/// payload must be finite.
pub fn write_tensor_file(
    path: impl AsRef<Path>,
    tensor: &Tensor<f32>,
    labels: Option<&[u32]>,
) -> Result<()> {
    if !tensor.all_finite() {
        return Err(Error::Parameter(
            "tensor payload contains non-finite values".into(),
        ));
    }
    if let Some(labels) = labels {
        if labels.len() != tensor.rows() {
            return Err(Error::Parameter(format!(
                "label count {} does not match leading dimension {}",
                labels.len(),
                tensor.rows()
            )));
        }
    }

    let mut bytes = Vec::with_capacity(16 + 8 * tensor.shape().len() + 4 * tensor.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.push(DTYPE_F32);
    bytes.push(if labels.is_some() { FLAG_LABELS } else { 0 });
    bytes.extend_from_slice(&0u16.to_le_bytes());
    bytes.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
    for &dim in tensor.shape() {
        bytes.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    for &value in tensor.data() {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
    if let Some(labels) = labels {
        bytes.extend_from_slice(&(labels.len() as u64).to_le_bytes());
        for &label in labels {
            bytes.extend_from_slice(&label.to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a tensor file written by [`write_tensor_file`].
pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<(Tensor<f32>, Option<Vec<u32>>)> {
    let bytes = fs::read(path)?;
    let mut cursor = Cursor::new(&bytes);

    let magic = cursor.take(4, "magic")?;
    if magic != MAGIC {
        return format_err(0, format!("bad magic {:?}, expected \"RSQE\"", magic));
    }
    let version_off = cursor.pos;
    let version = cursor.u32("version")?;
    if version != VERSION {
        return format_err(version_off, format!("unsupported version {version}"));
    }
    let dtype_off = cursor.pos;
    let dtype = cursor.u8("dtype")?;
    if dtype != DTYPE_F32 {
        return format_err(dtype_off, format!("unsupported dtype {dtype}"));
    }
    let flags_off = cursor.pos;
    let flags = cursor.u8("flags")?;
    if flags & !FLAG_LABELS != 0 {
        return format_err(flags_off, format!("unknown flag bits {flags:#010b}"));
    }
    let reserved_off = cursor.pos;
    let reserved = cursor.u16("reserved")?;
    if reserved != 0 {
        return format_err(
            reserved_off,
            format!("reserved field is {reserved}, expected 0"),
        );
    }
    let ndim = cursor.u32("ndim")? as usize;

    let mut shape = Vec::with_capacity(ndim.min(64));
    let mut count: usize = 1;
    for i in 0..ndim {
        let dim = cursor.u64(&format!("dim {i}"))? as usize;
        count = count.checked_mul(dim).ok_or(Error::Format {
            offset: cursor.pos - 8,
            detail: format!("dimension product overflows at dim {i}"),
        })?;
        shape.push(dim);
    }

    // Validate payload length before allocating anything proportional to it.
    let payload_bytes = count.checked_mul(4).ok_or(Error::Format {
        offset: cursor.pos,
        detail: "payload size overflows".into(),
    })?;
    if cursor.remaining() < payload_bytes {
        return format_err(
            bytes.len() as u64,
            format!(
                "truncated payload: need {payload_bytes} bytes, {} remain",
                cursor.remaining()
            ),
        );
    }
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(f32::from_le_bytes(
            cursor.take(4, "payload")?.try_into().unwrap(),
        ));
    }

    let labels = if flags & FLAG_LABELS != 0 {
        let label_count = cursor.u64("label count")? as usize;
        let label_bytes = label_count.checked_mul(4).ok_or(Error::Format {
            offset: cursor.pos,
            detail: "label size overflows".into(),
        })?;
        if cursor.remaining() < label_bytes {
            return format_err(
                bytes.len() as u64,
                format!(
                    "truncated labels: need {label_bytes} bytes, {} remain",
                    cursor.remaining()
                ),
            );
        }
        let mut labels = Vec::with_capacity(label_count);
        for _ in 0..label_count {
            labels.push(u32::from_le_bytes(
                cursor.take(4, "labels")?.try_into().unwrap(),
            ));
        }
        Some(labels)
    } else {
        None
    };

    if cursor.remaining() != 0 {
        return format_err(cursor.pos, format!("{} trailing bytes", cursor.remaining()));
    }

    Ok((Tensor::new(shape, data)?, labels))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: u64,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos as usize
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return format_err(
                self.bytes.len() as u64,
                format!("truncated while reading {what}"),
            );
        }
        let start = self.pos as usize;
        self.pos += n as u64;
        Ok(&self.bytes[start..start + n])
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}
