//! `SCT1` trace files.
//!
//! Little endian throughout:
//!
//! ```text
//! "SCT1"
//! u32 N, u32 n, u8 leakage_kind, u8 byte_index, [u8; 16] fixed key (zeros
//! when keys vary), u8 key_policy (0 fixed, 1 uniform)
//! N x { [u8; 16] plaintext, [u8; 16] key, u8 label, n x f32 samples }
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use scalab_core::aes::{AcquisitionRecord, Block, LeakageKind, LeakageModel};
use scalab_core::dataset::{Dataset, KeyPolicy};

use crate::error::{LabError, Result};

pub const TRACE_MAGIC: [u8; 4] = *b"SCT1";

pub fn write_traces<W: Write>(mut w: W, d: &Dataset) -> io::Result<()> {
    w.write_all(&TRACE_MAGIC)?;
    w.write_all(&(d.len() as u32).to_le_bytes())?;
    w.write_all(&(d.trace_len as u32).to_le_bytes())?;
    w.write_all(&[d.leakage.kind.code(), d.leakage.byte_index])?;
    let (key, policy) = match d.key_policy {
        KeyPolicy::Fixed(k) => (k, 0u8),
        KeyPolicy::Uniform => ([0; 16], 1u8),
    };
    w.write_all(&key)?;
    w.write_all(&[policy])?;
    for (i, r) in d.records.iter().enumerate() {
        w.write_all(&r.plaintext)?;
        w.write_all(&r.key)?;
        w.write_all(&[r.label])?;
        for &x in d.trace(i) {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    w.flush()
}

fn bad(reason: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, reason.into())
}

fn take<const K: usize, R: Read>(r: &mut R) -> io::Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b)?;
    Ok(b)
}

/// Reads a trace file; labels are checked against plaintext, key and the
/// header's leakage model.
pub fn read_traces<R: Read>(mut r: R) -> io::Result<Dataset> {
    if take::<4, _>(&mut r)? != TRACE_MAGIC {
        return Err(bad("not an SCT1 trace file"));
    }
    let count = u32::from_le_bytes(take(&mut r)?) as usize;
    let n = u32::from_le_bytes(take(&mut r)?) as usize;
    let [kind, byte_index] = take(&mut r)?;
    let kind = LeakageKind::from_code(kind).ok_or_else(|| bad(format!("unknown leakage kind {kind}")))?;
    if byte_index > 15 {
        return Err(bad(format!("byte index {byte_index} out of range")));
    }
    let leakage = LeakageModel::new(kind, byte_index);
    let fixed: Block = take(&mut r)?;
    let key_policy = match take::<1, _>(&mut r)?[0] {
        0 => KeyPolicy::Fixed(fixed),
        1 => KeyPolicy::Uniform,
        p => return Err(bad(format!("unknown key policy {p}"))),
    };

    let mut traces = Vec::with_capacity(count * n);
    let mut records = Vec::with_capacity(count);
    let mut row = vec![0u8; 4 * n];
    for i in 0..count {
        let plaintext: Block = take(&mut r)?;
        let key: Block = take(&mut r)?;
        let [label] = take(&mut r)?;
        let rec = AcquisitionRecord::new(plaintext, key, &leakage);
        if rec.label != label {
            return Err(bad(format!("record {i}: label {label} disagrees with its plaintext and key")));
        }
        if matches!(key_policy, KeyPolicy::Fixed(k) if k != key) {
            return Err(bad(format!("record {i}: key differs from the fixed key")));
        }
        r.read_exact(&mut row)?;
        traces.extend(row.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))));
        records.push(rec);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes after the last record"));
    }
    Dataset::new(traces, records, leakage, n, key_policy).map_err(|e| bad(e.to_string()))
}

pub fn save_traces(path: &Path, d: &Dataset) -> Result<()> {
    let f = File::create(path).map_err(|e| LabError::io(path, e))?;
    write_traces(BufWriter::new(f), d).map_err(|e| LabError::io(path, e))
}

pub fn load_traces(path: &Path) -> Result<Dataset> {
    let f = File::open(path).map_err(|e| LabError::io(path, e))?;
    read_traces(BufReader::new(f)).map_err(|e| LabError::format(path, e.to_string()))
}
