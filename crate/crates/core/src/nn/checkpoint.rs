//! `NSK1` tensor container.
//!
//! Little-endian layout:
//!
//! ```text
//! "NSK1"
//! repeated until end of file:
//!     u32   name length in bytes
//!     [u8]  UTF-8 name
//!     u32   rank
//!     u64   dims[rank]
//!     f64   payload[product(dims)]
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::model::ModelParams;
use super::tensors::TensorSet;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NSK1";

const INPUT_DIMS: &str = "meta.input_dims";

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl TensorRecord {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            dims,
            data,
        }
    }
}

fn encoded_len(r: &TensorRecord) -> usize {
    8 + r.name.len() + 8 * (r.dims.len() + r.data.len())
}

/// Byte offset at which each record starts in the encoded file.
pub fn record_offsets(records: &[TensorRecord]) -> Vec<u64> {
    let mut pos = MAGIC.len();
    records
        .iter()
        .map(|r| {
            let start = pos;
            pos += encoded_len(r);
            start as u64
        })
        .collect()
}

pub fn encode(records: &[TensorRecord]) -> Vec<u8> {
    let payload: usize = records.iter().map(encoded_len).sum();
    let mut out = Vec::with_capacity(4 + payload);
    out.extend_from_slice(MAGIC);
    for r in records {
        debug_assert_eq!(r.dims.iter().product::<usize>(), r.data.len());
        out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
        out.extend_from_slice(r.name.as_bytes());
        out.extend_from_slice(&(r.dims.len() as u32).to_le_bytes());
        for &d in &r.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &r.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<TensorRecord>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected NSK1"));
    }
    let mut records = Vec::new();
    while cur.pos < bytes.len() {
        let start = cur.pos as u64;
        let name_len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "name")?)
            .map_err(|_| Error::format(start + 4, "tensor name is not UTF-8"))?
            .to_owned();
        let rank = cur.u32("rank")? as usize;
        if rank > 8 {
            return Err(Error::format(cur.pos as u64 - 4, format!("implausible rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u64("dimension")? as usize);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n <= (bytes.len() - cur.pos) / 8)
            .ok_or_else(|| {
                Error::format(cur.pos as u64, format!("tensor {name} payload {dims:?} exceeds file size"))
            })?;
        let data = cur
            .take(count * 8, "payload")?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push(TensorRecord { name, dims, data });
    }
    Ok(records)
}

pub fn write_file(path: &Path, records: &[TensorRecord]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(records))?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<TensorRecord>> {
    decode(&fs::read(path)?)
}

pub fn params_to_records(params: &ModelParams) -> Vec<TensorRecord> {
    let (h, w) = params.input_dims();
    let mut out = vec![TensorRecord::new(INPUT_DIMS, vec![2], vec![h as f64, w as f64])];
    out.extend(
        params
            .named_tensors()
            .into_iter()
            .map(|t| TensorRecord::new(t.name, t.shape, t.data.to_vec())),
    );
    out
}

pub fn params_from_records(records: &[TensorRecord]) -> Result<ModelParams> {
    let find = |name: &str| {
        records
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::format(0, format!("checkpoint has no tensor {name}")))
    };
    let dims = find(INPUT_DIMS)?;
    if dims.data.len() != 2 {
        return Err(Error::format(0, "meta.input_dims must hold two values"));
    }
    let head = find("theta2.fc4.weight")?;
    let t = *head.dims.last().unwrap_or(&0);
    let mut params = ModelParams::zeros(dims.data[0] as usize, dims.data[1] as usize, t)
        .map_err(|e| Error::format(0, format!("inconsistent checkpoint: {e}")))?;
    let names: Vec<(String, Vec<usize>)> = params
        .named_tensors()
        .into_iter()
        .map(|n| (n.name, n.shape))
        .collect();
    for ((name, shape), slot) in names.iter().zip(params.tensors_mut()) {
        let r = find(name)?;
        if &r.dims != shape {
            return Err(Error::format(
                0,
                format!("tensor {name} has shape {:?}, expected {shape:?}", r.dims),
            ));
        }
        slot.copy_from_slice(&r.data);
    }
    Ok(params)
}

pub fn save_params(path: &Path, params: &ModelParams) -> Result<()> {
    write_file(path, &params_to_records(params))
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    params_from_records(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_round_trip_bitwise() {
        let p = ModelParams::init(12, 10, 5, 3).unwrap();
        let back = params_from_records(&decode(&encode(&params_to_records(&p))).unwrap()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn truncation_and_magic_errors() {
        let bytes = encode(&[TensorRecord::new("x", vec![2, 2], vec![1.0, 2.0, 3.0, 4.0])]);
        for cut in [2, 6, 12, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::Format { .. })), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[3] = b'2';
        match decode(&bad) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
        assert_eq!(decode(&bytes).unwrap()[0].data, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn layout_is_little_endian() {
        let bytes = encode(&[TensorRecord::new("ab", vec![1], vec![1.0])]);
        assert_eq!(&bytes[..4], b"NSK1");
        assert_eq!(&bytes[4..8], &[2, 0, 0, 0]);
        assert_eq!(&bytes[8..10], b"ab");
        assert_eq!(&bytes[10..14], &[1, 0, 0, 0]);
        assert_eq!(&bytes[14..22], &1u64.to_le_bytes());
        assert_eq!(&bytes[22..30], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 30);
    }

    #[test]
    fn offsets_match_encoding() {
        let records = vec![
            TensorRecord::new("a", vec![2], vec![1.0, 2.0]),
            TensorRecord::new("bcd", vec![1, 1], vec![3.0]),
            TensorRecord::new("", vec![0], vec![]),
        ];
        let bytes = encode(&records);
        let offs = record_offsets(&records);
        assert_eq!(offs[0], 4);
        for (r, &o) in records.iter().zip(&offs) {
            let o = o as usize;
            assert_eq!(&bytes[o..o + 4], &(r.name.len() as u32).to_le_bytes());
        }
        assert_eq!(offs[2] as usize + 4 + 4 + 8, bytes.len());
    }
}
