//! Checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset     size  field
//! 0          8     magic  b"CHPRCKPT"
//! 8          4     format version (u32, currently 1)
//! 12         8     header length L in bytes (u64)
//! 20         L     header: UTF-8 JSON {"spec": NetworkSpec, "meta": Metadata}
//! 20+L       8     value count V (u64), must equal the spec's parameter count
//! 28+L       8*V   parameters as f64, tensors in declaration order, row-major
//! ```
//!
//! Nothing may follow the last value.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Checkpoint, Metadata, NetworkSpec};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"CHPRCKPT";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    meta: Metadata,
}

pub fn to_bytes(model: &Checkpoint) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        spec: model.spec.clone(),
        meta: model.meta.clone(),
    })
    .expect("spec serializes");
    let count = model.num_params();
    let mut out = Vec::with_capacity(28 + header.len() + 8 * count);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(count as u64).to_le_bytes());
    for t in &model.params {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                msg: format!("truncated {what}: need {n} bytes, {} left", self.buf.len() - self.pos),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Format { offset: 0, msg: "bad magic".into() });
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format {
            offset: 8,
            msg: format!("unsupported version {version}"),
        });
    }
    let hlen = r.u64("header length")? as usize;
    let hstart = r.pos;
    let header: Header = serde_json::from_slice(r.take(hlen, "header")?).map_err(|e| Error::Format {
        offset: hstart as u64,
        msg: format!("header: {e}"),
    })?;
    header.spec.validate().map_err(|e| Error::Format {
        offset: hstart as u64,
        msg: format!("header spec: {e}"),
    })?;
    let count_at = r.pos;
    let count = r.u64("value count")? as usize;
    let shapes = header.spec.param_shapes();
    let expected: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if count != expected {
        return Err(Error::Format {
            offset: count_at as u64,
            msg: format!("value count {count}, spec needs {expected}"),
        });
    }
    let mut params = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let n: usize = shape.iter().product();
        let raw = r.take(8 * n, "parameters")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push(Tensor::new(shape, data)?);
    }
    if r.pos != buf.len() {
        return Err(Error::Format {
            offset: r.pos as u64,
            msg: format!("{} trailing bytes", buf.len() - r.pos),
        });
    }
    Checkpoint::new(header.spec, params, header.meta)
}

pub fn save(model: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf)
}

/// Loads a checkpoint that must have been produced for `spec`.
pub fn load_for(path: &Path, spec: &NetworkSpec) -> Result<Checkpoint> {
    let model = load(path)?;
    if &model.spec != spec {
        return Err(Error::SpecMismatch(format!(
            "{} was saved for a different network",
            path.display()
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build;

    #[test]
    fn round_trip_is_bitwise() {
        let m = build(&NetworkSpec::mlp(5, 7, 3), 11).unwrap();
        let back = from_bytes(&to_bytes(&m)).unwrap();
        assert_eq!(back.spec, m.spec);
        assert_eq!(back.meta, m.meta);
        for (a, b) in back.params.iter().zip(&m.params) {
            let ab: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = to_bytes(&build(&NetworkSpec::mlp(3, 2, 2), 1).unwrap());
        let cut = &bytes[..bytes.len() - 3];
        match from_bytes(cut) {
            Err(Error::Format { offset, .. }) => assert!(offset > 20),
            other => panic!("expected format error, got {other:?}"),
        }
        assert!(matches!(from_bytes(&bytes[..4]), Err(Error::Format { offset: 0, .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(from_bytes(&extra), Err(Error::Format { .. })));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = to_bytes(&build(&NetworkSpec::mlp(3, 2, 2), 1).unwrap());
        bytes[9] = 7;
        assert!(matches!(from_bytes(&bytes), Err(Error::Format { offset: 8, .. })));
        bytes[0] = b'X';
        assert!(matches!(from_bytes(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn load_for_rejects_other_spec() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&build(&NetworkSpec::mlp(3, 4, 2), 1).unwrap(), &path).unwrap();
        assert!(load_for(&path, &NetworkSpec::mlp(3, 4, 2)).is_ok());
        assert!(matches!(
            load_for(&path, &NetworkSpec::mlp(3, 5, 2)),
            Err(Error::SpecMismatch(_))
        ));
    }
}
