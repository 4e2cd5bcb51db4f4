//! Versioned binary cache of an encoded dataset.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "FNFMDSET"
//! version    u32      1
//! schema     u32 length + JSON bytes
//! provenance u32 length + JSON bytes
//! rows       u64
//! per row    u8 label, then per field: u32 feature index, f64 value
//! crc32      u32 over every preceding byte
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{DataError, Dataset, EncodedExample, FieldSchema, Provenance, Slot};

pub const MAGIC: &[u8; 8] = b"FNFMDSET";
pub const VERSION: u32 = 1;

pub fn encode(dataset: &Dataset) -> Result<Vec<u8>, DataError> {
    let f = dataset.schema().num_fields();
    let mut buf = Vec::with_capacity(64 + dataset.len() * (1 + f * 12));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let schema = serde_json::to_vec(dataset.schema()).map_err(|e| DataError::Cache(e.to_string()))?;
    let provenance = serde_json::to_vec(dataset.provenance()).map_err(|e| DataError::Cache(e.to_string()))?;
    for block in [schema, provenance] {
        buf.extend_from_slice(&(block.len() as u32).to_le_bytes());
        buf.extend_from_slice(&block);
    }
    buf.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    for ex in dataset.examples() {
        buf.push(ex.label);
        for slot in &ex.slots {
            let index = u32::try_from(slot.index).map_err(|_| DataError::Cache("feature index exceeds u32".into()))?;
            buf.extend_from_slice(&index.to_le_bytes());
            buf.extend_from_slice(&slot.value.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

pub fn decode(bytes: &[u8]) -> Result<Dataset, DataError> {
    let err = |m: &str| DataError::Cache(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(err("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(DataError::Cache(format!("unsupported version {version}")));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(err("checksum mismatch"));
    }
    let mut r = Reader { buf: body, pos: 12 };
    let schema: FieldSchema = serde_json::from_slice(r.block()?).map_err(|e| DataError::Cache(e.to_string()))?;
    schema.validate()?;
    let provenance: Provenance = serde_json::from_slice(r.block()?).map_err(|e| DataError::Cache(e.to_string()))?;
    let rows = r.u64()? as usize;
    let f = schema.num_fields();
    let mut examples = Vec::with_capacity(rows);
    for _ in 0..rows {
        let label = r.take(1)?[0];
        let mut slots = Vec::with_capacity(f);
        for _ in 0..f {
            let index = r.u32()? as usize;
            let value = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
            slots.push(Slot { index, value });
        }
        examples.push(EncodedExample { label, slots });
    }
    if r.pos != body.len() {
        return Err(err("trailing bytes"));
    }
    Dataset::checked(schema, examples, provenance)
}

pub fn write(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    let bytes = encode(dataset)?;
    let io = |e: std::io::Error| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(&bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Dataset, DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    decode(&bytes)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| DataError::Cache("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn block(&mut self) -> Result<&'a [u8], DataError> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}
