//! Versioned binary model files. The byte layout is documented in
//! `docs/FORMAT.md`; all integers and floats are little-endian.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data::{EncodedExample, FieldSchema};
use crate::exec::Exec;
use crate::interaction::pair_order;
use crate::model::{Model, ModelError, ModelKind, ModelParams, ModelSpec};

pub const MAGIC: &[u8; 8] = b"FNFMMODL";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("not a model file (bad magic)")]
    Magic,
    #[error("unsupported format version {found} (this build reads {supported})")]
    Version { found: u32, supported: u32 },
    #[error("checksum mismatch: file is truncated or corrupted")]
    Checksum,
    #[error("block {block}: expected {expected}, found {found}")]
    Shape { block: String, expected: String, found: String },
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("{path} is locked by another writer")]
    Locked { path: String },
    #[error("invalid model: {0}")]
    Invalid(#[from] ModelError),
}

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> StoreError + '_ {
    move |e| StoreError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Blocks as persisted: trainable parameters in canonical order followed by
/// BN running statistics and hyperparameters.
fn stored_blocks(model: &Model) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    let mut out: Vec<_> = model
        .blocks()
        .into_iter()
        .map(|b| (b.name, b.shape, b.values.to_vec()))
        .collect();
    if let Some(bn) = &model.params.bn {
        let w = bn.width();
        out.push(("bn.running_mean".into(), vec![w], bn.running_mean.clone()));
        out.push(("bn.running_var".into(), vec![w], bn.running_var.clone()));
        out.push(("bn.hyper".into(), vec![2], vec![bn.momentum, bn.epsilon]));
    }
    out
}

fn check_consistent(model: &Model) -> Result<(), StoreError> {
    Model::from_parts(model.spec().clone(), model.schema().clone(), model.params.clone())?;
    if let Some(bn) = &model.params.bn {
        let w = bn.width();
        if bn.running_mean.len() != w || bn.running_var.len() != w {
            return Err(StoreError::Shape {
                block: "bn.running_*".into(),
                expected: format!("{w} values"),
                found: format!("{} and {}", bn.running_mean.len(), bn.running_var.len()),
            });
        }
    }
    Ok(())
}

fn put_block(buf: &mut Vec<u8>, bytes: &[u8]) {
    buf.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(bytes);
}

pub fn encode(model: &Model) -> Result<Vec<u8>, StoreError> {
    check_consistent(model)?;
    let json = |e: serde_json::Error| StoreError::Format(e.to_string());
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    put_block(&mut buf, &serde_json::to_vec(model.schema()).map_err(json)?);
    put_block(&mut buf, &serde_json::to_vec(model.spec()).map_err(json)?);
    let pairs = pair_order(model.schema().num_fields());
    buf.extend_from_slice(&(pairs.len() as u32).to_le_bytes());
    for (i, j) in pairs {
        buf.extend_from_slice(&(i as u32).to_le_bytes());
        buf.extend_from_slice(&(j as u32).to_le_bytes());
    }
    let blocks = stored_blocks(model);
    buf.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for (name, shape, values) in &blocks {
        put_block(&mut buf, name.as_bytes());
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

pub fn decode(bytes: &[u8]) -> Result<FrozenModel, StoreError> {
    let head = &bytes[..bytes.len().min(8)];
    if head != &MAGIC[..head.len()] {
        return Err(StoreError::Magic);
    }
    if bytes.len() < 16 {
        return Err(StoreError::Checksum);
    }
    let found = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if found != VERSION {
        return Err(StoreError::Version {
            found,
            supported: VERSION,
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(StoreError::Checksum);
    }

    let mut r = Reader { buf: body, pos: 12 };
    let json = |e: serde_json::Error| StoreError::Format(e.to_string());
    let schema: FieldSchema = serde_json::from_slice(r.block()?).map_err(json)?;
    schema.validate().map_err(|e| StoreError::Format(e.to_string()))?;
    let spec: ModelSpec = serde_json::from_slice(r.block()?).map_err(json)?;
    let pairs = (0..r.u32()?)
        .map(|_| Ok((r.u32()? as usize, r.u32()? as usize)))
        .collect::<Result<Vec<_>, StoreError>>()?;
    if pairs != pair_order(schema.num_fields()) {
        return Err(StoreError::Format("pair order does not match the schema".into()));
    }

    let mut model = Model::zeros(spec, schema)?;
    let expected = stored_blocks(&model);
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(StoreError::Shape {
            block: "*".into(),
            expected: format!("{} blocks", expected.len()),
            found: format!("{count} blocks"),
        });
    }
    let mut loaded = Vec::with_capacity(count);
    for (name, shape, _) in &expected {
        let tag = std::str::from_utf8(r.block()?).map_err(|e| StoreError::Format(e.to_string()))?;
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if tag != name || &dims != shape {
            return Err(StoreError::Shape {
                block: name.clone(),
                expected: format!("{name} {shape:?}"),
                found: format!("{tag} {dims:?}"),
            });
        }
        let len: usize = dims.iter().product();
        let payload = r.take(len * 8)?;
        loaded.push(payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect::<Vec<f64>>());
    }
    if r.pos != body.len() {
        return Err(StoreError::Format("trailing bytes after the last block".into()));
    }

    let trainable = model.blocks().len();
    let mut rest = loaded.split_off(trainable);
    for (dst, src) in model.blocks_mut().into_iter().zip(&loaded) {
        dst.copy_from_slice(src);
    }
    if let Some(bn) = model.params.bn.as_mut() {
        let hyper = rest.pop().expect("bn.hyper block");
        bn.running_var = rest.pop().expect("bn.running_var block");
        bn.running_mean = rest.pop().expect("bn.running_mean block");
        (bn.momentum, bn.epsilon) = (hyper[0], hyper[1]);
    }
    Ok(FrozenModel { model })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    // The checksum has already passed, so running off the end means the
    // writer produced an inconsistent file.
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| StoreError::Format("block runs past the end of the file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, StoreError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn block(&mut self) -> Result<&'a [u8], StoreError> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}

/// Exclusive writer lock: `<path>.lock`, created with `create_new` and removed on drop.
struct PathLock {
    path: PathBuf,
    _file: File,
}

impl PathLock {
    fn acquire(target: &Path) -> Result<Self, StoreError> {
        let mut name = target.as_os_str().to_owned();
        name.push(".lock");
        let path = PathBuf::from(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(file) => Ok(Self { path, _file: file }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(StoreError::Locked {
                path: target.display().to_string(),
            }),
            Err(e) => Err(io_error(&path)(e)),
        }
    }
}

impl Drop for PathLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Writes `model` to `path` through a temporary file in the same directory
/// and an atomic rename.
pub fn save(model: &Model, path: &Path) -> Result<(), StoreError> {
    let bytes = encode(model)?;
    let _lock = PathLock::acquire(path)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_error(path))?;
    tmp.write_all(&bytes).map_err(io_error(path))?;
    tmp.as_file().sync_all().map_err(io_error(path))?;
    tmp.persist(path).map_err(|e| io_error(path)(e.error))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<FrozenModel, StoreError> {
    let bytes = fs::read(path).map_err(io_error(path))?;
    decode(&bytes)
}

/// A loaded model for scoring only. BN uses the persisted running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenModel {
    model: Model,
}

impl FrozenModel {
    pub fn new(model: Model) -> Self {
        Self { model }
    }

    pub fn spec(&self) -> &ModelSpec {
        self.model.spec()
    }

    pub fn schema(&self) -> &FieldSchema {
        self.model.schema()
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    pub fn params(&self) -> &ModelParams {
        &self.model.params
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// A trainable copy.
    pub fn to_model(&self) -> Model {
        self.model.clone()
    }

    /// Click probabilities, one per example.
    pub fn predict(&self, examples: &[EncodedExample], exec: Exec) -> Result<Vec<f64>, StoreError> {
        for ex in examples {
            ex.conforms_to(self.schema()).map_err(ModelError::from)?;
        }
        Ok(self.model.predict_all(examples, 4096, exec)?)
    }
}
