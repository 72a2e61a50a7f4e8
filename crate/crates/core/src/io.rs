//! File formats: TexMex `.fvecs`/`.bvecs`/`.ivecs` vector files, model files
//! and code files. Everything is little-endian.
//!
//! Model file:
//!
//! ```text
//! "GRVQ" | u32 version | u32 d | u32 M | u32 K | u8 eps tag | u8 variance_order | u64 seed
//! eps payload: Eliminated -> f64 eps0, f64 lambda
//!              Quantized  -> u8 bits, 2^bits x f64 levels
//! M*K*d x f32 codewords, codebook-major
//! ```
//!
//! Code file:
//!
//! ```text
//! "GRVC" | u32 version | u64 N | u32 M | u32 K | u8 eps tag | u8 eps bits
//! N*M codes, u8 when K <= 256 else u16
//! eps block: Stored    -> N x f32
//!            Quantized -> N level indices, u8 when bits <= 8 else u16
//! ```
//!
//! Eps tags are 0 = none, 1 = stored, 2 = quantized, 3 = eliminated.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::model::{CodeMatrix, Codebook, EpsMode, EpsQuantizer, QuantModel, VectorSet};

pub const MODEL_MAGIC: &[u8; 4] = b"GRVQ";
pub const CODES_MAGIC: &[u8; 4] = b"GRVC";
pub const FORMAT_VERSION: u32 = 1;
/// Size of the fixed code-file header in bytes.
pub const CODES_HEADER_LEN: u64 = 26;

/// Element type of a TexMex vector file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VecFileKind {
    Fvecs,
    Bvecs,
    Ivecs,
}

impl VecFileKind {
    pub fn element_width(self) -> usize {
        match self {
            VecFileKind::Fvecs | VecFileKind::Ivecs => 4,
            VecFileKind::Bvecs => 1,
        }
    }

    /// Guesses the kind from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "fvecs" => Some(VecFileKind::Fvecs),
            "bvecs" => Some(VecFileKind::Bvecs),
            "ivecs" => Some(VecFileKind::Ivecs),
            _ => None,
        }
    }
}

fn format_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {msg}", path.display()))
}

/// Reads up to `limit` vectors (all when `None`). bvecs values are widened
/// to `0..=255`, ivecs to exact integers.
pub fn read_vecs(path: impl AsRef<Path>, kind: VecFileKind, limit: Option<usize>) -> Result<VectorSet> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    let mut r = BufReader::new(file);
    if file_len == 0 {
        return Ok(VectorSet::zeros(0, 1));
    }
    if file_len < 4 {
        return Err(format_err(path, "truncated header"));
    }
    let dim = r.read_i32::<LE>()?;
    if dim <= 0 {
        return Err(format_err(path, format!("dimension {dim} must be positive")));
    }
    let dim = dim as usize;
    let record = 4 + (dim * kind.element_width()) as u64;
    if file_len % record != 0 {
        return Err(format_err(
            path,
            format!("{file_len} bytes is not a whole number of {record}-byte records"),
        ));
    }
    let total = (file_len / record) as usize;
    let n = limit.map_or(total, |l| l.min(total));

    let mut data = Vec::with_capacity(n * dim);
    let mut buf = vec![0u8; dim * kind.element_width()];
    for i in 0..n {
        if i > 0 {
            let d = r.read_i32::<LE>()?;
            if d as i64 != dim as i64 {
                return Err(format_err(path, format!("record {i} has dimension {d}, expected {dim}")));
            }
        }
        r.read_exact(&mut buf)?;
        match kind {
            VecFileKind::Fvecs => data.extend(
                buf.chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64),
            ),
            VecFileKind::Ivecs => data.extend(
                buf.chunks_exact(4)
                    .map(|b| i32::from_le_bytes(b.try_into().unwrap()) as f64),
            ),
            VecFileKind::Bvecs => data.extend(buf.iter().map(|&b| b as f64)),
        }
    }
    VectorSet::new(dim, data).map_err(|e| format_err(path, e))
}

/// Writes `data` as a TexMex file. Values must be representable in the
/// element type: f32-exact for fvecs, integers in range for bvecs and ivecs.
pub fn write_vecs(path: impl AsRef<Path>, data: &VectorSet, kind: VecFileKind) -> Result<()> {
    let (lo, hi) = match kind {
        VecFileKind::Fvecs => (f64::NEG_INFINITY, f64::INFINITY),
        VecFileKind::Bvecs => (0.0, 255.0),
        VecFileKind::Ivecs => (i32::MIN as f64, i32::MAX as f64),
    };
    if let Some(v) = data.as_slice().iter().find(|&&v| {
        let exact = match kind {
            VecFileKind::Fvecs => v as f32 as f64 == v,
            _ => v.fract() == 0.0,
        };
        !exact || v < lo || v > hi
    }) {
        return Err(Error::Domain(format!("value {v} cannot be stored exactly as {kind:?}")));
    }
    let mut w = BufWriter::new(File::create(path)?);
    for x in data.rows() {
        w.write_i32::<LE>(data.dim() as i32)?;
        for &v in x {
            match kind {
                VecFileKind::Fvecs => w.write_f32::<LE>(v as f32)?,
                VecFileKind::Ivecs => w.write_i32::<LE>(v as i32)?,
                VecFileKind::Bvecs => w.write_u8(v as u8)?,
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn eps_tag(mode: &EpsMode) -> u8 {
    match mode {
        EpsMode::None => 0,
        EpsMode::Stored => 1,
        EpsMode::Quantized(_) => 2,
        EpsMode::Eliminated { .. } => 3,
    }
}

fn read_magic(r: &mut impl Read, magic: &[u8; 4], path: &Path) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(format_err(path, format!("bad magic {m:?}")));
    }
    let version = r.read_u32::<LE>()?;
    if version != FORMAT_VERSION {
        return Err(format_err(
            path,
            format!("format version {version}, this build reads {FORMAT_VERSION}"),
        ));
    }
    Ok(())
}

/// Writes a model. Codewords are stored as f32; trained models already hold
/// f32-exact values so the round trip is lossless.
pub fn write_model(path: impl AsRef<Path>, model: &QuantModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    w.write_u32::<LE>(FORMAT_VERSION)?;
    w.write_u32::<LE>(model.dim() as u32)?;
    w.write_u32::<LE>(model.stages() as u32)?;
    w.write_u32::<LE>(model.codebook_size() as u32)?;
    w.write_u8(eps_tag(&model.eps_mode))?;
    w.write_u8(model.variance_order as u8)?;
    w.write_u64::<LE>(model.seed)?;
    match &model.eps_mode {
        EpsMode::Eliminated { eps0, lambda } => {
            w.write_f64::<LE>(*eps0)?;
            w.write_f64::<LE>(*lambda)?;
        }
        EpsMode::Quantized(q) => {
            w.write_u8(q.bits())?;
            for &l in q.levels() {
                w.write_f64::<LE>(l)?;
            }
        }
        EpsMode::None | EpsMode::Stored => {}
    }
    for cb in model.codebooks() {
        for &v in cb.as_slice() {
            w.write_f32::<LE>(v as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<QuantModel> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    read_magic(&mut r, MODEL_MAGIC, path)?;
    let d = r.read_u32::<LE>()? as usize;
    let m = r.read_u32::<LE>()? as usize;
    let k = r.read_u32::<LE>()? as usize;
    if d == 0 || m == 0 || k == 0 {
        return Err(format_err(path, format!("invalid shape d={d} M={m} K={k}")));
    }
    let tag = r.read_u8()?;
    let variance_order = r.read_u8()? != 0;
    let seed = r.read_u64::<LE>()?;
    let eps_mode = match tag {
        0 => EpsMode::None,
        1 => EpsMode::Stored,
        2 => {
            let bits = r.read_u8()?;
            if !(1..=16).contains(&bits) {
                return Err(format_err(path, format!("ε quantizer with {bits} bits")));
            }
            let levels = (0..1usize << bits)
                .map(|_| r.read_f64::<LE>())
                .collect::<std::io::Result<Vec<_>>>()?;
            EpsMode::Quantized(EpsQuantizer::new(bits, levels)?)
        }
        3 => {
            let eps0 = r.read_f64::<LE>()?;
            let lambda = r.read_f64::<LE>()?;
            EpsMode::Eliminated { eps0, lambda }
        }
        t => return Err(format_err(path, format!("unknown ε tag {t}"))),
    };
    let mut books = Vec::with_capacity(m);
    let mut buf = vec![0u8; k * d * 4];
    for _ in 0..m {
        r.read_exact(&mut buf)?;
        let words = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        books.push(Codebook::new(d, words)?);
    }
    if r.read(&mut [0u8])? != 0 {
        return Err(format_err(path, "trailing bytes after codebooks"));
    }
    let mut model = QuantModel::new(books, eps_mode)?;
    model.variance_order = variance_order;
    model.seed = seed;
    Ok(model)
}

/// Writes codes for `model`. The ε block follows the model's mode; Stored
/// and Quantized modes require `codes.eps`.
pub fn write_codes(path: impl AsRef<Path>, codes: &CodeMatrix, model: &QuantModel) -> Result<()> {
    let k = model.codebook_size();
    if k > 1 << 16 {
        return Err(Error::Domain(format!("K={k} exceeds the 16-bit code limit")));
    }
    if codes.stages() != model.stages() {
        return Err(Error::Shape(format!(
            "codes have {} stages, model has {}",
            codes.stages(),
            model.stages()
        )));
    }
    if let Some(&c) = codes.as_slice().iter().find(|&&c| c as usize >= k) {
        return Err(Error::Shape(format!("code index {c} out of range for K={k}")));
    }
    let eps = match (&model.eps_mode, &codes.eps) {
        (EpsMode::Stored | EpsMode::Quantized(_), None) => {
            return Err(Error::Domain("model mode needs per-code ε but codes carry none".into()))
        }
        (_, eps) => eps.as_deref(),
    };
    let bits = match &model.eps_mode {
        EpsMode::Quantized(q) => q.bits(),
        _ => 0,
    };

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CODES_MAGIC)?;
    w.write_u32::<LE>(FORMAT_VERSION)?;
    w.write_u64::<LE>(codes.len() as u64)?;
    w.write_u32::<LE>(codes.stages() as u32)?;
    w.write_u32::<LE>(k as u32)?;
    w.write_u8(eps_tag(&model.eps_mode))?;
    w.write_u8(bits)?;
    for &c in codes.as_slice() {
        if k <= 256 {
            w.write_u8(c as u8)?;
        } else {
            w.write_u16::<LE>(c as u16)?;
        }
    }
    match (&model.eps_mode, eps) {
        (EpsMode::Stored, Some(eps)) => {
            for &e in eps {
                w.write_f32::<LE>(e as f32)?;
            }
        }
        (EpsMode::Quantized(q), Some(eps)) => {
            for &e in eps {
                let idx = q.quantize(e);
                if bits <= 8 {
                    w.write_u8(idx as u8)?;
                } else {
                    w.write_u16::<LE>(idx)?;
                }
            }
        }
        _ => {}
    }
    w.flush()?;
    Ok(())
}

/// Reads codes written for `model`; the header must agree with the model's
/// shape and ε mode.
pub fn read_codes(path: impl AsRef<Path>, model: &QuantModel) -> Result<CodeMatrix> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    read_magic(&mut r, CODES_MAGIC, path)?;
    let n = r.read_u64::<LE>()? as usize;
    let m = r.read_u32::<LE>()? as usize;
    let k = r.read_u32::<LE>()? as usize;
    let tag = r.read_u8()?;
    let bits = r.read_u8()?;
    if m != model.stages() || k != model.codebook_size() {
        return Err(Error::Shape(format!(
            "{}: codes are M={m} K={k}, model is M={} K={}",
            path.display(),
            model.stages(),
            model.codebook_size()
        )));
    }
    if k > 1 << 16 {
        return Err(format_err(path, format!("K={k} exceeds the 16-bit code limit")));
    }
    if tag != eps_tag(&model.eps_mode) {
        return Err(format_err(
            path,
            format!("ε tag {tag} does not match model tag {}", eps_tag(&model.eps_mode)),
        ));
    }

    let mut raw = Vec::with_capacity(n * m);
    for _ in 0..n * m {
        let c = if k <= 256 {
            r.read_u8()? as u32
        } else {
            r.read_u16::<LE>()? as u32
        };
        if c as usize >= k {
            return Err(format_err(path, format!("code index {c} out of range for K={k}")));
        }
        raw.push(c);
    }
    let eps = match &model.eps_mode {
        EpsMode::Stored => Some(
            (0..n)
                .map(|_| r.read_f32::<LE>().map(|v| v as f64))
                .collect::<std::io::Result<Vec<_>>>()?,
        ),
        EpsMode::Quantized(q) => {
            if bits != q.bits() {
                return Err(format_err(path, format!("{bits}-bit ε, model quantizer has {}", q.bits())));
            }
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let idx = if bits <= 8 {
                    r.read_u8()? as u16
                } else {
                    r.read_u16::<LE>()?
                };
                if idx as usize >= q.levels().len() {
                    return Err(format_err(path, format!("ε level {idx} out of range")));
                }
                out.push(q.dequantize(idx));
            }
            Some(out)
        }
        EpsMode::None | EpsMode::Eliminated { .. } => None,
    };
    if r.read(&mut [0u8])? != 0 {
        return Err(format_err(path, "trailing bytes after codes"));
    }
    CodeMatrix::new(m, raw, eps)
}
