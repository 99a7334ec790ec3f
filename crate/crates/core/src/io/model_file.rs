//! Model file format.
//!
//! ```text
//! b"FMFM" | version u32 | num_global u32 | num_user u32 | num_item u32 | num_factor u32
//! | loss u8 | mu f64 | bias_global | bias_user | bias_item | factor_user | factor_item
//! ```
//!
//! Parameter blocks are little-endian `f64`, factor matrices row-major.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::model::{Model, ModelDims};

pub const MODEL_MAGIC: [u8; 4] = *b"FMFM";
pub const MODEL_VERSION: u32 = 1;

pub fn write_model<W: Write>(w: &mut W, model: &Model, loss: LossKind) -> Result<()> {
    let d = model.dims;
    w.write_all(&MODEL_MAGIC)?;
    w.write_u32::<LE>(MODEL_VERSION)?;
    for n in [d.num_global, d.num_user, d.num_item, d.num_factor] {
        let n = u32::try_from(n).map_err(|_| Error::Config(format!("dimension {n} too large")))?;
        w.write_u32::<LE>(n)?;
    }
    w.write_u8(loss.code())?;
    w.write_f64::<LE>(model.mu)?;
    for block in [
        &model.bias_global,
        &model.bias_user,
        &model.bias_item,
        &model.factor_user,
        &model.factor_item,
    ] {
        for &x in block.iter() {
            w.write_f64::<LE>(x)?;
        }
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<(Model, LossKind)> {
    let corrupt = |e: io::Error| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::CorruptModel("truncated".into())
        } else {
            Error::Io(e)
        }
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(corrupt)?;
    if magic != MODEL_MAGIC {
        return Err(Error::CorruptModel(format!("bad magic {magic:?}")));
    }
    let version = r.read_u32::<LE>().map_err(corrupt)?;
    if version != MODEL_VERSION {
        return Err(Error::CorruptModel(format!(
            "unsupported version {version} (expected {MODEL_VERSION})"
        )));
    }
    let mut n = [0usize; 4];
    for x in n.iter_mut() {
        *x = r.read_u32::<LE>().map_err(corrupt)? as usize;
    }
    let code = r.read_u8().map_err(corrupt)?;
    let loss = LossKind::from_code(code)
        .ok_or_else(|| Error::CorruptModel(format!("unknown loss code {code}")))?;
    let dims = ModelDims::new(n[0], n[1], n[2], n[3]);
    let mut model = Model::zeros(dims);
    model.mu = r.read_f64::<LE>().map_err(corrupt)?;
    for block in [
        &mut model.bias_global,
        &mut model.bias_user,
        &mut model.bias_item,
        &mut model.factor_user,
        &mut model.factor_item,
    ] {
        r.read_f64_into::<LE>(block).map_err(corrupt)?;
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::CorruptModel("trailing bytes".into()));
    }
    Ok((model, loss))
}

pub fn save_model(model: &Model, loss: LossKind, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(&mut w, model, loss)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(Model, LossKind)> {
    read_model(&mut BufReader::new(File::open(path)?))
}
