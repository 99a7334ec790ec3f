//! Binary instance buffer.
//!
//! Layout, all little-endian:
//!
//! ```text
//! header: b"FMFB" | version u32 | count u64 | num_global u32 | num_user u32 | num_item u32 | label_mean f64
//! record: label f32 | ng u32 | nu u32 | ni u32 | (index u32, value f32) × (ng + nu + ni)
//! ```
//!
//! Feature pairs are stored global, user, item. Trailing bytes after `count`
//! records are rejected.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, FeatureGroup, Result};
use crate::io::text::TextReader;
use crate::io::InstanceSource;
use crate::model::ModelDims;
use crate::sparse::Instance;

pub const BUFFER_MAGIC: [u8; 4] = *b"FMFB";
pub const BUFFER_VERSION: u32 = 1;
const IO_CAPACITY: usize = 1 << 20;
const EAGER_RECORD_BYTES: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferHeader {
    pub count: u64,
    /// Feature dimensions; `num_factor` is always zero.
    pub dims: ModelDims,
    pub label_mean: f64,
}

impl BufferHeader {
    fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&BUFFER_MAGIC)?;
        w.write_u32::<LE>(BUFFER_VERSION)?;
        w.write_u64::<LE>(self.count)?;
        for d in [self.dims.num_global, self.dims.num_user, self.dims.num_item] {
            let d = u32::try_from(d).map_err(|_| {
                Error::Config(format!("dimension {d} exceeds the 32-bit buffer format"))
            })?;
            w.write_u32::<LE>(d)?;
        }
        w.write_f64::<LE>(self.label_mean)?;
        Ok(())
    }

    fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let corrupt = |e: io::Error| Error::CorruptBuffer(format!("header: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(corrupt)?;
        if magic != BUFFER_MAGIC {
            return Err(Error::CorruptBuffer(format!("bad magic {magic:?}")));
        }
        let version = r.read_u32::<LE>().map_err(corrupt)?;
        if version != BUFFER_VERSION {
            return Err(Error::CorruptBuffer(format!(
                "unsupported version {version} (expected {BUFFER_VERSION})"
            )));
        }
        let count = r.read_u64::<LE>().map_err(corrupt)?;
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            *d = r.read_u32::<LE>().map_err(corrupt)? as usize;
        }
        let label_mean = r.read_f64::<LE>().map_err(corrupt)?;
        Ok(BufferHeader {
            count,
            dims: ModelDims::new(dims[0], dims[1], dims[2], 0),
            label_mean,
        })
    }
}

fn to_f32(x: f64, line: usize, what: &str) -> Result<f32> {
    let v = x as f32;
    if !v.is_finite() {
        return Err(Error::CorruptBuffer(format!(
            "line {line}: {what} {x} overflows 32-bit float"
        )));
    }
    Ok(v)
}

fn write_instance<W: Write>(w: &mut W, inst: &Instance, line: usize) -> Result<()> {
    w.write_f32::<LE>(to_f32(inst.label, line, "label")?)?;
    for v in [&inst.global, &inst.user, &inst.item] {
        w.write_u32::<LE>(v.len() as u32)?;
    }
    for v in [&inst.global, &inst.user, &inst.item] {
        for (i, x) in v.iter() {
            w.write_u32::<LE>(i)?;
            w.write_f32::<LE>(to_f32(x, line, "feature value")?)?;
        }
    }
    Ok(())
}

/// Converts a text instance file into a binary buffer.
///
/// With `dims` given, any index at or beyond its group's dimension is an error;
/// otherwise each dimension is inferred as the largest index plus one. The
/// header's label mean is the arithmetic mean of all labels (0 when empty).
pub fn make_buffer(
    text_path: impl AsRef<Path>,
    buffer_path: impl AsRef<Path>,
    dims: Option<ModelDims>,
) -> Result<BufferHeader> {
    let mut reader = TextReader::open(text_path)?;
    let file = File::create(buffer_path)?;
    let mut w = BufWriter::with_capacity(IO_CAPACITY, file);

    let mut header = BufferHeader {
        count: 0,
        dims: dims.map_or_else(ModelDims::default, |d| ModelDims { num_factor: 0, ..d }),
        label_mean: 0.0,
    };
    header.write_to(&mut w)?;

    let mut label_sum = 0.0;
    let mut seen = [0usize; 3];
    while let Some(next) = reader.next_numbered() {
        let (line, inst) = next?;
        let groups = [
            (FeatureGroup::Global, &inst.global),
            (FeatureGroup::User, &inst.user),
            (FeatureGroup::Item, &inst.item),
        ];
        for (slot, (group, v)) in groups.into_iter().enumerate() {
            if let Some(index) = v.max_index() {
                if let Some(d) = dims {
                    let dim = d.group_size(group);
                    if index as usize >= dim {
                        return Err(Error::IndexOutOfRange {
                            line,
                            group,
                            index,
                            dim,
                        });
                    }
                }
                seen[slot] = seen[slot].max(index as usize + 1);
            }
        }
        write_instance(&mut w, inst, line)?;
        label_sum += inst.label;
        header.count += 1;
    }

    if dims.is_none() {
        header.dims = ModelDims::new(seen[0], seen[1], seen[2], 0);
    }
    if header.count > 0 {
        header.label_mean = label_sum / header.count as f64;
    }
    w.seek(SeekFrom::Start(0))?;
    header.write_to(&mut w)?;
    w.flush()?;
    Ok(header)
}

const PREFIX_BYTES: usize = 16;

#[inline]
fn parse_prefix(prefix: &[u8]) -> (f32, [u32; 3]) {
    let word = |n: usize| u32::from_le_bytes(prefix[4 * n..4 * n + 4].try_into().unwrap());
    (f32::from_bits(word(0)), [word(1), word(2), word(3)])
}

#[inline]
fn pair_bytes(counts: [u32; 3]) -> usize {
    counts.iter().map(|&c| c as usize).sum::<usize>() * 8
}

#[inline]
fn parse_pairs(bytes: &[u8], counts: [u32; 3], dims: ModelDims, inst: &mut Instance) -> Result<()> {
    let groups = [
        (&mut inst.global, dims.num_global, counts[0]),
        (&mut inst.user, dims.num_user, counts[1]),
        (&mut inst.item, dims.num_item, counts[2]),
    ];
    let mut at = 0;
    for (v, dim, n) in groups {
        let entries = v.entries_mut();
        entries.clear();
        // `next` is one past the previous index, so indices must be strictly increasing.
        let mut next = 0u64;
        let mut valid = true;
        for _ in 0..n {
            let pair: &[u8; 8] = bytes[at..at + 8].try_into().unwrap();
            at += 8;
            let index = u32::from_le_bytes([pair[0], pair[1], pair[2], pair[3]]);
            let value = f32::from_le_bytes([pair[4], pair[5], pair[6], pair[7]]);
            valid &= u64::from(index) >= next && (index as usize) < dim && value.is_finite();
            next = u64::from(index) + 1;
            entries.push((index, f64::from(value)));
        }
        if !valid {
            return Err(invalid_group(entries, dim));
        }
    }
    Ok(())
}

#[cold]
fn invalid_group(entries: &[(u32, f64)], dim: usize) -> Error {
    let mut prev: Option<u32> = None;
    for &(index, value) in entries {
        if index as usize >= dim {
            return Error::CorruptBuffer(format!(
                "feature index {index} exceeds header dimension {dim}"
            ));
        }
        if !value.is_finite() {
            return Error::CorruptBuffer(format!("non-finite value at index {index}"));
        }
        if prev.is_some_and(|p| index <= p) {
            return Error::CorruptBuffer(format!(
                "index {index} does not follow {}",
                prev.unwrap()
            ));
        }
        prev = Some(index);
    }
    Error::CorruptBuffer("invalid feature group".into())
}

#[inline]
fn finish(inst: &mut Instance, label: f32, position: u64) -> Result<()> {
    inst.label = f64::from(label);
    if !inst.label.is_finite() {
        return Err(Error::CorruptBuffer(format!(
            "non-finite label at instance {position}"
        )));
    }
    Ok(())
}

/// Sequential reader over a buffer file. Holds one decoded instance at a time.
pub struct BufferReader<R = BufReader<File>> {
    reader: R,
    header: BufferHeader,
    read: u64,
    current: Instance,
    scratch: Vec<u8>,
    done: bool,
}

impl BufferReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        BufferReader::new(BufReader::with_capacity(IO_CAPACITY, file))
    }
}

impl<R: BufRead> BufferReader<R> {
    pub fn new(mut reader: R) -> Result<Self> {
        let header = BufferHeader::read_from(&mut reader)?;
        Ok(BufferReader {
            reader,
            header,
            read: 0,
            current: Instance::default(),
            scratch: Vec::new(),
            done: false,
        })
    }

    pub fn header(&self) -> &BufferHeader {
        &self.header
    }

    fn truncated(&self, e: io::Error) -> Error {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::CorruptBuffer(format!(
                "truncated after {} of {} instances",
                self.read, self.header.count
            ))
        } else {
            Error::Io(e)
        }
    }

    fn decode_into(&mut self, inst: &mut Instance) -> Result<()> {
        let dims = self.header.dims;
        // Fast path: the whole record is already in the read buffer.
        let available = self.reader.fill_buf()?;
        if available.len() >= PREFIX_BYTES {
            let (label, counts) = parse_prefix(&available[..PREFIX_BYTES]);
            let len = PREFIX_BYTES + pair_bytes(counts);
            if available.len() >= len {
                parse_pairs(&available[PREFIX_BYTES..len], counts, dims, inst)?;
                self.reader.consume(len);
                return finish(inst, label, self.read);
            }
        }

        let mut prefix = [0u8; PREFIX_BYTES];
        self.reader.read_exact(&mut prefix)?;
        let (label, counts) = parse_prefix(&prefix);
        let bytes = pair_bytes(counts);
        if bytes <= EAGER_RECORD_BYTES {
            self.scratch.resize(bytes, 0);
            self.reader.read_exact(&mut self.scratch)?;
        } else {
            // Grow only as data arrives so a corrupt count cannot force a huge allocation.
            self.scratch.clear();
            (&mut self.reader)
                .take(bytes as u64)
                .read_to_end(&mut self.scratch)?;
            if self.scratch.len() != bytes {
                return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into());
            }
        }
        parse_pairs(&self.scratch, counts, dims, inst)?;
        finish(inst, label, self.read)
    }

    fn advance(&mut self, inst: &mut Instance) -> Option<Result<()>> {
        if self.done {
            return None;
        }
        if self.read == self.header.count {
            self.done = true;
            let mut probe = [0u8; 1];
            return match self.reader.read(&mut probe) {
                Ok(0) => None,
                Ok(_) => Some(Err(Error::CorruptBuffer(format!(
                    "trailing bytes after {} instances",
                    self.header.count
                )))),
                Err(e) => Some(Err(e.into())),
            };
        }
        match self.decode_into(inst) {
            Ok(()) => {
                self.read += 1;
                Some(Ok(()))
            }
            Err(e) => {
                self.done = true;
                Some(Err(match e {
                    Error::Io(io) => self.truncated(io),
                    other => other,
                }))
            }
        }
    }
}

impl<R: BufRead> InstanceSource for BufferReader<R> {
    fn next_instance(&mut self) -> Option<Result<&Instance>> {
        let mut current = std::mem::take(&mut self.current);
        let status = self.advance(&mut current);
        self.current = current;
        Some(status?.map(|()| &self.current))
    }

    fn next_into(&mut self, dst: &mut Instance) -> Option<Result<()>> {
        self.advance(dst)
    }
}

impl<R: BufRead> Iterator for BufferReader<R> {
    type Item = Result<Instance>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_instance().map(|r| r.cloned())
    }
}

/// Opens a buffer for a linear scan.
pub fn read_buffer(path: impl AsRef<Path>) -> Result<BufferReader> {
    BufferReader::open(path)
}
