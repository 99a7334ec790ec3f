//! Text and binary instance formats, shuffling, the prefetch pipeline and model files.

mod buffer;
mod model_file;
mod prefetch;
mod shuffle;
mod text;

pub use buffer::{
    make_buffer, read_buffer, BufferHeader, BufferReader, BUFFER_MAGIC, BUFFER_VERSION,
};
pub use model_file::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use prefetch::{prefetch, Prefetcher, DEFAULT_QUEUE_CAPACITY};
pub use shuffle::{shuffle_blocks, shuffle_file};
pub use text::{format_instance, parse_line, read_text_instances, TextReader};

use crate::error::Result;
use crate::sparse::Instance;

/// A stream of instances lent out one at a time.
///
/// Readers reuse their instance storage, so each instance is only valid until
/// the next call.
pub trait InstanceSource {
    fn next_instance(&mut self) -> Option<Result<&Instance>>;

    /// Writes the next instance into `dst`, reusing its storage.
    fn next_into(&mut self, dst: &mut Instance) -> Option<Result<()>> {
        Some(self.next_instance()?.map(|inst| dst.clone_from(inst)))
    }
}

impl<S: InstanceSource + ?Sized> InstanceSource for &mut S {
    fn next_instance(&mut self) -> Option<Result<&Instance>> {
        (**self).next_instance()
    }

    fn next_into(&mut self, dst: &mut Instance) -> Option<Result<()>> {
        (**self).next_into(dst)
    }
}

impl<S: InstanceSource + ?Sized> InstanceSource for Box<S> {
    fn next_instance(&mut self) -> Option<Result<&Instance>> {
        (**self).next_instance()
    }

    fn next_into(&mut self, dst: &mut Instance) -> Option<Result<()>> {
        (**self).next_into(dst)
    }
}

/// In-memory instances.
pub struct SliceSource<'a> {
    data: &'a [Instance],
    pos: usize,
}

impl<'a> SliceSource<'a> {
    pub fn new(data: &'a [Instance]) -> Self {
        SliceSource { data, pos: 0 }
    }
}

impl InstanceSource for SliceSource<'_> {
    fn next_instance(&mut self) -> Option<Result<&Instance>> {
        let inst = self.data.get(self.pos)?;
        self.pos += 1;
        Some(Ok(inst))
    }
}

/// Adapts an iterator of owned instances.
pub struct IterSource<I> {
    iter: I,
    current: Instance,
}

impl<I> IterSource<I> {
    pub fn new(iter: I) -> Self {
        IterSource {
            iter,
            current: Instance::default(),
        }
    }
}

impl<I: Iterator<Item = Result<Instance>>> InstanceSource for IterSource<I> {
    fn next_instance(&mut self) -> Option<Result<&Instance>> {
        match self.iter.next()? {
            Ok(inst) => {
                self.current = inst;
                Some(Ok(&self.current))
            }
            Err(e) => Some(Err(e)),
        }
    }
}

/// Drains a source into owned instances.
pub fn collect_instances<S: InstanceSource + ?Sized>(source: &mut S) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    while let Some(next) = source.next_instance() {
        out.push(next?.clone());
    }
    Ok(out)
}
