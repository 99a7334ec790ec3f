//! Background prefetching of instances into a bounded in-memory queue.
//!
//! A producer thread pulls from the wrapped source and sends chunks of
//! instances over a bounded channel; the consumer lends them out one at a time
//! and returns emptied chunks for reuse, so the steady state allocates nothing.
//! The queue never holds more than `capacity` instances.

use std::thread::{self, JoinHandle};

use crossbeam_channel::{bounded, Receiver, Sender};

use crate::error::{Error, Result};
use crate::io::InstanceSource;
use crate::sparse::Instance;

pub const DEFAULT_QUEUE_CAPACITY: usize = 4096;
const MAX_CHUNK: usize = 256;

enum Message {
    Chunk(Vec<Instance>, usize),
    Failed(Error),
}

/// Chunk length and number of queue slots for a capacity in instances.
fn layout(capacity: usize) -> (usize, usize) {
    let chunk = (capacity / 16).clamp(1, MAX_CHUNK);
    (chunk, (capacity / chunk).max(1))
}

pub struct Prefetcher {
    filled: Option<Receiver<Message>>,
    recycle: Sender<Vec<Instance>>,
    current: Vec<Instance>,
    len: usize,
    pos: usize,
    chunk: usize,
    failed: bool,
    handle: Option<JoinHandle<()>>,
}

impl Prefetcher {
    /// Starts the producer thread. `capacity` must be at least 1.
    pub fn new<S>(mut source: S, capacity: usize) -> Result<Self>
    where
        S: InstanceSource + Send + 'static,
    {
        if capacity == 0 {
            return Err(Error::Config("queue capacity must be at least 1".into()));
        }
        let (chunk, slots) = layout(capacity);
        let (tx, filled) = bounded::<Message>(slots);
        let (recycle, spare) = bounded::<Vec<Instance>>(slots + 2);

        let handle = thread::Builder::new()
            .name("fmf-prefetch".into())
            .spawn(move || {
                loop {
                    let mut buf = spare
                        .try_recv()
                        .unwrap_or_else(|_| Vec::with_capacity(chunk));
                    let mut n = 0;
                    let mut failure = None;
                    let mut eof = false;
                    while n < chunk {
                        if n == buf.len() {
                            buf.push(Instance::default());
                        }
                        match source.next_into(&mut buf[n]) {
                            None => {
                                eof = true;
                                break;
                            }
                            Some(Ok(())) => n += 1,
                            Some(Err(e)) => {
                                failure = Some(e);
                                break;
                            }
                        }
                    }
                    // A send error means the consumer hung up.
                    if n > 0 && tx.send(Message::Chunk(buf, n)).is_err() {
                        return;
                    }
                    if let Some(e) = failure {
                        let _ = tx.send(Message::Failed(e));
                        return;
                    }
                    if eof {
                        return;
                    }
                }
            })?;

        Ok(Prefetcher {
            filled: Some(filled),
            recycle,
            current: Vec::new(),
            len: 0,
            pos: 0,
            chunk,
            failed: false,
            handle: Some(handle),
        })
    }

    /// Upper bound on the number of instances waiting in the queue.
    pub fn queued(&self) -> usize {
        self.filled.as_ref().map_or(0, |rx| rx.len() * self.chunk)
    }
}

impl InstanceSource for Prefetcher {
    fn next_instance(&mut self) -> Option<Result<&Instance>> {
        if self.pos == self.len {
            if self.failed {
                return None;
            }
            let rx = self.filled.as_ref()?;
            match rx.recv() {
                Ok(Message::Chunk(buf, n)) => {
                    let done = std::mem::replace(&mut self.current, buf);
                    if done.capacity() > 0 {
                        let _ = self.recycle.try_send(done);
                    }
                    self.len = n;
                    self.pos = 0;
                }
                Ok(Message::Failed(e)) => {
                    self.failed = true;
                    return Some(Err(e));
                }
                Err(_) => return None,
            }
        }
        let inst = &self.current[self.pos];
        self.pos += 1;
        Some(Ok(inst))
    }
}

impl Drop for Prefetcher {
    fn drop(&mut self) {
        // Hanging up first unblocks a producer waiting on a full queue.
        drop(self.filled.take());
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Wraps `source` with a producer thread and a queue of `capacity` instances.
pub fn prefetch<S>(source: S, capacity: usize) -> Result<Prefetcher>
where
    S: InstanceSource + Send + 'static,
{
    Prefetcher::new(source, capacity)
}
