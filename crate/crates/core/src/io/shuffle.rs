//! Seeded line shuffling.
//!
//! The permutation is a Fisher–Yates shuffle driven by `ChaCha8Rng::seed_from_u64(seed)`
//! (rand_chacha), drawing `j` uniformly from `0..=i` for `i` from `n - 1` down to 1.
//! Only line offsets are held in memory; line bytes are copied from the input
//! file as they are written.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::text::parse_line;
use crate::trainer::FeedbackRange;

#[derive(Debug, Clone, Copy)]
struct Span {
    offset: u64,
    len: usize,
}

struct Lines {
    spans: Vec<Span>,
    final_newline: bool,
}

fn index_lines(path: &Path, mut keep: impl FnMut(usize, &[u8]) -> Result<bool>) -> Result<Lines> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut spans = Vec::new();
    let mut buf = Vec::new();
    let mut offset = 0u64;
    let mut final_newline = true;
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let has_newline = buf.last() == Some(&b'\n');
        final_newline = has_newline;
        let len = n - usize::from(has_newline);
        if keep(line_no, &buf[..len])? {
            spans.push(Span { offset, len });
        }
        offset += n as u64;
    }
    Ok(Lines {
        spans,
        final_newline,
    })
}

fn fisher_yates<T>(items: &mut [T], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

fn write_units(
    input: &Path,
    output: &Path,
    spans: &[Span],
    units: &[Range<usize>],
    final_newline: bool,
) -> Result<()> {
    let mut src = File::open(input)?;
    let mut w = BufWriter::new(File::create(output)?);
    let total: usize = units.iter().map(|u| u.len()).sum();
    let mut written = 0;
    let mut buf = Vec::new();
    for unit in units {
        for span in &spans[unit.clone()] {
            buf.resize(span.len, 0);
            src.seek(SeekFrom::Start(span.offset))?;
            src.read_exact(&mut buf)?;
            w.write_all(&buf)?;
            written += 1;
            if written < total || final_newline {
                w.write_all(b"\n")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes a seeded permutation of the lines of `input` to `output`. Line bytes
/// are preserved; a missing final newline stays missing. Returns the line count.
pub fn shuffle_file(input: impl AsRef<Path>, output: impl AsRef<Path>, seed: u64) -> Result<usize> {
    let input = input.as_ref();
    let lines = index_lines(input, |_, _| Ok(true))?;
    let mut units: Vec<Range<usize>> = (0..lines.spans.len()).map(|i| i..i + 1).collect();
    fisher_yates(&mut units, seed);
    write_units(
        input,
        output.as_ref(),
        &lines.spans,
        &units,
        lines.final_newline,
    )?;
    Ok(lines.spans.len())
}

/// Shuffles user blocks instead of lines: maximal runs of consecutive instances
/// with identical feedback entries (user features inside `range`) are permuted
/// as units, keeping the order inside each run. Blank and comment lines are
/// dropped. Returns the number of blocks.
pub fn shuffle_blocks(
    input: impl AsRef<Path>,
    output: impl AsRef<Path>,
    seed: u64,
    range: FeedbackRange,
) -> Result<usize> {
    let input = input.as_ref();
    let mut keys: Vec<Vec<(u32, f64)>> = Vec::new();
    let lines = index_lines(input, |line_no, bytes| {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| Error::Feature(format!("line {line_no}: not valid UTF-8")))?;
        let t = text.trim_start();
        if t.is_empty() || t.starts_with('#') {
            return Ok(false);
        }
        let inst = parse_line(text).map_err(|source| Error::Parse {
            line: line_no,
            source,
        })?;
        keys.push(inst.user.range(range.start, range.end).to_vec());
        Ok(true)
    })?;

    let mut units = Vec::new();
    let mut start = 0;
    for i in 1..=keys.len() {
        let boundary = i == keys.len() || range.is_empty() || keys[i] != keys[start];
        if boundary {
            units.push(start..i);
            start = i;
        }
    }
    drop(keys);
    fisher_yates(&mut units, seed);
    write_units(input, output.as_ref(), &lines.spans, &units, true)?;
    Ok(units.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(content: &str, seed: u64) -> String {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        std::fs::write(&a, content).unwrap();
        shuffle_file(&a, &b, seed).unwrap();
        std::fs::read_to_string(&b).unwrap()
    }

    #[test]
    fn single_line_unchanged() {
        assert_eq!(run("4 0 1 1 0:1 1:1\n", 7), "4 0 1 1 0:1 1:1\n");
        assert_eq!(run("4 0 1 1 0:1 1:1", 7), "4 0 1 1 0:1 1:1");
        assert_eq!(run("", 7), "");
    }

    #[test]
    fn permutation_and_determinism() {
        let content: String = (0..200).map(|i| format!("{i} 0 0 0\n")).collect();
        let a = run(&content, 42);
        assert_eq!(a, run(&content, 42));
        assert_ne!(a, content);
        assert_ne!(a, run(&content, 43));
        let mut got: Vec<&str> = a.lines().collect();
        let mut want: Vec<&str> = content.lines().collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn missing_final_newline_preserved() {
        let out = run("a\nb\nc", 1);
        assert_eq!(out.matches('\n').count(), 2);
        assert!(!out.ends_with('\n'));
    }

    #[test]
    fn blocks_keep_internal_order() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        let mut content = String::new();
        for u in 0..30u32 {
            for n in 0..4 {
                // label encodes (user, position); feedback index 100 + u
                content.push_str(&format!("{} 0 2 0 {u}:1 {}:0.5\n", u * 10 + n, 100 + u));
            }
        }
        std::fs::write(&a, &content).unwrap();
        let blocks = shuffle_blocks(&a, &b, 3, FeedbackRange::new(100, 200)).unwrap();
        assert_eq!(blocks, 30);
        let out = std::fs::read_to_string(&b).unwrap();
        let labels: Vec<u32> = out
            .lines()
            .map(|l| l.split(' ').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(labels.len(), 120);
        for chunk in labels.chunks(4) {
            let u = chunk[0] / 10;
            assert_eq!(chunk, &[u * 10, u * 10 + 1, u * 10 + 2, u * 10 + 3]);
        }
        let users: Vec<u32> = labels.chunks(4).map(|c| c[0] / 10).collect();
        assert_ne!(users, (0..30).collect::<Vec<_>>());
    }
}
