//! Text instance format.
//!
//! One instance per line:
//!
//! ```text
//! label ng nu ni  g:v ... (ng tokens)  u:v ... (nu tokens)  i:v ... (ni tokens)
//! ```
//!
//! Blank lines and lines starting with `#` are skipped. Feature tokens within a
//! group may appear in any order; duplicate indices are rejected.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, FeatureGroup, ParseError, Result};
use crate::io::InstanceSource;
use crate::sparse::{Instance, SparseVector};

fn parse_number<T: std::str::FromStr>(token: &str, what: &'static str) -> Result<T, ParseError> {
    token.parse().map_err(|_| ParseError::BadNumber {
        what,
        token: token.to_string(),
    })
}

fn parse_finite(token: &str, what: &'static str) -> Result<f64, ParseError> {
    let v: f64 = parse_number(token, what)?;
    if !v.is_finite() {
        return Err(ParseError::NonFinite {
            what,
            token: token.to_string(),
        });
    }
    Ok(v)
}

fn parse_group<'a>(
    tokens: &mut impl Iterator<Item = &'a str>,
    count: usize,
    group: FeatureGroup,
) -> Result<SparseVector, ParseError> {
    let mut entries = Vec::with_capacity(count);
    for token in tokens.take(count) {
        let (idx, val) = token
            .split_once(':')
            .ok_or_else(|| ParseError::BadToken(token.to_string()))?;
        let idx: u32 = parse_number(idx, "feature index")?;
        let val = parse_finite(val, "feature value")?;
        entries.push((idx, val));
    }
    entries.sort_by_key(|&(i, _)| i);
    if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(ParseError::DuplicateIndex {
            group,
            index: w[0].0,
        });
    }
    // Sorted, unique and finite, so construction cannot fail.
    Ok(SparseVector::from_sorted(entries).expect("validated entries"))
}

/// Parses one non-comment line.
pub fn parse_line(line: &str) -> Result<Instance, ParseError> {
    let mut tokens = line.split_ascii_whitespace();
    let label = tokens.next().ok_or(ParseError::Empty)?;
    let label = parse_finite(label, "label")?;
    let mut counts = [0usize; 3];
    for (slot, name) in counts
        .iter_mut()
        .zip(["global count", "user count", "item count"])
    {
        let tok = tokens.next().ok_or(ParseError::MissingField(name))?;
        *slot = parse_number(tok, name)?;
    }
    let expected = counts.iter().sum::<usize>();
    let rest: Vec<&str> = tokens.collect();
    if rest.len() != expected {
        return Err(ParseError::CountMismatch {
            expected,
            found: rest.len(),
        });
    }
    let mut it = rest.into_iter();
    let global = parse_group(&mut it, counts[0], FeatureGroup::Global)?;
    let user = parse_group(&mut it, counts[1], FeatureGroup::User)?;
    let item = parse_group(&mut it, counts[2], FeatureGroup::Item)?;
    Ok(Instance::new(label, global, user, item))
}

/// Renders an instance in the text format (no trailing newline).
pub fn format_instance(inst: &Instance) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{} {} {} {}",
        inst.label,
        inst.global.len(),
        inst.user.len(),
        inst.item.len()
    );
    for v in [&inst.global, &inst.user, &inst.item] {
        for (i, x) in v.iter() {
            let _ = write!(s, " {i}:{x}");
        }
    }
    s
}

fn is_skipped(line: &str) -> bool {
    let t = line.trim_start();
    t.is_empty() || t.starts_with('#')
}

/// Streams instances from text, tracking 1-based line numbers for errors.
pub struct TextReader<R> {
    reader: R,
    line: String,
    line_no: usize,
    current: Instance,
}

impl TextReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Ok(TextReader::new(BufReader::new(File::open(path)?)))
    }
}

impl<R: BufRead> TextReader<R> {
    pub fn new(reader: R) -> Self {
        TextReader {
            reader,
            line: String::new(),
            line_no: 0,
            current: Instance::default(),
        }
    }

    /// Line number of the most recently returned instance.
    pub fn line_no(&self) -> usize {
        self.line_no
    }
}

impl<R: BufRead> TextReader<R> {
    fn advance(&mut self) -> Option<Result<()>> {
        loop {
            self.line.clear();
            match self.reader.read_line(&mut self.line) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            if is_skipped(&self.line) {
                continue;
            }
            return Some(match parse_line(&self.line) {
                Ok(inst) => {
                    self.current = inst;
                    Ok(())
                }
                Err(source) => Err(Error::Parse {
                    line: self.line_no,
                    source,
                }),
            });
        }
    }

    /// Next instance together with its line number.
    pub fn next_numbered(&mut self) -> Option<Result<(usize, &Instance)>> {
        Some(self.advance()?.map(|()| (self.line_no, &self.current)))
    }
}

impl<R: BufRead> InstanceSource for TextReader<R> {
    fn next_instance(&mut self) -> Option<Result<&Instance>> {
        Some(self.advance()?.map(|()| &self.current))
    }
}

pub fn read_text_instances(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    crate::io::collect_instances(&mut TextReader::open(path)?)
}
