//! Sparse feature vectors and training instances.

use crate::error::{Error, Result};

/// Sorted `(index, value)` pairs with strictly increasing indices and finite values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn new() -> Self {
        SparseVector {
            entries: Vec::new(),
        }
    }

    /// Builds a vector from entries that must already be sorted and unique.
    pub fn from_sorted(entries: Vec<(u32, f64)>) -> Result<Self> {
        let mut v = SparseVector::new();
        v.entries.reserve(entries.len());
        for (index, value) in entries {
            v.push(index, value)?;
        }
        Ok(v)
    }

    /// Sorts the entries by index. Duplicate indices are rejected.
    pub fn from_unsorted(mut entries: Vec<(u32, f64)>) -> Result<Self> {
        entries.sort_by_key(|&(i, _)| i);
        Self::from_sorted(entries)
    }

    /// A single entry `(index, 1.0)`.
    pub fn one_hot(index: u32) -> Self {
        SparseVector {
            entries: vec![(index, 1.0)],
        }
    }

    /// Appends an entry; the index must exceed every index already present.
    pub fn push(&mut self, index: u32, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::InvalidSparse(format!(
                "non-finite value {value} at index {index}"
            )));
        }
        if let Some(&(last, _)) = self.entries.last() {
            if index <= last {
                return Err(Error::InvalidSparse(format!(
                    "index {index} does not follow {last}"
                )));
            }
        }
        self.entries.push((index, value));
        Ok(())
    }

    /// Storage access for decoders that validate order and finiteness themselves.
    pub(crate) fn entries_mut(&mut self) -> &mut Vec<(u32, f64)> {
        &mut self.entries
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn max_index(&self) -> Option<u32> {
        self.entries.last().map(|&(i, _)| i)
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum()
    }

    /// The entries whose index lies in `start..end`. Contiguous because entries are sorted.
    pub fn range(&self, start: u32, end: u32) -> &[(u32, f64)] {
        let lo = self.entries.partition_point(|&(i, _)| i < start);
        let hi = self.entries.partition_point(|&(i, _)| i < end);
        &self.entries[lo..hi.max(lo)]
    }

    /// Multiplies every value by `c`; entries that become zero are kept.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_sorted(self.iter().map(|(i, v)| (i, v * c)).collect())
    }
}

/// One example: a label and the three feature groups (global, user, item).
#[derive(Debug, Default, PartialEq)]
pub struct Instance {
    pub label: f64,
    pub global: SparseVector,
    pub user: SparseVector,
    pub item: SparseVector,
}

impl Instance {
    pub fn new(label: f64, global: SparseVector, user: SparseVector, item: SparseVector) -> Self {
        Instance {
            label,
            global,
            user,
            item,
        }
    }
}

impl Clone for Instance {
    fn clone(&self) -> Self {
        Instance {
            label: self.label,
            global: self.global.clone(),
            user: self.user.clone(),
            item: self.item.clone(),
        }
    }

    // Reuses the existing allocations; the prefetch pipeline relies on this.
    fn clone_from(&mut self, source: &Self) {
        self.label = source.label;
        self.global.entries.clone_from(&source.global.entries);
        self.user.entries.clone_from(&source.user.entries);
        self.item.entries.clone_from(&source.item.entries);
    }
}
