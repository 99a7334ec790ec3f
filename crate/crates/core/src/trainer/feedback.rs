//! Grouped training for implicit/explicit feedback features.
//!
//! Feedback factors `d_j` are ordinary user-factor rows whose indices fall in a
//! [`FeedbackRange`]. Updating every `d_j` after each sample costs time linear in
//! the size of the feedback set. Instead, for a run of samples sharing one
//! feedback set, the derived factor `p_im = Σ α_j d_j` is computed once, updated
//! in place by each step with
//!
//! ```text
//! Δp_im = η (ê (Σ α_j²) (Σ q_j β_j) - λp p_im)
//! ```
//!
//! and the accumulated change is written back to the rows at the end of the block.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io::InstanceSource;
use crate::model::{accumulate_rows, Model};
use crate::sparse::{Instance, SparseVector};

use super::{FeedbackState, Sgd};

/// Half-open interval `start..end` of user-feature indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedbackRange {
    pub start: u32,
    pub end: u32,
}

impl FeedbackRange {
    pub fn new(start: u32, end: u32) -> Self {
        FeedbackRange { start, end }
    }

    pub fn contains(&self, j: u32) -> bool {
        self.start <= j && j < self.end
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// How the block's change in `p_im` is distributed back to the feedback rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WriteBack {
    /// `d_i += α_i / Σα² · (p_im - p_old)`. Exact without regularization; with
    /// `λp > 0` the component of `d` orthogonal to `α` misses its decay.
    Additive,
    /// `d_i = ρ d_i + α_i / Σα² · (p_im - ρ p_old)` with `ρ = (1 - ηλp)^n` for a
    /// block of `n` samples. Identical to `Additive` when `λp = 0` and matches the
    /// per-sample updates exactly when `λp > 0`.
    #[default]
    DecayCorrected,
}

impl FromStr for WriteBack {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(WriteBack::Additive),
            "decay_corrected" => Ok(WriteBack::DecayCorrected),
            other => Err(Error::Config(format!(
                "unknown feedback_writeback `{other}` (expected additive or decay_corrected)"
            ))),
        }
    }
}

/// A maximal run of consecutive instances with identical feedback entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackBlock {
    range: FeedbackRange,
    shared_feedback: SparseVector,
    samples: Vec<Instance>,
}

impl FeedbackBlock {
    /// Fails if any sample's feedback entries differ from the first sample's.
    pub fn new(range: FeedbackRange, samples: Vec<Instance>) -> Result<Self> {
        let shared = match samples.first() {
            Some(first) => SparseVector::from_sorted(feedback_slice(first, range).to_vec())?,
            None => SparseVector::new(),
        };
        if let Some(bad) = samples
            .iter()
            .position(|s| feedback_slice(s, range) != shared.entries())
        {
            return Err(Error::InvalidSparse(format!(
                "sample {bad} of block has a different feedback set"
            )));
        }
        Ok(FeedbackBlock {
            range,
            shared_feedback: shared,
            samples,
        })
    }

    pub fn range(&self) -> FeedbackRange {
        self.range
    }

    pub fn shared_feedback(&self) -> &SparseVector {
        &self.shared_feedback
    }

    pub fn samples(&self) -> &[Instance] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn feedback_slice(inst: &Instance, range: FeedbackRange) -> &[(u32, f64)] {
    inst.user.range(range.start, range.end)
}

/// Splits a stream into feedback blocks. See [`group_blocks`].
pub struct GroupBlocks<'s, S: ?Sized> {
    source: &'s mut S,
    range: FeedbackRange,
    pending: Option<Instance>,
}

impl<'s, S: InstanceSource + ?Sized> GroupBlocks<'s, S> {
    pub fn new(source: &'s mut S, range: FeedbackRange) -> Self {
        GroupBlocks {
            source,
            range,
            pending: None,
        }
    }

    pub fn next_block(&mut self) -> Option<Result<FeedbackBlock>> {
        let first = match self.pending.take() {
            Some(inst) => inst,
            None => match self.source.next_instance()? {
                Ok(inst) => inst.clone(),
                Err(e) => return Some(Err(e)),
            },
        };
        let shared = match SparseVector::from_sorted(feedback_slice(&first, self.range).to_vec()) {
            Ok(v) => v,
            Err(e) => return Some(Err(e)),
        };
        let mut samples = vec![first];
        // An empty range makes every instance its own block.
        if !self.range.is_empty() {
            while let Some(next) = self.source.next_instance() {
                let inst = match next {
                    Ok(inst) => inst,
                    Err(e) => return Some(Err(e)),
                };
                if feedback_slice(inst, self.range) == shared.entries() {
                    samples.push(inst.clone());
                } else {
                    self.pending = Some(inst.clone());
                    break;
                }
            }
        }
        Some(Ok(FeedbackBlock {
            range: self.range,
            shared_feedback: shared,
            samples,
        }))
    }
}

impl<S: InstanceSource + ?Sized> Iterator for GroupBlocks<'_, S> {
    type Item = Result<FeedbackBlock>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_block()
    }
}

/// Groups maximal runs of consecutive instances whose user entries inside
/// `range` are identical (same indices, same values).
pub fn group_blocks<S: InstanceSource + ?Sized>(
    source: &mut S,
    range: FeedbackRange,
) -> GroupBlocks<'_, S> {
    GroupBlocks::new(source, range)
}

pub(crate) fn train_block_with(
    sgd: &mut Sgd<'_>,
    model: &mut Model,
    block: &FeedbackBlock,
    writeback: WriteBack,
) -> Result<()> {
    let k = model.dims.num_factor;
    let feedback = block.shared_feedback.entries();
    model.check_instance(&Instance::new(
        0.0,
        SparseVector::new(),
        block.shared_feedback.clone(),
        SparseVector::new(),
    ))?;
    let sum_sq = block.shared_feedback.sum_of_squares();

    let mut p_im = vec![0.0; k];
    accumulate_rows(&model.factor_user, k, feedback, &mut p_im);
    let p_old = p_im.clone();

    let mut state = FeedbackState {
        range: block.range,
        sum_sq,
        p_im: &mut p_im,
    };
    for sample in &block.samples {
        sgd.block_step(model, sample, &mut state)?;
    }

    if sum_sq > 0.0 {
        let rho = match writeback {
            WriteBack::Additive => 1.0,
            WriteBack::DecayCorrected => {
                let c = sgd.config.eta * sgd.config.lambda.user_factor;
                (1.0 - c).powi(block.samples.len() as i32)
            }
        };
        for &(j, a) in feedback {
            let w = a / sum_sq;
            let row = &mut model.factor_user[j as usize * k..(j as usize + 1) * k];
            for ((d, &new), &old) in row.iter_mut().zip(p_im.iter()).zip(&p_old) {
                *d = rho * *d + w * (new - rho * old);
            }
        }
    }
    Ok(())
}
