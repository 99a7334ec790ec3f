//! Model parameters and scoring.
//!
//! The raw score of an instance is
//!
//! ```text
//! y = mu + sum_j bg_j γ_j + sum_j bu_j α_j + sum_j bi_j β_j
//!        + (sum_j p_j α_j) · (sum_j q_j β_j)
//! ```
//!
//! where `γ`, `α` and `β` are the global, user and item feature vectors. All
//! accumulation happens in `f64`.

use std::fmt;

use crate::error::{Error, FeatureGroup, Result};
use crate::loss::{LossKind, Prediction};
use crate::sparse::{Instance, SparseVector};

/// Sizes of the parameter blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ModelDims {
    pub num_global: usize,
    pub num_user: usize,
    pub num_item: usize,
    pub num_factor: usize,
}

impl fmt::Display for ModelDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(global={}, user={}, item={}, factor={})",
            self.num_global, self.num_user, self.num_item, self.num_factor
        )
    }
}

impl ModelDims {
    pub fn new(num_global: usize, num_user: usize, num_item: usize, num_factor: usize) -> Self {
        ModelDims {
            num_global,
            num_user,
            num_item,
            num_factor,
        }
    }

    pub fn group_size(&self, group: FeatureGroup) -> usize {
        match group {
            FeatureGroup::Global => self.num_global,
            FeatureGroup::User => self.num_user,
            FeatureGroup::Item => self.num_item,
        }
    }

    /// Checks that every feature index of `inst` is inside its group.
    pub fn check_instance(&self, inst: &Instance) -> Result<()> {
        check_group(&inst.global, FeatureGroup::Global, self.num_global)?;
        check_group(&inst.user, FeatureGroup::User, self.num_user)?;
        check_group(&inst.item, FeatureGroup::Item, self.num_item)
    }
}

fn check_group(v: &SparseVector, group: FeatureGroup, dim: usize) -> Result<()> {
    // Entries are sorted, so the last index is the largest.
    match v.max_index() {
        Some(index) if index as usize >= dim => Err(Error::DimensionMismatch { group, index, dim }),
        _ => Ok(()),
    }
}

/// All learned parameters. Factor matrices are row-major, one row of length
/// `num_factor` per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub dims: ModelDims,
    pub mu: f64,
    pub bias_global: Vec<f64>,
    pub bias_user: Vec<f64>,
    pub bias_item: Vec<f64>,
    pub factor_user: Vec<f64>,
    pub factor_item: Vec<f64>,
}

impl Model {
    /// A model with every parameter (including `mu`) set to zero.
    pub fn zeros(dims: ModelDims) -> Self {
        let k = dims.num_factor;
        Model {
            dims,
            mu: 0.0,
            bias_global: vec![0.0; dims.num_global],
            bias_user: vec![0.0; dims.num_user],
            bias_item: vec![0.0; dims.num_item],
            factor_user: vec![0.0; dims.num_user * k],
            factor_item: vec![0.0; dims.num_item * k],
        }
    }

    pub fn user_row(&self, j: usize) -> &[f64] {
        let k = self.dims.num_factor;
        &self.factor_user[j * k..(j + 1) * k]
    }

    pub fn item_row(&self, j: usize) -> &[f64] {
        let k = self.dims.num_factor;
        &self.factor_item[j * k..(j + 1) * k]
    }

    pub fn check_instance(&self, inst: &Instance) -> Result<()> {
        self.dims.check_instance(inst)
    }

    /// `mu` plus the three bias sums.
    pub fn linear_part(&self, inst: &Instance) -> Result<f64> {
        self.check_instance(inst)?;
        Ok(self.linear_part_unchecked(inst))
    }

    pub(crate) fn linear_part_unchecked(&self, inst: &Instance) -> f64 {
        let mut y = self.mu;
        for (j, v) in inst.global.iter() {
            y += self.bias_global[j as usize] * v;
        }
        for (j, v) in inst.user.iter() {
            y += self.bias_user[j as usize] * v;
        }
        for (j, v) in inst.item.iter() {
            y += self.bias_item[j as usize] * v;
        }
        y
    }

    /// `sum_j p_j α_j`.
    pub fn user_factor_sum(&self, inst: &Instance) -> Result<Vec<f64>> {
        self.check_instance(inst)?;
        let mut out = vec![0.0; self.dims.num_factor];
        accumulate_rows(
            &self.factor_user,
            self.dims.num_factor,
            inst.user.entries(),
            &mut out,
        );
        Ok(out)
    }

    /// `sum_j q_j β_j`.
    pub fn item_factor_sum(&self, inst: &Instance) -> Result<Vec<f64>> {
        self.check_instance(inst)?;
        let mut out = vec![0.0; self.dims.num_factor];
        accumulate_rows(
            &self.factor_item,
            self.dims.num_factor,
            inst.item.entries(),
            &mut out,
        );
        Ok(out)
    }

    /// The raw score `y`.
    pub fn score(&self, inst: &Instance) -> Result<f64> {
        self.check_instance(inst)?;
        let k = self.dims.num_factor;
        let mut user_sum = vec![0.0; k];
        let mut item_sum = vec![0.0; k];
        accumulate_rows(&self.factor_user, k, inst.user.entries(), &mut user_sum);
        accumulate_rows(&self.factor_item, k, inst.item.entries(), &mut item_sum);
        Ok(self.linear_part_unchecked(inst) + dot(&user_sum, &item_sum))
    }

    pub fn predict(&self, inst: &Instance, kind: LossKind) -> Result<Prediction> {
        Ok(Prediction::new(kind, self.score(inst)?))
    }

    pub fn is_finite(&self) -> bool {
        self.mu.is_finite()
            && [
                &self.bias_global,
                &self.bias_user,
                &self.bias_item,
                &self.factor_user,
                &self.factor_item,
            ]
            .iter()
            .all(|block| block.iter().all(|x| x.is_finite()))
    }
}

/// `out += sum_j value_j * row_j`. `out` must have length `k`.
pub(crate) fn accumulate_rows(matrix: &[f64], k: usize, entries: &[(u32, f64)], out: &mut [f64]) {
    for &(j, v) in entries {
        let row = &matrix[j as usize * k..(j as usize + 1) * k];
        for (o, &p) in out.iter_mut().zip(row) {
            *o += p * v;
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}
