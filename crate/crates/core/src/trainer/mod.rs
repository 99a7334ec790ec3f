//! Stochastic gradient training.
//!
//! Every step computes the error signal `ê` once from the pre-update model and
//! then applies, for each active feature only,
//!
//! ```text
//! p_i  += η (ê α_i (Σ q_j β_j) - λp p_i)
//! q_i  += η (ê β_i (Σ p_j α_j) - λq q_i)
//! bg_i += η (ê γ_i - λbg bg_i)
//! bu_i += η (ê α_i - λbu bu_i)
//! bi_i += η (ê β_i - λbi bi_i)
//! ```
//!
//! Both factor sums are taken before any parameter is written, so the `p` and
//! `q` updates are simultaneous. `mu` is never updated.

mod feedback;

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::io::InstanceSource;
use crate::loss::{gradient_scalar, loss, LossKind, Prediction};
use crate::model::{accumulate_rows, dot, Model, ModelDims};
use crate::sparse::Instance;

pub use feedback::{group_blocks, FeedbackBlock, FeedbackRange, GroupBlocks, WriteBack};

/// L2 penalties for each parameter block.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Regularization {
    /// λ for user factors `p` (shared by feedback factors).
    pub user_factor: f64,
    /// λ for item factors `q`.
    pub item_factor: f64,
    pub global_bias: f64,
    pub user_bias: f64,
    pub item_bias: f64,
}

impl Regularization {
    pub fn uniform(lambda: f64) -> Self {
        Regularization {
            user_factor: lambda,
            item_factor: lambda,
            global_bias: lambda,
            user_bias: lambda,
            item_bias: lambda,
        }
    }

    fn all(&self) -> [f64; 5] {
        [
            self.user_factor,
            self.item_factor,
            self.global_bias,
            self.user_bias,
            self.item_bias,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub eta: f64,
    pub lambda: Regularization,
    pub num_factor: usize,
    pub epochs: usize,
    pub seed: u64,
    pub init_sigma: f64,
    /// User-feature indices holding implicit/explicit feedback factors.
    pub feedback_range: Option<FeedbackRange>,
    pub writeback: WriteBack,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta: 0.01,
            lambda: Regularization {
                user_factor: 0.004,
                item_factor: 0.004,
                ..Regularization::default()
            },
            num_factor: 8,
            epochs: 10,
            seed: 0,
            init_sigma: 0.01,
            feedback_range: None,
            writeback: WriteBack::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, dims: &ModelDims) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if self
            .lambda
            .all()
            .iter()
            .any(|l| !(*l >= 0.0 && l.is_finite()))
        {
            return Err(Error::Config("regularization must be non-negative".into()));
        }
        if !(self.init_sigma >= 0.0 && self.init_sigma.is_finite()) {
            return Err(Error::Config("init_sigma must be non-negative".into()));
        }
        if self.num_factor != dims.num_factor {
            return Err(Error::Config(format!(
                "num_factor {} does not match model dimensions {dims}",
                self.num_factor
            )));
        }
        if let Some(r) = self.feedback_range {
            if r.start > r.end || r.end as usize > dims.num_user {
                return Err(Error::Config(format!(
                    "feedback range {}..{} outside user features 0..{}",
                    r.start, r.end, dims.num_user
                )));
            }
        }
        Ok(())
    }
}

/// Zero biases, `mu = 0`, factors drawn i.i.d. from N(0, init_sigma²) with a
/// ChaCha8 generator seeded by `config.seed` (user rows first, then item rows).
pub fn init_model(dims: ModelDims, config: &TrainConfig) -> Result<Model> {
    let mut model = Model::zeros(dims);
    if config.init_sigma > 0.0 {
        let normal = Normal::new(0.0, config.init_sigma)
            .map_err(|e| Error::Config(format!("init_sigma: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for x in model
            .factor_user
            .iter_mut()
            .chain(model.factor_item.iter_mut())
        {
            *x = normal.sample(&mut rng);
        }
    }
    Ok(model)
}

/// Summary of one pass over the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epoch: usize,
    /// Mean loss of the pre-update predictions.
    pub mean_loss: f64,
    pub instances: u64,
    pub elapsed: Duration,
}

/// Running derived user factor for a feedback block.
pub(crate) struct FeedbackState<'a> {
    pub range: FeedbackRange,
    pub sum_sq: f64,
    pub p_im: &'a mut [f64],
}

/// Applies update rules while tracking the position used in divergence errors.
pub struct Sgd<'a> {
    config: &'a TrainConfig,
    loss: LossKind,
    epoch: usize,
    instance: u64,
    loss_sum: f64,
    user_sum: Vec<f64>,
    item_sum: Vec<f64>,
}

impl<'a> Sgd<'a> {
    pub fn new(config: &'a TrainConfig, loss: LossKind) -> Self {
        Sgd {
            config,
            loss,
            epoch: 0,
            instance: 0,
            loss_sum: 0.0,
            user_sum: Vec::new(),
            item_sum: Vec::new(),
        }
    }

    pub fn with_epoch(mut self, epoch: usize) -> Self {
        self.epoch = epoch;
        self
    }

    pub fn instances(&self) -> u64 {
        self.instance
    }

    pub fn loss_sum(&self) -> f64 {
        self.loss_sum
    }

    fn reset_sums(&mut self, k: usize) {
        self.user_sum.clear();
        self.user_sum.resize(k, 0.0);
        self.item_sum.clear();
        self.item_sum.resize(k, 0.0);
    }

    /// One plain update. Returns the loss of the pre-update prediction.
    pub fn step(&mut self, model: &mut Model, inst: &Instance) -> Result<f64> {
        model.check_instance(inst)?;
        let k = model.dims.num_factor;
        self.reset_sums(k);
        accumulate_rows(
            &model.factor_user,
            k,
            inst.user.entries(),
            &mut self.user_sum,
        );
        accumulate_rows(
            &model.factor_item,
            k,
            inst.item.entries(),
            &mut self.item_sum,
        );
        self.apply(model, inst, None)
    }

    /// A step inside a feedback block: feedback rows are represented by `p_im`
    /// and left untouched; `p_im` receives their aggregate update.
    pub(crate) fn block_step(
        &mut self,
        model: &mut Model,
        inst: &Instance,
        state: &mut FeedbackState<'_>,
    ) -> Result<f64> {
        model.check_instance(inst)?;
        let k = model.dims.num_factor;
        let r = state.range;
        self.reset_sums(k);
        let user = inst.user.entries();
        let lo = user.partition_point(|&(j, _)| j < r.start);
        let hi = user.partition_point(|&(j, _)| j < r.end).max(lo);
        accumulate_rows(&model.factor_user, k, &user[..lo], &mut self.user_sum);
        accumulate_rows(&model.factor_user, k, &user[hi..], &mut self.user_sum);
        for (s, &p) in self.user_sum.iter_mut().zip(state.p_im.iter()) {
            *s += p;
        }
        accumulate_rows(
            &model.factor_item,
            k,
            inst.item.entries(),
            &mut self.item_sum,
        );
        self.apply(model, inst, Some(state))
    }

    fn diverged(&self) -> Error {
        Error::Divergence {
            epoch: self.epoch,
            instance: self.instance,
        }
    }

    fn apply(
        &mut self,
        model: &mut Model,
        inst: &Instance,
        feedback: Option<&mut FeedbackState<'_>>,
    ) -> Result<f64> {
        let y = model.linear_part_unchecked(inst) + dot(&self.user_sum, &self.item_sum);
        let pred = Prediction::new(self.loss, y);
        let err = gradient_scalar(self.loss, inst.label, pred)?;
        let value = loss(self.loss, inst.label, pred)?;
        if !y.is_finite() || !err.is_finite() {
            return Err(self.diverged());
        }

        let eta = self.config.eta;
        let lam = &self.config.lambda;
        let k = model.dims.num_factor;
        let skip = feedback.as_ref().map(|s| s.range);
        let mut finite = true;

        for &(j, a) in inst.user.entries() {
            let j = j as usize;
            let b = &mut model.bias_user[j];
            *b += eta * (err * a - lam.user_bias * *b);
            finite &= b.is_finite();
            if skip.is_some_and(|r| r.contains(j as u32)) {
                continue;
            }
            let row = &mut model.factor_user[j * k..(j + 1) * k];
            for (p, &q_sum) in row.iter_mut().zip(&self.item_sum) {
                *p += eta * (err * a * q_sum - lam.user_factor * *p);
                finite &= p.is_finite();
            }
        }
        for &(j, v) in inst.item.entries() {
            let j = j as usize;
            let b = &mut model.bias_item[j];
            *b += eta * (err * v - lam.item_bias * *b);
            finite &= b.is_finite();
            let row = &mut model.factor_item[j * k..(j + 1) * k];
            for (q, &p_sum) in row.iter_mut().zip(&self.user_sum) {
                *q += eta * (err * v * p_sum - lam.item_factor * *q);
                finite &= q.is_finite();
            }
        }
        for &(j, v) in inst.global.entries() {
            let b = &mut model.bias_global[j as usize];
            *b += eta * (err * v - lam.global_bias * *b);
            finite &= b.is_finite();
        }
        if let Some(state) = feedback {
            for (p, &q_sum) in state.p_im.iter_mut().zip(&self.item_sum) {
                *p += eta * (err * state.sum_sq * q_sum - lam.user_factor * *p);
                finite &= p.is_finite();
            }
        }

        if !finite {
            return Err(self.diverged());
        }
        self.instance += 1;
        self.loss_sum += value;
        Ok(value)
    }
}

/// A single update of `model` on `inst`. Returns the pre-update loss.
pub fn sgd_step(
    model: &mut Model,
    inst: &Instance,
    config: &TrainConfig,
    kind: LossKind,
) -> Result<f64> {
    Sgd::new(config, kind).step(model, inst)
}

/// One pass over `source` in stream order. With a feedback range configured,
/// consecutive instances sharing a feedback set are trained as one block.
pub fn train_epoch<S: InstanceSource + ?Sized>(
    model: &mut Model,
    source: &mut S,
    config: &TrainConfig,
    kind: LossKind,
    epoch: usize,
) -> Result<TrainReport> {
    let start = Instant::now();
    let mut sgd = Sgd::new(config, kind).with_epoch(epoch);
    match config.feedback_range {
        None => {
            while let Some(next) = source.next_instance() {
                sgd.step(model, next?)?;
            }
        }
        Some(range) => {
            let mut blocks = GroupBlocks::new(source, range);
            while let Some(block) = blocks.next_block() {
                feedback::train_block_with(&mut sgd, model, &block?, config.writeback)?;
            }
        }
    }
    let instances = sgd.instances();
    Ok(TrainReport {
        epoch,
        mean_loss: if instances == 0 {
            0.0
        } else {
            sgd.loss_sum() / instances as f64
        },
        instances,
        elapsed: start.elapsed(),
    })
}

/// Trains one feedback block with the deferred feedback-factor update.
pub fn train_block(
    model: &mut Model,
    block: &FeedbackBlock,
    config: &TrainConfig,
    kind: LossKind,
) -> Result<f64> {
    let mut sgd = Sgd::new(config, kind);
    feedback::train_block_with(&mut sgd, model, block, config.writeback)?;
    Ok(sgd.loss_sum())
}
