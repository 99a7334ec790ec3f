//! Reference implementations and synthetic data shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use fmf::featuregen::RatingRecord;
use fmf::io::SliceSource;
use fmf::{
    init_model, train_epoch, Instance, LossKind, Model, ModelDims, SparseVector, TrainConfig,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(
    rows: usize,
    cols: usize,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let n = Normal::new(0.0, sigma).unwrap();
    (0..rows)
        .map(|_| (0..cols).map(|_| n.sample(rng)).collect())
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Score computed by explicit loops over every parameter of the model.
pub fn naive_score(m: &Model, inst: &Instance) -> f64 {
    let k = m.dims.num_factor;
    let mut y = m.mu;
    for (j, v) in inst.global.iter() {
        y += m.bias_global[j as usize] * v;
    }
    for (j, a) in inst.user.iter() {
        y += m.bias_user[j as usize] * a;
    }
    for (j, b) in inst.item.iter() {
        y += m.bias_item[j as usize] * b;
    }
    for f in 0..k {
        let mut p = 0.0;
        for (j, a) in inst.user.iter() {
            p += a * m.factor_user[j as usize * k + f];
        }
        let mut q = 0.0;
        for (j, b) in inst.item.iter() {
            q += b * m.factor_item[j as usize * k + f];
        }
        y += p * q;
    }
    y
}

pub fn naive_sigmoid(y: f64) -> f64 {
    1.0 / (1.0 + (-y).exp())
}

/// The objective whose negative gradient the update rules follow.
pub fn descent_objective(kind: LossKind, label: f64, y: f64) -> f64 {
    match kind {
        LossKind::L2Identity => 0.5 * (label - y) * (label - y),
        LossKind::Logistic => {
            let p = naive_sigmoid(y).clamp(1e-16, 1.0 - 1e-16);
            -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
        }
        LossKind::SmoothedHinge => {
            let z = (2.0 * label - 1.0) * y;
            if z <= 0.0 {
                0.5 - z
            } else if z < 1.0 {
                0.5 * (1.0 - z) * (1.0 - z)
            } else {
                0.0
            }
        }
    }
}

/// Plain per-sample SGD on L2 loss written against the dense parameter
/// layout: every active row, including feedback rows, is updated each step.
pub fn naive_l2_epoch(m: &mut Model, data: &[Instance], cfg: &TrainConfig) {
    let k = m.dims.num_factor;
    let eta = cfg.eta;
    let l = &cfg.lambda;
    for inst in data {
        let y = naive_score(m, inst);
        let e = inst.label - y;
        let mut psum = vec![0.0; k];
        let mut qsum = vec![0.0; k];
        for (j, a) in inst.user.iter() {
            for f in 0..k {
                psum[f] += a * m.factor_user[j as usize * k + f];
            }
        }
        for (j, b) in inst.item.iter() {
            for f in 0..k {
                qsum[f] += b * m.factor_item[j as usize * k + f];
            }
        }
        for (j, v) in inst.global.iter() {
            let b = &mut m.bias_global[j as usize];
            *b += eta * (e * v - l.global_bias * *b);
        }
        for (j, a) in inst.user.iter() {
            let j = j as usize;
            m.bias_user[j] += eta * (e * a - l.user_bias * m.bias_user[j]);
            for f in 0..k {
                let p = &mut m.factor_user[j * k + f];
                *p += eta * (e * a * qsum[f] - l.user_factor * *p);
            }
        }
        for (j, b) in inst.item.iter() {
            let j = j as usize;
            m.bias_item[j] += eta * (e * b - l.item_bias * m.bias_item[j]);
            for f in 0..k {
                let q = &mut m.factor_item[j * k + f];
                *q += eta * (e * b * psum[f] - l.item_factor * *q);
            }
        }
    }
}

/// Largest absolute difference relative to the largest reference magnitude, per block.
pub fn max_block_relative_error(got: &Model, want: &Model) -> f64 {
    let blocks = [
        (&got.bias_global, &want.bias_global),
        (&got.bias_user, &want.bias_user),
        (&got.bias_item, &want.bias_item),
        (&got.factor_user, &want.factor_user),
        (&got.factor_item, &want.factor_item),
    ];
    blocks
        .iter()
        .map(|(g, w)| {
            let scale = w.iter().fold(0.0f64, |s, x| s.max(x.abs()));
            let diff = g
                .iter()
                .zip(w.iter())
                .fold(0.0f64, |s, (a, b)| s.max((a - b).abs()));
            if scale == 0.0 {
                diff
            } else {
                diff / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Every `(user, item)` pair rated `p_u · q_i + noise`, with rank-`rank` Gaussian factors
/// scaled so the clean ratings have unit variance.
pub fn planted_ratings(
    users: u32,
    items: u32,
    rank: usize,
    noise: f64,
    seed: u64,
) -> Vec<RatingRecord> {
    let mut r = rng(seed);
    let s = (1.0 / rank as f64).powf(0.25);
    let p = gaussian_matrix(users as usize, rank, s, &mut r);
    let q = gaussian_matrix(items as usize, rank, s, &mut r);
    let eps = Normal::new(0.0, noise).unwrap();
    let mut out = Vec::new();
    for u in 0..users {
        for i in 0..items {
            let clean = dot(&p[u as usize], &q[i as usize]);
            out.push(RatingRecord::new(u, i, clean + eps.sample(&mut r)));
        }
    }
    out
}

/// Seeded split into consecutive fractions of a shuffled copy.
pub fn split<T: Clone>(data: &[T], fractions: &[f64], seed: u64) -> Vec<Vec<T>> {
    let mut v = data.to_vec();
    v.shuffle(&mut rng(seed));
    let mut out = Vec::new();
    let mut start = 0;
    for (n, f) in fractions.iter().enumerate() {
        let end = if n + 1 == fractions.len() {
            v.len()
        } else {
            start + (f * data.len() as f64).round() as usize
        };
        out.push(v[start..end].to_vec());
        start = end;
    }
    out
}

pub fn dims_of(data: &[Instance], k: usize) -> ModelDims {
    let max = |f: fn(&Instance) -> &SparseVector| {
        data.iter()
            .filter_map(|i| f(i).max_index())
            .map(|m| m as usize + 1)
            .max()
            .unwrap_or(0)
    };
    ModelDims::new(max(|i| &i.global), max(|i| &i.user), max(|i| &i.item), k)
}

pub fn label_mean(data: &[Instance]) -> f64 {
    data.iter().map(|i| i.label).sum::<f64>() / data.len() as f64
}

/// Trains in memory for `epochs` passes, returning the model and per-epoch mean losses.
pub fn fit(
    dims: ModelDims,
    mu: f64,
    data: &[Instance],
    cfg: &TrainConfig,
    kind: LossKind,
) -> (Model, Vec<f64>) {
    let mut model = init_model(dims, cfg).unwrap();
    model.mu = mu;
    let mut losses = Vec::new();
    for epoch in 1..=cfg.epochs {
        let report =
            train_epoch(&mut model, &mut SliceSource::new(data), cfg, kind, epoch).unwrap();
        losses.push(report.mean_loss);
    }
    (model, losses)
}

pub fn rmse_of(model: &Model, data: &[Instance]) -> f64 {
    let se: f64 = data
        .iter()
        .map(|i| {
            let d = i.label - model.score(i).unwrap();
            d * d
        })
        .sum();
    (se / data.len() as f64).sqrt()
}

/// Random sparse vector with `n` distinct indices below `dim`.
pub fn random_sparse(n: usize, dim: u32, rng: &mut ChaCha8Rng) -> SparseVector {
    let mut idx: Vec<u32> = (0..dim).collect();
    idx.shuffle(rng);
    let entries = idx[..n]
        .iter()
        .map(|&j| {
            let mag = rng.random_range(0.2..1.5);
            (j, if rng.random_bool(0.5) { mag } else { -mag })
        })
        .collect();
    SparseVector::from_unsorted(entries).unwrap()
}
