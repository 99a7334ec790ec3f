mod common;

use common::{descent_objective, max_block_relative_error, naive_l2_epoch, naive_score};
use fmf::io::{IterSource, SliceSource};
use fmf::{
    init_model, sgd_step, train_epoch, Error, FeedbackRange, Instance, LossKind, Model, ModelDims,
    Regularization, SparseVector, TrainConfig,
};
use proptest::prelude::*;
use rand::Rng;

const USERS: u32 = 6;
const FEEDBACK: u32 = 10;
const ITEMS: u32 = 12;

/// User-grouped stream: user one-hot plus a fixed feedback set per user.
fn grouped_stream(seed: u64, per_user: usize) -> Vec<Instance> {
    let mut r = common::rng(seed);
    let mut out = Vec::new();
    for u in 0..USERS {
        let fb = common::random_sparse(r.random_range(1..5), FEEDBACK, &mut r);
        let mut entries = vec![(u, 1.0)];
        entries.extend(fb.iter().map(|(j, v)| (USERS + j, v * 0.5)));
        let user = SparseVector::from_sorted(entries).unwrap();
        for _ in 0..r.random_range(1..=per_user) {
            let item = SparseVector::one_hot(r.random_range(0..ITEMS));
            out.push(Instance::new(
                r.random_range(1.0..5.0),
                SparseVector::new(),
                user.clone(),
                item,
            ));
        }
    }
    out
}

fn feedback_config(lambda: f64, eta: f64) -> TrainConfig {
    TrainConfig {
        eta,
        lambda: Regularization::uniform(lambda),
        num_factor: 5,
        init_sigma: 0.3,
        seed: 4,
        feedback_range: Some(FeedbackRange::new(USERS, USERS + FEEDBACK)),
        ..TrainConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn block_training_matches_per_sample_sgd(
        seed in any::<u64>(),
        per_user in 1usize..12,
        lambda in prop::sample::select(vec![0.0, 0.01, 0.1]),
        eta in 0.005f64..0.05,
    ) {
        let data = grouped_stream(seed, per_user);
        let cfg = feedback_config(lambda, eta);
        let dims = ModelDims::new(0, (USERS + FEEDBACK) as usize, ITEMS as usize, cfg.num_factor);
        let mut fast = init_model(dims, &cfg).unwrap();
        fast.mu = 3.0;
        let mut slow = fast.clone();
        for epoch in 1..=3 {
            train_epoch(&mut fast, &mut SliceSource::new(&data), &cfg, LossKind::L2Identity, epoch).unwrap();
            naive_l2_epoch(&mut slow, &data, &cfg);
        }
        let err = max_block_relative_error(&fast, &slow);
        prop_assert!(err < 1e-9, "block relative error {err:e}");
    }
}

#[test]
fn feedback_range_off_is_plain_sgd() {
    let data = grouped_stream(11, 7);
    let cfg = TrainConfig {
        feedback_range: None,
        ..feedback_config(0.02, 0.02)
    };
    let dims = ModelDims::new(
        0,
        (USERS + FEEDBACK) as usize,
        ITEMS as usize,
        cfg.num_factor,
    );
    let mut a = init_model(dims, &cfg).unwrap();
    let mut b = a.clone();
    train_epoch(
        &mut a,
        &mut SliceSource::new(&data),
        &cfg,
        LossKind::L2Identity,
        1,
    )
    .unwrap();
    naive_l2_epoch(&mut b, &data, &cfg);
    assert!(max_block_relative_error(&a, &b) < 1e-12);
}

fn parameter(m: &mut Model, which: usize, idx: usize) -> &mut f64 {
    match which {
        0 => &mut m.bias_global[idx],
        1 => &mut m.bias_user[idx],
        2 => &mut m.bias_item[idx],
        3 => &mut m.factor_user[idx],
        _ => &mut m.factor_item[idx],
    }
}

#[test]
fn updates_follow_numerical_gradient() {
    let k = 3;
    let dims = ModelDims::new(2, 5, 5, k);
    let cfg = TrainConfig {
        eta: 1e-3,
        lambda: Regularization::default(),
        num_factor: k,
        init_sigma: 0.4,
        ..TrainConfig::default()
    };
    let mut r = common::rng(21);
    let mut failures = Vec::new();
    let mut checked = 0;
    for trial in 0..40 {
        let mut base = init_model(
            dims,
            &TrainConfig {
                seed: trial,
                ..cfg.clone()
            },
        )
        .unwrap();
        base.mu = 0.2;
        for b in base
            .bias_user
            .iter_mut()
            .chain(&mut base.bias_item)
            .chain(&mut base.bias_global)
        {
            *b = r.random_range(-0.3..0.3);
        }
        let inst = Instance::new(
            0.0,
            common::random_sparse(1, 2, &mut r),
            common::random_sparse(2, 5, &mut r),
            common::random_sparse(2, 5, &mut r),
        );
        for kind in [
            LossKind::L2Identity,
            LossKind::Logistic,
            LossKind::SmoothedHinge,
        ] {
            let label = match kind {
                LossKind::L2Identity => r.random_range(-2.0..2.0),
                _ => f64::from(r.random_range(0..2u8)),
            };
            let inst = Instance {
                label,
                ..inst.clone()
            };
            if kind == LossKind::SmoothedHinge {
                let z = (2.0 * label - 1.0) * naive_score(&base, &inst);
                if z.abs() < 1e-3 || (z - 1.0).abs() < 1e-3 {
                    continue;
                }
            }
            let mut stepped = base.clone();
            sgd_step(&mut stepped, &inst, &cfg, kind).unwrap();
            let active: Vec<(usize, usize)> = inst
                .global
                .iter()
                .map(|(j, _)| (0, j as usize))
                .chain(inst.user.iter().map(|(j, _)| (1, j as usize)))
                .chain(inst.item.iter().map(|(j, _)| (2, j as usize)))
                .chain(
                    inst.user
                        .iter()
                        .flat_map(|(j, _)| (0..k).map(move |f| (3, j as usize * k + f))),
                )
                .chain(
                    inst.item
                        .iter()
                        .flat_map(|(j, _)| (0..k).map(move |f| (4, j as usize * k + f))),
                )
                .collect();
            for (which, idx) in active {
                let h = 1e-5;
                let obj = |delta: f64| {
                    let mut m = base.clone();
                    *parameter(&mut m, which, idx) += delta;
                    descent_objective(kind, label, naive_score(&m, &inst))
                };
                let numeric = (obj(h) - obj(-h)) / (2.0 * h);
                let update = (*parameter(&mut stepped, which, idx)
                    - *parameter(&mut base, which, idx))
                    / cfg.eta;
                checked += 1;
                let rel = (update + numeric).abs() / numeric.abs().max(update.abs()).max(1e-6);
                if rel >= 1e-4 {
                    failures.push((trial, kind, which, idx, rel));
                }
            }
        }
    }
    assert!(checked > 1000, "only {checked} checks");
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn divergence_reports_position() {
    let data: Vec<Instance> = (0..50u32)
        .map(|n| {
            Instance::new(
                100.0,
                SparseVector::new(),
                SparseVector::one_hot(n % 3),
                SparseVector::one_hot(n % 4),
            )
        })
        .collect();
    let cfg = TrainConfig {
        eta: 1e6,
        num_factor: 4,
        init_sigma: 1.0,
        ..TrainConfig::default()
    };
    let mut m = init_model(ModelDims::new(0, 3, 4, 4), &cfg).unwrap();
    match train_epoch(
        &mut m,
        &mut SliceSource::new(&data),
        &cfg,
        LossKind::L2Identity,
        7,
    ) {
        Err(Error::Divergence { epoch, instance }) => {
            assert_eq!(epoch, 7);
            assert!((1..=50).contains(&instance), "instance {instance}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn empty_stream_leaves_model_untouched() {
    let cfg = TrainConfig {
        num_factor: 2,
        init_sigma: 0.5,
        ..TrainConfig::default()
    };
    let before = init_model(ModelDims::new(1, 2, 2, 2), &cfg).unwrap();
    let mut m = before.clone();
    let report = train_epoch(
        &mut m,
        &mut IterSource::new(std::iter::empty()),
        &cfg,
        LossKind::Logistic,
        1,
    )
    .unwrap();
    assert_eq!(report.instances, 0);
    assert_eq!(report.mean_loss, 0.0);
    assert_eq!(m, before);
}

#[test]
fn label_outside_loss_domain_is_rejected() {
    let cfg = TrainConfig {
        num_factor: 1,
        ..TrainConfig::default()
    };
    let mut m = init_model(ModelDims::new(0, 1, 1, 1), &cfg).unwrap();
    let inst = Instance::new(
        2.0,
        SparseVector::new(),
        SparseVector::one_hot(0),
        SparseVector::one_hot(0),
    );
    assert!(sgd_step(&mut m, &inst, &cfg, LossKind::Logistic).is_err());
    assert!(sgd_step(&mut m, &inst, &cfg, LossKind::L2Identity).is_ok());
}
