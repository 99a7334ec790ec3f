mod common;

use fmf::featuregen::{
    build_basic, build_feedback, build_hierarchical, build_linear_baseline, build_neighborhood,
    build_pairwise, build_temporal, preference_pairs, BaselineVariant, FeedbackSpec, IdSpace,
    NeighborhoodSpec, RatingRecord, Taxonomy, TemporalSpec, UserHistory,
};
use fmf::io::{collect_instances, format_instance, make_buffer, parse_line, BufferReader};
use fmf::loss::sigmoid;
use fmf::{init_model, Instance, Model, ModelDims, TrainConfig};
use rand::Rng;

const USERS: u32 = 12;
const ITEMS: u32 = 15;

fn ratings(seed: u64) -> Vec<RatingRecord> {
    let mut r = common::rng(seed);
    let mut out = Vec::new();
    for u in 0..USERS {
        for i in 0..ITEMS {
            if r.random_bool(0.5) {
                let rating = f64::from(r.random_range(1..=5u8));
                out.push(RatingRecord::new(u, i, rating).at(r.random_range(1_000..2_000)));
            }
        }
    }
    out
}

fn random_model(dims: ModelDims, seed: u64) -> Model {
    let cfg = TrainConfig {
        num_factor: dims.num_factor,
        init_sigma: 0.5,
        seed,
        ..TrainConfig::default()
    };
    let mut m = init_model(dims, &cfg).unwrap();
    let mut r = common::rng(seed + 1);
    for b in m
        .bias_global
        .iter_mut()
        .chain(&mut m.bias_user)
        .chain(&mut m.bias_item)
    {
        *b = r.random_range(-1.0..1.0);
    }
    m.mu = 0.7;
    m
}

fn all_encodings() -> Vec<(&'static str, Vec<Instance>)> {
    let recs = ratings(1);
    let ids = IdSpace::new(USERS, ITEMS);
    let taxonomy = Taxonomy::new((0..ITEMS).map(|t| (t, t % 4)));
    let temporal = TemporalSpec::covering(&recs, USERS).unwrap();
    let neighborhood = NeighborhoodSpec::from_ratings(&recs, 2);
    let each = |f: &dyn Fn(&RatingRecord) -> fmf::Result<Instance>| {
        recs.iter().map(f).collect::<fmf::Result<Vec<_>>>().unwrap()
    };
    let pairs: Vec<Instance> = preference_pairs(&recs, Some(20), 3)
        .into_iter()
        .map(|(u, a, b)| build_pairwise(u, a, b, ids).unwrap())
        .collect();
    let history = UserHistory::from_ratings(&recs);
    let implicit = FeedbackSpec {
        history: history.clone(),
        explicit: false,
        start: USERS,
    };
    let explicit = FeedbackSpec {
        history,
        explicit: true,
        start: USERS,
    };
    vec![
        ("basic", each(&|r| build_basic(r, ids))),
        (
            "user_mean",
            each(&|r| build_linear_baseline(r, BaselineVariant::UserMean, ids)),
        ),
        (
            "user_item_mean",
            each(&|r| build_linear_baseline(r, BaselineVariant::UserItemMean, ids)),
        ),
        ("pairwise", pairs),
        ("temporal", each(&|r| build_temporal(r, &temporal, ids))),
        (
            "neighborhood",
            each(&|r| build_neighborhood(r, &neighborhood, ids)),
        ),
        (
            "hierarchical",
            each(&|r| build_hierarchical(r, &taxonomy, ITEMS, ids)),
        ),
        ("implicit", build_feedback(&recs, &implicit, ids).unwrap()),
        ("explicit", build_feedback(&recs, &explicit, ids).unwrap()),
    ]
}

#[test]
fn every_encoding_survives_text_and_buffer() {
    let dir = tempfile::tempdir().unwrap();
    for (name, data) in all_encodings() {
        assert!(!data.is_empty(), "{name}");
        let text: String = data.iter().map(|i| format_instance(i) + "\n").collect();
        for (line, inst) in text.lines().zip(&data) {
            assert_eq!(&parse_line(line).unwrap(), inst, "{name}");
        }
        let (t, b) = (
            dir.path().join(format!("{name}.txt")),
            dir.path().join(format!("{name}.bin")),
        );
        std::fs::write(&t, text).unwrap();
        assert_eq!(make_buffer(&t, &b, None).unwrap().count, data.len() as u64);
        let back = collect_instances(&mut BufferReader::open(&b).unwrap()).unwrap();
        for (x, y) in back.iter().zip(&data) {
            assert!(
                (x.label - y.label).abs() <= 1e-6 * y.label.abs().max(1.0),
                "{name}"
            );
            assert_eq!(x.user.len(), y.user.len(), "{name}");
            assert_eq!(x.global.len(), y.global.len(), "{name}");
        }
    }
}

#[test]
fn temporal_weights_are_convex() {
    let spec = TemporalSpec::new(100, 300, USERS).unwrap();
    for t in (100..=300).step_by(7) {
        let (a, b) = spec.weights(t);
        assert!((a + b - 1.0).abs() < 1e-15);
        assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
    }
    assert_eq!(spec.weights(100), (1.0, 0.0));
    assert_eq!(spec.weights(300), (0.0, 1.0));
    let rec = RatingRecord::new(3, 2, 4.0).at(150);
    let inst = build_temporal(&rec, &spec, IdSpace::new(USERS, ITEMS)).unwrap();
    assert_eq!(inst.user.entries(), &[(3, 0.75), (3 + USERS, 0.25)]);
    assert!(build_temporal(
        &RatingRecord::new(3, 2, 4.0).at(301),
        &spec,
        IdSpace::new(USERS, ITEMS)
    )
    .is_err());
}

#[test]
fn neighborhood_values_are_bounded_by_deviation() {
    let recs = ratings(2);
    let spec = NeighborhoodSpec::from_ratings(&recs, 1);
    let ids = IdSpace::new(USERS, ITEMS);
    for r in &recs {
        let inst = build_neighborhood(r, &spec, ids).unwrap();
        let mean = spec.history().mean(r.user).unwrap();
        let bound = spec
            .history()
            .rated(r.user)
            .iter()
            .map(|&(_, x)| (x - mean).abs())
            .fold(0.0, f64::max);
        for (slot, v) in inst.global.iter() {
            assert!(v.abs() <= bound + 1e-12);
            assert!((slot as usize) < spec.num_slots());
        }
        let own = spec.slot(r.item, r.item);
        assert!(own.is_none());
    }
}

#[test]
fn pairwise_scores_are_antisymmetric() {
    let ids = IdSpace::new(USERS, ITEMS);
    let mut m = random_model(ModelDims::new(0, USERS as usize, ITEMS as usize, 4), 8);
    m.mu = 0.0;
    m.bias_user.iter_mut().for_each(|b| *b = 0.0);
    for (u, a, b) in [(0, 1, 2), (5, 14, 0), (11, 3, 7)] {
        let ab = m.score(&build_pairwise(u, a, b, ids).unwrap()).unwrap();
        let ba = m.score(&build_pairwise(u, b, a, ids).unwrap()).unwrap();
        assert!((ab + ba).abs() < 1e-12);
        assert!((sigmoid(ab) + sigmoid(ba) - 1.0).abs() < 1e-12);
    }
    assert!(build_pairwise(0, 3, 3, ids).is_err());
}

#[test]
fn tracks_of_one_artist_share_score_without_track_parameters() {
    let ids = IdSpace::new(USERS, ITEMS);
    let taxonomy = Taxonomy::new((0..ITEMS).map(|t| (t, t % 3)));
    let dims = ModelDims::new(0, USERS as usize, (ITEMS + 3) as usize, 5);
    let mut m = random_model(dims, 4);
    let k = dims.num_factor;
    for t in 0..ITEMS as usize {
        m.bias_item[t] = 0.0;
        m.factor_item[t * k..(t + 1) * k]
            .iter_mut()
            .for_each(|q| *q = 0.0);
    }
    for u in 0..USERS {
        let score = |t: u32| {
            m.score(
                &build_hierarchical(&RatingRecord::new(u, t, 1.0), &taxonomy, ITEMS, ids).unwrap(),
            )
            .unwrap()
        };
        assert_eq!(score(1), score(4));
        assert_eq!(score(2), score(11));
    }
}

#[test]
fn linear_baselines_score_exactly() {
    let ids = IdSpace::new(USERS, ITEMS);
    let m = random_model(ModelDims::new(0, USERS as usize, ITEMS as usize, 0), 6);
    let rec = RatingRecord::new(4, 9, 3.0);
    let um = build_linear_baseline(&rec, BaselineVariant::UserMean, ids).unwrap();
    assert_eq!(m.score(&um).unwrap(), m.mu + m.bias_user[4]);
    let uim = build_linear_baseline(&rec, BaselineVariant::UserItemMean, ids).unwrap();
    assert_eq!(
        m.score(&uim).unwrap(),
        m.mu + m.bias_user[4] + m.bias_item[9]
    );
}

#[test]
fn feedback_lists_are_identical_within_user() {
    let recs = ratings(3);
    let ids = IdSpace::new(USERS, ITEMS);
    for explicit in [false, true] {
        let spec = FeedbackSpec {
            history: UserHistory::from_ratings(&recs),
            explicit,
            start: USERS,
        };
        let data = build_feedback(&recs, &spec, ids).unwrap();
        assert_eq!(data.len(), recs.len());
        let mut seen: Vec<(u32, String)> = Vec::new();
        for inst in &data {
            let user = inst.user.entries()[0].0;
            let feedback: String = inst.user.entries()[1..]
                .iter()
                .map(|(j, v)| format!("{j}:{v} "))
                .collect();
            assert!(inst.user.entries()[1..]
                .iter()
                .all(|&(j, _)| j >= USERS && j < spec.end(ids)));
            match seen.last() {
                Some((u, f)) if *u == user => assert_eq!(f, &feedback),
                _ => {
                    assert!(
                        seen.iter().all(|(u, _)| *u != user),
                        "user {user} not contiguous"
                    );
                    seen.push((user, feedback));
                }
            }
        }
        if !explicit {
            for (u, f) in &seen {
                let n = f.split_whitespace().count() as f64;
                let norm = spec.features(*u).unwrap()[0].1;
                assert!((norm - 1.0 / n.sqrt()).abs() < 1e-15);
            }
        }
    }
    let bad = FeedbackSpec {
        history: UserHistory::from_ratings(&recs),
        explicit: false,
        start: USERS - 1,
    };
    assert!(build_feedback(&recs, &bad, ids).is_err());
}
