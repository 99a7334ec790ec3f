//! Encoders from raw ratings to instances for the common model families.
//!
//! Every model below is a choice of feature layout for the same scorer:
//!
//! | encoding        | global γ                    | user α                          | item β                    |
//! |-----------------|-----------------------------|---------------------------------|---------------------------|
//! | basic           | –                           | `u:1`                           | `i:1`                     |
//! | user mean       | –                           | `u:1`                           | –                         |
//! | pairwise        | –                           | `u:1`                           | `i:1 j:-1`                |
//! | temporal        | –                           | `u:(e-t)/(e-s) (u+n):(t-s)/(e-s)` | `i:1`                   |
//! | neighborhood    | `slot(i,j):(r_uj - b̄_u)/√|R(u)|` | `u:1`                       | `i:1`                     |
//! | hierarchical    | –                           | `u:1`                           | `t:1 (T+a):1`             |
//! | feedback        | –                           | `u:1 (F+j):w_j` for j ∈ R(u)    | `i:1`                     |
//!
//! Zero-valued features are dropped except in feedback sets, which are kept
//! whole so that every instance of a user carries an identical set.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::{Instance, SparseVector};

/// Suggested training settings for pairwise instances: no global offset and a
/// user-bias penalty strong enough to pin `b_u` near zero.
pub const PAIRWISE_CONFIG_NOTE: &str =
    "pairwise instances: use loss=logistic base_score=0 and lam_bu=1/eta to suppress the user bias";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingRecord {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

impl RatingRecord {
    pub fn new(user: u32, item: u32, rating: f64) -> Self {
        RatingRecord {
            user,
            item,
            rating,
            timestamp: None,
        }
    }

    pub fn at(mut self, timestamp: i64) -> Self {
        self.timestamp = Some(timestamp);
        self
    }
}

fn fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c == '\t' || c.is_ascii_whitespace())
        .filter(|s| !s.is_empty())
}

fn bad_line(line_no: usize, msg: impl std::fmt::Display) -> Error {
    Error::Feature(format!("line {line_no}: {msg}"))
}

/// Parses `user item rating [timestamp]`, separated by whitespace, tabs or commas.
pub fn parse_rating_line(line: &str, line_no: usize) -> Result<RatingRecord> {
    let f: Vec<&str> = fields(line).collect();
    if f.len() != 3 && f.len() != 4 {
        return Err(bad_line(
            line_no,
            format!("expected 3 or 4 fields, found {}", f.len()),
        ));
    }
    let user = f[0]
        .parse()
        .map_err(|_| bad_line(line_no, format!("bad user id `{}`", f[0])))?;
    let item = f[1]
        .parse()
        .map_err(|_| bad_line(line_no, format!("bad item id `{}`", f[1])))?;
    let rating: f64 = f[2]
        .parse()
        .map_err(|_| bad_line(line_no, format!("bad rating `{}`", f[2])))?;
    if !rating.is_finite() {
        return Err(bad_line(line_no, "non-finite rating"));
    }
    let timestamp = match f.get(3) {
        Some(t) => Some(
            t.parse()
                .map_err(|_| bad_line(line_no, format!("bad timestamp `{t}`")))?,
        ),
        None => None,
    };
    Ok(RatingRecord {
        user,
        item,
        rating,
        timestamp,
    })
}

fn data_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push((n + 1, line));
    }
    Ok(out)
}

pub fn read_ratings(path: impl AsRef<Path>) -> Result<Vec<RatingRecord>> {
    data_lines(path.as_ref())?
        .iter()
        .map(|(n, l)| parse_rating_line(l, *n))
        .collect()
}

/// Track → artist map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Taxonomy {
    artist_of: HashMap<u32, u32>,
}

impl Taxonomy {
    pub fn new(pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        Taxonomy {
            artist_of: pairs.into_iter().collect(),
        }
    }

    pub fn artist(&self, track: u32) -> Option<u32> {
        self.artist_of.get(&track).copied()
    }

    pub fn num_artists(&self) -> u32 {
        self.artist_of.values().max().map_or(0, |a| a + 1)
    }

    /// Reads `track artist` lines.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in data_lines(path.as_ref())? {
            let f: Vec<&str> = fields(&line).collect();
            if f.len() != 2 {
                return Err(bad_line(n, "expected `track artist`"));
            }
            let t = f[0]
                .parse()
                .map_err(|_| bad_line(n, format!("bad track id `{}`", f[0])))?;
            let a = f[1]
                .parse()
                .map_err(|_| bad_line(n, format!("bad artist id `{}`", f[1])))?;
            pairs.push((t, a));
        }
        Ok(Taxonomy::new(pairs))
    }
}

/// Upper bounds on user and item ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdSpace {
    pub num_users: u32,
    pub num_items: u32,
}

impl IdSpace {
    pub fn new(num_users: u32, num_items: u32) -> Self {
        IdSpace {
            num_users,
            num_items,
        }
    }

    /// Smallest space containing every id in `records`.
    pub fn covering(records: &[RatingRecord]) -> Self {
        IdSpace {
            num_users: records.iter().map(|r| r.user + 1).max().unwrap_or(0),
            num_items: records.iter().map(|r| r.item + 1).max().unwrap_or(0),
        }
    }

    fn check(&self, user: u32, item: u32) -> Result<()> {
        if user >= self.num_users {
            return Err(Error::Feature(format!(
                "user {user} out of range ({} users)",
                self.num_users
            )));
        }
        if item >= self.num_items {
            return Err(Error::Feature(format!(
                "item {item} out of range ({} items)",
                self.num_items
            )));
        }
        Ok(())
    }
}

fn sparse(entries: Vec<(u32, f64)>) -> Result<SparseVector> {
    SparseVector::from_unsorted(entries.into_iter().filter(|&(_, v)| v != 0.0).collect())
}

/// `γ = ∅, α = u:1, β = i:1`.
pub fn build_basic(record: &RatingRecord, ids: IdSpace) -> Result<Instance> {
    ids.check(record.user, record.item)?;
    Ok(Instance::new(
        record.rating,
        SparseVector::new(),
        SparseVector::one_hot(record.user),
        SparseVector::one_hot(record.item),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineVariant {
    /// `mu + b_u`
    UserMean,
    /// `mu + b_u + b_i`
    UserItemMean,
}

/// Instances for the factor-free baselines; train them with `num_factor = 0`.
pub fn build_linear_baseline(
    record: &RatingRecord,
    variant: BaselineVariant,
    ids: IdSpace,
) -> Result<Instance> {
    ids.check(record.user, record.item)?;
    let item = match variant {
        BaselineVariant::UserMean => SparseVector::new(),
        BaselineVariant::UserItemMean => SparseVector::one_hot(record.item),
    };
    Ok(Instance::new(
        record.rating,
        SparseVector::new(),
        SparseVector::one_hot(record.user),
        item,
    ))
}

/// Label 1 meaning "`preferred` ranks above `other` for `user`": `β = preferred:1 other:-1`.
/// See [`PAIRWISE_CONFIG_NOTE`] for the matching training settings.
pub fn build_pairwise(user: u32, preferred: u32, other: u32, ids: IdSpace) -> Result<Instance> {
    if preferred == other {
        return Err(Error::Feature(format!(
            "degenerate pair: item {preferred} compared with itself"
        )));
    }
    ids.check(user, preferred)?;
    ids.check(user, other)?;
    Ok(Instance::new(
        1.0,
        SparseVector::new(),
        SparseVector::one_hot(user),
        sparse(vec![(preferred, 1.0), (other, -1.0)])?,
    ))
}

/// Ordered preference pairs `(user, preferred, other)` with `r_preferred > r_other`.
/// With `max_per_user`, a seeded sample of that many pairs is kept per user.
pub fn preference_pairs(
    records: &[RatingRecord],
    max_per_user: Option<usize>,
    seed: u64,
) -> Vec<(u32, u32, u32)> {
    let mut by_user: BTreeMap<u32, Vec<(u32, f64)>> = BTreeMap::new();
    for r in records {
        by_user.entry(r.user).or_default().push((r.item, r.rating));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (user, items) in by_user {
        let mut pairs = Vec::new();
        for &(i, ri) in &items {
            for &(j, rj) in &items {
                if ri > rj && i != j {
                    pairs.push((user, i, j));
                }
            }
        }
        if let Some(m) = max_per_user {
            if pairs.len() > m {
                let (chosen, _) =
                    rand::seq::SliceRandom::partial_shuffle(&mut pairs[..], &mut rng, m);
                let mut chosen = chosen.to_vec();
                chosen.sort_unstable();
                pairs = chosen;
            }
        }
        out.extend(pairs);
    }
    out
}

/// Time window `[start, end]` and the user count that offsets the end-of-window block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemporalSpec {
    pub start: i64,
    pub end: i64,
    pub num_users: u32,
}

impl TemporalSpec {
    pub fn new(start: i64, end: i64, num_users: u32) -> Result<Self> {
        if end <= start {
            return Err(Error::Feature(format!(
                "empty time window [{start}, {end}]"
            )));
        }
        Ok(TemporalSpec {
            start,
            end,
            num_users,
        })
    }

    /// Window spanning every timestamp in `records`.
    pub fn covering(records: &[RatingRecord], num_users: u32) -> Result<Self> {
        let ts = records.iter().filter_map(|r| r.timestamp);
        let start = ts
            .clone()
            .min()
            .ok_or_else(|| Error::Feature("no timestamps".into()))?;
        let end = ts.max().unwrap_or(start);
        Self::new(start, end, num_users)
    }

    /// Weights `((e - t)/(e - s), (t - s)/(e - s))` of the start and end blocks.
    pub fn weights(&self, t: i64) -> (f64, f64) {
        let span = (self.end - self.start) as f64;
        ((self.end - t) as f64 / span, (t - self.start) as f64 / span)
    }
}

/// Linear interpolation between a start-of-window and an end-of-window user
/// profile: `α = u:(e-t)/(e-s), (u+n):(t-s)/(e-s)`.
pub fn build_temporal(
    record: &RatingRecord,
    spec: &TemporalSpec,
    ids: IdSpace,
) -> Result<Instance> {
    ids.check(record.user, record.item)?;
    if record.user >= spec.num_users {
        return Err(Error::Feature(format!(
            "user {} outside temporal layout",
            record.user
        )));
    }
    let t = record.timestamp.ok_or_else(|| {
        Error::Feature(format!(
            "rating ({}, {}) has no timestamp",
            record.user, record.item
        ))
    })?;
    if t < spec.start || t > spec.end {
        return Err(Error::Feature(format!(
            "timestamp {t} outside [{}, {}]",
            spec.start, spec.end
        )));
    }
    let (w_start, w_end) = spec.weights(t);
    Ok(Instance::new(
        record.rating,
        SparseVector::new(),
        sparse(vec![
            (record.user, w_start),
            (record.user + spec.num_users, w_end),
        ])?,
        SparseVector::one_hot(record.item),
    ))
}

/// Per-user rated sets `R(u)` and mean ratings `b̄_u`, from a training split.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserHistory {
    rated: HashMap<u32, Vec<(u32, f64)>>,
    mean: HashMap<u32, f64>,
}

impl UserHistory {
    pub fn from_ratings(train: &[RatingRecord]) -> Self {
        let mut rated: HashMap<u32, Vec<(u32, f64)>> = HashMap::new();
        for r in train {
            rated.entry(r.user).or_default().push((r.item, r.rating));
        }
        let mut mean = HashMap::new();
        for (u, items) in rated.iter_mut() {
            items.sort_by_key(|&(i, _)| i);
            items.dedup_by_key(|&mut (i, _)| i);
            mean.insert(
                *u,
                items.iter().map(|&(_, r)| r).sum::<f64>() / items.len() as f64,
            );
        }
        UserHistory { rated, mean }
    }

    pub fn rated(&self, user: u32) -> &[(u32, f64)] {
        self.rated.get(&user).map_or(&[], Vec::as_slice)
    }

    pub fn mean(&self, user: u32) -> Option<f64> {
        self.mean.get(&user).copied()
    }
}

/// Item pairs `(i, j)` carrying a trained weight `s_ij`, with their global-feature slots.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborhoodSpec {
    history: UserHistory,
    slots: HashMap<(u32, u32), u32>,
}

impl NeighborhoodSpec {
    /// Candidate pairs are ordered pairs of distinct items co-rated by at least
    /// `min_support` users; slots are assigned in `(i, j)` order.
    pub fn from_ratings(train: &[RatingRecord], min_support: usize) -> Self {
        let history = UserHistory::from_ratings(train);
        let mut support: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        for items in history.rated.values() {
            for &(i, _) in items {
                for &(j, _) in items {
                    if i != j {
                        *support.entry((i, j)).or_default() += 1;
                    }
                }
            }
        }
        let slots = support
            .into_iter()
            .filter(|&(_, c)| c >= min_support.max(1))
            .enumerate()
            .map(|(slot, (pair, _))| (pair, slot as u32))
            .collect();
        NeighborhoodSpec { history, slots }
    }

    pub fn with_slots(history: UserHistory, slots: HashMap<(u32, u32), u32>) -> Self {
        NeighborhoodSpec { history, slots }
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, i: u32, j: u32) -> Option<u32> {
        self.slots.get(&(i, j)).copied()
    }

    pub fn history(&self) -> &UserHistory {
        &self.history
    }
}

/// Basic instance plus `γ_slot(i,j) = (r_uj - b̄_u) / √|R(u)|` for every `j ∈ R(u)`
/// with a candidate pair. The target item is excluded from its own `R(u)`.
pub fn build_neighborhood(
    record: &RatingRecord,
    spec: &NeighborhoodSpec,
    ids: IdSpace,
) -> Result<Instance> {
    let mut inst = build_basic(record, ids)?;
    let mean = spec
        .history
        .mean(record.user)
        .ok_or_else(|| Error::Feature(format!("no mean rating for user {}", record.user)))?;
    let others: Vec<(u32, f64)> = spec
        .history
        .rated(record.user)
        .iter()
        .copied()
        .filter(|&(j, _)| j != record.item)
        .collect();
    if !others.is_empty() {
        let norm = 1.0 / (others.len() as f64).sqrt();
        let entries = others
            .iter()
            .filter_map(|&(j, r)| spec.slot(record.item, j).map(|s| (s, (r - mean) * norm)))
            .collect();
        inst.global = sparse(entries)?;
    }
    Ok(inst)
}

/// Track and artist share the item side: `β = t:1, (num_tracks + a):1`.
pub fn build_hierarchical(
    record: &RatingRecord,
    taxonomy: &Taxonomy,
    num_tracks: u32,
    ids: IdSpace,
) -> Result<Instance> {
    ids.check(record.user, record.item)?;
    if record.item >= num_tracks {
        return Err(Error::Feature(format!(
            "track {} out of range ({num_tracks} tracks)",
            record.item
        )));
    }
    let artist = taxonomy
        .artist(record.item)
        .ok_or_else(|| Error::Feature(format!("track {} missing from taxonomy", record.item)))?;
    Ok(Instance::new(
        record.rating,
        SparseVector::new(),
        SparseVector::one_hot(record.user),
        sparse(vec![(record.item, 1.0), (num_tracks + artist, 1.0)])?,
    ))
}

/// Implicit or explicit feedback features taken from a training history.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackSpec {
    pub history: UserHistory,
    pub explicit: bool,
    /// First user-feature index of the feedback block; item `j` maps to `start + j`.
    pub start: u32,
}

impl FeedbackSpec {
    /// `1/√|R(u)|` (implicit) or `(r_uj - b̄_u)/√|R(u)|` (explicit) for each `j ∈ R(u)`.
    pub fn features(&self, user: u32) -> Result<Vec<(u32, f64)>> {
        let rated = self.history.rated(user);
        if rated.is_empty() {
            return Ok(Vec::new());
        }
        let norm = 1.0 / (rated.len() as f64).sqrt();
        let mean = self.history.mean(user).unwrap_or(0.0);
        rated
            .iter()
            .map(|&(j, r)| {
                let index = self.start.checked_add(j).ok_or_else(|| {
                    Error::Feature(format!("feedback index overflow for item {j}"))
                })?;
                let value = if self.explicit {
                    (r - mean) * norm
                } else {
                    norm
                };
                Ok((index, value))
            })
            .collect()
    }

    pub fn end(&self, ids: IdSpace) -> u32 {
        self.start + ids.num_items
    }
}

/// Basic instances with each user's feedback set appended to `α`. The output is
/// grouped by user (stable within a user), and all instances of a user carry
/// the same feedback entries.
pub fn build_feedback(
    records: &[RatingRecord],
    spec: &FeedbackSpec,
    ids: IdSpace,
) -> Result<Vec<Instance>> {
    if ids.num_users > spec.start {
        return Err(Error::Feature(format!(
            "identity features 0..{} overlap feedback features starting at {}",
            ids.num_users, spec.start
        )));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&n| records[n].user);
    let mut cache: HashMap<u32, Vec<(u32, f64)>> = HashMap::new();
    let mut out = Vec::with_capacity(records.len());
    for n in order {
        let r = &records[n];
        ids.check(r.user, r.item)?;
        let feedback = match cache.entry(r.user) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(spec.features(r.user)?),
        };
        let mut user = vec![(r.user, 1.0)];
        user.extend_from_slice(feedback);
        out.push(Instance::new(
            r.rating,
            SparseVector::new(),
            sparse(user)?,
            SparseVector::one_hot(r.item),
        ));
    }
    Ok(out)
}
