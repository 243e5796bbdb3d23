//! The "musical moments" dataset: one row per Year-Month-Day-Hour interval in
//! which the listener played at least one track with known audio features.
//!
//! Each row carries the interval's tag strengths over a fixed vocabulary,
//! normalized to sum to 100, and the mean of the played tracks' features.

mod io;

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use io::{read_dataset, write_dataset, FEATURES_FILE, TAGS_FILE};

use crate::error::{Error, Result};
use crate::ingestion::{Cache, TrackRecord};
use crate::types::{
    moment_key_of, Feature, FeatureRow, MomentKey, MomentSample, Scrobble, TagAssignment, TagVocabulary,
    TzOffset,
};

pub const DEFAULT_VOCABULARY_SIZE: usize = 1000;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.67;
/// Tolerance on the row-sum invariant.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentsDataset {
    pub vocabulary: TagVocabulary,
    /// Ascending by key, no duplicates.
    pub samples: Vec<MomentSample>,
    pub target_feature: Feature,
}

impl MomentsDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Model inputs and targets, without the time index. Degenerate
    /// (tagless) moments are left out.
    pub fn training_data(&self) -> (Vec<&[f64]>, Vec<f64>) {
        self.samples
            .iter()
            .filter(|s| !s.degenerate)
            .map(|s| (s.tag_strengths.as_slice(), s.features.get(self.target_feature)))
            .unzip()
    }

    /// Checks ordering, row width and the row-sum invariant.
    pub fn validate(&self) -> Result<()> {
        for pair in self.samples.windows(2) {
            if pair[0].key >= pair[1].key {
                return Err(Error::invalid(
                    "dataset",
                    format!("keys not strictly ascending at {}", pair[1].key),
                ));
            }
        }
        for s in &self.samples {
            if s.tag_strengths.len() != self.vocabulary.len() {
                return Err(Error::invalid(
                    "dataset",
                    format!(
                        "{}: {} strengths for {} tags",
                        s.key,
                        s.tag_strengths.len(),
                        self.vocabulary.len()
                    ),
                ));
            }
            let sum: f64 = s.tag_strengths.iter().sum();
            let ok = if s.degenerate {
                s.tag_strengths.iter().all(|&v| v == 0.0)
            } else {
                s.tag_strengths.iter().all(|&v| v >= 0.0) && (sum - 100.0).abs() <= ROW_SUM_TOLERANCE
            };
            if !ok {
                return Err(Error::invalid("dataset", format!("{}: row sums to {sum}", s.key)));
            }
        }
        Ok(())
    }
}

/// Picks the `k` tags with the largest weighted appearance sum. Each item of
/// `playback_tags` is the tag list of one playback, so a track played n
/// times contributes its counts n times. Ties break lexicographically.
pub fn select_top_tags<'a, I>(playback_tags: I, k: usize) -> Result<TagVocabulary>
where
    I: IntoIterator<Item = &'a [TagAssignment]>,
{
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    let mut scores: HashMap<&str, u64> = HashMap::new();
    for tags in playback_tags {
        for t in tags {
            *scores.entry(t.tag.as_str()).or_default() += u64::from(t.count);
        }
    }
    if scores.is_empty() {
        return Err(Error::EmptyTagUniverse);
    }
    let mut ranked: Vec<(&str, u64)> = scores.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(k);
    TagVocabulary::new(ranked.into_iter().map(|(t, _)| t.to_owned()).collect())
}

/// Per-tag sum of counts over every appearance in one interval.
/// Tags outside the vocabulary are ignored.
pub fn aggregate_tag_strengths<'a, I>(interval_tags: I, vocabulary: &TagVocabulary) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [TagAssignment]>,
{
    let mut raw = vec![0.0; vocabulary.len()];
    for tags in interval_tags {
        for t in tags {
            if let Some(i) = vocabulary.position(&t.tag) {
                raw[i] += f64::from(t.count);
            }
        }
    }
    raw
}

/// Scales `raw` to sum to 100. A zero vector stays zero and is reported as
/// degenerate (`true`).
pub fn normalize_moment(raw: &[f64]) -> (Vec<f64>, bool) {
    debug_assert!(raw.iter().all(|&v| v >= 0.0), "negative strength");
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        (raw.iter().map(|&v| 100.0 * v / total).collect(), false)
    } else {
        (vec![0.0; raw.len()], true)
    }
}

/// Arithmetic mean of each feature. `None` for an empty interval.
pub fn aggregate_features<'a, I>(rows: I) -> Option<FeatureRow>
where
    I: IntoIterator<Item = &'a FeatureRow>,
{
    let mut sum = [0.0; 12];
    let mut n = 0usize;
    for row in rows {
        for (acc, v) in sum.iter_mut().zip(row.0) {
            *acc += v;
        }
        n += 1;
    }
    (n > 0).then(|| FeatureRow(sum.map(|s| s / n as f64)))
}

/// Builds the dataset from everything in an ingest cache.
pub fn build_dataset(cache: &Cache, k: usize, tz: TzOffset) -> Result<MomentsDataset> {
    let scrobbles = cache.scrobbles();
    if scrobbles.is_empty() {
        return Err(Error::EmptyCache(cache.dir().to_path_buf()));
    }
    build_from_records(&scrobbles, &cache.tracks(), k, tz)
}

/// Builds the dataset from in-memory playbacks and track records. Playbacks
/// of tracks without audio features are dropped before anything else,
/// vocabulary selection included.
pub fn build_from_records(
    scrobbles: &[Scrobble],
    tracks: &[TrackRecord],
    k: usize,
    tz: TzOffset,
) -> Result<MomentsDataset> {
    let by_key: HashMap<&str, (&[TagAssignment], FeatureRow)> = tracks
        .iter()
        .filter_map(|t| Some((t.track_key.as_str(), (t.tags.as_slice(), t.features?.to_row()))))
        .collect();

    let mut intervals: BTreeMap<MomentKey, Vec<(&[TagAssignment], FeatureRow)>> = BTreeMap::new();
    for s in scrobbles {
        if let Some(&entry) = by_key.get(s.track_key.as_str()) {
            intervals.entry(moment_key_of(s.played_at, tz)).or_default().push(entry);
        }
    }
    if intervals.is_empty() {
        return Err(Error::EmptyTagUniverse);
    }

    let vocabulary = select_top_tags(intervals.values().flatten().map(|(tags, _)| *tags), k)?;

    let intervals: Vec<_> = intervals.into_iter().collect();
    let samples: Vec<MomentSample> = intervals
        .par_iter()
        .map(|(key, plays)| {
            let raw = aggregate_tag_strengths(plays.iter().map(|(tags, _)| *tags), &vocabulary);
            let (tag_strengths, degenerate) = normalize_moment(&raw);
            let features = aggregate_features(plays.iter().map(|(_, f)| f))
                .expect("intervals hold at least one featured play");
            MomentSample { key: *key, tag_strengths, features, degenerate }
        })
        .collect();

    Ok(MomentsDataset { vocabulary, samples, target_feature: Feature::Danceability })
}

/// Seeded uniform partition into `(train, test)`. The test side gets
/// `ceil((1 - train_fraction) * n)` samples; both keep ascending key order.
pub fn split_dataset(
    dataset: &MomentsDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(MomentsDataset, MomentsDataset)> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::invalid("train_fraction", format!("{train_fraction} outside (0, 1]")));
    }
    let n = dataset.samples.len();
    let n_test = (((1.0 - train_fraction) * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test_idx, train_idx) = order.split_at(n_test.min(n));
    let pick = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        MomentsDataset {
            vocabulary: dataset.vocabulary.clone(),
            samples: idx.iter().map(|&i| dataset.samples[i].clone()).collect(),
            target_feature: dataset.target_feature,
        }
    };
    Ok((pick(train_idx), pick(test_idx)))
}
