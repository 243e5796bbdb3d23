//! The four recommendation phases for one hour of the day:
//!
//! 1. average the tag strengths of every moment at that hour;
//! 2. feed that profile to the regressor to predict the target feature;
//! 3. rank library tracks by distance to the prediction;
//! 4. re-rank the top of that list, trading proximity for novelty.

mod library;
mod report;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use library::{Library, LibraryTrack, LIBRARY_FILE};
pub use report::{format_value, render_report};

use crate::dataset::MomentsDataset;
use crate::error::{Error, Result};
use crate::models::{ModelKind, TrainedRegressor};
use crate::types::{Feature, TagVocabulary};

pub const DEFAULT_K: usize = 20;
/// Tags listed in the phase-1 explanation.
pub const EXPLAINED_TAGS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourProfile {
    pub hour: u32,
    pub tag_strengths: Vec<f64>,
    /// Non-degenerate moments averaged; 0 when `fallback` is set.
    pub support: usize,
    /// No history at this hour: the profile is the mean over all hours.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagStrength {
    pub tag: String,
    pub strength: f64,
}

impl HourProfile {
    /// The `n` strongest non-zero tags, ties in vocabulary order.
    pub fn top_tags(&self, vocabulary: &TagVocabulary, n: usize) -> Vec<TagStrength> {
        let mut idx: Vec<usize> =
            (0..self.tag_strengths.len()).filter(|&i| self.tag_strengths[i] > 0.0).collect();
        idx.sort_by(|&a, &b| self.tag_strengths[b].total_cmp(&self.tag_strengths[a]).then(a.cmp(&b)));
        idx.into_iter()
            .take(n)
            .map(|i| TagStrength { tag: vocabulary.tags()[i].clone(), strength: self.tag_strengths[i] })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    /// Position in the final list, from 1.
    pub rank: usize,
    /// Position after phase 3, before re-ranking.
    pub base_rank: usize,
    pub track_key: String,
    pub track_name: String,
    pub artist_name: String,
    pub plays: u64,
    pub feature_value: f64,
    pub distance: f64,
    /// Phase-4 terms; zero until re-ranked.
    pub proximity: f64,
    pub novelty: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanations {
    pub phase1: String,
    pub phase2: String,
    pub phase3: String,
    pub phase4: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub hour: u32,
    pub target_feature: Feature,
    pub model_kind: ModelKind,
    pub k: usize,
    pub epsilon: f64,
    pub support: usize,
    pub fallback: bool,
    pub top_tags: Vec<TagStrength>,
    pub predicted_features: BTreeMap<Feature, f64>,
    pub recommendations: Vec<Recommendation>,
    pub explanations: Explanations,
}

impl PipelineResult {
    pub fn predicted(&self) -> f64 {
        self.predicted_features[&self.target_feature]
    }
}

fn check_hour(hour: u32) -> Result<()> {
    if hour > 23 {
        return Err(Error::invalid("hour", format!("{hour} outside 0..=23")));
    }
    Ok(())
}

pub fn hour_window(hour: u32) -> String {
    format!("{hour}:00-{}:00", hour + 1)
}

fn mean_rows<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize) -> (Vec<f64>, usize) {
    let mut sum = vec![0.0; width];
    let mut n = 0;
    for row in rows {
        for (s, v) in sum.iter_mut().zip(row) {
            *s += v;
        }
        n += 1;
    }
    if n > 0 {
        sum.iter_mut().for_each(|s| *s /= n as f64);
    }
    (sum, n)
}

/// Mean tag-strength row over the non-degenerate moments at `hour`.
pub fn phase1_tag_profile(dataset: &MomentsDataset, hour: u32) -> Result<HourProfile> {
    check_hour(hour)?;
    if dataset.is_empty() {
        return Err(Error::invalid("dataset", "no moments"));
    }
    let width = dataset.vocabulary.len();
    let usable = || dataset.samples.iter().filter(|s| !s.degenerate);
    let (strengths, support) =
        mean_rows(usable().filter(|s| s.key.hour() == hour).map(|s| s.tag_strengths.as_slice()), width);
    if support > 0 {
        return Ok(HourProfile { hour, tag_strengths: strengths, support, fallback: false });
    }
    let (strengths, _) = mean_rows(usable().map(|s| s.tag_strengths.as_slice()), width);
    Ok(HourProfile { hour, tag_strengths: strengths, support: 0, fallback: true })
}

/// Model prediction for a profile, clamped to the target's range.
pub fn phase2_predict(
    model: &TrainedRegressor,
    profile: &HourProfile,
    vocabulary: &TagVocabulary,
) -> Result<f64> {
    let mismatch = || Error::VocabularyMismatch {
        expected: model.vocabulary.as_ref().map_or(model.input_dim.unwrap_or(0), TagVocabulary::len),
        actual: vocabulary.len(),
    };
    if model.vocabulary.as_ref().is_some_and(|v| v != vocabulary)
        || model.input_dim.is_some_and(|d| d != vocabulary.len())
        || profile.tag_strengths.len() != vocabulary.len()
    {
        return Err(mismatch());
    }
    model.predict(&profile.tag_strengths)
}

/// The `k` candidates closest to `predicted` on `target`, ties by track key.
pub fn phase3_rank(
    candidates: &[LibraryTrack],
    predicted: f64,
    target: Feature,
    k: usize,
) -> Result<Vec<Recommendation>> {
    if candidates.is_empty() {
        return Err(Error::invalid("library", "no candidate tracks"));
    }
    if k == 0 {
        return Err(Error::invalid("k", "must be >= 1"));
    }
    let mut scored: Vec<(f64, &LibraryTrack)> =
        candidates.iter().map(|t| ((t.features.get(target) - predicted).abs(), t)).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.track_key.cmp(&b.1.track_key)));
    Ok(scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (distance, t))| Recommendation {
            rank: i + 1,
            base_rank: i + 1,
            track_key: t.track_key.clone(),
            track_name: t.track_name.clone(),
            artist_name: t.artist_name.clone(),
            plays: t.plays,
            feature_value: t.features.get(target),
            distance,
            proximity: 0.0,
            novelty: 0.0,
            score: 0.0,
        })
        .collect())
}

/// Re-ranks by `(1 − ε)·proximity + ε·novelty`, where
/// `proximity = 1 − distance / max distance` and
/// `novelty = 1 − plays / max plays`, both maxima taken over `recs`.
/// Equal scores keep their phase-3 order.
pub fn phase4_rerank(
    mut recs: Vec<Recommendation>,
    epsilon: f64,
    play_counts: &HashMap<String, u64>,
) -> Result<Vec<Recommendation>> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid("epsilon", format!("{epsilon} outside [0, 1]")));
    }
    let max_distance = recs.iter().map(|r| r.distance).fold(0.0, f64::max);
    for r in &mut recs {
        r.plays = play_counts.get(&r.track_key).copied().unwrap_or(0);
    }
    let max_plays = recs.iter().map(|r| r.plays).max().unwrap_or(0);
    for r in &mut recs {
        r.proximity = if max_distance > 0.0 { 1.0 - r.distance / max_distance } else { 1.0 };
        r.novelty = if max_plays > 0 { 1.0 - r.plays as f64 / max_plays as f64 } else { 1.0 };
        r.score = (1.0 - epsilon) * r.proximity + epsilon * r.novelty;
    }
    recs.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.base_rank.cmp(&b.base_rank)));
    for (i, r) in recs.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(recs)
}

/// Runs all four phases. Pure in its inputs: same artifacts and parameters,
/// same result.
pub fn run_pipeline(
    dataset: &MomentsDataset,
    model: &TrainedRegressor,
    library: &Library,
    hour: u32,
    k: usize,
    epsilon: f64,
) -> Result<PipelineResult> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid("epsilon", format!("{epsilon} outside [0, 1]")));
    }
    let target = model.target_feature;
    let profile = phase1_tag_profile(dataset, hour)?;
    let predicted = phase2_predict(model, &profile, &dataset.vocabulary)?;
    let ranked = phase3_rank(&library.tracks, predicted, target, k)?;
    let recommendations = phase4_rerank(ranked, epsilon, &library.play_counts())?;

    let top_tags = profile.top_tags(&dataset.vocabulary, EXPLAINED_TAGS);
    let explanations = Explanations {
        phase1: explain_phase1(&profile, &top_tags, dataset),
        phase2: format!(
            "The {} model maps this tag profile to {} {}.",
            model.kind(),
            target,
            format_value(predicted)
        ),
        phase3: explain_phase3(&recommendations, library.len(), target, predicted),
        phase4: explain_phase4(&recommendations, epsilon),
    };
    Ok(PipelineResult {
        hour,
        target_feature: target,
        model_kind: model.kind(),
        k,
        epsilon,
        support: profile.support,
        fallback: profile.fallback,
        top_tags,
        predicted_features: BTreeMap::from([(target, predicted)]),
        recommendations,
        explanations,
    })
}

fn explain_phase1(profile: &HourProfile, top: &[TagStrength], dataset: &MomentsDataset) -> String {
    let tags = top.iter().map(|t| format!("{} {:.6}", t.tag, t.strength)).collect::<Vec<_>>().join(", ");
    if profile.fallback {
        format!(
            "No listening history at {}; using the mean profile over all {} tagged moments instead. Top tags: {tags}.",
            hour_window(profile.hour),
            dataset.samples.iter().filter(|s| !s.degenerate).count()
        )
    } else {
        format!(
            "Mean tag strength over {} moment(s) at {}. Top tags: {tags}.",
            profile.support,
            hour_window(profile.hour)
        )
    }
}

fn explain_phase3(recs: &[Recommendation], library: usize, target: Feature, predicted: f64) -> String {
    let mut by_base: Vec<&Recommendation> = recs.iter().collect();
    by_base.sort_by_key(|r| r.base_rank);
    let (first, last) = (by_base[0], by_base[by_base.len() - 1]);
    format!(
        "{} of {library} library tracks closest to {target} {}; distances from {:.7} to {:.7}.",
        recs.len(),
        format_value(predicted),
        first.distance,
        last.distance
    )
}

fn explain_phase4(recs: &[Recommendation], epsilon: f64) -> String {
    let moved = recs.iter().filter(|r| r.rank != r.base_rank).count();
    format!(
        "score = {:.2} x proximity + {:.2} x novelty (epsilon {epsilon}); {moved} of {} tracks changed position.",
        1.0 - epsilon,
        epsilon,
        recs.len()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Parameters, MODEL_FORMAT, MODEL_VERSION};
    use crate::types::{AudioFeatures, FeatureRow, MomentKey, MomentSample};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn features(danceability: f64) -> AudioFeatures {
        AudioFeatures::from_values([
            0.1,
            danceability,
            200_000.0,
            0.5,
            0.0,
            5.0,
            0.1,
            -8.0,
            1.0,
            0.05,
            120.0,
            0.5,
        ])
        .unwrap()
    }

    fn track(key: &str, danceability: f64, plays: u64) -> LibraryTrack {
        LibraryTrack {
            track_key: key.to_owned(),
            track_name: key.to_uppercase(),
            artist_name: "artist".into(),
            mbid: None,
            plays,
            features: features(danceability),
        }
    }

    fn sample(hour: u32, day: u32, strengths: Vec<f64>) -> MomentSample {
        let degenerate = strengths.iter().all(|&v| v == 0.0);
        MomentSample {
            key: MomentKey::new(2022, 3, day, hour).unwrap(),
            tag_strengths: strengths,
            features: FeatureRow([0.5; 12]),
            degenerate,
        }
    }

    fn dataset(samples: Vec<MomentSample>) -> MomentsDataset {
        let mut samples = samples;
        samples.sort_by_key(|s| s.key);
        MomentsDataset {
            vocabulary: TagVocabulary::new(vec!["electronic".into(), "ambient".into()]).unwrap(),
            samples,
            target_feature: Feature::Danceability,
        }
    }

    fn ridge(weights: Vec<f64>, intercept: f64, vocabulary: Option<TagVocabulary>) -> TrainedRegressor {
        TrainedRegressor {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            target_feature: Feature::Danceability,
            seed: 0,
            train_rmse: 0.0,
            input_dim: Some(weights.len()),
            vocabulary,
            parameters: Parameters::Ridge { weights, intercept, lambda: 1.0 },
        }
    }

    fn rec(key: &str, distance: f64, rank: usize) -> Recommendation {
        Recommendation {
            rank,
            base_rank: rank,
            track_key: key.into(),
            track_name: key.into(),
            artist_name: "a".into(),
            plays: 0,
            feature_value: 0.0,
            distance,
            proximity: 0.0,
            novelty: 0.0,
            score: 0.0,
        }
    }

    #[test]
    fn profile_is_the_hour_mean() {
        let ds = dataset(vec![
            sample(19, 1, vec![60.0, 40.0]),
            sample(19, 2, vec![40.0, 60.0]),
            sample(19, 3, vec![0.0, 0.0]),
            sample(7, 1, vec![100.0, 0.0]),
        ]);
        let p = phase1_tag_profile(&ds, 19).unwrap();
        assert_eq!(p.tag_strengths, vec![50.0, 50.0]);
        assert_eq!(p.support, 2);
        assert!(!p.fallback);
        let single = phase1_tag_profile(&ds, 7).unwrap();
        assert_eq!(single.tag_strengths, vec![100.0, 0.0]);
        assert_eq!(single.top_tags(&ds.vocabulary, 10).len(), 1);
    }

    #[test]
    fn empty_hour_falls_back_to_global_mean() {
        let ds = dataset(vec![sample(19, 1, vec![60.0, 40.0]), sample(7, 1, vec![100.0, 0.0])]);
        let p = phase1_tag_profile(&ds, 3).unwrap();
        assert!(p.fallback);
        assert_eq!(p.support, 0);
        assert_eq!(p.tag_strengths, vec![80.0, 20.0]);
        assert!(phase1_tag_profile(&ds, 24).is_err());
    }

    #[test]
    fn identical_samples_profile_idempotently() {
        let row = vec![33.3, 66.7];
        let ds = dataset((1..=5).map(|d| sample(12, d, row.clone())).collect());
        assert_eq!(phase1_tag_profile(&ds, 12).unwrap().tag_strengths, row);
    }

    #[test]
    fn prediction_checks_vocabulary() {
        let ds = dataset(vec![sample(19, 1, vec![60.0, 40.0])]);
        let p = phase1_tag_profile(&ds, 19).unwrap();
        let m = ridge(vec![0.01, 0.0], 0.0, Some(ds.vocabulary.clone()));
        assert!((phase2_predict(&m, &p, &ds.vocabulary).unwrap() - 0.6).abs() < 1e-12);

        let other = TagVocabulary::new(vec!["ambient".into(), "electronic".into()]).unwrap();
        assert!(matches!(phase2_predict(&m, &p, &other), Err(Error::VocabularyMismatch { .. })));
        let wide = ridge(vec![0.01, 0.0, 0.0], 0.0, None);
        assert!(phase2_predict(&wide, &p, &ds.vocabulary).is_err());

        let constant = crate::models::train_baseline(&[0.5, 0.5], Feature::Danceability, 0).unwrap();
        assert_eq!(phase2_predict(&constant, &p, &ds.vocabulary).unwrap(), 0.5);
    }

    #[test]
    fn printed_distance_example() {
        let lib = vec![track("jeanette", 0.583, 1), track("far", 0.9, 1)];
        let recs = phase3_rank(&lib, 0.5833215, Feature::Danceability, 20).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].track_key, "jeanette");
        assert_eq!(recs[0].rank, 1);
        assert_eq!(format!("{:.7}", recs[0].distance), "0.0003215");

        let exact =
            phase3_rank(&[track("a", 0.5, 0), track("b", 0.6, 0)], 0.6, Feature::Danceability, 1).unwrap();
        assert_eq!(exact.len(), 1);
        assert_eq!((exact[0].track_key.as_str(), exact[0].distance), ("b", 0.0));
        assert!(phase3_rank(&[], 0.5, Feature::Danceability, 3).is_err());
    }

    #[test]
    fn ranking_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let n = rng.random_range(1..40);
            let lib: Vec<LibraryTrack> = (0..n)
                .map(|i| {
                    // Coarse values force ties.
                    let d = f64::from(rng.random_range(0..20u32)) / 20.0;
                    track(&format!("t{:02}", (i * 7) % 41), d, 0)
                })
                .collect();
            let predicted = rng.random::<f64>();
            let k = rng.random_range(1..50);
            let got = phase3_rank(&lib, predicted, Feature::Danceability, k).unwrap();

            // Oracle: the candidate set minus every better candidate, by
            // repeated selection of the minimum.
            let mut pool: Vec<&LibraryTrack> = lib.iter().collect();
            let mut expected = Vec::new();
            while !pool.is_empty() && expected.len() < k {
                let mut best = 0;
                for i in 1..pool.len() {
                    let di = (pool[i].features.danceability - predicted).abs();
                    let db = (pool[best].features.danceability - predicted).abs();
                    if di < db || (di == db && pool[i].track_key < pool[best].track_key) {
                        best = i;
                    }
                }
                expected.push(pool.remove(best).track_key.clone());
            }
            let keys: Vec<String> = got.iter().map(|r| r.track_key.clone()).collect();
            assert_eq!(keys, expected);
            for (i, r) in got.iter().enumerate() {
                assert_eq!(r.rank, i + 1);
                assert_eq!(r.distance, (r.feature_value - predicted).abs());
            }
        }
    }

    #[test]
    fn rerank_by_hand() {
        // Distances 0.0, 0.1, 0.2, 0.4 and plays 10, 0, 5, 2 at ε = 0.5:
        //   a: 0.5·1.00 + 0.5·0.0 = 0.500
        //   b: 0.5·0.75 + 0.5·1.0 = 0.875
        //   c: 0.5·0.50 + 0.5·0.5 = 0.500
        //   d: 0.5·0.00 + 0.5·0.8 = 0.400
        let recs = vec![rec("a", 0.0, 1), rec("b", 0.1, 2), rec("c", 0.2, 3), rec("d", 0.4, 4)];
        let plays = HashMap::from([
            ("a".to_owned(), 10),
            ("b".to_owned(), 0),
            ("c".to_owned(), 5),
            ("d".to_owned(), 2),
        ]);
        let out = phase4_rerank(recs, 0.5, &plays).unwrap();
        let order: Vec<&str> = out.iter().map(|r| r.track_key.as_str()).collect();
        assert_eq!(order, ["b", "a", "c", "d"]);
        let scores: Vec<f64> = out.iter().map(|r| r.score).collect();
        for (s, e) in scores.iter().zip([0.875, 0.5, 0.5, 0.4]) {
            assert!((s - e).abs() < 1e-12);
        }
        assert_eq!(out.iter().map(|r| r.rank).collect::<Vec<_>>(), [1, 2, 3, 4]);
        assert_eq!(out[0].base_rank, 2);
    }

    #[test]
    fn rerank_degenerate_maxima() {
        let recs = vec![rec("a", 0.0, 1), rec("b", 0.0, 2)];
        let out = phase4_rerank(recs, 0.3, &HashMap::new()).unwrap();
        assert!(out.iter().all(|r| r.proximity == 1.0 && r.novelty == 1.0 && r.score == 1.0));
        assert_eq!(out[0].track_key, "a");
        assert!(phase4_rerank(vec![], 1.5, &HashMap::new()).is_err());
        assert!(phase4_rerank(vec![], 0.5, &HashMap::new()).unwrap().is_empty());
    }

    fn arb_recs() -> impl Strategy<Value = (Vec<Recommendation>, HashMap<String, u64>)> {
        prop::collection::vec((0u32..50, 0u64..20), 1..30).prop_map(|items| {
            let mut d: Vec<(f64, u64)> = items.into_iter().map(|(d, p)| (f64::from(d) / 100.0, p)).collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0));
            let recs =
                d.iter().enumerate().map(|(i, (dist, _))| rec(&format!("t{i:02}"), *dist, i + 1)).collect();
            let plays = d.iter().enumerate().map(|(i, (_, p))| (format!("t{i:02}"), *p)).collect();
            (recs, plays)
        })
    }

    proptest! {
        #[test]
        fn rerank_contracts((recs, plays) in arb_recs(), eps in 0.0f64..=1.0) {
            let zero = phase4_rerank(recs.clone(), 0.0, &plays).unwrap();
            prop_assert_eq!(
                zero.iter().map(|r| &r.track_key).collect::<Vec<_>>(),
                recs.iter().map(|r| &r.track_key).collect::<Vec<_>>()
            );

            let one = phase4_rerank(recs.clone(), 1.0, &plays).unwrap();
            for w in one.windows(2) {
                prop_assert!(w[0].novelty >= w[1].novelty);
                if w[0].novelty == w[1].novelty {
                    prop_assert!(w[0].base_rank < w[1].base_rank);
                }
            }

            let any = phase4_rerank(recs.clone(), eps, &plays).unwrap();
            let mut a: Vec<_> = any.iter().map(|r| r.track_key.clone()).collect();
            let mut b: Vec<_> = recs.iter().map(|r| r.track_key.clone()).collect();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
    }

    fn three_track_world() -> (MomentsDataset, TrainedRegressor, Library) {
        let ds = dataset(vec![
            sample(19, 1, vec![60.0, 40.0]),
            sample(19, 2, vec![80.0, 20.0]),
            sample(8, 2, vec![10.0, 90.0]),
        ]);
        let model = ridge(vec![0.01, 0.0], 0.0, Some(ds.vocabulary.clone()));
        let lib = Library::new(vec![track("a", 0.72, 10), track("b", 0.65, 2), track("c", 0.70, 0)]).unwrap();
        (ds, model, lib)
    }

    #[test]
    fn three_track_hand_trace() {
        // Profile at 19 is (70, 30), so the prediction is 0.01·70 = 0.7.
        // Phase 3: c (0.00), a (0.02), b (0.05). With ε = 0.5:
        //   c: 0.5·1.0 + 0.5·1.0 = 1.0
        //   a: 0.5·0.6 + 0.5·0.0 = 0.3
        //   b: 0.5·0.0 + 0.5·0.8 = 0.4
        let (ds, model, lib) = three_track_world();
        let r = run_pipeline(&ds, &model, &lib, 19, 20, 0.5).unwrap();
        assert_eq!(r.support, 2);
        assert!((r.predicted() - 0.7).abs() < 1e-12);
        assert_eq!(r.top_tags[0], TagStrength { tag: "electronic".into(), strength: 70.0 });
        let order: Vec<(&str, usize)> =
            r.recommendations.iter().map(|x| (x.track_key.as_str(), x.base_rank)).collect();
        assert_eq!(order, [("c", 1), ("b", 3), ("a", 2)]);
        for (x, score) in r.recommendations.iter().zip([1.0, 0.4, 0.3]) {
            assert!((x.score - score).abs() < 1e-9, "{}: {}", x.track_key, x.score);
        }
        assert!(r.explanations.phase1.contains("2 moment(s) at 19:00-20:00"));
        assert!(r.explanations.phase2.contains("ridge"));
        assert!(r.explanations.phase4.contains("epsilon 0.5"));

        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["predicted_features"]["danceability"], serde_json::json!(r.predicted()));
        assert_eq!(json["model_kind"], "ridge");
    }

    #[test]
    fn pipeline_is_deterministic_and_validates() {
        let (ds, model, lib) = three_track_world();
        let a = run_pipeline(&ds, &model, &lib, 19, 2, 0.0).unwrap();
        assert_eq!(a, run_pipeline(&ds, &model, &lib, 19, 2, 0.0).unwrap());
        assert_eq!(a.recommendations.len(), 2);
        assert!(run_pipeline(&ds, &model, &lib, 24, 2, 0.0).is_err());
        assert!(run_pipeline(&ds, &model, &lib, 19, 0, 0.0).is_err());
        assert!(run_pipeline(&ds, &model, &lib, 19, 2, -0.1).is_err());
        assert!(run_pipeline(&ds, &model, &Library::default(), 19, 2, 0.0).is_err());
        let fallback = run_pipeline(&ds, &model, &lib, 3, 2, 0.0).unwrap();
        assert!(fallback.fallback);
        assert!(fallback.explanations.phase1.starts_with("No listening history at 3:00-4:00"));
    }
}
