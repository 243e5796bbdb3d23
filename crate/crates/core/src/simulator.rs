//! Synthetic single-listener histories with known hour → tag → feature
//! structure.
//!
//! Each regime owns a set of hours, a tag pool and a normal distribution for
//! the target feature. Tracks are drawn per regime and played at uniformly
//! random instants inside the regime's hours. Two "indicator" tags mark
//! whether a track sits above or below its regime mean, with the meaning
//! swapped between regimes that set `flip_indicator`: a tree can use them
//! once it knows the regime, a single linear weight cannot.
//!
//! The output is a fixture directory readable by
//! [`FixtureSource`](crate::ingestion::FixtureSource).

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::cache::{FeaturesLine, ScrobbleLine, TagLineEntry, TagsLine};
use crate::ingestion::EntityKind;
use crate::types::{track_key, Feature, RawAudioFeatures, TagSource};

/// Half-open hour range `[start, end)`; wraps past midnight when
/// `start > end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HourRange {
    pub start: u32,
    pub end: u32,
}

impl HourRange {
    pub fn hours(&self) -> Vec<u32> {
        if self.start <= self.end {
            (self.start..self.end).collect()
        } else {
            (self.start..24).chain(0..self.end).collect()
        }
    }

    pub fn contains(&self, hour: u32) -> bool {
        self.hours().contains(&hour)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolTag {
    pub tag: String,
    /// Inclusive count range; each track draws uniformly from it.
    pub count: [u8; 2],
    /// Chance that a track carries the tag at all.
    #[serde(default = "one")]
    pub probability: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetDistribution {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub name: String,
    pub hours: HourRange,
    pub tags: Vec<PoolTag>,
    pub target: TargetDistribution,
    #[serde(default)]
    pub flip_indicator: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListenerSpec {
    pub seed: u64,
    pub plays_total: usize,
    pub tracks_per_regime: usize,
    #[serde(default = "default_target")]
    pub target_feature: Feature,
    /// First day of the history, `YYYY-MM-DD` (UTC).
    #[serde(default = "default_start")]
    pub start_date: String,
    #[serde(default = "default_days")]
    pub days: u32,
    pub regimes: Vec<Regime>,
    /// `[above, below]` the regime mean; swapped in flipped regimes.
    #[serde(default)]
    pub indicator_tags: Option<[String; 2]>,
    #[serde(default = "default_indicator_count")]
    pub indicator_count: [u8; 2],
    /// Regime-independent tags carrying no signal.
    #[serde(default)]
    pub noise_tags: Vec<PoolTag>,
}

fn default_target() -> Feature {
    Feature::Danceability
}

fn default_start() -> String {
    "2018-01-01".to_owned()
}

fn default_days() -> u32 {
    4 * 365
}

fn default_indicator_count() -> [u8; 2] {
    [50, 100]
}

fn pool(tags: &[(&str, u8, u8, f64)]) -> Vec<PoolTag> {
    tags.iter()
        .map(|&(tag, lo, hi, probability)| PoolTag { tag: tag.to_owned(), count: [lo, hi], probability })
        .collect()
}

impl Default for ListenerSpec {
    /// Night (22–06) listening is relaxed and ambient around danceability
    /// 0.35; day (08–20) listening is electronic dance music around 0.75.
    fn default() -> Self {
        Self {
            seed: 7,
            plays_total: 15_000,
            tracks_per_regime: 400,
            target_feature: Feature::Danceability,
            start_date: default_start(),
            days: default_days(),
            regimes: vec![
                Regime {
                    name: "night".into(),
                    hours: HourRange { start: 22, end: 6 },
                    tags: pool(&[("relaxing", 40, 100, 1.0), ("ambient", 40, 100, 1.0)]),
                    target: TargetDistribution { mean: 0.35, std: 0.05 },
                    flip_indicator: true,
                },
                Regime {
                    name: "day".into(),
                    hours: HourRange { start: 8, end: 20 },
                    tags: pool(&[("electronic", 40, 100, 1.0), ("dance", 40, 100, 1.0)]),
                    target: TargetDistribution { mean: 0.75, std: 0.05 },
                    flip_indicator: false,
                },
            ],
            indicator_tags: Some(["groovy".into(), "mellow".into()]),
            indicator_count: default_indicator_count(),
            noise_tags: pool(&[
                ("seen live", 1, 60, 0.3),
                ("favorites", 1, 40, 0.2),
                ("female vocalists", 1, 80, 0.25),
                ("00s", 1, 50, 0.2),
            ]),
        }
    }
}

impl ListenerSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn start_instant(&self) -> Result<i64> {
        let date = NaiveDate::parse_from_str(&self.start_date, "%Y-%m-%d")
            .map_err(|e| Error::invalid("start_date", e.to_string()))?;
        Ok(date.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp())
    }

    pub fn validate(&self) -> Result<()> {
        if self.start_instant()? <= 0 {
            return Err(Error::invalid("start_date", "must be after 1970-01-01"));
        }
        if self.days == 0 {
            return Err(Error::invalid("days", "must be >= 1"));
        }
        if self.regimes.is_empty() {
            return Err(Error::invalid("regimes", "empty"));
        }
        if self.plays_total > 0 && self.tracks_per_regime == 0 {
            return Err(Error::invalid("tracks_per_regime", "must be >= 1 when plays_total > 0"));
        }
        let mut owner = [None::<&str>; 24];
        for r in &self.regimes {
            let HourRange { start, end } = r.hours;
            if start > 23 || end > 24 || start == end {
                return Err(Error::invalid("hours", format!("{}: bad range {start}..{end}", r.name)));
            }
            for h in r.hours.hours() {
                if let Some(other) = owner[h as usize] {
                    return Err(Error::invalid("hours", format!("hour {h} in both {other} and {}", r.name)));
                }
                owner[h as usize] = Some(&r.name);
            }
            if !(r.target.std >= 0.0 && r.target.std.is_finite() && r.target.mean.is_finite()) {
                return Err(Error::invalid("target", format!("{}: bad distribution", r.name)));
            }
        }
        let [lo, hi] = self.indicator_count;
        let all_pools = self.regimes.iter().flat_map(|r| &r.tags).chain(&self.noise_tags);
        for t in all_pools {
            let [a, b] = t.count;
            if t.tag.trim().is_empty() || a > b || b > 100 || !(0.0..=1.0).contains(&t.probability) {
                return Err(Error::invalid("tags", format!("bad pool entry {:?}", t.tag)));
            }
        }
        if lo > hi || hi > 100 {
            return Err(Error::invalid("indicator_count", "bad range"));
        }
        Ok(())
    }

    /// The regime that owns `hour`, if any.
    pub fn regime_at(&self, hour: u32) -> Option<&Regime> {
        self.regimes.iter().find(|r| r.hours.contains(hour))
    }
}

/// Generated fixture content, one entry per line of each file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub scrobbles: Vec<ScrobbleLine>,
    pub tags: Vec<TagsLine>,
    pub features: Vec<FeaturesLine>,
}

impl History {
    /// Writes `scrobbles.jsonl`, `tags.jsonl` and `features.jsonl`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_lines(&dir.join(EntityKind::Scrobbles.file_name()), &self.scrobbles)?;
        write_lines(&dir.join(EntityKind::Tags.file_name()), &self.tags)?;
        write_lines(&dir.join(EntityKind::Features.file_name()), &self.features)
    }
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

struct SimTrack {
    artist: String,
    name: String,
    tags: Vec<TagLineEntry>,
    features: RawAudioFeatures,
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

fn draw_count(rng: &mut ChaCha8Rng, [lo, hi]: [u8; 2]) -> i64 {
    i64::from(rng.random_range(lo..=hi))
}

fn draw_pool(rng: &mut ChaCha8Rng, pool: &[PoolTag], out: &mut Vec<TagLineEntry>) {
    for t in pool {
        // Always draw so the stream does not depend on the probability.
        let roll: f64 = rng.random();
        let count = draw_count(rng, t.count);
        if roll < t.probability {
            out.push(TagLineEntry { tag: t.tag.clone(), count, source: Some(TagSource::Track) });
        }
    }
}

fn make_track(spec: &ListenerSpec, regime: &Regime, i: usize, rng: &mut ChaCha8Rng) -> SimTrack {
    let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    let target = spec.target_feature.clamp(round4(regime.target.mean + regime.target.std * z));

    let mut tags = Vec::new();
    draw_pool(rng, &regime.tags, &mut tags);
    let indicator_count = draw_count(rng, spec.indicator_count);
    if let Some([above, below]) = &spec.indicator_tags {
        let high = z > 0.0;
        let tag = if high != regime.flip_indicator { above } else { below };
        tags.push(TagLineEntry { tag: tag.clone(), count: indicator_count, source: Some(TagSource::Track) });
    }
    draw_pool(rng, &spec.noise_tags, &mut tags);

    let mut values = [
        round4(rng.random::<f64>()),
        0.0,
        f64::from(rng.random_range(120_000u32..360_000)),
        round4(rng.random_range(0.1..0.95)),
        round4(rng.random::<f64>()),
        f64::from(rng.random_range(0u8..12)),
        round4(rng.random_range(0.02..0.4)),
        round4(rng.random_range(-20.0..-3.0)),
        f64::from(rng.random_range(0u8..2)),
        round4(rng.random_range(0.02..0.2)),
        round4(rng.random_range(70.0..170.0)),
        round4(rng.random::<f64>()),
    ];
    values[spec.target_feature.index()] = target;
    let [acousticness, danceability, duration_ms, energy, instrumentalness, key, liveness, loudness, mode, speechiness, tempo, valence] =
        values;

    let artists = (spec.tracks_per_regime / 4).max(1);
    SimTrack {
        artist: format!("{} artist {:03}", regime.name, i % artists),
        name: format!("{} track {:04}", regime.name, i),
        tags,
        features: RawAudioFeatures {
            acousticness,
            danceability,
            duration_ms,
            energy,
            instrumentalness,
            key,
            liveness,
            loudness,
            mode,
            speechiness,
            tempo,
            valence,
        },
    }
}

/// Generates a history. Same spec, same output.
pub fn generate_history(spec: &ListenerSpec) -> Result<History> {
    spec.validate()?;
    if spec.plays_total == 0 {
        return Ok(History::default());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let catalog: Vec<Vec<SimTrack>> = spec
        .regimes
        .iter()
        .map(|r| (0..spec.tracks_per_regime).map(|i| make_track(spec, r, i, &mut rng)).collect())
        .collect();

    // Every covered hour of the span is equally likely.
    let slots: Vec<(usize, u32)> = spec
        .regimes
        .iter()
        .enumerate()
        .flat_map(|(ri, r)| r.hours.hours().into_iter().map(move |h| (ri, h)))
        .collect();
    let start = spec.start_instant()?;
    let mut plays: Vec<(i64, usize, usize)> = (0..spec.plays_total)
        .map(|_| {
            let day = i64::from(rng.random_range(0..spec.days));
            let (ri, hour) = slots[rng.random_range(0..slots.len())];
            let second = rng.random_range(0..3600i64);
            let track = rng.random_range(0..spec.tracks_per_regime);
            (start + day * 86_400 + i64::from(hour) * 3600 + second, ri, track)
        })
        .collect();
    plays.sort_unstable();
    plays.dedup_by_key(|p| p.0);

    let mut played = vec![vec![false; spec.tracks_per_regime]; spec.regimes.len()];
    let scrobbles = plays
        .iter()
        .map(|&(ts, ri, ti)| {
            played[ri][ti] = true;
            let t = &catalog[ri][ti];
            ScrobbleLine { ts, artist: t.artist.clone(), track: t.name.clone(), mbid: None }
        })
        .collect();

    let mut history = History { scrobbles, ..History::default() };
    for (ri, tracks) in catalog.into_iter().enumerate() {
        for (ti, t) in tracks.into_iter().enumerate() {
            if !played[ri][ti] {
                continue;
            }
            let key = track_key(&t.artist, &t.name);
            history.tags.push(TagsLine { track_key: key.clone(), mbid: None, tags: t.tags });
            history.features.push(FeaturesLine { track_key: key, features: Some(t.features) });
        }
    }
    Ok(history)
}
