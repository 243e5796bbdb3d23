//! Domain types shared by every stage: playbacks, tags, audio features and
//! the hourly "moment" keys that index the training data.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Latest accepted playback instant (year 9999), keeps calendar math total.
pub const MAX_INSTANT: i64 = 253_402_300_799;

/// Canonical identity of a track when no MBID is known: `"artist — title"`,
/// lowercased with inner whitespace collapsed.
pub fn track_key(artist: &str, track: &str) -> String {
    format!("{} — {}", normalize_name(artist), normalize_name(track))
}

pub(crate) fn normalize_name(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// One playback event.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scrobble {
    pub played_at: i64,
    pub track_name: String,
    pub artist_name: String,
    pub mbid: Option<String>,
    pub track_key: String,
}

impl Scrobble {
    pub fn new(played_at: i64, artist_name: &str, track_name: &str, mbid: Option<&str>) -> Result<Self> {
        if played_at <= 0 || played_at > MAX_INSTANT {
            return Err(Error::invalid("played_at", format!("{played_at} outside (0, {MAX_INSTANT}]")));
        }
        let track_name = track_name.trim();
        let artist_name = artist_name.trim();
        if track_name.is_empty() {
            return Err(Error::invalid("track_name", "empty"));
        }
        if artist_name.is_empty() {
            return Err(Error::invalid("artist_name", "empty"));
        }
        let mbid = mbid.map(str::trim).filter(|m| !m.is_empty());
        Ok(Self {
            played_at,
            track_key: track_key(artist_name, track_name),
            track_name: track_name.to_owned(),
            artist_name: artist_name.to_owned(),
            mbid: mbid.map(str::to_owned),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagSource {
    Track,
    Artist,
}

/// A folksonomy tag attached to a track, with its 0–100 strength.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTag")]
pub struct TagAssignment {
    pub tag: String,
    pub count: u8,
    pub source: TagSource,
}

#[derive(Deserialize)]
struct RawTag {
    tag: String,
    count: i64,
    source: TagSource,
}

impl TryFrom<RawTag> for TagAssignment {
    type Error = Error;

    fn try_from(raw: RawTag) -> Result<Self> {
        TagAssignment::new(&raw.tag, raw.count, raw.source)
    }
}

impl TagAssignment {
    pub fn new(tag: &str, count: i64, source: TagSource) -> Result<Self> {
        let tag = tag.trim().to_lowercase();
        if tag.is_empty() {
            return Err(Error::invalid("tag", "empty"));
        }
        if !(0..=100).contains(&count) {
            return Err(Error::invalid("count", format!("{count} outside 0..=100")));
        }
        Ok(Self { tag, count: count as u8, source })
    }
}

/// The twelve per-track audio descriptors, in file-column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Acousticness,
    Danceability,
    DurationMs,
    Energy,
    Instrumentalness,
    Key,
    Liveness,
    Loudness,
    Mode,
    Speechiness,
    Tempo,
    Valence,
}

impl Feature {
    pub const ALL: [Feature; 12] = [
        Feature::Acousticness,
        Feature::Danceability,
        Feature::DurationMs,
        Feature::Energy,
        Feature::Instrumentalness,
        Feature::Key,
        Feature::Liveness,
        Feature::Loudness,
        Feature::Mode,
        Feature::Speechiness,
        Feature::Tempo,
        Feature::Valence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Acousticness => "acousticness",
            Feature::Danceability => "danceability",
            Feature::DurationMs => "duration_ms",
            Feature::Energy => "energy",
            Feature::Instrumentalness => "instrumentalness",
            Feature::Key => "key",
            Feature::Liveness => "liveness",
            Feature::Loudness => "loudness",
            Feature::Mode => "mode",
            Feature::Speechiness => "speechiness",
            Feature::Tempo => "tempo",
            Feature::Valence => "valence",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Closed valid range. Unbounded maxima are `f64::INFINITY`.
    pub fn range(self) -> (f64, f64) {
        match self {
            Feature::Loudness => (-60.0, 0.0),
            Feature::Tempo | Feature::DurationMs => (0.0, f64::INFINITY),
            Feature::Key => (0.0, 11.0),
            _ => (0.0, 1.0),
        }
    }

    pub fn clamp(self, value: f64) -> f64 {
        let (lo, hi) = self.range();
        value.clamp(lo, hi)
    }

    /// `key` and `mode` are categorical; their moment means are kept but
    /// never used as regression targets.
    pub fn is_categorical(self) -> bool {
        matches!(self, Feature::Key | Feature::Mode)
    }

    pub fn display_name(self) -> String {
        let mut name = self.name().replace('_', " ");
        if let Some(first) = name.get_mut(0..1) {
            first.make_ascii_uppercase();
        }
        name
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid("feature", format!("unknown feature {s:?}")))
    }
}

/// Validated audio features of a single track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAudioFeatures")]
pub struct AudioFeatures {
    pub acousticness: f64,
    pub danceability: f64,
    pub duration_ms: u64,
    pub energy: f64,
    pub instrumentalness: f64,
    pub key: u8,
    pub liveness: f64,
    pub loudness: f64,
    pub mode: u8,
    pub speechiness: f64,
    pub tempo: f64,
    pub valence: f64,
}

/// Unvalidated feature record, as found in files and API payloads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawAudioFeatures {
    pub acousticness: f64,
    pub danceability: f64,
    pub duration_ms: f64,
    pub energy: f64,
    pub instrumentalness: f64,
    pub key: f64,
    pub liveness: f64,
    pub loudness: f64,
    pub mode: f64,
    pub speechiness: f64,
    pub tempo: f64,
    pub valence: f64,
}

impl TryFrom<RawAudioFeatures> for AudioFeatures {
    type Error = Error;

    fn try_from(raw: RawAudioFeatures) -> Result<Self> {
        AudioFeatures::from_values([
            raw.acousticness,
            raw.danceability,
            raw.duration_ms,
            raw.energy,
            raw.instrumentalness,
            raw.key,
            raw.liveness,
            raw.loudness,
            raw.mode,
            raw.speechiness,
            raw.tempo,
            raw.valence,
        ])
    }
}

impl AudioFeatures {
    /// Builds features from values in [`Feature::ALL`] order, rejecting any
    /// value outside its documented range.
    pub fn from_values(values: [f64; 12]) -> Result<Self> {
        for (feature, &v) in Feature::ALL.iter().zip(&values) {
            let (lo, hi) = feature.range();
            let ok = match feature {
                Feature::Tempo | Feature::DurationMs => v.is_finite() && v > 0.0,
                Feature::Key => v.fract() == 0.0 && (lo..=hi).contains(&v),
                Feature::Mode => v == 0.0 || v == 1.0,
                _ => v.is_finite() && (lo..=hi).contains(&v),
            };
            if !ok {
                return Err(Error::invalid("audio feature", format!("{feature} = {v} out of range")));
            }
        }
        if values[Feature::DurationMs.index()].fract() != 0.0 {
            return Err(Error::invalid("audio feature", "duration_ms must be whole"));
        }
        Ok(Self {
            acousticness: values[0],
            danceability: values[1],
            duration_ms: values[2] as u64,
            energy: values[3],
            instrumentalness: values[4],
            key: values[5] as u8,
            liveness: values[6],
            loudness: values[7],
            mode: values[8] as u8,
            speechiness: values[9],
            tempo: values[10],
            valence: values[11],
        })
    }

    pub fn get(&self, feature: Feature) -> f64 {
        self.to_row().get(feature)
    }

    pub fn to_row(&self) -> FeatureRow {
        FeatureRow([
            self.acousticness,
            self.danceability,
            self.duration_ms as f64,
            self.energy,
            self.instrumentalness,
            self.key as f64,
            self.liveness,
            self.loudness,
            self.mode as f64,
            self.speechiness,
            self.tempo,
            self.valence,
        ])
    }
}

/// Real-valued feature vector in [`Feature::ALL`] order. Used for moment
/// aggregates, where `key` and `mode` become means.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureRow(pub [f64; 12]);

impl FeatureRow {
    pub fn get(&self, feature: Feature) -> f64 {
        self.0[feature.index()]
    }
}

/// Minutes east of UTC, bounded to ±14h.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TzOffset(i32);

impl TzOffset {
    pub const UTC: TzOffset = TzOffset(0);

    pub fn minutes(minutes: i32) -> Result<Self> {
        if minutes.abs() > 840 {
            return Err(Error::invalid("tz_offset", format!("{minutes} minutes exceeds ±840")));
        }
        Ok(Self(minutes))
    }

    pub fn as_minutes(self) -> i32 {
        self.0
    }
}

/// A Year-Month-Day-Hour interval. Text form is `YYYY-MM-DDTHH`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MomentKey {
    year: i32,
    month: u8,
    day: u8,
    hour: u8,
}

impl MomentKey {
    pub fn new(year: i32, month: u32, day: u32, hour: u32) -> Result<Self> {
        if !(0..=9999).contains(&year) || NaiveDate::from_ymd_opt(year, month, day).is_none() {
            return Err(Error::invalid(
                "moment key",
                format!("{year:04}-{month:02}-{day:02} is not a calendar date"),
            ));
        }
        if hour > 23 {
            return Err(Error::invalid("moment key", format!("hour {hour} > 23")));
        }
        Ok(Self { year, month: month as u8, day: day as u8, hour: hour as u8 })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u32 {
        self.month as u32
    }

    pub fn day(&self) -> u32 {
        self.day as u32
    }

    pub fn hour(&self) -> u32 {
        self.hour as u32
    }
}

impl fmt::Display for MomentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}T{:02}", self.year, self.month, self.day, self.hour)
    }
}

impl FromStr for MomentKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid("moment key", format!("{s:?} is not YYYY-MM-DDTHH"));
        let b = s.as_bytes();
        if b.len() != 13 || b[4] != b'-' || b[7] != b'-' || b[10] != b'T' {
            return Err(bad());
        }
        let num = |range: std::ops::Range<usize>| -> Result<u32> {
            let part = &s[range];
            if !part.bytes().all(|c| c.is_ascii_digit()) {
                return Err(bad());
            }
            part.parse().map_err(|_| bad())
        };
        MomentKey::new(num(0..4)? as i32, num(5..7)?, num(8..10)?, num(11..13)?)
    }
}

impl Serialize for MomentKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MomentKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Calendar hour containing `instant` (seconds since the Unix epoch) once
/// shifted by `tz`.
///
/// Panics if `instant` is outside `[-MAX_INSTANT, MAX_INSTANT]`.
pub fn moment_key_of(instant: i64, tz: TzOffset) -> MomentKey {
    assert!(instant.abs() <= MAX_INSTANT, "instant {instant} out of supported range");
    let shifted = instant + i64::from(tz.as_minutes()) * 60;
    let dt = DateTime::from_timestamp(shifted, 0).expect("instant within chrono range");
    MomentKey { year: dt.year(), month: dt.month() as u8, day: dt.day() as u8, hour: dt.hour() as u8 }
}

/// Ordered tag list used as the column space of every moment row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagVocabulary {
    tags: Vec<String>,
    index: HashMap<String, usize>,
}

impl TagVocabulary {
    pub fn new(tags: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tags.len());
        for (i, tag) in tags.iter().enumerate() {
            if tag.is_empty() {
                return Err(Error::invalid("vocabulary", "empty tag"));
            }
            if index.insert(tag.clone(), i).is_some() {
                return Err(Error::invalid("vocabulary", format!("duplicate tag {tag:?}")));
            }
        }
        Ok(Self { tags, index })
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn position(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }
}

impl Serialize for TagVocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.tags.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TagVocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tags = Vec::<String>::deserialize(d)?;
        TagVocabulary::new(tags).map_err(serde::de::Error::custom)
    }
}

/// One hourly training row.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSample {
    pub key: MomentKey,
    /// Normalized to sum to 100, or all zero when `degenerate`.
    pub tag_strengths: Vec<f64>,
    pub features: FeatureRow,
    /// Plays exist in the interval but none carried a vocabulary tag.
    pub degenerate: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn utc(y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32) -> i64 {
        NaiveDate::from_ymd_opt(y, mo, d).unwrap().and_hms_opt(h, mi, s).unwrap().and_utc().timestamp()
    }

    #[test]
    fn moment_key_examples() {
        let k = moment_key_of(utc(2022, 3, 28, 17, 45, 12), TzOffset::UTC);
        assert_eq!(k.to_string(), "2022-03-28T17");
        assert_eq!(moment_key_of(0, TzOffset::UTC).to_string(), "1970-01-01T00");
        let west = TzOffset::minutes(-60).unwrap();
        let k = moment_key_of(utc(2022, 1, 1, 0, 30, 0), west);
        assert_eq!(k.to_string(), "2021-12-31T23");
    }

    #[test]
    fn tz_offset_bounds() {
        assert!(TzOffset::minutes(840).is_ok());
        assert!(TzOffset::minutes(-840).is_ok());
        assert!(TzOffset::minutes(841).is_err());
    }

    #[test]
    fn moment_key_rejects_bad_text() {
        for s in ["2022-02-30T10", "2022-03-28T24", "2022-3-28T17", "2022-03-28 17", "abcd-ef-ghTij", ""] {
            assert!(s.parse::<MomentKey>().is_err(), "{s}");
        }
    }

    #[test]
    fn scrobble_identity() {
        let a = Scrobble::new(10, "Kelly Lee  Owens", "Jeanette", Some("")).unwrap();
        let b = Scrobble::new(99, " kelly lee owens", "JEANETTE ", None).unwrap();
        assert_eq!(a.track_key, "kelly lee owens — jeanette");
        assert_eq!(a.track_key, b.track_key);
        assert_eq!(a.mbid, None);
        assert!(Scrobble::new(0, "a", "b", None).is_err());
        assert!(Scrobble::new(1, "", "b", None).is_err());
        assert!(Scrobble::new(1, "a", "  ", None).is_err());
    }

    #[test]
    fn tag_assignment_normalizes() {
        let t = TagAssignment::new("  Seen Live ", 100, TagSource::Track).unwrap();
        assert_eq!(t.tag, "seen live");
        assert!(TagAssignment::new("x", 101, TagSource::Track).is_err());
        assert!(TagAssignment::new("x", -1, TagSource::Track).is_err());
        assert!(TagAssignment::new(" ", 5, TagSource::Track).is_err());
    }

    #[test]
    fn vocabulary_rejects_duplicates() {
        assert!(TagVocabulary::new(vec!["a".into(), "b".into(), "a".into()]).is_err());
        let v = TagVocabulary::new(vec!["rock".into(), "pop".into()]).unwrap();
        assert_eq!(v.position("pop"), Some(1));
        assert_eq!(v.position("jazz"), None);
    }

    const VALID: [f64; 12] = [0.1, 0.95, 200_000.0, 0.5, 0.0, 7.0, 0.1, -6.5, 1.0, 0.05, 120.0, 0.4];

    #[test]
    fn audio_features_valid_and_json() {
        let f = AudioFeatures::from_values(VALID).unwrap();
        assert_eq!(f.danceability, 0.95);
        assert_eq!(f.get(Feature::Key), 7.0);
        let json = serde_json::to_string(&f).unwrap();
        let back: AudioFeatures = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);
        let bad = json.replace("\"key\":7", "\"key\":-1");
        assert!(serde_json::from_str::<AudioFeatures>(&bad).is_err());
    }

    fn out_of_range(feature: Feature) -> BoxedStrategy<f64> {
        match feature {
            Feature::Loudness => prop_oneof![(-1e6..-60.0001f64), (1e-4..1e6f64)].boxed(),
            Feature::Tempo | Feature::DurationMs => (-1e6..=0.0f64).boxed(),
            Feature::Key => prop_oneof![(-1e3..-0.5f64), (11.5..1e3f64)].boxed(),
            Feature::Mode => prop_oneof![(-1e3..-0.1f64), (0.1..0.9f64), (1.1..1e3f64)].boxed(),
            _ => prop_oneof![(-1e6..-1e-9f64), (1.0001..1e6f64)].boxed(),
        }
    }

    proptest! {
        #[test]
        fn moment_key_text_round_trips(y in 0i32..=9999, mo in 1u32..=12, d in 1u32..=31, h in 0u32..=23) {
            if let Ok(k) = MomentKey::new(y, mo, d, h) {
                let text = k.to_string();
                prop_assert_eq!(text.len(), 13);
                prop_assert_eq!(text.parse::<MomentKey>().unwrap(), k);
            }
        }

        #[test]
        fn instants_within_an_hour_share_a_key(
            hour_start in 1i64..70_000_000, offset in 0i64..3600, tz in -840i32..=840
        ) {
            let base = hour_start * 3600;
            let tz = TzOffset::minutes(tz).unwrap();
            // whole-hour offsets keep hour boundaries aligned
            let tz = TzOffset::minutes(tz.as_minutes() / 60 * 60).unwrap();
            prop_assert_eq!(moment_key_of(base, tz), moment_key_of(base + offset, tz));
        }

        #[test]
        fn audio_features_reject_out_of_range(
            (idx, bad) in (0usize..12).prop_flat_map(|i| (Just(i), out_of_range(Feature::ALL[i])))
        ) {
            let mut values = VALID;
            values[idx] = bad;
            prop_assert!(AudioFeatures::from_values(values).is_err(), "{} = {} accepted", Feature::ALL[idx], bad);
        }
    }
}
